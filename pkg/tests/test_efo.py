import math

import numpy as np
import pytest

from fare.data import LabeledSet, generate_synthetic, standardize
from fare.efo import (
    ConstraintSet,
    DegenerateConstraint,
    EGConfig,
    RandomizedClassifier,
    constraint_matrix,
    efo_solve,
    lagrangian_costs,
    predict,
    unconstrained_fit,
)
from fare.fairness import FairnessSpec, ips_risk, rate_table, violation
from fare.linear_model import LinearClassifier, fit_weighted
from fare.rng import DATASET, substream

from conftest import random_labeled

TPRP = FairnessSpec("TPRP", 0.1)


def shifted_instance(rng, n):
    """Overlapping groups labeled by different coordinates, so the fairness constraint binds."""
    a = (rng.random(n) < 0.3).astype(int)
    X = rng.normal(size=(n, 2))
    y = np.where(a == 0, X[:, 0] > 0, X[:, 1] > 0).astype(int)
    flip = rng.random(n) < 0.05
    y = np.where(flip, 1 - y, y)
    return LabeledSet(np.arange(n), X, a, y, np.full(n, 1 / n), np.full(n, 1 / n))


def synthetic_labeled(seed=0):
    ds = standardize(generate_synthetic(substream(seed, DATASET)))
    return LabeledSet.from_dataset(ds)


def test_vacuous_constraint_matches_plain_fit(rng):
    for _ in range(20):
        D = random_labeled(rng, int(rng.integers(100, 1001)), d=3, nonuniform=True)
        rc = efo_solve(D, TPRP, 1.0)
        plain = fit_weighted(D.X, D.y, D.importance_weights)
        acc_efo = np.mean(rc.predict(D.X) == D.y)
        acc_plain = np.mean(plain.predict(D.X) == D.y)
        assert abs(acc_efo - acc_plain) <= 0.01
        assert abs(ips_risk(D, rc) - ips_risk(D, plain)) <= 0.01


def test_identical_groups_need_no_correction():
    # group 1 is an exact copy of group 0, so every classifier has zero violation
    rng = np.random.default_rng(5)
    x = rng.normal(size=(150, 1))
    y = (x[:, 0] + 0.5 * rng.normal(size=150) > 0).astype(int)
    X = np.vstack([x, x])
    D = LabeledSet(np.arange(300), X, np.r_[np.zeros(150, int), np.ones(150, int)], np.r_[y, y],
                   np.full(300, 1 / 300), np.full(300, 1 / 300))
    cfg = EGConfig()
    rc = efo_solve(D, TPRP, 0.05, cfg)
    assert rc.report.violation == 0.0
    start = cfg.B / (len(ConstraintSet.build("TPRP", 0.05)) + 1)
    assert all(v <= start for v in rc.report.multipliers.values())
    plain = fit_weighted(D.X, D.y, np.ones(300))
    assert np.array_equal(rc.predict(D.X), plain.predict(D.X))


def test_synthetic_training_fairness():
    D = synthetic_labeled()
    rc = efo_solve(D, TPRP, 0.1)
    tprp = violation(rate_table(D, rc, "ips"), "TPRP")
    assert tprp <= 0.1 + EGConfig().nu_gap


def test_binding_constraint_is_met(rng):
    D = shifted_instance(rng, 600)
    free = unconstrained_fit(D)
    free_v = violation(rate_table(D, free, "ips"), "TPRP")
    assert free_v > 0.15  # the constraint actually binds
    rc = efo_solve(D, TPRP, 0.05)
    assert rc.report.violation <= 0.05 + EGConfig().nu_gap


def test_report_is_self_consistent(rng):
    for _ in range(5):
        D = shifted_instance(rng, 300)
        w = rng.uniform(0.5, 2.0, size=len(D))
        D = LabeledSet(D.ids, D.X, D.a, D.y, D.nu, D.nu / w)
        for metric in ("TPRP", "EO"):
            rc = efo_solve(D, FairnessSpec(metric, 0.1), 0.08)
            assert rc.report.violation == violation(rate_table(D, rc, "ips"), metric)
            assert rc.report.risk == ips_risk(D, rc)
            assert rc.report.alpha_eff == 0.08
            assert set(rc.report.to_dict()) >= {"risk", "violation_by_constraint", "multipliers", "iterations", "gap"}


def test_monotone_in_tolerance(rng):
    D = shifted_instance(rng, 500)
    risks = [efo_solve(D, TPRP, a).report.risk for a in (1.0, 0.3, 0.2, 0.1, 0.05, 0.02)]
    for looser, tighter in zip(risks, risks[1:]):
        assert tighter >= looser - EGConfig().nu_gap


def test_deterministic(rng):
    D = shifted_instance(rng, 200)
    r1, r2 = efo_solve(D, TPRP, 0.05), efo_solve(D, TPRP, 0.05)
    assert r1 == r2 and np.array_equal(r1.mix, r2.mix)
    assert r1.report == r2.report


def test_degenerate_cell_names_the_cell():
    D = LabeledSet(np.arange(4), np.zeros((4, 1)), np.array([0, 0, 1, 1]), np.array([1, 0, 0, 0]),
                   np.ones(4), np.ones(4))
    with pytest.raises(DegenerateConstraint) as err:
        efo_solve(D, TPRP, 0.1)
    assert err.value.cell == (1, 1)
    assert "a=1, y=1" in str(err.value)


def test_input_validation(rng):
    D = random_labeled(rng, 20)
    with pytest.raises(ValueError):
        efo_solve(D, TPRP, 1.5)
    with pytest.raises(ValueError):
        efo_solve(LabeledSet.empty(2), TPRP, 0.1)
    with pytest.raises(ValueError):
        EGConfig(B=0)
    with pytest.raises(ValueError):
        EGConfig(T_eg=0)
    assert EGConfig().step_size(2) == pytest.approx(2 * math.log(3) / (10 * math.sqrt(50)))


def test_last_iterate_mode(rng):
    D = shifted_instance(rng, 200)
    rc = efo_solve(D, TPRP, 0.05, EGConfig(output="last"))
    assert len(rc.components) == 1


def test_unweighted_variant_ignores_importance_weights(rng):
    D = shifted_instance(rng, 200)
    skew = LabeledSet(D.ids, D.X, D.a, D.y, D.nu, D.nu * rng.uniform(0.2, 5.0, size=len(D)))
    cfg = EGConfig(ips=False)
    assert efo_solve(skew, TPRP, 0.05, cfg) == efo_solve(D, TPRP, 0.05, cfg)


# ---------------------------------------------------------------------------
# Lagrangian costs
# ---------------------------------------------------------------------------


def test_costs_without_multipliers_are_risk_costs(rng):
    D = random_labeled(rng, 30, nonuniform=True)
    c0, c1 = lagrangian_costs(D, np.zeros(2), TPRP)
    w = D.importance_weights
    assert np.array_equal(c0, w * (D.y == 1) / 30)
    assert np.array_equal(c1, w * (D.y == 0) / 30)


def test_tprp_multipliers_only_touch_positive_rows(rng):
    D = random_labeled(rng, 40)
    base0, base1 = lagrangian_costs(D, np.zeros(2), TPRP)
    c0, c1 = lagrangian_costs(D, np.array([10.0, 0.0]), TPRP)
    assert np.array_equal(c0, base0)
    changed = c1 != base1
    assert np.all(D.y[changed] == 1) and changed.any()


def test_lagrangian_derivative_is_constraint_slack(rng):
    # d/d(lambda_c) of sum_i [pred c1 + (1 - pred) c0] - alpha sum(lambda) is the signed slack
    for metric in ("TPRP", "EO"):
        spec = FairnessSpec(metric, 0.1)
        D = random_labeled(rng, 50, nonuniform=True)
        pred = rng.integers(0, 2, size=50)
        alpha = 0.07
        cons = ConstraintSet.build(metric, alpha)
        lam = rng.uniform(0, 1, size=len(cons))

        def lagrangian(l):
            c0, c1 = lagrangian_costs(D, l, spec)
            return float(pred @ c1 + (1 - pred) @ c0) - alpha * l.sum()

        table = rate_table(D, pred, "ips")
        slack = cons.signed_values(table)
        for c in range(len(cons)):
            e = np.zeros(len(cons))
            e[c] = 1e-4
            fd = (lagrangian(lam + e) - lagrangian(lam - e)) / 2e-4
            assert fd == pytest.approx(slack[c], abs=1e-8)


def test_constraint_matrix_rows(rng):
    D = random_labeled(rng, 30)
    A = constraint_matrix(D, ConstraintSet.build("EO", 0.0))
    assert A.shape == (4, 30)
    assert np.allclose(A[0], -A[1]) and np.allclose(A[2], -A[3])
    assert np.allclose(A @ np.ones(30), 0.0)  # predicting 1 everywhere equalizes every rate


# ---------------------------------------------------------------------------
# randomized classifier
# ---------------------------------------------------------------------------


def _h(w, b):
    return LinearClassifier(np.array([float(w)]), float(b))


def test_single_component_mixture():
    h = _h(1.0, -0.3)
    X = np.linspace(-2, 2, 11)[:, None]
    assert np.array_equal(predict(RandomizedClassifier.single(h), X), h.predict(X))


def test_tie_goes_to_one():
    rc = RandomizedClassifier((_h(1.0, 0.0), _h(-1.0, 0.0)), np.array([0.5, 0.5]))
    assert rc.predict(np.array([[3.0], [-3.0]])).tolist() == [1, 1]


def test_permutation_invariance(rng):
    hs = tuple(_h(rng.normal(), rng.normal()) for _ in range(5))
    mix = rng.dirichlet(np.ones(5))
    X = rng.normal(size=(100, 1))
    p = rng.permutation(5)
    a = RandomizedClassifier(hs, mix).predict(X)
    b = RandomizedClassifier(tuple(hs[i] for i in p), mix[p]).predict(X)
    assert np.array_equal(a, b)


def test_mixture_validation():
    with pytest.raises(ValueError):
        RandomizedClassifier((_h(1, 0),), np.array([0.9]))
    with pytest.raises(ValueError):
        RandomizedClassifier((_h(1, 0), _h(2, 0)), np.array([1.5, -0.5]))
