import math

import numpy as np
import pytest

from fare.concentration import (
    CellBoundInputs,
    alpha_correction,
    cell_bound,
    cell_bounds,
    coverage_experiment,
    empirical_variance_indicators,
    simple_bound,
    violation_bound,
)


class _Data:
    def __init__(self, a, y):
        self.a, self.y = np.asarray(a), np.asarray(y)
        self.X = np.zeros((len(self.a), 1))


def pairwise_variance(bits):
    n = len(bits)
    s = sum((bits[i] - bits[j]) ** 2 for i in range(n) for j in range(i + 1, n))
    return s / (n * (n - 1))


def test_variance_examples(rng):
    assert empirical_variance_indicators([1, 1, 1]) == 0.0
    assert empirical_variance_indicators([1, 0]) == 0.5
    for _ in range(50):
        bits = rng.integers(0, 2, size=10)
        v = empirical_variance_indicators(bits)
        assert abs(v - pairwise_variance(bits.tolist())) <= 1e-12
        assert abs(v - np.var(bits, ddof=1)) <= 1e-12
    with pytest.raises(ValueError):
        empirical_variance_indicators([1])


def test_cell_bound_hand_substitution():
    lg = math.log(40)
    c = cell_bound(CellBoundInputs(n=100, delta=0.05, p_hat=0.0, v1=0.0, v2=0.0, den_hat=0.5))
    expected = (lg / 100) * (lg / 100) / 0.25 + (lg / 100) / 0.5
    assert c == pytest.approx(expected, rel=1e-15)


def test_cell_bound_general_substitution():
    n, delta, p, v1, v2, den = 50, 0.1, 0.2, 0.16, 0.24, 0.4
    lg = math.log(2 / delta)
    e1 = math.sqrt(2 * v1 * lg / n) + lg / n
    e2 = math.sqrt(2 * v2 * lg / n) + lg / n
    expected = (p + e1) * e2 / den**2 + e1 / den
    assert cell_bound(CellBoundInputs(n, delta, p, v1, v2, den)) == pytest.approx(expected, rel=1e-15)


def test_cell_bound_diverges_and_decreases():
    assert cell_bound(CellBoundInputs(100, 0.05, 0.0, 0.0, 0.0, 0.0)) == math.inf
    dens = [0.5, 0.1, 0.01, 0.001]
    vals = [cell_bound(CellBoundInputs(100, 0.05, 0.0, 0.1, 0.1, d)) for d in dens]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    by_n = [cell_bound(CellBoundInputs(n, 0.05, 0.1, 0.1, 0.2, 0.3)) for n in (10, 100, 1000, 10000)]
    assert all(b <= a for a, b in zip(by_n, by_n[1:]))
    with pytest.raises(ValueError):
        CellBoundInputs(10, 1.0, 0.0, 0.0, 0.0, 0.5)


def test_violation_bound_structure(rng):
    a = rng.integers(0, 2, size=200)
    y = rng.integers(0, 2, size=200)
    pred = rng.integers(0, 2, size=200)
    d = _Data(a, y)
    C = cell_bounds(d, pred, 0.05)
    assert violation_bound(d, pred, "TPRP") == C[0, 1] + C[1, 1]
    assert violation_bound(d, pred, "FPRP") == C[0, 0] + C[1, 0]
    assert violation_bound(d, pred, "EO") == C.sum()


def test_balanced_zero_variance_closed_form():
    # every (a, y) cell has 25 rows and the classifier predicts y exactly
    a = np.repeat([0, 0, 1, 1], 25)
    y = np.repeat([0, 1, 0, 1], 25)
    n, lg = 100, math.log(2 / 0.05)
    v = 25 * 75 / (100 * 99)  # both indicator sequences have 25 ones
    e = math.sqrt(2 * v * lg / n) + lg / n
    # for k=1: p = 0.25; for k=0 the joint indicator is all zeros
    c1 = (0.25 + e) * e / 0.0625 + e / 0.25
    e0 = lg / n
    c0 = (0.0 + e0) * e / 0.0625 + e0 / 0.25
    d = _Data(a, y)
    assert violation_bound(d, y, "TPRP") == pytest.approx(2 * c1, rel=1e-14)
    assert violation_bound(d, y, "EO") == pytest.approx(2 * c1 + 2 * c0, rel=1e-14)


def test_empty_cell_gives_infinite_bound():
    d = _Data([1, 1, 0, 0], [1, 0, 0, 0])
    assert violation_bound(d, [1, 1, 1, 1], "TPRP") == math.inf
    assert simple_bound(d, "TPRP") == math.inf


def test_simple_bound_dominates(rng):
    for _ in range(100):
        n = int(rng.integers(20, 400))
        a = rng.integers(0, 2, size=n)
        y = rng.integers(0, 2, size=n)
        pred = rng.integers(0, 2, size=n)
        delta = float(rng.uniform(0.01, 0.5))
        d = _Data(a, y)
        for m in ("TPRP", "FPRP", "EO"):
            assert simple_bound(d, m, delta) >= violation_bound(d, pred, m, delta)


def test_simple_bound_prefactors():
    # the TPRP form maxes over the y=1 cells only; EO doubles the prefactor and maxes over all
    a = np.r_[np.zeros(60, int), np.ones(40, int)]
    y = np.r_[np.ones(30, int), np.zeros(30, int), np.ones(30, int), np.zeros(10, int)]
    d = _Data(a, y)
    n, lg = 100, math.log(2 / 0.05)
    s, l = math.sqrt(2 * lg / n), lg / n

    def term(den):
        return 2 * (s + l) / den + ((s + 2 * l) / den) ** 2

    assert simple_bound(d, "TPRP") == pytest.approx(2 * term(0.3), rel=1e-14)
    assert simple_bound(d, "EO") == pytest.approx(4 * term(0.1), rel=1e-14)


def test_simple_bound_leading_term_scales_as_root_n():
    base_a = np.array([0, 0, 1, 1] * 5)
    base_y = np.array([0, 1, 0, 1] * 5)
    reps = 50_000
    b1 = simple_bound(_Data(np.tile(base_a, reps), np.tile(base_y, reps)), "TPRP")
    b2 = simple_bound(_Data(np.tile(base_a, 2 * reps), np.tile(base_y, 2 * reps)), "TPRP")
    assert b1 / b2 == pytest.approx(math.sqrt(2), rel=1e-2)


def test_alpha_correction_examples():
    assert alpha_correction(0.1, 200) == pytest.approx(0.1 - 1 / math.sqrt(200))
    assert alpha_correction(0.1, 200) == pytest.approx(0.02929, abs=1e-5)
    assert alpha_correction(0.1, 50) == 0.0
    assert alpha_correction(1.0, 4) == 0.5
    with pytest.raises(ValueError):
        alpha_correction(0.1, 0)
    for labels in range(1, 500, 7):
        assert 0.0 <= alpha_correction(0.3, labels) <= 0.3


def test_coverage_experiment_small():
    rep = coverage_experiment(n=300, trials=100, delta=0.1, seed=1, reference_size=100_000)
    assert rep["coverage"] >= 0.9
    assert rep["simple_dominates_fraction"] == 1.0
    assert 0.0 <= rep["population_violation"] <= 1.0
    assert rep == coverage_experiment(n=300, trials=100, delta=0.1, seed=1, reference_size=100_000)
