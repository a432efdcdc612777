"""Empirical fair oracle: constrained risk minimization by exponentiated gradient.

The problem ``min R(h) s.t. violation(h) <= alpha_eff`` is linearized into
signed rate-difference constraints and solved as a saddle point of the
Lagrangian. The multiplier player runs exponentiated gradient on the
``B``-scaled simplex (one coordinate per constraint plus a slack), the learner
best-responds with a cost-sensitive logistic fit, and the averaged play is
returned as a uniform mixture over the best responses. When the unconstrained
best response is already feasible it is returned directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledSet
from .fairness import FairnessSpec, ips_risk, metric_cells, rate_table, violation
from .linear_model import LinearClassifier, TrainConfig, fit_cost_sensitive, fit_weighted

TIE_EPS = 1e-12


class DegenerateConstraint(ValueError):
    """A constraint conditions on an (a, y) cell with no mass in the data."""

    def __init__(self, cell: tuple[int, int]):
        self.cell = cell
        super().__init__(f"constraint cell (a={cell[0]}, y={cell[1]}) is empty")


@dataclass(frozen=True, eq=False)
class RandomizedClassifier:
    components: tuple[LinearClassifier, ...]
    mix: np.ndarray
    report: "SolveReport | None" = None

    def __eq__(self, other) -> bool:
        # same components with the same weights; the report is not compared
        if not isinstance(other, RandomizedClassifier):
            return NotImplemented
        return self.components == other.components and np.array_equal(self.mix, other.mix)

    __hash__ = None

    def __post_init__(self):
        mix = np.asarray(self.mix, dtype=float)
        if len(mix) != len(self.components) or len(mix) == 0:
            raise ValueError("mixture weights must match the components")
        if np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be a probability vector")
        object.__setattr__(self, "mix", mix)

    def vote(self, X: np.ndarray) -> np.ndarray:
        """Mixture probability of predicting 1."""
        out = np.zeros(len(X))
        for m, h in zip(self.mix, self.components):
            out += m * h.predict(X)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        # majority under the mixture, ties go to 1
        return (self.vote(X) >= 0.5 - TIE_EPS).astype(np.int64)

    @classmethod
    def single(cls, h: LinearClassifier, report=None) -> "RandomizedClassifier":
        return cls((h,), np.ones(1), report)

    def to_dict(self) -> dict:
        return {"components": [h.to_dict() for h in self.components], "mix": self.mix.tolist()}


def predict(rc: RandomizedClassifier, X: np.ndarray) -> np.ndarray:
    return rc.predict(X)


@dataclass(frozen=True)
class EGConfig:
    B: float = 10.0
    T_eg: int = 50
    eta: float | None = None  # None: 2 log(K + 1) / (B sqrt(T_eg))
    nu_gap: float = 0.01
    min_iters: int = 5
    ips: bool = True
    output: str = "mixture"  # or "last"
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        if self.B <= 0 or self.T_eg < 1 or self.nu_gap <= 0 or (self.eta is not None and self.eta <= 0):
            raise ValueError("invalid EGConfig")
        if self.output not in ("mixture", "last"):
            raise ValueError(f"unknown output mode {self.output!r}")

    def step_size(self, n_constraints: int) -> float:
        if self.eta is not None:
            return self.eta
        return 2.0 * math.log(n_constraints + 1) / (self.B * math.sqrt(self.T_eg))


@dataclass(frozen=True)
class SolveReport:
    risk: float
    violation: float | None
    violation_by_constraint: dict[str, float]
    multipliers: dict[str, float]
    iterations: int
    gap: float
    alpha_eff: float

    def to_dict(self) -> dict:
        return {
            "risk": self.risk,
            "violation": self.violation,
            "violation_by_constraint": self.violation_by_constraint,
            "multipliers": self.multipliers,
            "iterations": self.iterations,
            "gap": self.gap,
            "alpha_eff": self.alpha_eff,
        }


@dataclass(frozen=True)
class ConstraintSet:
    """Signed constraints ``sign * (rate(0, k) - rate(1, k)) - alpha_eff <= 0``."""

    metric: str
    alpha_eff: float
    labels: tuple[int, ...]  # y value of each constraint
    signs: tuple[int, ...]

    @classmethod
    def build(cls, metric: str, alpha_eff: float) -> "ConstraintSet":
        ks = sorted({k for _, k in metric_cells(metric)}, reverse=True)
        labels, signs = [], []
        for k in ks:
            labels += [k, k]
            signs += [1, -1]
        return cls(metric, alpha_eff, tuple(labels), tuple(signs))

    @property
    def names(self) -> list[str]:
        kind = {1: "tpr", 0: "fpr"}
        return [f"{kind[k]}0-{kind[k]}1" if s > 0 else f"{kind[k]}1-{kind[k]}0" for k, s in zip(self.labels, self.signs)]

    def __len__(self) -> int:
        return len(self.labels)

    def signed_values(self, table) -> np.ndarray:
        return np.array(
            [s * (table.rate(0, k) - table.rate(1, k)) - self.alpha_eff for k, s in zip(self.labels, self.signs)]
        )


def _weights(D: LabeledSet, ips: bool) -> np.ndarray:
    return D.importance_weights if ips else np.ones(len(D))


def constraint_matrix(D: LabeledSet, cons: ConstraintSet, ips: bool = True) -> np.ndarray:
    """Rows ``A_c`` such that the signed constraint value is ``A_c @ pred - alpha_eff``.

    Denominators are the (weighted) cell masses of the data; they do not depend
    on the classifier, so every constraint is linear in the prediction vector.
    """
    w = _weights(D, ips)
    A = np.zeros((len(cons), len(D)))
    for c, (k, s) in enumerate(zip(cons.labels, cons.signs)):
        for j, sign_j in ((0, 1.0), (1, -1.0)):
            cell = (D.a == j) & (D.y == k)
            den = math.fsum(w[cell].tolist())
            if den <= 0.0:
                raise DegenerateConstraint((j, k))
            A[c, cell] = s * sign_j * w[cell] / den
    return A


def lagrangian_costs(D: LabeledSet, multipliers, spec: FairnessSpec, ips: bool = True, A=None):
    """Per-example costs of predicting 0 and 1 under the Lagrangian.

    ``c0_i = w_i 1{y_i = 1} / n`` and
    ``c1_i = w_i 1{y_i = 0} / n + sum_c lambda_c A_ci`` where ``w_i = nu_i / nu_tr_i``
    and ``A_ci = sign_c * w_i * (1{i in (0, k_c)} - 1{i in (1, k_c)}) / mass(cell)``.
    Summing ``pred * c1 + (1 - pred) * c0`` gives the Lagrangian up to the
    constant ``-alpha_eff * sum(lambda)``.
    """
    if A is None:
        A = constraint_matrix(D, ConstraintSet.build(spec.metric, 0.0), ips)
    w = _weights(D, ips)
    n = len(D)
    lam = np.asarray(multipliers, dtype=float)
    c0 = w * (D.y == 1) / n
    c1 = w * (D.y == 0) / n + lam @ A
    return c0, c1


def _stack(components: list[LinearClassifier]):
    """Uniform mixture with identical components merged (first-occurrence order)."""
    merged: list[LinearClassifier] = []
    counts: list[int] = []
    for h in components:
        for i, g in enumerate(merged):
            if g == h:
                counts[i] += 1
                break
        else:
            merged.append(h)
            counts.append(1)
    return tuple(merged), np.asarray(counts, dtype=float) / len(components)


def efo_solve(
    D: LabeledSet,
    spec: FairnessSpec,
    alpha_eff: float,
    cfg: EGConfig = EGConfig(),
) -> RandomizedClassifier:
    """Fair empirical risk minimization on (importance-weighted) labeled data.

    Raises
    ------
    DegenerateConstraint
        If a cell the metric conditions on has no mass in ``D``.
    """
    if not 0.0 <= alpha_eff <= 1.0:
        raise ValueError(f"alpha_eff must be in [0, 1], got {alpha_eff}")
    if len(D) == 0:
        raise ValueError("cannot solve on an empty labeled set")
    D = D.sorted_by_id()
    cons = ConstraintSet.build(spec.metric, alpha_eff)
    A = constraint_matrix(D, cons, cfg.ips)
    K = len(cons)
    w = _weights(D, cfg.ips)
    n = len(D)
    X = D.X
    eta = cfg.step_size(K)

    def risk_of(pred):
        return float(w @ (pred != D.y)) / n

    def best_response(lam, init):
        c0, c1 = lagrangian_costs(D, lam, spec, cfg.ips, A)
        return fit_cost_sensitive(X, c0, c1, cfg.train, init)

    def lagrangian(risk, gam, lam):
        return risk + float(lam @ gam)

    # an unconstrained best response that is already feasible solves the problem
    h0 = best_response(np.zeros(K), None)
    g0 = A @ h0.predict(X) - alpha_eff
    if float(g0.max()) <= 0.0:
        return _finish(D, spec, cons, cfg, (h0,), np.ones(1), np.zeros(K), 0, 0.0)

    theta = np.zeros(K)
    hs: list[LinearClassifier] = []
    risks, gammas = [], []
    lam_sum = np.zeros(K)
    init = init_bar = h0.theta
    gap = math.inf
    t = 0
    for t in range(1, cfg.T_eg + 1):
        e = np.exp(theta)
        lam = cfg.B * e / (1.0 + e.sum())
        h = best_response(lam, init)
        init = h.theta
        pred = h.predict(X)
        hs.append(h)
        risks.append(risk_of(pred))
        gammas.append(A @ pred - alpha_eff)
        lam_sum += lam

        lam_bar = lam_sum / t
        q_risk = float(np.mean(risks))
        q_gamma = np.mean(gammas, axis=0)
        upper = q_risk + cfg.B * max(0.0, float(q_gamma.max()))
        h_bar = best_response(lam_bar, init_bar)
        init_bar = h_bar.theta
        p_bar = h_bar.predict(X)
        lower = lagrangian(risk_of(p_bar), A @ p_bar - alpha_eff, lam_bar)
        lower = min(lower, min(lagrangian(r, g, lam_bar) for r, g in zip(risks, gammas)))
        gap = max(0.0, upper - lower)
        if t >= cfg.min_iters and gap < cfg.nu_gap:
            break
        theta = theta + eta * gammas[-1]

    if cfg.output == "last":
        comps, mix = (hs[-1],), np.ones(1)
    else:
        comps, mix = _stack(hs)
    return _finish(D, spec, cons, cfg, comps, mix, lam_sum / t, t, gap)


def _finish(D, spec, cons, cfg, comps, mix, multipliers, iterations, gap) -> RandomizedClassifier:
    rc = RandomizedClassifier(comps, mix)
    pred = rc.predict(D.X)
    table = rate_table(D, pred, "ips" if cfg.ips else "plugin")
    report = SolveReport(
        risk=ips_risk(D, pred) if cfg.ips else float(np.mean(pred != D.y)),
        violation=violation(table, spec.metric),
        violation_by_constraint=dict(zip(cons.names, cons.signed_values(table).tolist())),
        multipliers=dict(zip(cons.names, np.asarray(multipliers, dtype=float).tolist())),
        iterations=iterations,
        gap=gap,
        alpha_eff=cons.alpha_eff,
    )
    return RandomizedClassifier(comps, mix, report)


def unconstrained_fit(D: LabeledSet, cfg: EGConfig = EGConfig()) -> RandomizedClassifier:
    """Plain (importance-weighted) logistic regression wrapped as a mixture."""
    D = D.sorted_by_id()
    h = fit_weighted(D.X, D.y, _weights(D, cfg.ips), cfg.train)
    return RandomizedClassifier.single(h)
