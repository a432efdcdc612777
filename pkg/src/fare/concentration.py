"""Empirical-Bernstein bounds on the estimation error of group-fairness violations.

For a fixed classifier and an i.i.d. sample of size ``n`` the plug-in TPRP
(FPRP, EO) estimate deviates from its population value by at most the sum of
per-cell confidence terms ``C[j, k]`` over the cells the metric conditions on.
The cruder :func:`simple_bound` replaces the empirical variances and joint
frequencies by their worst cases and only depends on the cell frequencies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fairness import _predictions, metric_cells, normalize_metric, rate_table, violation


def empirical_variance_indicators(bits) -> float:
    """Unbiased sample variance of a 0/1 sequence.

    Equals ``1/(n(n-1)) * sum_{l < l'} (b_l - b_l')**2``; the pair sum is
    ``m * (n - m)`` for ``m`` ones, which is evaluated exactly.
    """
    bits = np.asarray(bits)
    n = len(bits)
    if n < 2:
        raise ValueError("need at least two observations")
    m = int(np.count_nonzero(bits))
    return m * (n - m) / (n * (n - 1))


@dataclass(frozen=True)
class CellBoundInputs:
    n: int
    delta: float
    p_hat: float  # frequency of {h=1, y=k, a=j}
    v1: float  # variance of that indicator
    v2: float  # variance of the indicator {y=k, a=j}
    den_hat: float  # frequency of {y=k, a=j}

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be positive")


def _deviation(v: float, log_term: float, n: int) -> float:
    return math.sqrt(2.0 * v * log_term / n) + log_term / n


def cell_bound(c: CellBoundInputs) -> float:
    if c.den_hat <= 0.0:
        return math.inf
    lg = math.log(2.0 / c.delta)
    dev_num = _deviation(c.v1, lg, c.n)
    dev_den = _deviation(c.v2, lg, c.n)
    return (c.p_hat + dev_num) * dev_den / c.den_hat**2 + dev_num / c.den_hat


def cell_inputs(a, y, pred, j: int, k: int, delta: float) -> CellBoundInputs:
    a, y, pred = np.asarray(a), np.asarray(y), np.asarray(pred)
    n = len(y)
    joint = (pred == 1) & (y == k) & (a == j)
    cell = (y == k) & (a == j)
    return CellBoundInputs(
        n=n,
        delta=delta,
        p_hat=float(joint.mean()),
        v1=empirical_variance_indicators(joint),
        v2=empirical_variance_indicators(cell),
        den_hat=float(cell.mean()),
    )


def cell_bounds(data, h, delta: float) -> np.ndarray:
    """All four confidence terms, indexed ``[a, y]``."""
    pred = _predictions(h, data.X)
    out = np.empty((2, 2))
    for j in (0, 1):
        for k in (0, 1):
            out[j, k] = cell_bound(cell_inputs(data.a, data.y, pred, j, k, delta))
    return out


def violation_bound(data, h, metric: str, delta: float = 0.05) -> float:
    C = cell_bounds(data, h, delta)
    return float(sum(C[c] for c in metric_cells(metric)))


def simple_bound(data, metric: str, delta: float = 0.05) -> float:
    """Worst-case-variance form of the bound; depends only on cell frequencies."""
    metric = normalize_metric(metric)
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    a, y = np.asarray(data.a), np.asarray(data.y)
    n = len(y)
    lg = math.log(2.0 / delta)
    s, l = math.sqrt(2.0 * lg / n), lg / n

    def term(den: float) -> float:
        if den <= 0.0:
            return math.inf
        return 2.0 * (s + l) / den + ((s + 2.0 * l) / den) ** 2

    cells = metric_cells(metric)
    worst = max(term(float(np.mean((a == j) & (y == k)))) for j, k in cells)
    return (4.0 if metric == "EO" else 2.0) * worst


def alpha_correction(alpha: float, labels_so_far: int) -> float:
    """Conservative tolerance ``max(0, alpha - 1/sqrt(labels))``."""
    if labels_so_far < 1:
        raise ValueError("labels_so_far must be at least 1")
    return max(0.0, alpha - 1.0 / math.sqrt(labels_so_far))


# ---------------------------------------------------------------------------
# Monte-Carlo coverage check on the synthetic population
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Sample:
    X: np.ndarray
    a: np.ndarray
    y: np.ndarray


def coverage_experiment(
    n: int = 500,
    trials: int = 1000,
    delta: float = 0.1,
    seed: int = 0,
    reference_size: int = 1_000_000,
    metric: str = "TPRP",
    w=(0.0, 1.0),
    b: float = -10.0,
) -> dict:
    """Resample from a large synthetic reference population and count covered deviations.

    The fixed classifier ``1{w.x + b >= 0}`` acts on raw coordinates. The
    default splits the minority group's positives roughly in half so that its
    rate estimate is genuinely noisy.
    """
    from .data import generate_synthetic
    from .linear_model import LinearClassifier
    from .rng import DATASET, SAMPLE, substream

    n1 = round(reference_size / 101)
    pop = generate_synthetic(substream(seed, DATASET), n0=reference_size - n1, n1=n1)
    h = LinearClassifier(np.asarray(w, dtype=float), float(b))
    pred = h.predict(pop.X)
    true_v = violation(rate_table(pop, pred), metric)
    rng = substream(seed, SAMPLE)

    covered = degenerate = dominated = 0
    deviations, bounds = [], []
    for _ in range(trials):
        idx = rng.integers(0, len(pop), size=n)
        s = _Sample(pop.X[idx], pop.a[idx], pop.y[idx])
        p = pred[idx]
        est = violation(rate_table(s, p), metric)
        vb = violation_bound(s, p, metric, delta)
        sb = simple_bound(s, metric, delta)
        dominated += sb >= vb
        if est is None:
            degenerate += 1
            covered += math.isinf(vb)
            continue
        dev = abs(true_v - est)
        deviations.append(dev)
        bounds.append(vb)
        covered += dev <= vb
    return {
        "n": n,
        "trials": trials,
        "delta": delta,
        "metric": normalize_metric(metric),
        "seed": seed,
        "reference_size": reference_size,
        "population_violation": true_v,
        "coverage": covered / trials,
        "degenerate_resamples": degenerate,
        "simple_dominates_fraction": dominated / trials,
        "mean_abs_deviation": float(np.mean(deviations)) if deviations else None,
        "median_finite_bound": float(np.median(bounds)) if bounds else None,
    }
