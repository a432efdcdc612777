"""Risk and group-fairness estimators: plug-in and importance-weighted.

All masses are accumulated with :func:`math.fsum`, so a table computed from a
duplicated example is bit-identical to one computed from a single example with
doubled weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

METRICS = ("TPRP", "FPRP", "EO")

# (a, y) cells each metric conditions on
_CELLS = {
    "TPRP": ((0, 1), (1, 1)),
    "FPRP": ((0, 0), (1, 0)),
    "EO": ((0, 0), (0, 1), (1, 0), (1, 1)),
}


def normalize_metric(metric: str) -> str:
    m = metric.upper()
    if m in ("TP", "EOPP"):
        m = "TPRP"
    if m not in METRICS:
        raise ValueError(f"unknown fairness metric {metric!r}; expected one of {METRICS}")
    return m


def metric_cells(metric: str) -> tuple[tuple[int, int], ...]:
    return _CELLS[normalize_metric(metric)]


@dataclass(frozen=True)
class FairnessSpec:
    metric: str = "TPRP"
    alpha: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "metric", normalize_metric(self.metric))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.metric == "FPRP":
            raise ValueError("fairness constraints support TPRP and EO only")


@dataclass(frozen=True)
class GroupRateTable:
    """Weighted masses indexed ``[a, y]``.

    ``numerator[j, k]`` is the mass of ``{h = 1, y = k, a = j}`` and
    ``denominator[j, k]`` the mass of ``{y = k, a = j}``.
    """

    numerator: np.ndarray
    denominator: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.denominator <= 0.0

    def rate(self, j: int, k: int) -> float | None:
        if self.degenerate[j, k]:
            return None
        return float(self.numerator[j, k] / self.denominator[j, k])

    def tpr(self, j: int) -> float | None:
        return self.rate(j, 1)

    def fpr(self, j: int) -> float | None:
        return self.rate(j, 0)

    def undefined_reason(self, metric: str) -> str | None:
        empty = [c for c in metric_cells(metric) if self.degenerate[c]]
        if not empty:
            return None
        return "empty cells " + ", ".join(f"(a={j}, y={k})" for j, k in empty)


def _predictions(h, X) -> np.ndarray:
    if hasattr(h, "predict"):
        return np.asarray(h.predict(X), dtype=np.int64)
    return np.asarray(h, dtype=np.int64)


def _weights(data, weighting: str) -> np.ndarray:
    if weighting == "plugin":
        return np.ones(len(data.y))
    if weighting == "ips":
        w = np.asarray(data.importance_weights, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("importance weights must be finite and non-negative")
        return w
    raise ValueError(f"unknown weighting {weighting!r}")


def masses(a: np.ndarray, y: np.ndarray, pred: np.ndarray, weights: np.ndarray) -> GroupRateTable:
    num = np.zeros((2, 2))
    den = np.zeros((2, 2))
    for j in (0, 1):
        for k in (0, 1):
            cell = (a == j) & (y == k)
            den[j, k] = math.fsum(weights[cell].tolist())
            num[j, k] = math.fsum(weights[cell & (pred == 1)].tolist())
    return GroupRateTable(num, den)


def rate_table(data, h, weighting: str = "plugin") -> GroupRateTable:
    """Group-conditional prediction masses of ``h`` on ``data``.

    ``data`` needs ``X``, ``a`` and ``y`` (and ``importance_weights`` for
    ``weighting="ips"``, where each example carries weight ``nu_i / nu_tr_i``).
    ``h`` is a classifier with ``predict`` or a precomputed 0/1 prediction vector.
    """
    pred = _predictions(h, data.X)
    return masses(np.asarray(data.a), np.asarray(data.y), pred, _weights(data, weighting))


def violation(table: GroupRateTable, metric: str) -> float | None:
    """TPRP, FPRP or EO violation; ``None`` when a required cell is empty."""
    metric = normalize_metric(metric)
    if table.undefined_reason(metric) is not None:
        return None
    tp = abs(table.rate(0, 1) - table.rate(1, 1)) if metric in ("TPRP", "EO") else 0.0
    fp = abs(table.rate(0, 0) - table.rate(1, 0)) if metric in ("FPRP", "EO") else 0.0
    return max(tp, fp)


def ips_risk(data, h) -> float:
    """Importance-weighted 0-1 risk ``(1/n) sum_i (nu_i / nu_tr_i) 1{h(x_i) != y_i}``."""
    pred = _predictions(h, data.X)
    w = _weights(data, "ips")
    return math.fsum(w[pred != np.asarray(data.y)].tolist()) / len(w)


def empirical_risk(data, h) -> float:
    pred = _predictions(h, data.X)
    return float(np.mean(pred != np.asarray(data.y)))


@dataclass(frozen=True)
class TestMetrics:
    accuracy: float
    tprp: float | None
    eo: float | None


def test_metrics(test, h) -> TestMetrics:
    """Plug-in accuracy, TPRP and EO of ``h`` on a held-out set."""
    pred = _predictions(h, test.X)
    table = masses(np.asarray(test.a), np.asarray(test.y), pred, np.ones(len(pred)))
    acc = float(np.mean(pred == np.asarray(test.y)))
    return TestMetrics(acc, violation(table, "TPRP"), violation(table, "EO"))


test_metrics.__test__ = False  # not a pytest test despite the name
TestMetrics.__test__ = False
