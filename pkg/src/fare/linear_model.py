"""Weighted, unregularized binary logistic regression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    w: np.ndarray
    b: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
            raise ValueError("classifier parameters must be finite")

    def __eq__(self, other) -> bool:
        # exact parameter equality
        if not isinstance(other, LinearClassifier):
            return NotImplemented
        return self.b == other.b and np.array_equal(self.w, other.w)

    __hash__ = None

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.w + self.b

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        # threshold 1/2 on the probability is threshold 0 on the logit
        return (self.decision_function(X) >= 0.0).astype(np.int64)

    @property
    def theta(self) -> np.ndarray:
        return np.r_[self.w, self.b]

    @classmethod
    def zeros(cls, d: int) -> "LinearClassifier":
        return cls(np.zeros(d), 0.0)

    def to_dict(self) -> dict:
        return {"w": [float(v) for v in self.w], "b": float(self.b)}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearClassifier":
        return cls(np.asarray(d["w"], dtype=float), float(d["b"]))


def predict_proba(h: LinearClassifier, X: np.ndarray) -> np.ndarray:
    return h.predict_proba(X)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings.

    ``method="newton"`` takes damped Newton steps; ``"gd"`` takes steepest
    descent steps. Both use the same Armijo backtracking and stopping rule.
    """

    max_iters: int = 500
    step_size: float = 1.0
    grad_tolerance: float = 1e-6
    seed: int = 0
    method: str = "newton"
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    norm_cap: float = 1e4

    def __post_init__(self):
        if self.max_iters < 1 or self.step_size <= 0 or self.grad_tolerance <= 0:
            raise ValueError("invalid TrainConfig")
        if self.method not in ("newton", "gd"):
            raise ValueError(f"unknown method {self.method!r}")


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def logistic_loss_and_grad(theta, X, y, weights) -> tuple[float, np.ndarray]:
    """Weighted mean logistic loss and its gradient in ``theta = (w, b)``.

    The loss is ``sum_i weights_i * (log(1 + e^{z_i}) - y_i z_i) / sum_i weights_i``
    with ``z = X w + b``.
    """
    Xa = _augment(np.asarray(X, dtype=float))
    wsum = weights.sum()
    z = Xa @ theta
    loss = float(weights @ (_softplus(z) - y * z)) / wsum
    grad = Xa.T @ (weights * (expit(z) - y)) / wsum
    return loss, grad


def _check_inputs(X, y01, weights):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y01, dtype=float)
    wts = np.asarray(weights, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if len(y) != len(X) or len(wts) != len(X):
        raise ValueError("X, y and weights have mismatched lengths")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    if not np.all(np.isfinite(wts)) or np.any(wts < 0):
        raise ValueError("weights must be finite and non-negative")
    if not np.any(wts > 0):
        raise ValueError("all weights are zero")
    return X, y, wts


def _minimize(X, y, wts, cfg: TrainConfig, init: np.ndarray | None):
    # drop zero-weight rows so they cannot influence floating-point sums
    keep = wts > 0
    Xa = _augment(X[keep])
    y, wts = y[keep], wts[keep] / wts[keep].sum()
    dim = Xa.shape[1]
    theta = np.zeros(dim) if init is None else np.asarray(init, dtype=float).copy()

    def f(t):
        z = Xa @ t
        return float(wts @ (_softplus(z) - y * z)), z

    loss, z = f(theta)
    history = [loss]
    for _ in range(cfg.max_iters):
        p_hat = expit(z)
        g = Xa.T @ (wts * (p_hat - y))
        if np.linalg.norm(g) <= cfg.grad_tolerance:
            break
        if cfg.method == "newton":
            H = (Xa * (wts * p_hat * (1.0 - p_hat))[:, None]).T @ Xa
            try:
                L = np.linalg.cholesky(H)
                step = -np.linalg.solve(L.T, np.linalg.solve(L, g))
            except np.linalg.LinAlgError:
                step = -np.linalg.solve(H + 1e-10 * np.eye(dim), g)
            if not np.all(np.isfinite(step)) or g @ step >= 0:
                step = -g
        else:
            step = -g
        t = cfg.step_size
        slope = float(g @ step)
        for _ in range(60):
            cand = theta + t * step
            new_loss, new_z = f(cand)
            if new_loss <= loss + cfg.armijo_c * t * slope:
                break
            t *= cfg.backtrack
        else:
            break  # no decrease available at machine precision
        theta, loss, z = cand, new_loss, new_z
        history.append(loss)
        nrm = np.linalg.norm(theta)
        if nrm >= cfg.norm_cap:
            # separable data: the logistic loss has no finite minimizer
            theta = theta * (cfg.norm_cap / nrm)
            break
    return theta, history


def fit_weighted(X, y01, weights, cfg: TrainConfig = TrainConfig(), init=None) -> LinearClassifier:
    """Minimize the weighted logistic loss from a zero (or given) start."""
    X, y, wts = _check_inputs(X, y01, weights)
    theta, _ = _minimize(X, y, wts, cfg, init)
    return LinearClassifier(theta[:-1].copy(), float(theta[-1]))


def fit_weighted_history(X, y01, weights, cfg: TrainConfig = TrainConfig(), init=None):
    """Like :func:`fit_weighted` but also returns the per-iteration loss values."""
    X, y, wts = _check_inputs(X, y01, weights)
    theta, history = _minimize(X, y, wts, cfg, init)
    return LinearClassifier(theta[:-1].copy(), float(theta[-1])), history


def fit_cost_sensitive(X, c0, c1, cfg: TrainConfig = TrainConfig(), init=None) -> LinearClassifier:
    """Best response for per-example costs of predicting 0 (``c0``) and 1 (``c1``).

    Reduces to weighted logistic regression on pseudo-labels ``1{c0 > c1}`` with
    weights ``|c0 - c1|``. When every example is indifferent the zero classifier
    is returned.
    """
    X = np.asarray(X, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    c1 = np.asarray(c1, dtype=float)
    if not (np.all(np.isfinite(c0)) and np.all(np.isfinite(c1))):
        raise ValueError("costs must be finite")
    weights = np.abs(c0 - c1)
    if not np.any(weights > 0):
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite feature values")
        return LinearClassifier.zeros(X.shape[1])
    return fit_weighted(X, (c0 > c1).astype(float), weights, cfg, init)
