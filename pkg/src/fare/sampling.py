"""Label acquisition: perturbed ensembles, disagreement and group-balanced allocations."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import LabeledSet, Pool, PoolError
from .efo import DegenerateConstraint, EGConfig, RandomizedClassifier, efo_solve, unconstrained_fit
from .fairness import FairnessSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AllocSolverConfig:
    iters: int = 1000
    step: float = 0.5


@dataclass(frozen=True)
class Allocation:
    """Probability vector over a subset of the current pool ids."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs differ in length")
        if len(self.probs) and (np.any(self.probs <= 0) or abs(self.probs.sum() - 1.0) > 1e-9):
            raise ValueError("allocation must be a positive probability vector")

    def dense(self, pool: Pool) -> np.ndarray:
        """Probabilities aligned with ``pool.active_ids()``."""
        ids = pool.active_ids()
        out = np.zeros(len(ids))
        pos = {int(i): r for r, i in enumerate(ids)}
        try:
            out[[pos[int(i)] for i in self.support]] = self.probs
        except KeyError as exc:
            raise PoolError(f"allocation refers to id {exc.args[0]} not in the pool") from None
        return out

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(p) for i, p in zip(self.support, self.probs)}


def _uniform(ids: np.ndarray) -> Allocation:
    return Allocation(np.asarray(ids), np.full(len(ids), 1.0 / len(ids)))


# ---------------------------------------------------------------------------
# randomized exploration
# ---------------------------------------------------------------------------


def perturb_labels(D: LabeledSet, sigma: float, rng: np.random.Generator) -> LabeledSet:
    """Flip each label independently with probability ``sigma``."""
    if not 0.0 <= sigma <= 1.0:
        raise ValueError("sigma must lie in [0, 1]")
    flips = rng.random(len(D)) < sigma
    return D.with_labels(np.where(flips, 1 - D.y, D.y))


def fit_perturbed_ensemble(
    D: LabeledSet,
    k: int,
    sigma: float,
    spec: FairnessSpec,
    alpha_eff: float,
    rngs,
    eg: EGConfig = EGConfig(),
) -> list[RandomizedClassifier]:
    """Fit ``k`` fair classifiers, each on its own label-flipped copy of ``D``.

    ``rngs`` is a sequence of ``k`` generators (one per member). A member whose
    perturbed data leaves a constraint cell empty falls back to an unconstrained
    fit.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    rngs = list(rngs)
    if len(rngs) != k:
        raise ValueError("need one generator per ensemble member")
    members, fallbacks = [], []
    for i, rng in enumerate(rngs):
        Dp = perturb_labels(D, sigma, rng)
        try:
            members.append(efo_solve(Dp, spec, alpha_eff, eg))
        except DegenerateConstraint as exc:
            fallbacks.append(f"{i} ({exc})")
            members.append(unconstrained_fit(Dp, eg))
    if fallbacks:
        logger.info("unconstrained fallback for ensemble members: %s", "; ".join(fallbacks))
    return members


# ---------------------------------------------------------------------------
# allocations
# ---------------------------------------------------------------------------


def disagreement_masks(preds: np.ndarray) -> np.ndarray:
    """Boolean matrix with one row per pair ``i < j`` marking ``h_i(x) != h_j(x)``."""
    k = len(preds)
    rows = [preds[i] != preds[j] for i in range(k) for j in range(i + 1, k)]
    return np.array(rows, dtype=bool).reshape(len(rows), preds.shape[1])


def diff_objective(lam: np.ndarray, masks: np.ndarray) -> float:
    """``max_pairs sum_{x in D_ij} 1 / lam_x`` (``inf`` if a disagreement point has no mass)."""
    masks = np.asarray(masks, dtype=bool)
    with np.errstate(divide="ignore"):
        inv = np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), np.inf)
    vals = [inv[m].sum() if m.any() else 0.0 for m in masks]
    return float(max(vals)) if vals else 0.0


def solve_diff_allocation(masks: np.ndarray, cfg: AllocSolverConfig = AllocSolverConfig()) -> np.ndarray:
    """Minimize :func:`diff_objective` over the simplex on the union of the masks.

    Entropic mirror descent with step ``cfg.step / sqrt(t)`` on the sup-normalized
    subgradient, started from the uniform allocation on the union; the best
    iterate is returned. Entries outside the union are exactly zero.
    """
    masks = np.asarray(masks, dtype=bool)
    union = masks.any(axis=0)
    out = np.zeros(masks.shape[1])
    if not union.any():
        return out
    M = np.unique(masks[:, union][masks[:, union].any(axis=1)], axis=0).astype(float)
    m = M.shape[1]
    lam = np.full(m, 1.0 / m)
    best_lam, best_val = lam.copy(), float((M @ (1.0 / lam)).max())
    for t in range(1, cfg.iters + 1):
        vals = M @ (1.0 / lam)
        p = int(np.argmax(vals))
        if vals[p] < best_val:
            best_val, best_lam = float(vals[p]), lam.copy()
        g = -M[p] / lam**2
        g /= np.abs(g).max()
        lam = lam * np.exp(-(cfg.step / np.sqrt(t)) * g)
        lam /= lam.sum()
    final = float((M @ (1.0 / lam)).max())
    if final < best_val:
        best_lam = lam
    out[union] = best_lam
    return out


def ensemble_predictions(pool: Pool, ensemble) -> np.ndarray:
    Xp = pool.X[pool.active_rows()]
    return np.array([h.predict(Xp) for h in ensemble])


def lambda_diff(pool: Pool, ensemble, solver: AllocSolverConfig = AllocSolverConfig()) -> Allocation:
    """Allocation concentrating on the ensemble's pairwise disagreement regions.

    Falls back to uniform over the pool when all members agree everywhere.
    """
    if len(pool) == 0:
        raise PoolError("empty pool")
    if len(ensemble) < 2:
        raise ValueError("ensemble needs at least two members")
    ids = pool.active_ids()
    masks = disagreement_masks(ensemble_predictions(pool, ensemble))
    if not masks.any():
        logger.info("ensemble agrees on the whole pool; lambda_diff is uniform")
        return _uniform(ids)
    lam = solve_diff_allocation(masks, solver)
    keep = lam > 0
    return Allocation(ids[keep], lam[keep] / lam[keep].sum())


def lambda_fair(pool: Pool) -> Allocation:
    """Half the mass uniformly on each protected group present in the pool."""
    if len(pool) == 0:
        raise PoolError("empty pool")
    ids = pool.active_ids()
    a = pool.a[pool.active_rows()]
    counts = [int(np.sum(a == 0)), int(np.sum(a == 1))]
    if 0 in counts:
        logger.warning("group %d exhausted in the pool; lambda_fair is uniform on the other", counts.index(0))
        return _uniform(ids)
    probs = np.where(a == 0, 0.5 / counts[0], 0.5 / counts[1])
    return Allocation(ids, probs)


def mix_and_sample(
    pool: Pool,
    lam_diff: Allocation,
    lam_fair: Allocation | None,
    n: int,
    rng: np.random.Generator,
) -> list[tuple[int, float]]:
    """Draw ``n`` distinct pool ids from ``(lam_diff + lam_fair) / 2``.

    Sequential sampling without replacement, renormalizing after each draw, is
    realized with exponential keys: the ``n`` largest ``log(u_i) / p_i`` are the
    first ``n`` successive draws. Each id is returned with its mixture
    probability at the start of the batch. ``lam_fair=None`` samples from
    ``lam_diff`` alone. If fewer than ``n`` ids carry mass, the rest of the batch
    is drawn uniformly and recorded at probability ``1 / |pool|``.
    """
    m = len(pool)
    if n > m:
        raise PoolError(f"batch of {n} exceeds pool of {m}")
    ids = pool.active_ids()
    p = lam_diff.dense(pool)
    if lam_fair is not None:
        p = 0.5 * p + 0.5 * lam_fair.dense(pool)
    u = rng.random(m)
    with np.errstate(divide="ignore"):
        keys = np.where(p > 0, np.log(u) / np.where(p > 0, p, 1.0), -np.inf)
    order = np.argsort(-keys, kind="stable")
    positive = int(np.count_nonzero(p > 0))
    if positive >= n:
        chosen = order[:n]
        return [(int(ids[r]), float(p[r])) for r in chosen]
    logger.warning("only %d pool points carry mass for a batch of %d; topping up uniformly", positive, n)
    chosen = list(order[:positive])
    rest = np.setdiff1d(np.arange(m), chosen)
    extra = rng.choice(rest, size=n - positive, replace=False)
    out = [(int(ids[r]), float(p[r])) for r in chosen]
    out += [(int(ids[r]), 1.0 / m) for r in extra]
    return out
