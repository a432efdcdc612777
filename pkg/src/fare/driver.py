"""The fair active learning loop and its in-scope comparison strategies.

``fare``          randomized-exploration ensemble, disagreement allocation mixed
                  half/half with the group-balanced allocation
``fare_no_fair``  the same without the group-balanced half
``passive``       uniform batches

Every strategy spends its first batch uniformly (from a stream shared across
strategies) and fits a fair snapshot classifier after every round with the
tolerance corrected for the labels collected so far.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rng as streams
from .concentration import alpha_correction
from .data import Dataset, LabeledSet, Pool
from .efo import DegenerateConstraint, EGConfig, RandomizedClassifier, efo_solve, unconstrained_fit
from .fairness import FairnessSpec, test_metrics
from .sampling import (
    AllocSolverConfig,
    Allocation,
    disagreement_masks,
    ensemble_predictions,
    fit_perturbed_ensemble,
    lambda_diff,
    lambda_fair,
    mix_and_sample,
)

logger = logging.getLogger(__name__)

STRATEGIES = ("fare", "fare_no_fair", "passive")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FareConfig:
    n: int = 50
    L: int = 4
    k: int = 10
    sigma: float = 0.1
    spec: FairnessSpec = FairnessSpec()
    correction: str = "sqrt"
    strategy: str = "fare"
    seed: int = 0
    eg: EGConfig = EGConfig()
    solver: AllocSolverConfig = AllocSolverConfig()

    def __post_init__(self):
        if self.n < 1 or self.L < 1:
            raise ConfigError("batch size and rounds must be at least 1")
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if not 0.0 <= self.sigma < 0.5:
            raise ConfigError("sigma must lie in [0, 1/2)")
        if self.correction not in ("sqrt", "none"):
            raise ConfigError(f"unknown correction {self.correction!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")

    @property
    def budget(self) -> int:
        return self.n * self.L

    def tolerance(self, labels: int) -> float:
        if self.correction == "none":
            return self.spec.alpha
        return alpha_correction(self.spec.alpha, labels)


@dataclass
class RoundRecord:
    round: int
    labels: int
    test_accuracy: float
    test_tprp: float | None
    test_eo: float | None
    train_violation: float | None
    alpha_eff: float
    wall_time: float
    group_counts: tuple[int, int]
    classifier: dict = field(repr=False, default_factory=dict)
    constraint_dropped: bool = False
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["group_counts"] = list(self.group_counts)
        return d


def _snapshot(D: LabeledSet, cfg: FareConfig, final: bool) -> tuple[RandomizedClassifier, float, bool]:
    alpha_eff = cfg.tolerance(len(D))
    try:
        return efo_solve(D, cfg.spec, alpha_eff, cfg.eg), alpha_eff, False
    except DegenerateConstraint as exc:
        if final and cfg.strategy == "fare":
            raise
        logger.info("snapshot at %d labels: %s; constraint dropped", len(D), exc)
        return unconstrained_fit(D, cfg.eg), alpha_eff, True


def run(
    train: Dataset,
    test: Dataset,
    cfg: FareConfig,
    diagnostics: str | Path | None = None,
) -> list[RoundRecord]:
    """Run one trial; returns one record per round, the last holding the final classifier."""
    pool = Pool(train.X, train.a)
    if cfg.budget > len(pool):
        raise ConfigError(f"budget n*L = {cfg.budget} exceeds the pool size {len(pool)}")
    nu = 1.0 / pool.size0
    D = LabeledSet.empty(train.d)
    records: list[RoundRecord] = []
    sticky: list[str] = []
    diag = open(diagnostics, "a", encoding="utf-8") if diagnostics else None

    def acquire(batch):
        nonlocal D
        ids = np.array([i for i, _ in batch], dtype=np.int64)
        probs = np.array([p for _, p in batch])
        pool.remove(ids)
        D = D.extend(ids, train.X[ids], train.a[ids], train.y[ids], np.full(len(ids), nu), probs)

    try:
        for ell in range(cfg.L):
            t0 = time.perf_counter()
            entry: dict = {"seed": cfg.seed, "strategy": cfg.strategy, "round": ell, "pool_size": len(pool)}
            if ell == 0 or cfg.strategy == "passive":
                key = (streams.ROUND0,) if ell == 0 else (streams.ROUND, ell, streams.SAMPLE)
                uni = Allocation(pool.active_ids(), np.full(len(pool), 1.0 / len(pool)))
                batch = mix_and_sample(pool, uni, None, cfg.n, streams.substream(cfg.seed, *key))
            else:
                rngs = [streams.substream(cfg.seed, streams.ROUND, ell, streams.PERTURB, i) for i in range(cfg.k)]
                ensemble = fit_perturbed_ensemble(
                    D, cfg.k, cfg.sigma, cfg.spec, cfg.tolerance(cfg.n * ell), rngs, cfg.eg
                )
                lam_d = lambda_diff(pool, ensemble, cfg.solver)
                lam_f = None
                if cfg.strategy == "fare":
                    active_a = pool.a[pool.active_rows()]
                    if not (np.any(active_a == 0) and np.any(active_a == 1)):
                        msg = f"round {ell}: a protected group is exhausted in the pool"
                        if msg not in sticky:
                            sticky.append(msg)
                    lam_f = lambda_fair(pool)
                batch = mix_and_sample(
                    pool, lam_d, lam_f, cfg.n, streams.substream(cfg.seed, streams.ROUND, ell, streams.SAMPLE)
                )
                if diag is not None:
                    entry["lambda_diff"] = lam_d.as_dict()
                    entry["lambda_fair"] = None if lam_f is None else lam_f.as_dict()
                    entry["disagreement"] = _disagreement_ids(pool, ensemble)
            if diag is not None:
                entry["sampled"] = [[i, p] for i, p in batch]
                diag.write(json.dumps(entry) + "\n")
            acquire(batch)

            final = ell == cfg.L - 1
            h, alpha_eff, dropped = _snapshot(D, cfg, final)
            m = test_metrics(test, h)
            warnings = list(sticky)
            if dropped:
                warnings.append("constraint dropped: an (a, y) cell is empty in the labeled data")
            records.append(
                RoundRecord(
                    round=ell,
                    labels=len(D),
                    test_accuracy=m.accuracy,
                    test_tprp=m.tprp,
                    test_eo=m.eo,
                    train_violation=None if h.report is None else h.report.violation,
                    alpha_eff=alpha_eff,
                    wall_time=time.perf_counter() - t0,
                    group_counts=(int(np.sum(D.a == 0)), int(np.sum(D.a == 1))),
                    classifier=h.to_dict(),
                    constraint_dropped=dropped,
                    warnings=warnings,
                )
            )
    finally:
        if diag is not None:
            diag.close()
    return records


def _disagreement_ids(pool: Pool, ensemble) -> list[int]:
    preds = ensemble_predictions(pool, ensemble)
    union = disagreement_masks(preds).any(axis=0)
    return pool.active_ids()[union].tolist()


def run_fare(train, test, cfg: FareConfig, **kw) -> list[RoundRecord]:
    return run(train, test, _with(cfg, "fare"), **kw)


def run_fare_no_fair(train, test, cfg: FareConfig, **kw) -> list[RoundRecord]:
    return run(train, test, _with(cfg, "fare_no_fair"), **kw)


def run_passive(train, test, cfg: FareConfig, **kw) -> list[RoundRecord]:
    return run(train, test, _with(cfg, "passive"), **kw)


def _with(cfg: FareConfig, strategy: str) -> FareConfig:
    from dataclasses import replace

    return replace(cfg, strategy=strategy)
