"""Multi-trial experiment orchestration, aggregation and result persistence.

Layout of an output directory::

    raw.jsonl      one RoundRecord per line, sorted by (trial, strategy, round)
    aggregate.csv  mean and standard error per (strategy, labels) checkpoint
    run_meta.json  config echo, package version, per-trial seeds

Nothing written depends on wall-clock time except the ``wall_time`` field of the
raw records; the aggregate is a deterministic fold over sorted trial outputs.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from . import rng as streams
from .data import Dataset, SchemaConfig, generate_synthetic, load_csv, preprocess, standardize, train_test_split
from .driver import STRATEGIES, ConfigError, FareConfig, run
from .efo import EGConfig
from .fairness import FairnessSpec

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("strategy", "labels", "acc_mean", "acc_se", "tprp_mean", "tprp_se", "eo_mean", "eo_se")
_METRIC_KEYS = (("acc", "test_accuracy"), ("tprp", "test_tprp"), ("eo", "test_eo"))


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"  # "synthetic" or a CSV path
    schema: str | None = None  # builtin schema name or JSON path; required for CSV datasets
    strategies: tuple[str, ...] = STRATEGIES
    n: int = 50
    L: int = 4
    k: int = 10
    sigma: float = 0.1
    metric: str = "TPRP"
    alpha: float = 0.1
    correction: str = "sqrt"
    trials: int = 1
    seed: int = 0
    out: str = "results"
    workers: int = 1
    fixed_split: bool = False
    test_fraction: float = 0.25
    eg: EGConfig = EGConfig()
    diagnostics: bool = False  # per-round allocation dumps under out/diagnostics/

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategy {bad[0]!r}; expected one of {STRATEGIES}")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("strategies must be distinct")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.dataset != "synthetic" and self.schema is None:
            raise ConfigError("a CSV dataset needs --schema")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test fraction must lie in (0, 1)")
        try:
            FairnessSpec(self.metric, self.alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.fare_config("passive", 0)  # validates the remaining fields

    def fare_config(self, strategy: str, seed: int) -> FareConfig:
        return FareConfig(
            n=self.n,
            L=self.L,
            k=self.k,
            sigma=self.sigma,
            spec=FairnessSpec(self.metric, self.alpha),
            correction=self.correction,
            strategy=strategy,
            seed=seed,
            eg=self.eg,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategies"] = list(self.strategies)
        return d


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


def _schema(name_or_path: str) -> SchemaConfig:
    p = Path(name_or_path)
    if p.suffix == ".json" or p.exists():
        return SchemaConfig.from_json(p)
    return SchemaConfig.builtin(name_or_path)


def load_base(cfg: ExperimentConfig) -> Dataset | None:
    """The preprocessed CSV dataset, or ``None`` for the synthetic generator."""
    if cfg.dataset == "synthetic":
        return None
    ds = preprocess(load_csv(cfg.dataset, _schema(cfg.schema)))
    ds.check_nondegenerate()
    return ds


def trial_data(cfg: ExperimentConfig, trial: int, base: Dataset | None) -> tuple[Dataset, Dataset]:
    """Train/test split of one trial; standardization is fitted on the whole dataset."""
    seed = cfg.seed if cfg.fixed_split else cfg.seed + trial
    if base is None:
        base = standardize(generate_synthetic(streams.substream(seed, streams.DATASET)))
    train, test = train_test_split(base, cfg.test_fraction, streams.substream(seed, streams.SPLIT))
    train.check_nondegenerate()
    test.check_nondegenerate()
    return train, test


def check_budget(cfg: ExperimentConfig, base: Dataset | None) -> None:
    """Reject ``n * L`` larger than the training pool before any trial runs."""
    if base is None:
        pool = 10_100 - int(round(10_100 * cfg.test_fraction))
    else:
        pool = len(base) - int(round(len(base) * cfg.test_fraction))
    if cfg.n * cfg.L > pool:
        raise ConfigError(f"budget n*L = {cfg.n * cfg.L} exceeds the training pool size {pool}")


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------


def run_trial(cfg: ExperimentConfig, trial: int, base: Dataset | None = None) -> list[dict]:
    train, test = trial_data(cfg, trial, base)
    seed = cfg.seed + trial
    out = []
    for strategy in cfg.strategies:
        diag = None
        if cfg.diagnostics:
            diag = Path(cfg.out) / "diagnostics" / f"trial{trial:04d}-{strategy}.jsonl"
            diag.parent.mkdir(parents=True, exist_ok=True)
            diag.unlink(missing_ok=True)
        for rec in run(train, test, cfg.fare_config(strategy, seed), diagnostics=diag):
            out.append({"trial": trial, "seed": seed, "strategy": strategy, **rec.to_dict()})
    return out


def _trial_job(args):
    cfg, trial, base = args
    return trial, run_trial(cfg, trial, base)


def run_trials(cfg: ExperimentConfig, base: Dataset | None = None) -> list[dict]:
    """All raw records, sorted by (trial, strategy order, round) regardless of workers."""
    jobs = [(cfg, t, base) for t in range(cfg.trials)]
    if cfg.workers == 1:
        results = [_trial_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_trial_job, jobs))
    results.sort(key=lambda r: r[0])
    return [rec for _, recs in results for rec in recs]


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    strategy: str
    labels: int
    mean: dict[str, float]  # keys acc, tprp, eo; nan when no trial defines the value
    se: dict[str, float]
    count: dict[str, int]  # trials contributing a defined value


@dataclass(frozen=True)
class AggregateCurve:
    points: tuple[CurvePoint, ...]
    trials: int
    flags: tuple[str, ...] = field(default_factory=tuple)

    def rows(self) -> list[list]:
        out = []
        for p in self.points:
            row = [p.strategy, p.labels]
            for key, _ in _METRIC_KEYS:
                row += [p.mean[key], p.se[key]]
            out.append(row)
        return out

    def final(self, strategy: str) -> CurvePoint:
        pts = [p for p in self.points if p.strategy == strategy]
        if not pts:
            raise KeyError(strategy)
        return max(pts, key=lambda p: p.labels)


def _mean_se(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    mean = math.fsum(values) / len(values)
    if len(values) == 1:
        return mean, 0.0
    return mean, statistics.stdev(values) / math.sqrt(len(values))


def aggregate(records: list[dict], trials: int | None = None) -> AggregateCurve:
    """Mean and standard error (sample stdev / sqrt(count)) per checkpoint.

    Undefined metric values (``None`` in the raw records) are excluded; the
    number of contributing trials is kept in :attr:`CurvePoint.count`.
    """
    groups: dict[tuple[str, int], dict[int, dict]] = {}
    for r in records:
        groups.setdefault((r["strategy"], int(r["labels"])), {})[int(r["trial"])] = r
    if trials is None:
        trials = len({int(r["trial"]) for r in records})
    points = []
    for (strategy, labels) in sorted(groups):
        by_trial = groups[(strategy, labels)]
        mean, se, count = {}, {}, {}
        for key, field_name in _METRIC_KEYS:
            vals = [float(by_trial[t][field_name]) for t in sorted(by_trial) if by_trial[t][field_name] is not None]
            mean[key], se[key] = _mean_se(vals)
            count[key] = len(vals)
        points.append(CurvePoint(strategy, labels, mean, se, count))
    grids = {s: sorted(p.labels for p in points if p.strategy == s) for s in {p.strategy for p in points}}
    if len({tuple(g) for g in grids.values()}) > 1:
        raise ValueError("checkpoint grids differ across strategies")
    flags = ("single trial: standard errors are reported as 0",) if trials == 1 else ()
    undefined = sorted({(p.strategy, p.labels) for p in points if any(c < trials for c in p.count.values())})
    if undefined:
        flags += (f"undefined metric values excluded at {len(undefined)} checkpoint(s)",)
    return AggregateCurve(tuple(points), trials, flags)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def emit_plot_data(curve: AggregateCurve, path: str | Path) -> Path:
    """Write the curve as CSV; floats use their shortest round-tripping repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in curve.rows():
            w.writerow([_fmt(v) for v in row])
    return path


def read_plot_data(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["labels"] = int(r["labels"])
        for c in CSV_COLUMNS[2:]:
            r[c] = float(r[c])
    return rows


def read_raw(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# top level
# ---------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> AggregateCurve:
    """Run every trial and strategy, persist raw records, aggregate and metadata."""
    base = load_base(cfg)
    check_budget(cfg, base)
    records = run_trials(cfg, base)
    curve = aggregate(records, cfg.trials)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "raw.jsonl").open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    emit_plot_data(curve, out / "aggregate.csv")
    meta = {
        "config": cfg.to_dict(),
        "version": __version__,
        "trial_seeds": [cfg.seed + t for t in range(cfg.trials)],
        "split_seeds": [cfg.seed if cfg.fixed_split else cfg.seed + t for t in range(cfg.trials)],
        "checkpoints": sorted({p.labels for p in curve.points}),
        "flags": list(curve.flags),
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return curve
