"""Command-line entry point.

    fare run --dataset synthetic --alpha 0.1 --batch-size 50 --rounds 4 --out results/
    fare dataset synth --seed 0 --out synthetic.csv
    fare bounds coverage --n 500 --trials 1000 --delta 0.1
    fare report results/

Exit status is 0 on success, 1 on a configuration error (bad flag, invalid
value, unreadable dataset or schema) and 2 on any other runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .data import DataError, generate_synthetic, write_dataset_csv
from .driver import STRATEGIES, ConfigError
from .efo import EGConfig

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# run flags that may also come from --config; dest -> default
RUN_DEFAULTS = {
    "dataset": "synthetic",
    "schema": None,
    "metric": "tprp",
    "alpha": 0.1,
    "batch_size": 50,
    "rounds": 4,
    "k": 10,
    "sigma": 0.1,
    "trials": 1,
    "seed": 0,
    "strategy": list(STRATEGIES),
    "correction": "sqrt",
    "out": "results",
    "workers": 1,
    "fixed_split": False,
    "test_fraction": 0.25,
    "deterministic": "mixture",
    "unweighted_efo": False,
    "eg_iters": 50,
    "eg_bound": 10.0,
    "diagnostics": False,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors become ConfigError so they share the config-error exit code."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file whose keys mirror these flags; explicit flags override it")
    p.add_argument("--dataset", default=S, help="'synthetic' or a CSV path (default synthetic)")
    p.add_argument("--schema", default=S, help="builtin schema name (adult, german, compas, synthetic) or JSON path")
    p.add_argument("--metric", default=S, type=str.lower, choices=("tprp", "eo"), help="fairness metric (default tprp)")
    p.add_argument("--alpha", default=S, type=float, help="fairness tolerance in [0, 1] (default 0.1)")
    p.add_argument("--batch-size", default=S, type=int, help="labels per round n (default 50)")
    p.add_argument("--rounds", default=S, type=int, help="number of rounds L (default 4)")
    p.add_argument("--k", default=S, type=int, help="ensemble size per round (default 10)")
    p.add_argument("--sigma", default=S, type=float, help="label flip probability in [0, 1/2) (default 0.1)")
    p.add_argument("--trials", default=S, type=int, help="independent trials (default 1)")
    p.add_argument("--seed", default=S, type=int, help="base seed; trial t uses seed + t (default 0)")
    p.add_argument(
        "--strategy",
        default=S,
        action="append",
        choices=STRATEGIES,
        help="strategy to run; repeat for several (default: all)",
    )
    p.add_argument("--correction", default=S, choices=("sqrt", "none"), help="tolerance correction (default sqrt)")
    p.add_argument("--out", default=S, help="output directory (default results)")
    p.add_argument("--workers", default=S, type=int, help="parallel trial workers (default 1)")
    p.add_argument("--fixed-split", default=S, action="store_true", help="reuse the base-seed split in every trial")
    p.add_argument("--test-fraction", default=S, type=float, help="held-out fraction (default 0.25)")
    p.add_argument(
        "--deterministic",
        default=S,
        choices=("mixture", "last-iterate"),
        help="oracle output: mixture majority vote or the last best response (default mixture)",
    )
    p.add_argument("--unweighted-efo", default=S, action="store_true", help="fit the oracle on unweighted estimates")
    p.add_argument("--eg-iters", default=S, type=int, help="oracle iterations (default 50)")
    p.add_argument("--eg-bound", default=S, type=float, help="oracle multiplier bound B (default 10)")
    p.add_argument("--diagnostics", default=S, action="store_true", help="dump per-round allocations as JSONL")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fare", description="Fair active learning experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and fallbacks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run_p = sub.add_parser("run", help="run a multi-trial experiment")
    run_p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="log progress and fallbacks")
    _add_run_flags(run_p)

    ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True, parser_class=_Parser)
    synth = ds_sub.add_parser("synth", help="write the two-group synthetic dataset as CSV")
    synth.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    synth.add_argument("--out", required=True, help="CSV path")

    bd = sub.add_parser("bounds", help="concentration bound utilities")
    bd_sub = bd.add_subparsers(dest="bounds_command", required=True, parser_class=_Parser)
    cov = bd_sub.add_parser("coverage", help="Monte-Carlo coverage of the violation bound (JSON)")
    cov.add_argument("--n", type=int, default=500, help="resample size (default 500)")
    cov.add_argument("--trials", type=int, default=1000, help="number of resamples (default 1000)")
    cov.add_argument("--delta", type=float, default=0.1, help="confidence parameter (default 0.1)")
    cov.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    cov.add_argument("--reference-size", type=int, default=1_000_000, help="reference population size")
    cov.add_argument("--metric", type=str.lower, choices=("tprp", "fprp", "eo"), default="tprp")
    cov.add_argument("--out", help="also write the report to this path")

    rep = sub.add_parser("report", help="summarize a results directory and check aggregate.csv against raw.jsonl")
    rep.add_argument("results", help="directory written by 'run'")
    return parser


def _run_settings(args: argparse.Namespace) -> dict:
    settings = dict(RUN_DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in loaded.items():
            dest = key.replace("-", "_")
            if dest == "strategies":
                dest = "strategy"
            if dest not in settings:
                raise ConfigError(f"unknown config key {key!r}")
            settings[dest] = value
    for dest in RUN_DEFAULTS:
        if hasattr(args, dest):
            settings[dest] = getattr(args, dest)
    if isinstance(settings["strategy"], str):
        settings["strategy"] = [settings["strategy"]]
    return settings


def experiment_config(args: argparse.Namespace):
    from .harness import ExperimentConfig

    s = _run_settings(args)
    try:
        eg = replace(
            EGConfig(),
            T_eg=int(s["eg_iters"]),
            B=float(s["eg_bound"]),
            ips=not s["unweighted_efo"],
            output="last" if s["deterministic"] == "last-iterate" else "mixture",
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    alpha = float(s["alpha"])
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    return ExperimentConfig(
        dataset=str(s["dataset"]),
        schema=s["schema"],
        strategies=tuple(s["strategy"]),
        n=int(s["batch_size"]),
        L=int(s["rounds"]),
        k=int(s["k"]),
        sigma=float(s["sigma"]),
        metric=str(s["metric"]).upper(),
        alpha=alpha,
        correction=str(s["correction"]),
        trials=int(s["trials"]),
        seed=int(s["seed"]),
        out=str(s["out"]),
        workers=int(s["workers"]),
        fixed_split=bool(s["fixed_split"]),
        test_fraction=float(s["test_fraction"]),
        eg=eg,
        diagnostics=bool(s["diagnostics"]),
    )


def _cmd_run(args) -> int:
    from .harness import run_experiment

    cfg = experiment_config(args)
    curve = run_experiment(cfg)
    for s in cfg.strategies:
        p = curve.final(s)
        print(
            f"{s:<13} labels={p.labels:<5} acc={p.mean['acc']:.4f}±{p.se['acc']:.4f} "
            f"tprp={p.mean['tprp']:.4f}±{p.se['tprp']:.4f} eo={p.mean['eo']:.4f}±{p.se['eo']:.4f}"
        )
    for flag in curve.flags:
        print(f"note: {flag}")
    print(f"results written to {cfg.out}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .rng import DATASET, substream

    ds = generate_synthetic(substream(args.seed, DATASET))
    write_dataset_csv(ds, args.out)
    print(f"wrote {len(ds)} rows to {args.out}")
    return EXIT_OK


def _cmd_coverage(args) -> int:
    from .concentration import coverage_experiment

    if args.n < 2 or args.trials < 1:
        raise ConfigError("--n must be at least 2 and --trials at least 1")
    if not 0.0 < args.delta < 1.0:
        raise ConfigError("--delta must lie in (0, 1)")
    report = coverage_experiment(
        n=args.n,
        trials=args.trials,
        delta=args.delta,
        seed=args.seed,
        reference_size=args.reference_size,
        metric=args.metric,
    )
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def _cmd_report(args) -> int:
    from .harness import CSV_COLUMNS, aggregate, read_plot_data, read_raw

    root = Path(args.results)
    if not (root / "raw.jsonl").exists():
        raise ConfigError(f"{root} has no raw.jsonl")
    curve = aggregate(read_raw(root / "raw.jsonl"))
    print(f"{'strategy':<13} {'labels':>6}  {'accuracy':>17}  {'tprp':>17}  {'eo':>17}")
    for p in curve.points:
        cells = "  ".join(f"{p.mean[k]:8.4f}±{p.se[k]:<8.4f}" for k in ("acc", "tprp", "eo"))
        print(f"{p.strategy:<13} {p.labels:>6}  {cells}")
    csv_path = root / "aggregate.csv"
    if csv_path.exists():
        stored = read_plot_data(csv_path)
        fresh = [dict(zip(CSV_COLUMNS, r)) for r in curve.rows()]
        if not _same_rows(stored, fresh):
            print("aggregate.csv does NOT match a recomputation from raw.jsonl", file=sys.stderr)
            return EXIT_RUNTIME
        print("aggregate.csv matches a recomputation from raw.jsonl")
    return EXIT_OK


def _same_rows(a: list[dict], b: list[dict]) -> bool:
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        for key, va in ra.items():
            vb = rb[key]
            if isinstance(va, float):
                if not (va == vb or (va != va and vb != vb)):
                    return False
            elif va != vb:
                return False
    return True


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    handlers = {
        ("run", None): _cmd_run,
        ("dataset", "synth"): _cmd_synth,
        ("bounds", "coverage"): _cmd_coverage,
        ("report", None): _cmd_report,
    }
    sub = getattr(args, "dataset_command", None) or getattr(args, "bounds_command", None)
    try:
        return handlers[(args.command, sub)](args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
