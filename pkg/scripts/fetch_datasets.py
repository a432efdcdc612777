"""Write the benchmark datasets as headed CSV files under ``data/``.

The raw files are taken from the ``responsibly`` wheel on PyPI, which bundles
copies of the UCI Adult and German Credit data and the ProPublica COMPAS
two-year recidivism table. Only the wheel archive is read; the package itself
is never installed or imported.

    python scripts/fetch_datasets.py                 # download the wheel with pip
    python scripts/fetch_datasets.py --wheel PATH    # use an existing wheel
"""
from __future__ import annotations

import argparse
import csv
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEEL_SPEC = "responsibly==0.1.2"
PREFIX = "responsibly/dataset/"

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status", "occupation",
    "relationship", "race", "sex", "capital-gain", "capital-loss", "hours-per-week", "native-country", "income",
]
GERMAN_COLUMNS = [
    "status", "duration", "credit_history", "purpose", "credit_amount", "savings", "employment",
    "installment_rate", "personal_status", "other_debtors", "residence_since", "property", "age",
    "installment_plans", "housing", "existing_credits", "job", "people_liable", "telephone",
    "foreign_worker", "credit",
]
COMPAS_COLUMNS = [
    "sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count", "juv_other_count",
    "priors_count", "c_charge_degree", "two_year_recid",
]


def download_wheel(dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:", "-d", str(dest), WHEEL_SPEC],
        check=True,
    )
    wheels = sorted(dest.glob("responsibly-*.whl"))
    if not wheels:
        raise SystemExit("pip did not produce a responsibly wheel")
    return wheels[0]


def _text(zf: zipfile.ZipFile, name: str) -> str:
    return zf.read(PREFIX + name).decode("utf-8")


def _write(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {path}")


def adult_rows(zf: zipfile.ZipFile) -> list[list[str]]:
    # "?" marks an unknown category and is kept as its own level
    rows = []
    for name in ("adult/adult.data", "adult/adult.test"):
        for line in _text(zf, name).splitlines():
            if not line.strip() or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            cells[-1] = cells[-1].rstrip(".")
            if len(cells) != len(ADULT_COLUMNS):
                raise SystemExit(f"unexpected adult row: {line!r}")
            rows.append(cells)
    return rows


def german_rows(zf: zipfile.ZipFile) -> list[list[str]]:
    rows = []
    for line in _text(zf, "german/german.data").splitlines():
        cells = line.split()
        if not cells:
            continue
        if len(cells) != len(GERMAN_COLUMNS):
            raise SystemExit(f"unexpected german row: {line!r}")
        rows.append(cells)
    return rows


def compas_rows(zf: zipfile.ZipFile) -> list[list[str]]:
    # the usual screening filters, restricted to the two largest race groups
    reader = csv.DictReader(io.StringIO(_text(zf, "compas/compas-scores-two-years.csv")))
    rows = []
    for r in reader:
        if not r["days_b_screening_arrest"] or not -30 <= int(float(r["days_b_screening_arrest"])) <= 30:
            continue
        if r["is_recid"] == "-1" or r["c_charge_degree"] == "O" or r["score_text"] == "N/A":
            continue
        if r["race"] not in ("African-American", "Caucasian"):
            continue
        rows.append([r[c] for c in COMPAS_COLUMNS])
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--wheel", type=Path, help="path to an already downloaded responsibly wheel")
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or download_wheel(Path(tmp))
        with zipfile.ZipFile(wheel) as zf:
            _write(args.out / "adult.csv", ADULT_COLUMNS, adult_rows(zf))
            _write(args.out / "german.csv", GERMAN_COLUMNS, german_rows(zf))
            _write(args.out / "compas.csv", COMPAS_COLUMNS, compas_rows(zf))
    return 0


if __name__ == "__main__":
    sys.exit(main())
