"""Dataset loading, preprocessing, splitting and pool bookkeeping."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import box_muller

logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).parent / "schemas"


class DataError(ValueError):
    """Raised for unusable input files, schemas or datasets."""


class PoolError(KeyError):
    """Raised on invalid pool operations (absent ids, empty pool)."""


# ---------------------------------------------------------------------------
# schema + raw rows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SchemaConfig:
    """Column roles and binarization rules for one tabular dataset.

    ``positive_label_value`` and ``protected_one_value`` may be a single string
    or a list of strings; a row maps to 1 when its value is in that set. When
    a ``*_threshold`` is given instead, the column is read as a number and maps
    to 1 when it exceeds the threshold.
    """

    label_column: str
    protected_column: str
    positive_label_value: str | list[str] | None = None
    protected_one_value: str | list[str] | None = None
    categorical_columns: tuple[str, ...] = ()
    drop_columns: tuple[str, ...] = ()
    label_threshold: float | None = None
    protected_threshold: float | None = None
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown schema fields: {sorted(unknown)}")
        for key in ("label_column", "protected_column"):
            if key not in d:
                raise DataError(f"schema is missing required field {key!r}")
        d = dict(d)
        d["categorical_columns"] = tuple(d.get("categorical_columns", ()))
        d["drop_columns"] = tuple(d.get("drop_columns", ()))
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SchemaConfig":
        path = Path(path)
        if not path.exists():
            raise DataError(f"schema file not found: {path}")
        with path.open(encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def builtin(cls, name: str) -> "SchemaConfig":
        return cls.from_json(SCHEMA_DIR / f"{name}.json")


@dataclass
class RawDataset:
    columns: list[str]
    rows: list[dict[str, str]]
    schema: SchemaConfig
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        return [r[name] for r in self.rows]


def _is_missing(v: str | None) -> bool:
    return v is None or v.strip() == ""


def load_csv(path: str | Path, schema: SchemaConfig) -> RawDataset:
    """Parse a headed UTF-8 CSV file; rows with an empty cell are dropped."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: missing header row")
        columns = [c.strip() for c in reader.fieldnames]
        reader.fieldnames = columns
        required = [schema.label_column, schema.protected_column, *schema.categorical_columns]
        missing = [c for c in required if c not in columns]
        if missing:
            raise DataError(f"{path}: schema columns not in header: {missing}")
        keep = [c for c in columns if c not in schema.drop_columns]
        rows, dropped = [], 0
        for rec in reader:
            if any(_is_missing(rec.get(c)) for c in keep):
                dropped += 1
                continue
            rows.append({c: rec[c].strip() for c in keep})
    if dropped:
        logger.info("%s: dropped %d rows with missing values", path.name, dropped)
    raw = RawDataset(columns=keep, rows=rows, schema=schema, dropped=dropped)
    # surface binarization problems at load time
    _binarize(raw, schema.label_column, schema.positive_label_value, schema.label_threshold)
    _binarize(raw, schema.protected_column, schema.protected_one_value, schema.protected_threshold)
    return raw


def _binarize(raw: RawDataset, col: str, positive, threshold) -> np.ndarray:
    values = raw.column(col)
    if threshold is not None:
        try:
            out = np.array([float(v) > threshold for v in values], dtype=np.int8)
        except ValueError as exc:
            raise DataError(f"column {col!r} is not numeric but has a threshold rule") from exc
    else:
        if positive is None:
            raise DataError(f"no binarization rule for column {col!r}")
        pos = {positive} if isinstance(positive, str) else set(positive)
        out = np.array([v in pos for v in values], dtype=np.int8)
    if len(values) and (out.all() or not out.any()):
        raise DataError(
            f"column {col!r} is not binarizable under the schema rule: every row maps to {int(out[0])}"
        )
    return out


# ---------------------------------------------------------------------------
# numeric datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    a: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        if not (len(self.X) == len(self.a) == len(self.y)):
            raise DataError("X, a and y have mismatched lengths")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.a[idx], self.y[idx], self.feature_names)

    def cell_counts(self) -> np.ndarray:
        """2x2 counts indexed ``[a, y]``."""
        counts = np.zeros((2, 2), dtype=int)
        np.add.at(counts, (self.a, self.y), 1)
        return counts

    def check_nondegenerate(self) -> None:
        for name, v in (("protected attribute", self.a), ("label", self.y)):
            present = set(np.unique(v).tolist())
            if present != {0, 1}:
                raise DataError(f"{name} takes only values {sorted(present)}; both 0 and 1 are required")


def _zscore(col: np.ndarray, fit: np.ndarray) -> np.ndarray | None:
    mu = col[fit].mean()
    sd = col[fit].std()  # population (1/n) convention
    if not np.isfinite(sd) or sd <= 1e-12 * max(1.0, abs(mu)):
        return None
    return (col - mu) / sd


def preprocess(raw: RawDataset, fit_rows: np.ndarray | None = None) -> Dataset:
    """One-hot encode categoricals and z-score numeric columns.

    Parameters
    ----------
    raw : RawDataset
        Parsed rows with schema roles.
    fit_rows : array of bool or int, optional
        Rows whose statistics define the standardization. Defaults to all rows.
    """
    s = raw.schema
    n = len(raw)
    y = _binarize(raw, s.label_column, s.positive_label_value, s.label_threshold)
    a = _binarize(raw, s.protected_column, s.protected_one_value, s.protected_threshold)
    fit = np.ones(n, dtype=bool) if fit_rows is None else np.zeros(n, dtype=bool)
    if fit_rows is not None:
        fit[fit_rows] = True

    role_cols = {s.label_column, s.protected_column}
    cols, names = [], []
    for c in raw.columns:
        if c in role_cols:
            continue
        values = raw.column(c)
        if c in s.categorical_columns:
            for cat in sorted(set(values)):
                cols.append(np.array([v == cat for v in values], dtype=float))
                names.append(f"{c}={cat}")
            continue
        try:
            col = np.array([float(v) for v in values])
        except ValueError as exc:
            raise DataError(f"column {c!r} is not numeric and not declared categorical") from exc
        z = _zscore(col, fit)
        if z is None:
            logger.warning("dropping zero-variance column %r", c)
            continue
        cols.append(z)
        names.append(c)
    X = np.column_stack(cols) if cols else np.zeros((n, 0))
    return Dataset(X=X, a=a.astype(np.int64), y=y.astype(np.int64), feature_names=tuple(names))


def standardize(ds: Dataset, fit_rows: np.ndarray | None = None) -> Dataset:
    """Z-score every column of an already numeric dataset, dropping constant ones."""
    n = len(ds)
    fit = np.ones(n, dtype=bool) if fit_rows is None else np.zeros(n, dtype=bool)
    if fit_rows is not None:
        fit[fit_rows] = True
    cols, names = [], []
    fnames = ds.feature_names or tuple(f"x{i + 1}" for i in range(ds.d))
    for j in range(ds.d):
        z = _zscore(ds.X[:, j].astype(float), fit)
        if z is None:
            logger.info("dropping zero-variance column %r", fnames[j])
            continue
        cols.append(z)
        names.append(fnames[j])
    X = np.column_stack(cols) if cols else np.zeros((n, 0))
    return Dataset(X, ds.a, ds.y, tuple(names))


def train_test_split(
    ds: Dataset, test_fraction: float, rng: np.random.Generator, max_attempts: int = 100
) -> tuple[Dataset, Dataset]:
    """Random disjoint split; resplits until the test set keeps every populated (a, y) cell."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(ds)
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise DataError(f"split of {n} rows at {test_fraction} leaves an empty partition")
    required = ds.cell_counts() > 0
    for _ in range(max_attempts):
        perm = rng.permutation(n)
        test_idx = np.sort(perm[:n_test])
        train_idx = np.sort(perm[n_test:])
        test = ds.subset(test_idx)
        if np.all(test.cell_counts()[required] > 0):
            return ds.subset(train_idx), test
    raise DataError(f"no split in {max_attempts} attempts kept every (a, y) cell in the test set")


def generate_synthetic(
    rng: np.random.Generator,
    n0: int = 10_000,
    n1: int = 100,
    mean1: tuple[float, float] = (10.0, 10.0),
) -> Dataset:
    """Two Gaussian groups, each separable on its own coordinate.

    Group 0 is N((0, 0), I) labeled by the sign of its first coordinate; group 1
    is N(mean1, I) labeled by the sign of its second coordinate. Coordinates are
    returned unstandardized.
    """
    z = box_muller(rng, 2 * (n0 + n1)).reshape(n0 + n1, 2)
    X = z.copy()
    X[n0:] += np.asarray(mean1, dtype=float)
    a = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    y = np.r_[(X[:n0, 0] > 0), (X[n0:, 1] > 0)].astype(np.int64)
    return Dataset(X, a, y, ("x1", "x2"))


def write_dataset_csv(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = ds.feature_names or tuple(f"x{i + 1}" for i in range(ds.d))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "a", "y"])
        for xi, ai, yi in zip(ds.X, ds.a, ds.y):
            w.writerow([*(repr(float(v)) for v in xi), int(ai), int(yi)])


# ---------------------------------------------------------------------------
# active-learning state
# ---------------------------------------------------------------------------


class Pool:
    """Unlabeled points with stable integer ids; points leave once labeled."""

    def __init__(self, X: np.ndarray, a: np.ndarray, ids: Sequence[int] | None = None):
        self.X = np.asarray(X, dtype=float)
        self.a = np.asarray(a, dtype=np.int64)
        self.ids = np.arange(len(self.a)) if ids is None else np.asarray(ids, dtype=np.int64)
        if len(np.unique(self.ids)) != len(self.ids):
            raise PoolError("pool ids must be unique")
        self._row = {int(i): r for r, i in enumerate(self.ids)}
        self._active = np.ones(len(self.ids), dtype=bool)
        self.size0 = len(self.ids)

    def __len__(self) -> int:
        return int(self._active.sum())

    @property
    def removed(self) -> set[int]:
        return set(self.ids[~self._active].tolist())

    def active_rows(self) -> np.ndarray:
        return np.flatnonzero(self._active)

    def active_ids(self) -> np.ndarray:
        return self.ids[self._active]

    def rows_of(self, ids: Iterable[int]) -> np.ndarray:
        try:
            return np.array([self._row[int(i)] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise PoolError(f"id {exc.args[0]} is not in the pool") from None

    def remove(self, ids: Iterable[int]) -> "Pool":
        ids = [int(i) for i in ids]
        if len(set(ids)) != len(ids):
            raise PoolError("duplicate ids in removal request")
        rows = self.rows_of(ids)
        gone = [i for i, r in zip(ids, rows) if not self._active[r]]
        if gone:
            raise PoolError(f"ids already removed: {gone}")
        self._active[rows] = False
        return self

    def copy(self) -> "Pool":
        p = Pool(self.X, self.a, self.ids)
        p._active = self._active.copy()
        p.size0 = self.size0
        return p


@dataclass(frozen=True)
class LabeledSet:
    """Labeled examples with population weight ``nu`` and acquisition probability ``nu_tr``."""

    ids: np.ndarray
    X: np.ndarray
    a: np.ndarray
    y: np.ndarray
    nu: np.ndarray
    nu_tr: np.ndarray
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = len(self.ids)
        if not all(len(v) == n for v in (self.X, self.a, self.y, self.nu, self.nu_tr)):
            raise DataError("LabeledSet fields have mismatched lengths")
        if n and (np.any(self.nu <= 0) or np.any(self.nu_tr <= 0)):
            raise DataError("population weights and acquisition probabilities must be positive")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def importance_weights(self) -> np.ndarray:
        return self.nu / self.nu_tr

    @classmethod
    def empty(cls, d: int) -> "LabeledSet":
        z = np.zeros(0)
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, d)), z.astype(np.int64), z.astype(np.int64), z, z)

    def extend(self, ids, X, a, y, nu, nu_tr) -> "LabeledSet":
        return LabeledSet(
            np.r_[self.ids, np.asarray(ids, dtype=np.int64)],
            np.vstack([self.X, np.asarray(X, dtype=float).reshape(-1, self.X.shape[1])]),
            np.r_[self.a, np.asarray(a, dtype=np.int64)],
            np.r_[self.y, np.asarray(y, dtype=np.int64)],
            np.r_[self.nu, np.asarray(nu, dtype=float)],
            np.r_[self.nu_tr, np.asarray(nu_tr, dtype=float)],
            self.warnings,
        )

    def with_labels(self, y: np.ndarray) -> "LabeledSet":
        return LabeledSet(self.ids, self.X, self.a, np.asarray(y, dtype=np.int64), self.nu, self.nu_tr, self.warnings)

    def sorted_by_id(self) -> "LabeledSet":
        o = np.argsort(self.ids, kind="stable")
        return LabeledSet(self.ids[o], self.X[o], self.a[o], self.y[o], self.nu[o], self.nu_tr[o], self.warnings)

    @classmethod
    def from_dataset(cls, ds: Dataset, nu: float | np.ndarray | None = None) -> "LabeledSet":
        """Fully labeled set with uniform acquisition (plain i.i.d. sample)."""
        n = len(ds)
        w = np.full(n, 1.0 / n) if nu is None else np.broadcast_to(np.asarray(nu, dtype=float), (n,)).copy()
        return cls(np.arange(n), ds.X, ds.a, ds.y, w, w.copy())
