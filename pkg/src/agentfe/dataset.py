"""Tabular datasets: loading, typing, summaries, fold plans.

Missing cells are ``NaN`` in numeric columns and ``None`` in categorical
ones. Only missing cells are ever NaN: loading rejects non-finite numbers.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .rng import SplitMix64

NUMERIC = "numeric"
CATEGORICAL = "categorical"
CLASS_LABEL = "class-label"

ColumnKind = Literal["numeric", "categorical"]
TargetKind = Literal["class-label", "numeric"]
TaskKind = Literal["classification", "regression"]


class DatasetError(ValueError):
    """Raised for malformed tabular input."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Column:
    name: str
    kind: ColumnKind
    values: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise DatasetError("column names must be non-empty")
        if self.kind == NUMERIC:
            vals = np.asarray(self.values, dtype=float)
            if np.isinf(vals).any():
                raise DatasetError(f"numeric column {self.name!r} has non-finite values")
        elif self.kind == CATEGORICAL:
            vals = np.array(
                [None if v is None else str(v) for v in self.values], dtype=object
            )
            if all(v is None for v in vals):
                raise DatasetError(f"categorical column {self.name!r} has no values")
        else:
            raise DatasetError(f"unknown column kind {self.kind!r}")
        object.__setattr__(self, "values", _frozen(vals))

    def missing_mask(self) -> np.ndarray:
        if self.kind == NUMERIC:
            return np.isnan(self.values)
        return np.array([v is None for v in self.values], dtype=bool)

    def __eq__(self, other):
        if not isinstance(other, Column):
            return NotImplemented
        if (self.name, self.kind) != (other.name, other.kind):
            return False
        if self.kind == NUMERIC:
            return np.array_equal(self.values, other.values, equal_nan=True)
        return list(self.values) == list(other.values)


@dataclass(frozen=True, eq=False)
class TargetColumn:
    kind: TargetKind
    values: np.ndarray
    name: str = "target"

    def __post_init__(self):
        if self.kind == NUMERIC:
            vals = np.asarray(self.values, dtype=float)
            if not np.isfinite(vals).all():
                raise DatasetError("target has missing values")
        elif self.kind == CLASS_LABEL:
            if any(v is None for v in self.values):
                raise DatasetError("target has missing values")
            vals = np.array([str(v) for v in self.values], dtype=object)
            if len(set(vals)) < 2:
                raise DatasetError("class-label target needs at least 2 distinct labels")
        else:
            raise DatasetError(f"unknown target kind {self.kind!r}")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def classes(self) -> list[str]:
        if self.kind != CLASS_LABEL:
            raise DatasetError("regression targets have no classes")
        return sorted(set(self.values))

    def __eq__(self, other):
        if not isinstance(other, TargetColumn):
            return NotImplemented
        if (self.kind, self.name) != (other.kind, other.name):
            return False
        if self.kind == NUMERIC:
            return np.array_equal(self.values, other.values)
        return list(self.values) == list(other.values)


@dataclass(frozen=True)
class DatasetDescription:
    task_line: str
    goal_line: str
    attribute_lines: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    columns: tuple[Column, ...]
    target: TargetColumn
    description: DatasetDescription

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DatasetError("column names must be unique")
        n = len(self.target.values)
        if n < 2:
            raise DatasetError("a dataset needs at least 2 rows")
        for col in self.columns:
            if len(col.values) != n:
                raise DatasetError(f"column {col.name!r} has {len(col.values)} rows, expected {n}")
        extra = set(self.description.attribute_lines) - set(names)
        if extra:
            raise DatasetError(f"description mentions unknown columns: {sorted(extra)}")

    @property
    def n_rows(self) -> int:
        return len(self.target.values)

    @property
    def task(self) -> TaskKind:
        return "classification" if self.target.kind == CLASS_LABEL else "regression"

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def take(self, rows: Sequence[int]) -> "Dataset":
        """Row subset (or permutation) as a new dataset."""
        rows = np.asarray(rows, dtype=int)
        cols = tuple(Column(c.name, c.kind, c.values[rows]) for c in self.columns)
        tgt = TargetColumn(self.target.kind, self.target.values[rows], self.target.name)
        return Dataset(self.name, cols, tgt, self.description)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.name == other.name
            and self.columns == other.columns
            and self.target == other.target
            and self.description == other.description
        )


def default_description(task: TaskKind, target_name: str) -> DatasetDescription:
    kind = "Classification" if task == "classification" else "Regression"
    return DatasetDescription(
        task_line=f"{kind} on tabular data.",
        goal_line=f"The overall goal is to predict '{target_name}'.",
    )


def _parse_number(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def infer_kind(cells: Iterable[str]) -> ColumnKind:
    """numeric iff every non-empty cell parses as a finite number."""
    present = [c for c in cells if c != ""]
    if present and all(_parse_number(c) is not None for c in present):
        return NUMERIC
    return CATEGORICAL


def from_rows(
    header: Sequence[str],
    rows: Sequence[Sequence[str]],
    target_name: str,
    task: TaskKind,
    schema_hints: Mapping[str, ColumnKind] | None = None,
    name: str = "dataset",
    description: DatasetDescription | None = None,
) -> Dataset:
    """Build a dataset from string cells; empty string means missing."""
    schema_hints = dict(schema_hints or {})
    if target_name not in header:
        raise DatasetError(f"target column {target_name!r} not in header")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DatasetError(f"ragged row {i + 1}: {len(row)} cells, header has {len(header)}")
    by_name = {h: [row[j] for row in rows] for j, h in enumerate(header)}

    columns = []
    for h in header:
        if h == target_name:
            continue
        cells = by_name[h]
        kind = schema_hints.get(h) or infer_kind(cells)
        if kind == NUMERIC:
            vals = []
            for c in cells:
                if c == "":
                    vals.append(np.nan)
                    continue
                v = _parse_number(c)
                if v is None:
                    raise DatasetError(f"column {h!r}: cell {c!r} is not a finite number")
                vals.append(v)
            columns.append(Column(h, NUMERIC, np.array(vals, dtype=float)))
        else:
            columns.append(Column(h, CATEGORICAL, [None if c == "" else c for c in cells]))

    tcells = by_name[target_name]
    if any(c == "" for c in tcells):
        raise DatasetError("target has missing values")
    if task == "regression":
        tvals = [_parse_number(c) for c in tcells]
        if any(v is None for v in tvals):
            raise DatasetError("regression target must be numeric")
        target = TargetColumn(NUMERIC, np.array(tvals, dtype=float), target_name)
    elif task == "classification":
        target = TargetColumn(CLASS_LABEL, list(tcells), target_name)
    else:
        raise DatasetError(f"unknown task {task!r}")
    return Dataset(name, tuple(columns), target, description or default_description(task, target_name))


def from_arrays(
    columns: Mapping[str, Sequence],
    target: Sequence,
    task: TaskKind,
    target_name: str = "target",
    name: str = "dataset",
    description: DatasetDescription | None = None,
) -> Dataset:
    """Build a dataset from in-memory columns; float arrays become numeric
    (NaN = missing), anything else categorical (None = missing)."""
    cols = []
    for col_name, values in columns.items():
        arr = np.asarray(values)
        kind = NUMERIC if arr.dtype.kind in "fiub" else CATEGORICAL
        cols.append(Column(col_name, kind, arr.astype(float) if kind == NUMERIC else list(values)))
    if task == "regression":
        tgt = TargetColumn(NUMERIC, np.asarray(target, dtype=float), target_name)
    else:
        tgt = TargetColumn(CLASS_LABEL, list(target), target_name)
    return Dataset(name, tuple(cols), tgt, description or default_description(task, target_name))


def load_csv(
    path: str | Path,
    target_name: str,
    task: TaskKind,
    schema_hints: Mapping[str, ColumnKind] | None = None,
    description: DatasetDescription | None = None,
) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path} is empty") from None
        rows = list(reader)
    return from_rows(header, rows, target_name, task, schema_hints, path.stem, description)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def to_csv_text(dataset: Dataset) -> str:
    """Canonical RFC 4180 writer: feature columns in order, then the target."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(dataset.column_names + [dataset.target.name])
    for i in range(dataset.n_rows):
        row = [_format_cell(c.values[i]) for c in dataset.columns]
        row.append(_format_cell(dataset.target.values[i]))
        writer.writerow(row)
    return buf.getvalue()


def write_csv(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(to_csv_text(dataset), encoding="utf-8", newline="")


# -- summaries -----------------------------------------------------------


@dataclass(frozen=True)
class ColumnSummary:
    name: str
    kind: str
    missing_rate: float
    mean: float | None = None
    std: float | None = None
    min: float | None = None
    max: float | None = None
    cardinality: int | None = None
    top: tuple[tuple[str, int], ...] = ()

    def as_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "missing_rate": self.missing_rate}
        if self.kind == NUMERIC:
            d.update(mean=self.mean, std=self.std, min=self.min, max=self.max)
        else:
            d.update(cardinality=self.cardinality, top=[list(t) for t in self.top])
        return d


@dataclass(frozen=True)
class SchemaSummary:
    n_rows: int
    columns: tuple[ColumnSummary, ...]
    target: ColumnSummary

    def as_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "columns": [c.as_dict() for c in self.columns],
            "target": self.target.as_dict(),
        }


def _numeric_summary(name: str, values: np.ndarray) -> ColumnSummary:
    present = values[~np.isnan(values)]
    rate = 1.0 - len(present) / len(values)
    if len(present) == 0:
        return ColumnSummary(name, NUMERIC, rate)
    return ColumnSummary(
        name, NUMERIC, rate,
        mean=float(present.mean()),
        std=float(present.std()),
        min=float(present.min()),
        max=float(present.max()),
    )


def top_counts(values: Iterable, k: int | None = None) -> list[tuple[str, int]]:
    """Category frequencies, count descending then token ascending."""
    counts = Counter(v for v in values if v is not None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked if k is None else ranked[:k]


def _categorical_summary(name: str, values) -> ColumnSummary:
    present = [v for v in values if v is not None]
    rate = 1.0 - len(present) / len(values)
    return ColumnSummary(
        name, CATEGORICAL, rate,
        cardinality=len(set(present)),
        top=tuple(top_counts(present, 5)),
    )


def describe(dataset: Dataset) -> SchemaSummary:
    """Per-column statistics over non-missing values (population std)."""
    cols = []
    for c in dataset.columns:
        if c.kind == NUMERIC:
            cols.append(_numeric_summary(c.name, c.values))
        else:
            cols.append(_categorical_summary(c.name, c.values))
    if dataset.target.kind == NUMERIC:
        tgt = _numeric_summary(dataset.target.name, dataset.target.values)
    else:
        tgt = _categorical_summary(dataset.target.name, dataset.target.values)
    return SchemaSummary(dataset.n_rows, tuple(cols), tgt)


def render_description(dataset: Dataset) -> str:
    """Task line, goal line, then ``name: text`` per described column in column order."""
    desc = dataset.description
    lines = [desc.task_line, desc.goal_line]
    for name in dataset.column_names:
        if name in desc.attribute_lines:
            lines.append(f"{name}: {desc.attribute_lines[name]}")
    return "\n".join(lines)


# -- folds ---------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    n_rows: int
    folds: tuple[np.ndarray, ...]

    def train_indices(self, fold: int) -> np.ndarray:
        mask = np.ones(self.n_rows, dtype=bool)
        mask[self.folds[fold]] = False
        return np.flatnonzero(mask)

    def __iter__(self):
        for i, val in enumerate(self.folds):
            yield self.train_indices(i), val


def kfold_split(n_rows: int, k: int, seed: int) -> FoldPlan:
    """Shuffle 0..n-1 with SplitMix64 Fisher-Yates, then cut into k contiguous
    chunks; the first ``n % k`` chunks get one extra row. Each fold is sorted."""
    if not 2 <= k <= n_rows:
        raise ValueError(f"k must satisfy 2 <= k <= n_rows, got k={k}, n_rows={n_rows}")
    order = SplitMix64(seed).shuffle(list(range(n_rows)))
    base, extra = divmod(n_rows, k)
    folds, start = [], 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        folds.append(_frozen(np.array(sorted(order[start:start + size]), dtype=int)))
        start += size
    return FoldPlan(k, seed, n_rows, tuple(folds))
