"""Meta-analyses over benchmark score tables and dataset-size points.

Mean reciprocal rank ranks the methods present on each dataset row and averages
1/rank per method over the rows where that method has a score. ``pearson`` is
the plain product-moment coefficient with population moments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

TIE_RULES = ("min-rank", "average-rank")
MISSING_RULES = ("exclude", "zero")


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreRow:
    dataset: str
    n: int
    p: int
    scores: Mapping[str, float | None]


@dataclass(frozen=True)
class ScoreTable:
    methods: tuple[str, ...]
    rows: tuple[ScoreRow, ...]
    higher_is_better: bool = True

    def __post_init__(self):
        if not self.methods:
            raise AnalysisError("a score table needs at least one method")
        if len(set(self.methods)) != len(self.methods):
            raise AnalysisError("duplicate method names")
        names = [r.dataset for r in self.rows]
        if len(set(names)) != len(names):
            raise AnalysisError("duplicate dataset names")

    def column(self, method: str) -> list[float | None]:
        return [r.scores.get(method) for r in self.rows]


@dataclass
class AnalysisReport:
    mrr_per_method: dict[str, float] = field(default_factory=dict)
    pearson_results: list[tuple[str, str, float]] = field(default_factory=list)
    notes: str = ""

    def __post_init__(self):
        for m, v in self.mrr_per_method.items():
            if not 0.0 < v <= 1.0:
                raise AnalysisError(f"MRR for {m} outside (0, 1]: {v}")

    def to_markdown(self) -> str:
        out = []
        if self.mrr_per_method:
            out += ["| Method | MRR |", "|---|---|"]
            out += [f"| {m} | {v:.3f} |" for m, v in self.mrr_per_method.items()]
        if self.pearson_results:
            if out:
                out.append("")
            out += ["| x | y | rho |", "|---|---|---|"]
            out += [f"| {x} | {y} | {r:.4f} |" for x, y, r in self.pearson_results]
        if self.notes:
            out += ["", self.notes]
        return "\n".join(out) + "\n"


# -- loading -------------------------------------------------------------


def _parse_score(cell: str, where: str) -> float | None:
    cell = cell.strip()
    if cell == "":
        return None
    try:
        v = float(cell)
    except ValueError as exc:
        raise AnalysisError(f"{where}: not a number: {cell!r}") from exc
    if not math.isfinite(v):
        raise AnalysisError(f"{where}: non-finite score {cell!r}")
    return v


def parse_score_table(lines: Iterable[str], higher_is_better: bool = True) -> ScoreTable:
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise AnalysisError("empty score table") from None
    if header[:3] != ["dataset", "n", "p"]:
        raise AnalysisError("score table header must start with dataset,n,p")
    methods = tuple(header[3:])
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise AnalysisError(f"line {lineno}: expected {len(header)} cells, got {len(rec)}")
        try:
            n, p = int(rec[1]), int(rec[2])
        except ValueError as exc:
            raise AnalysisError(f"line {lineno}: n and p must be integers") from exc
        scores = {m: _parse_score(c, f"line {lineno}, {m}") for m, c in zip(methods, rec[3:])}
        rows.append(ScoreRow(rec[0].strip(), n, p, scores))
    return ScoreTable(methods, tuple(rows), higher_is_better)


def load_score_table(path: str | Path, higher_is_better: bool = True) -> ScoreTable:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return parse_score_table(fh, higher_is_better)


def load_points(path: str | Path) -> tuple[list[float], list[float]]:
    """Two-column ``x,y`` CSV."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["x", "y"]:
            raise AnalysisError("points file header must be x,y")
        xs, ys = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                xs.append(float(rec[0]))
                ys.append(float(rec[1]))
            except (ValueError, IndexError) as exc:
                raise AnalysisError(f"line {lineno}: bad point {rec!r}") from exc
    return xs, ys


def bundled(name: str) -> Path:
    """Path to one of the packaged CSVs (``classification_scores.csv`` etc.)."""
    ref = resources.files("agentfe") / "data" / name
    if not ref.is_file():
        raise AnalysisError(f"no bundled data file {name!r}")
    return Path(str(ref))


# -- MRR -----------------------------------------------------------------


def row_ranks(scores: Sequence[float], higher_is_better: bool, tie_rule: str = "min-rank") -> list[float]:
    if tie_rule not in TIE_RULES:
        raise AnalysisError(f"unknown tie rule {tie_rule!r}")
    out = []
    for v in scores:
        better = sum(1 for w in scores if (w > v if higher_is_better else w < v))
        if tie_rule == "min-rank":
            out.append(better + 1.0)
        else:
            tied = sum(1 for w in scores if w == v)
            out.append(better + (tied + 1) / 2)
    return out


def mrr(table: ScoreTable, tie_rule: str = "min-rank", missing: str = "exclude") -> dict[str, float]:
    """Mean reciprocal rank per method.

    ``missing="exclude"`` averages only over rows where the method has a score;
    ``"zero"`` counts an absent score as reciprocal rank 0 on that row.
    """
    if missing not in MISSING_RULES:
        raise AnalysisError(f"unknown missing rule {missing!r}")
    if not table.rows:
        raise AnalysisError("empty score table")
    acc: dict[str, list[float]] = {m: [] for m in table.methods}
    for row in table.rows:
        present = [m for m in table.methods if row.scores.get(m) is not None]
        if not present:
            raise AnalysisError(f"dataset {row.dataset!r} has no scores")
        ranks = row_ranks([row.scores[m] for m in present], table.higher_is_better, tie_rule)
        rank_of = dict(zip(present, ranks))
        for m in table.methods:
            if m in rank_of:
                acc[m].append(1.0 / rank_of[m])
            elif missing == "zero":
                acc[m].append(0.0)
    return {m: (sum(v) / len(v) if v else float("nan")) for m, v in acc.items()}


# -- Pearson -------------------------------------------------------------


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise AnalysisError("pearson needs two equal-length sequences")
    if x.size < 2:
        raise AnalysisError("pearson needs at least two points")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise AnalysisError("pearson inputs must be finite")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(np.mean(dx * dx)), math.sqrt(np.mean(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise AnalysisError("pearson is undefined for a zero-variance input")
    r = float(np.mean(dx * dy) / (sx * sy))
    return max(-1.0, min(1.0, r))


def log_values(values: Sequence[float]) -> list[float]:
    if any(v <= 0 for v in values):
        raise AnalysisError("log transform needs strictly positive values")
    return [math.log(v) for v in values]


def mrr_report(table: ScoreTable, tie_rule: str = "min-rank", missing: str = "exclude") -> AnalysisReport:
    direction = "higher" if table.higher_is_better else "lower"
    return AnalysisReport(
        mrr_per_method=mrr(table, tie_rule, missing),
        notes=f"{len(table.rows)} datasets, {direction} scores rank first, ties: {tie_rule}, "
              f"absent scores: {missing}.",
    )


def pearson_report(xs: Sequence[float], ys: Sequence[float], log_x: bool = False,
                   x_label: str = "x", y_label: str = "y") -> AnalysisReport:
    if log_x:
        xs, x_label = log_values(xs), f"log({x_label})"
    return AnalysisReport(pearson_results=[(x_label, y_label, pearson(xs, ys))],
                          notes=f"{len(ys)} points.")


__all__ = [
    "AnalysisError", "AnalysisReport", "MISSING_RULES", "ScoreRow", "ScoreTable", "TIE_RULES",
    "bundled", "load_points", "load_score_table", "log_values", "mrr", "mrr_report",
    "parse_score_table", "pearson", "pearson_report", "row_ranks",
]
