"""Tool registries for the three roles.

Tools are the only channel between a backend and the run state. Reads go
against snapshots; the two mutating tools (``append_new_attribute`` and
``attribute_pruning_tool``) only stage changes, which the orchestrator
commits after the episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from ..dataset import NUMERIC, Dataset, describe, top_counts
from ..dsl import DslError, DslSyntaxError, Transformation, evaluate, free_columns, is_identifier, parse, validate
from ..learner import EvalReport, LearnerParams, Metric, cross_validate
from ..pools import FeaturePool, TestPool, feature_matrix
from .messages import ScratchPad, ToolFailure, ToolRegistry, ToolSpec


class KnowledgeSource(Protocol):
    def ask(self, query: str) -> dict:
        ...


# -- shared --------------------------------------------------------------


def _finite_or_none(x: float) -> float | None:
    return float(x) if np.isfinite(x) else None


def vector_summary(values: np.ndarray) -> dict:
    present = values[~np.isnan(values)]
    out = {"count": int(len(present)), "missing_rate": 1.0 - len(present) / len(values)}
    if len(present):
        out.update(mean=float(present.mean()), std=float(present.std()),
                   min=float(present.min()), max=float(present.max()),
                   median=float(np.median(present)))
    return out


class TableTool:
    """Read-only view of the raw table: head, describe, value_counts, evaluate_dsl."""

    spec = ToolSpec(
        "generic_pandas_tool",
        "Read-only table access. op is one of head (k rows), describe (per-column "
        "statistics), value_counts (column), evaluate_dsl (expression): summary "
        "statistics of a candidate feature written in the feature DSL.",
        {"op": ("string", True), "k": ("integer", False), "column": ("string", False),
         "expression": ("string", False)},
    )

    def __init__(self, dataset: Dataset):
        self.dataset = dataset

    def __call__(self, op: str, k: int = 5, column: str | None = None,
                 expression: str | None = None) -> Any:
        ds = self.dataset
        if op == "head":
            rows = []
            for i in range(min(max(k, 0), ds.n_rows)):
                row = {}
                for c in ds.columns:
                    v = c.values[i]
                    row[c.name] = None if (v is None or (c.kind == NUMERIC and np.isnan(v))) else (
                        float(v) if c.kind == NUMERIC else v)
                tv = ds.target.values[i]
                row[ds.target.name] = float(tv) if ds.target.kind == NUMERIC else tv
                rows.append(row)
            return {"rows": rows}
        if op == "describe":
            summary = describe(ds).as_dict()
            for entry in summary["columns"]:
                if entry["kind"] == NUMERIC:
                    col = ds.column(entry["name"]).values
                    present = col[~np.isnan(col)]
                    entry["median"] = float(np.median(present)) if len(present) else None
            summary["task"] = ds.task
            return summary
        if op == "value_counts":
            if column is None or not ds.has_column(column):
                raise ToolFailure(f"value_counts needs an existing column, got {column!r}")
            col = ds.column(column)
            if col.kind == NUMERIC:
                cells = [None if np.isnan(v) else repr(float(v)) for v in col.values]
            else:
                cells = list(col.values)
            return {"column": column, "counts": [list(t) for t in top_counts(cells, 50)]}
        if op == "evaluate_dsl":
            if not expression:
                raise ToolFailure("evaluate_dsl needs an expression")
            try:
                expr = validate(parse(expression), ds)
            except DslError as exc:
                raise ToolFailure(str(exc)) from None
            values = evaluate(expr, ds)
            out = vector_summary(values)
            if ds.target.kind == NUMERIC:
                y = np.asarray(ds.target.values, float)
                ok = ~np.isnan(values)
                if ok.sum() >= 2 and values[ok].std() > 0:
                    out["pearson_with_target"] = float(np.corrcoef(values[ok], y[ok])[0, 1])
            return out
        raise ToolFailure(f"unknown op {op!r}; use head, describe, value_counts or evaluate_dsl")


def _note_tool(pad: ScratchPad, iteration: int):
    spec = ToolSpec("take_note_tool", "Append a note to your scratch pad; notes persist across iterations.",
                    {"note": ("string", True)})

    def handler(note: str):
        n = pad.add(iteration, note)
        return {"saved": True, "seq": n.seq}

    return spec, handler


def _search_tool(name: str, knowledge: KnowledgeSource | None):
    spec = ToolSpec(name, "Ask the knowledge source a question; returns a cited summary.",
                    {"query": ("string", True)})

    def handler(query: str):
        if knowledge is None:
            raise ToolFailure("no knowledge source is configured for this agent")
        try:
            return knowledge.ask(query)
        except ValueError as exc:
            raise ToolFailure(str(exc)) from None

    return spec, handler


def _record_view(record) -> dict:
    t = record.transformation
    return {
        "name": t.name, "source_text": t.source_text, "justification": t.justification,
        "explanation": t.explanation, "created_iter": t.created_iter, "status": record.status,
        "pruned_iter": record.pruned_iter, "prune_reason": record.prune_reason,
        "free_columns": sorted(free_columns(t.expr)),
    }


def _lookup_tool(pool: FeaturePool):
    spec = ToolSpec("attribute_lookup_tool",
                    "Definition, justification, explanation and status of one attribute.",
                    {"name": ("string", True)})

    def handler(name: str):
        record = pool.latest_record(name)
        if record is None:
            raise ToolFailure(f"no attribute named {name!r}")
        return _record_view(record)

    return spec, handler


# -- scientist -----------------------------------------------------------


def scientist_tools(dataset: Dataset, pool: FeaturePool, testpool: TestPool, pad: ScratchPad,
                    knowledge: KnowledgeSource | None, iteration: int) -> ToolRegistry:
    reg = ToolRegistry()
    reg.register(*_search_tool("search_tool", knowledge))
    reg.register(*_note_tool(pad, iteration))
    reg.register(ToolSpec("read_notebook_tool", "Read every note in your scratch pad.", {}),
                 lambda: {"notes": pad.as_list()})
    reg.register(TableTool.spec, TableTool(dataset))

    def read_tests(last: int = 0):
        records = testpool.records[-last:] if last > 0 else testpool.records
        return {"records": [
            {"iteration": r.iteration, "metric_name": r.metric_name, "metric_mean": r.metric_mean,
             "metric_std": r.metric_std, "active_count_after": r.active_count_after,
             "pruned_names": list(r.pruned_names), "focus_text": r.focus_text,
             "focus_scope": r.focus_scope, "assessment_markdown": r.assessment_markdown}
            for r in records
        ]}

    reg.register(ToolSpec("read_test_pool_tool",
                          "Metrics, focus history and Feature Assessments of earlier iterations "
                          "(last = how many of the most recent records; 0 for all).",
                          {"last": ("integer", False)}), read_tests)
    reg.register(*_lookup_tool(pool))
    return reg


# -- extractor -----------------------------------------------------------


@dataclass
class ExtractionSession:
    dataset: Dataset
    pool: FeaturePool
    iteration: int
    cap: int
    accepted: list[Transformation] = field(default_factory=list)

    @property
    def full(self) -> bool:
        return len(self.accepted) >= self.cap

    def append(self, name: str, dsl_source: str, justification: str, explanation: str) -> dict:
        if self.full:
            raise ToolFailure(f"attribute limit for this round reached ({self.cap})")
        if not is_identifier(name):
            raise ToolFailure(f"attribute name {name!r} is not a valid identifier")
        active = {r.name: r for r in self.pool.active()}
        if name in active or any(t.name == name for t in self.accepted):
            raise ToolFailure(f"duplicate name: an active attribute is already called {name!r}")
        if not justification.strip() or not explanation.strip():
            raise ToolFailure("justification and explanation must both be non-empty")
        try:
            expr = parse(dsl_source)
        except DslSyntaxError as exc:
            raise ToolFailure(f"syntax error: {exc}") from None
        except DslError as exc:
            raise ToolFailure(str(exc)) from None
        try:
            validate(expr, self.dataset)
        except DslError as exc:
            raise ToolFailure(str(exc)) from None
        t = Transformation(name, expr, justification, explanation, self.iteration)
        dup = [r.name for r in active.values() if r.transformation.source_text == t.source_text]
        dup += [a.name for a in self.accepted if a.source_text == t.source_text]
        if dup:
            raise ToolFailure(f"duplicate expression: {t.source_text} already exists as {dup[0]!r}")
        self.accepted.append(t)
        return {"accepted": name, "source_text": t.source_text,
                "summary": vector_summary(evaluate(expr, self.dataset))}


def extractor_tools(session: ExtractionSession, pad: ScratchPad,
                    knowledge: KnowledgeSource | None) -> ToolRegistry:
    reg = ToolRegistry()
    reg.register(TableTool.spec, TableTool(session.dataset))
    reg.register(ToolSpec(
        "append_new_attribute",
        "Add one attribute. dsl_source is an expression over raw columns, e.g. "
        "'age * weight', 'log1p(income)', 'color == \"red\"', 'if(age > 50, 1, 0)'.",
        {"name": ("string", True), "dsl_source": ("string", True),
         "justification": ("string", True), "explanation": ("string", True)},
    ), session.append)

    def list_known():
        proposed = sorted({r.transformation.source_text for r in session.pool.records}
                          | {t.source_text for t in session.accepted})
        return {
            "active": [{"name": r.name, "source_text": r.transformation.source_text,
                        "free_columns": sorted(free_columns(r.transformation.expr))}
                       for r in session.pool.active()]
                      + [{"name": t.name, "source_text": t.source_text,
                          "free_columns": sorted(free_columns(t.expr))} for t in session.accepted],
            "ever_proposed": proposed,
        }

    reg.register(ToolSpec("list_known_attributes_tool",
                          "Active attributes and every expression proposed so far.", {}), list_known)
    reg.register(*_search_tool("search_in_literature_tool", knowledge))
    reg.register(*_note_tool(pad, session.iteration))
    return reg


# -- tester --------------------------------------------------------------


@dataclass
class TestingSession:
    __test__ = False

    dataset: Dataset
    pool: FeaturePool
    iteration: int
    report: EvalReport
    params: LearnerParams
    metric: Metric
    foldplan: Any
    staged: dict[str, str] = field(default_factory=dict)  # name -> reason, in call order

    def summary(self) -> dict:
        r = self.report
        order = {rec.name: i for i, rec in enumerate(self.pool.active())}
        created = {rec.name: rec.created_iter for rec in self.pool.active()}
        return {
            "metric_name": r.metric_name, "higher_is_better": r.higher_is_better,
            "mean": r.mean, "std": r.std, "per_fold": list(r.per_fold_metrics),
            "features": [
                {"name": n, "order": order[n], "created_iter": created[n],
                 "gain": r.gain_importance[n], "permutation": r.permutation_importance.get(n, 0.0)}
                for n in r.feature_names
            ],
            "flags": list(r.flags),
        }

    def correlated_pairs(self, threshold: float) -> list[dict]:
        corr = self.report.correlation
        names = self.report.feature_names
        pairs = []
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                r = corr[i, j]
                if np.isfinite(r) and abs(r) > threshold:
                    pairs.append({"a": names[i], "b": names[j], "r": float(r)})
        pairs.sort(key=lambda p: (-abs(p["r"]), p["a"], p["b"]))
        return pairs

    def experiment(self, experiment: str, threshold: float = 0.95, names: list | None = None):
        if experiment == "summary":
            return self.summary()
        if experiment == "correlated_pairs":
            return {"threshold": threshold, "pairs": self.correlated_pairs(threshold)}
        if experiment == "cv_subset":
            if not names:
                raise ToolFailure("cv_subset needs a non-empty list of names")
            active = {r.name: r for r in self.pool.active()}
            unknown = [n for n in names if n not in active]
            if unknown:
                raise ToolFailure(f"unknown attributes: {unknown}")
            X, cols = feature_matrix([active[n] for n in names], self.dataset)
            rep = cross_validate(X, self.dataset.target.values, self.foldplan, self.params,
                                 self.metric, cols)
            return {"names": cols, "mean": rep.mean, "std": rep.std,
                    "per_fold": list(rep.per_fold_metrics)}
        raise ToolFailure(f"unknown experiment {experiment!r}; use summary, correlated_pairs or cv_subset")

    def prune(self, names: list, reasons: dict | None = None) -> dict:
        reasons = reasons or {}
        active = set(self.pool.active_names())
        bad = [n for n in names if not isinstance(n, str) or n not in active]
        if bad:
            raise ToolFailure(f"cannot prune unknown or inactive attributes: {bad}")
        already = [n for n in names if n in self.staged]
        if already:
            raise ToolFailure(f"already pruned in this round: {already}")
        remaining = active - set(self.staged) - set(names)
        if not remaining:
            raise ToolFailure("at least one attribute must stay active")
        for n in dict.fromkeys(names):
            reason = reasons.get(n, "")
            self.staged[n] = reason if isinstance(reason, str) and reason.strip() else "pruned by tester"
        return {"pruned": list(dict.fromkeys(names)), "remaining": len(remaining)}


def tester_tools(session: TestingSession, pad: ScratchPad,
                 knowledge: KnowledgeSource | None) -> ToolRegistry:
    reg = ToolRegistry()
    reg.register(*_search_tool("search_in_literature_tool", knowledge))
    reg.register(ToolSpec(
        "generic_python_executor_tool",
        "Run a prepared experiment on the current attribute set: summary (cross-validated "
        "metric with gain and permutation importance), correlated_pairs (|Pearson| above "
        "threshold), cv_subset (cross-validate a subset of names).",
        {"experiment": ("string", True), "threshold": ("number", False), "names": ("array", False)},
    ), session.experiment)
    reg.register(*_note_tool(pad, session.iteration))
    reg.register(*_lookup_tool(session.pool))
    reg.register(ToolSpec(
        "attribute_pruning_tool",
        "Prune attributes from the pool; give a reason per name.",
        {"names": ("array", True), "reasons": ("object", False)},
    ), session.prune)
    return reg
