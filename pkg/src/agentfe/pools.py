"""Feature Pool and Test Pool: the two stores carried across iterations.

Records are append-only. Pruning flips a record's status and stamps the
iteration, so the full history stays readable by later agents and the
active set at any past iteration can be rebuilt from the audit trail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .dataset import Dataset
from .dsl import DslError, Transformation, evaluate, parse, validate

SCHEMA_VERSION = 1
ACTIVE = "active"
PRUNED = "pruned"


class PoolError(ValueError):
    pass


class PoolFileError(PoolError):
    pass


@dataclass(frozen=True)
class FeatureRecord:
    transformation: Transformation
    status: str = ACTIVE
    pruned_iter: int | None = None
    prune_reason: str | None = None

    def __post_init__(self):
        if (self.status == PRUNED) != (self.pruned_iter is not None):
            raise PoolError("pruned records must carry pruned_iter, active ones must not")
        if self.pruned_iter is not None and self.pruned_iter < self.created_iter:
            raise PoolError("pruned_iter precedes created_iter")

    @property
    def name(self) -> str:
        return self.transformation.name

    @property
    def created_iter(self) -> int:
        return self.transformation.created_iter

    @property
    def is_active(self) -> bool:
        return self.status == ACTIVE

    def active_at(self, iteration: int) -> bool:
        """Whether the record was active once ``iteration`` finished (including its prunes)."""
        if self.created_iter > iteration:
            return False
        return self.pruned_iter is None or self.pruned_iter > iteration


@dataclass
class FeaturePool:
    records: list[FeatureRecord] = field(default_factory=list)

    def active(self) -> list[FeatureRecord]:
        return [r for r in self.records if r.is_active]

    def active_names(self) -> list[str]:
        return [r.name for r in self.records if r.is_active]

    def active_record(self, name: str) -> FeatureRecord:
        for r in self.records:
            if r.is_active and r.name == name:
                return r
        raise PoolError(f"no active feature named {name!r}")

    def latest_record(self, name: str) -> FeatureRecord | None:
        for r in reversed(self.records):
            if r.name == name:
                return r
        return None

    def ever_proposed(self, source_text: str) -> bool:
        return any(r.transformation.source_text == source_text for r in self.records)

    def counts(self) -> tuple[int, int, int]:
        """(created, pruned, active)."""
        created = len(self.records)
        pruned = sum(1 for r in self.records if r.status == PRUNED)
        return created, pruned, created - pruned

    def check_accounting(self) -> None:
        created, pruned, active = self.counts()
        if active != len(self.active()):
            raise PoolError("audit trail inconsistent: created - pruned != active")
        names = self.active_names()
        if len(set(names)) != len(names):
            raise PoolError("duplicate active feature names")

    def active_at(self, iteration: int) -> list[FeatureRecord]:
        return [r for r in self.records if r.active_at(iteration)]

    def snapshot(self) -> "FeaturePool":
        return FeaturePool(list(self.records))

    def __len__(self) -> int:
        return len(self.records)


def append_features(
    pool: FeaturePool,
    transformations: Iterable[Transformation],
    iteration: int,
    dataset: Dataset | None = None,
) -> FeaturePool:
    """Append as active records; all-or-nothing on validation failure."""
    new = []
    taken = set(pool.active_names())
    for t in transformations:
        if t.name in taken:
            raise PoolError(f"an active feature is already named {t.name!r}")
        if dataset is not None:
            try:
                validate(t.expr, dataset)
            except DslError as exc:
                raise PoolError(f"invalid expression for {t.name!r}: {exc}") from exc
        if t.created_iter != iteration:
            t = replace(t, created_iter=iteration)
        taken.add(t.name)
        new.append(FeatureRecord(t))
    pool.records.extend(new)
    pool.check_accounting()
    return pool


def prune(
    pool: FeaturePool,
    names: Iterable[str],
    iteration: int,
    reason_per_name: Mapping[str, str] | None = None,
) -> FeaturePool:
    names = list(dict.fromkeys(names))
    reasons = dict(reason_per_name or {})
    index = {r.name: i for i, r in enumerate(pool.records) if r.is_active}
    missing = [n for n in names if n not in index]
    if missing:
        raise PoolError(f"cannot prune unknown or already-pruned features: {missing}")
    for name in names:
        i = index[name]
        pool.records[i] = replace(
            pool.records[i], status=PRUNED, pruned_iter=iteration,
            prune_reason=reasons.get(name, "unspecified"),
        )
    pool.check_accounting()
    return pool


def feature_matrix(records: list[FeatureRecord], dataset: Dataset) -> tuple[np.ndarray, list[str]]:
    cols = [evaluate(r.transformation.expr, dataset) for r in records]
    X = np.column_stack(cols) if cols else np.empty((dataset.n_rows, 0))
    return X, [r.name for r in records]


def active_matrix(pool: FeaturePool, dataset: Dataset) -> tuple[np.ndarray, list[str]]:
    """X* = H(X): one column per active record, in record order."""
    return feature_matrix(pool.active(), dataset)


# -- test pool -----------------------------------------------------------


@dataclass(frozen=True)
class TestRecord:
    __test__ = False

    iteration: int
    metric_name: str
    metric_mean: float
    metric_std: float
    assessment_markdown: str
    pruned_names: tuple[str, ...]
    active_count_after: int
    focus_text: str
    focus_scope: str


@dataclass
class TestPool:
    __test__ = False

    records: list[TestRecord] = field(default_factory=list)

    def add(self, record: TestRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise PoolError("test records must have strictly increasing iterations")
        self.records.append(record)

    def latest(self) -> TestRecord | None:
        return self.records[-1] if self.records else None

    def __len__(self) -> int:
        return len(self.records)


def trajectory(testpool: TestPool) -> list[tuple[int, float, int]]:
    return [(r.iteration, r.metric_mean, r.active_count_after) for r in testpool.records]


# -- persistence ---------------------------------------------------------


def _feature_to_dict(r: FeatureRecord) -> dict:
    t = r.transformation
    return {
        "name": t.name,
        "source_text": t.source_text,
        "justification": t.justification,
        "explanation": t.explanation,
        "created_iter": t.created_iter,
        "status": r.status,
        "pruned_iter": r.pruned_iter,
        "prune_reason": r.prune_reason,
    }


def _feature_from_dict(d: dict) -> FeatureRecord:
    t = Transformation(d["name"], parse(d["source_text"]), d["justification"],
                       d["explanation"], int(d["created_iter"]))
    return FeatureRecord(t, d["status"], d["pruned_iter"], d["prune_reason"])


def _test_to_dict(r: TestRecord) -> dict:
    return {
        "iteration": r.iteration,
        "metric_name": r.metric_name,
        "metric_mean": r.metric_mean,
        "metric_std": r.metric_std,
        "pruned_names": list(r.pruned_names),
        "active_count_after": r.active_count_after,
        "focus_text": r.focus_text,
        "focus_scope": r.focus_scope,
        "assessment_markdown": r.assessment_markdown,
    }


def _test_from_dict(d: dict) -> TestRecord:
    return TestRecord(
        iteration=int(d["iteration"]),
        metric_name=d["metric_name"],
        metric_mean=float(d["metric_mean"]),
        metric_std=float(d["metric_std"]),
        assessment_markdown=d["assessment_markdown"],
        pruned_names=tuple(d["pruned_names"]),
        active_count_after=int(d["active_count_after"]),
        focus_text=d["focus_text"],
        focus_scope=d["focus_scope"],
    )


def dumps(pool: FeaturePool | TestPool) -> str:
    if isinstance(pool, FeaturePool):
        body = {"schema_version": SCHEMA_VERSION, "kind": "feature_pool",
                "records": [_feature_to_dict(r) for r in pool.records]}
    elif isinstance(pool, TestPool):
        body = {"schema_version": SCHEMA_VERSION, "kind": "test_pool",
                "records": [_test_to_dict(r) for r in pool.records]}
    else:
        raise TypeError(f"cannot persist {type(pool).__name__}")
    return json.dumps(body, indent=2, ensure_ascii=False) + "\n"


def loads(text: str) -> FeaturePool | TestPool:
    try:
        body = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PoolFileError(f"malformed pool file: {exc}") from exc
    if not isinstance(body, dict) or "schema_version" not in body:
        raise PoolFileError("pool file lacks a schema_version field")
    if body["schema_version"] != SCHEMA_VERSION:
        raise PoolFileError(
            f"pool file schema_version {body['schema_version']} is not supported "
            f"(expected {SCHEMA_VERSION})"
        )
    try:
        if body["kind"] == "feature_pool":
            pool = FeaturePool([_feature_from_dict(d) for d in body["records"]])
            pool.check_accounting()
            return pool
        if body["kind"] == "test_pool":
            tp = TestPool()
            for d in body["records"]:
                tp.add(_test_from_dict(d))
            return tp
    except (KeyError, TypeError, ValueError) as exc:
        raise PoolFileError(f"malformed pool record: {exc}") from exc
    raise PoolFileError(f"unknown pool kind {body.get('kind')!r}")


def persist(pool: FeaturePool | TestPool, path: str | Path) -> None:
    Path(path).write_text(dumps(pool), encoding="utf-8")


def restore(path: str | Path) -> FeaturePool | TestPool:
    return loads(Path(path).read_text(encoding="utf-8"))
