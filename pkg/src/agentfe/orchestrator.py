"""The iteration loop: seed raw features, then Scientist -> Extractor -> Tester.

Seeds for every component derive from ``config.seed`` with
:func:`agentfe.rng.derive_seed` (SHA-256 of "seed:component:iteration").
The fold plan is drawn once per run so metrics are comparable across
iterations.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

from .agents import (
    EXPLORATORY,
    AgentBackend,
    BackendError,
    FocusArea,
    PrunePolicy,
    RemoteBackend,
    ScratchPad,
    Transcript,
    read_transcript,
    replay,
    run_extractor,
    run_scientist,
    run_tester,
    scripted_backend,
)
from .agents.tools import KnowledgeSource
from .dataset import CATEGORICAL, NUMERIC, Dataset, kfold_split, top_counts
from .dsl import CatFlag, ColumnRef, Transformation
from .knowledge import KnowledgeBase, WebSearchStub, load_corpus
from .learner import LearnerParams, Metric, metric_for
from .pools import (FeaturePool, PoolError, TestPool, append_features, persist, prune, restore,
                    trajectory)
from .report import emit_report, emit_trajectory
from .rng import derive_seed

MAX_SEED_CATEGORIES = 12
ROLES = ("scientist", "extractor", "tester")


class RunError(RuntimeError):
    pass


class RunAborted(RunError):
    def __init__(self, message: str, run_dir: Path | None):
        super().__init__(message)
        self.run_dir = run_dir


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"  # scripted | remote
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str | None = "AGENTFE_API_KEY"
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 0.5

    def __post_init__(self):
        if self.kind not in ("scripted", "remote"):
            raise RunError(f"backend kind must be scripted or remote, got {self.kind!r}")
        if self.kind == "remote" and not (self.endpoint and self.model):
            raise RunError("a remote backend needs an endpoint and a model name")


@dataclass(frozen=True)
class RunConfig:
    iterations: int = 10
    seed: int = 0
    learner: LearnerParams | None = None  # None: defaults with the loss matching the task
    folds: int = 5
    flood_target: int = 8
    prune_threshold: float = 0.95
    importance_floor: float = 0.001
    noise_sigma: float = 0.01
    metric: str = "auto"  # auto | accuracy | nrmse
    nrmse_normalizer: str = "std"
    backend: BackendConfig = BackendConfig()
    knowledge: Mapping[str, str] = field(
        default_factory=lambda: {"scientist": "web", "extractor": "corpus", "tester": "corpus"})
    corpus_path: str | None = None
    budgets: Mapping[str, int] = field(default_factory=dict)
    prompt_overrides: Mapping[str, str] = field(default_factory=dict)
    history_limit: int | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise RunError("iterations must be >= 1")
        if self.folds < 2:
            raise RunError("folds must be >= 2")
        if self.flood_target < 1:
            raise RunError("flood_target must be >= 1")
        if not 0 < self.prune_threshold <= 1:
            raise RunError("prune_threshold must be in (0, 1]")
        for role, src in self.knowledge.items():
            if role not in ROLES or src not in ("corpus", "web", "none"):
                raise RunError(f"bad knowledge source {role}={src}")

    def budget(self, role: str) -> int:
        defaults = {"scientist": 12, "extractor": 4 * self.flood_target + 8, "tester": 12}
        return int(self.budgets.get(role, defaults[role]))

    def resolve_metric(self, dataset: Dataset) -> Metric:
        name = self.metric
        if name == "auto":
            name = "accuracy" if dataset.task == "classification" else "nrmse"
        return metric_for(name, self.nrmse_normalizer)

    def resolve_learner(self, dataset: Dataset) -> LearnerParams:
        loss = "logistic" if dataset.task == "classification" else "squared"
        if self.learner is None:
            return LearnerParams(loss=loss, seed=self.seed)
        if self.learner.loss != loss:
            raise RunError(f"{dataset.task} needs {loss} loss, config says {self.learner.loss}")
        return self.learner

    def to_dict(self) -> dict:
        d = asdict(self)
        d["knowledge"] = dict(self.knowledge)
        d["budgets"] = {r: self.budget(r) for r in ROLES}
        d["prompt_overrides"] = dict(self.prompt_overrides)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        d = dict(d)
        if d.get("learner") is not None:
            d["learner"] = LearnerParams(**d["learner"])
        if d.get("backend") is not None:
            d["backend"] = BackendConfig(**d["backend"])
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class RunResult:
    best_iteration: int
    best_metric: float
    best_active_features: list[Transformation]
    trajectory: list[tuple[int, float, int]]
    pool: FeaturePool
    testpool: TestPool
    metric: Metric
    config: RunConfig
    dataset_name: str
    run_dir: Path | None = None

    @property
    def transcript_path(self) -> Path | None:
        return self.run_dir / "transcript.jsonl" if self.run_dir else None


def select_best(testpool: TestPool, higher_is_better: bool) -> tuple[int, float]:
    """Optimum under the metric direction; ties go to the earliest iteration."""
    if not testpool.records:
        raise RunError("cannot select a best iteration from an empty test pool")
    best = testpool.records[0]
    for r in testpool.records[1:]:
        if (r.metric_mean > best.metric_mean) if higher_is_better else (r.metric_mean < best.metric_mean):
            best = r
    return best.iteration, best.metric_mean


def _identifier(text: str) -> str:
    out = re.sub(r"[^A-Za-z0-9_]", "_", text).strip("_") or "col"
    return out if not out[0].isdigit() else "c_" + out


def seed_transformations(dataset: Dataset) -> list[Transformation]:
    """Identity features for numeric columns plus flags for the top categories."""
    out, taken = [], set()

    def unique(name):
        base, k = name, 2
        while name in taken:
            name, k = f"{base}_{k}", k + 1
        taken.add(name)
        return name

    for col in dataset.columns:
        if col.kind == NUMERIC:
            out.append(Transformation(unique(_identifier(col.name)), ColumnRef(col.name),
                                      "raw attribute", f"the raw value of {col.name}", 0))
        elif col.kind == CATEGORICAL:
            for token, _ in top_counts(col.values, MAX_SEED_CATEGORIES):
                out.append(Transformation(unique(_identifier(f"{col.name}_is_{token}")),
                                          CatFlag(col.name, token), "raw categorical attribute",
                                          f"1 if {col.name} is {token!r} else 0", 0))
    return out


def _make_backend(cfg: BackendConfig, role: str, params: dict, seed: int) -> AgentBackend:
    if cfg.kind == "scripted":
        return scripted_backend(role, params, seed)
    return RemoteBackend(cfg.endpoint, cfg.model, cfg.api_key_env, cfg.timeout, cfg.retries, cfg.backoff)


def _knowledge_sources(config: RunConfig, text_backend) -> dict[str, KnowledgeSource | None]:
    corpus = load_corpus(config.corpus_path) if config.corpus_path else None
    out = {}
    for role in ROLES:
        src = config.knowledge.get(role, "none")
        if src == "corpus" and corpus is not None:
            out[role] = KnowledgeBase(corpus, text_backend)
        elif src == "web":
            out[role] = KnowledgeBase(WebSearchStub(), text_backend)
        else:
            out[role] = None
    return out


class _Loop:
    def __init__(self, config: RunConfig, dataset: Dataset, out_dir: Path | None,
                 backends: Mapping[str, AgentBackend] | None,
                 knowledge: Mapping[str, KnowledgeSource | None] | None):
        self.config = config
        self.dataset = dataset
        self.out_dir = out_dir
        self.metric = config.resolve_metric(dataset)
        self.params = config.resolve_learner(dataset)
        self.policy = PrunePolicy(config.prune_threshold, config.importance_floor, config.noise_sigma)
        self.foldplan = kfold_split(dataset.n_rows, config.folds, derive_seed(config.seed, "folds"))
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
        self.transcript = Transcript(out_dir / "transcript.jsonl" if out_dir else None)
        policy_params = {"flood_target": config.flood_target, "prune_threshold": config.prune_threshold,
                         "importance_floor": config.importance_floor}
        self.backends = dict(backends or {})
        for role in ROLES:
            if role not in self.backends:
                self.backends[role] = _make_backend(config.backend, role, policy_params,
                                                    derive_seed(config.seed, f"backend:{role}"))
        if knowledge is None:
            text_backend = self.backends["scientist"] if config.backend.kind == "remote" else None
            knowledge = _knowledge_sources(config, text_backend)
        self.knowledge = {r: knowledge.get(r) for r in ROLES}
        self.pads = {r: ScratchPad(r) for r in ROLES}
        self.pool = FeaturePool()
        self.testpool = TestPool()

    # all pool writes go through here so the transcript can replay them
    def commit_append(self, iteration: int, ts: list[Transformation]) -> None:
        append_features(self.pool, ts, iteration, self.dataset)
        self.transcript.log(iteration, "orchestrator", "commit", action="append", payload={
            "features": [{"name": t.name, "source_text": t.source_text,
                          "justification": t.justification, "explanation": t.explanation}
                         for t in ts]})

    def commit_prune(self, iteration: int, reasons: dict[str, str]) -> None:
        prune(self.pool, list(reasons), iteration, reasons)
        self.transcript.log(iteration, "orchestrator", "commit", action="prune",
                            payload={"names": list(reasons), "reasons": dict(reasons)})

    def test(self, iteration: int, focus: FocusArea) -> None:
        outcome = run_tester(
            self.pool.snapshot(), self.dataset, self.params, self.foldplan, self.backends["tester"],
            self.knowledge["tester"], self.config.budget("tester"), self.policy,
            metric=self.metric, iteration=iteration,
            seed=derive_seed(self.config.seed, "tester", iteration), focus=focus,
            pad=self.pads["tester"], transcript=self.transcript,
            prompt_overrides=self.config.prompt_overrides, history_limit=self.config.history_limit)
        if outcome.reasons:
            self.commit_prune(iteration, outcome.reasons)
        if outcome.record.active_count_after != len(self.pool.active()):
            raise PoolError("test record disagrees with the pool's active count")
        self.testpool.add(outcome.record)
        self.pool.check_accounting()

    def persist(self) -> None:
        if self.out_dir is None:
            return
        persist(self.pool, self.out_dir / "feature_pool.json")
        persist(self.testpool, self.out_dir / "test_pool.json")
        for role, pad in self.pads.items():
            (self.out_dir / f"notes_{role}.jsonl").write_text(pad.dumps(), encoding="utf-8")

    def run(self) -> RunResult:
        cfg = self.config
        if self.out_dir is not None:
            (self.out_dir / "config.json").write_text(
                json.dumps({"dataset": self.dataset.name, "config": cfg.to_dict()},
                           indent=2, sort_keys=True) + "\n", encoding="utf-8")
        seeds = seed_transformations(self.dataset)
        if not seeds:
            raise RunError("dataset has no columns to seed the pool with")
        self.commit_append(0, seeds)
        self.test(0, FocusArea("raw attribute baseline", EXPLORATORY, 0))
        self.persist()
        for i in range(1, cfg.iterations + 1):
            focus = run_scientist(
                self.testpool, self.pool.snapshot(), self.dataset, self.backends["scientist"],
                self.knowledge["scientist"], cfg.budget("scientist"), i, cfg.iterations,
                self.pads["scientist"], self.transcript, cfg.prompt_overrides, cfg.history_limit)
            self.transcript.log(i, "orchestrator", "focus", text=focus.text, scope=focus.scope)
            new = run_extractor(
                focus, self.dataset, self.pool.snapshot(), self.backends["extractor"],
                self.knowledge["extractor"], cfg.budget("extractor"), cfg.flood_target, i,
                self.pads["extractor"], self.transcript, cfg.prompt_overrides, cfg.history_limit)
            if not new:
                self.transcript.log(i, "orchestrator", "skip", reason="no new features")
                self.persist()
                continue
            self.commit_append(i, new)
            self.test(i, focus)
            self.persist()
        return self.result()

    def result(self) -> RunResult:
        best_iter, best_metric = select_best(self.testpool, self.metric.higher_is_better)
        best = [r.transformation for r in self.pool.active_at(best_iter)]
        return RunResult(best_iter, best_metric, best, trajectory(self.testpool), self.pool,
                         self.testpool, self.metric, self.config, self.dataset.name, self.out_dir)


def run(config: RunConfig, dataset: Dataset, out_dir: str | Path | None = None,
        backends: Mapping[str, AgentBackend] | None = None,
        knowledge: Mapping[str, KnowledgeSource | None] | None = None) -> RunResult:
    """Run the loop; with ``out_dir`` also write the run directory and report."""
    out = Path(out_dir) if out_dir is not None else None
    loop = _Loop(config, dataset, out, backends, knowledge)
    try:
        result = loop.run()
    except BackendError as exc:
        loop.persist()
        raise RunAborted(f"backend failure: {exc}", out) from exc
    if out is not None:
        emit_trajectory(result, out / "trajectory.csv")
        emit_report(result, out / "report.md")
    return result


def replay_pool(run_dir: str | Path, dataset: Dataset | None = None) -> FeaturePool:
    return replay(read_transcript(Path(run_dir) / "transcript.jsonl"), dataset)


def load_result(run_dir: str | Path) -> RunResult:
    """Rebuild a RunResult from a finished run directory (no dataset needed)."""
    run_dir = Path(run_dir)
    try:
        meta = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
        pool = restore(run_dir / "feature_pool.json")
        testpool = restore(run_dir / "test_pool.json")
    except FileNotFoundError as exc:
        raise RunError(f"{run_dir} is not a run directory: {exc.filename} missing") from exc
    if not isinstance(pool, FeaturePool) or not isinstance(testpool, TestPool):
        raise RunError(f"{run_dir}: pool files are swapped or corrupt")
    config = RunConfig.from_dict(meta["config"])
    if not testpool.records:
        raise RunError(f"{run_dir}: the test pool is empty")
    metric = metric_for(testpool.records[0].metric_name, config.nrmse_normalizer)
    best_iter, best_metric = select_best(testpool, metric.higher_is_better)
    best = [r.transformation for r in pool.active_at(best_iter)]
    return RunResult(best_iter, best_metric, best, trajectory(testpool), pool, testpool, metric,
                     config, meta["dataset"], run_dir)
