"""The three agent episodes: Scientist, Extractor, Tester."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from ..dataset import Dataset, FoldPlan
from ..dsl import Transformation
from ..learner import EvalReport, LearnerParams, Metric, full_report, noise_robustness
from ..pools import FeaturePool, TestPool, TestRecord, active_matrix, feature_matrix
from .assessment import build_assessment
from .backends import AgentBackend
from .messages import (
    EXPLORATORY,
    AgentError,
    ChatMessage,
    FocusArea,
    ScratchPad,
    ToolCall,
    ToolRegistry,
    parse_focus,
)
from .prompts import render_system_prompt
from .scripted import FALLBACK_FOCUS
from .tools import (
    ExtractionSession,
    KnowledgeSource,
    TestingSession,
    extractor_tools,
    scientist_tools,
    tester_tools,
)
from .transcript import Transcript


@dataclass
class EpisodeResult:
    final: str | None
    steps: int
    messages: list[ChatMessage] = field(default_factory=list)

    @property
    def exhausted(self) -> bool:
        return self.final is None


def _truncate(messages: list[ChatMessage], limit: int | None) -> list[ChatMessage]:
    """Opening message plus the newest ``limit`` messages, cut at an assistant turn."""
    if limit is None or len(messages) <= limit + 1:
        return messages
    tail = messages[-limit:]
    while tail and tail[0].role != "assistant":
        tail = tail[1:]
    return messages[:1] + tail


def run_episode(backend: AgentBackend, system: str, user: str, registry: ToolRegistry,
                budget: int, role: str, iteration: int, transcript: Transcript | None = None,
                stop: Callable[[], bool] | None = None, history_limit: int | None = None) -> EpisodeResult:
    if budget < 1:
        raise AgentError("step budget must be at least 1")
    log = transcript.log if transcript is not None else (lambda *a, **k: None)
    log(iteration, role, "system", content=system)
    log(iteration, role, "user", content=user)
    messages = [ChatMessage("user", user)]
    for step in range(budget):
        reply = backend.step(system, _truncate(messages, history_limit), registry.specs)
        calls = tuple(
            ToolCall(c.name, dict(c.arguments), c.call_id or f"{role}-{iteration}-{step}-{i}")
            for i, c in enumerate(reply.tool_calls)
        )
        log(iteration, role, "assistant", content=reply.content,
            tool_calls=[c.as_dict() for c in calls])
        if not calls:
            return EpisodeResult(reply.content, step + 1, messages)
        messages.append(ChatMessage("assistant", reply.content, calls))
        for c in calls:
            result, ok = registry.call(c)
            log(iteration, role, "tool", tool_call_id=c.call_id, name=c.name, ok=ok,
                content=json.loads(result))
            messages.append(ChatMessage("tool", result, tool_call_id=c.call_id))
        if stop is not None and stop():
            return EpisodeResult(None, step + 1, messages)
    return EpisodeResult(None, budget, messages)


# -- scientist -----------------------------------------------------------


def fallback_focus(iteration: int) -> FocusArea:
    return FocusArea(FALLBACK_FOCUS, EXPLORATORY, iteration)


def run_scientist(testpool: TestPool, featurepool: FeaturePool, dataset: Dataset,
                  backend: AgentBackend, knowledge: KnowledgeSource | None, budget: int,
                  iteration: int = 1, n_iterations: int | None = None,
                  pad: ScratchPad | None = None, transcript: Transcript | None = None,
                  prompt_overrides: Mapping | None = None,
                  history_limit: int | None = None) -> FocusArea:
    if budget < 1:
        raise AgentError("step budget must be at least 1")
    pad = pad if pad is not None else ScratchPad("scientist")
    registry = scientist_tools(dataset, featurepool, testpool, pad, knowledge, iteration)
    rounds = f" of {n_iterations}" if n_iterations else ""
    user = (f"Iteration: {iteration}{rounds}\n"
            "Determine the focus area for the next extraction round. End with a line "
            "'Focus: <directive>' and a line 'Scope: exploratory' or 'Scope: exploitive'.")
    system = render_system_prompt("scientist", dataset, prompt_overrides)
    result = run_episode(backend, system, user, registry, budget, "scientist", iteration,
                         transcript, history_limit=history_limit)
    focus = parse_focus(result.final, iteration) if result.final else None
    return focus or fallback_focus(iteration)


# -- extractor -----------------------------------------------------------


def run_extractor(focus: FocusArea, dataset: Dataset, featurepool: FeaturePool,
                  backend: AgentBackend, knowledge: KnowledgeSource | None, budget: int,
                  flood_target: int, iteration: int | None = None,
                  pad: ScratchPad | None = None, transcript: Transcript | None = None,
                  prompt_overrides: Mapping | None = None,
                  history_limit: int | None = None) -> list[Transformation]:
    """Accepted transformations (possibly none); at most 4 x flood_target."""
    if flood_target < 1:
        raise AgentError("flood_target must be at least 1")
    iteration = focus.iteration if iteration is None else iteration
    pad = pad if pad is not None else ScratchPad("extractor")
    session = ExtractionSession(dataset, featurepool, iteration, cap=4 * flood_target)
    registry = extractor_tools(session, pad, knowledge)
    user = (f"Iteration: {iteration}\n"
            f"Focus area ({focus.scope}): {focus.text}\n"
            f"Add about {flood_target} new attributes with append_new_attribute, each with a "
            "justification and an explanation. Write dsl_source in the feature DSL.")
    system = render_system_prompt("extractor", dataset, prompt_overrides)
    run_episode(backend, system, user, registry, budget, "extractor", iteration, transcript,
                stop=lambda: session.full, history_limit=history_limit)
    return list(session.accepted)


# -- tester --------------------------------------------------------------


@dataclass(frozen=True)
class PrunePolicy:
    threshold: float = 0.95
    importance_floor: float = 0.001
    sigma: float = 0.01


@dataclass(frozen=True)
class TesterOutcome:
    record: TestRecord
    pruned: tuple[str, ...]
    reasons: dict[str, str]
    baseline: EvalReport
    post: EvalReport


def run_tester(featurepool: FeaturePool, dataset: Dataset, learner_params: LearnerParams,
               foldplan: FoldPlan, backend: AgentBackend, knowledge: KnowledgeSource | None,
               budget: int, prune_policy: PrunePolicy = PrunePolicy(), *, metric: Metric,
               iteration: int, seed: int, focus: FocusArea | None = None,
               pad: ScratchPad | None = None, transcript: Transcript | None = None,
               prompt_overrides: Mapping | None = None,
               history_limit: int | None = None) -> TesterOutcome:
    active = featurepool.active()
    if not active:
        raise AgentError("the Tester needs at least one active feature")
    y = dataset.target.values
    X, names = active_matrix(featurepool, dataset)
    baseline = full_report(X, y, foldplan, learner_params, metric, seed, names, sigma=None)
    session = TestingSession(dataset, featurepool, iteration, baseline, learner_params, metric, foldplan)
    pad = pad if pad is not None else ScratchPad("tester")
    registry = tester_tools(session, pad, knowledge)
    user = (f"Iteration: {iteration}\n"
            f"Assess the {len(active)} active attributes. Redundancy threshold |r| > "
            f"{prune_policy.threshold}; importance floor {prune_policy.importance_floor}. "
            "Prune with attribute_pruning_tool, then give your conclusions.")
    system = render_system_prompt("tester", dataset, prompt_overrides)
    result = run_episode(backend, system, user, registry, budget, "tester", iteration,
                         transcript, history_limit=history_limit)
    conclusions = result.final if result.final is not None else (
        "The assessment ended at the step budget before a final summary was written.")

    reasons = dict(session.staged)
    kept = [r for r in active if r.name not in reasons]
    if reasons:
        Xk, kept_names = feature_matrix(kept, dataset)
        post = full_report(Xk, y, foldplan, learner_params, metric, seed, kept_names,
                           sigma=prune_policy.sigma)
    else:
        delta = noise_robustness(X, y, foldplan, learner_params, metric, prune_policy.sigma,
                                 seed, names, baseline.mean)
        post = _with_delta(baseline, delta)
    markdown = build_assessment(iteration, baseline, post,
                                session.correlated_pairs(prune_policy.threshold), reasons,
                                learner_params, foldplan.k, prune_policy.threshold,
                                prune_policy.sigma, conclusions)
    record = TestRecord(
        iteration=iteration,
        metric_name=metric.name,
        metric_mean=post.mean,
        metric_std=post.std,
        assessment_markdown=markdown,
        pruned_names=tuple(reasons),
        active_count_after=len(kept),
        focus_text=focus.text if focus else "",
        focus_scope=focus.scope if focus else "",
    )
    return TesterOutcome(record, tuple(reasons), reasons, baseline, post)


def _with_delta(report: EvalReport, delta: float) -> EvalReport:
    return replace(report, robustness_delta=float(delta))


__all__ = [
    "EpisodeResult", "PrunePolicy", "TesterOutcome", "fallback_focus", "run_episode",
    "run_extractor", "run_scientist", "run_tester",
]
