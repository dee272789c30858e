import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentfe.agents import (
    EXPLOITIVE,
    EXPLORATORY,
    SECTIONS,
    AgentError,
    ChatMessage,
    FocusArea,
    PrunePolicy,
    Reply,
    ScratchPad,
    ToolCall,
    ToolRegistry,
    ToolSpec,
    Transcript,
    decide_prunes,
    extraction_ladder,
    parse_focus,
    read_transcript,
    render_focus,
    render_system_prompt,
    replay,
    run_episode,
    run_extractor,
    run_scientist,
    run_tester,
    scripted_backend,
)
from agentfe.agents.messages import ToolFailure
from agentfe.agents.prompts import PLACEHOLDER, load_template, substitute
from agentfe.agents.tools import ExtractionSession, extractor_tools
from agentfe.agents.scripted import FALLBACK_FOCUS, FIRST_ROUND_FOCUS, parse_importance_table
from agentfe.dataset import DatasetDescription, from_arrays, kfold_split
from agentfe.dsl import Transformation, free_columns
from agentfe.learner import NRMSE, LearnerParams
from agentfe.pools import FeaturePool, TestPool, TestRecord, append_features

GOLDEN = Path(__file__).parent / "golden"
PARAMS = {"flood_target": 8, "prune_threshold": 0.95, "importance_floor": 0.001}


def golden_dataset():
    desc = DatasetDescription("Regression on synthetic measurements.",
                              "The overall goal is to predict 'y'.",
                              {"a": "first factor", "b": "second factor"})
    return from_arrays({"a": np.arange(4.0), "b": np.ones(4)}, np.arange(4.0), "regression",
                       target_name="y", description=desc)


def seeded_pool(ds, names=None):
    names = names or [c.name for c in ds.columns]
    pool = FeaturePool()
    append_features(pool, [Transformation.from_source(n, n, "raw", "raw column") for n in names], 0, ds)
    return pool


# -- prompts -------------------------------------------------------------

@pytest.mark.parametrize("role", ["scientist", "extractor", "tester"])
def test_prompt_matches_golden(role):
    rendered = render_system_prompt(role, golden_dataset())
    assert rendered.encode("utf-8") == (GOLDEN / f"{role}_prompt.txt").read_bytes()


@pytest.mark.parametrize("role", ["scientist", "extractor", "tester"])
def test_template_has_single_placeholder(role):
    assert load_template(role).count(PLACEHOLDER) == 1


def test_prompt_override(tmp_path):
    custom = tmp_path / "s.txt"
    custom.write_text(f"Describe: {PLACEHOLDER}!", encoding="utf-8")
    out = render_system_prompt("scientist", golden_dataset(), {"scientist": custom})
    assert out.startswith("Describe: Regression on synthetic")
    with pytest.raises(ValueError):
        substitute("no token here", "x")


# -- messages and registry ----------------------------------------------

def test_tool_message_needs_call_id():
    with pytest.raises(AgentError):
        ChatMessage("tool", "{}")
    with pytest.raises(AgentError):
        ChatMessage("user", "hi", (ToolCall("x", {}),))


def test_registry_validates_arguments():
    reg = ToolRegistry()
    reg.register(ToolSpec("echo", "echo", {"text": ("string", True), "n": ("integer", False)}),
                 lambda text, n=1: {"out": text * n})
    with pytest.raises(AgentError):
        reg.register(ToolSpec("echo", "dup", {}), lambda: None)
    assert reg.call(ToolCall("echo", {"text": "ab", "n": 2})) == ('{"out": "abab"}', True)
    for bad in ({"n": 2}, {"text": 3}, {"text": "a", "n": True}, {"text": "a", "zzz": 1}):
        text, ok = reg.call(ToolCall("echo", bad))
        assert not ok and "error" in json.loads(text)
    text, ok = reg.call(ToolCall("nope", {}))
    assert not ok and "unknown tool" in text


def test_registry_turns_failures_into_results():
    reg = ToolRegistry()

    def boom():
        raise ToolFailure("bad idea")
    reg.register(ToolSpec("boom", "", {}), boom)
    assert reg.call(ToolCall("boom", {})) == ('{"error": "bad idea"}', False)


def test_tool_spec_wire_shape():
    spec = ToolSpec("prune", "d", {"names": ("array", True), "why": ("object", False)})
    wire = spec.wire()
    assert wire["type"] == "function"
    params = wire["function"]["parameters"]
    assert params["required"] == ["names"]
    assert params["properties"]["names"] == {"type": "array", "items": {"type": "string"}}


def test_scratch_pad_is_append_only_with_logical_time():
    pad = ScratchPad("scientist")
    pad.add(1, "first")
    pad.add(2, "second")
    assert [(n.iteration, n.seq) for n in pad.notes] == [(1, 0), (2, 1)]
    with pytest.raises(ToolFailure):
        pad.add(2, "  ")
    assert [json.loads(line)["text"] for line in pad.dumps().splitlines()] == ["first", "second"]


def test_parse_focus_variants():
    f = parse_focus("Reasoning...\n\nFocus: ratios of age\nScope: exploitive", 3)
    assert (f.text, f.scope, f.iteration) == ("ratios of age", EXPLOITIVE, 3)
    g = parse_focus("**Focus:** wide search\n**Scope:** Exploratory", 2)
    assert (g.text, g.scope) == ("wide search", EXPLORATORY)
    assert parse_focus("Look at everything.", 1).text == "Look at everything."
    assert parse_focus("   ", 1) is None
    with pytest.raises(AgentError):
        FocusArea("", EXPLORATORY, 1)
    with pytest.raises(AgentError):
        FocusArea("x", "sideways", 1)


@settings(max_examples=50, deadline=None)
@given(st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp")), min_size=1)
       .filter(lambda s: s.strip() and "\n" not in s), st.sampled_from([EXPLORATORY, EXPLOITIVE]))
def test_render_then_parse_focus(text, scope):
    f = FocusArea(text.strip(), scope, 4)
    back = parse_focus(render_focus(f, "because"), 4)
    assert back == f


# -- episodes ------------------------------------------------------------

class Loop:
    """Backend that calls a tool forever."""

    def step(self, system, messages, tools):
        return Reply("", (ToolCall("take_note_tool", {"note": "again"}),))


def test_episode_stops_at_budget():
    pad = ScratchPad("x")
    reg = ToolRegistry()
    reg.register(ToolSpec("take_note_tool", "", {"note": ("string", True)}),
                 lambda note: {"seq": pad.add(1, note).seq})
    res = run_episode(Loop(), "sys", "go", reg, budget=5, role="x", iteration=1)
    assert res.exhausted and res.steps == 5 and len(pad.notes) == 5
    with pytest.raises(AgentError):
        run_episode(Loop(), "sys", "go", reg, budget=0, role="x", iteration=1)


def test_scientist_budget_zero_and_fallback(small_regression):
    pool = seeded_pool(small_regression)
    with pytest.raises(AgentError):
        run_scientist(TestPool(), pool, small_regression, scripted_backend("scientist", PARAMS),
                      None, budget=0)
    focus = run_scientist(TestPool(), pool, small_regression, Loop(), None, budget=2, iteration=4)
    assert (focus.text, focus.scope) == (FALLBACK_FOCUS, EXPLORATORY)


def test_scientist_first_round(small_regression):
    focus = run_scientist(TestPool(), seeded_pool(small_regression), small_regression,
                          scripted_backend("scientist", PARAMS), None, budget=12, iteration=1)
    assert (focus.text, focus.scope) == (FIRST_ROUND_FOCUS, EXPLORATORY)


def _record(iteration, gains, metric=0.5, scope=EXPLORATORY):
    rows = "\n".join(f"| {n} | {g:.6f} | 0.000000 |" for n, g in gains.items())
    md = (f"### 4. Post-Pruning Importance\n\n| Feature | Gain | Permutation |\n|---|---|---|\n{rows}\n\n"
          "### 5. Robustness Checks\n")
    return TestRecord(iteration, "nrmse", metric, 0.0, md, (), len(gains), "f", scope)


def test_scientist_exploits_top_feature():
    rng = np.random.default_rng(0)
    ds = from_arrays({"age": rng.uniform(20, 80, 50), "weight": rng.normal(70, 10, 50)},
                     rng.normal(size=50), "regression")
    tp = TestPool()
    tp.add(_record(0, {"age": 0.8, "weight": 0.2}))
    focus = run_scientist(tp, seeded_pool(ds), ds, scripted_backend("scientist", PARAMS), None,
                          budget=12, iteration=2)
    assert focus.scope == EXPLOITIVE
    assert "`age`" in focus.text


def test_scientist_alternates_without_signal(small_regression):
    ds = small_regression
    pool = seeded_pool(ds)
    backend = scripted_backend("scientist", PARAMS)
    pad = ScratchPad("scientist")
    tp = TestPool()
    tp.add(_record(0, {"a": 0.0, "b": 0.0, "c": 0.0}))
    scopes = []
    for i in range(2, 6):
        f = run_scientist(tp, pool, ds, backend, None, 12, i, pad=pad)
        scopes.append(f.scope)
        tp.add(_record(i, {"a": 0.0, "b": 0.0, "c": 0.0}))
    assert scopes == [EXPLORATORY, EXPLOITIVE, EXPLORATORY, EXPLOITIVE]


def test_parse_importance_table():
    md = _record(1, {"x": 0.7, "y": 0.3}).assessment_markdown
    assert parse_importance_table(md) == [("x", 0.7, 0.0), ("y", 0.3, 0.0)]


# -- extractor -----------------------------------------------------------

def _session(ds, pool=None, cap=32):
    return ExtractionSession(ds, pool or seeded_pool(ds), 1, cap)


def test_extractor_ladder_first_six(small_regression):
    ds = small_regression
    focus = FocusArea("Exploit `a` with `b`", EXPLOITIVE, 1)
    got = run_extractor(focus, ds, seeded_pool(ds), scripted_backend("extractor", PARAMS), None,
                        budget=40, flood_target=6)
    assert [t.source_text for t in got] == [
        "a * b", "a / b", "b / a", "log1p(a)", "square(a)", "a + b"]
    assert all(t.justification and t.explanation for t in got)


def test_extractor_never_uses_unknown_columns(small_regression):
    ds = small_regression
    focus = FocusArea("Exploit `ghost` and `a`", EXPLOITIVE, 1)
    got = run_extractor(focus, ds, seeded_pool(ds), scripted_backend("extractor", PARAMS), None,
                        budget=80, flood_target=20)
    cols = set(ds.column_names)
    assert got
    assert all(free_columns(t.expr) <= cols for t in got)


def test_append_rejections(small_regression):
    s = _session(small_regression)
    reg = extractor_tools(s, ScratchPad("extractor"), None)

    def append(name, src, j="j", e="e"):
        return reg.call(ToolCall("append_new_attribute",
                                 {"name": name, "dsl_source": src, "justification": j, "explanation": e}))
    text, ok = append("bad", "a * (b")
    assert not ok and "syntax error" in text
    text, ok = append("a", "a * b")
    assert not ok and "duplicate name" in text
    text, ok = append("ghost", "ghost + 1")
    assert not ok and "unknown column" in text
    text, ok = append("nojust", "a + 1", j=" ")
    assert not ok
    assert append("ab", "a * b")[1]
    text, ok = append("ab2", "a*b")
    assert not ok and "duplicate expression" in text
    assert [t.name for t in s.accepted] == ["ab"]


def test_extractor_cap(small_regression):
    s = _session(small_regression, cap=1)
    s.append("p", "a * b", "j", "e")
    assert s.full
    with pytest.raises(ToolFailure):
        s.append("q", "a + b", "j", "e")


def test_extraction_ladder_order():
    from agentfe.dsl import ColumnRef
    ladder = extraction_ladder([("a", ColumnRef("a")), ("b", ColumnRef("b"))], ["a", "b"],
                               {"a": 0.0, "b": 1.0}, [("color", "red")])
    names = [n for n, *_ in ladder]
    assert names[:6] == ["a_x_b", "a_div_b", "b_div_a", "log1p_a", "sq_a", "a_plus_b"]
    assert "a_gt_median" in names and names[-1] == "color_is_red"


# -- tester --------------------------------------------------------------

def _tester(ds, pool, iteration=1, policy=PrunePolicy()):
    return run_tester(pool, ds, LearnerParams(n_trees=20), kfold_split(ds.n_rows, 5, 0),
                      scripted_backend("tester", PARAMS), None, 12, policy,
                      metric=NRMSE, iteration=iteration, seed=1)


def test_duplicate_columns_prune_exactly_one():
    rng = np.random.default_rng(3)
    a = rng.normal(size=100)
    ds = from_arrays({"a": a, "a_copy": a.copy(), "b": rng.normal(size=100)}, 2 * a, "regression")
    out = _tester(ds, seeded_pool(ds))
    corr = [n for n, r in out.reasons.items() if r.startswith("correlation rule")]
    assert len(corr) == 1
    dropped = corr[0]
    kept = ({"a", "a_copy"} - {dropped}).pop()
    assert out.baseline.gain_importance[kept] >= out.baseline.gain_importance[dropped]


def _correlated(r_target, rng, n=400):
    x = rng.normal(size=n)
    xc = x - x.mean()
    noise = rng.normal(size=n)
    noise -= noise.mean()
    noise -= xc * (noise @ xc) / (xc @ xc)
    noise *= np.linalg.norm(xc) / np.linalg.norm(noise)
    return x, r_target * xc + np.sqrt(1 - r_target ** 2) * noise


def test_threshold_is_honored():
    rng = np.random.default_rng(4)
    x1, y1 = _correlated(0.96, rng)
    x2, y2 = _correlated(0.90, rng)
    assert np.corrcoef(x1, y1)[0, 1] == pytest.approx(0.96, abs=1e-9)
    ds = from_arrays({"p": x1, "q": y1, "u": x2, "v": y2}, x1 + x2 + rng.normal(size=400),
                     "regression")
    out = _tester(ds, seeded_pool(ds))
    corr = {n for n, r in out.reasons.items() if r.startswith("correlation rule")}
    assert len(corr & {"p", "q"}) == 1
    assert not corr & {"u", "v"}


def test_assessment_has_six_headings(small_regression):
    out = _tester(small_regression, seeded_pool(small_regression))
    md = out.record.assessment_markdown
    for i, name in enumerate(SECTIONS):
        assert f"### {i + 1}. {name}" in md
    assert out.record.active_count_after == 3 - len(out.pruned)


def test_tester_needs_active_features(small_regression):
    with pytest.raises(AgentError):
        _tester(small_regression, FeaturePool())


def test_decide_prunes_tie_breaks_and_never_empties():
    summary = {"features": [
        {"name": "old", "order": 0, "created_iter": 0, "gain": 0.5, "permutation": 0.1},
        {"name": "new", "order": 1, "created_iter": 2, "gain": 0.5, "permutation": 0.1},
        {"name": "weak", "order": 2, "created_iter": 1, "gain": 0.0, "permutation": 0.0},
    ]}
    pairs = [{"a": "old", "b": "new", "r": 0.99}]
    pruned = decide_prunes(summary, pairs, 0.001)
    assert set(pruned) == {"new", "weak"}
    assert pruned["weak"].startswith("importance rule")
    lone = {"features": [dict(summary["features"][2])]}
    assert decide_prunes(lone, [], 0.001) == {}


# -- scripted determinism and replay -------------------------------------

def _episode_log(ds, tmp_path, tag):
    t = Transcript(tmp_path / f"{tag}.jsonl")
    focus = FocusArea("Exploit `a` with `b`", EXPLOITIVE, 1)
    run_extractor(focus, ds, seeded_pool(ds), scripted_backend("extractor", PARAMS, seed=3), None,
                  40, 6, transcript=t)
    return (tmp_path / f"{tag}.jsonl").read_bytes()


def test_scripted_transcripts_identical(small_regression, tmp_path):
    assert _episode_log(small_regression, tmp_path, "one") == _episode_log(small_regression, tmp_path, "two")


def test_replay_rebuilds_pool(small_regression, tmp_path):
    ds = small_regression
    t = Transcript(tmp_path / "t.jsonl")
    pool = FeaturePool()
    seeds = [Transformation.from_source(n, n, "raw", "raw") for n in ds.column_names]
    append_features(pool, seeds, 0, ds)
    t.log(0, "orchestrator", "commit", action="append", payload={"features": [
        {"name": s.name, "source_text": s.source_text, "justification": s.justification,
         "explanation": s.explanation} for s in seeds]})
    from agentfe.pools import prune
    prune(pool, ["c"], 1, {"c": "weak"})
    t.log(1, "orchestrator", "commit", action="prune", payload={"names": ["c"], "reasons": {"c": "weak"}})
    assert replay(read_transcript(tmp_path / "t.jsonl"), ds) == pool
