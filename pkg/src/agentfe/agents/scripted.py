"""Deterministic stand-in policies for the three roles.

Each policy is a generator over :class:`Reply` objects. It only knows what
the opening user message and its own tool results tell it, exactly like a
model would, so swapping in a remote backend changes nothing else.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from itertools import combinations

from ..dsl import Binary, CatFlag, ColumnRef, Compare, Const, Expr, Unary, format_expr, parse
from .backends import ScriptedBackend
from .messages import EXPLOITIVE, EXPLORATORY, FocusArea, Reply, ToolCall, render_focus

FIRST_ROUND_FOCUS = "evaluate raw attributes without transformations"
FALLBACK_FOCUS = "explore general derived features over all numeric columns"

_TICKS = re.compile(r"`([^`]+)`")
_ITER = re.compile(r"^Iteration:\s*(\d+)(?:\s+of\s+(\d+))?", re.M)
_FOCUS_LINE = re.compile(r"^Focus area \((\w+)\):\s*(.*)$", re.M)
_TARGET = re.compile(r"about (\d+) new attributes")
_POLICY_LINE = re.compile(r"\|r\| > ([0-9.eE+-]+); importance floor ([0-9.eE+-]+)\.")


def call(tool: str, /, **arguments) -> Reply:
    return Reply("", (ToolCall(tool, arguments),))


def _loads(results: list[str]) -> dict:
    return json.loads(results[0])


def _ok(result: dict) -> bool:
    return "error" not in result


def parse_iteration(text: str) -> tuple[int, int | None]:
    m = _ITER.search(text)
    if not m:
        return 1, None
    return int(m.group(1)), (int(m.group(2)) if m.group(2) else None)


def parse_importance_table(markdown: str) -> list[tuple[str, float, float]]:
    """Rows of the Post-Pruning Importance table as (name, gain, permutation)."""
    rows, inside = [], False
    for line in markdown.splitlines():
        if line.startswith("### "):
            inside = "Post-Pruning Importance" in line
            continue
        if not inside or not line.startswith("|"):
            continue
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        if len(cells) < 3 or cells[0] in ("Feature", "") or set(cells[0]) <= {"-", ":"}:
            continue
        try:
            rows.append((cells[0].strip("`"), float(cells[1]), float(cells[2])))
        except ValueError:
            continue
    return rows


# -- scientist -----------------------------------------------------------

_NOTE_RE = re.compile(r"^focus\[(\d+)\] scope=(\w+) anchor=(\S*) columns=(\S*) :: (.*)$")


@dataclass(frozen=True)
class _FocusNote:
    iteration: int
    scope: str
    anchor: str
    columns: tuple[str, ...]


def focus_notes(notes: list[dict]) -> list[_FocusNote]:
    out = []
    for n in notes:
        m = _NOTE_RE.match(n["text"])
        if m:
            out.append(_FocusNote(int(m.group(1)), m.group(2), m.group(3),
                                  tuple(c for c in m.group(4).split(",") if c)))
    return out


def _improved(records: list[dict]) -> bool:
    if len(records) < 2:
        return True
    a, b = records[-1]["metric_mean"], records[-2]["metric_mean"]
    return a > b if records[-1]["metric_name"] == "accuracy" else a < b


def scientist_policy(user_text: str, params: dict):
    """Exploit the top-gain feature's columns; explore under-used columns when the
    metric stalls or a focus produced nothing; alternate scopes without a signal."""
    iteration, _ = parse_iteration(user_text)
    notes = focus_notes(_loads((yield call("read_notebook_tool")))["notes"])
    records = _loads((yield call("read_test_pool_tool")))["records"]
    schema = _loads((yield call("generic_pandas_tool", op="describe")))
    numeric = [c["name"] for c in schema["columns"] if c["kind"] == "numeric"]
    evaluated = {r["iteration"] for r in records}
    unproductive = [n for n in notes if n.iteration not in evaluated]
    exhausted = {n.anchor for n in unproductive if n.anchor}
    dead_columns = {c for n in unproductive if n.scope == EXPLORATORY for c in n.columns}
    previous = notes[-1] if notes else None
    anchor, columns = "", ()

    if iteration <= 1:
        focus = FocusArea(FIRST_ROUND_FOCUS, EXPLORATORY, iteration)
        reason = "first round: measure what the raw attributes already deliver"
    else:
        table = parse_importance_table(records[-1]["assessment_markdown"]) if records else []
        signal = [row for row in table if row[1] > 0 and row[0] not in exhausted]
        top_cols: tuple[str, ...] = ()
        if signal:
            anchor = signal[0][0]
            info = _loads((yield call("attribute_lookup_tool", name=anchor)))
            top_cols = tuple(c for c in info.get("free_columns", []) if c in numeric)
        stalled = (previous is not None and previous.scope == EXPLOITIVE
                   and previous.iteration in evaluated and set(previous.columns) == set(top_cols)
                   and not _improved(records))
        if not table or not any(row[1] > 0 for row in table):
            if previous is not None and previous.scope == EXPLORATORY and previous.columns:
                columns = previous.columns
                focus = FocusArea("Exploit " + ", ".join(f"`{c}`" for c in columns)
                                  + " with further derived features", EXPLOITIVE, iteration)
            else:
                columns = tuple(c for c in numeric if c not in dead_columns)[:3]
                focus = (FocusArea("Explore derived features of the attributes "
                                   + ", ".join(f"`{c}`" for c in columns), EXPLORATORY, iteration)
                         if columns else FocusArea(FALLBACK_FOCUS, EXPLORATORY, iteration))
            anchor = ""
            reason = "no importance signal in the latest assessment; alternating scope"
        elif signal and top_cols and not stalled:
            columns = top_cols
            focus = FocusArea(f"Exploit `{anchor}` further: derive features from "
                              + ", ".join(f"`{c}`" for c in columns) + f" building on `{anchor}`",
                              EXPLOITIVE, iteration)
            reason = f"`{anchor}` carries the largest gain share in the latest assessment"
        else:
            anchor = ""
            usage = {c: 0 for c in numeric}
            for name, _, _ in table:
                row = _loads((yield call("attribute_lookup_tool", name=name)))
                for c in row.get("free_columns", []):
                    if c in usage:
                        usage[c] += 1
            pool = [c for c in numeric if c not in dead_columns]
            ranked = sorted(pool, key=lambda c: (usage[c], numeric.index(c)))
            columns = tuple(ranked[:3])
            if columns:
                focus = FocusArea("Explore derived features of the under-used attributes "
                                  + ", ".join(f"`{c}`" for c in columns), EXPLORATORY, iteration)
            else:
                focus = FocusArea(FALLBACK_FOCUS, EXPLORATORY, iteration)
            reason = "the current direction stopped paying off; widening the search"
    note = (f"focus[{iteration}] scope={focus.scope} anchor={anchor} "
            f"columns={','.join(columns)} :: {focus.text}")
    yield call("take_note_tool", note=note)
    yield Reply(render_focus(focus, reason))


# -- extractor -----------------------------------------------------------


def _label(expr_label: str) -> str:
    out = re.sub(r"[^A-Za-z0-9_]", "_", expr_label).strip("_") or "f"
    return out if not out[0].isdigit() else "f_" + out


def extraction_ladder(terms: list[tuple[str, Expr]], numeric_cols: list[str],
                      medians: dict[str, float], cat_tokens: list[tuple[str, str]]):
    """Candidate (name, expr, justification, explanation) in the fixed ladder order."""
    anchor = terms[:1]
    others = terms[1:]
    out = []
    for (la, a), (lb, b) in combinations(terms, 2):
        out.append((f"{la}_x_{lb}", Binary("mul", a, b),
                    f"interaction between {la} and {lb}", f"product of {la} and {lb}"))
    for (la, a), (lb, b) in combinations(terms, 2):
        for (lx, x), (ly, y) in ((la, a), (lb, b)), ((lb, b), (la, a)):
            out.append((f"{lx}_div_{ly}", Binary("div", x, y),
                        f"relative size of {lx} to {ly}", f"{lx} divided by {ly}; missing where {ly} is 0"))

    def unary_pair(group):
        for lx, x in group:
            out.append((f"log1p_{lx}", Unary("log1p", x), f"compress the scale of {lx}",
                        f"log(1 + {lx}); missing where {lx} <= -1"))
            out.append((f"sq_{lx}", Unary("square", x), f"emphasise large magnitudes of {lx}",
                        f"{lx} squared"))

    unary_pair(anchor)
    for (la, a), (lb, b) in combinations(terms, 2):
        out.append((f"{la}_plus_{lb}", Binary("add", a, b), f"combined level of {la} and {lb}",
                    f"sum of {la} and {lb}"))
    for (la, a), (lb, b) in combinations(terms, 2):
        out.append((f"{la}_minus_{lb}", Binary("sub", a, b), f"contrast between {la} and {lb}",
                    f"{la} minus {lb}"))
    unary_pair(others)
    for lx, x in terms:
        if isinstance(x, ColumnRef) and x.name in medians and medians[x.name] is not None:
            med = float(medians[x.name])
            out.append((f"{lx}_gt_median", Compare("gt", x, Const(med)),
                        f"split {lx} at its median", f"1 if {lx} > {med!r} (median) else 0"))
    for column, token in cat_tokens:
        out.append((_label(f"{column}_is_{token}"), CatFlag(column, token),
                    f"flag the {token} category of {column}", f"1 if {column} == {token!r} else 0"))
    return out


def extractor_policy(user_text: str, params: dict):
    m = _FOCUS_LINE.search(user_text)
    focus_text = m.group(2) if m else user_text
    t = _TARGET.search(user_text)
    target = int(t.group(1)) if t else int(params.get("flood_target", 8))
    schema = _loads((yield call("generic_pandas_tool", op="describe")))
    known = _loads((yield call("list_known_attributes_tool")))
    numeric = [c["name"] for c in schema["columns"] if c["kind"] == "numeric"]
    categorical = {c["name"]: c for c in schema["columns"] if c["kind"] == "categorical"}
    medians = {c["name"]: c.get("median") for c in schema["columns"] if c["kind"] == "numeric"}
    active = {a["name"]: a["source_text"] for a in known["active"]}
    proposed = set(known["ever_proposed"])

    named = list(dict.fromkeys(_TICKS.findall(focus_text)))
    terms: list[tuple[str, Expr]] = []
    cats = []
    for n in named:
        if n in numeric:
            terms.append((_label(n), ColumnRef(n)))
        elif n in categorical:
            cats.append(n)
        elif n in active:
            terms.append((_label(n), parse(active[n])))
    if not terms:
        terms = [(_label(c), ColumnRef(c)) for c in numeric]
    if not cats and not named:
        cats = list(categorical)
    seen_src, unique_terms = set(), []
    for label, expr in terms:
        src = format_expr(expr)
        if src not in seen_src:
            seen_src.add(src)
            unique_terms.append((label, expr))
    tokens = []
    for c in cats:
        for token, _ in categorical[c]["top"]:
            tokens.append((c, token))

    taken = set(active)
    added = 0
    for name, expr, why, how in extraction_ladder(unique_terms, numeric, medians, tokens):
        if added >= target:
            break
        source = format_expr(expr)
        if source in proposed:
            continue
        base, k = name, 2
        while name in taken:
            name, k = f"{base}_{k}", k + 1
        result = _loads((yield call("append_new_attribute", name=name, dsl_source=source,
                                     justification=why, explanation=how)))
        proposed.add(source)
        if _ok(result):
            added += 1
            taken.add(name)
    yield call("take_note_tool", note=f"added {added} attributes for focus: {focus_text}")
    yield Reply(f"Added {added} new attributes for the focus area.")


# -- tester --------------------------------------------------------------


def decide_prunes(summary: dict, pairs: list[dict], floor: float) -> dict[str, str]:
    """Correlation rule first (keep higher gain, older on ties), then the low-impact rule."""
    feats = {f["name"]: f for f in summary["features"]}

    def keeps_over(a, b):  # True when a should survive over b
        fa, fb = feats[a], feats[b]
        return (fa["gain"], -fa["created_iter"], -fa["order"]) > (fb["gain"], -fb["created_iter"], -fb["order"])

    pruned: dict[str, str] = {}
    for p in pairs:
        a, b = p["a"], p["b"]
        if a in pruned or b in pruned:
            continue
        keep, drop = (a, b) if keeps_over(a, b) else (b, a)
        pruned[drop] = (f"correlation rule: |r| = {abs(p['r']):.4f} with {keep}, lower gain "
                        f"({feats[drop]['gain']:.4f} vs {feats[keep]['gain']:.4f})")
    for name, f in feats.items():
        if name not in pruned and f["gain"] < floor and f["permutation"] <= 0:
            pruned[name] = (f"importance rule: gain {f['gain']:.6f} < {floor} and permutation "
                            f"degradation {f['permutation']:.6f} <= 0")
    if len(pruned) == len(feats):
        best = max(feats, key=lambda n: (feats[n]["gain"], -feats[n]["created_iter"], -feats[n]["order"]))
        del pruned[best]
    return pruned


def tester_policy(user_text: str, params: dict):
    m = _POLICY_LINE.search(user_text)
    threshold = float(m.group(1)) if m else float(params.get("prune_threshold", 0.95))
    floor = float(m.group(2)) if m else float(params.get("importance_floor", 0.001))
    summary = _loads((yield call("generic_python_executor_tool", experiment="summary")))
    pairs = _loads((yield call("generic_python_executor_tool", experiment="correlated_pairs",
                               threshold=threshold)))["pairs"]
    pruned = decide_prunes(summary, pairs, floor)
    if pruned:
        yield call("attribute_pruning_tool", names=list(pruned), reasons=pruned)
    kept = [f for f in summary["features"] if f["name"] not in pruned]
    kept.sort(key=lambda f: (-f["gain"], f["order"]))
    yield call("take_note_tool",
               note=f"{len(summary['features'])} evaluated, {len(pruned)} pruned, {len(kept)} kept")
    n_corr = sum(1 for r in pruned.values() if r.startswith("correlation"))
    top = ", ".join(f["name"] for f in kept[:3])
    lines = [
        f"The evaluated set of {len(summary['features'])} attributes reached a mean "
        f"{summary['metric_name']} of {summary['mean']:.5f} (std {summary['std']:.5f}) across folds.",
        f"{len(pruned)} attributes were pruned: {n_corr} as redundant under the |r| > {threshold} "
        f"rule and {len(pruned) - n_corr} as low impact.",
        f"The strongest remaining attributes by gain share are {top}.",
    ]
    yield Reply(" ".join(lines))


POLICIES = {"scientist": scientist_policy, "extractor": extractor_policy, "tester": tester_policy}


def scripted_backend(role: str, policy_params: dict | None = None, seed: int = 0) -> ScriptedBackend:
    if role not in POLICIES:
        raise ValueError(f"no scripted policy for role {role!r}")
    return ScriptedBackend(role, POLICIES[role], policy_params, seed)
