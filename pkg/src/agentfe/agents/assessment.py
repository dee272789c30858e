"""Feature Assessment markdown with a fixed six-section skeleton."""

from __future__ import annotations

from typing import Mapping

from ..learner import EvalReport, LearnerParams

SECTIONS = (
    "Baseline Assessment",
    "Redundancy & Correlation Analysis",
    "Pruning Pass(es)",
    "Post-Pruning Importance",
    "Robustness Checks",
    "Conclusions",
)


def heading(i: int) -> str:
    return f"### {i + 1}. {SECTIONS[i]}"


def _cell(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.6f}"


def build_assessment(
    iteration: int,
    baseline: EvalReport,
    post: EvalReport,
    pairs: list[dict],
    pruned: Mapping[str, str],
    params: LearnerParams,
    k_folds: int,
    threshold: float,
    sigma: float,
    conclusions: str,
) -> str:
    m = baseline.metric_name
    out = [f"**Feature Assessment - iteration {iteration}**", ""]

    out += [heading(0),
            f"- Model: gradient-boosted trees ({params.n_trees} trees, depth {params.max_depth}, "
            f"learning rate {params.learning_rate}, {params.loss} loss)",
            f"- Feature set: {len(baseline.feature_names)} attributes",
            f"- {m} over {k_folds} folds: {baseline.mean:.6f} (std {baseline.std:.6f})",
            "- Per fold: " + ", ".join(f"{v:.6f}" for v in baseline.per_fold_metrics)]
    if baseline.flags:
        out.append("- Flags: " + ", ".join(baseline.flags))
    out.append("")

    out += [heading(1), "- Computed absolute Pearson correlations across all features."]
    if pairs:
        out.append(f"- {len(pairs)} pairs showed |r| > {threshold}:")
        out += [f"  - `{p['a']}` <-> `{p['b']}` ({abs(p['r']):.4f})" for p in pairs[:15]]
        if len(pairs) > 15:
            out.append(f"  - ... {len(pairs) - 15} more")
    else:
        out.append(f"- No pair exceeded |r| > {threshold}.")
    out.append("")

    out.append(heading(2))
    if pruned:
        out += [f"Pruned {len(pruned)} attributes:", "", "| Pruned attribute | Reason |", "|---|---|"]
        out += [f"| {name} | {_cell(reason)} |" for name, reason in pruned.items()]
        out += ["", f"Result after pruning ({len(post.feature_names)} features): {m} "
                    f"{post.mean:.6f} (std {post.std:.6f})"]
    else:
        out.append(f"No attributes pruned; {len(post.feature_names)} features remain.")
    out.append("")

    out += [heading(3), "", "| Feature | Gain | Permutation |", "|---|---|---|"]
    ranked = sorted(post.feature_names, key=lambda n: (-post.gain_importance[n], n))
    out += [f"| {n} | {post.gain_importance[n]:.6f} | {post.permutation_importance.get(n, 0.0):.6f} |"
            for n in ranked]
    out.append("")

    out += [heading(4),
            f"- Spread across folds: std {post.std:.6f}.",
            f"- Gaussian noise (sigma = {sigma} x column std) on non-flag numeric features: "
            f"{m} changed by {_fmt(post.robustness_delta)}."]
    out.append("")

    out += [heading(5), conclusions.strip() or "No conclusions were given.", ""]
    return "\n".join(out)
