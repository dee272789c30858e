"""Run artifacts: the trajectory CSV and the markdown run report."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .orchestrator import RunResult

TRAJECTORY_HEADER = ("iteration", "metric", "active_count")


def trajectory_csv(result: "RunResult") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(TRAJECTORY_HEADER)
    for it, metric, count in result.trajectory:
        w.writerow((it, repr(float(metric)), count))
    return buf.getvalue()


def read_trajectory(path: str | Path) -> list[tuple[int, float, int]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRAJECTORY_HEADER:
        raise ValueError(f"{path} is not a trajectory file")
    return [(int(a), float(b), int(c)) for a, b, c in rows[1:]]


def emit_trajectory(result: "RunResult", path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(trajectory_csv(result), encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc
    return path


def _cell(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def render_report(result: "RunResult") -> str:
    m = result.metric
    direction = "higher is better" if m.higher_is_better else "lower is better"
    created, pruned, active = result.pool.counts()
    traj = result.trajectory
    evaluated = [str(i) for i, _, _ in traj]
    skipped = sorted(set(range(1, result.config.iterations + 1)) - {i for i, _, _ in traj})
    lines = [
        f"# Feature extraction run: {result.dataset_name}",
        "",
        "## Run summary",
        f"- Metric: {m.name} ({direction}), {result.config.folds}-fold cross-validation",
        f"- Iterations: {result.config.iterations} configured; evaluated {', '.join(evaluated)}",
    ]
    if skipped:
        lines.append(f"- Not evaluated (no new features): {', '.join(map(str, skipped))}")
    if traj:
        lines.append(f"- Raw baseline (iteration {traj[0][0]}): {traj[0][1]:.6f}")
    lines += [
        f"- Best iteration: {result.best_iteration} with {m.name} {result.best_metric:.6f}",
        f"- Feature Pool: {created} created, {pruned} pruned, {active} active",
        "",
        "## Trajectory",
        "",
        "| Iteration | Metric | Active features |",
        "|---|---|---|",
    ]
    lines += [f"| {i} | {v:.6f} | {c} |" for i, v, c in traj]
    lines += [
        "",
        f"## Best feature set (iteration {result.best_iteration}, {len(result.best_active_features)} features)",
        "",
        "| Feature | Definition | Justification |",
        "|---|---|---|",
    ]
    lines += [f"| {t.name} | `{_cell(t.source_text)}` | {_cell(t.justification)} |"
              for t in result.best_active_features]
    lines.append("")
    final = result.testpool.latest()
    if final is not None:
        lines += [f"## Final Tester assessment (iteration {final.iteration})", "",
                  final.assessment_markdown.rstrip(), ""]
    return "\n".join(lines)


def emit_report(result: "RunResult", path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(render_report(result), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path
