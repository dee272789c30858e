"""``agentfe`` command line.

Exit codes: 0 success, 1 usage error (bad flags, unreadable input), 2 runtime
failure (backend errors, a run that aborted part-way).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .analysis import AnalysisError, load_points, load_score_table, mrr_report, pearson_report
from .dataset import DatasetError, load_csv
from .orchestrator import BackendConfig, RunAborted, RunConfig, RunError, load_result, run
from .report import emit_report, render_report

log = logging.getLogger("agentfe")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _flag(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y"):
        return True
    if t in ("0", "false", "no", "n"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="agentfe", description="Agentic feature extraction for tabular data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run the Scientist/Extractor/Tester loop on a CSV")
    r.add_argument("--data", required=True, type=Path, help="input CSV with a header row")
    r.add_argument("--target", required=True, help="target column name")
    r.add_argument("--task", required=True, choices=("classification", "regression"))
    r.add_argument("--iters", type=int, default=10)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--backend", choices=("scripted", "remote"), default="scripted")
    r.add_argument("--endpoint", help="chat-completions URL for --backend remote")
    r.add_argument("--model", help="model name for --backend remote")
    r.add_argument("--corpus", type=Path, help="knowledge corpus (directory of .txt, or .json/.jsonl)")
    r.add_argument("--out", required=True, type=Path, help="run directory to create")

    m = sub.add_parser("analyze-mrr", help="mean reciprocal rank over a method score table")
    m.add_argument("--table", required=True, type=Path)
    direction = m.add_mutually_exclusive_group()
    direction.add_argument("--higher-is-better", dest="higher_is_better", nargs="?", const=True,
                           default=True, type=_flag, metavar="{true,false}")
    direction.add_argument("--lower-is-better", dest="higher_is_better", action="store_false")
    m.add_argument("--tie-rule", choices=("min-rank", "average-rank"), default="min-rank")
    m.add_argument("--missing", choices=("exclude", "zero"), default="exclude")

    c = sub.add_parser("analyze-pearson", help="Pearson correlation of an x,y points file")
    c.add_argument("--points", required=True, type=Path)
    c.add_argument("--log-x", action="store_true", help="correlate log(x) with y")

    rep = sub.add_parser("report", help="re-render report.md from a run directory")
    rep.add_argument("--run-dir", required=True, type=Path)
    return p


def _cmd_run(args) -> int:
    try:
        dataset = load_csv(args.data, args.target, args.task)
    except (DatasetError, OSError) as exc:
        raise UsageError(str(exc)) from exc
    try:
        backend = BackendConfig(args.backend, args.endpoint, args.model)
        config = RunConfig(iterations=args.iters, seed=args.seed, backend=backend,
                           corpus_path=str(args.corpus) if args.corpus else None)
    except RunError as exc:
        raise UsageError(str(exc)) from exc
    result = run(config, dataset, args.out)
    print(f"best iteration {result.best_iteration}: {result.metric.name} "
          f"{result.best_metric:.6f} with {len(result.best_active_features)} features")
    print(f"wrote {args.out / 'report.md'}")
    return EXIT_OK


def _cmd_mrr(args) -> int:
    try:
        table = load_score_table(args.table, args.higher_is_better)
    except OSError as exc:
        raise UsageError(f"cannot read {args.table}: {exc}") from exc
    sys.stdout.write(mrr_report(table, args.tie_rule, args.missing).to_markdown())
    return EXIT_OK


def _cmd_pearson(args) -> int:
    try:
        xs, ys = load_points(args.points)
    except OSError as exc:
        raise UsageError(f"cannot read {args.points}: {exc}") from exc
    sys.stdout.write(pearson_report(xs, ys, log_x=args.log_x).to_markdown())
    return EXIT_OK


def _cmd_report(args) -> int:
    if not args.run_dir.is_dir():
        raise UsageError(f"no such run directory: {args.run_dir}")
    result = load_result(args.run_dir)
    path = emit_report(result, args.run_dir / "report.md")
    sys.stdout.write(render_report(result))
    log.info("wrote %s", path)
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "analyze-mrr": _cmd_mrr, "analyze-pearson": _cmd_pearson,
            "report": _cmd_report}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"agentfe {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AnalysisError as exc:
        # malformed input tables are the caller's problem
        print(f"agentfe {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RunAborted as exc:
        where = f" (partial run kept in {exc.run_dir})" if exc.run_dir else ""
        print(f"agentfe {args.command}: {exc}{where}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RunError, OSError, RuntimeError, ValueError) as exc:
        print(f"agentfe {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
