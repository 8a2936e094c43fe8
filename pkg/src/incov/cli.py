"""Command line interface.

Exit codes: 0 on success, 1 when a verification finds a coverage mismatch,
2 on usage errors, parse errors, or unusable inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .harness import (
    HistoryParams,
    ParamError,
    ReplayResult,
    analyze_against_store,
    generate_history,
    load_history,
    replay,
    replay_csv,
    run_full,
    run_incremental,
    verify_equivalence,
    write_history,
)
from .miniproj import LinkError, ParseError, load_project
from .report import StaleProbe, render_report
from .selection import SnapshotInvalid, selection_to_json
from .store import CorruptStore, IncompatibleStore, load_state


def _add_project(p: argparse.ArgumentParser) -> None:
    p.add_argument("--project", required=True, help="project file or directory of .unit files")


def _add_store(p: argparse.ArgumentParser) -> None:
    p.add_argument("--store", required=True, help="store directory for cross-version state")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--test-cost-ms", type=int, default=0, help="artificial cost per test")
    p.add_argument("--include-tests", action="store_true", help="report coverage of test units too")


def _add_params(p: argparse.ArgumentParser) -> None:
    defaults = HistoryParams()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--units", type=int, default=defaults.units)
    p.add_argument("--tests", type=int, default=defaults.tests)
    p.add_argument("--versions", type=int, default=defaults.versions)
    p.add_argument("--edit-rate", type=float, default=defaults.edit_rate)
    p.add_argument("--add-rate", type=float, default=defaults.add_rate)
    p.add_argument("--delete-rate", type=float, default=defaults.delete_rate)
    p.add_argument("--branch-flip-rate", type=float, default=defaults.branch_flip_rate)


def _params_from(args: argparse.Namespace) -> HistoryParams:
    return HistoryParams(
        units=args.units,
        tests=args.tests,
        versions=args.versions,
        edit_rate=args.edit_rate,
        add_rate=args.add_rate,
        delete_rate=args.delete_rate,
        branch_flip_rate=args.branch_flip_rate,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="incov", description="incremental code coverage for mini-projects"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="show what the next run would select")
    _add_project(p)
    _add_store(p)

    p = sub.add_parser("run", help="one incremental pipeline pass")
    _add_project(p)
    _add_store(p)
    _add_run_flags(p)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("full", help="retest-all coverage, no store involved")
    _add_project(p)
    _add_run_flags(p)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("verify", help="incremental run checked against the oracle")
    _add_project(p)
    _add_store(p)
    _add_run_flags(p)

    p = sub.add_parser("gen", help="generate a synthetic version history")
    _add_params(p)
    p.add_argument("--out", required=True, help="directory for v*.proj files")

    p = sub.add_parser("replay", help="run a whole history against one store")
    _add_store(p)
    _add_run_flags(p)
    p.add_argument("--history", help="directory of v*.proj files")
    _add_params(p)
    p.add_argument("--no-verify", action="store_true", help="skip the per-version oracle")
    p.add_argument("--format", choices=("csv", "text", "json"), default="csv")
    p.add_argument("--out", help="write output to a file instead of stdout")

    p = sub.add_parser("report", help="render the report for stored coverage")
    _add_project(p)
    _add_store(p)
    p.add_argument("--include-tests", action="store_true")
    p.add_argument("--format", choices=("text", "json"), default="text")

    return parser


def _print_run(result, fmt: str) -> None:
    if fmt == "json":
        payload = {
            "version_id": result.version_id,
            "executed_tests": result.executed_tests,
            "total_tests": result.total_tests,
            "selection_rate": result.selection_rate,
            "rts_selected": sorted(result.selection.rts_selected),
            "final_selected": sorted(result.selection.final_selected),
            "phase_seconds": dict(result.phase_times),
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
        return
    times = result.phase_times
    print(
        f"{result.version_id}: executed {result.executed_tests}/{result.total_tests} tests"
        f" (rate {result.selection_rate:.2f})"
    )
    print(
        "phases: analysis {analysis:.3f}s execution {execution:.3f}s"
        " collection {collection:.3f}s report {report:.3f}s".format(**times)
    )
    sys.stdout.write(render_report(result.report, "text").decode("utf-8"))


def _replay_text(result: ReplayResult) -> str:
    lines = []
    for row in result.rows:
        r = row.result
        speedup = f" speedup {row.speedup:.2f}x" if row.speedup is not None else ""
        lines.append(
            f"{r.version_id}: {r.executed_tests}/{r.total_tests} tests,"
            f" rate {r.selection_rate:.2f},"
            f" exec+collect {r.execution_collection_seconds:.3f}s,"
            f" {row.verified}{speedup}"
        )
    lines.append(
        f"mean selection rate {result.mean_selection_rate:.4f}"
        f" (plain-rts rate {result.mean_rts_rate:.4f})"
    )
    if result.mean_speedup is not None:
        lines.append(f"mean speedup {result.mean_speedup:.2f}x")
    return "\n".join(lines) + "\n"


def _replay_json(result: ReplayResult) -> str:
    rows = []
    for row in result.rows:
        r = row.result
        rows.append(
            {
                "version_id": r.version_id,
                "total_tests": r.total_tests,
                "rts_selected": len(r.selection.rts_selected),
                "final_selected": len(r.selection.final_selected),
                "selection_rate": r.selection_rate,
                "lines_covered": r.report.totals.lines_covered,
                "lines_total": r.report.totals.lines_total,
                "verified": row.verified,
            }
        )
    payload = {
        "rows": rows,
        "mean_selection_rate": result.mean_selection_rate,
        "mean_rts_rate": result.mean_rts_rate,
        "mean_speedup": result.mean_speedup,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (
        ParseError,
        LinkError,
        SnapshotInvalid,
        ParamError,
        CorruptStore,
        IncompatibleStore,
        StaleProbe,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "analyze":
        snapshot = load_project(args.project)
        sel = analyze_against_store(args.store, snapshot)
        print(selection_to_json(sel))
        return 0

    if args.command == "run":
        snapshot = load_project(args.project)
        result = run_incremental(
            args.store,
            snapshot,
            include_tests=args.include_tests,
            test_cost_s=args.test_cost_ms / 1000.0,
        )
        _print_run(result, args.format)
        return 0

    if args.command == "full":
        snapshot = load_project(args.project)
        _, _, report = run_full(
            snapshot,
            include_tests=args.include_tests,
            test_cost_s=args.test_cost_ms / 1000.0,
        )
        sys.stdout.write(render_report(report, args.format).decode("utf-8"))
        return 0

    if args.command == "verify":
        snapshot = load_project(args.project)
        run_incremental(
            args.store,
            snapshot,
            include_tests=args.include_tests,
            test_cost_s=args.test_cost_ms / 1000.0,
        )
        oracle_cov, _, _ = run_full(snapshot, include_tests=args.include_tests)
        state = load_state(args.store)
        assert state is not None
        diffs = verify_equivalence(state.coverage, oracle_cov)
        if not diffs:
            print("equal")
            return 0
        for d in diffs:
            missing = ", ".join(str(p) for p in sorted(d.missing)) or "-"
            extra = ", ".join(str(p) for p in sorted(d.extra)) or "-"
            print(f"unit {d.unit}: missing [{missing}] extra [{extra}]")
        return 1

    if args.command == "gen":
        history = generate_history(args.seed, _params_from(args))
        paths = write_history(history, args.out)
        print(f"wrote {len(paths)} versions to {args.out}")
        return 0

    if args.command == "replay":
        if args.history:
            history = load_history(args.history)
        else:
            history = generate_history(args.seed, _params_from(args))
        result = replay(
            history,
            args.store,
            verify=not args.no_verify,
            include_tests=args.include_tests,
            test_cost_s=args.test_cost_ms / 1000.0,
        )
        if args.format == "csv":
            rendered = replay_csv(result)
        elif args.format == "json":
            rendered = _replay_json(result)
        else:
            rendered = _replay_text(result)
        if args.out:
            Path(args.out).write_text(rendered, encoding="utf-8")
        else:
            sys.stdout.write(rendered)
        return 0 if result.all_equal else 1

    if args.command == "report":
        snapshot = load_project(args.project)
        state = load_state(args.store)
        if state is None:
            print("error: store is empty; run the pipeline first", file=sys.stderr)
            return 2
        from .report import compute_report

        report = compute_report(snapshot, state.coverage, args.include_tests)
        sys.stdout.write(render_report(report, args.format).decode("utf-8"))
        return 0

    raise AssertionError(f"unhandled command {args.command}")  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
