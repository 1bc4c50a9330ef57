"""Command-line entry point: status, check, replay, dump, serve.

Exit codes: 0 when every requested obligation is discharged, 1 when some are
failed, stale, or unchecked, 2 for usage and load errors.  The exit code is
the only machine-readable signal; `--json` emits ledger records for CI.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .engine import explore, Limits
from .lang import VobsError
from .manager import (
    DISCHARGED, Ledger, StatusReport, check_all, check_vo, refresh_staleness,
    status_report,
)
from .parser import ParseError
from .project import LoadError, Project, load_project
from .traces import parse_trace, replay_trace

ENV_MAX_STATES = "VOBS_LIMITS_MAX_STATES"


def _limits_override(args) -> dict:
    override: dict = {}
    if os.environ.get(ENV_MAX_STATES):
        override["max_states"] = int(os.environ[ENV_MAX_STATES])
    if getattr(args, "max_states", None):
        override["max_states"] = args.max_states
    return override


def _print_table(rows: list[list[str]], header: list[str]) -> None:
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    print(fmt.format(*header))
    print(fmt.format(*("-" * w for w in widths)))
    for r in rows:
        print(fmt.format(*r))


def _report_rows(report: StatusReport) -> list[list[str]]:
    return [[r.id, r.target, r.kind, r.status, r.via, r.requirement_tag]
            for r in report.rows]


def cmd_status(args) -> int:
    project = load_project(args.project)
    ledger = Ledger.load(project.ledger_path)
    staled = refresh_staleness(project, ledger)
    if staled:
        ledger.save(project.ledger_path)
    report = status_report(project, ledger)
    if args.json:
        print(json.dumps([ledger.get(v.id).to_json() for v in project.vos], indent=2))
    else:
        _print_table(_report_rows(report),
                     ["id", "target", "kind", "status", "via", "requirement"])
        counts = ", ".join(f"{k}={v}" for k, v in sorted(report.counts().items()))
        print(f"\n{len(report.rows)} VOs: {counts}")
        print(f"validated: {'yes' if report.validated else 'no'}")
    return 0 if report.validated else 1


def cmd_check(args) -> int:
    project = load_project(args.project)
    ledger = Ledger.load(project.ledger_path)
    override = _limits_override(args)
    if args.vo_id and not args.all:
        if project.vo(args.vo_id) is None:
            print(f"error: unknown vo {args.vo_id}", file=sys.stderr)
            return 2
        record = check_vo(project, args.vo_id, override, ledger)
        ledger.put(record)
        records = [record]
    else:
        records = check_all(project, ledger, override)
    ledger.save(project.ledger_path)
    if args.json:
        print(json.dumps([r.to_json() for r in records], indent=2))
    else:
        for r in records:
            print(f"{r.id}: {r.status}" + (f" ({r.via})" if r.via else ""))
            if r.evidence:
                for line in r.evidence.splitlines():
                    print(f"    {line}")
    if args.all:
        ok = all(ledger.get(v.id).status == DISCHARGED for v in project.vos)
    else:
        ok = all(r.status == DISCHARGED for r in records)
    return 0 if ok else 1


def cmd_replay(args) -> int:
    project = load_project(args.project)
    trace_path = Path(args.trace)
    if not trace_path.exists():
        trace_path = project.root / args.trace
    if not trace_path.exists():
        print(f"error: trace file {args.trace} not found", file=sys.stderr)
        return 2
    trace = parse_trace(trace_path.read_text(encoding="utf-8"))
    machine_name = args.machine or trace.machine
    machine = project.machines.get(machine_name)
    if machine is None:
        print(f"error: unknown machine {machine_name}", file=sys.stderr)
        return 2
    result = replay_trace(machine, trace, Limits().merged(_limits_override(args)))
    if result.passed:
        print(f"replayed {len(result.labels)} steps")
        return 0
    print(f"failed at step {result.failed_step}: {result.reason}")
    print(f"state before: {result.state_before}")
    return 1


def cmd_dump(args) -> int:
    project = load_project(args.project)
    machine = project.machines.get(args.machine)
    if machine is None:
        print(f"error: unknown machine {args.machine}", file=sys.stderr)
        return 2
    space = explore(machine, Limits().merged(_limits_override(args)))
    for src, label, dst in space.transitions:
        print(f"{src}\t{label}\t{dst}")
    return 0


def cmd_serve(args) -> int:
    from . import server
    return server.serve(args.project, port=args.port, ui_dir=args.ui_dir)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="vobs",
                                 description="validation-obligation manager")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("status", help="show VO statuses (refreshing staleness)")
    p.add_argument("project")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_status)

    p = sub.add_parser("check", help="run one VO or all of them")
    p.add_argument("project")
    p.add_argument("vo_id", nargs="?")
    p.add_argument("--all", action="store_true")
    p.add_argument("--json", action="store_true")
    p.add_argument("--max-states", type=int)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("replay", help="replay a trace file")
    p.add_argument("project")
    p.add_argument("trace")
    p.add_argument("--machine")
    p.add_argument("--max-states", type=int)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("dump", help="dump a machine's state space as an edge list")
    p.add_argument("project")
    p.add_argument("machine")
    p.add_argument("--max-states", type=int)
    p.set_defaults(fn=cmd_dump)

    p = sub.add_parser("serve", help="serve the dashboard and JSON API")
    p.add_argument("project")
    p.add_argument("--port", type=int, default=7070)
    p.add_argument("--ui-dir")
    p.set_defaults(fn=cmd_serve)

    args = ap.parse_args(argv)
    if args.command == "check" and not args.all and not args.vo_id:
        ap.error("check needs a VO id or --all")
    try:
        return args.fn(args)
    except (LoadError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except VobsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
