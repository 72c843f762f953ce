"""Command-line entry point: ``vtube run | check | bench``.

Exit codes of ``run``: 0 all UAVs arrived, 2 timeout, 3 safety violation
after the initial recovery (takes precedence over a timeout), 1 for
unreadable or invalid scenarios and I/O failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TIMEOUT = 2
EXIT_SAFETY = 3


def _list(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("VTUBE_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vtube", description="Multi-UAV virtual tube passing simulator.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write the output bundle")
    r.add_argument("scenario", help="scenario or manifest file, or the name of a shipped scenario")
    r.add_argument("-o", "--out", type=Path, default=Path("out"), help="output directory (default: out)")
    r.add_argument("--dt", type=float, help="time step override (s)")
    r.add_argument("--t-max", type=float, help="simulated time limit override (s)")
    r.add_argument("--integrator", choices=("exact", "euler"))
    r.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker threads for command computation (default: $VTUBE_THREADS or 1)")
    r.add_argument("--record-every", type=int, help="write every K-th step to the trajectory")

    c = sub.add_parser("check", help="run the invariant suite")
    c.add_argument("--filter", help="only checks whose name contains this text")

    b = sub.add_parser("bench", help="time the controller on random swarms")
    b.add_argument("--m", type=_list(int), default=[10, 40, 160], help="swarm sizes (comma list)")
    b.add_argument("--rs", type=_list(float), default=[2.5, 5.0, 10.0],
                   help="safety radii for the M=40 sweep (comma list)")
    b.add_argument("--steps", type=int, default=200, help="steps per benched world")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--json", type=Path, help="also write the report as JSON")
    return ap


def run_scenario(scenario, out: Path, overrides: dict | None = None, threads: int = 1):
    """Simulate ``scenario`` and write its bundle into ``out``.

    Returns ``(exit_code, record)``; ``record`` is None when no run happened.
    """
    from .output import write_bundle, write_json
    from .scenario import ScenarioError, build_world, read_document, resolve
    from .simulation import SimulationAborted, metrics, run

    out = Path(out)
    try:
        resolved = resolve(read_document(scenario), overrides)
        world = build_world(resolved, threads=threads)
    except (OSError, json.JSONDecodeError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR, None
    for msg in world.warnings:
        print(f"WARNING: {msg}", file=sys.stderr)
    try:
        record = run(world)
    except SimulationAborted as exc:
        print(f"error: simulation aborted: {exc}", file=sys.stderr)
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "abort.json", {"message": str(exc), **exc.dump})
        except OSError:
            pass
        return EXIT_ERROR, None
    summary = metrics(record)
    try:
        write_bundle(out, record, summary, resolved, threads)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_ERROR, record
    last = summary["arrival_time_max"]
    print(f"{len(record.arrival_time)}/{summary['uav_count']} arrived"
          + (f", last at {last:.2f} s" if last is not None else "")
          + f"; min distance {summary['min_p_distance']:.3f} m; "
          f"safety violations {summary['safety_violations']}; wall {record.wall_time:.1f} s")
    if record.safety_violation:
        return EXIT_SAFETY, record
    if not record.complete:
        print(f"timeout at t = {record.t_end:g} s", file=sys.stderr)
        return EXIT_TIMEOUT, record
    return EXIT_OK, record


def cmd_run(args) -> int:
    overrides = {"dt": args.dt, "t_max": args.t_max, "integrator": args.integrator,
                 "record_every": args.record_every}
    return run_scenario(args.scenario, args.out, overrides, args.threads)[0]


def cmd_check(args) -> int:
    from .checks import format_table, run_checks

    results = run_checks(args.filter)
    if not results:
        print(f"no check matches {args.filter!r}", file=sys.stderr)
        return EXIT_ERROR
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


def cmd_bench(args) -> int:
    from .bench import format_report, run_bench
    from .output import write_json

    report = run_bench(args.m, args.rs, steps=args.steps, seed=args.seed)
    print(format_report(report))
    if args.json:
        try:
            write_json(args.json, report)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "check": cmd_check, "bench": cmd_bench}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
