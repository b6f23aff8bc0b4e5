"""Command-line surface: run, validate, summarize, plot-data, selftest.

Exit codes: 0 success (for run: all tasks completed), 1 error (bad input,
unknown option values, I/O failure), 2 for a run whose tasks did not all
complete within the horizon.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .oracles import run_adaptation_suite, run_miqp_suite, run_qp_suite
from .plotting import PLOT_KINDS, render_figure, write_plot_csv
from .scenario import (
    ParseError,
    Scenario,
    TraceFormatError,
    ValidationError,
    load_scenario_file,
    read_trace,
    write_trace,
)
from .world import SimulationError, run_scenario, summarize


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _load(path: str) -> Scenario:
    sc = load_scenario_file(path)
    for w in sc.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return sc


def _cmd_run(args) -> int:
    try:
        sc = _load(args.scenario)
    except (OSError, ParseError, ValidationError) as e:
        return _err(str(e))
    if args.until is not None:
        if args.until <= 0:
            return _err("--until must be a positive number of seconds")
        sc.t_final = args.until
    t0 = time.perf_counter()
    try:
        records = run_scenario(sc)
    except SimulationError as e:
        return _err(str(e))
    wall = time.perf_counter() - t0
    try:
        write_trace(records, args.out, sc)
    except OSError as e:
        return _err(f"cannot write trace: {e}")
    n_tasks = len(sc.tasks)
    if records:
        metrics = summarize(records, dt=sc.dt, eps=sc.eps)
        completed = metrics.tasks_completed
        reassignments = metrics.reassignments
    else:
        completed = 0
        reassignments = 0
    print(
        f"{completed}/{n_tasks} tasks completed; "
        f"{reassignments} reassignments; {wall:.1f} s"
    )
    return 0 if completed == n_tasks else 2


def _cmd_validate(args) -> int:
    try:
        sc = _load(args.scenario)
    except (OSError, ParseError, ValidationError) as e:
        return _err(str(e))
    print(
        f"OK: {sc.name}: {len(sc.robots)} robots, {len(sc.tasks)} tasks, "
        f"{len(sc.regions)} regions, {len(sc.schedule)} schedule events"
    )
    return 0


def _cmd_summarize(args) -> int:
    try:
        trace = read_trace(args.trace)
    except (OSError, TraceFormatError) as e:
        return _err(str(e))
    if not trace.records:
        return _err("trace contains no records to summarize")
    sc = trace.scenario
    metrics = summarize(
        trace.records, dt=sc.get("dt"), eps=sc.get("eps", 0.01)
    )
    print(f"scenario: {sc.get('name', '?')}")
    labels = {t["id"]: t.get("label") or f"task {t['id']}" for t in sc.get("tasks", [])}
    for m, (step, t) in enumerate(
        zip(metrics.completion_steps, metrics.completion_times)
    ):
        name = labels.get(m, f"task {m}")
        if step is None:
            print(f"{name}: not completed")
        else:
            print(f"{name}: completed at t={t:.3f} s (step {step})")
    print(f"tasks completed: {metrics.tasks_completed}/{len(metrics.completion_steps)}")
    print(f"reassignments: {metrics.reassignments}")
    if metrics.occupancy is not None:
        print(f"disturbance occupancy: {metrics.occupancy:.4f}")
    print("final specialization:")
    for i, row in enumerate(metrics.final_spec):
        vals = " ".join(f"{v:.4f}" for v in row)
        print(f"  robot {i}: {vals}")
    return 0


def _cmd_plot_data(args) -> int:
    if args.what not in PLOT_KINDS:
        return _err(
            f"unknown --what {args.what!r}; choices: {', '.join(PLOT_KINDS)}"
        )
    try:
        trace = read_trace(args.trace)
    except (OSError, TraceFormatError) as e:
        return _err(str(e))
    try:
        write_plot_csv(trace.records, args.what, args.out)
    except OSError as e:
        return _err(f"cannot write plot data: {e}")
    if args.fig is not None:
        try:
            render_figure(trace.records, trace.scenario, args.what, args.fig)
        except OSError as e:
            return _err(f"cannot render figure: {e}")
    return 0


_SUITES = {
    "qp": run_qp_suite,
    "miqp": run_miqp_suite,
    "adaptation": run_adaptation_suite,
}


def _cmd_selftest(args) -> int:
    if args.oracle is not None and args.oracle not in _SUITES:
        return _err(
            f"unknown --oracle {args.oracle!r}; choices: {', '.join(_SUITES)}"
        )
    names = [args.oracle] if args.oracle else list(_SUITES)
    all_ok = True
    for name in names:
        report = _SUITES[name]()
        for line in report.lines():
            print(line)
        all_ok = all_ok and report.ok
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptalloc",
        description=(
            "Adaptive task allocation for heterogeneous robot teams: "
            "simulate scenarios, inspect traces, and self-check the solvers."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write its trace")
    p.add_argument("--scenario", required=True, help="scenario YAML path")
    p.add_argument("--out", required=True, help="trace output path")
    p.add_argument(
        "--until", type=float, default=None,
        help="override the scenario horizon (seconds)",
    )
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="check a scenario document")
    p.add_argument("--scenario", required=True, help="scenario YAML path")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("summarize", help="metrics of a recorded trace")
    p.add_argument("--trace", required=True, help="trace file path")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser(
        "plot-data", help="export plot columns (and optionally a figure)"
    )
    p.add_argument("--trace", required=True, help="trace file path")
    p.add_argument(
        "--what", required=True,
        help=f"view to export: {', '.join(PLOT_KINDS)}",
    )
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument(
        "--fig", default=None,
        help="also render the view as an image to this path",
    )
    p.set_defaults(func=_cmd_plot_data)

    p = sub.add_parser("selftest", help="run the solver cross-check suites")
    p.add_argument(
        "--oracle", default=None,
        help="which suite: qp, miqp, or adaptation (default: all)",
    )
    p.set_defaults(func=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
