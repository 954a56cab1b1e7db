"""Batch commands and the service launcher.

Exit codes: 0 ok, 2 parse error (arguments or YAML), 3 validation failure,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import scenario as scenario_io
from . import simulator
from .errors import AndOrPlanError, ScenarioError, ScenarioParseError
from .hierarchy import initialize_episodes
from .planner import NoPathError, best_path, model_arc_cost

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


def _load_scenario(ref: str) -> scenario_io.Scenario:
    path = Path(ref)
    if path.exists():
        return scenario_io.load(path)
    if ref in scenario_io.bundled_names():
        return scenario_io.load_bundled(ref)
    raise ScenarioParseError(f"no such scenario file or bundled name: '{ref}'")


def _sim_config(args) -> simulator.SimConfig:
    return simulator.SimConfig(
        seed=args.seed,
        no_noise=args.no_noise,
        max_time=args.max_time,
    )


def cmd_validate(args) -> int:
    scenario = _load_scenario(args.scenario)
    problems = scenario.model.validate()
    print(
        json.dumps(
            {
                "scenario": scenario.name,
                "graphs": [g.id for g in scenario.model.gamma_order()],
                "agents": sorted(scenario.agents),
                "work_items": [w.id for w in scenario.work_items],
                "problems": problems,
            },
            indent=2,
        )
    )
    return 0 if not problems else EXIT_VALIDATION


def cmd_plan(args) -> int:
    scenario = _load_scenario(args.scenario)
    states = initialize_episodes(scenario.model)
    cost = model_arc_cost(scenario.model, states)
    plans = {}
    for g in scenario.model.gamma_order():
        try:
            path = best_path(g, states[g.id], cost)
            plans[g.id] = {"arcs": list(path.arcs), "cost": path.total_cost}
        except NoPathError:
            plans[g.id] = {"arcs": [], "cost": None}
    print(json.dumps({"scenario": scenario.name, "best_paths": plans}, indent=2))
    return 0


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args.scenario)
    trace, report = simulator.run(scenario, _sim_config(args))
    trace_path = Path(args.trace)
    trace_path.write_text(trace.to_jsonl(), encoding="utf-8")
    report_path = Path(args.report)
    report_path.write_text(report.to_text(), encoding="utf-8")
    print(
        json.dumps(
            {
                "scenario": scenario.name,
                "makespan": trace.makespan,
                "statuses": trace.final_status,
                "aborted": trace.aborted,
                "trace": str(trace_path),
                "report": str(report_path),
            },
            indent=2,
        )
    )
    return 0 if not trace.aborted else EXIT_RUNTIME


def cmd_compare(args) -> int:
    scenario = _load_scenario(args.scenario)
    concurrent, sequential, ratio = simulator.compare_concurrent_sequential(
        scenario, _sim_config(args)
    )
    print(
        json.dumps(
            {
                "scenario": scenario.name,
                "concurrent_makespan": round(concurrent, 6),
                "sequential_makespan": round(sequential, 6),
                "ratio": round(ratio, 6),
            },
            indent=2,
        )
    )
    return 0


def cmd_export(args) -> int:
    scenario = _load_scenario(args.scenario)
    graphs = [args.graph] if args.graph else [g.id for g in scenario.model.gamma_order()]
    for g in graphs:
        print(scenario_io.export_dot(scenario.model, g))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import SessionManager, create_app

    app = create_app(SessionManager())
    app.state.default_mode = args.mode
    app.state.default_speed = args.speed
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="andorplan",
        description="Concurrent AND/OR-graph task planning, simulation and session service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, sim_flags: bool = False):
        p.add_argument(
            "--scenario",
            required=True,
            help="scenario file path or bundled name "
            f"({', '.join(scenario_io.bundled_names())})",
        )
        if sim_flags:
            p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
            p.add_argument("--no-noise", action="store_true", help="zero std-devs and random failures")
            p.add_argument("--max-time", type=float, default=None, help="abort after this much simulated time")

    p = sub.add_parser("validate", help="structural validation of a scenario")
    add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="best cooperation paths and costs per graph")
    add_common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run the scenario and write trace/report files")
    add_common(p, sim_flags=True)
    p.add_argument("--trace", default="trace.jsonl", help="trace output path (JSON lines)")
    p.add_argument("--report", default="report.txt", help="timing report output path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="concurrent vs sequential makespans")
    add_common(p, sim_flags=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export", help="Graphviz DOT export of the scenario graphs")
    add_common(p)
    p.add_argument("--graph", default=None, help="one graph id (default: all)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="start the session service")
    add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--mode", choices=("stepped", "live"), default="stepped")
    p.add_argument("--speed", type=float, default=1.0, help="wall-clock scale factor in live mode")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AndOrPlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
