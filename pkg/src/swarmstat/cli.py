"""Command line: ``swarmstat run | plan | score | figures``.

Exit status is 0 on success, 2 for invalid input (missing or malformed
scenario, bad flags), 3 when planning is infeasible and 1 for I/O failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .planning import Infeasible, plan_mission
from .scenario import Scenario, ScenarioError, bundled_scenario_path, load_scenario
from .scoring import score_dir
from .simengine import run_simulation
from .traceio import FORMATS, SCHEMAS, write_table, write_trace

FIGURE_SCENARIOS = ("fig3_analog", "fig4_analog", "fig6_analog", "fig8_analog")

EXIT_IO, EXIT_INPUT, EXIT_INFEASIBLE = 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


def resolve_scenario(arg: str) -> Path:
    """A scenario file path, or the name of a bundled scenario when no such file exists."""
    p = Path(arg)
    if p.exists() or p.suffix:
        return p
    bundled = bundled_scenario_path(arg)
    return bundled if bundled.exists() else p


def load(arg: str, seed: int | None, paper_cost: bool) -> Scenario:
    path = resolve_scenario(arg)
    if not path.exists():
        raise CliError(f"scenario file not found: {path}", EXIT_INPUT)
    try:
        sc = load_scenario(path)
    except ScenarioError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None
    if seed is not None:
        sc = sc.with_seed(seed)
    if paper_cost:
        sc = sc.with_params(cost_mode="paper")
    return sc


def _decimate(v: float) -> float | None:
    return None if v <= 0 else v


def run_one(sc: Scenario, out: Path, fmt: str, decimate: float | None) -> tuple[int, str]:
    trace = run_simulation(sc, decimate=decimate)
    write_trace(trace, out, fmt)
    reached, surv = trace.completion()
    return sc.seed, f"seed {sc.seed}: {reached}/{surv} surviving agents reached targets, {trace.n_replans} replans"


def _run_job(job):
    sc, out, fmt, decimate = job
    return run_one(sc, Path(out), fmt, decimate)


def cmd_run(args) -> int:
    if args.runs < 1:
        raise CliError("--runs must be at least 1", EXIT_INPUT)
    base = load(args.scenario, args.seed, args.paper_cost)
    out = Path(args.out)
    dec = _decimate(args.decimate)
    if args.runs == 1:
        jobs = [(base, out, args.format, dec)]
    else:
        jobs = [(base.with_seed(base.seed + k), out / f"seed_{base.seed + k}", args.format, dec)
                for k in range(args.runs)]
    try:
        if args.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                results = list(pool.map(_run_job, jobs))
        else:
            results = [_run_job(j) for j in jobs]
    except Infeasible as exc:
        raise CliError(f"initial planning infeasible: {exc}", EXIT_INFEASIBLE) from None
    for _, line in results:
        print(line)
    return 0


def plan_rows(sc: Scenario, plan) -> list[tuple]:
    rows = []
    for aid in plan.agent_ids:
        if aid not in plan.assignment:
            continue
        for k, (x, y) in enumerate(plan.waypoints[aid]):
            rows.append((plan.replan_index, round(plan.t, 2), aid, plan.assignment[aid], k, round(float(x), 4),
                         round(float(y), 4)))
    return rows


def cmd_plan(args) -> int:
    sc = load(args.scenario, args.seed, args.paper_cost)
    try:
        plan = plan_mission([(a.x, a.y) for a in sc.initial_agents], [(t.x, t.y) for t in sc.nominal_targets],
                            sc.grid, sc.area, sc.obstacles, cost_mode=sc.params.cost_mode,
                            assignment_mode=sc.params.assignment_mode)
    except Infeasible as exc:
        raise CliError(f"planning infeasible: {exc}", EXIT_INFEASIBLE) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / f"plans.{args.format}", SCHEMAS["plans"], plan_rows(sc, plan), args.format)
    for aid in plan.agent_ids:
        if aid in plan.assignment:
            print(f"agent {aid} -> target {plan.assignment[aid]}: {len(plan.waypoints[aid])} waypoints")
    return 0


def cmd_score(args) -> int:
    try:
        rows, summary = score_dir(args.trace_dir, args.cutoff, args.order)
    except (ValueError, KeyError) as exc:
        raise CliError(f"corrupt trace in {args.trace_dir}: {exc}", EXIT_INPUT) from None
    out = Path(args.out) if args.out else Path(args.trace_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "ospa.csv", ("t", "ospa_agents", "ospa_targets"), rows, "csv")
    (out / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"completion {summary['completion_fraction']:.3f}, replans {summary['replans']}, "
          f"deaths {summary['deaths']}, mean OSPA agents {summary['mean_ospa_agents']:.2f} m, "
          f"targets {summary['mean_ospa_targets']:.2f} m")
    return 0


def cmd_figures(args) -> int:
    out = Path(args.out)
    for name in args.only or FIGURE_SCENARIOS:
        sc = load(name, args.seed, args.paper_cost)
        _, line = run_one(sc, out / name, args.format, _decimate(args.decimate))
        print(f"{name}: {line}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swarmstat", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--format", choices=FORMATS, default="csv", help="trace file format")
        p.add_argument("--paper-cost", action="store_true", help="unit-move A* cost with raw Euclidean heuristic")

    p = sub.add_parser("run", help="simulate one mission or a seeded batch")
    p.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    common(p, "trace")
    p.add_argument("--runs", type=int, default=1, help="batch size; seeds seed..seed+runs-1")
    p.add_argument("--decimate", type=float, default=10.0, help="truth recording rate in Hz (0 = every tick)")
    p.add_argument("--workers", type=int, default=1, help="parallel processes for batches")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plan", help="plan once from the scenario's initial state")
    p.add_argument("--scenario", required=True)
    common(p, "plan")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("score", help="OSPA and mission metrics of a trace directory")
    p.add_argument("trace_dir")
    p.add_argument("--cutoff", type=float, default=100.0, help="OSPA cutoff in meters")
    p.add_argument("--order", type=float, default=1.0, help="OSPA order")
    p.add_argument("--out", default=None, help="output directory (default: the trace directory)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("figures", help="regenerate the figure-analog datasets")
    common(p, "figures")
    p.add_argument("--decimate", type=float, default=10.0)
    p.add_argument("--only", nargs="*", choices=FIGURE_SCENARIOS, help="subset of scenarios")
    p.set_defaults(func=cmd_figures)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"swarmstat: error: {exc}", file=sys.stderr)
        return exc.status
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"swarmstat: error: {exc.strerror or exc}{where}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
