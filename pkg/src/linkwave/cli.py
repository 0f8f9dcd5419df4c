"""``linkwave`` command line.

Exit codes: 0 success, 1 usage, 2 validation or simulation error,
3 infeasible model (or no plan found), 4 verification failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .io import (
    FormatError,
    file_digest,
    read_flows,
    read_plan,
    write_flows,
    write_grid,
    write_json,
    write_plan,
    write_shock,
)
from .kinematics import SimulationError, metrics, moskowitz_grid, shock_series, simulate
from .milp import ExtractionError, MilpOptions, ModelError, build_model, extract_flows, extract_signal_plan
from .network import InflowProfile, Scenario, ValidationError, load_scenario, require_valid, write_inflow_csv
from .optimize import solve_embedded, verify
from .scenarios import PRNG, random_inflows
from .solver import BnbParams, SolutionImportError, export_mps, import_solution, write_solution_file

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which is ours for bad input
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared plumbing


def _load(config: Path, seed: int | None = None, low: float = 0.0, high: float = 3000.0) -> Scenario:
    try:
        sc = load_scenario(config)
    except FileNotFoundError as exc:
        raise CliError(EXIT_INVALID, f"cannot read {exc.filename}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_INVALID, f"{config}: malformed config ({exc})") from exc
    if seed is not None:
        sources = [ln.id for ln in sc.network.links if ln.role == "source"]
        flows = random_inflows(seed, sources, sc.grid.n_steps, high=high, low=low)
        net = sc.network.with_inflows(InflowProfile(k, tuple(v)) for k, v in flows.items())
        sc = Scenario(net, sc.grid, sc.options, sc.path, sc.digest)
    try:
        require_valid(sc.network, sc.grid)
    except ValidationError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from exc
    return sc


class _Run:
    """Collects outputs and writes manifest.json for one command."""

    def __init__(self, command: str, out: Path, scenario: Scenario | None, params: dict[str, Any]):
        self.command = command
        self.out = out
        self.scenario = scenario
        self.params = params
        self.outputs: list[Path] = []
        self.t0 = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def finish(self, result: dict[str, Any]) -> None:
        sc = self.scenario
        write_json(self.out / "manifest.json", "manifest", {
            "command": self.command,
            "config": str(sc.path) if sc is not None and sc.path else None,
            "config_sha256": sc.digest if sc is not None else None,
            "parameters": self.params,
            "seed": self.params.get("seed"),
            "prng": PRNG if self.params.get("seed") is not None else None,
            "tool_version": __version__,
            "outputs": {p.name: file_digest(p) for p in self.outputs if p.exists()},
            "result": result,
            "wall_time_s": time.perf_counter() - self.t0,
        })


def _metrics_payload(traj, sc: Scenario) -> dict[str, float]:
    return metrics(traj, sc.network, sc.grid).as_dict()


def _figures(run: _Run, traj, plan, sc: Scenario, enabled: bool) -> None:
    if not enabled:
        return
    from .plotting import plot_cumulative, plot_plan

    plot_cumulative(traj, run.path("cumulative.png"))
    if plan is not None and plan.green:
        plot_plan(plan, sc.grid.dt, run.path("plan.png"))


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    sc = _load(args.config, args.seed)
    try:
        plan = read_plan(args.plan, sc.network, sc.grid.n_steps)
    except (FormatError, KeyError, ValueError) as exc:
        raise CliError(EXIT_INVALID, f"{args.plan}: {exc}") from exc
    try:
        traj = simulate(sc.network, sc.grid, plan)
    except SimulationError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from exc
    run = _Run("simulate", args.out, sc, {"plan": str(args.plan), "seed": args.seed})
    write_flows(run.path("flows.csv"), traj)
    summary = _metrics_payload(traj, sc)
    write_json(run.path("metrics.json"), "metrics", summary)
    _figures(run, traj, plan, sc, not args.no_figures)
    run.finish(summary)
    print(f"throughput {summary['throughput']:.9g} veh, occupancy integral {summary['occupancy_integral']:.9g} veh*h")
    return EXIT_OK


def cmd_optimize(args) -> int:
    sc = _load(args.config, args.seed)
    try:
        options = MilpOptions.from_config(sc.options)
        model = build_model(sc.network, sc.grid, options)
    except (ModelError, ValidationError) as exc:
        raise CliError(EXIT_INVALID, str(exc)) from exc
    params = {
        "solver": args.solver, "time_limit": args.time_limit, "gap_tol": args.gap_tol,
        "branching": args.branching, "node_selection": args.node_selection, "seed": args.seed,
    }
    run = _Run("optimize", args.out, sc, params)
    model_info = {"rows": model.n_rows, "columns": model.n_cols, "binaries": int(model.binary.sum())}

    if args.solver == "mps-only":
        export_mps(model, run.path("model.mps"))
        run.finish({"model": model_info})
        print(f"wrote {args.out / 'model.mps'}: {model_info['rows']} rows, {model_info['columns']} columns, "
              f"{model_info['binaries']} binaries")
        return EXIT_OK

    if args.solver == "embedded":
        sol = solve_embedded(model, BnbParams(
            time_limit=args.time_limit, gap_tol=args.gap_tol,
            branching=args.branching, node_selection=args.node_selection, keep_log=False,
        ))
    else:
        from .solver.external import ExternalSolverUnavailable, solve_mps_with_highs

        mps = run.path("model.mps")
        export_mps(model, mps)
        sol_file = run.path("external_solution.txt")
        try:
            ext = solve_mps_with_highs(mps, sol_file, args.time_limit, args.gap_tol)
        except ExternalSolverUnavailable as exc:
            raise CliError(EXIT_USAGE, str(exc)) from exc
        if not sol_file.exists():
            return _no_plan(run, model_info, ext.status)
        try:
            sol = import_solution(model, sol_file)
        except SolutionImportError as exc:
            raise CliError(EXIT_INVALID, f"external solution rejected: {exc}") from exc

    if sol.x is None:
        return _no_plan(run, model_info, sol.status)

    plan = extract_signal_plan(model, sol.x)
    flows = extract_flows(model, sol.x)
    write_plan(run.path("plan.csv"), plan)
    write_flows(run.path("flows.csv"), flows)
    write_solution_file(run.path("solution.txt"), model.column_names(), sol.x, sol.status, sol.bound)
    check = verify(sc.network, sc.grid, plan, flows)
    summary = {
        "status": sol.status,
        "objective": sol.objective,
        "bound": sol.bound,
        "gap": sol.gap,
        "nodes": sol.nodes,
        "solver": args.solver,
        "model": model_info,
        "verification_max_deviation": check.max_deviation,
        **_metrics_payload(flows, sc),
    }
    write_json(run.path("metrics.json"), "metrics", summary)
    _figures(run, flows, plan, sc, not args.no_figures)
    run.finish({k: summary[k] for k in ("status", "objective", "bound", "gap", "nodes")})
    nodes = f"{sol.nodes} nodes, " if args.solver == "embedded" else ""
    print(f"{sol.status}: objective {sol.objective:.9g}, bound {sol.bound:.9g}, gap {sol.gap:.3g}, "
          f"{nodes}{time.perf_counter() - run.t0:.1f} s")
    return EXIT_OK


def _no_plan(run: _Run, model_info: dict, status: str) -> int:
    run.finish({"status": status, "model": model_info})
    if status == "infeasible":
        msg = "model is infeasible: no signal plan satisfies every row (no certificate rows available)"
    else:
        msg = f"no feasible plan found ({status})"
    raise CliError(EXIT_INFEASIBLE, msg)


def cmd_verify(args) -> int:
    sc = _load(args.config, args.seed)
    ids = [ln.id for ln in sc.network.links]
    try:
        plan = read_plan(args.plan, sc.network, sc.grid.n_steps)
        flows = read_flows(args.flows, ids, sc.grid.dt, sc.grid.n_steps)
        check = verify(sc.network, sc.grid, plan, flows, args.tol)
    except (FormatError, KeyError, ValueError) as exc:
        raise CliError(EXIT_INVALID, str(exc)) from exc
    for lid in ids:
        if lid in check.per_link:
            print(f"{lid}: max |deviation| {check.per_link[lid]:.3g} veh/h")
    verdict = "PASS" if check.passed else "FAIL"
    where = ""
    if not check.passed and check.worst_cell is not None:
        lid, series, step = check.worst_cell
        where = f" at link {lid}, {series}, step {step}"
    print(f"{verdict}: max deviation {check.max_deviation:.3g} veh/h{where} (tolerance {args.tol:g})"
          + (f"; {check.message}" if check.message else ""))
    if args.out is not None:
        run = _Run("verify", args.out, sc, {"plan": str(args.plan), "flows": str(args.flows), "tol": args.tol,
                                            "seed": args.seed})
        write_json(run.path("verification.json"), "verification", {
            "verdict": verdict, "max_deviation": check.max_deviation, "per_link": check.per_link,
            "worst_cell": list(check.worst_cell) if check.worst_cell else None,
        })
        run.finish({"verdict": verdict, "max_deviation": check.max_deviation})
    return EXIT_OK if check.passed else EXIT_VERIFY


def cmd_grid(args) -> int:
    sc = _load(args.config, args.seed)
    ids = [ln.id for ln in sc.network.links]
    if args.link not in ids:
        raise CliError(EXIT_INVALID, f"unknown link id {args.link!r}; links are {', '.join(ids)}")
    if args.nt < 2 or args.nx < 2:
        raise CliError(EXIT_USAGE, "--nt and --nx must both be at least 2")
    try:
        if args.flows is not None:
            traj = read_flows(args.flows, ids, sc.grid.dt, sc.grid.n_steps)
        else:
            traj = simulate(sc.network, sc.grid, read_plan(args.plan, sc.network, sc.grid.n_steps))
    except (FormatError, KeyError, ValueError, SimulationError) as exc:
        raise CliError(EXIT_INVALID, str(exc)) from exc
    link = sc.network.link(args.link)
    curves = traj.curves(args.link)
    times = np.linspace(0.0, sc.grid.horizon, args.nt)
    xs = np.linspace(0.0, link.length, args.nx)
    values = moskowitz_grid(curves, link, times, xs)
    xstar = shock_series(curves, link, times)
    run = _Run("grid", args.out, sc, {"link": args.link, "nt": args.nt, "nx": args.nx, "seed": args.seed,
                                      "flows": str(args.flows) if args.flows else None,
                                      "plan": str(args.plan) if args.plan else None})
    write_grid(run.path(f"grid_{args.link}.csv"), args.link, times, xs, values)
    write_shock(run.path(f"shock_{args.link}.csv"), args.link, times, xstar)
    if not args.no_figures:
        from .plotting import plot_moskowitz

        plot_moskowitz(times, xs, values, xstar, args.link, run.path(f"moskowitz_{args.link}.png"))
    run.finish({"min_shock_position": float(xstar.min()), "max_N": float(values.max())})
    print(f"link {args.link}: {args.nt} x {args.nx} grid, min x* = {xstar.min():.6g} mi")
    return EXIT_OK


def cmd_generate_inflows(args) -> int:
    sc = _load(args.config) if args.config is not None else None
    if args.links:
        links = [s.strip() for s in args.links.split(",") if s.strip()]
    elif sc is not None:
        links = [ln.id for ln in sc.network.links if ln.role == "source"]
    else:
        raise CliError(EXIT_USAGE, "give --links or a config to take the source links from")
    steps = args.steps if args.steps is not None else (sc.grid.n_steps if sc is not None else None)
    if steps is None:
        raise CliError(EXIT_USAGE, "give --steps or a config to take the horizon from")
    if not 0 <= args.low <= args.high:
        raise CliError(EXIT_USAGE, "need 0 <= --low <= --high")
    flows = random_inflows(args.seed, links, steps, high=args.high, low=args.low)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_inflow_csv(args.out, [InflowProfile(k, tuple(v)) for k, v in flows.items()])
    run = _Run("generate-inflows", args.out.parent, sc, {
        "seed": args.seed, "links": links, "steps": steps, "low": args.low, "high": args.high,
    })
    run.outputs.append(args.out)
    run.finish({"file": args.out.name})
    print(f"wrote {args.out} ({len(links)} links x {steps} steps, {PRNG} seed {args.seed})")
    return EXIT_OK


def cmd_import_solution(args) -> int:
    sc = _load(args.config, args.seed)
    try:
        model = build_model(sc.network, sc.grid, MilpOptions.from_config(sc.options))
        sol = import_solution(model, args.solution)
        plan = extract_signal_plan(model, sol.x)
    except (ModelError, SolutionImportError, ExtractionError) as exc:
        raise CliError(EXIT_INVALID, f"solution rejected: {exc}") from exc
    flows = extract_flows(model, sol.x)
    run = _Run("import-solution", args.out, sc, {"solution": str(args.solution), "seed": args.seed})
    write_plan(run.path("plan.csv"), plan)
    write_flows(run.path("flows.csv"), flows)
    summary = {"status": sol.status, "objective": sol.objective, "bound": sol.bound, "gap": sol.gap}
    write_json(run.path("metrics.json"), "metrics", {**summary, **_metrics_payload(flows, sc)})
    run.finish(summary)
    print(f"accepted: objective {sol.objective:.9g} ({sol.status})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="linkwave", description="Link-level kinematic wave simulation and signal-timing MILP.")
    p.add_argument("--version", action="version", version=f"linkwave {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("config", type=Path, help="network config (YAML)")
        sp.add_argument("--seed", type=int, default=None,
                        help="replace source inflows by seeded uniform draws on [0, 3000] veh/h")
        if out_required:
            sp.add_argument("--out", type=Path, required=True, help="output directory")

    s = sub.add_parser("simulate", help="run a signal plan forward")
    common(s)
    s.add_argument("--plan", type=Path, required=True)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("optimize", help="build and solve the signal-timing MILP")
    common(s)
    s.add_argument("--solver", choices=("embedded", "mps-only", "highs"), default="embedded")
    s.add_argument("--time-limit", type=float, default=300.0)
    s.add_argument("--gap-tol", type=float, default=1e-4)
    s.add_argument("--branching", choices=("signals_by_step", "most_fractional"), default="signals_by_step")
    s.add_argument("--node-selection", choices=("best_bound", "depth_first"), default="best_bound")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("verify", help="re-simulate a plan and compare with MILP flows")
    common(s, out_required=False)
    s.add_argument("--plan", type=Path, required=True)
    s.add_argument("--flows", type=Path, required=True)
    s.add_argument("--tol", type=float, default=1e-5, help="veh/h")
    s.add_argument("--out", type=Path, default=None)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("grid", help="Moskowitz surface and shock path of one link")
    common(s)
    s.add_argument("--link", required=True)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--flows", type=Path)
    src.add_argument("--plan", type=Path)
    s.add_argument("--nt", type=int, default=101)
    s.add_argument("--nx", type=int, default=61)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("generate-inflows", help="seeded random inflow table")
    s.add_argument("config", type=Path, nargs="?", default=None)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--links", default=None, help="comma-separated link ids")
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--low", type=float, default=0.0)
    s.add_argument("--high", type=float, default=3000.0)
    s.add_argument("--out", type=Path, required=True, help="CSV file to write")
    s.set_defaults(func=cmd_generate_inflows)

    s = sub.add_parser("import-solution", help="check an external solution and extract plan and flows")
    common(s)
    s.add_argument("solution", type=Path)
    s.set_defaults(func=cmd_import_solution)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"linkwave {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
