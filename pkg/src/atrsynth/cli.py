"""Command line entry point.

Subcommands. Each takes a scenario JSON file (bench also accepts a directory
of them):

- ``count``: encoding sizes per method, as CSV.
- ``synth``: build and solve, write trajectory CSVs, a result JSON, and a
  figure; the result is re-checked against the brute-force oracle before the
  command reports success.
- ``verify``: check a stored trajectory under shifts and report its
  robustness value.
- ``export``: write the model as a CPLEX LP file and confirm it parses back
  to an equivalent model.
- ``bench``: per-scenario build/solve wall times and sizes, naive vs
  reduced, as CSV plus an optional figure.

Exit codes: 0 success, 2 infeasible, 3 cap reached, 4 validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, ObjectiveSpec, encode
from .mip import export_model, models_equivalent, parse_lp, solve_mip
from .scenario import Scenario, ScenarioError, load_scenario
from .semantics import atr, per_side_bounds, robust_check
from .shiftsets import (
    ShiftBound,
    ShiftCapExceeded,
    count_stl_binaries,
    count_task_inequalities,
)
from .system import SimulationError, extend_trajectory, read_trajectory, write_trajectory

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_CAP = 3
EXIT_INVALID = 4


class CommandError(Exception):
    """Validation failure; maps to exit code 4."""


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="atr",
        description="Synthesize and check control sequences robust to per-agent time shifts.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, methods=True):
        sp.add_argument("scenario", help="scenario JSON file")
        if methods:
            sp.add_argument(
                "--method",
                choices=["naive", "reduced"],
                default=None,
                help="encoding method (default: reduced where one is needed, both for reports)",
            )
        sp.add_argument(
            "--bound",
            nargs=2,
            type=int,
            metavar=("THETA1", "THETA2"),
            default=None,
            help="override the scenario's shift bound",
        )
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument(
            "--merge-boundary",
            action="store_true",
            help="merge pre-horizon effective indices with instant 0 when deduplicating",
        )
        return sp

    common(sub.add_parser("count", help="report encoding sizes"))

    sp = common(sub.add_parser("synth", help="solve and write the trajectory"))
    sp.add_argument("--time-cap", type=float, default=None, help="solver wall-time cap [s]")
    sp.add_argument("--node-cap", type=int, default=None, help="solver node cap")

    sp = common(sub.add_parser("verify", help="check a stored trajectory"), methods=False)
    sp.add_argument("--states", type=Path, default=None, help="states CSV (default: OUT/states.csv)")
    sp.add_argument("--inputs", type=Path, default=None, help="inputs CSV (default: next to states)")
    sp.add_argument("--tau-max", type=int, default=None, help="robustness search radius (default: T)")

    common(sub.add_parser("export", help="write the model as an LP file"))

    sp = common(sub.add_parser("bench", help="size and wall-time report"))
    sp.add_argument("--time-cap", type=float, default=None, help="per-solve wall-time cap [s]")
    sp.add_argument("--node-cap", type=int, default=None, help="solver node cap")
    sp.add_argument("--count-only", action="store_true", help="skip building and solving")
    return p


def _load(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if args.bound is not None:
        try:
            sc.bound = ShiftBound(args.bound[0], args.bound[1])
        except ValueError as e:
            raise CommandError(str(e)) from None
    return sc


def _config(args) -> EncoderConfig:
    return EncoderConfig(mode="clamped" if args.merge_boundary else "raw")


def _out_dir(args, sc: Scenario) -> Path:
    out = args.out if args.out is not None else Path(f"{sc.name}_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _count_rows(sc: Scenario, methods, mode: str) -> list[tuple[str, str, str, str]]:
    rows = []
    n = sc.system.n_agents
    for method in methods:
        if sc.kind == "constraint":
            pieces = [(p.members, p.instants) for p in sc.task.pieces]
            size = count_task_inequalities(pieces, sc.bound, n, method=method, mode=mode)
            rows.append((sc.name, method, "-", str(size)))
        else:
            size = count_stl_binaries(sc.formula, sc.bound, n, method=method, mode=mode)
            rows.append((sc.name, method, str(size), "-"))
    return rows


def cmd_count(args) -> int:
    sc = _load(args)
    methods = [args.method] if args.method else ["naive", "reduced"]
    mode = "clamped" if args.merge_boundary else "raw"
    lines = ["name,method,binaries,inequalities"]
    lines += [",".join(row) for row in _count_rows(sc, methods, mode)]
    text = "\n".join(lines)
    print(text)
    if args.out is not None:
        path = _out_dir(args, sc) / f"{sc.name}_counts.csv"
        path.write_text(text + "\n")
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def _encode_scenario(sc: Scenario, method: str, config: EncoderConfig):
    try:
        return encode(
            sc.system,
            sc.spec_obj,
            sc.bound,
            sc.T,
            config=config,
            objective=sc.objective,
            method=method,
            name=sc.name,
        )
    except ValueError as e:
        raise CommandError(str(e)) from None


def cmd_synth(args) -> int:
    sc = _load(args)
    if sc.objective.kind == "exported_quadratic":
        raise CommandError(
            "this scenario carries a quadratic objective, which is export-only; "
            "run 'atr export' or switch the objective to a linear kind"
        )
    method = args.method or "reduced"
    prob = _encode_scenario(sc, method, _config(args))
    res = solve_mip(prob.model, time_cap=args.time_cap, node_cap=args.node_cap)

    out = _out_dir(args, sc)
    result = {
        "scenario": sc.name,
        "method": method,
        "bound": [sc.bound.theta1, sc.bound.theta2],
        "horizon": sc.T,
        "status": res.status,
        "objective": res.objective,
        "best_bound": res.best_bound,
        "solver": {
            "nodes": res.nodes,
            "lp_iterations": res.lp_iterations,
            "wall_s": res.wall_s,
            "gap": res.gap,
        },
        "counts": prob.counts,
    }

    code = EXIT_OK
    if res.status == "infeasible":
        code = EXIT_INFEASIBLE
        print(f"{sc.name}: infeasible under bound [{sc.bound.theta1}, {sc.bound.theta2}]")
    elif res.status == "cap_reached" and res.x is None:
        code = EXIT_CAP
        print(f"{sc.name}: solver cap reached with no feasible point found")
    else:
        if res.status == "cap_reached":
            code = EXIT_CAP
            print(f"{sc.name}: cap reached; reporting the incumbent", file=sys.stderr)
        traj = prob.decode(res.x)
        verdict = robust_check(sc.spec_obj, traj, sc.bound)
        if verdict.satisfied != 1:
            w = verdict.witness
            print(
                f"{sc.name}: INTERNAL ERROR: synthesized inputs fail the oracle at "
                f"shift {w.kappa}"
                + (f", instant {w.k}" if w.k is not None else "")
                + (f", predicate {w.predicate}" if w.predicate else ""),
                file=sys.stderr,
            )
            return 1
        tau_probe = max(abs(sc.bound.theta1), sc.bound.theta2) + 1
        traj_ext = extend_trajectory(traj, sc.system, tau_probe)
        value = atr(sc.spec_obj, traj_ext, tau_probe)
        states_path, inputs_path = out / "states.csv", out / "inputs.csv"
        write_trajectory(traj, states_path, inputs_path)
        fig_path = None
        try:
            from .plots import render_trajectory

            fig_path = str(render_trajectory(sc, traj, out / "trajectory.png"))
        except Exception as e:  # rendering must never block the numeric output
            print(f"figure rendering failed: {e}", file=sys.stderr)
        result.update(
            oracle={"satisfied": verdict.satisfied, "atr": value.theta, "sign": value.sign},
            files={
                "states": str(states_path),
                "inputs": str(inputs_path),
                "figure": fig_path,
            },
        )
        print(
            f"{sc.name}: {res.status}, objective {res.objective:.6g}, "
            f"oracle satisfied, robustness {value.theta} (searched to {tau_probe})"
        )

    (out / "result.json").write_text(json.dumps(result, indent=2) + "\n")
    return code


def cmd_verify(args) -> int:
    sc = _load(args)
    out = args.out if args.out is not None else Path(f"{sc.name}_out")
    states = args.states if args.states is not None else out / "states.csv"
    inputs = args.inputs if args.inputs is not None else states.parent / "inputs.csv"
    try:
        traj = read_trajectory(sc.system, states, inputs)
    except (SimulationError, OSError) as e:
        raise CommandError(f"cannot read trajectory: {e}") from None

    tau_max = args.tau_max if args.tau_max is not None else sc.T
    if tau_max < 0:
        raise CommandError("--tau-max must be nonnegative")
    need = max(tau_max, sc.bound.theta2)
    if traj.extension_steps < need:
        traj = extend_trajectory(traj, sc.system, need)

    verdict = robust_check(sc.spec_obj, traj, sc.bound)
    value = atr(sc.spec_obj, traj, tau_max)
    d1, d2 = per_side_bounds(sc.spec_obj, traj, tau_max)
    report = {
        "scenario": sc.name,
        "bound": [sc.bound.theta1, sc.bound.theta2],
        "satisfied": verdict.satisfied == 1,
        "witness": asdict(verdict.witness) if verdict.witness else None,
        "atr": value.theta,
        "sign": value.sign,
        "per_side_max": [d1, d2],
        "tau_max": tau_max,
    }
    text = json.dumps(report, indent=2)
    print(text)
    if args.out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(text + "\n")
    return EXIT_OK


def cmd_export(args) -> int:
    sc = _load(args)
    method = args.method or "reduced"
    prob = _encode_scenario(sc, method, _config(args))
    out = _out_dir(args, sc)
    path = out / f"{sc.name}_{method}.lp"
    export_model(prob.model, path)
    back = parse_lp(path)
    ok, why = models_equivalent(prob.model, back)
    if not ok:
        print(f"INTERNAL ERROR: exported file does not parse back: {why}", file=sys.stderr)
        return 1
    print(
        f"wrote {path} ({prob.model.n_vars} variables, {prob.model.n_cons} rows, "
        f"{len(prob.model.binary_ids)} binary); parsed back equivalent"
    )
    return EXIT_OK


def _bench_one(sc: Scenario, method: str, args) -> dict:
    n = sc.system.n_agents
    mode = "clamped" if args.merge_boundary else "raw"
    if sc.kind == "constraint":
        pieces = [(p.members, p.instants) for p in sc.task.pieces]
        size = count_task_inequalities(pieces, sc.bound, n, method=method, mode=mode)
    else:
        size = count_stl_binaries(sc.formula, sc.bound, n, method=method, mode=mode)
    row = {
        "name": sc.name,
        "method": method,
        "size": size,
        "build_s": "",
        "solve_s": "",
        "status": "counted",
        "total_s": 0.0,
    }
    if args.count_only:
        return row

    t0 = time.perf_counter()
    try:
        prob = _encode_scenario(sc, method, _config(args))
    except CommandError as e:
        row["status"] = f"not encodable: {e}"
        return row
    build_s = time.perf_counter() - t0
    row["build_s"] = f"{build_s:.4f}"

    if sc.objective.kind == "exported_quadratic":
        row["status"] = "export_only"
        row["total_s"] = build_s
        return row
    t1 = time.perf_counter()
    res = solve_mip(prob.model, time_cap=args.time_cap, node_cap=args.node_cap)
    solve_s = time.perf_counter() - t1
    row["solve_s"] = f"{solve_s:.4f}"
    row["status"] = res.status
    row["total_s"] = build_s + solve_s
    return row


def cmd_bench(args) -> int:
    root = Path(args.scenario)
    if root.is_dir():
        paths = sorted(root.glob("*.json"))
    else:
        paths = [root]
    methods = [args.method] if args.method else ["naive", "reduced"]

    rows: list[dict] = []
    for path in paths:
        sc = load_scenario(path)
        if args.bound is not None:
            sc.bound = ShiftBound(args.bound[0], args.bound[1])
        for method in methods:
            rows.append(_bench_one(sc, method, args))

    header = "name,method,size,build_s,solve_s,status,total_s,speedup"
    lines = [header]
    by = {(r["name"], r["method"]): r for r in rows}
    for r in rows:
        speedup = ""
        naive = by.get((r["name"], "naive"))
        if (
            r["method"] == "reduced"
            and naive
            and r["total_s"]
            and naive["total_s"]
        ):
            speedup = f"{naive['total_s'] / r['total_s']:.2f}"
        lines.append(
            f"{r['name']},{r['method']},{r['size']},{r['build_s']},{r['solve_s']},"
            f"{r['status']},{r['total_s']:.4f},{speedup}"
        )
    text = "\n".join(lines)
    print(text)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "bench.csv").write_text(text + "\n")
        try:
            from .plots import render_bench

            render_bench(rows, args.out / "bench.png")
        except Exception as e:
            print(f"figure rendering failed: {e}", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "count": cmd_count,
    "synth": cmd_synth,
    "verify": cmd_verify,
    "export": cmd_export,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (CommandError, ScenarioError, SimulationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ShiftCapExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAP
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
