"""Command-line surface of the workbench."""

import argparse
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.config_loader import ConfigLoader, RunConfig
from src.driver import Workbench
from src.exceptions import ConvergenceError, NonConvergenceError, TopologyError, WorkbenchError
from src.mesher import SurfaceMesh
from src.rotsym import family_table, solve_critical_constants
from src.utils import emit_report, ensure_directory_exists, log_run_event, read_obj, save_json

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFY = 2
EXIT_NONCONVERGENCE = 3

COMMANDS = ("constants", "family", "build", "kernels", "solve", "run", "verify", "export")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="workbench",
                                 description="Free boundary minimal surfaces by Scherk desingularization")
    ap.add_argument("--config", default=None, help="Flat key = value configuration file")
    ap.add_argument("--m", type=int, default=None, help="Number of Scherk periods")
    ap.add_argument("--theta", type=float, default=None, help="Unbalancing angle theta0")
    ap.add_argument("--res", type=int, default=None, help="Grid cells per Scherk unit")
    ap.add_argument("--out", default=None, help="Output path (file or directory, per command)")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("constants", help="Critical catenoid constants and structural margins")

    family = sub.add_parser("family", help="Catenoid family table r_theta")
    family.add_argument("--start", type=float, default=None, help="First theta (default theta_min)")
    family.add_argument("--stop", type=float, default=0.5, help="Last theta")
    family.add_argument("--num", type=int, default=11, help="Number of grid points")

    sub.add_parser("build", help="Build the initial surface and summarize it")

    kernels = sub.add_parser("kernels", help="Kernel checks on the standard pieces and the Scherk quotient")
    kernels.add_argument("--n-max", type=int, default=32, help="Highest Fourier mode")

    solve = sub.add_parser("solve", help="Direct bordered solve of the linearized problem")
    solve.add_argument("--in", dest="mesh_in", default=None, help="OBJ with the configured connectivity")
    solve.add_argument("--rhs", default="H", choices=("zero", "H", "random"), help="Right-hand side")
    solve.add_argument("--seed", type=int, default=0, help="Seed of the random right-hand side")
    solve.add_argument("--iterate", action="store_true", help="Also run the semi-local iteration")

    sub.add_parser("run", help="Fixed-point iteration to a free boundary minimal surface")

    verify = sub.add_parser("verify", help="Verify topology, symmetry and boundary contact")
    verify.add_argument("--in", dest="mesh_in", default=None, help="OBJ with the configured connectivity")

    sub.add_parser("export", help="Write the initial surface as OBJ plus metadata")
    return ap


def load_config(args: argparse.Namespace) -> RunConfig:
    overrides = {"m": args.m, "theta0": args.theta, "res": args.res}
    return ConfigLoader(args.config).load(overrides)


def load_positions(workbench: Workbench, path: str) -> SurfaceMesh:
    """Configured surface with vertex positions read from an OBJ of the same connectivity."""
    vertices, faces = read_obj(path)
    mesh = workbench.surface(workbench.config.theta0)
    if vertices.shape != mesh.vertices.shape or not np.array_equal(faces, mesh.faces):
        raise TopologyError(
            f"{path}: connectivity does not match the configured build "
            f"({len(vertices)} vs {mesh.n_vertices} vertices, {len(faces)} vs {mesh.n_faces} faces)")
    same = np.allclose(vertices, mesh.vertices, rtol=0.0, atol=1e-12)
    return mesh.with_vertices(vertices, keep_exact=same)


def _print_table(title: str, values: Dict[str, Any]):
    print(title)
    for key, value in values.items():
        if isinstance(value, float):
            print(f"  {key:<24} {value: .12g}")
        elif isinstance(value, (list, dict)):
            continue
        else:
            print(f"  {key:<24} {value}")


def _output(args: argparse.Namespace, config: RunConfig, default_name: str) -> str:
    if args.out:
        return args.out
    return os.path.join(config.out_dir, default_name)


# ------------------------------------------------------------------ commands

def cmd_constants(args, config: RunConfig) -> Dict[str, Any]:
    c = solve_critical_constants()
    _print_table("Critical catenoid", c.as_dict())
    _print_table("Structural margins", c.margins())
    data = {**c.as_dict(), **c.margins()}
    if args.out:
        save_json(data, args.out)
    return data


def cmd_family(args, config: RunConfig) -> Dict[str, Any]:
    c = solve_critical_constants()
    start = c.theta_min if args.start is None else args.start
    table = family_table(np.linspace(start, args.stop, args.num))
    print(table.to_string(index=False))
    if args.out:
        ensure_directory_exists(os.path.dirname(args.out))
        table.to_csv(args.out, index=False)
    return {"rows": len(table), "start": start, "stop": args.stop}


def cmd_build(args, config: RunConfig, workbench: Workbench) -> Dict[str, Any]:
    summary = workbench.build()
    _print_table(f"Initial surface m = {config.m}, theta = {config.theta0}", summary)
    if args.out:
        workbench.export(workbench.surface(config.theta0), args.out)
        print(f"Wrote {args.out}")
    return summary


def cmd_kernels(args, config: RunConfig, workbench: Workbench) -> Dict[str, Any]:
    result = workbench.kernels(args.n_max)
    modes: pd.DataFrame = result["modes"]
    print(modes.to_string(index=False))
    print(f"Minimum margin (excluded modes skipped): {result['min_margin']:.6g}")
    _print_table("Scherk quotient spectrum", result["scherk"])
    _print_table("Substitute kernel pairing", result["pairing"])
    data = {"modes": modes.to_dict(orient="records"), "min_margin": result["min_margin"],
            "scherk": result["scherk"], "pairing": result["pairing"]}
    if args.out:
        save_json(data, args.out)
    return {"min_margin": result["min_margin"], "gap": result["scherk"]["gap"],
            "pairing": result["pairing"]["pairing"]}


def cmd_solve(args, config: RunConfig, workbench: Workbench) -> Dict[str, Any]:
    mesh = load_positions(workbench, args.mesh_in) if args.mesh_in else None
    report = workbench.solve(rhs=args.rhs, seed=args.seed, iterate=args.iterate, mesh=mesh)
    _print_table(f"Global solve ({args.rhs})", report)
    path = _output(args, config, f"solve_m{config.m}.json")
    emit_report(report, path)
    print(f"Wrote {path}")
    return {"mu": report["mu"], "residual": report["residual"]}


def cmd_run(args, config: RunConfig, workbench: Workbench) -> Dict[str, Any]:
    path = _output(args, config, f"surface_m{config.m}.obj")
    try:
        mesh, report = workbench.run()
    except NonConvergenceError as e:
        if e.history is not None:
            emit_report(e.history, path.rsplit(".", 1)[0] + ".report.json")
        raise
    for row in report.iterations:
        print("  " + "  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    _print_table("Final surface", report.final)
    paths = workbench.export(mesh, path, report)
    print(f"Wrote {paths['obj']}")
    return {"iterations": len(report.iterations), **report.final}


def cmd_verify(args, config: RunConfig, workbench: Workbench) -> Dict[str, Any]:
    mesh = load_positions(workbench, args.mesh_in) if args.mesh_in else None
    report = workbench.verify(mesh)
    _print_table("Verification", report)
    if args.out:
        save_json(report, args.out)
    return report


def cmd_export(args, config: RunConfig, workbench: Workbench) -> Dict[str, Any]:
    path = _output(args, config, f"initial_m{config.m}.obj")
    paths = workbench.export(workbench.surface(config.theta0), path)
    print(f"Wrote {paths['obj']} and {paths['meta']}")
    return paths


HANDLERS = {
    "constants": cmd_constants,
    "family": cmd_family,
    "build": cmd_build,
    "kernels": cmd_kernels,
    "solve": cmd_solve,
    "run": cmd_run,
    "verify": cmd_verify,
    "export": cmd_export,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        config = load_config(args)
    except (WorkbenchError, FileNotFoundError) as e:
        print(f"Configuration error: {str(e)}", file=sys.stderr)
        return EXIT_ERROR

    logging.basicConfig(level=getattr(logging, config.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    handler = HANDLERS[args.command]
    code = EXIT_OK
    payload: Dict[str, Any] = {"m": config.m, "theta0": config.theta0, "res": config.res}
    try:
        if args.command in ("constants", "family"):
            result = handler(args, config)
        else:
            workbench = Workbench(config)
            print(f"Initializing workbench (m = {config.m}, res = {config.res})...")
            workbench.initialize_system()
            result = handler(args, config, workbench)
        if args.command == "verify" and not result["passed"]:
            print("Verification failed", file=sys.stderr)
            code = EXIT_VERIFY
        payload["result"] = result
    except (NonConvergenceError, ConvergenceError) as e:
        print(f"Not converged: {str(e)}", file=sys.stderr)
        payload["error"] = str(e)
        code = EXIT_NONCONVERGENCE
    except TopologyError as e:
        print(f"Verification failed: {str(e)}", file=sys.stderr)
        payload["error"] = str(e)
        code = EXIT_VERIFY
    except (WorkbenchError, FileNotFoundError) as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        payload["error"] = str(e)
        code = EXIT_ERROR

    payload["exit_code"] = code
    log_run_event(args.command, payload, time.perf_counter() - started, config.run_log)
    return code


if __name__ == "__main__":
    sys.exit(main())
