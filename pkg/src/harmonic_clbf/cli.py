"""Command-line entry points.

Subcommands: ``solve`` (field + manifest), ``simulate`` (trajectory trace),
``experiment`` (Monte Carlo sweep + table), ``contour`` (plot-ready grid).
Exit codes: 0 success, 2 argument/config errors, 3 solver failures,
4 simulation errors.  The ``CLBF_OUT_DIR`` environment variable relocates
default output paths; explicit ``--out`` paths are used as given.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .experiments import (
    ExperimentConfig,
    format_table,
    initial_state,
    problem_defaults,
    run_monte_carlo,
)
from .fileio import (
    ConfigError,
    RunManifest,
    load_environment,
    load_field,
    save_contour,
    save_field,
    save_manifest,
    save_report,
    save_trace,
    atomic_write_text,
)
from .geometry import RegionLabel, builtin_problem, builtin_problem_ids, classify
from .simulate import SimConfig, run_trajectory
from .solver import GridSpec, SolverError, rasterize, solve
from .systems import CONTROLLER_MODES, SystemKind, kind_of, planar_position

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SIMULATION = 4


class SimulationError(RuntimeError):
    pass


def _out_path(name: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    return os.path.join(os.environ.get("CLBF_OUT_DIR", "."), name)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = text.lower().split("x")
        return int(nx), int(ny)
    except ValueError:
        raise ConfigError(f"bad --grid {text!r}; expected <nx>x<ny>, e.g. 201x201") from None


def _utcnow() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harmonic-clbf",
        description="Barrier fields and reach-avoid rollouts on rectangle environments.",
    )
    parser.add_argument("--version", action="version", version=f"harmonic-clbf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a barrier field and export it")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", choices=builtin_problem_ids())
    src.add_argument("--env-config", help="environment JSON file")
    p.add_argument("--rhs", type=float, default=None, help="field equation right-hand side")
    p.add_argument("--grid", default=None, help="<nx>x<ny> (default per problem)")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=200_000)
    p.add_argument("--out", default=None, help="field file path (default field.json)")

    p = sub.add_parser("simulate", help="roll out one trajectory against a field file")
    p.add_argument("--field", required=True, help="field file from `solve`")
    p.add_argument("--system", required=True, choices=[k.value for k in SystemKind])
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--x0", default=None, help="comma-separated initial state (default: sample)")
    p.add_argument("--problem", choices=builtin_problem_ids(), default=None,
                   help="problem whose sampler draws x0 when --x0 is omitted")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--controller", choices=CONTROLLER_MODES, default=CONTROLLER_MODES[0])
    p.add_argument("--out", default=None, help="trace CSV path (default trace.csv)")

    p = sub.add_parser("experiment", help="run a Monte Carlo sweep from a config file")
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--out-dir", default=None, help="report directory (default .)")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("contour", help="export a plot-ready contour grid")
    p.add_argument("--field", required=True)
    p.add_argument("--out", default=None, help="contour path (default contour.txt)")
    return parser


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    if args.problem:
        env, _ = builtin_problem(args.problem)
        defaults = problem_defaults(args.problem)
    else:
        env = load_environment(args.env_config)
        defaults = {"grid": (201, 201)}
    nx, ny = _parse_grid(args.grid) if args.grid else defaults["grid"]
    rhs = args.rhs if args.rhs is not None else env.laplacian_rhs
    mask = rasterize(env, GridSpec(env.domain, nx, ny))
    fld = solve(mask, rhs=rhs, level=env.barrier_level, tol=args.tol, max_iter=args.max_iter)
    out = _out_path("field.json", args.out)
    save_field(out, fld, env)
    manifest = RunManifest(
        command="solve",
        config={
            "problem": args.problem,
            "env_config": args.env_config,
            "rhs": rhs,
            "grid": [nx, ny],
            "tol": args.tol,
            "max_iter": args.max_iter,
            "out": out,
        },
        solver={
            "residual": fld.solve_residual,
            "iterations": fld.iterations,
            "tol": fld.level * 1e-8 if args.tol is None else args.tol,
        },
        version=__version__,
        created_utc=_utcnow(),
        elapsed_seconds=time.perf_counter() - t0,
    )
    save_manifest(out + ".manifest.json", manifest)
    print(f"wrote {out} ({nx}x{ny}, rhs={rhs:g}, residual={fld.solve_residual:.3e})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    fld, env = load_field(args.field)
    if env is None:
        if args.problem is None:
            raise ConfigError("field file has no embedded environment; pass --problem")
        env, _ = builtin_problem(args.problem)
    kind = kind_of(args.system)
    rng = np.random.default_rng(args.seed)
    if args.x0 is not None:
        try:
            x0 = np.array([float(v) for v in args.x0.split(",")], dtype=float)
        except ValueError:
            raise ConfigError(f"bad --x0 {args.x0!r}") from None
    else:
        problem = args.problem
        if problem is None:
            raise ConfigError("pass --x0 or --problem to choose an initial state")
        _, sampler = builtin_problem(problem)
        x0 = initial_state(kind, sampler, rng)
    label = classify(env, planar_position(kind, x0))
    if label in (RegionLabel.UNSAFE, RegionLabel.OUT_OF_DOMAIN):
        raise SimulationError(f"initial state {x0.tolist()} classifies {label.value}")

    defaults = problem_defaults(args.problem or "")
    if kind == SystemKind.QUADROTOR2D:
        defaults = problem_defaults("quadrotor2d")
    cfg = SimConfig(
        dt=args.dt if args.dt is not None else defaults["dt"],
        horizon=args.horizon if args.horizon is not None else defaults["horizon"],
        integrator=defaults["integrator"],
        controller_mode=args.controller,
        sigma=args.sigma,
    )
    traj = run_trajectory(kind, env, fld, cfg, x0, rng)
    out = _out_path("trace.csv", args.out)
    save_trace(out, traj, kind, fld, env)
    print(
        f"wrote {out}: outcome={traj.outcome.kind} step={traj.outcome.step} "
        f"t={traj.seconds:.3f}s"
    )
    return EXIT_OK


def _experiment_cells(spec: dict) -> list[dict]:
    def as_list(key, default):
        v = spec.get(key, default)
        return v if isinstance(v, list) else [v]

    if "problem" not in spec:
        raise ConfigError("experiment config needs a 'problem'")
    cells = []
    # Row order follows the benchmark tables: per system, deterministic
    # rows first, harmonic before superharmonic.
    for system in as_list("systems", spec.get("system", "roomba")):
        for sigma in as_list("sigma", 0.0):
            for rhs in as_list("rhs", 0.0):
                cells.append(dict(system=system, sigma=float(sigma), rhs=float(rhs)))
    return cells


def cmd_experiment(args) -> int:
    spec = _load_experiment_config(args.config)
    out_dir = args.out_dir or os.environ.get("CLBF_OUT_DIR", ".")
    os.makedirs(out_dir, exist_ok=True)
    cells = _experiment_cells(spec)
    grid = tuple(spec["grid"]) if "grid" in spec else None
    reports = []
    failures = []
    for cell in cells:
        cfg = ExperimentConfig(
            problem=spec["problem"],
            system=cell["system"],
            rhs=cell["rhs"],
            sigma=cell["sigma"],
            n_trials=int(spec.get("trials", 200)),
            seed=int(spec.get("seed", 42)),
            grid=grid,
            dt=spec.get("dt"),
            horizon=spec.get("horizon"),
            controller_mode=spec.get("controller", CONTROLLER_MODES[0]),
            tol=spec.get("tol"),
            max_iter=int(spec.get("max_iter", 200_000)),
            n_jobs=args.jobs,
        )
        tag = f"{cell['system']}_rhs{cell['rhs']:g}_sigma{cell['sigma']:g}"
        try:
            report = run_monte_carlo(cfg)
        except SolverError as exc:
            failures.append((tag, EXIT_SOLVER, str(exc)))
            continue
        except Exception as exc:  # record and keep sweeping
            failures.append((tag, EXIT_SIMULATION, str(exc)))
            continue
        reports.append(report)
        save_report(os.path.join(out_dir, f"report_{tag}.json"), report.to_dict())
    table = format_table(reports)
    atomic_write_text(os.path.join(out_dir, "table.txt"), table + "\n")
    print(table)
    if failures:
        for tag, _, msg in failures:
            print(f"FAILED cell {tag}: {msg}", file=sys.stderr)
        return failures[0][1]
    return EXIT_OK


def _load_experiment_config(path: str) -> dict:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return spec


def cmd_contour(args) -> int:
    fld, _ = load_field(args.field)
    out = _out_path("contour.txt", args.out)
    save_contour(out, fld)
    print(f"wrote {out} ({fld.grid.nx}x{fld.grid.ny})")
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "contour": cmd_contour,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SimulationError, ValueError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
