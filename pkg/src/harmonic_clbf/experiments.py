"""Monte Carlo benchmark harness and certificate-level diagnostics.

Runs seeded batches of closed-loop rollouts for a benchmark problem and
aggregates goal/unsafe/timeout counts together with the mean and standard
deviation of the time to goal, in the layout of the benchmark tables.  Also
estimates the certificate decay-rate constant from the solved field.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as _dc_field, replace

import numpy as np

from .fields import node_gradients
from .geometry import Environment, InitialSampler, builtin_problem, sample_initial_state
from .simulate import GOAL, TIMEOUT, UNSAFE, SimConfig, run_trajectory
from .solver import FREE, GridSpec, ScalarField, rasterize, solve
from .systems import (
    CAR_LIKE,
    DEFAULT_PARAMS,
    MODE_DESCENT,
    STATE_DIM,
    SystemKind,
    kind_of,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "LambdaEstimate",
    "problem_defaults",
    "problem_field",
    "clear_field_cache",
    "initial_state",
    "run_monte_carlo",
    "run_quadrotor_study",
    "estimate_lambda",
    "format_table",
]

_PROBLEM_DEFAULTS = {
    "problem-i": dict(grid=(201, 201), dt=0.1, horizon=1000, integrator="euler"),
    "problem-ii": dict(grid=(201, 201), dt=0.1, horizon=1000, integrator="euler"),
    "quadrotor2d": dict(grid=(301, 201), dt=0.02, horizon=2000, integrator="rk45"),
}


def problem_defaults(problem: str) -> dict:
    try:
        return dict(_PROBLEM_DEFAULTS[problem])
    except KeyError:
        return dict(grid=(201, 201), dt=0.1, horizon=1000, integrator="euler")


@dataclass
class ExperimentConfig:
    """One Monte Carlo cell: a (problem, system, field, noise) combination.

    Unset grid/timing options resolve to the problem defaults (201x201 grid
    and dt = 0.1 with a 1000-step Euler horizon for the planar problems;
    301x201, dt = 0.02, 2000-step adaptive-RK45 horizon for the quadrotor).
    ``env``/``sampler`` override the builtin problem geometry when given.
    """

    problem: str
    system: SystemKind | str
    rhs: float = 0.0
    sigma: float = 0.0
    n_trials: int = 200
    seed: int = 42
    grid: tuple[int, int] | None = None
    dt: float | None = None
    horizon: int | None = None
    integrator: str | None = None
    controller_mode: str = MODE_DESCENT
    tol: float | None = None
    max_iter: int = 200_000
    report_seconds: bool = False
    env: Environment | None = None
    sampler: InitialSampler | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")

    def resolved(self) -> "ExperimentConfig":
        d = problem_defaults(self.problem)
        return replace(
            self,
            grid=self.grid or d["grid"],
            dt=self.dt if self.dt is not None else d["dt"],
            horizon=self.horizon if self.horizon is not None else d["horizon"],
            integrator=self.integrator or d["integrator"],
        )

    def sim_config(self) -> SimConfig:
        cfg = self.resolved()
        return SimConfig(
            dt=cfg.dt,
            horizon=cfg.horizon,
            integrator=cfg.integrator,
            controller_mode=cfg.controller_mode,
            sigma=cfg.sigma,
        )

    def echo(self) -> dict:
        cfg = self.resolved()
        return {
            "problem": cfg.problem,
            "system": str(kind_of(cfg.system).value),
            "rhs": cfg.rhs,
            "sigma": cfg.sigma,
            "n_trials": cfg.n_trials,
            "seed": cfg.seed,
            "grid": list(cfg.grid),
            "dt": cfg.dt,
            "horizon": cfg.horizon,
            "integrator": cfg.integrator,
            "controller_mode": cfg.controller_mode,
            "tol": cfg.tol,
            "max_iter": cfg.max_iter,
        }


@dataclass(frozen=True)
class ExperimentReport:
    """Aggregate of one Monte Carlo cell.

    ``mu_T``/``sigma_T`` are computed over successful trials only, with the
    population formula (divide by ``n_success``); they are NaN when nothing
    succeeded.  Counts always partition ``n_trials``.
    """

    system: str
    rhs: float
    sigma: float
    n_trials: int
    seed: int
    n_success: int
    unsafe_count: int
    noreach_count: int
    mu_T: float
    sigma_T: float
    time_unit: str = "steps"
    wall_time: float = 0.0
    config: dict = _dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "rhs": self.rhs,
            "sigma": self.sigma,
            "n_trials": self.n_trials,
            "seed": self.seed,
            "n_success": self.n_success,
            "unsafe_count": self.unsafe_count,
            "noreach_count": self.noreach_count,
            "mu_T": self.mu_T,
            "sigma_T": self.sigma_T,
            "time_unit": self.time_unit,
            "wall_time": self.wall_time,
            "config": self.config,
        }


# Solved fields keyed by (problem, rhs, nx, ny, tol, max_iter); fields are
# immutable, so sharing across cells and worker threads is safe.
_FIELD_CACHE: dict[tuple, ScalarField] = {}


def clear_field_cache() -> None:
    _FIELD_CACHE.clear()


def problem_field(
    problem: str,
    rhs: float = 0.0,
    grid: tuple[int, int] | None = None,
    tol: float | None = None,
    max_iter: int = 200_000,
    env: Environment | None = None,
) -> ScalarField:
    """Solve (or fetch from cache) the field for a benchmark problem."""
    if env is None:
        env, _ = builtin_problem(problem)
        nx, ny = grid or problem_defaults(problem)["grid"]
        key = (problem, float(rhs), nx, ny, tol, max_iter)
        cached = _FIELD_CACHE.get(key)
        if cached is not None:
            return cached
    else:
        nx, ny = grid or (201, 201)
        key = None
    mask = rasterize(env, GridSpec(env.domain, nx, ny))
    fld = solve(mask, rhs=rhs, level=env.barrier_level, tol=tol, max_iter=max_iter)
    if key is not None:
        _FIELD_CACHE[key] = fld
    return fld


def initial_state(kind: SystemKind, sampler: InitialSampler, rng: np.random.Generator) -> np.ndarray:
    """Sample an initial state, padding trailing coordinates with zeros.

    The planar problems share one (x, y, theta) sampler; the car robot's
    steering angle starts at zero.  A sampler longer than the state vector
    is a dimension mismatch.
    """
    kind = kind_of(kind)
    dim = STATE_DIM[kind]
    drawn = sample_initial_state(sampler, rng)
    if drawn.size == dim:
        return drawn
    if drawn.size < dim:
        out = np.zeros(dim)
        out[: drawn.size] = drawn
        return out
    raise ValueError(f"sampler draws {drawn.size} coordinates but {kind.value} has {dim} states")


def _run_one_trial(kind, env, fld, simcfg, sampler, child_seed) -> tuple[str, int]:
    rng = np.random.default_rng(child_seed)
    x0 = initial_state(kind, sampler, rng)
    traj = run_trajectory(kind, env, fld, simcfg, x0, rng)
    return traj.outcome.kind, traj.outcome.step


_POOL_CONTEXT: dict | None = None


def _pool_trial(args) -> tuple[int, str, int]:
    idx, child_seed = args
    ctx = _POOL_CONTEXT
    kind_str, step = _run_one_trial(
        ctx["kind"], ctx["env"], ctx["field"], ctx["simcfg"], ctx["sampler"], child_seed
    )
    return idx, kind_str, step


def run_monte_carlo(cfg: ExperimentConfig) -> ExperimentReport:
    """Run one seeded Monte Carlo cell and aggregate its outcome counts.

    Trial seeds derive deterministically from the master seed (child i of
    ``SeedSequence(seed)``), so reruns with the same configuration reproduce
    every count and statistic bit-exactly regardless of worker count.
    """
    cfg = cfg.resolved()
    kind = kind_of(cfg.system)
    if cfg.env is not None or cfg.sampler is not None:
        if cfg.env is None or cfg.sampler is None:
            raise ValueError("override env and sampler together")
        env, sampler = cfg.env, cfg.sampler
    else:
        env, sampler = builtin_problem(cfg.problem)
    fld = problem_field(cfg.problem, cfg.rhs, cfg.grid, cfg.tol, cfg.max_iter, env=cfg.env)
    simcfg = cfg.sim_config()

    t0 = time.perf_counter()
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trials)
    results: list[tuple[str, int]]
    if cfg.n_jobs > 1:
        results = _run_pool(kind, env, fld, simcfg, sampler, children, cfg.n_jobs)
    else:
        results = [_run_one_trial(kind, env, fld, simcfg, sampler, ch) for ch in children]
    wall = time.perf_counter() - t0

    steps = np.array([s for k, s in results if k == GOAL], dtype=float)
    unsafe = sum(1 for k, _ in results if k == UNSAFE)
    noreach = sum(1 for k, _ in results if k == TIMEOUT)
    scale = simcfg.dt if cfg.report_seconds else 1.0
    if steps.size:
        mu = float(np.mean(steps)) * scale
        sd = float(np.std(steps)) * scale  # population formula
    else:
        mu = math.nan
        sd = math.nan
    return ExperimentReport(
        system=kind.value,
        rhs=cfg.rhs,
        sigma=cfg.sigma,
        n_trials=cfg.n_trials,
        seed=cfg.seed,
        n_success=int(steps.size),
        unsafe_count=unsafe,
        noreach_count=noreach,
        mu_T=mu,
        sigma_T=sd,
        time_unit="seconds" if cfg.report_seconds else "steps",
        wall_time=wall,
        config=cfg.echo(),
    )


def _run_pool(kind, env, fld, simcfg, sampler, children, n_jobs) -> list[tuple[str, int]]:
    """Fork-based worker pool; falls back to sequential when fork is unavailable."""
    import multiprocessing

    global _POOL_CONTEXT
    if multiprocessing.get_start_method(allow_none=False) != "fork":
        return [_run_one_trial(kind, env, fld, simcfg, sampler, ch) for ch in children]
    from concurrent.futures import ProcessPoolExecutor

    _POOL_CONTEXT = {"kind": kind, "env": env, "field": fld, "simcfg": simcfg, "sampler": sampler}
    try:
        args = list(enumerate(children))
        chunk = max(1, len(args) // (4 * n_jobs))
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            triples = list(ex.map(_pool_trial, args, chunksize=chunk))
    finally:
        _POOL_CONTEXT = None
    triples.sort(key=lambda t: t[0])
    return [(k, s) for _, k, s in triples]


def run_quadrotor_study(n_trials: int = 1000, seed: int = 42, **overrides) -> ExperimentReport:
    """Quadrotor landing study: seconds-valued times, adaptive RK45 rollouts."""
    cfg = ExperimentConfig(
        problem="quadrotor2d",
        system=SystemKind.QUADROTOR2D,
        n_trials=n_trials,
        seed=seed,
        report_seconds=True,
        **overrides,
    )
    return run_monte_carlo(cfg)


# ---------------------------------------------------------------------------
# Certificate decay-rate estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaEstimate:
    """Largest decay rate certified on the grid.

    ``lambda_hat`` is the negated supremum over free nodes and sampled
    headings of  min_u <f, grad V> / V.  The witness is where the supremum
    is attained (the binding node/heading).
    """

    lambda_hat: float
    sup_ratio: float
    witness_node: tuple[int, int]
    witness_point: tuple[float, float]
    witness_heading: float
    n_nodes: int
    n_headings: int
    v_floor: float


def estimate_lambda(
    field: ScalarField,
    kind: SystemKind,
    env: Environment | None = None,
    n_heading_samples: int = 64,
    v_floor: float | None = None,
) -> LambdaEstimate:
    """Estimate the certificate decay rate for a car-like system.

    Over every free node with V above ``v_floor`` (default ``1e-6 * level``,
    excluding the goal ring where the ratio degenerates) and
    ``n_heading_samples`` equally spaced headings, evaluates the optimal
    descent rate  min_u <f, grad V> = -speed_scale * |a|  divided by V, and
    returns the negated supremum.  Heading-grid sampling only refines the
    supremum from below, so more samples can only raise it.
    """
    del env
    kind = kind_of(kind)
    if kind not in CAR_LIKE:
        raise ValueError("lambda estimation applies to the car-like systems")
    if v_floor is None:
        v_floor = 1e-6 * field.level
    scale = DEFAULT_PARAMS.r / 2.0 if kind == SystemKind.DIFFDRIVE else 1.0

    sel = (field.mask.tags == FREE) & (field.values > v_floor)
    n_nodes = int(np.count_nonzero(sel))
    if n_nodes == 0:
        raise ValueError("no free nodes above the value floor")
    gx, gy = node_gradients(field)
    gxs = gx[sel]
    gys = gy[sel]
    vs = field.values[sel]
    jj, ii = np.nonzero(sel)

    best = -math.inf
    best_flat = -1
    best_heading = 0.0
    for theta in np.linspace(0.0, 2.0 * math.pi, n_heading_samples, endpoint=False):
        a = gxs * math.cos(theta) + gys * math.sin(theta)
        ratio = (-scale) * np.abs(a) / vs
        flat = int(np.argmax(ratio))
        if ratio[flat] > best:
            best = float(ratio[flat])
            best_flat = flat
            best_heading = float(theta)
    ix, iy = int(ii[best_flat]), int(jj[best_flat])
    return LambdaEstimate(
        lambda_hat=-best,
        sup_ratio=best,
        witness_node=(ix, iy),
        witness_point=field.grid.node_point(ix, iy),
        witness_heading=best_heading,
        n_nodes=n_nodes,
        n_headings=n_heading_samples,
        v_floor=v_floor,
    )


# ---------------------------------------------------------------------------
# Table formatting
# ---------------------------------------------------------------------------

_COLUMNS = ("system", "rhs", "sigma", "mu_T", "sigma_T", "unsafe", "no_reach", "unit", "n_trials", "seed")


def format_table(reports: list[ExperimentReport]) -> str:
    """Fixed-width table in the benchmark layout plus n_trials and seed."""
    rows = [_COLUMNS]
    for r in reports:
        rows.append(
            (
                r.system,
                f"{r.rhs:g}",
                f"{r.sigma:g}",
                "-" if math.isnan(r.mu_T) else f"{r.mu_T:.3f}",
                "-" if math.isnan(r.sigma_T) else f"{r.sigma_T:.3f}",
                str(r.unsafe_count),
                str(r.noreach_count),
                r.time_unit,
                str(r.n_trials),
                str(r.seed),
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(_COLUMNS))]
    lines = []
    for n, row in enumerate(rows):
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
