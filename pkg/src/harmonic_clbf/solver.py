"""Grid Dirichlet solver for the barrier field.

The environment is rasterized onto a uniform grid; goal nodes are pinned to
zero, unsafe nodes and the outermost ring to the barrier level, and the free
interior is relaxed until the 5-point discretization of ``laplacian(V) = rhs``
holds to a max-norm residual tolerance.  The 5-point stencil satisfies a
discrete maximum principle, so interior values of the converged harmonic
field are strictly bounded by the pinned values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as _dc_field

import numpy as np

from .geometry import Environment, Rect

__all__ = [
    "FREE",
    "FIXED_GOAL",
    "FIXED_UNSAFE",
    "GridSpec",
    "NodeMask",
    "ScalarField",
    "SolverError",
    "rasterize",
    "solve",
    "residual",
    "verify_clbf_properties",
    "PropertyCheck",
    "CLBFPropertyReport",
]

FREE = 0
FIXED_GOAL = 1
FIXED_UNSAFE = 2

# Absolute slack used when testing node coordinates against rectangle edges.
# Node coordinates carry ~1e-13 of float noise; rectangle edges that fall on
# grid lines must still rasterize as contained.
RASTER_SNAP = 1e-9


class SolverError(RuntimeError):
    """Relaxation failed to reach the requested residual."""

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid covering a domain rectangle.

    Node (ix, iy) sits at ``(xmin + ix*hx, ymin + iy*hy)``; arrays over the
    grid are stored with shape ``(ny, nx)`` so x varies fastest in memory.
    """

    domain: Rect
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError("grid needs at least 3 nodes per axis")

    @property
    def hx(self) -> float:
        return (self.domain.xmax - self.domain.xmin) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.domain.ymax - self.domain.ymin) / (self.ny - 1)

    def xs(self) -> np.ndarray:
        return np.linspace(self.domain.xmin, self.domain.xmax, self.nx)

    def ys(self) -> np.ndarray:
        return np.linspace(self.domain.ymin, self.domain.ymax, self.ny)

    def node_point(self, ix: int, iy: int) -> tuple[float, float]:
        return (float(self.xs()[ix]), float(self.ys()[iy]))


@dataclass(frozen=True)
class NodeMask:
    """Per-node tags over a grid: FREE, FIXED_GOAL, or FIXED_UNSAFE.

    The outermost ring must be FIXED_UNSAFE (the domain boundary is unsafe
    in every benchmark) and at least one free node must exist.
    """

    grid: GridSpec
    tags: np.ndarray

    def __post_init__(self):
        tags = np.ascontiguousarray(self.tags, dtype=np.uint8)
        object.__setattr__(self, "tags", tags)
        if tags.shape != (self.grid.ny, self.grid.nx):
            raise ValueError(f"tags shape {tags.shape} != (ny, nx) = {(self.grid.ny, self.grid.nx)}")
        ring = np.concatenate([tags[0, :], tags[-1, :], tags[:, 0], tags[:, -1]])
        if not np.all(ring == FIXED_UNSAFE):
            raise ValueError("every node on the outermost grid ring must be FIXED_UNSAFE")
        if not np.any(tags == FREE):
            raise ValueError("mask has no free nodes")

    def count(self, tag: int) -> int:
        return int(np.count_nonzero(self.tags == tag))


def rasterize(env: Environment, grid: GridSpec) -> NodeMask:
    """Tag grid nodes by region membership.

    A node is FIXED_GOAL when its coordinates lie in the closed goal
    rectangle and FIXED_UNSAFE when they lie in any closed obstacle or on
    the domain boundary; obstacles take precedence over the goal.
    Containment is tested with an absolute slack of ``RASTER_SNAP`` so grid
    lines that coincide with rectangle edges rasterize as contained despite
    float rounding in the node coordinates.
    """
    if grid.domain != env.domain:
        raise ValueError(
            f"grid domain {grid.domain} does not cover the environment domain {env.domain}"
        )
    xs = grid.xs()
    ys = grid.ys()
    X = xs[None, :]
    Y = ys[:, None]

    def inside(rect: Rect) -> np.ndarray:
        return (
            (X >= rect.xmin - RASTER_SNAP)
            & (X <= rect.xmax + RASTER_SNAP)
            & (Y >= rect.ymin - RASTER_SNAP)
            & (Y <= rect.ymax + RASTER_SNAP)
        )

    tags = np.zeros((grid.ny, grid.nx), dtype=np.uint8)
    tags[inside(env.goal)] = FIXED_GOAL
    for rect in env.unsafe:
        tags[inside(rect)] = FIXED_UNSAFE
    tags[0, :] = FIXED_UNSAFE
    tags[-1, :] = FIXED_UNSAFE
    tags[:, 0] = FIXED_UNSAFE
    tags[:, -1] = FIXED_UNSAFE
    if not np.any(tags == FIXED_GOAL):
        raise ValueError("grid too coarse: no node falls inside the goal rectangle")
    return NodeMask(grid, tags)


@dataclass
class ScalarField:
    """Grid-sampled barrier field.

    ``values`` has shape ``(ny, nx)`` with x fastest; fixed nodes hold their
    pinned values exactly.  Instances are treated as immutable after
    construction and may be shared across concurrent rollouts.
    """

    grid: GridSpec
    values: np.ndarray
    mask: NodeMask
    rhs: float
    level: float
    solve_residual: float | None = None
    iterations: int | None = None
    _node_grads: tuple | None = _dc_field(default=None, repr=False, compare=False)


def _residual_max(V: np.ndarray, free: np.ndarray, ax: float, ay: float, ac: float, rhs: float) -> float:
    inner = (
        ax * (V[1:-1, 2:] + V[1:-1, :-2])
        + ay * (V[2:, 1:-1] + V[:-2, 1:-1])
        - ac * V[1:-1, 1:-1]
        - rhs
    )
    sel = free[1:-1, 1:-1]
    if not sel.any():
        return 0.0
    return float(np.max(np.abs(inner[sel])))


def solve(
    mask: NodeMask,
    rhs: float = 0.0,
    level: float = 1.0,
    tol: float | None = None,
    max_iter: int = 200_000,
    *,
    init=None,
    boundary_values: np.ndarray | None = None,
    omega: float | None = None,
    check_every: int = 10,
) -> ScalarField:
    """Solve the Dirichlet problem on the masked grid.

    Free nodes are relaxed with red-black successive over-relaxation until
    the scaled 5-point residual

        (V[i+1,j] + V[i-1,j])/hx^2 + (V[i,j+1] + V[i,j-1])/hy^2
            - 2*V[i,j]*(1/hx^2 + 1/hy^2) - rhs

    has max-norm at most ``tol`` over the free nodes.  The result is
    independent of the initialization up to roughly the residual tolerance.

    Parameters
    ----------
    mask : NodeMask
    rhs : float
        Right-hand side of the field equation (0 harmonic, -6 superharmonic).
    level : float
        Value pinned on FIXED_UNSAFE nodes; FIXED_GOAL nodes pin to 0.
    tol : float, optional
        Residual tolerance; defaults to ``1e-8 * abs(level)``.
    max_iter : int
        Sweep budget; exceeding it raises :class:`SolverError` carrying the
        final residual.
    init : float or array, optional
        Initial guess for free nodes (default zeros).
    boundary_values : array, optional
        Explicit per-node pinned values overriding the 0/level defaults;
        used for manufactured-solution verification.
    omega : float, optional
        Over-relaxation factor; defaults to the rectangle-optimal estimate.

    Returns
    -------
    ScalarField
    """
    grid = mask.grid
    tags = mask.tags
    if tol is None:
        tol = 1e-8 * abs(level)
    if tol <= 0:
        raise ValueError("tol must be positive")
    free = tags == FREE
    if not free.any():
        raise SolverError("mask has no free nodes")

    if boundary_values is None:
        pinned = np.where(tags == FIXED_GOAL, 0.0, float(level))
    else:
        pinned = np.asarray(boundary_values, dtype=float)
        if pinned.shape != tags.shape:
            raise ValueError("boundary_values shape does not match the grid")

    if init is None:
        V = np.zeros_like(pinned)
    elif np.isscalar(init):
        V = np.full_like(pinned, float(init))
    else:
        V = np.array(init, dtype=float)
        if V.shape != tags.shape:
            raise ValueError("init shape does not match the grid")
    V[~free] = pinned[~free]

    hx, hy = grid.hx, grid.hy
    ax = 1.0 / (hx * hx)
    ay = 1.0 / (hy * hy)
    ac = 2.0 * (ax + ay)
    if omega is None:
        rho_j = (ax * math.cos(math.pi / (grid.nx - 1)) + ay * math.cos(math.pi / (grid.ny - 1))) / (ax + ay)
        omega = 2.0 / (1.0 + math.sqrt(max(0.0, 1.0 - rho_j * rho_j)))

    inner_free = free[1:-1, 1:-1]
    jj, ii = np.indices(inner_free.shape)
    red = inner_free & ((ii + jj) % 2 == 0)
    black = inner_free & ((ii + jj) % 2 == 1)
    core = V[1:-1, 1:-1]

    res = math.inf
    for it in range(1, max_iter + 1):
        for color in (red, black):
            nb = (
                ax * (V[1:-1, 2:] + V[1:-1, :-2])
                + ay * (V[2:, 1:-1] + V[:-2, 1:-1])
            )
            core[color] = (1.0 - omega) * core[color] + (omega / ac) * (nb[color] - rhs)
        if it % check_every == 0 or it == max_iter:
            res = _residual_max(V, free, ax, ay, ac, rhs)
            if res <= tol:
                return ScalarField(
                    grid=grid,
                    values=V,
                    mask=mask,
                    rhs=float(rhs),
                    level=float(level),
                    solve_residual=res,
                    iterations=it,
                )
    raise SolverError(
        f"no convergence after {max_iter} sweeps (residual {res:.3e} > tol {tol:.3e})",
        residual=res,
        iterations=max_iter,
    )


def residual(field: ScalarField) -> float:
    """Max-norm 5-point residual of the field over its free nodes."""
    grid = field.grid
    ax = 1.0 / (grid.hx * grid.hx)
    ay = 1.0 / (grid.hy * grid.hy)
    ac = 2.0 * (ax + ay)
    return _residual_max(field.values, field.mask.tags == FREE, ax, ay, ac, field.rhs)


# ---------------------------------------------------------------------------
# Certificate property checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropertyCheck:
    """Outcome of one grid-level certificate property check."""

    index: int
    name: str
    passed: bool
    n_checked: int
    n_violations: int
    worst_node: tuple[int, int] | None = None  # (ix, iy)
    worst_point: tuple[float, float] | None = None
    worst_value: float | None = None
    violation_mask: np.ndarray | None = None


@dataclass(frozen=True)
class CLBFPropertyReport:
    checks: tuple[PropertyCheck, ...]

    def check(self, index: int) -> PropertyCheck:
        for c in self.checks:
            if c.index == index:
                return c
        raise KeyError(index)

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else f"FAIL ({c.n_violations} nodes)"
            extra = ""
            if c.worst_node is not None:
                extra = f"  worst V={c.worst_value:.6g} at node {c.worst_node} point {c.worst_point}"
            lines.append(f"({c.index}) {c.name}: {status}{extra}")
        return "\n".join(lines)


def _make_check(index, name, sel, values, grid, bad, worst_pick) -> PropertyCheck:
    n_checked = int(np.count_nonzero(sel))
    viol = sel & bad
    n_viol = int(np.count_nonzero(viol))
    worst_node = worst_point = worst_value = None
    if n_checked:
        # Witness: the extreme value among violations if any, else among all
        # checked nodes (closest approach to the threshold).
        pool = viol if n_viol else sel
        vals = np.where(pool, values, np.nan)
        flat = worst_pick(vals)
        iy, ix = np.unravel_index(flat, values.shape)
        worst_node = (int(ix), int(iy))
        worst_point = grid.node_point(int(ix), int(iy))
        worst_value = float(values[iy, ix])
    return PropertyCheck(
        index=index,
        name=name,
        passed=n_viol == 0,
        n_checked=n_checked,
        n_violations=n_viol,
        worst_node=worst_node,
        worst_point=worst_point,
        worst_value=worst_value,
        violation_mask=viol if n_viol else None,
    )


def verify_clbf_properties(field: ScalarField, env: Environment | None = None) -> CLBFPropertyReport:
    """Check the four grid-level certificate properties of the field.

    (1) V = 0 on goal nodes, (2) V > 0 elsewhere, (3) V >= level on unsafe
    nodes, (4) V < level elsewhere.  Region membership comes from the
    field's rasterized mask so the check matches the discretization; the
    optional ``env`` argument is accepted for interface symmetry only.
    A harmonic field passes all four; a superharmonic one may fail (4), and
    the report carries the per-node violation mask and worst witness.
    """
    del env
    V = field.values
    tags = field.mask.tags
    grid = field.grid
    c = field.level
    goal = tags == FIXED_GOAL
    unsafe = tags == FIXED_UNSAFE

    argmax = lambda vals: np.nanargmax(vals)
    argmin = lambda vals: np.nanargmin(vals)
    argabs = lambda vals: np.nanargmax(np.abs(vals))
    checks = (
        _make_check(1, "V = 0 on goal nodes", goal, V, grid, V != 0.0, argabs),
        _make_check(2, "V > 0 off the goal", ~goal, V, grid, V <= 0.0, argmin),
        _make_check(3, "V >= level on unsafe nodes", unsafe, V, grid, V < c, argmin),
        _make_check(4, "V < level off the unsafe set", ~unsafe, V, grid, V >= c, argmax),
    )
    return CLBFPropertyReport(checks=checks)
