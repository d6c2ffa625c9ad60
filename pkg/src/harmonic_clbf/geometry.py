"""Axis-aligned reach-avoid environments.

An environment is a domain rectangle containing one goal rectangle and a
set of interior obstacle rectangles.  The domain boundary counts as unsafe,
so every trajectory question reduces to point-in-rectangle classification
plus a boundary test.  Initial conditions are drawn from per-coordinate
distributions attached to each benchmark problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "Rect",
    "Environment",
    "RegionLabel",
    "Uniform",
    "UniformUnion",
    "Constant",
    "InitialSampler",
    "classify",
    "builtin_problem",
    "builtin_problem_ids",
    "sample_initial_state",
]


class RegionLabel(Enum):
    """Mutually exclusive point labels, listed in precedence order."""

    OUT_OF_DOMAIN = "out_of_domain"
    UNSAFE = "unsafe"
    GOAL = "goal"
    SAFE = "safe"


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle [xmin, xmax] x [ymin, ymax]."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate rectangle: {self}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def contains(self, x: float, y: float) -> bool:
        """Closed (boundary-inclusive) containment."""
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def contains_rect(self, other: "Rect") -> bool:
        return (
            self.xmin <= other.xmin
            and other.xmax <= self.xmax
            and self.ymin <= other.ymin
            and other.ymax <= self.ymax
        )

    def interior_intersects(self, other: "Rect") -> bool:
        """True when the open interiors overlap (shared edges do not count)."""
        return (
            self.xmin < other.xmax
            and other.xmin < self.xmax
            and self.ymin < other.ymax
            and other.ymin < self.ymax
        )

    def as_list(self) -> list[float]:
        return [self.xmin, self.xmax, self.ymin, self.ymax]

    @staticmethod
    def from_list(vals) -> "Rect":
        xmin, xmax, ymin, ymax = (float(v) for v in vals)
        return Rect(xmin, xmax, ymin, ymax)


@dataclass(frozen=True)
class Environment:
    """Reach-avoid environment.

    Parameters
    ----------
    domain : Rect
        The admissible state-space rectangle.  Its boundary is unsafe.
    goal : Rect
        Region where the barrier function is pinned to zero.
    unsafe : tuple of Rect
        Interior obstacles, pinned to ``barrier_level``.
    barrier_level : float
        The positive constant separating safe from unsafe values.
    laplacian_rhs : float
        Right-hand side of the field equation (0 for a harmonic field,
        -6 for the superharmonic variant).
    """

    domain: Rect
    goal: Rect
    unsafe: tuple[Rect, ...]
    barrier_level: float = 1.0
    laplacian_rhs: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "unsafe", tuple(self.unsafe))
        if self.barrier_level <= 0:
            raise ValueError("barrier_level must be positive")
        if not self.domain.contains_rect(self.goal):
            raise ValueError("goal rectangle not contained in the domain")
        for r in self.unsafe:
            if not self.domain.contains_rect(r):
                raise ValueError(f"unsafe rectangle {r} not contained in the domain")
            if self.goal.interior_intersects(r):
                raise ValueError(f"goal overlaps unsafe rectangle {r}")


def classify(env: Environment, p) -> RegionLabel:
    """Label a 2D point against the environment's regions.

    Containment is closed on all rectangles and precedence runs
    OutOfDomain > Unsafe > Goal > Safe, so a point on the domain boundary
    or on a shared goal/obstacle edge labels Unsafe.  The boundary test is
    exact coordinate equality; grid rasterization handles discretization
    separately.

    Parameters
    ----------
    env : Environment
    p : sequence of two floats

    Returns
    -------
    RegionLabel
    """
    x = float(p[0])
    y = float(p[1])
    d = env.domain
    if not (d.xmin <= x <= d.xmax and d.ymin <= y <= d.ymax):
        return RegionLabel.OUT_OF_DOMAIN
    if x == d.xmin or x == d.xmax or y == d.ymin or y == d.ymax:
        return RegionLabel.UNSAFE
    for r in env.unsafe:
        if r.xmin <= x <= r.xmax and r.ymin <= y <= r.ymax:
            return RegionLabel.UNSAFE
    g = env.goal
    if g.xmin <= x <= g.xmax and g.ymin <= y <= g.ymax:
        return RegionLabel.GOAL
    return RegionLabel.SAFE


# ---------------------------------------------------------------------------
# Initial-condition samplers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def draw(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo, self.hi))


@dataclass(frozen=True)
class UniformUnion:
    """Uniform over a union of disjoint intervals, weighted by length."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        object.__setattr__(self, "intervals", ivs)
        for a, b in ivs:
            if not a < b:
                raise ValueError(f"degenerate interval ({a}, {b})")

    def draw(self, rng: np.random.Generator) -> float:
        lengths = [b - a for a, b in self.intervals]
        u = rng.uniform(0.0, math.fsum(lengths))
        for (a, b), w in zip(self.intervals, lengths):
            if u <= w:
                return a + u
            u -= w
        return self.intervals[-1][1]


@dataclass(frozen=True)
class Constant:
    value: float

    def draw(self, rng: np.random.Generator) -> float:
        return self.value


@dataclass(frozen=True)
class InitialSampler:
    """Per-coordinate initial-condition distribution.

    Coordinates are drawn independently, in order.  When a system has more
    state coordinates than the sampler provides, the trailing ones are fixed
    at zero (e.g. the car robot's steering angle).
    """

    coords: tuple

    def __len__(self) -> int:
        return len(self.coords)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([c.draw(rng) for c in self.coords], dtype=float)


def sample_initial_state(sampler: InitialSampler, rng: np.random.Generator) -> np.ndarray:
    """Draw one initial state from the sampler using the given stream."""
    return sampler.sample(rng)


# ---------------------------------------------------------------------------
# Benchmark problems
# ---------------------------------------------------------------------------

_SIDE_INTERVALS = ((-0.9, -0.6), (0.6, 0.9))


def _problem_i() -> tuple[Environment, InitialSampler]:
    env = Environment(
        domain=Rect(-1.0, 1.0, -1.0, 1.0),
        goal=Rect(-0.1, 0.1, -0.1, 0.1),
        unsafe=(
            Rect(-0.5, -0.3, -0.5, -0.3),
            Rect(-0.5, -0.3, 0.3, 0.5),
            Rect(0.3, 0.5, -0.5, -0.3),
            Rect(0.3, 0.5, 0.3, 0.5),
        ),
    )
    sampler = InitialSampler(
        (
            UniformUnion(_SIDE_INTERVALS),
            UniformUnion(_SIDE_INTERVALS),
            Uniform(0.0, 2.0 * math.pi),
        )
    )
    return env, sampler


def _problem_ii() -> tuple[Environment, InitialSampler]:
    env = Environment(
        domain=Rect(-1.0, 1.0, -1.0, 1.0),
        goal=Rect(-0.1, 0.1, -0.1, 0.1),
        unsafe=(
            Rect(-0.5, -0.3, -0.5, 0.5),
            Rect(0.3, 0.5, -0.5, 0.5),
        ),
    )
    sampler = InitialSampler(
        (
            UniformUnion(_SIDE_INTERVALS),
            Uniform(-0.3, 0.3),
            Uniform(0.0, 2.0 * math.pi),
        )
    )
    return env, sampler


def _quadrotor_2d() -> tuple[Environment, InitialSampler]:
    env = Environment(
        domain=Rect(-1.0, 2.0, 0.0, 2.0),
        goal=Rect(-1.0, 0.5, 0.25, 0.75),
        unsafe=(
            Rect(-1.0, 0.0, 1.25, 2.0),
            Rect(-1.0, 2.0, 0.0, 0.25),
            Rect(0.5, 1.0, 0.0, 1.0),
        ),
    )
    # State order (x, xdot, z, zdot, theta, thetadot).
    small = Uniform(-0.05, 0.05)
    sampler = InitialSampler(
        (Uniform(1.4, 1.6), small, Uniform(0.3, 1.5), small, small, small)
    )
    return env, sampler


_BUILTINS = {
    "problem-i": _problem_i,
    "problem-ii": _problem_ii,
    "quadrotor2d": _quadrotor_2d,
}


def builtin_problem_ids() -> tuple[str, ...]:
    return tuple(_BUILTINS)


def builtin_problem(problem_id: str) -> tuple[Environment, InitialSampler]:
    """Return the environment and initial-condition sampler for a benchmark.

    Known ids: ``problem-i``, ``problem-ii``, ``quadrotor2d``.
    """
    key = str(problem_id).strip().lower()
    try:
        factory = _BUILTINS[key]
    except KeyError:
        raise ValueError(
            f"unknown problem id {problem_id!r}; expected one of {sorted(_BUILTINS)}"
        ) from None
    return factory()
