"""Benchmark dynamical systems and their steepest-descent controllers.

Four systems: a velocity-steered disc robot (roomba), a differential-drive
robot, a kinematic car with steering-rate input, and a planar quadrotor.
The car-like systems expose closed-form minimizers of <f(x,u), grad V> over
their input sets, a brute-force grid oracle for that minimum, and a
noise-injected variant whose Gaussian perturbation is clipped by the
first-order barrier bound.  The quadrotor uses a velocity-tracking PD law
driven by the normalized descent direction of the field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Environment

__all__ = [
    "SystemKind",
    "SystemParams",
    "NoiseConfig",
    "InputConstraintError",
    "DEFAULT_PARAMS",
    "CAR_LIKE",
    "MODE_DESCENT",
    "MODE_VERBATIM",
    "CONTROLLER_MODES",
    "STATE_DIM",
    "kind_of",
    "state_names",
    "planar_position",
    "dynamics",
    "check_input",
    "optimal_control",
    "brute_force_control",
    "quadrotor_controller",
    "planar_input_matrix",
    "noise_upper_bound",
    "clip_noise",
    "project_input",
    "stochastic_control",
]


class SystemKind(str, Enum):
    ROOMBA = "roomba"
    DIFFDRIVE = "diffdrive"
    CARROBOT = "carrobot"
    QUADROTOR2D = "quadrotor2d"


STATE_DIM = {
    SystemKind.ROOMBA: 3,  # (x, y, theta)
    SystemKind.DIFFDRIVE: 3,  # (x, y, theta)
    SystemKind.CARROBOT: 4,  # (x, y, theta, psi)
    SystemKind.QUADROTOR2D: 6,  # (x, xdot, z, zdot, theta, thetadot)
}

CAR_LIKE = (SystemKind.ROOMBA, SystemKind.DIFFDRIVE, SystemKind.CARROBOT)

MODE_DESCENT = "descent-aligned"
MODE_VERBATIM = "paper-verbatim"
CONTROLLER_MODES = (MODE_DESCENT, MODE_VERBATIM)

_STATE_NAMES = {
    SystemKind.ROOMBA: ("x", "y", "theta"),
    SystemKind.DIFFDRIVE: ("x", "y", "theta"),
    SystemKind.CARROBOT: ("x", "y", "theta", "psi"),
    SystemKind.QUADROTOR2D: ("x", "xdot", "z", "zdot", "theta", "thetadot"),
}

# Rows of the state derivative that carry the planar position.
_PLANAR_ROWS = {
    SystemKind.ROOMBA: (0, 1),
    SystemKind.DIFFDRIVE: (0, 1),
    SystemKind.CARROBOT: (0, 1),
    SystemKind.QUADROTOR2D: (0, 2),
}


@dataclass(frozen=True)
class SystemParams:
    """Physical constants shared by the benchmark systems.

    ``quad_input_lo/hi`` record the nominal quadrotor input box g/2 -+ 4.
    The box is stored as data but not enforced: it excludes the hover thrust
    m*g ~= 0.324, so clamping into it makes level flight impossible.
    """

    r: float = 0.1  # diff-drive wheel radius
    d: float = 0.1  # diff-drive half axle
    l: float = 0.1  # car wheelbase
    m: float = 0.033  # quadrotor mass
    ixx: float = 2.31e-5  # quadrotor pitch inertia
    g: float = 9.81
    quad_input_lo: float = 9.81 / 2 - 4.0
    quad_input_hi: float = 9.81 / 2 + 4.0


DEFAULT_PARAMS = SystemParams()


@dataclass
class NoiseConfig:
    """Gaussian input-noise setting; ``sigma == 0`` means deterministic."""

    sigma: float
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


class InputConstraintError(ValueError):
    pass


def kind_of(value) -> SystemKind:
    if isinstance(value, SystemKind):
        return value
    return SystemKind(str(value).strip().lower())


def state_names(kind: SystemKind) -> tuple[str, ...]:
    return _STATE_NAMES[kind_of(kind)]


def planar_position(kind: SystemKind, state) -> tuple[float, float]:
    """The (x, y) position the field is evaluated at; (x, z) for the quadrotor."""
    if kind == SystemKind.QUADROTOR2D:
        return float(state[0]), float(state[2])
    return float(state[0]), float(state[1])


def _sign(v: float) -> float:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


_CONSTRAINT_TOL = 1e-9


def check_input(kind: SystemKind, u, params: SystemParams = DEFAULT_PARAMS) -> None:
    """Raise :class:`InputConstraintError` when ``u`` violates the input set.

    Roomba: v, omega in [-1, 1].  DiffDrive: |uL| + |uR| <= 1.
    CarRobot: |v| <= |w| <= 1.  The quadrotor is unchecked (see
    :class:`SystemParams`).
    """
    u0 = float(u[0])
    u1 = float(u[1])
    t = _CONSTRAINT_TOL
    if kind == SystemKind.ROOMBA:
        if abs(u0) > 1.0 + t or abs(u1) > 1.0 + t:
            raise InputConstraintError(f"roomba input {u0, u1} outside [-1,1]^2")
    elif kind == SystemKind.DIFFDRIVE:
        if abs(u0) + abs(u1) > 1.0 + t:
            raise InputConstraintError(f"diffdrive input {u0, u1} violates |uL|+|uR| <= 1")
    elif kind == SystemKind.CARROBOT:
        if abs(u1) > 1.0 + t or abs(u0) > abs(u1) + t:
            raise InputConstraintError(f"carrobot input {u0, u1} violates |v| <= |w| <= 1")


def dynamics(kind: SystemKind, state, u, params: SystemParams = DEFAULT_PARAMS) -> np.ndarray:
    """State derivative f(state, u); rejects infeasible inputs, never clamps."""
    check_input(kind, u, params)
    if kind == SystemKind.ROOMBA:
        v, w = float(u[0]), float(u[1])
        th = float(state[2])
        return np.array([v * math.cos(th), v * math.sin(th), w])
    if kind == SystemKind.DIFFDRIVE:
        ul, ur = float(u[0]), float(u[1])
        th = float(state[2])
        s = (ul + ur) * (params.r / 2.0)
        return np.array([s * math.cos(th), s * math.sin(th), (ur - ul) * params.r / (2.0 * params.d)])
    if kind == SystemKind.CARROBOT:
        v, w = float(u[0]), float(u[1])
        th, psi = float(state[2]), float(state[3])
        return np.array([v * math.cos(th), v * math.sin(th), v * math.tan(psi) / params.l, w])
    if kind == SystemKind.QUADROTOR2D:
        F, M = float(u[0]), float(u[1])
        vx, vz = float(state[1]), float(state[3])
        th, om = float(state[4]), float(state[5])
        return np.array(
            [
                vx,
                -F * math.sin(th) / params.m,
                vz,
                F * math.cos(th) / params.m - params.g,
                om,
                M / params.ixx,
            ]
        )
    raise ValueError(f"unknown system kind {kind!r}")


def optimal_control(kind: SystemKind, state, grad, mode: str = MODE_DESCENT) -> np.ndarray:
    """Closed-form minimizer of <f(state, u), grad> over the input set.

    With heading theta, let a = gx*cos(theta) + gy*sin(theta) (alignment of
    the heading with the gradient) and b = -gx*sin(theta) + gy*cos(theta)
    (its theta-derivative).  The translational input is -sign(a) in every
    mode, which attains the infimum -|a| * speed-scale; steering does not
    enter the inner product, and the two modes choose it differently:

    * ``descent-aligned`` steers with -sign(b): the heading converges to
      the anti-gradient from any initial angle (b is proportional to the
      sine of the heading error to that equilibrium), after which the
      system drives forward along the steepest descent.  Sign-coupled
      steering variants are bistable between the forward and reversing
      equilibria and chatter into level-set sliding instead of descending.
    * ``paper-verbatim`` steers with sign(b') where
      b' = -gx*cos(theta) + gy*sin(theta).

    sign(0) = 0 throughout, so a zero gradient stalls the system.  For the
    car robot the steering command keeps |w| = 1 whenever a != 0: the
    centering term -sign(psi) may cancel the steering preference, and
    shrinking v to |w| = 0 would forfeit the achievable descent.
    """
    kind = kind_of(kind)
    if kind not in CAR_LIKE:
        raise ValueError(f"no closed-form steepest-descent controller for {kind}")
    if mode not in CONTROLLER_MODES:
        raise ValueError(f"unknown controller mode {mode!r}")
    gx, gy = float(grad[0]), float(grad[1])
    th = float(state[2])
    c, s = math.cos(th), math.sin(th)
    a = gx * c + gy * s
    b = (-gx * s + gy * c) if mode == MODE_DESCENT else (-gx * c + gy * s)
    sa, sb = _sign(a), _sign(b)

    if kind == SystemKind.ROOMBA:
        w = -sb if mode == MODE_DESCENT else sb
        return np.array([-sa, w])

    if kind == SystemKind.DIFFDRIVE:
        t = -sb if mode == MODE_DESCENT else sb
        return np.array([(-t - sa) / 2.0, (t - sa) / 2.0])  # (uL, uR)

    # Car robot: theta-rate is v*tan(psi)/l, so the steering angle psi is
    # driven toward the sign that rotates the heading like the unicycle
    # steering above (sign(theta-dot) = -sign(a)*sign(psi)).
    psi = float(state[3])
    v = -sa
    steer = sa * sb if mode == MODE_DESCENT else v * sb
    w = max(-1.0, min(1.0, steer - _sign(psi)))
    if abs(w) < abs(v):
        # Centering cancelled the steering term; restore full steering
        # authority so v keeps its magnitude and the descent -|a| is met.
        if steer != 0.0:
            w = steer
        elif psi != 0.0:
            w = -_sign(psi)
        else:
            w = 1.0
    return np.array([v, w])


def brute_force_control(
    kind: SystemKind,
    state,
    grad,
    resolution: int,
    params: SystemParams = DEFAULT_PARAMS,
) -> tuple[np.ndarray, float]:
    """Grid search for the minimizer of <f(state, u), grad>.

    The feasible input set is gridded at ``resolution`` points per input
    dimension (infeasible pairs filtered for diffdrive/carrobot), the inner
    product is evaluated exactly, and the grid minimizer is returned.  Ties
    break by smallest input norm, then lexicographic order.  Serves as the
    independent optimality oracle for :func:`optimal_control`.
    """
    kind = kind_of(kind)
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    gx, gy = float(grad[0]), float(grad[1])

    if kind == SystemKind.QUADROTOR2D:
        axis = np.linspace(params.quad_input_lo, params.quad_input_hi, resolution)
    else:
        axis = np.linspace(-1.0, 1.0, resolution)
    U1, U2 = np.meshgrid(axis, axis, indexing="ij")
    u1 = U1.ravel()
    u2 = U2.ravel()

    if kind == SystemKind.ROOMBA:
        th = float(state[2])
        a = gx * math.cos(th) + gy * math.sin(th)
        inner = u1 * a
    elif kind == SystemKind.DIFFDRIVE:
        th = float(state[2])
        a = gx * math.cos(th) + gy * math.sin(th)
        # One ulp of slack: grid sums like 0.51 + 0.49 carry rounding noise.
        feas = np.abs(u1) + np.abs(u2) <= 1.0 + 1e-12
        u1, u2 = u1[feas], u2[feas]
        inner = (u1 + u2) * (params.r / 2.0) * a
    elif kind == SystemKind.CARROBOT:
        th = float(state[2])
        a = gx * math.cos(th) + gy * math.sin(th)
        feas = np.abs(u1) <= np.abs(u2) + 1e-12
        u1, u2 = u1[feas], u2[feas]
        inner = u1 * a
    else:  # quadrotor: planar velocity rows do not depend on u
        inner = np.full(u1.shape, gx * float(state[1]) + gy * float(state[3]))

    m = inner.min()
    tied = np.flatnonzero(inner == m)
    norms = u1[tied] ** 2 + u2[tied] ** 2
    tied = tied[norms == norms.min()]
    order = np.lexsort((u2[tied], u1[tied]))
    best = tied[order[0]]
    return np.array([u1[best], u2[best]]), float(m)


def quadrotor_controller(state, vtil, params: SystemParams = DEFAULT_PARAMS) -> np.ndarray:
    """Velocity-tracking PD law for the planar quadrotor.

    ``vtil`` is the unit descent direction of the field at (x, z): the
    commanded planar velocity.  The pitch command phi_c = (xdot - vtil_x)/g
    feeds a PD attitude loop M = Ixx*(-15*thetadot + 18*(phi_c - theta));
    thrust F = m*(g + vtil_z - zdot) tracks the vertical velocity.
    """
    vx, vz = float(state[1]), float(state[3])
    th, om = float(state[4]), float(state[5])
    phi_c = (vx - float(vtil[0])) / params.g
    F = params.m * (params.g + float(vtil[1]) - vz)
    M = params.ixx * (-15.0 * om + 18.0 * (phi_c - th))
    return np.array([F, M])


def planar_input_matrix(kind: SystemKind, state, params: SystemParams = DEFAULT_PARAMS) -> np.ndarray:
    """Input matrix of the control-affine planar rows of f(state, u)."""
    kind = kind_of(kind)
    if kind == SystemKind.QUADROTOR2D:
        return np.zeros((2, 2))  # inputs act on accelerations, not velocities
    th = float(state[2])
    c, s = math.cos(th), math.sin(th)
    if kind == SystemKind.DIFFDRIVE:
        h = params.r / 2.0
        return np.array([[h * c, h * c], [h * s, h * s]])
    return np.array([[c, 0.0], [s, 0.0]])  # roomba / carrobot: only u[0] moves the base


def _spectral_norm_2x2(B: np.ndarray) -> float:
    a, b = float(B[0, 0]), float(B[0, 1])
    c, d = float(B[1, 0]), float(B[1, 1])
    f = a * a + b * b + c * c + d * d
    det = a * d - b * c
    root = math.sqrt(max(f * f - 4.0 * det * det, 0.0))
    return math.sqrt((f + root) / 2.0)


def noise_upper_bound(
    state,
    u,
    value: float,
    grad,
    level: float,
    dt: float,
    kind: SystemKind,
    params: SystemParams = DEFAULT_PARAMS,
) -> float:
    """First-order bound on the input-noise norm preserving V < level.

    Returns ``((level - V)/dt - <grad, f(x,u)>) / (|B(x)|_2 * |grad|_2)``
    where B is the planar input matrix; infinite when the denominator falls
    below 1e-12 (zero gradient or inputs that do not move the base).

    Raises
    ------
    ValueError
        When ``value >= level``: the state is already at or above the
        barrier level and no first-order noise budget exists.
    """
    kind = kind_of(kind)
    if value >= level:
        raise ValueError(f"V = {value} is not below the barrier level {level}")
    gx, gy = float(grad[0]), float(grad[1])
    f = dynamics(kind, state, u, params)
    r0, r1 = _PLANAR_ROWS[kind]
    inner = gx * float(f[r0]) + gy * float(f[r1])
    den = _spectral_norm_2x2(planar_input_matrix(kind, state, params)) * math.hypot(gx, gy)
    if den < 1e-12:
        return math.inf
    return ((level - value) / dt - inner) / den


def clip_noise(z: np.ndarray, bound: float) -> np.ndarray:
    """Rescale z so its norm stays strictly below the bound.

    Applies the factor ``min(1, 0.999*bound/|z|)``; the bound is a strict
    inequality, hence the 0.999 safety factor.
    """
    if not math.isfinite(bound):
        return z
    nz = float(np.linalg.norm(z))
    if nz == 0.0:
        return z
    factor = min(1.0, 0.999 * bound / nz)
    if factor < 0.0:
        factor = 0.0
    return z * factor


def _project_segment(px, py, ax, ay, bx, by) -> tuple[float, float]:
    dx, dy = bx - ax, by - ay
    t = ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)
    t = max(0.0, min(1.0, t))
    return ax + t * dx, ay + t * dy


def _project_carrobot(u: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {|v| <= |w| <= 1}: two mirror-image triangles."""
    v, w = float(u[0]), float(u[1])
    best = None
    best_d = math.inf
    for sgn in (1.0, -1.0):
        ww = w * sgn
        if abs(v) <= ww <= 1.0:
            cand = (v, ww)
        else:
            cand = None
            cand_d = math.inf
            for (ax, ay, bx, by) in ((0.0, 0.0, 1.0, 1.0), (0.0, 0.0, -1.0, 1.0), (-1.0, 1.0, 1.0, 1.0)):
                cx, cy = _project_segment(v, ww, ax, ay, bx, by)
                dd = (cx - v) ** 2 + (cy - ww) ** 2
                if dd < cand_d:
                    cand_d = dd
                    cand = (cx, cy)
        d = (cand[0] - v) ** 2 + (cand[1] - ww) ** 2
        if d < best_d:
            best_d = d
            best = (cand[0], sgn * cand[1])
    return np.array(best)


def _project_l1_ball(u: np.ndarray, radius: float) -> np.ndarray:
    a = np.abs(u)
    if a.sum() <= radius:
        return np.asarray(u, dtype=float).copy()
    s = np.sort(a)[::-1]
    css = np.cumsum(s)
    ks = np.arange(1, s.size + 1)
    ok = s - (css - radius) / ks > 0
    k = int(ks[ok][-1])
    tau = (css[k - 1] - radius) / k
    return np.sign(u) * np.maximum(a - tau, 0.0)


def project_input(kind: SystemKind, u, params: SystemParams = DEFAULT_PARAMS) -> np.ndarray:
    """Euclidean projection onto the system's feasible input set."""
    kind = kind_of(kind)
    u = np.asarray(u, dtype=float)
    if kind == SystemKind.ROOMBA:
        return np.clip(u, -1.0, 1.0)
    if kind == SystemKind.DIFFDRIVE:
        return _project_l1_ball(u, 1.0)
    if kind == SystemKind.CARROBOT:
        return _project_carrobot(u)
    raise ValueError(f"no input projection for {kind}")


def stochastic_control(
    kind: SystemKind,
    state,
    grad,
    value: float,
    env: Environment,
    noise: NoiseConfig | None,
    dt: float,
    mode: str = MODE_DESCENT,
    params: SystemParams = DEFAULT_PARAMS,
) -> np.ndarray:
    """Steepest-descent input plus clipped Gaussian exploration noise.

    Draws z ~ N(0, sigma^2 I), rescales it to stay strictly below the
    first-order barrier bound, adds it to the deterministic minimizer and
    projects the sum back onto the feasible set.  With ``sigma == 0`` the
    deterministic input is returned unchanged.  At states with
    V >= barrier level (possible on superharmonic fields) no positive noise
    budget exists and the noise is dropped for that step.
    """
    kind = kind_of(kind)
    u_star = optimal_control(kind, state, grad, mode)
    if noise is None or noise.sigma == 0.0:
        return u_star
    if noise.rng is None:
        raise ValueError("NoiseConfig.rng is required when sigma > 0")
    z = noise.rng.normal(0.0, noise.sigma, size=u_star.shape[0])
    if value < env.barrier_level:
        bound = noise_upper_bound(state, u_star, value, grad, env.barrier_level, dt, kind, params)
        z = clip_noise(z, bound)
    else:
        z = np.zeros_like(u_star)
    return project_input(kind, u_star + z, params)
