import math

import numpy as np
import pytest

from harmonic_clbf import (
    CAR_LIKE,
    DEFAULT_PARAMS,
    MODE_DESCENT,
    MODE_VERBATIM,
    InputConstraintError,
    NoiseConfig,
    SystemKind,
    brute_force_control,
    builtin_problem,
    check_input,
    clip_noise,
    dynamics,
    kind_of,
    noise_upper_bound,
    optimal_control,
    planar_input_matrix,
    planar_position,
    project_input,
    quadrotor_controller,
    state_names,
    stochastic_control,
)


def sign(v):
    return (v > 0) - (v < 0)


def planar_inner(kind, state, u, grad):
    f = dynamics(kind, state, u)
    if kind == SystemKind.QUADROTOR2D:
        return grad[0] * f[0] + grad[1] * f[2]
    return grad[0] * f[0] + grad[1] * f[1]


def random_car_states(rng, kind, n):
    for _ in range(n):
        state = rng.uniform(-1.0, 1.0, size=4 if kind == SystemKind.CARROBOT else 3)
        state[2] = rng.uniform(0.0, 2.0 * math.pi)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        grad = np.array([math.cos(phi), math.sin(phi)])  # unit gradient
        yield state, grad


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def test_dynamics_roomba():
    f = dynamics(SystemKind.ROOMBA, (0.0, 0.0, 0.0), (1.0, 0.0))
    assert f == pytest.approx([1.0, 0.0, 0.0])


def test_dynamics_diffdrive():
    f = dynamics(SystemKind.DIFFDRIVE, (0.0, 0.0, 0.0), (0.5, 0.5))
    assert f == pytest.approx([0.05, 0.0, 0.0])
    f = dynamics(SystemKind.DIFFDRIVE, (0.0, 0.0, 0.0), (-0.5, 0.5))
    assert f == pytest.approx([0.0, 0.0, 0.5])  # (uR-uL) * r/(2d) = 1.0 * 0.5


def test_dynamics_carrobot():
    f = dynamics(SystemKind.CARROBOT, (0.0, 0.0, 0.0, 0.25), (1.0, 1.0))
    assert f[0] == pytest.approx(1.0)
    assert f[2] == pytest.approx(math.tan(0.25) / 0.1)
    assert f[3] == pytest.approx(1.0)


def test_dynamics_quadrotor_hover():
    p = DEFAULT_PARAMS
    state = np.zeros(6)
    f = dynamics(SystemKind.QUADROTOR2D, state, (p.m * p.g, 0.0))
    assert f == pytest.approx(np.zeros(6), abs=1e-12)


def test_dynamics_rejects_infeasible_inputs():
    with pytest.raises(InputConstraintError):
        dynamics(SystemKind.ROOMBA, (0, 0, 0), (1.5, 0.0))
    with pytest.raises(InputConstraintError):
        dynamics(SystemKind.DIFFDRIVE, (0, 0, 0), (0.7, 0.7))
    with pytest.raises(InputConstraintError):
        dynamics(SystemKind.CARROBOT, (0, 0, 0, 0), (1.0, 0.5))
    # The quadrotor's printed box excludes its own hover thrust; it is not
    # enforced (see SystemParams).
    dynamics(SystemKind.QUADROTOR2D, np.zeros(6), (0.32, 0.0))


def test_state_names_and_planar_position():
    assert state_names("roomba") == ("x", "y", "theta")
    assert state_names(SystemKind.QUADROTOR2D)[2] == "z"
    assert planar_position(SystemKind.ROOMBA, (1.0, 2.0, 3.0)) == (1.0, 2.0)
    assert planar_position(SystemKind.QUADROTOR2D, (1.0, 0.0, 2.0, 0.0, 0.0, 0.0)) == (1.0, 2.0)
    assert kind_of("CarRobot") == SystemKind.CARROBOT


# ---------------------------------------------------------------------------
# optimal_control
# ---------------------------------------------------------------------------


def test_roomba_drives_against_gradient():
    u = optimal_control(SystemKind.ROOMBA, (0.0, 0.0, 0.0), (1.0, 0.0))
    assert u[0] == -1.0  # a = 1 > 0
    assert u[1] == 0.0  # b = 0 at this heading


def test_zero_gradient_stalls():
    for kind in (SystemKind.ROOMBA, SystemKind.DIFFDRIVE):
        u = optimal_control(kind, (0.0, 0.0, 1.0), (0.0, 0.0))
        assert u == pytest.approx([0.0, 0.0])
    u = optimal_control(SystemKind.CARROBOT, (0.0, 0.0, 1.0, 0.0), (0.0, 0.0))
    assert u[0] == 0.0


def test_diffdrive_constraint_over_sign_combinations():
    rng = np.random.default_rng(0)
    seen = set()
    for state, grad in random_car_states(rng, SystemKind.DIFFDRIVE, 500):
        for mode in (MODE_DESCENT, MODE_VERBATIM):
            ul, ur = optimal_control(SystemKind.DIFFDRIVE, state, grad, mode)
            assert abs(ul) + abs(ur) <= 1.0 + 1e-12
            seen.add((round(float(ul), 3), round(float(ur), 3)))
    assert seen <= {(a / 2, b / 2) for a in (-2, -1, 0, 1, 2) for b in (-2, -1, 0, 1, 2)}


def test_carrobot_example_and_constraint():
    u = optimal_control(SystemKind.CARROBOT, (0.0, 0.0, 0.0, 0.0), (1.0, 0.0))
    assert u[0] == -1.0
    assert planar_inner(SystemKind.CARROBOT, (0.0, 0.0, 0.0, 0.0), u, (1.0, 0.0)) == pytest.approx(-1.0)
    assert abs(u[0]) <= abs(u[1]) <= 1.0


def test_carrobot_keeps_steering_authority_when_centering_cancels():
    # Heading/gradient/psi chosen so the centering term -sign(psi) cancels
    # the steering sign; |w| must stay 1 so v keeps its magnitude.
    rng = np.random.default_rng(1)
    hits = 0
    for state, grad in random_car_states(rng, SystemKind.CARROBOT, 400):
        u = optimal_control(SystemKind.CARROBOT, state, grad)
        th = state[2]
        a = grad[0] * math.cos(th) + grad[1] * math.sin(th)
        if a != 0.0:
            assert abs(u[0]) == 1.0
            assert abs(u[1]) == 1.0
            hits += 1
        assert abs(u[0]) <= abs(u[1]) + 1e-12
        assert abs(u[1]) <= 1.0
    assert hits > 350


def test_verbatim_mode_reproduces_printed_formulas():
    rng = np.random.default_rng(2)
    for state, grad in random_car_states(rng, SystemKind.ROOMBA, 200):
        gx, gy = grad
        th = state[2]
        a = gx * math.cos(th) + gy * math.sin(th)
        bp = -gx * math.cos(th) + gy * math.sin(th)
        u = optimal_control(SystemKind.ROOMBA, state, grad, MODE_VERBATIM)
        assert u[0] == -sign(a)
        assert u[1] == sign(bp)

    for state, grad in random_car_states(rng, SystemKind.DIFFDRIVE, 200):
        gx, gy = grad
        th = state[2]
        a = gx * math.cos(th) + gy * math.sin(th)
        bp = -gx * math.cos(th) + gy * math.sin(th)
        ul, ur = optimal_control(SystemKind.DIFFDRIVE, state, grad, MODE_VERBATIM)
        assert ur == pytest.approx((sign(bp) - sign(a)) / 2.0)
        assert ul == pytest.approx((-sign(bp) - sign(a)) / 2.0)

    for state, grad in random_car_states(rng, SystemKind.CARROBOT, 200):
        gx, gy = grad
        th, psi = state[2], state[3]
        a = gx * math.cos(th) + gy * math.sin(th)
        bp = -gx * math.cos(th) + gy * math.sin(th)
        v_printed = -sign(a)
        w_printed = v_printed * sign(bp) - sign(psi)
        u = optimal_control(SystemKind.CARROBOT, state, grad, MODE_VERBATIM)
        assert u[0] == v_printed
        if 1.0 <= abs(w_printed) <= 2.0:
            # Printed value feasible after clamping: reproduced exactly.
            assert u[1] == max(-1.0, min(1.0, w_printed))


def test_unknown_mode_and_kind_rejected():
    with pytest.raises(ValueError):
        optimal_control(SystemKind.ROOMBA, (0, 0, 0), (1, 0), mode="other")
    with pytest.raises(ValueError):
        optimal_control(SystemKind.QUADROTOR2D, np.zeros(6), (1, 0))


# ---------------------------------------------------------------------------
# brute_force_control (the optimality oracle)
# ---------------------------------------------------------------------------


def test_brute_force_roomba_resolution_3():
    u, inner = brute_force_control(SystemKind.ROOMBA, (0.0, 0.0, 0.0), (1.0, 0.0), 3)
    assert u == pytest.approx([-1.0, 0.0])  # omega tie broken to smallest norm
    assert inner == pytest.approx(-1.0)


def test_brute_force_zero_gradient_tie_break():
    u, inner = brute_force_control(SystemKind.ROOMBA, (0.0, 0.0, 0.7), (0.0, 0.0), 5)
    assert u == pytest.approx([0.0, 0.0])
    assert inner == 0.0


def test_brute_force_diffdrive_example():
    u, inner = brute_force_control(SystemKind.DIFFDRIVE, (0.0, 0.0, 0.0), (1.0, 0.0), 201)
    assert inner == pytest.approx(-0.05, abs=1e-12)
    # Ties at uL + uR = -1 break by smallest norm.
    assert u == pytest.approx([-0.5, -0.5], abs=1e-12)


def test_brute_force_validation():
    with pytest.raises(ValueError):
        brute_force_control(SystemKind.ROOMBA, (0, 0, 0), (1, 0), 1)


def test_oracle_dominance_sampled():
    rng = np.random.default_rng(3)
    for kind in CAR_LIKE:
        for state, grad in random_car_states(rng, kind, 300):
            u_star = optimal_control(kind, state, grad)
            inner_star = planar_inner(kind, state, u_star, grad)
            _, inner_bf = brute_force_control(kind, state, grad, 51)
            assert inner_star <= inner_bf + 1e-9


def test_descent_sign_equals_speed_scaled_alignment():
    rng = np.random.default_rng(4)
    scale = {SystemKind.ROOMBA: 1.0, SystemKind.DIFFDRIVE: 0.05, SystemKind.CARROBOT: 1.0}
    for kind in CAR_LIKE:
        for mode in (MODE_DESCENT, MODE_VERBATIM):
            for state, grad in random_car_states(rng, kind, 100):
                th = state[2]
                a = grad[0] * math.cos(th) + grad[1] * math.sin(th)
                inner = planar_inner(kind, state, optimal_control(kind, state, grad, mode), grad)
                assert inner == pytest.approx(-abs(a) * scale[kind], abs=1e-12)
                assert inner <= 0.0


# ---------------------------------------------------------------------------
# quadrotor controller
# ---------------------------------------------------------------------------


def test_quadrotor_hover_equilibrium():
    p = DEFAULT_PARAMS
    u = quadrotor_controller(np.zeros(6), (0.0, 0.0))
    assert u[0] == pytest.approx(p.m * p.g, abs=1e-15)  # ~0.32373
    assert u[1] == 0.0


def test_quadrotor_pitch_command_example():
    p = DEFAULT_PARAMS
    u = quadrotor_controller(np.zeros(6), (-1.0, 0.0))
    phi_c = 1.0 / p.g
    assert u[0] == pytest.approx(p.m * p.g)
    assert u[1] == pytest.approx(p.ixx * 18.0 * phi_c, rel=1e-12)
    assert u[1] == pytest.approx(4.238e-05, rel=1e-3)


def test_quadrotor_params_record_printed_box():
    p = DEFAULT_PARAMS
    assert p.quad_input_lo == pytest.approx(0.905)
    assert p.quad_input_hi == pytest.approx(8.905)
    # The hover thrust lies outside the printed box, which is why the
    # controller does not clamp into it.
    assert not (p.quad_input_lo <= p.m * p.g <= p.quad_input_hi)


# ---------------------------------------------------------------------------
# noise bound and clipping
# ---------------------------------------------------------------------------


def test_noise_bound_hand_arithmetic_case():
    # c=1, V=0.5, dt=0.1, inner=-1, denominator=2 -> exactly 3.0.
    state = (0.0, 0.0, 0.0)
    u = (-0.5, 0.0)  # planar inner product with grad (2,0): 2 * -0.5 = -1
    bound = noise_upper_bound(state, u, 0.5, (2.0, 0.0), 1.0, 0.1, SystemKind.ROOMBA)
    assert bound == 3.0


def test_noise_bound_zero_gradient_is_infinite():
    b = noise_upper_bound((0, 0, 0), (0.0, 0.0), 0.5, (0.0, 0.0), 1.0, 0.1, SystemKind.ROOMBA)
    assert math.isinf(b)


def test_noise_bound_rejects_states_at_level():
    with pytest.raises(ValueError):
        noise_upper_bound((0, 0, 0), (0.0, 0.0), 1.0, (1.0, 0.0), 1.0, 0.1, SystemKind.ROOMBA)


def test_noise_bound_positive_under_optimal_control():
    rng = np.random.default_rng(5)
    for kind in CAR_LIKE:
        for state, grad in random_car_states(rng, kind, 300):
            v = rng.uniform(0.0, 0.999)
            u = optimal_control(kind, state, grad)
            b = noise_upper_bound(state, u, v, grad, 1.0, 0.1, kind)
            assert b > 0.0


def test_planar_input_matrix_norms():
    B = planar_input_matrix(SystemKind.ROOMBA, (0, 0, 0.7))
    assert np.linalg.norm(B, 2) == pytest.approx(1.0, abs=1e-12)
    B = planar_input_matrix(SystemKind.DIFFDRIVE, (0, 0, 1.3))
    assert np.linalg.norm(B, 2) == pytest.approx(0.05 * math.sqrt(2.0), abs=1e-12)
    assert np.all(planar_input_matrix(SystemKind.QUADROTOR2D, np.zeros(6)) == 0.0)


def test_clip_noise_cases():
    z = np.array([0.14, 0.0])
    assert np.array_equal(clip_noise(z, 3.0), z)  # inactive

    z = np.array([0.2, 0.0])
    clipped = clip_noise(z, 0.05)
    assert np.linalg.norm(clipped) == pytest.approx(0.04995, abs=1e-15)

    assert np.array_equal(clip_noise(z, math.inf), z)
    assert np.array_equal(clip_noise(np.zeros(2), 0.1), np.zeros(2))


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


def test_project_roomba_box():
    assert project_input(SystemKind.ROOMBA, (1.4, -2.0)) == pytest.approx([1.0, -1.0])
    assert project_input(SystemKind.ROOMBA, (0.3, 0.4)) == pytest.approx([0.3, 0.4])


def test_project_diffdrive_l1_ball():
    assert project_input(SystemKind.DIFFDRIVE, (0.8, 0.8)) == pytest.approx([0.5, 0.5])
    assert project_input(SystemKind.DIFFDRIVE, (0.2, -0.3)) == pytest.approx([0.2, -0.3])
    u = project_input(SystemKind.DIFFDRIVE, (1.5, 0.1))
    assert abs(u).sum() <= 1.0 + 1e-12


def test_project_carrobot_against_grid_oracle():
    # Nearest feasible point by brute force over a fine grid of the set
    # {|v| <= |w| <= 1}.
    vs = np.linspace(-1.0, 1.0, 401)
    V, W = np.meshgrid(vs, vs, indexing="ij")
    feas = np.abs(V) <= np.abs(W)
    fv, fw = V[feas], W[feas]
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = rng.uniform(-2.0, 2.0, size=2)
        u = project_input(SystemKind.CARROBOT, p)
        check_input(SystemKind.CARROBOT, u)
        d_mine = np.hypot(u[0] - p[0], u[1] - p[1])
        d_oracle = np.hypot(fv - p[0], fw - p[1]).min()
        assert d_mine <= d_oracle + 1e-2  # grid resolution slack


# ---------------------------------------------------------------------------
# stochastic_control
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def p1_env():
    env, _ = builtin_problem("problem-i")
    return env


def test_stochastic_sigma_zero_is_deterministic(p1_env):
    state = (0.5, 0.5, 1.0)
    grad = (0.3, -0.2)
    u0 = optimal_control(SystemKind.ROOMBA, state, grad)
    u = stochastic_control(SystemKind.ROOMBA, state, grad, 0.5, p1_env, None, 0.1)
    assert np.array_equal(u, u0)
    u = stochastic_control(
        SystemKind.ROOMBA, state, grad, 0.5, p1_env, NoiseConfig(0.0, None), 0.1
    )
    assert np.array_equal(u, u0)


def test_stochastic_same_seed_same_input(p1_env):
    state = (0.5, 0.5, 1.0)
    grad = (0.3, -0.2)
    a = stochastic_control(
        SystemKind.ROOMBA, state, grad, 0.5, p1_env, NoiseConfig(0.1, np.random.default_rng(7)), 0.1
    )
    b = stochastic_control(
        SystemKind.ROOMBA, state, grad, 0.5, p1_env, NoiseConfig(0.1, np.random.default_rng(7)), 0.1
    )
    assert np.array_equal(a, b)


def test_stochastic_preserves_constraints_bulk(p1_env):
    # Spec-level invariant: 1e5 draws stay feasible.
    rng = np.random.default_rng(8)
    noise_rng = np.random.default_rng(9)
    kinds = list(CAR_LIKE)
    for i in range(100_000):
        kind = kinds[i % 3]
        state = rng.uniform(-0.5, 0.5, size=4 if kind == SystemKind.CARROBOT else 3)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        grad = np.array([math.cos(phi), math.sin(phi)]) * rng.uniform(0.1, 2.0)
        v = rng.uniform(0.0, 0.99)
        sigma = 0.1 if i % 2 == 0 else 0.5
        u = stochastic_control(
            kind, state, grad, v, p1_env, NoiseConfig(sigma, noise_rng), 0.1
        )
        check_input(kind, u)


def test_stochastic_noise_respects_clip_bound(p1_env):
    # Near the barrier level the budget shrinks; box projection is
    # non-expansive, so the output stays within 0.999 * bound of the
    # deterministic input.
    state = (0.5, 0.5, 1.0)
    grad = np.array([1.0, 0.0])
    value = 0.999  # (c - V)/dt = 0.01
    u0 = optimal_control(SystemKind.ROOMBA, state, grad)
    bound = noise_upper_bound(state, u0, value, grad, 1.0, 0.1, SystemKind.ROOMBA)
    rng = np.random.default_rng(10)
    for _ in range(200):
        u = stochastic_control(
            SystemKind.ROOMBA, state, grad, value, p1_env, NoiseConfig(0.5, rng), 0.1
        )
        assert np.linalg.norm(u - u0) <= 0.999 * bound + 1e-12


def test_stochastic_drops_noise_at_or_above_level(p1_env):
    state = (0.5, 0.5, 1.0)
    grad = (0.3, -0.2)
    u0 = optimal_control(SystemKind.ROOMBA, state, grad)
    u = stochastic_control(
        SystemKind.ROOMBA, state, grad, 1.2, p1_env, NoiseConfig(0.5, np.random.default_rng(11)), 0.1
    )
    assert np.array_equal(u, u0)


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(-0.1, None)
    with pytest.raises(ValueError):
        stochastic_control(
            SystemKind.ROOMBA, (0, 0, 0), (1, 0), 0.5, builtin_problem("problem-i")[0],
            NoiseConfig(0.1, None), 0.1,
        )
