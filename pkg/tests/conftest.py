"""Shared fixtures: benchmark fields at several resolutions and the
independent dense-linear-solve oracle for the 5-point system."""

import numpy as np
import pytest

from harmonic_clbf import FREE, FIXED_GOAL, GridSpec, builtin_problem, rasterize, solve
from harmonic_clbf.experiments import problem_field


def dense_solve_oracle(mask, rhs=0.0, level=1.0, boundary_values=None):
    """Assemble and solve the 5-point linear system directly (np.linalg.solve).

    Independent of the package's relaxation path: one dense matrix over the
    free nodes, Dirichlet data folded into the right-hand side.
    """
    grid = mask.grid
    tags = mask.tags
    hx, hy = grid.hx, grid.hy
    ax, ay = 1.0 / hx**2, 1.0 / hy**2
    ac = 2.0 * (ax + ay)
    if boundary_values is None:
        pinned = np.where(tags == FIXED_GOAL, 0.0, float(level))
    else:
        pinned = np.asarray(boundary_values, dtype=float)
    free = tags == FREE
    index = -np.ones(tags.shape, dtype=int)
    free_nodes = np.argwhere(free)
    for n, (j, i) in enumerate(free_nodes):
        index[j, i] = n
    n = len(free_nodes)
    A = np.zeros((n, n))
    b = np.full(n, float(rhs))
    for r, (j, i) in enumerate(free_nodes):
        A[r, r] = -ac
        for j2, i2, w in ((j, i - 1, ax), (j, i + 1, ax), (j - 1, i, ay), (j + 1, i, ay)):
            if free[j2, i2]:
                A[r, index[j2, i2]] += w
            else:
                b[r] -= w * pinned[j2, i2]
    out = pinned.astype(float).copy()
    out[free] = np.linalg.solve(A, b)
    return out


@pytest.fixture(scope="session")
def problem_i():
    return builtin_problem("problem-i")


@pytest.fixture(scope="session")
def problem_ii():
    return builtin_problem("problem-ii")


@pytest.fixture(scope="session")
def quadrotor_problem():
    return builtin_problem("quadrotor2d")


@pytest.fixture(scope="session")
def mask_p1_51(problem_i):
    env, _ = problem_i
    return rasterize(env, GridSpec(env.domain, 51, 51))


@pytest.fixture(scope="session")
def field_p1_51(mask_p1_51):
    return solve(mask_p1_51)


@pytest.fixture(scope="session")
def field_p1_101():
    return problem_field("problem-i", 0.0, grid=(101, 101))


@pytest.fixture(scope="session")
def field_p1_h(problem_i):
    return problem_field("problem-i", 0.0)


@pytest.fixture(scope="session")
def field_p1_s(problem_i):
    return problem_field("problem-i", -6.0)


@pytest.fixture(scope="session")
def field_p2_h(problem_ii):
    return problem_field("problem-ii", 0.0)


@pytest.fixture(scope="session")
def quad_field(quadrotor_problem):
    return problem_field("quadrotor2d", 0.0)


@pytest.fixture(scope="session")
def oracle_p1_51(mask_p1_51):
    return dense_solve_oracle(mask_p1_51)


# Value of the dense oracle at node (42, 42) of the 51x51 Problem I grid
# (the node nearest (0.7, 0.7)); frozen from a direct np.linalg.solve run.
ORACLE_P1_51_NODE_42_42 = 0.992362666501361
