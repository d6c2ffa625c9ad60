"""Harmonic control Lyapunov barrier functions for 2D reach-avoid control.

Solve a Dirichlet problem pinning the goal to 0 and obstacles to the
barrier level, evaluate the resulting field and its gradient anywhere in
the domain, drive benchmark systems down the field with closed-form
steepest-descent controllers, and measure safety and goal-reaching rates
over seeded Monte Carlo rollouts.
"""

from .geometry import (
    Constant,
    Environment,
    InitialSampler,
    Rect,
    RegionLabel,
    Uniform,
    UniformUnion,
    builtin_problem,
    builtin_problem_ids,
    classify,
    sample_initial_state,
)
from .solver import (
    FIXED_GOAL,
    FIXED_UNSAFE,
    FREE,
    CLBFPropertyReport,
    GridSpec,
    NodeMask,
    PropertyCheck,
    ScalarField,
    SolverError,
    rasterize,
    residual,
    solve,
    verify_clbf_properties,
)
from .fields import GradientSample, gradient_at, node_gradients, normalized_gradient, value_at
from .systems import (
    CAR_LIKE,
    CONTROLLER_MODES,
    DEFAULT_PARAMS,
    MODE_DESCENT,
    MODE_VERBATIM,
    STATE_DIM,
    InputConstraintError,
    NoiseConfig,
    SystemKind,
    SystemParams,
    brute_force_control,
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
from .simulate import (
    GOAL,
    TIMEOUT,
    UNSAFE,
    IntegrationError,
    Outcome,
    SimConfig,
    Trajectory,
    run_trajectory,
    step,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    LambdaEstimate,
    clear_field_cache,
    estimate_lambda,
    format_table,
    initial_state,
    problem_defaults,
    problem_field,
    run_monte_carlo,
    run_quadrotor_study,
)

__version__ = "0.1.0"
