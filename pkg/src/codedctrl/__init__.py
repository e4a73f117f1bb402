"""Jointly optimal zero-delay coding and control over a finite-rate channel.

The package simulates the belief-MDP reformulation of a controlled Markov
source observed through a quantizer, learns near-optimal joint
quantizer/controller policies with tabular Q-learning on two finite
approximations (belief-grid keys and sliding finite windows), and checks the
filter-stability bounds that justify them.
"""

from .backend import BACKEND, USING_NUMBA
from .belief_mdp import (
    BeliefGrid,
    EnvState,
    build_grid,
    effective_cost,
    env_step,
    grid_size,
    nearest_grid,
)
from .filtering import (
    AbsoluteContinuityError,
    LossEstimate,
    StabilityReport,
    UnreachableSymbol,
    channel_output_dist,
    dobrushin,
    empirical_loss,
    filter_update,
    point_mass,
    predictor_update,
    stability_report,
    tv_distance,
    uniform_belief,
)
from .learning import (
    Diagnostics,
    EmpiricalModel,
    LearnConfig,
    Policy,
    QTable,
    dcoe_residual,
    extract_policy,
    load_policy,
    load_qtable,
    q_update,
    run_quantized_qlearning,
    run_window_qlearning,
    save_json,
)
from .model import (
    ActionSpaceTooLarge,
    ControlMap,
    JointAction,
    ModelSpec,
    ModelValidationError,
    Quantizer,
    act,
    action_from_index,
    enumerate_actions,
    load_model,
    n_actions,
    sample_next_state,
    validate_model,
)
from .oracle import (
    EvalResult,
    IncompatiblePolicy,
    TreeTooLarge,
    ValueFunction,
    exact_discounted_cost,
    monte_carlo_cost,
    recurrent_prior,
    stationary_distribution,
    value_iterate_grid,
)
from .window import (
    InfeasibleHistory,
    WindowState,
    decode_window,
    encode_window,
    initial_window,
    psi,
    psi_total,
    window_env_step,
    window_shift,
)

__version__ = "0.1.0"
