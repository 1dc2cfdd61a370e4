"""Goal-oriented status-update scheduling for remote inference over
Markov-modulated two-way delay."""

from .delay_model import (
    DelayLaw,
    DelayNetwork,
    InvalidTransitionError,
    NotErgodicError,
    epoch_law,
    load_network,
    make_two_state_network,
    sample_epoch,
    stationary_distribution,
)
from .error_model import (
    ArProcessSpec,
    ErrorSurface,
    SingularCovarianceError,
    SurfaceFormatError,
    UnstableProcessError,
    ar_inference_error,
    ar_stationary_autocov,
    build_error_surface,
    eval_error,
    load_ar_spec,
    load_error_surface,
    save_error_surface,
)
from .fixed_solver import (
    DegenerateSurfaceError,
    EpochStats,
    FixedLengthPolicy,
    ThresholdNeverCrossedError,
    buffer_position,
    epoch_stats,
    evaluate_fixed_policy,
    iid_approx_network,
    load_fixed_policy,
    save_fixed_policy,
    solve_fixed,
    solve_fixed_all,
    wait_index,
    waiting_time,
    zero_wait_policy,
)
from .simulator import (
    DecisionRule,
    EpochRecord,
    FixedPolicyRule,
    InvalidActionError,
    SimResult,
    VariablePolicyRule,
    ZeroWaitRule,
    replicate,
    simulate,
)
from .variable_solver import (
    SmdpState,
    SolverConvergenceError,
    VariableLengthPolicy,
    embed_fixed_policy,
    evaluate_policy,
    improve_original,
    improve_simplified,
    load_variable_policy,
    policy_iteration,
    save_variable_policy,
)

__version__ = "0.1.0"
