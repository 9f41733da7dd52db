"""Nonlinear predictive-coding lattice: equilibria, fronts, pinning and input thresholds."""

from .equilibria import (
    BranchSet,
    Stability,
    classify_stability,
    dispersion_relation,
    equilibrium_branches,
    fold_points,
    max_growth_rate,
)
from .errors import (
    DegenerateParametersError,
    DivergenceError,
    DomainError,
    InconclusiveError,
    MissingBranchError,
    ModelError,
    NoBistabilityError,
    NoProfileError,
    NotApplicableError,
    ParameterError,
    PreconditionError,
    TrackingError,
)
from .lattice import (
    Closure,
    InputSignal,
    LatticeState,
    Method,
    Simulation,
    Topology,
    TopologyKind,
    Trajectory,
    integrate,
    make_rest_initial,
    make_step_initial,
    step,
)
from .model import (
    CouplingParams,
    ParamSet,
    SigmoidParams,
    bistable_reaction,
    make_params,
    rhs_nonlinearity,
    sigmoid,
    sigmoid_deriv,
    sigmoid_inverse,
    sigmoid_second_deriv,
)
from .thresholds import (
    BoundaryProfile,
    Marker,
    Outcome,
    OutcomeClass,
    ThresholdOptions,
    ThresholdResult,
    classify_constant_input,
    classify_flashed,
    combined_regime_map,
    find_s0_star,
    find_tau_star,
    stationary_boundary_profile,
)
from .waves import SpeedEstimate, SpeedOptions, estimate_speed, profile_convergence, sign_map, track_front

__version__ = "0.1.0"
