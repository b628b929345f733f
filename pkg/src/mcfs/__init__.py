"""Monotone cyclic feedback systems with negative feedback.

Integer-valued sign counts along the cycle, their envelope bounds, nested
high-rank cones and their invariance under cyclic linear flows, modulus
splitting of transition matrices, Floquet analysis of periodic orbits, and
numerical certification that stable and unstable manifolds of hyperbolic
critical elements cross transversally.
"""

from .errors import (
    ConeConsistencyError,
    DegeneracyError,
    DivergenceError,
    InconclusiveError,
    InvalidInputError,
    McfsError,
    NotConnectedError,
    NotFoundError,
    NotInDomainError,
    NumericalError,
    SpectralGapError,
    UnsupportedFeedbackSignError,
)
from .linflow import (
    CoefficientFn,
    LinearCyclicSystem,
    TransitionMatrix,
    monodromy,
    monotonicity_report,
    propagate_subspace,
    random_linear_system,
    sample_N_along,
    transition,
    validate_linear,
    verify_cone_invariance,
)
from .model import CyclicSystem, builtin, load_model, normalize, validate_feedback
from .orbits import (
    Equilibrium,
    PeriodicOrbit,
    Trajectory,
    TransversalityReport,
    connect,
    difference_signature,
    estimate_period,
    find_equilibrium,
    find_periodic,
    h_index,
    integrate,
    linearization_along,
    rebase_periodic,
    transversality,
)
from .signature import (
    LyapunovBounds,
    in_cone,
    lyapunov_bounds,
    lyapunov_value,
    predict_crossing,
    sign_pattern,
    value_ceiling,
)
from .spectra import (
    SpectralSplit,
    rank_certificate,
    reference_eigen,
    reference_matrix,
    split,
    verify_split_cones,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "McfsError",
    "InvalidInputError",
    "NotInDomainError",
    "UnsupportedFeedbackSignError",
    "NumericalError",
    "DivergenceError",
    "DegeneracyError",
    "NotFoundError",
    "SpectralGapError",
    "ConeConsistencyError",
    "NotConnectedError",
    "InconclusiveError",
    "CyclicSystem",
    "builtin",
    "load_model",
    "normalize",
    "validate_feedback",
    "LyapunovBounds",
    "sign_pattern",
    "value_ceiling",
    "lyapunov_value",
    "lyapunov_bounds",
    "in_cone",
    "predict_crossing",
    "CoefficientFn",
    "LinearCyclicSystem",
    "TransitionMatrix",
    "validate_linear",
    "transition",
    "monodromy",
    "propagate_subspace",
    "sample_N_along",
    "monotonicity_report",
    "verify_cone_invariance",
    "random_linear_system",
    "SpectralSplit",
    "reference_matrix",
    "reference_eigen",
    "split",
    "verify_split_cones",
    "rank_certificate",
    "Trajectory",
    "Equilibrium",
    "PeriodicOrbit",
    "TransversalityReport",
    "integrate",
    "find_equilibrium",
    "find_periodic",
    "rebase_periodic",
    "estimate_period",
    "linearization_along",
    "h_index",
    "difference_signature",
    "connect",
    "transversality",
]
