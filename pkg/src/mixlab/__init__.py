"""Numerical laboratory for expanding Markov maps, roofs, and suspensions.

The package builds the chain interval map -> first-return induction ->
transfer operator -> skew-product attractor -> suspension semiflow, with
exact rational arithmetic wherever the data allows and seeded Monte Carlo
where it does not.
"""

from .errors import (
    BinMisalignment,
    BoundaryPoint,
    BracketUndefined,
    ConfigError,
    DepthOverflow,
    FiberEscape,
    GeometryViolation,
    InadmissibleItinerary,
    InsufficientDepth,
    MixlabError,
    NoConvergence,
    NoReturn,
    ProtectedOrbitHit,
    WindowTooShort,
)
from .markov_maps import (
    AffineBranch,
    CallableBranch,
    ExpandingMarkovMap,
    InducedMap,
    TailStatistics,
    ValidationReport,
    doubling_map,
    expanding_circle_map,
    tail_statistics,
    three_branch_map,
)
from .roof import (
    CohomologyReport,
    RoofFunction,
    Witness,
    birkhoff_sum,
    certify_coboundary,
    constant_roof,
    cosine_roof,
    per_branch_polynomial_roof,
    perturb_bump,
    polynomial_roof,
    validate_roof,
    witness_search,
)
from .skew_product import (
    AffineFiberFamily,
    Disintegration,
    FiberBall,
    HyperbolicSkewProduct,
    SandwichEstimate,
    disintegrate,
    eta_integral,
    sandwich_estimate,
    smoothness_probe,
    validate_contraction,
    validate_invariance,
)
from .solenoid import SolenoidModel, attractor_sample, check_domination
from .suspension import (
    CorrelationSeries,
    DecayFit,
    SuspensionSemiflow,
    correlation,
    default_observables,
    fit_rate,
    flow_to,
    sample_invariant,
    suspend,
    svg_log_plot,
    temporal_distance,
)
from .transfer_operator import (
    InvariantDensity,
    UlamOperator,
    apply_exact,
    build_ulam,
    duality_check,
    invariant_density,
    spectral_gap,
    ulam_consistency,
)

__version__ = "0.1.0"
