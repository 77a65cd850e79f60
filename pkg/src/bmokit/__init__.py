"""BMO on finite metric measure spaces.

Norms, John-Nirenberg tails, the multi-scale partition-of-unity
construction for sparse set families, and tests of how self-maps act on
BMO through the two-set density.
"""
from .space import (
    Ball,
    BallFamily,
    MetricMeasureSpace,
    SpaceError,
    adapted_bump,
    ball_family,
    build_space,
    doubling_constants,
    enumerate_balls,
    from_distance_matrix,
    grid_1d,
    grid_2d,
    lower_mass_check,
    maximal_net,
    path_graph,
    tree_graph,
    vitali_disjoint,
)
from .core import (
    STROMBERG_CONSTANT,
    BoundViolation,
    HypothesisError,
    Verdict,
    bmo_norm,
    dual_norm,
    find_t0,
    jn_constant,
    jn_converse,
    jn_profile,
    jn_tail,
    stromberg_bound,
    stromberg_functional,
    two_sided_check,
)
from .uchiyama import (
    ConstructionError,
    ConstructionParams,
    UchiyamaHypothesisError,
    choose_q,
    density_functional,
    necessity_check,
    trivial_construction,
    uchiyama_construct,
    verify_construction,
)
from .maps import (
    PointMap,
    compose,
    condition_i_fit,
    condition_ii_check,
    gotoh_iii_to_i,
    gotoh_roundtrip,
    operator_norm_estimate,
    preimage,
    two_set_density,
)

__version__ = "0.1.0"
