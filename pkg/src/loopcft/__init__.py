"""Brownian loop soup CFT toolkit.

Closed-form correlators of the layering and edge-counting operators,
stress-tensor extraction by OPE mode projection, and Monte Carlo samplers
that cross-validate the loop-measure predictions.
"""

from .correlators import (
    BOUNDARY_CONSTANTS,
    BoundaryConstants,
    ExcursionPrediction,
    ModelParams,
    alpha_hat_pair,
    alpha_hat_single,
    bubble_separation_weight,
    closed_TEE,
    closed_TOO,
    conformal_dimension,
    excursion_ope_prediction,
    four_point_OOEE,
    g_kernel,
    halfplane_slit_map,
    jw_coefficients,
    n_point_partition_sum,
    one_point_layering_halfplane,
    phi12_ope_coefficients,
    sigma_cross,
    three_point_BOO,
    tt_two_point,
    two_point_boundary_edge,
    two_point_edge_plane,
    two_point_layering_halfplane,
    ward_rhs_boundary,
    ward_rhs_bulk,
    z_twist,
)
from .errors import (
    AccuracyError,
    AmbiguousPointError,
    ConfigError,
    DomainError,
    InputError,
    SamplingError,
)
from .estimators import (
    domain_perturbation_report,
    estimate_boundary_pair_scaling,
    estimate_bubble_separation,
    estimate_domain_perturbation,
    estimate_excursion_separation,
    estimate_mutual_containment,
    estimate_pair_weight_asymptotics,
)
from .ope import (
    ModeProjectionPlan,
    angular_mode,
    default_plan,
    extract_T_against_EE,
    extract_T_against_OO,
    extrapolate_to_zero,
    tt_via_double_extraction,
)
from .sampler import (
    ExcursionHull,
    ExcursionSample,
    LoopSample,
    MCEstimate,
    SoupWindow,
    config_digest,
    hits_disk,
    hull_of_excursion,
    interior_contains,
    sample_excursion,
    sample_soup,
    separates,
    soup_mass,
)
from .specfun import DEFAULT_OPTIONS, EvalOptions, gamma, hyp2f1, hyp3f2_1_1_43_2_53

__version__ = "0.1.0"
