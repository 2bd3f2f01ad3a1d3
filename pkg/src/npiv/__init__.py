"""Adaptive thresholded least-squares estimation for nonparametric instrumental
regression, with analytically verifiable simulation designs and a seeded
Monte Carlo harness."""

from .basis import BasisFamily, certify_sup_norm, eval_basis, eval_vector
from .dgp import (
    DependenceModel,
    DesignConfig,
    ErrorModel,
    JointDesign,
    beta_bound,
    build_design,
    certified_weights,
    generate_sample,
    realize_design,
    sample_joint,
    sample_path,
    structural_coeffs,
)
from .galerkin import (
    CoefficientEstimate,
    GalerkinSystem,
    Sample,
    assemble,
    inverse_norm_sq,
    l2_error,
    read_sample_csv,
    spectral_norm,
    threshold_ls_estimate,
    write_sample_csv,
)
from .harness import (
    ExperimentConfig,
    ReplicationRecord,
    load_experiment_config,
    oracle_ratio_report,
    rate_slope,
    run_experiment,
    run_rate_study,
    run_replication,
)
from .selection import (
    KAPPA_DEPENDENT,
    KAPPA_IID,
    PenaltyConfig,
    SelectionTrace,
    adaptive_estimate,
    alpha_n,
    candidate_cap,
    contrast,
    delta_triplet,
    kappa_for_mixing,
    penalty,
    select_dimension,
    sigma_hat_sq,
    trace_to_csv,
    truncation_index,
)
from .theory import (
    SmoothnessCase,
    TheoreticalQuantities,
    WeightSequences,
    approximation_bound_check,
    bias_sq,
    check_link_condition,
    compute_theoretical_quantities,
    minimax_dimension_rate,
    mixing_admissibility,
    oracle_dimension,
    theoretical_truncations,
    true_operator_matrix,
)

__version__ = "0.1.0"
