"""Bootstrap tests for equality of mean and covariance functions between
populations of curves, with null-enforcing resampling schemes, asymptotic
reference distributions, and a Monte Carlo size/power harness."""

__version__ = "0.1.0"

from .errors import NumericalError, ValidationError
from .curves import (
    FunctionalDataset,
    Grid,
    fourier_basis,
    fourier_smooth,
    inner_product,
    load_dataset,
    save_dataset,
    smoothing_matrix,
    weighted_norm,
)
from .moments import (
    EigenSystem,
    KernelMatrix,
    degenerate_gap_indices,
    eigen_decompose,
    eigen_decompose_factored,
    group_covariance,
    group_mean,
    mean_test_eigensystem,
    mean_test_pooled_kernel,
    pooled_covariance,
    pooled_eigensystem,
    pooled_mean,
    project_scores,
    residuals,
)
from .statistics import (
    StatKind,
    TestStatistic,
    asymptotic_pvalue,
    chisq_sf,
    compute_statistic,
    covariance_of_vech,
    stat_sn,
    stat_sp,
    stat_tn,
    stat_tpn,
    stat_tpn_g,
    vech,
    vech_pairs,
    weighted_chisq_sf,
)
from .bootstrap import (
    BootstrapResult,
    BootstrapScheme,
    SchemeKind,
    SeedSpec,
    bootstrap_pvalue,
    child_seed,
    default_scheme,
    resample_covariance_null,
    resample_gaussian,
    resample_joint_null,
    resample_mean_null,
)
from .simgen import (
    ExperimentSpec,
    GeneratorKind,
    GeneratorSpec,
    SizePowerResult,
    experiment_from_config,
    gen_brownian_bridge,
    gen_brownian_motion,
    gen_ng_sine,
    generate_dataset,
    generate_group,
    run_size_power,
    sample_t5,
)

__all__ = [name for name in dir() if not name.startswith("_")]
