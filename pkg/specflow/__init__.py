"""
Spectral Flow Toolkit Package
"""

from .errors import (
    EXIT_ASSERTION,
    EXIT_CERTIFICATE,
    EXIT_CONFIG,
    SpecFlowError,
    FormError,
    DiracError,
    FlowError,
    HeatError,
    CertificateError,
    ConfigError,
)

from .models import (
    ExperimentName,
    FormTerm,
    FormDocument,
    EstimatorOverrides,
    HeatSettings,
    ExperimentConfig,
    CrossingRecord,
    SpectralFlowResult,
    EstimatorParams,
    EstimatorResult,
    PLambdaResult,
    ExperimentReport,
)

from .cache import EigenCache, init_eigen_cache, get_eigen_cache

from .parallel import init_pool, get_max_workers, parallel_map

from .forms import (
    TrigPolyForm,
    MixedForm,
    Connection,
    CurvatureInput,
    wedge,
    wedge_mixed,
    ext_d,
    integrate_top,
    exp_form,
    exp_mixed,
    curvature_of,
    contact_form,
    contact_connection,
    chs,
    ahat_form,
    index_density,
    prediction,
    leading_order,
)

from .dirac import (
    CliffordRep,
    DiracBlocks,
    EigenSystem,
    trusted_window,
    conserved_mask,
    assemble,
    eig,
    solve,
    cl_pairing,
    cl_pairings,
    weitzenbock_residual,
    curvature_sup_norms,
    curvature_scale,
    r_of_A,
    cutoff_drift,
    check_cutoff_stability,
)

from .flow import (
    PathSpec,
    exact_flow,
    phi,
    choose_params,
    wp,
    wp_density,
    path_rmax,
    estimator_flow,
    eta_difference,
    error_functional,
)

from .heat import (
    HeatProbe,
    heat_trace,
    diag_kernel,
    count_eigs,
    count_bound,
    weyl_ratio,
    p_lambda,
    pointwise_density_check,
    kernel_growth_constant,
    pointwise_scaling,
    log_slope,
    min_admissible_t,
    separable_heat_trace,
    form_mass,
    residual_envelope,
    residual_bound_constant,
)

from .output import ExperimentWriter

from .experiments import (
    default_config,
    resolve_config,
    winding_path,
    contact_path,
    contact_cutoff,
    run_winding,
    run_contact_sweep,
    run_estimator_check,
    run_heat_checks,
    run_chs_checks,
    run_experiment,
    run_all,
)

__all__ = [
    # Errors
    "EXIT_ASSERTION",
    "EXIT_CERTIFICATE",
    "EXIT_CONFIG",
    "SpecFlowError",
    "FormError",
    "DiracError",
    "FlowError",
    "HeatError",
    "CertificateError",
    "ConfigError",
    # Models
    "ExperimentName",
    "FormTerm",
    "FormDocument",
    "EstimatorOverrides",
    "HeatSettings",
    "ExperimentConfig",
    "CrossingRecord",
    "SpectralFlowResult",
    "EstimatorParams",
    "EstimatorResult",
    "PLambdaResult",
    "ExperimentReport",
    # Cache / workers
    "EigenCache",
    "init_eigen_cache",
    "get_eigen_cache",
    "init_pool",
    "get_max_workers",
    "parallel_map",
    # Forms
    "TrigPolyForm",
    "MixedForm",
    "Connection",
    "CurvatureInput",
    "wedge",
    "wedge_mixed",
    "ext_d",
    "integrate_top",
    "exp_form",
    "exp_mixed",
    "curvature_of",
    "contact_form",
    "contact_connection",
    "chs",
    "ahat_form",
    "index_density",
    "prediction",
    "leading_order",
    # Dirac
    "CliffordRep",
    "DiracBlocks",
    "EigenSystem",
    "trusted_window",
    "conserved_mask",
    "assemble",
    "eig",
    "solve",
    "cl_pairing",
    "cl_pairings",
    "weitzenbock_residual",
    "curvature_sup_norms",
    "curvature_scale",
    "r_of_A",
    "cutoff_drift",
    "check_cutoff_stability",
    # Flow
    "PathSpec",
    "exact_flow",
    "phi",
    "choose_params",
    "wp",
    "wp_density",
    "path_rmax",
    "estimator_flow",
    "eta_difference",
    "error_functional",
    # Heat
    "HeatProbe",
    "heat_trace",
    "diag_kernel",
    "count_eigs",
    "count_bound",
    "weyl_ratio",
    "p_lambda",
    "pointwise_density_check",
    "kernel_growth_constant",
    "pointwise_scaling",
    "log_slope",
    "min_admissible_t",
    "separable_heat_trace",
    "form_mass",
    "residual_envelope",
    "residual_bound_constant",
    # Experiments
    "ExperimentWriter",
    "default_config",
    "resolve_config",
    "winding_path",
    "contact_path",
    "contact_cutoff",
    "run_winding",
    "run_contact_sweep",
    "run_estimator_check",
    "run_heat_checks",
    "run_chs_checks",
    "run_experiment",
    "run_all",
]
