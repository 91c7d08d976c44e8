"""Bounded monotone recovery curves from expert estimates.

The package turns a handful of "how long until X% recovery?" expert
estimates into a full recovery curve with uncertainty bands: a Gaussian
process posterior constrained to be non-decreasing and to stay in [0, 1],
sampled exactly on a hat-function basis.  Around that core live the expert
panel simulator, elicitation bookkeeping (normalization, aggregation,
Delphi rounds for the duration estimate, performance-based weighting),
replicated accuracy experiments, a CLI, and an HTTP workshop service.
"""

from .curves import (
    NormalizedCurve,
    RecoveryCurve,
    load_empirical_curve,
    normalize_times,
    truncate_at_level,
)
from .elicitation import (
    AggregatedData,
    CookeAssessment,
    CookeWeights,
    DelphiSession,
    ElicitationScheme,
    NormalizedExpertPath,
    aggregate,
    aggregate_sparse,
    calibration_score,
    cooke_weights,
    delphi_spread,
    delphi_step,
    estimate_noise,
    estimate_noise_sparse,
    make_levels,
    normalize_panel,
)
from .errors import (
    AlignmentError,
    ConditioningError,
    ConvergenceError,
    EvaluationError,
    InfeasibleError,
    InputError,
    InsufficientDataError,
    NumericalError,
    ParseError,
    RangeError,
    RecovrError,
    RejectionBudgetError,
    StateError,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    run_replication,
    run_single,
    summarize,
    sweep_experts,
    sweep_levels,
    sweep_noise,
)
from .experts import (
    ExpertPath,
    NoiseSpec,
    SurrogateModel,
    fit_surrogate,
    simulate_expert_path,
    simulate_panel,
)
from .fitting import FitOutcome, FitSettings, fit_elicited
from .gpr import (
    ConstrainedGpModel,
    ConstraintSet,
    HatBasis,
    PosteriorSummary,
    build_model,
    posterior_mode,
    predict,
    sample_posterior,
    uniform_basis,
)
from .kernels import KernelParams, fit_hyperparameters, log_marginal_likelihood
from .reference_curves import REFERENCE_CURVE_NAMES, reference_curve

__version__ = "0.1.0"

__all__ = [
    "AggregatedData",
    "AlignmentError",
    "ConditioningError",
    "ConstrainedGpModel",
    "ConstraintSet",
    "ConvergenceError",
    "CookeAssessment",
    "CookeWeights",
    "DelphiSession",
    "ElicitationScheme",
    "EvaluationError",
    "ExperimentConfig",
    "ExperimentReport",
    "ExpertPath",
    "FitOutcome",
    "FitSettings",
    "HatBasis",
    "InfeasibleError",
    "InputError",
    "InsufficientDataError",
    "KernelParams",
    "NoiseSpec",
    "NormalizedCurve",
    "NormalizedExpertPath",
    "NumericalError",
    "ParseError",
    "PosteriorSummary",
    "RangeError",
    "RecovrError",
    "RecoveryCurve",
    "REFERENCE_CURVE_NAMES",
    "RejectionBudgetError",
    "StateError",
    "SurrogateModel",
    "aggregate",
    "aggregate_sparse",
    "build_model",
    "calibration_score",
    "cooke_weights",
    "delphi_spread",
    "delphi_step",
    "estimate_noise",
    "estimate_noise_sparse",
    "fit_elicited",
    "fit_hyperparameters",
    "fit_surrogate",
    "load_empirical_curve",
    "log_marginal_likelihood",
    "make_levels",
    "normalize_panel",
    "normalize_times",
    "posterior_mode",
    "predict",
    "reference_curve",
    "run_replication",
    "run_single",
    "sample_posterior",
    "simulate_expert_path",
    "simulate_panel",
    "summarize",
    "sweep_experts",
    "sweep_levels",
    "sweep_noise",
    "truncate_at_level",
    "uniform_basis",
    "__version__",
]
