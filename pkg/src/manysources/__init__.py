"""Overflow asymptotics for many statistically identical traffic sources.

The package simulates a single queue fed by N i.i.d. marked point-process
sources with buffer threshold N^alpha·B and service headroom N^beta·C,
classifies the (alpha, beta) scaling regime, evaluates the regime's rate
functional and variational decay prediction, and estimates the overflow
probability by naive or exponentially tilted Monte Carlo.
"""

from .errors import (
    ConfigurationError,
    InsufficientDataError,
    ManySourcesError,
    NumericInstabilityError,
    UnsupportedModelError,
)
from .estimate import (
    OverflowEstimate,
    RegressionFit,
    decay_regression,
    estimate_is,
    estimate_naive,
)
from .paths import Partition, PiecewiseLinearPath, StepPath, scaled_uniform_norm
from .queue_core import (
    RegimeCase,
    ScalingRegime,
    horizon_bound,
    loynes_queue,
    polygonal,
    queueing_map,
    scale_path,
)
from .ratefn import (
    AnalyticCgf,
    AssumptionCheck,
    CovarianceGrid,
    DiagnosticsReport,
    LightLoadReading,
    MonteCarloCgf,
    ProbeGrid,
    Verdict,
    assumption_diagnostics,
    covariance_grid,
    log_mgf_arrivals,
    omega_star,
    psi,
    rate_light_load,
    rate_original_ld_partition,
    rate_rkhs,
    rate_small_buffer_ld,
    rate_small_buffer_md,
)
from .traffic import (
    DeterministicMarks,
    DiscreteMarks,
    ExponentialMarks,
    InterArrivalLaw,
    MarkedPath,
    OnOffFamily,
    PoissonFamily,
    RenewalFamily,
    TrafficModel,
    UnitMarks,
    derive_seed,
    mark_mgf,
    sample_path,
    sample_total_work,
    superpose,
)
from .variational import (
    DecayPrediction,
    PredictionMethod,
    classify,
    decay_rate,
    line_search_decay,
    optimal_tilt,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "InsufficientDataError",
    "ManySourcesError",
    "NumericInstabilityError",
    "UnsupportedModelError",
    "OverflowEstimate",
    "RegressionFit",
    "decay_regression",
    "estimate_is",
    "estimate_naive",
    "Partition",
    "PiecewiseLinearPath",
    "StepPath",
    "scaled_uniform_norm",
    "RegimeCase",
    "ScalingRegime",
    "horizon_bound",
    "loynes_queue",
    "polygonal",
    "queueing_map",
    "scale_path",
    "AnalyticCgf",
    "AssumptionCheck",
    "CovarianceGrid",
    "DiagnosticsReport",
    "LightLoadReading",
    "MonteCarloCgf",
    "ProbeGrid",
    "Verdict",
    "assumption_diagnostics",
    "covariance_grid",
    "log_mgf_arrivals",
    "omega_star",
    "psi",
    "rate_light_load",
    "rate_original_ld_partition",
    "rate_rkhs",
    "rate_small_buffer_ld",
    "rate_small_buffer_md",
    "DeterministicMarks",
    "DiscreteMarks",
    "ExponentialMarks",
    "InterArrivalLaw",
    "MarkedPath",
    "OnOffFamily",
    "PoissonFamily",
    "RenewalFamily",
    "TrafficModel",
    "UnitMarks",
    "derive_seed",
    "mark_mgf",
    "sample_path",
    "sample_total_work",
    "superpose",
    "DecayPrediction",
    "PredictionMethod",
    "classify",
    "decay_rate",
    "line_search_decay",
    "optimal_tilt",
    "__version__",
]
