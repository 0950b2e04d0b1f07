"""Adaptive hybrid lack-of-fit checks for functional linear models.

A scalar response is regressed on a random curve through a penalized
functional linear fit; the package then asks whether the linear model
is adequate.  A screening stage estimates how much structure the
residuals still carry and routes the test statistic through either a
weighted residual mean (nothing detected: sharpest against drifts) or
a paired kernel statistic (structure detected: omnibus), both read
against the same chi-square calibration.

The :mod:`flmcheck.harness` subpackage adds Monte-Carlo study drivers,
CSV ingestion, figure emission, and the ``flmcheck`` command line.
"""

from .core import Grid, GridFunction, inner_product, l2_norm, make_uniform_grid
from .hypotest import (
    DegenerateVarianceError,
    TestConfig,
    TestReport,
    chi2_upper_tail,
    hybrid_test,
    standardizing_factor,
    v0,
    v1,
)
from .procsim import (
    SCENARIOS,
    CalibrationError,
    Dataset,
    DatasetTruth,
    ProcessKind,
    ScenarioSpec,
    calibrate_noise,
    component_study_dataset,
    deviation,
    deviation_values,
    generate_dataset,
    sample_paths,
    sample_process,
    scenario,
    scenario_beta,
)
from .rkhs import (
    EigenSystem,
    NumericError,
    SlopeEstimate,
    build_eigensystem,
    covariance_estimate,
    default_lambda,
    estimate_slope,
    gcv_select_lambda,
    sobolev_kernel,
)
from .sdrdim import (
    IndicativeOperator,
    RidgePair,
    estimate_dimension,
    indicative_operator,
    null_reference_ridge,
    operator_spectrum,
)
from .smoother import SmoothCurve, smooth_curve, smooth_paths

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # core
    "Grid",
    "GridFunction",
    "make_uniform_grid",
    "inner_product",
    "l2_norm",
    # smoothing
    "SmoothCurve",
    "smooth_curve",
    "smooth_paths",
    # processes and scenarios
    "ProcessKind",
    "ScenarioSpec",
    "SCENARIOS",
    "scenario",
    "scenario_beta",
    "sample_paths",
    "sample_process",
    "deviation",
    "deviation_values",
    "calibrate_noise",
    "generate_dataset",
    "component_study_dataset",
    "Dataset",
    "DatasetTruth",
    "CalibrationError",
    # penalized fit
    "EigenSystem",
    "SlopeEstimate",
    "NumericError",
    "sobolev_kernel",
    "covariance_estimate",
    "build_eigensystem",
    "estimate_slope",
    "gcv_select_lambda",
    "default_lambda",
    # dimension screening
    "IndicativeOperator",
    "RidgePair",
    "indicative_operator",
    "operator_spectrum",
    "null_reference_ridge",
    "estimate_dimension",
    # the test
    "TestConfig",
    "TestReport",
    "DegenerateVarianceError",
    "hybrid_test",
    "v0",
    "v1",
    "chi2_upper_tail",
    "standardizing_factor",
]
