"""Weighted signed Wald tests for intersections of one-sided hypotheses.

The main entry points are :func:`signed_wald_test` for a single
intersection, :func:`closed_testing` for adjusted p-values of every
hypothesis, and :func:`landmark_estimates` for building an
:class:`EstimateSet` from trial data.
"""

from .bahadur import BahadurPoint, efficiency_ratio, slope_minp, slope_sw
from .cone import ConeSpec, dykstra_project, project_many, two_h_geometry
from .estimands import EstimateSet, ScenarioConfig, TrialArrays, TrialRecord, landmark_estimates, stack_covariance, theoretical_sigma
from .estimators import ClosedTesting, LandmarkEstimator, MinPTest, SignedWaldTest
from .exceptions import InputError, NumericalError, SignedWaldError
from .intersection import (
    HypothesisSpec,
    McConfig,
    TestResult,
    minp_test,
    signed_wald_general,
    signed_wald_test,
    signed_wald_two,
    sw_two_p_analytic,
)
from .multtest import ClosedTestReport, closed_testing, subset_weights

__version__ = "0.1.0"

__all__ = [
    "BahadurPoint",
    "ClosedTestReport",
    "ClosedTesting",
    "ConeSpec",
    "EstimateSet",
    "HypothesisSpec",
    "InputError",
    "LandmarkEstimator",
    "McConfig",
    "MinPTest",
    "NumericalError",
    "ScenarioConfig",
    "SignedWaldError",
    "SignedWaldTest",
    "TestResult",
    "TrialArrays",
    "TrialRecord",
    "closed_testing",
    "dykstra_project",
    "efficiency_ratio",
    "landmark_estimates",
    "minp_test",
    "project_many",
    "signed_wald_general",
    "signed_wald_test",
    "signed_wald_two",
    "slope_minp",
    "slope_sw",
    "stack_covariance",
    "subset_weights",
    "sw_two_p_analytic",
    "theoretical_sigma",
    "two_h_geometry",
]
