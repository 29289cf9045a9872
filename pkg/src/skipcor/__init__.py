"""Skipped correlations with projection-type outlier removal and FWE-controlling tests."""

__version__ = "0.1.0"

from .outliers import DetectionRule, OutlierMask, Projection, Rule, detect_outliers  # noqa: E402
from .skipped import EstimatorKind, skipped_association_with, skipped_correlation_matrix  # noqa: E402
from .inference import (  # noqa: E402
    BootstrapConfig,
    TestReport,
    test_ecp,
    test_h,
    test_h1,
    test_l,
    test_l3,
    test_ss_sp,
)

__all__ = [
    "__version__", "DetectionRule", "OutlierMask", "Projection", "Rule", "detect_outliers", "EstimatorKind",
    "skipped_association_with", "skipped_correlation_matrix", "BootstrapConfig", "TestReport", "test_ecp",
    "test_h", "test_h1", "test_l", "test_l3", "test_ss_sp",
]
