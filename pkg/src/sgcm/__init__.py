"""Spectral generalized covariance measure: a conditional independence test
for random objects in metric spaces.

The usual entry point is `run_test` with a `TestConfig`; the modules
`spaces`, `kernels`, `spectral`, `regression` and `statistic` expose the
individual steps, and `simulate` the Monte Carlo harness.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateDataError,
    DegenerateGramError,
    InputError,
    SGCMError,
)
from .kernels import KernelSpec  # noqa: E402
from .pipeline import TestConfig, TestResult, run_test, split_sample  # noqa: E402
from .regression import RegressorSpec  # noqa: E402
from .simulate import DgpSpec, generate, monte_carlo_study  # noqa: E402
from .spaces import METRICS, Metric, curve_metric, get_metric  # noqa: E402

__all__ = [
    "DegenerateDataError",
    "DegenerateGramError",
    "DgpSpec",
    "InputError",
    "KernelSpec",
    "METRICS",
    "Metric",
    "RegressorSpec",
    "SGCMError",
    "TestConfig",
    "TestResult",
    "curve_metric",
    "generate",
    "get_metric",
    "monte_carlo_study",
    "run_test",
    "split_sample",
]
