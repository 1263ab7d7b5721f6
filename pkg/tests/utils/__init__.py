"""
Test utilities package for the Dynamic Prior toolkit.

This package contains reusable testing components:
- Independent numerical oracles (bisection quantile, exact-arithmetic coefficients,
  bisection prior mean)
- Stub random streams with scripted draws
- Synthetic validation rows and the slow-test switch
"""

import os

from .oracles import (
    erf_normal_cdf, bisection_quantile, extended_precision_coefficients, bisection_prior_mean
)
from .stubs import StubRngStream, make_row

# Full-scale acceptance runs; enabled by `run_tests.py --slow` or BANDIT_RUN_SLOW=1
RUN_SLOW_TESTS = os.environ.get("BANDIT_RUN_SLOW") == "1"

__all__ = [
    # Oracles
    'erf_normal_cdf', 'bisection_quantile', 'extended_precision_coefficients', 'bisection_prior_mean',

    # Stubs and fixtures
    'StubRngStream', 'make_row',

    'RUN_SLOW_TESTS',
]
