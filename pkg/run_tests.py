#!/usr/bin/env python3
"""
Test runner script for the Dynamic Prior toolkit

This script runs all available Python tests. Pass --slow to include the
full-scale acceptance runs (complete validation grid and simulation).

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import os
import unittest
import sys
import logging

# Configure logging for tests
logging.basicConfig(level=logging.WARNING)
logger = logging.getLogger(__name__)

if __name__ == "__main__":
    if "--slow" in sys.argv[1:]:
        os.environ["BANDIT_RUN_SLOW"] = "1"
        logger.warning("Including slow acceptance tests")

    # Discover and run all tests
    test_suite = unittest.defaultTestLoader.discover("tests", pattern="test_*.py")

    # Run the tests
    test_runner = unittest.TextTestRunner(verbosity=2)
    result = test_runner.run(test_suite)

    # Exit with non-zero code if tests failed
    sys.exit(not result.wasSuccessful())
