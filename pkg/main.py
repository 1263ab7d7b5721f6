"""
Dynamic Prior toolkit - application entry point
Equivalent to the `dynamic-prior` console script

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import sys

from cli import main

if __name__ == "__main__":
    sys.exit(main())
