#!/usr/bin/env python3
"""Command-line launcher for the free boundary minimal surface workbench; run from the repository root."""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
