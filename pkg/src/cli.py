#!/usr/bin/env python3
"""
Command-line entry point for RelGrad
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
