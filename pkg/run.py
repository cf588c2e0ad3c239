#!/usr/bin/env python3
"""
Launcher for the latent-geodesics command line
"""

import sys

from src.main import cli_dispatch

if __name__ == "__main__":
    sys.exit(cli_dispatch())
