#!/usr/bin/env python3
"""
NRPS Simulation Lab Launcher

Runs the command line surface from a source checkout:

    python run_simulation.py run --scenario scenarios/default_n25.json --D 2000 --reps 20
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from src.core.cli import run_cli  # noqa: E402

if __name__ == "__main__":
    run_cli()
