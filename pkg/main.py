#!/usr/bin/env python3
"""
fpme - Fractional Porous-Medium Lab - Main Entry Point

A numerical laboratory for u_t + L u^m = 0 on (-1, 1) with the restricted,
spectral and censored fractional Laplacians. Builds the operators, solves
the stationary profile, evolves nonnegative data and checks the sharp
boundary and decay estimates on the results.

Author: fpme-lab developers
License: MIT
"""

import sys
import logging
from pathlib import Path
from typing import Optional, Sequence

# Add src directory to path for imports
sys.path.insert(0, str(Path(__file__).parent / "src"))

from cli import parse_args, run_command
from settings_manager import ExperimentSettings
from utils import setup_logging


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main application entry point."""
    args = parse_args(argv)
    if args is None:
        return 1

    settings = ExperimentSettings(args.config)
    level_name = args.log_level or settings.get("log_level", "INFO")
    log_file = None if args.no_log_file else Path(__file__).parent / "logs" / "fpme.log"
    setup_logging(log_file, getattr(logging, level_name))

    logger = logging.getLogger(__name__)
    logger.info(f"Starting fpme {args.command}")

    try:
        return run_command(args, settings)
    except Exception as e:
        logger.error(f"Application error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
