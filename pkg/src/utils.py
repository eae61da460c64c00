#!/usr/bin/env python3
"""
Utility Functions for the fractional porous-medium lab

This module contains the logging setup, the exception hierarchy shared by
all numerical modules, and small JSON/CSV helpers used for run provenance.

Author: fpme-lab developers
License: MIT
"""

import csv
import json
import sys
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np


def setup_logging(log_file: Optional[Path] = None, level: int = logging.INFO):
    """
    Setup logging configuration for the application.

    Args:
        log_file: Path to log file. If None, logs only to console.
        level: Logging level (default: INFO).
    """
    # Create formatter
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    # Setup root logger
    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    # Clear existing handlers
    root_logger.handlers.clear()

    # Console handler
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    # File handler (if log file specified)
    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

    logging.info(f"Logging initialized. Level: {logging.getLevelName(level)}")


class LabError(Exception):
    """Base class for every error raised by the lab."""

    exit_code = 2


class ConfigError(LabError):
    """Invalid configuration or input (exit code 1)."""

    exit_code = 1


class DomainError(ConfigError):
    """Parameter outside the domain where an object is defined."""


class TrajectoryFormatError(ConfigError):
    """A persisted trajectory could not be parsed."""


class NumericalError(LabError):
    """A solver failed to converge or a factorization broke down (exit code 2)."""

    exit_code = 2


class StructuralError(NumericalError):
    """A matrix violates the sign structure a checker relies on."""


class FitError(NumericalError):
    """Boundary-exponent regression could not be carried out."""


class StepError(NumericalError):
    """Implicit time step failed after all dt halvings."""


class PreconditionError(LabError):
    """Checker hypotheses are not met by the supplied data (exit code 3)."""

    exit_code = 3


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy scalars/arrays and nested containers to JSON-safe types.

    Non-finite floats are written as strings so the files stay strict JSON.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isfinite(value):
            return value
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


def write_json(path: Path, data: Any):
    """
    Write data as indented JSON, creating parent directories.

    Args:
        path: Output file.
        data: Any structure accepted by to_jsonable.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(data), f, indent=2, ensure_ascii=False)
        f.write("\n")
    logging.getLogger(__name__).info(f"Wrote {path}")


def read_json(path: Path) -> Any:
    """Read a JSON file, mapping parse failures to TrajectoryFormatError."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise TrajectoryFormatError(f"Cannot read {path}: {e}") from e


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    """
    Write rows to a CSV file with a header line.

    Floats are written with repr precision so repeated runs are byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
    logging.getLogger(__name__).info(f"Wrote {path}")


def _format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)
