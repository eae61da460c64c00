#!/usr/bin/env python3
"""
Experiment Settings Manager
Defaults, per-key validation and JSON load/save/export for lab runs
"""

import os
import sys
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

sys.path.insert(0, str(Path(__file__).parent / "src"))

from evolution import DATUM_PRESETS
from operators import MIN_NODES

# Set up logging
logger = logging.getLogger(__name__)

SETTINGS_VERSION = "1.0"

CHECKERS = (
    "time_monotonicity",
    "green_dissipation",
    "pointwise_estimates",
    "absolute_bound",
    "upper_boundary",
    "universal_lower",
    "matching_lower",
    "counterexample_upper",
    "small_data_supersolution",
    "backward_weighted_mass",
    "kato",
    "global_harnack",
    "local_harnack",
    "asymptotics",
    "weighted_mass_decay",
    "weighted_lp_lower",
)

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_integer(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


class ExperimentSettings:
    """Settings for one experiment run, validated key by key"""

    def __init__(self, settings_file: Optional[Union[str, Path]] = None):
        self.settings_file = Path(settings_file) if settings_file else None
        self.errors: List[str] = []

        self.default_settings = {
            "operator": "SFL",
            "s": 0.5,
            "m": 2.0,
            "n": 512,
            "fast_n": 256,
            "datum": "bump",
            "datum_params": {"c": 1.0, "p": 1.0},
            "dt0": 1e-3,
            "growth": 1.05,
            "t_end": 10.0,
            "t_end_tstar": None,
            "probe_times": [],
            "delta": 0.0,
            "newton_tol": 1e-10,
            "newton_max": 50,
            "profile_tol": 1e-10,
            "kappa_star": 1.0,
            "checkers": "all",
            "seed": 0,
            "bound_cap": 50.0,
            "trend_tol": 0.15,
            "harnack_ball": [0.0, 0.25],
            "log_level": "INFO",
        }

        self.settings = self.load_settings()

    def _validate_setting_value(self, key: str, value: Any) -> tuple[bool, str]:
        """Validate one setting value for type and range"""

        if key not in self.default_settings:
            return False, f"Unknown setting '{key}'"

        if key == 'operator':
            if not isinstance(value, str) or value.upper() not in ('RFL', 'SFL', 'CFL'):
                return False, "operator must be one of RFL, SFL, CFL"

        elif key == 's':
            if not _is_number(value) or not 0 < value <= 1:
                return False, "s must be a number in (0, 1]"

        elif key == 'm':
            if not _is_number(value) or not value > 1:
                return False, "m must be a number > 1"

        elif key in ('n', 'fast_n'):
            if not _is_integer(value) or value < MIN_NODES:
                return False, f"{key} must be an integer >= {MIN_NODES}"

        elif key == 'datum':
            if value not in DATUM_PRESETS:
                return False, f"datum must be one of {', '.join(DATUM_PRESETS)}"

        elif key == 'datum_params':
            if not isinstance(value, dict) or not all(_is_number(v) for v in value.values()):
                return False, "datum_params must map names to numbers"

        elif key in ('dt0', 'newton_tol', 'profile_tol', 'kappa_star', 'trend_tol', 't_end'):
            if not _is_number(value) or not value > 0:
                return False, f"{key} must be a positive number"

        elif key == 't_end_tstar':
            if value is not None and (not _is_number(value) or not value > 0):
                return False, "t_end_tstar must be null or a positive number"

        elif key == 'growth':
            if not _is_number(value) or value < 1:
                return False, "growth must be a number >= 1"

        elif key == 'delta':
            if not _is_number(value) or value < 0:
                return False, "delta must be a number >= 0"

        elif key == 'newton_max':
            if not _is_integer(value) or value < 1:
                return False, "newton_max must be an integer >= 1"

        elif key == 'seed':
            if not _is_integer(value) or value < 0:
                return False, "seed must be a nonnegative integer"

        elif key == 'bound_cap':
            if not _is_number(value) or not value > 1:
                return False, "bound_cap must be a number > 1"

        elif key == 'probe_times':
            if not isinstance(value, list) or not all(_is_number(t) for t in value):
                return False, "probe_times must be a list of numbers"

        elif key == 'checkers':
            if value == "all":
                return True, "Valid"
            if not isinstance(value, list) or not all(isinstance(c, str) for c in value):
                return False, "checkers must be \"all\" or a list of checker names"
            unknown = [c for c in value if c not in CHECKERS]
            if unknown:
                return False, f"Unknown checkers: {', '.join(unknown)}"

        elif key == 'harnack_ball':
            if not isinstance(value, list) or len(value) != 2 or not all(_is_number(v) for v in value):
                return False, "harnack_ball must be [center, radius]"
            if value[1] <= 0:
                return False, "harnack_ball radius must be positive"

        elif key == 'log_level':
            if value not in LOG_LEVELS:
                return False, "Invalid log level"

        return True, "Valid"

    def load_settings(self) -> Dict[str, Any]:
        """Load settings: defaults updated by the JSON file, every key validated"""
        settings = self.default_settings.copy()
        if self.settings_file is None:
            return settings

        try:
            if not self.settings_file.exists():
                self.errors.append(f"Config file {self.settings_file} does not exist")
                return settings
            with open(self.settings_file, 'r', encoding='utf-8') as f:
                loaded = json.load(f)
            # exported configs carry the settings inside a wrapper
            if isinstance(loaded, dict) and isinstance(loaded.get('settings'), dict):
                loaded = loaded['settings']
            if not isinstance(loaded, dict):
                self.errors.append(f"Config file {self.settings_file} must hold a JSON object")
                return settings
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error loading settings: {e}")
            self.errors.append(f"Cannot read config file {self.settings_file}: {e}")
            return settings

        for key, value in loaded.items():
            is_valid, error_msg = self._validate_setting_value(key, value)
            if is_valid:
                settings[key] = value
            else:
                logger.warning(f"Invalid setting {key}={value!r}: {error_msg}")
                self.errors.append(error_msg)

        logger.info(f"Settings loaded from {self.settings_file}")
        return settings

    def validate_applicability(self) -> List[str]:
        """Cross-key rules; returns the violated ones (empty when the config is usable)"""
        problems = []
        kind = str(self.get('operator', 'SFL')).upper()
        s = self.get('s')

        if kind == 'CFL' and not 0.5 < s < 1:
            problems.append("CFL defined for 1/2 < s < 1")
        elif kind == 'RFL' and not 0 < s < 1:
            problems.append("RFL defined for 0 < s < 1")

        params = self.get('datum_params', {})
        if params.get('c', 1.0) < 0:
            problems.append("datum amplitude c must be >= 0")
        if self.get('datum') == 'c_phi1_pow' and 'p' not in params:
            problems.append("datum c_phi1_pow needs parameter p")

        probes = self.get('probe_times', [])
        if any(t <= 0 for t in probes):
            problems.append("probe times must be positive")
        if self.get('t_end_tstar') is None and any(t > self.get('t_end') for t in probes):
            problems.append("probe times must not exceed t_end")

        center, radius = self.get('harnack_ball')
        if abs(center) + 2.0 * radius >= 1.0:
            problems.append("harnack_ball with doubled radius must lie inside (-1, 1)")

        return problems

    def save_settings(self) -> bool:
        """Save settings as JSON"""
        if self.settings_file is None:
            logger.error("No settings file configured")
            return False
        try:
            for key, value in self.settings.items():
                is_valid, error_msg = self._validate_setting_value(key, value)
                if not is_valid:
                    logger.error(f"Cannot save invalid setting {key}={value!r}: {error_msg}")
                    return False

            self.settings_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self.settings_file, 'w', encoding='utf-8') as f:
                json.dump(self.settings, f, indent=2, ensure_ascii=False)

            logger.info(f"Settings saved to {self.settings_file}")
            return True

        except Exception as e:
            logger.error(f"Error saving settings: {e}")
            return False

    def get(self, key: str, default: Any = None) -> Any:
        """Get setting value"""
        return self.settings.get(key, default)

    def set(self, key: str, value: Any) -> bool:
        """Set setting value with validation"""
        is_valid, error_msg = self._validate_setting_value(key, value)
        if not is_valid:
            logger.error(f"Invalid setting value: {error_msg}")
            return False

        self.settings[key] = value
        return True

    def export_settings(self, export_path: Union[str, Path], timestamp: bool = False) -> bool:
        """
        Export the resolved settings inside a version wrapper.

        The wrapper loads back through load_settings. Timestamps are off by
        default so repeated runs write byte-identical files.
        """
        try:
            export_wrapper = {'version': SETTINGS_VERSION}
            if timestamp:
                export_wrapper['export_timestamp'] = datetime.now().isoformat()
            export_wrapper['settings'] = self.settings.copy()

            os.makedirs(os.path.dirname(os.path.abspath(export_path)), exist_ok=True)
            with open(export_path, 'w', encoding='utf-8') as f:
                json.dump(export_wrapper, f, indent=2, ensure_ascii=False)

            logger.info(f"Settings exported: {export_path}")
            return True

        except Exception as e:
            logger.error(f"Error exporting settings: {e}")
            return False
