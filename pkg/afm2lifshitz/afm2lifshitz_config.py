"""
afm2lifshitz.afm2lifshitz_config - Configuration management

Handles the JSON run configuration: defaults, command-line overrides with
change tracking, validation of values and referenced input files, and the
summary written to the run log.
"""

import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from .afm2lifshitz_utils import UnitUtils


class ConfigManager:
    """Manages the afm2lifshitz run configuration"""

    DEFAULT_CONFIG: Dict[str, Any] = {
        # Geometry
        "radius_um": 101.3,
        "radius_uncertainty_um": 0.15,
        "dz_nm": 0.8,
        "delta1": 0.005,
        # Statistics
        "beta": 0.95,
        "outlier_beta": 0.9,
        "smoothing_window": 30,
        "smoothing_weights": "uniform",
        "total_error_policy": "conservative",
        "paper_compat": False,
        "systematic_errors_pN": [0.82, 0.55, 0.31, 0.12],
        "k_coefficients": {},
        "normality_method": "shapiro",
        # Grids
        "grid": {"zmin_nm": 62.33, "zmax_nm": 349.97},
        "grid_pitch_nm": 0.17,
        "allow_wide_grid": False,
        "xi_grid": {"min": 1e11, "max": 1e18, "n": 141},
        # Roughness
        "renormalize_histograms": False,
        "sphere_histogram": "au",
        "plate_histogram": "si",
        # Materials and comparison variants
        "materials": {
            "gold": "gold",
            "doped_si": "doped_si",
            "dielectric_si": "dielectric_si",
        },
        "sphere": "gold",
        "plate": "doped_si",
        "variants": [
            {"name": "conductive_si", "sphere": "gold", "plate": "doped_si", "experimental": True},
            {"name": "dielectric_si", "sphere": "gold", "plate": "dielectric_si", "experimental": False},
        ],
        "theory_points": 40,
        "comparison_window_nm": [60.0, 100.0],
        # Inputs
        "campaign": [],
        "sweep": None,
        "contacts": None,
        "piezo": None,
        "separation_model": {},
        # Runtime
        "workers": 1,
        "cache_dir": None,
        "metadata": False,
        "error_bar_step": 10,
        # Logging
        "log_file": None,
        "logrotate": True,
        "log_max_bytes": 5 * 1024 * 1024,
        "log_backups": 5,
    }

    # Valid settings and their types
    VALID_SETTINGS = {
        "radius_um": float,
        "radius_uncertainty_um": float,
        "dz_nm": float,
        "delta1": float,
        "beta": float,
        "outlier_beta": float,
        "smoothing_window": int,
        "smoothing_weights": str,
        "total_error_policy": str,
        "paper_compat": bool,
        "systematic_errors_pN": list,
        "k_coefficients": dict,
        "normality_method": str,
        "grid": dict,
        "grid_pitch_nm": float,
        "allow_wide_grid": bool,
        "xi_grid": dict,
        "renormalize_histograms": bool,
        "sphere_histogram": str,
        "plate_histogram": str,
        "materials": dict,
        "sphere": str,
        "plate": str,
        "variants": list,
        "theory_points": int,
        "comparison_window_nm": list,
        "campaign": (list, str),
        "sweep": (str, type(None)),
        "contacts": (str, type(None)),
        "piezo": (str, type(None)),
        "separation_model": dict,
        "workers": (int, type(None)),
        "cache_dir": (str, type(None)),
        "metadata": bool,
        "error_bar_step": int,
        "log_file": (str, type(None)),
        "logrotate": bool,
        "log_max_bytes": int,
        "log_backups": int,
    }

    # Settings order for summary and written configs
    SETTINGS_ORDER = list(DEFAULT_CONFIG.keys())

    CHOICES = {
        "smoothing_weights": ("uniform", "inverse"),
        "total_error_policy": ("standard", "conservative"),
        "normality_method": ("shapiro", "pearson"),
    }

    PATH_SETTINGS = ("sweep", "contacts", "piezo")

    def __init__(self, config_file: Optional[Path] = None):
        self.config_file = Path(config_file) if config_file else None
        self.base_dir = self.config_file.parent if self.config_file else Path.cwd()
        self.settings: Dict[str, Any] = {}
        self.config_changes: Dict[str, str] = {}
        self._file_settings: Dict[str, Any] = {}

    def load_config(self, **overrides) -> Dict[str, Any]:
        """Load configuration file, apply command-line overrides and validate

        Args:
            **overrides: Setting values from the command line; None means not given

        Returns:
            Effective settings
        """
        self._file_settings = self._parse_config_file() if self.config_file else {}
        self.settings = copy.deepcopy(self._file_settings)
        self._set_defaults()

        self.config_changes = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in self.VALID_SETTINGS:
                raise ValueError(f"Unknown override setting: {key}")
            original = self.settings.get(key)
            if original != value:
                self.config_changes[key] = f"{self._display(original)} → {self._display(value)}"
            self.settings[key] = value

        self._validate_config()
        return self.settings

    def _parse_config_file(self) -> Dict[str, Any]:
        """Parse the JSON configuration file"""
        if not self.config_file.exists():
            logging.error("Configuration file not found: %s", self.config_file)
            raise ValueError(f"Configuration file not found: {self.config_file}")
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            logging.error("Configuration file %s is not valid JSON: %s", self.config_file, str(e))
            raise ValueError(f"{self.config_file}:{e.lineno}: invalid JSON: {e.msg}")
        if not isinstance(data, dict):
            raise ValueError(f"{self.config_file}: top level must be a JSON object")
        logging.debug("Configuration parsed: %d settings from %s", len(data), self.config_file)
        return data

    def _set_defaults(self):
        """Fill in defaults for settings missing from the file"""
        added = []
        for key, default_value in self.DEFAULT_CONFIG.items():
            if key not in self.settings:
                self.settings[key] = copy.deepcopy(default_value)
                added.append(key)
        if added and self.config_file:
            logging.debug("Using defaults for: %s", ", ".join(added))

    def _validate_config(self):
        """Validate setting names, types, ranges and referenced files"""
        unknown = sorted(set(self.settings) - set(self.VALID_SETTINGS))
        if unknown:
            logging.error("Unknown configuration settings: %s", ", ".join(unknown))
            raise ValueError(f"Unknown configuration settings: {', '.join(unknown)}")

        for key, expected in self.VALID_SETTINGS.items():
            value = self.settings[key]
            if expected is float and isinstance(value, int) and not isinstance(value, bool):
                self.settings[key] = value = float(value)
            if isinstance(value, bool) and expected in (int, float):
                self._fail(key, value, "a number")
            if not isinstance(value, expected):
                names = expected.__name__ if isinstance(expected, type) else "/".join(t.__name__ for t in expected)
                self._fail(key, value, names)

        for key, choices in self.CHOICES.items():
            if self.settings[key] not in choices:
                self._fail(key, self.settings[key], " or ".join(choices))

        for key in ("radius_um", "grid_pitch_nm"):
            if not self.settings[key] > 0:
                self._fail(key, self.settings[key], "> 0")
        for key in ("radius_uncertainty_um", "dz_nm", "delta1"):
            if self.settings[key] < 0:
                self._fail(key, self.settings[key], ">= 0")
        for key in ("beta", "outlier_beta"):
            if not 0 < self.settings[key] < 1:
                self._fail(key, self.settings[key], "in (0, 1)")
        if self.settings["smoothing_window"] < 2 or self.settings["smoothing_window"] % 2:
            self._fail("smoothing_window", self.settings["smoothing_window"], "an even number >= 2")
        if self.settings["theory_points"] < 4:
            self._fail("theory_points", self.settings["theory_points"], ">= 4")
        if self.settings["error_bar_step"] < 1:
            self._fail("error_bar_step", self.settings["error_bar_step"], ">= 1")
        xi_grid = self.settings["xi_grid"]
        try:
            if not (0 < float(xi_grid["min"]) < float(xi_grid["max"])) or int(xi_grid["n"]) < 2:
                raise ValueError
        except (KeyError, TypeError, ValueError):
            self._fail("xi_grid", xi_grid, "an object with 0 < min < max and n >= 2")
        if self.settings["workers"] is not None and self.settings["workers"] < 0:
            self._fail("workers", self.settings["workers"], ">= 0 or null")
        if any(not isinstance(v, (int, float)) or v < 0 for v in self.settings["systematic_errors_pN"]):
            self._fail("systematic_errors_pN", self.settings["systematic_errors_pN"], "a list of numbers >= 0")

        self._validate_grid()
        self._validate_materials()
        self._validate_paths()

    def _validate_grid(self):
        grid = self.settings["grid"]
        try:
            zmin, zmax = float(grid["zmin_nm"]), float(grid["zmax_nm"])
            n = None if grid.get("n") is None else int(grid["n"])
        except (AttributeError, KeyError, TypeError, ValueError):
            self._fail("grid", grid, "an object with zmin_nm, zmax_nm and an optional n")
        if not (0 < zmin < zmax) or (n is not None and n < 1):
            self._fail("grid", grid, "0 < zmin_nm < zmax_nm and n >= 1")
        if (zmin < 50 or zmax > 400) and not self.settings["allow_wide_grid"]:
            logging.warning("Grid [%g, %g] nm extends beyond [50, 400] nm (set allow_wide_grid to silence)", zmin, zmax)

        window = self.settings["comparison_window_nm"]
        if len(window) != 2 or not window[0] < window[1]:
            self._fail("comparison_window_nm", window, "[low, high] with low < high")

    def _validate_materials(self):
        materials = self.settings["materials"]
        for key in ("sphere", "plate"):
            if self.settings[key] not in materials:
                self._fail(key, self.settings[key], f"one of the materials ({', '.join(sorted(materials))})")
        for variant in self.settings["variants"]:
            if not isinstance(variant, dict) or not {"name", "sphere", "plate"} <= set(variant):
                self._fail("variants", variant, "objects with name, sphere and plate")
            for key in ("sphere", "plate"):
                if variant[key] not in materials:
                    self._fail("variants", variant[key], f"one of the materials ({', '.join(sorted(materials))})")

    def _validate_paths(self):
        missing: List[str] = []
        campaign = self.settings["campaign"]
        paths = [campaign] if isinstance(campaign, str) else list(campaign)
        paths += [self.settings[key] for key in self.PATH_SETTINGS if self.settings[key]]
        for key in ("sphere_histogram", "plate_histogram"):
            if self.settings[key] not in ("au", "si"):
                paths.append(self.settings[key])
        for entry in paths:
            if not self.resolve(entry).exists():
                missing.append(str(entry))
        if missing:
            logging.error("Referenced input files not found: %s", ", ".join(missing))
            raise ValueError(f"Referenced input files not found: {', '.join(missing)}")

    def _fail(self, key: str, value: Any, expected: str):
        logging.error("Invalid configuration value %s=%s (expected %s)", key, self._display(value), expected)
        raise ValueError(f"Invalid configuration value {key}={self._display(value)}: expected {expected}")

    @staticmethod
    def _display(value: Any) -> str:
        if value is None:
            return "(none)"
        if isinstance(value, (dict, list)):
            return json.dumps(value, sort_keys=True)
        return str(value)

    def resolve(self, path: str) -> Path:
        """Path relative to the configuration file directory"""
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def campaign_paths(self) -> List[Path]:
        campaign = self.settings["campaign"]
        entries = [campaign] if isinstance(campaign, str) else campaign
        return [self.resolve(p) for p in entries]

    def get_grid(self) -> Dict[str, Any]:
        """Grid bounds in nm with either a point count n or the pitch_nm of a generated grid"""
        grid = self.settings["grid"]
        result = {"zmin_nm": float(grid["zmin_nm"]), "zmax_nm": float(grid["zmax_nm"])}
        if grid.get("n") is None:
            result["pitch_nm"] = float(self.settings["grid_pitch_nm"])
        else:
            result["n"] = int(grid["n"])
        return result

    def set_grid(self, text: str):
        """Apply a 'zmin,zmax[,n]' command-line grid"""
        zmin, zmax, n = UnitUtils.parse_grid(text)
        new = {"zmin_nm": zmin, "zmax_nm": zmax}
        if n is not None:
            new["n"] = n
        if new != self.settings["grid"]:
            self.config_changes["grid"] = f"{self._display(self.settings['grid'])} → {self._display(new)}"
        self.settings["grid"] = new
        self._validate_grid()

    def get_k_coefficients(self) -> Dict:
        """k_β^(J) overrides keyed by (J, β) from '{"J,beta": k}' entries"""
        table = {}
        for key, value in self.settings["k_coefficients"].items():
            try:
                j, beta = key.split(",")
                table[(int(j), round(float(beta), 6))] = float(value)
            except ValueError:
                self._fail("k_coefficients", key, "keys of the form 'J,beta'")
        return table

    def get_logging_rotation_config(self) -> Dict[str, Any]:
        return {
            "enabled": bool(self.settings.get("logrotate", True)),
            "max_bytes": int(self.settings.get("log_max_bytes", 5 * 1024 * 1024)),
            "backup_count": int(self.settings.get("log_backups", 5)),
        }

    def write_config(self, path: Path):
        """Write the effective settings in SETTINGS_ORDER"""
        ordered = {key: self.settings[key] for key in self.SETTINGS_ORDER}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(ordered, f, indent=2)
            f.write("\n")
        logging.info("Configuration written to: %s", path)

    def log_config_summary(self):
        """Log every effective setting, marking command-line changes"""
        logging.info("Configuration values processed:")
        for key in self.SETTINGS_ORDER:
            if key in self.config_changes:
                logging.info("  %s: %s", key, self.config_changes[key])
            else:
                logging.info("  %s: %s", key, self._display(self.settings[key]))
