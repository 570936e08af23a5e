"""
afm2lifshitz.afm2lifshitz_utils - Units, errors and grid cache management

Provides physical constants, report formatting, the exception hierarchy shared by
all modules and the on-disk cache for permittivity grids.
"""

import gzip
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import constants as sc

# Fixed constants used by the force calculations
HBAR = 1.054571817e-34  # J s
C_LIGHT = 2.99792458e8  # m/s
EPS0 = sc.epsilon_0
E_CHARGE = sc.e
M_ELECTRON = sc.m_e

# Conversion used for optical tables (rad/s per eV)
EV_TO_RAD_S = 1.519e15

NM = 1e-9
UM = 1e-6
PN = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of an operation"""


class ValidationError(ValueError):
    """Invalid input data, optionally located in a file"""

    def __init__(self, message: str, path: Optional[Path] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class UnsupportedCoefficientError(ValueError):
    """Coefficient table has no entry for the requested key"""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance"""

    def __init__(self, message: str, estimate: float = float("nan"), error_bound: float = float("nan")):
        self.estimate = estimate
        self.error_bound = error_bound
        super().__init__(f"{message} (estimate={estimate:.6g}, error bound={error_bound:.3g})")


class UncoveredTailError(QuadratureError):
    """Low-frequency tail of an optical table is not covered by an extrapolation"""


class SeriesConvergenceError(RuntimeError):
    """Series did not converge within the allowed number of terms"""

    def __init__(self, message: str, tail_estimate: float):
        self.tail_estimate = tail_estimate
        super().__init__(f"{message} (tail estimate={tail_estimate:.3g})")


class FitError(RuntimeError):
    """Least-squares fit is degenerate or not identifiable"""


class UnitUtils:
    """Report number formatting and grid parsing"""

    @staticmethod
    def format_sig(value: float, digits: int = 4) -> str:
        """Format a value with a fixed number of significant digits"""
        if value == 0 or not np.isfinite(value):
            return f"{value:g}"
        return f"{value:.{digits}g}"

    @staticmethod
    def parse_grid(text: str) -> Tuple[float, float, Optional[int]]:
        """Parse a 'zmin,zmax[,n]' grid string in nm; n is None when omitted"""
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) not in (2, 3):
            raise ValueError(f"Grid must be 'zmin,zmax' or 'zmin,zmax,n', got: {text}")
        try:
            zmin, zmax = float(parts[0]), float(parts[1])
            n = int(parts[2]) if len(parts) == 3 else None
        except ValueError:
            raise ValueError(f"Grid must be 'zmin,zmax' or 'zmin,zmax,n', got: {text}")
        if not (0 < zmin < zmax) or (n is not None and n < 1):
            raise ValueError(f"Grid needs 0 < zmin < zmax and n >= 1, got: {text}")
        return zmin, zmax, n


def fingerprint(payload: Dict[str, Any]) -> str:
    """Stable hash of a JSON-serializable description"""
    text = json.dumps(payload, sort_keys=True, default=_json_default)
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


def _json_default(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value.ravel()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Not serializable: {type(value).__name__}")


class CacheManager:
    """Stores permittivity grids as compressed JSON keyed by model fingerprint"""

    def __init__(self, cache_dir: Path):
        self.cache_dir = Path(cache_dir)
        try:
            self.cache_dir.mkdir(parents=True, exist_ok=True, mode=0o755)
        except Exception:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _grid_file(self, key: str) -> Path:
        return self.cache_dir / f"eps_{key}.json.gz"

    def save_grid(self, key: str, xi: np.ndarray, eps: np.ndarray) -> bool:
        """Save an ε(iξ) grid"""
        try:
            data = {"xi": [float(v) for v in xi], "eps": [float(v) for v in eps]}
            with gzip.open(self._grid_file(key), "wt", encoding="utf-8") as f:
                json.dump(data, f)
            logging.debug("Permittivity grid cached: %s", self._grid_file(key).name)
            return True
        except Exception as e:
            logging.warning("Error saving permittivity grid %s: %s", key, str(e))
            return False

    def load_grid(self, key: str) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Load an ε(iξ) grid, None when missing or unreadable"""
        grid_file = self._grid_file(key)
        if not grid_file.exists():
            self.misses += 1
            return None
        try:
            with gzip.open(grid_file, "rt", encoding="utf-8") as f:
                data = json.load(f)
            xi = np.asarray(data["xi"], dtype=float)
            eps = np.asarray(data["eps"], dtype=float)
            if xi.shape != eps.shape or xi.size < 2:
                raise ValueError("inconsistent grid arrays")
            self.hits += 1
            logging.debug("Permittivity grid loaded from cache: %s", grid_file.name)
            return xi, eps
        except Exception as e:
            logging.warning("Ignoring unreadable cache file %s: %s", grid_file.name, str(e))
            self.misses += 1
            return None
