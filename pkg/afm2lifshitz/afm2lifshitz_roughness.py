"""
afm2lifshitz.afm2lifshitz_roughness - Surface roughness corrections

Turns measured topography histograms into zero roughness levels and
stochastic variances, and applies the additive (histogram double sum) and
multiplicative (second-order perturbative) roughness corrections to a
theoretical force curve.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from .afm2lifshitz_utils import NM, DomainError, ValidationError

# Fraction sums further than this from 1 are logged
SUM_TOLERANCE = 1e-4
# ... and further than this are rejected
SUM_REJECT = 1e-2

# Upper bound on the diffraction/correlation correction at the shortest separation.
# Reported next to the multiplicative ratio, never applied.
DIFFRACTION_BOUND = 1.0204

SEMISPACE_NOTE = "105 nm Au film treated as semispace (error below 0.0095%)"


class RoughnessError(DomainError):
    """Roughness shift leaves a non-positive separation"""

    def __init__(self, message: str, pair: Tuple[int, int]):
        self.pair = pair
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class TopographyHistogram:
    """Fractions of a surface covered by roughness of given height (heights in m)"""

    heights: np.ndarray
    fractions: np.ndarray
    name: str = ""

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        v = np.asarray(self.fractions, dtype=float)
        if h.ndim != 1 or h.shape != v.shape or h.size == 0:
            raise ValidationError(f"histogram {self.name}: heights and fractions must be 1-D of equal length")
        if np.any(h < 0) or np.any(np.diff(h) <= 0):
            raise ValidationError(f"histogram {self.name}: heights must be non-negative and strictly increasing")
        if np.any(v < 0) or np.any(~np.isfinite(v)):
            raise ValidationError(f"histogram {self.name}: fractions must be finite and >= 0")
        total = float(v.sum())
        if abs(total - 1.0) > SUM_REJECT:
            raise ValidationError(f"histogram {self.name}: fractions sum to {total:.6f}, not 1")
        if abs(total - 1.0) > SUM_TOLERANCE:
            logging.warning("Histogram %s: fractions sum to %.6f (tolerance %g)", self.name, total, SUM_TOLERANCE)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "fractions", v)

    @classmethod
    def from_nm(cls, h_nm, v, name: str = "", renormalize: bool = False) -> "TopographyHistogram":
        hist = cls(np.asarray(h_nm, dtype=float) * NM, v, name)
        return hist.renormalized() if renormalize else hist

    def __len__(self):
        return self.heights.size

    @property
    def fraction_sum(self) -> float:
        return float(self.fractions.sum())

    @property
    def max_height(self) -> float:
        return float(self.heights[-1])

    def renormalized(self) -> "TopographyHistogram":
        total = self.fraction_sum
        if abs(total - 1.0) > SUM_TOLERANCE:
            logging.warning("Histogram %s: renormalizing fractions (sum %.6f)", self.name, total)
        return TopographyHistogram(self.heights, self.fractions / total, self.name)


def zero_level(t: TopographyHistogram) -> float:
    """H₀ = Σ hₖvₖ"""
    return float(np.dot(t.heights, t.fractions))


def stochastic_variance(t: TopographyHistogram) -> float:
    """δ_st = [Σ (H₀ - hₖ)² vₖ]^(1/2)"""
    h0 = zero_level(t)
    return float(np.sqrt(np.dot((h0 - t.heights) ** 2, t.fractions)))


def _shift_matrix(t1: TopographyHistogram, t2: TopographyHistogram, z: float) -> np.ndarray:
    level = z + zero_level(t1) + zero_level(t2)
    shifted = level - t1.heights[:, None] - t2.heights[None, :]
    if np.any(shifted <= 0):
        k, l = np.unravel_index(int(np.argmin(shifted)), shifted.shape)
        message = (
            f"separation {z / NM:.4f} nm too small for roughness: bins ({k + 1}, {l + 1}) "
            f"with h={t1.heights[k] / NM:g} nm and {t2.heights[l] / NM:g} nm give "
            f"{shifted[k, l] / NM:.4f} nm"
        )
        logging.error("Roughness correction failed: %s", message)
        raise RoughnessError(message, (int(k) + 1, int(l) + 1))
    return shifted


def additive_corrected_force(base: Callable, t1: TopographyHistogram, t2: TopographyHistogram, z: float) -> float:
    """Σₖ Σₗ vₖ vₗ F(z + H₀⁽¹⁾ + H₀⁽²⁾ - hₖ - hₗ)

    Args:
        base: Vectorized force function of separation (N)
        t1, t2: Sphere and plate histograms
        z: Separation between zero roughness levels, m
    """
    if not z > 0:
        raise DomainError(f"separation must be > 0, got {z}")
    shifted = _shift_matrix(t1, t2, z)
    forces = np.asarray(base(shifted.ravel()), dtype=float).reshape(shifted.shape)
    weights = t1.fractions[:, None] * t2.fractions[None, :]
    return float(np.sum(weights * forces))


def multiplicative_corrected_force(base: Callable, d1: float, d2: float, z: float) -> float:
    """F(z)·{1 + 6[(δ₁/z)² + (δ₂/z)²]}"""
    if not z > 0:
        raise DomainError(f"separation must be > 0, got {z}")
    return float(base(z)) * multiplicative_ratio(d1, d2, z)


def multiplicative_ratio(d1: float, d2: float, z: float) -> float:
    return 1.0 + 6.0 * ((d1 / z) ** 2 + (d2 / z) ** 2)


def shifted_range(t1: TopographyHistogram, t2: TopographyHistogram, z_min: float, z_max: float) -> Tuple[float, float]:
    """Separations the additive correction samples for z in [z_min, z_max]"""
    level = zero_level(t1) + zero_level(t2)
    low = z_min + level - t1.heights.max() - t2.heights.max()
    high = z_max + level - t1.heights.min() - t2.heights.min()
    if not low > 0:
        _shift_matrix(t1, t2, z_min)
    return low, high


def correction_table(
    base: Callable, t1: TopographyHistogram, t2: TopographyHistogram, z_values
) -> List[Tuple[float, float, float]]:
    """(z, additive ratio, multiplicative ratio) rows"""
    d1 = stochastic_variance(t1)
    d2 = stochastic_variance(t2)
    rows = []
    for z in np.asarray(z_values, dtype=float):
        f0 = float(base(z))
        rows.append((float(z), additive_corrected_force(base, t1, t2, z) / f0, multiplicative_ratio(d1, d2, z)))
    return rows


def roughness_summary(t1: TopographyHistogram, t2: TopographyHistogram) -> Dict[str, Any]:
    """Zero levels and variances in nm plus the informational bounds"""
    return {
        "sphere": {
            "name": t1.name,
            "bins": len(t1),
            "fraction_sum": t1.fraction_sum,
            "zero_level_nm": zero_level(t1) / NM,
            "stochastic_variance_nm": stochastic_variance(t1) / NM,
        },
        "plate": {
            "name": t2.name,
            "bins": len(t2),
            "fraction_sum": t2.fraction_sum,
            "zero_level_nm": zero_level(t2) / NM,
            "stochastic_variance_nm": stochastic_variance(t2) / NM,
        },
        "diffraction_bound": DIFFRACTION_BOUND,
        "semispace_note": SEMISPACE_NOTE,
        "thermal_correction": "not computed",
    }
