"""
afm2lifshitz.afm2lifshitz_stats - Experimental errors and theory comparison

Outlier screening of repeated force-distance sets, variance of the mean
force and its smoothing, random/systematic/total experimental errors,
the theoretical error budget, confidence bands and band conformity.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps

from .afm2lifshitz_utils import NM, PN, DomainError, UnsupportedCoefficientError, ValidationError

DEFAULT_GRID_PITCH = 0.17 * NM

# k_β^(J) for combining J systematic errors at confidence β
K_COEFFICIENTS: Dict[Tuple[int, float], float] = {(2, 0.95): 1.10, (4, 0.95): 1.12}
# q_β for combining random and systematic errors
Q_COEFFICIENTS: Dict[float, float] = {0.95: 0.8}

RATIO_RANDOM_ONLY = 0.8
RATIO_SYSTEMATIC_ONLY = 8.0
RATIO_BAND = 0.05

NORMALITY_MIN_SAMPLES = 20


def _grubbs_critical(n: int, beta: float) -> float:
    t = sps.t.isf((1.0 - beta) / (4.0 * n), n - 2)
    return (n - 1) / math.sqrt(n) * math.sqrt(t * t / (n - 2 + t * t))


CRITICAL_OUTLIER_TABLE: Dict[Tuple[int, float], float] = {
    (n, beta): _grubbs_critical(n, beta) for n in range(20, 101) for beta in (0.9, 0.95)
}


@dataclass(frozen=True, eq=False)
class ForceCurveSet:
    """n measured force curves sharing one separation grid (SI units)"""

    z_grid: np.ndarray
    forces: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z_grid, dtype=float)
        f = np.atleast_2d(np.asarray(self.forces, dtype=float))
        if z.ndim != 1 or f.shape[1] != z.size:
            raise ValidationError(f"force sets of shape {f.shape} do not match a grid of {z.size} points")
        if z.size > 1 and np.any(np.diff(z) <= 0):
            raise ValidationError("separation grid must be strictly increasing")
        object.__setattr__(self, "z_grid", z)
        object.__setattr__(self, "forces", f)

    @property
    def n(self) -> int:
        return self.forces.shape[0]

    def __len__(self):
        return self.z_grid.size

    def window(self, z_min: float, z_max: float) -> "ForceCurveSet":
        mask = (self.z_grid >= z_min) & (self.z_grid <= z_max)
        return ForceCurveSet(self.z_grid[mask], self.forces[:, mask])


@dataclass(frozen=True, eq=False)
class OutlierScan:
    statistic: np.ndarray
    critical: float
    outliers: np.ndarray
    beta: float

    @property
    def any_outlier(self) -> bool:
        return bool(self.outliers.any())


@dataclass(frozen=True, eq=False)
class RandomError:
    absolute: np.ndarray
    relative: Optional[np.ndarray]
    t_quantile: float


@dataclass(frozen=True, eq=False)
class TheoryErrors:
    """Relative theoretical errors per separation"""

    delta0: np.ndarray
    delta2: np.ndarray
    delta3: np.ndarray
    total: np.ndarray


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    xi95: np.ndarray
    xi70: np.ndarray


@dataclass(frozen=True, eq=False)
class Conformity:
    inside95: np.ndarray
    inside70: np.ndarray

    @property
    def fraction95(self) -> float:
        return float(np.mean(self.inside95)) if self.inside95.size else 1.0

    @property
    def fraction70(self) -> float:
        return float(np.mean(self.inside70)) if self.inside70.size else 1.0


@dataclass(frozen=True)
class NormalityResult:
    statistic: float
    p_value: float
    normal: bool
    method: str
    reason: str = ""


@dataclass(frozen=True, eq=False)
class ErrorBudget:
    """Per-z experimental errors (N) and relative theoretical errors"""

    z: np.ndarray
    mean_force: np.ndarray
    s_mean: np.ndarray
    s_smoothed: np.ndarray
    random: np.ndarray
    systematic: float
    total: np.ndarray
    beta: float
    theory: Optional[TheoryErrors] = None

    def relative(self, errors: np.ndarray) -> np.ndarray:
        return np.asarray(errors) / np.abs(self.mean_force)

    def to_json(self) -> Dict[str, Any]:
        """Budget keyed by separation in nm, errors in pN and percent"""
        rows = {}
        for i, z in enumerate(self.z):
            row = {
                "mean_force_pN": self.mean_force[i] / PN,
                "random_pN": self.random[i] / PN,
                "systematic_pN": self.systematic / PN,
                "total_pN": self.total[i] / PN,
                "random_percent": 100 * self.random[i] / abs(self.mean_force[i]),
                "systematic_percent": 100 * self.systematic / abs(self.mean_force[i]),
                "total_percent": 100 * self.total[i] / abs(self.mean_force[i]),
            }
            if self.theory is not None:
                row.update(
                    {
                        "theory_delta0_percent": 100 * self.theory.delta0[i],
                        "theory_delta2_percent": 100 * self.theory.delta2[i],
                        "theory_delta3_percent": 100 * self.theory.delta3[i],
                        "theory_total_percent": 100 * self.theory.total[i],
                    }
                )
            rows[f"{z / NM:.2f}"] = row
        return {"beta": self.beta, "points": rows}


def make_grid(z_min: float, z_max: float, pitch: float = DEFAULT_GRID_PITCH) -> np.ndarray:
    """Equally spaced grid from z_min with the given pitch, not beyond z_max"""
    if not (0 < z_min < z_max) or not pitch > 0:
        raise DomainError(f"grid needs 0 < z_min < z_max and pitch > 0, got {z_min}, {z_max}, {pitch}")
    count = int(math.floor((z_max - z_min) / pitch * (1 + 1e-12))) + 1
    return z_min + pitch * np.arange(count)


def align_to_grid(
    raw_curves: Sequence[Tuple[Sequence[float], Sequence[float]]], grid: Sequence[float]
) -> ForceCurveSet:
    """Linear interpolation of each raw (z, F) curve onto a common grid

    Args:
        raw_curves: (z, F) arrays per measurement set, SI units
        grid: Target separations, m
    """
    z_grid = np.asarray(grid, dtype=float)
    if not raw_curves:
        raise ValidationError("no force curves to align")
    rows = []
    for index, (z_raw, f_raw) in enumerate(raw_curves):
        z = np.asarray(z_raw, dtype=float)
        f = np.asarray(f_raw, dtype=float)
        if z.shape != f.shape or z.size < 2:
            raise ValidationError(f"curve {index + 1}: z and F must be equal-length arrays with >= 2 points")
        order = np.argsort(z)
        z, f = z[order], f[order]
        tol = 1e-9 * max(abs(z[-1]), 1e-30)
        outside = (z_grid < z[0] - tol) | (z_grid > z[-1] + tol)
        if np.any(outside):
            bad = z_grid[np.flatnonzero(outside)[0]]
            message = (
                f"curve {index + 1}: grid point z={bad / NM:.4f} nm outside measured range "
                f"[{z[0] / NM:.4f}, {z[-1] / NM:.4f}] nm"
            )
            logging.error("Alignment failed: %s", message)
            raise ValidationError(message)
        rows.append(np.interp(z_grid, z, f))
    return ForceCurveSet(z_grid, np.vstack(rows))


def _require_sets(fcs: ForceCurveSet, minimum: int):
    if fcs.n < minimum:
        raise DomainError(f"need at least {minimum} force curve sets, got {fcs.n}")


def mean_force(fcs: ForceCurveSet) -> np.ndarray:
    _require_sets(fcs, 2)
    return fcs.forces.mean(axis=0)


def critical_outlier_statistic(n: int, beta: float) -> float:
    """Critical T_{n,1-β} for the bilateral outlier test"""
    if n < 3:
        raise DomainError(f"outlier test needs n >= 3, got {n}")
    if not 0 < beta < 1:
        raise DomainError(f"beta must be in (0, 1), got {beta}")
    key = (n, round(beta, 6))
    if key in CRITICAL_OUTLIER_TABLE:
        return CRITICAL_OUTLIER_TABLE[key]
    logging.warning("Critical outlier value for n=%d, beta=%g computed outside the embedded table", n, beta)
    return _grubbs_critical(n, beta)


def outlier_scan(fcs: ForceCurveSet, beta: float = 0.9) -> OutlierScan:
    """T = max|F - F̄|/s_F per grid point against the critical value"""
    _require_sets(fcs, 3)
    mean = fcs.forces.mean(axis=0)
    s = fcs.forces.std(axis=0, ddof=1)
    deviation = np.abs(fcs.forces - mean).max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        statistic = np.where(s > 0, deviation / s, 0.0)
    critical = critical_outlier_statistic(fcs.n, beta)
    outliers = statistic > critical
    if outliers.any():
        logging.warning(
            "Outliers at %d of %d grid points (T max %.3f > %.3f)",
            int(outliers.sum()),
            outliers.size,
            float(statistic.max()),
            critical,
        )
    else:
        logging.info("No outliers: T in [%.2f, %.2f] <= %.2f", float(statistic.min()), float(statistic.max()), critical)
    return OutlierScan(statistic, critical, outliers, beta)


def variance_of_mean(fcs: ForceCurveSet) -> np.ndarray:
    """s_F̄ per grid point"""
    _require_sets(fcs, 2)
    return fcs.forces.std(axis=0, ddof=1) / math.sqrt(fcs.n)


def smooth_variance(s_mean: Sequence[float], window: int = 30, weights: str = "uniform") -> np.ndarray:
    """Smoothed s̃_F̄ over the N neighbours of each point

    The window excludes the centre and shrinks symmetrically at the grid ends.
    Uniform weights give the RMS over the window; inverse weights λ ∝ 1/s²
    give N/Σ(1/s²).
    """
    s = np.asarray(s_mean, dtype=float)
    if window < 2 or window % 2:
        raise DomainError(f"smoothing window must be even and >= 2, got {window}")
    if window >= s.size:
        raise DomainError(f"smoothing window {window} larger than the grid ({s.size} points)")
    if weights not in ("uniform", "inverse"):
        raise DomainError(f"unknown smoothing weights '{weights}' (uniform, inverse)")

    half = window // 2
    squares = s**2
    smoothed = np.empty_like(s)
    for i in range(s.size):
        h = min(half, i, s.size - 1 - i)
        if h == 0:
            smoothed[i] = s[i]
            continue
        neighbours = np.concatenate((squares[i - h : i], squares[i + 1 : i + 1 + h]))
        if weights == "uniform":
            smoothed[i] = math.sqrt(neighbours.mean())
        elif np.any(neighbours == 0):
            smoothed[i] = 0.0
        else:
            smoothed[i] = math.sqrt(neighbours.size / np.sum(1.0 / neighbours))
    return smoothed


def student_t(probability: float, dof: int, paper_compat: bool = False) -> float:
    t = float(sps.t.ppf(probability, dof))
    return round(t, 1) if paper_compat else t


def random_error(
    s_smoothed,
    n: int,
    beta: float = 0.95,
    mean_force: Optional[Sequence[float]] = None,
    paper_compat: bool = False,
) -> RandomError:
    """Δ^rand = s̃·t_p(n-1), p = (1+β)/2, relative to |F̄| when given"""
    if n < 2:
        raise DomainError(f"random error needs n >= 2, got {n}")
    if not 0 < beta < 1:
        raise DomainError(f"beta must be in (0, 1), got {beta}")
    t = student_t((1.0 + beta) / 2.0, n - 1, paper_compat)
    absolute = np.asarray(s_smoothed, dtype=float) * t
    relative = None
    if mean_force is not None:
        relative = absolute / np.abs(np.asarray(mean_force, dtype=float))
    return RandomError(absolute, relative, t)


def _k_coefficient(j: int, beta: float, table: Optional[Mapping[Tuple[int, float], float]] = None) -> float:
    merged = dict(K_COEFFICIENTS)
    if table:
        merged.update(table)
    try:
        return merged[(j, round(beta, 6))]
    except KeyError:
        supported = ", ".join(f"(J={k[0]}, beta={k[1]})" for k in sorted(merged))
        raise UnsupportedCoefficientError(f"no k coefficient for J={j}, beta={beta}; supported: {supported}")


def combine_systematic(
    errors: Sequence[float], beta: float = 0.95, k_table: Optional[Mapping[Tuple[int, float], float]] = None
) -> float:
    """min(Σ δᵢ, k_β^(J)·√Σ δᵢ²)"""
    values = np.asarray(errors, dtype=float)
    if values.size == 0:
        raise DomainError("need at least one systematic error")
    if np.any(values < 0):
        raise DomainError("systematic errors must be >= 0")
    if values.size == 1:
        return float(values[0])
    k = _k_coefficient(values.size, beta, k_table)
    return float(min(values.sum(), k * math.sqrt(np.sum(values**2))))


def total_experimental_error(
    rand: float, syst: float, s_smoothed: float, beta: float = 0.95, policy: str = "conservative"
) -> float:
    """Total experimental error from the ratio r = Δ^syst/s̃

    standard: r < 0.8 gives Δ^rand, r > 8 gives Δ^syst, otherwise q_β(Δ^rand + Δ^syst).
    conservative: the largest outcome among the rules applicable within
    |Δr| <= 0.05, never below max(Δ^rand, Δ^syst).
    """
    if rand < 0 or syst < 0 or s_smoothed < 0:
        raise DomainError("errors must be >= 0")
    if policy not in ("standard", "conservative"):
        raise DomainError(f"unknown total error policy '{policy}' (standard, conservative)")
    if s_smoothed == 0:
        logging.warning("Smoothed variance is zero; total error falls back to max(random, systematic)")
        return max(rand, syst)
    try:
        q = Q_COEFFICIENTS[round(beta, 6)]
    except KeyError:
        raise UnsupportedCoefficientError(f"no q coefficient for beta={beta}; supported: {sorted(Q_COEFFICIENTS)}")

    r = syst / s_smoothed
    combined = q * (rand + syst)
    if policy == "standard":
        if r < RATIO_RANDOM_ONLY:
            return rand
        if r > RATIO_SYSTEMATIC_ONLY:
            return syst
        return combined

    outcomes = [rand, syst]
    if r < RATIO_RANDOM_ONLY + RATIO_BAND:
        outcomes.append(rand)
    if RATIO_RANDOM_ONLY - RATIO_BAND <= r <= RATIO_SYSTEMATIC_ONLY + RATIO_BAND:
        outcomes.append(combined)
    if r > RATIO_SYSTEMATIC_ONLY - RATIO_BAND:
        outcomes.append(syst)
    return max(outcomes)


def theory_error_budget(z, radius: float, d_radius: float, dz: float, delta1: float = 0.005) -> TheoryErrors:
    """Relative theoretical errors

    δ₂ = z/R, δ₀ = min(δ₁+δ₂, k₂√(δ₁²+δ₂²)), δ₃ = 0.95(ΔR/R + 3Δz/z),
    δ^tot = max(δ₃, q(δ₀+δ₃)).
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0) or not radius > 0:
        raise DomainError("separations and radius must be > 0")
    delta2 = z_arr / radius
    delta0 = np.minimum(delta1 + delta2, K_COEFFICIENTS[(2, 0.95)] * np.sqrt(delta1**2 + delta2**2))
    delta3 = 0.95 * (d_radius / radius + 3.0 * dz / z_arr)
    total = np.maximum(delta3, Q_COEFFICIENTS[0.95] * (delta0 + delta3))
    return TheoryErrors(delta0, delta2, delta3, total)


def confidence_band(theor_abs, expt_abs) -> ConfidenceBand:
    """Ξ₀.₉₅ = min(a + b, 1.1√(a² + b²)), Ξ₀.₇ = Ξ₀.₉₅/2"""
    a = np.asarray(theor_abs, dtype=float)
    b = np.asarray(expt_abs, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("absolute errors must be >= 0")
    xi95 = np.minimum(a + b, K_COEFFICIENTS[(2, 0.95)] * np.sqrt(a**2 + b**2))
    return ConfidenceBand(xi95, xi95 / 2.0)


def band_conformity(differences, band: ConfidenceBand) -> Conformity:
    """Points with |F_theor - F_expt| <= Ξ at each level"""
    d = np.abs(np.asarray(differences, dtype=float))
    if d.shape != band.xi95.shape:
        raise ValidationError(f"{d.size} differences do not match a band of {band.xi95.size} points")
    return Conformity(d <= band.xi95, d <= band.xi70)


def normality_check(samples, method: str = "shapiro", significance: float = 0.05) -> NormalityResult:
    """Goodness of fit of one grid point's samples to a fitted normal"""
    x = np.asarray(samples, dtype=float)
    if x.size < NORMALITY_MIN_SAMPLES:
        raise DomainError(f"normality check needs at least {NORMALITY_MIN_SAMPLES} samples, got {x.size}")
    if np.ptp(x) == 0:
        return NormalityResult(float("nan"), 0.0, False, method, "degenerate: all samples equal")

    if method == "shapiro":
        statistic, p_value = sps.shapiro(x)
    elif method == "pearson":
        bins = max(5, min(x.size // 5, 20))
        cuts = sps.norm.ppf(np.linspace(0, 1, bins + 1)[1:-1], loc=x.mean(), scale=x.std(ddof=1))
        observed = np.bincount(np.searchsorted(cuts, x, side="right"), minlength=bins)
        expected = np.full(bins, x.size / bins)
        statistic, p_value = sps.chisquare(observed, expected, ddof=2)
    else:
        raise DomainError(f"unknown normality method '{method}' (shapiro, pearson)")
    normal = bool(p_value >= significance)
    reason = "" if normal else f"p={p_value:.3g} < {significance}"
    return NormalityResult(float(statistic), float(p_value), normal, method, reason)


def experimental_error_budget(
    fcs: ForceCurveSet,
    systematic_errors: Sequence[float],
    beta: float = 0.95,
    window: int = 30,
    weights: str = "uniform",
    policy: str = "conservative",
    paper_compat: bool = False,
    k_table: Optional[Mapping[Tuple[int, float], float]] = None,
) -> ErrorBudget:
    """Per-z random, systematic and total experimental errors of a campaign"""
    mean = mean_force(fcs)
    s_mean = variance_of_mean(fcs)
    s_tilde = smooth_variance(s_mean, window, weights)
    rand = random_error(s_tilde, fcs.n, beta, mean, paper_compat)
    syst = combine_systematic(systematic_errors, beta, k_table)
    total = np.array([total_experimental_error(r, syst, s, beta, policy) for r, s in zip(rand.absolute, s_tilde)])
    logging.info(
        "Experimental errors: random %.3g..%.3g pN, systematic %.3g pN, total %.3g..%.3g pN",
        rand.absolute.min() / PN,
        rand.absolute.max() / PN,
        syst / PN,
        total.min() / PN,
        total.max() / PN,
    )
    return ErrorBudget(fcs.z_grid, mean, s_mean, s_tilde, rand.absolute, syst, total, beta)


def error_bar_subset(n_points: int, step: int = 10) -> np.ndarray:
    """Indices of every step-th grid point starting with the first"""
    if step < 1:
        raise DomainError(f"step must be >= 1, got {step}")
    return np.arange(0, n_points, step)


def consistency_verdicts(conformity: Conformity) -> List[Tuple[str, bool]]:
    """Band-level verdicts: consistent when the inside fraction reaches the band's confidence"""
    return [("95", conformity.fraction95 >= 0.95), ("70", conformity.fraction70 >= 0.70)]
