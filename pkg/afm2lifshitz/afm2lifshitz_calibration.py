"""
afm2lifshitz.afm2lifshitz_calibration - Electrostatic calibration and separation fits

Exact and polynomial electrostatic sphere-plate forces, separation
reconstruction from piezo extension and cantilever deflection, and the fits
that extract the residual potential V₀, the contact separation z₀ and the
deflection coefficient m from calibration sweeps.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy import stats
from scipy.optimize import least_squares

from .afm2lifshitz_utils import EPS0, NM, DomainError, FitError, SeriesConvergenceError

SERIES_RTOL = 1e-8
SERIES_MAX_TERMS = 1_000_000
# sinh/cosh overflow guard
_MAX_EXPONENT = 700.0

VALIDITY_RANGE = (0.005, 0.06)

MIN_PARABOLA_VOLTAGES = 3
MIN_CONTACT_SAMPLES = 8
MIN_DEFLECTION_CONTACTS = 3


@dataclass(frozen=True)
class ElectrostaticCoefficients:
    """Coefficients c₋₁..c₆ of the sphere-plate polynomial force"""

    c: Tuple[float, ...] = (0.5, -1.18260, 22.2375, -571.366, 9592.45, -90200.5, 383084.0, -300357.0)

    def __post_init__(self):
        if len(self.c) != 8:
            raise DomainError(f"expected 8 coefficients c_-1..c_6, got {len(self.c)}")

    @property
    def powers(self) -> np.ndarray:
        return np.arange(-1, 7)


DEFAULT_COEFFICIENTS = ElectrostaticCoefficients()


@dataclass(frozen=True)
class SeparationModel:
    """Parameters turning piezo extension and deflection signal into separation"""

    m_nm: float = 43.3
    z0: float = 32.1 * NM
    v0: float = -0.114
    force_calibration: float = 1.440e-9

    def __post_init__(self):
        if self.m_nm < 0:
            raise DomainError(f"deflection coefficient must be >= 0, got {self.m_nm}")
        if self.z0 < 0:
            raise DomainError(f"contact separation must be >= 0, got {self.z0}")
        if not self.force_calibration > 0:
            raise DomainError(f"force calibration must be > 0, got {self.force_calibration}")

    def to_json(self) -> Dict[str, float]:
        return {
            "m_nm_per_unit": self.m_nm,
            "z0_nm": self.z0 / NM,
            "v0_volt": self.v0,
            "force_calibration_nN_per_unit": self.force_calibration / 1e-9,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "SeparationModel":
        defaults = cls()
        return cls(
            m_nm=float(data.get("m_nm_per_unit", defaults.m_nm)),
            z0=float(data.get("z0_nm", defaults.z0 / NM)) * NM,
            v0=float(data.get("v0_volt", defaults.v0)),
            force_calibration=float(data.get("force_calibration_nN_per_unit", defaults.force_calibration / 1e-9))
            * 1e-9,
        )


@dataclass(frozen=True)
class ParabolaFit:
    v0: float
    x: float
    v0_stderr: float
    x_stderr: float
    residual_rms: float
    n: int


@dataclass(frozen=True)
class ContactFit:
    z0: float
    z0_stderr: float
    residual_rms: float
    n: int


@dataclass(frozen=True)
class DeflectionFit:
    m_nm: float
    m_stderr: float
    intercept_nm: float
    n: int


@dataclass(frozen=True)
class PiezoCalibration:
    coefficients: Tuple[float, ...]
    residual_rms: float
    polynomial: Polynomial = field(repr=False, compare=False)

    def __call__(self, voltage):
        return self.polynomial(voltage)


@dataclass(frozen=True)
class V0Independence:
    weighted_mean: float
    chi2: float
    dof: int
    p_value: float
    distance_dependent: bool


def _series_alpha(z: float, radius: float) -> float:
    # cosh α = 1 + z/R
    return 2.0 * math.asinh(math.sqrt(z / (2.0 * radius)))


def exact_electrostatic_force(
    radius: float, z: float, v: float, v0: float, n_terms: Optional[int] = None, rtol: float = SERIES_RTOL
) -> float:
    """Sphere-plate electrostatic force from the image-charge series

    Args:
        radius: Sphere radius, m
        z: Closest separation, m
        v, v0: Applied and residual potentials, V
        n_terms: Number of series terms (chosen from the decay rate when None)
        rtol: Largest tail term relative to the partial sum

    Returns:
        Force in N, negative (attractive)
    """
    if not z > 0:
        raise DomainError(f"separation must be > 0, got {z}")
    if not radius > 0:
        raise DomainError(f"radius must be > 0, got {radius}")
    dv2 = (v - v0) ** 2
    if dv2 == 0:
        return 0.0

    alpha = _series_alpha(z, radius)
    if n_terms is None:
        n_terms = min(SERIES_MAX_TERMS, int((-math.log(rtol) + 20.0) / alpha) + 50)
    n = np.arange(1, n_terms + 1, dtype=float)
    na = n * alpha
    active = na < _MAX_EXPONENT
    terms = np.zeros(n_terms)
    terms[active] = (1.0 / math.tanh(alpha) - n[active] / np.tanh(na[active])) / np.sinh(na[active])
    partial = float(terms.sum())
    tail = abs(terms[-1])
    if active[-1] and tail > rtol * abs(partial):
        logging.error("Electrostatic series not converged after %d terms (z/R=%.3g)", n_terms, z / radius)
        raise SeriesConvergenceError(f"series not converged after {n_terms} terms at z/R={z / radius:.3g}", tail)
    return 2.0 * math.pi * EPS0 * dv2 * partial


def electrostatic_basis(radius: float, z, coefficients: ElectrostaticCoefficients = DEFAULT_COEFFICIENTS, warn=True):
    """X(z) = -2πε₀ Σ cᵢ (z/R)^i, N/V²"""
    ratio = np.asarray(z, dtype=float) / radius
    if np.any(ratio <= 0):
        raise DomainError("separations must be > 0")
    if warn and (np.any(ratio < VALIDITY_RANGE[0]) or np.any(ratio > VALIDITY_RANGE[1])):
        logging.warning(
            "z/R in [%.4g, %.4g] leaves the polynomial validity range [%g, %g]",
            ratio.min(),
            ratio.max(),
            *VALIDITY_RANGE,
        )
    c = np.asarray(coefficients.c)
    x = -2.0 * math.pi * EPS0 * np.sum(c[:, None] * ratio.reshape(-1)[None, :] ** coefficients.powers[:, None], axis=0)
    return float(x[0]) if ratio.ndim == 0 else x.reshape(ratio.shape)


def _basis_derivative(radius: float, z: np.ndarray, coefficients: ElectrostaticCoefficients) -> np.ndarray:
    ratio = z / radius
    c = np.asarray(coefficients.c)
    p = coefficients.powers
    return -2.0 * math.pi * EPS0 * np.sum((c * p)[:, None] * ratio[None, :] ** (p - 1)[:, None], axis=0) / radius


def polynomial_electrostatic_force(
    radius: float, z, v: float, v0: float, coefficients: ElectrostaticCoefficients = DEFAULT_COEFFICIENTS
):
    """X(z)·(V - V₀)²"""
    return electrostatic_basis(radius, z, coefficients) * (v - v0) ** 2


def reconstruct_separation(z_piezo, s_def, model: SeparationModel):
    """z = z_piezo + S_def·m + z₀"""
    z = np.asarray(z_piezo, dtype=float) + np.asarray(s_def, dtype=float) * model.m_nm * NM + model.z0
    return float(z) if np.ndim(z) == 0 else z


def force_from_signal(s_def, model: SeparationModel):
    """Deflection signal to force, N"""
    f = np.asarray(s_def, dtype=float) * model.force_calibration
    return float(f) if np.ndim(f) == 0 else f


def _covariance(jac: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    n, p = jac.shape
    dof = n - p
    scale = float(np.dot(residuals, residuals)) / dof if dof > 0 else 0.0
    try:
        return np.linalg.inv(jac.T @ jac) * scale
    except np.linalg.LinAlgError:
        raise FitError("singular normal matrix, parameters are not identifiable")


def fit_voltage_parabola(samples: Sequence[Tuple[float, float]]) -> ParabolaFit:
    """Least-squares fit of F = X(V - V₀)² at one separation

    Args:
        samples: (V in volt, F in N) pairs

    Returns:
        ParabolaFit with vertex V₀, curvature X and their standard errors
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise FitError("parabola fit needs (V, F) pairs")
    volts, forces = data[:, 0], data[:, 1]
    if np.unique(volts).size < MIN_PARABOLA_VOLTAGES:
        raise FitError(f"degenerate design: {np.unique(volts).size} distinct voltages, need {MIN_PARABOLA_VOLTAGES}")

    scale = float(np.max(np.abs(forces))) or 1.0
    f = forces / scale
    v0_init = float(volts[np.argmin(np.abs(forces))])
    d2 = (volts - v0_init) ** 2
    x_init = float(np.dot(f, d2) / np.dot(d2, d2)) if np.any(d2 > 0) else -1.0

    def residuals(p):
        return p[1] * (volts - p[0]) ** 2 - f

    def jacobian(p):
        return np.column_stack((-2.0 * p[1] * (volts - p[0]), (volts - p[0]) ** 2))

    result = least_squares(residuals, [v0_init, x_init], jac=jacobian, method="lm", xtol=1e-12, ftol=1e-12)
    if not result.success:
        raise FitError(f"parabola fit failed: {result.message}")
    v0, x = result.x
    if x == 0:
        raise FitError("parabola fit gave zero curvature")
    cov = _covariance(result.jac, result.fun)
    rms = float(np.sqrt(np.mean(result.fun**2))) * scale
    fit = ParabolaFit(
        v0=float(v0),
        x=float(x) * scale,
        v0_stderr=float(np.sqrt(max(cov[0, 0], 0.0))),
        x_stderr=float(np.sqrt(max(cov[1, 1], 0.0))) * scale,
        residual_rms=rms,
        n=volts.size,
    )
    logging.debug("Parabola fit: V0=%.6f V, X=%.6g N/V^2, rms=%.3g N", fit.v0, fit.x, fit.residual_rms)
    return fit


def fit_contact_separation(
    samples: Sequence[Tuple[float, float]],
    radius: float,
    coefficients: ElectrostaticCoefficients = DEFAULT_COEFFICIENTS,
) -> ContactFit:
    """Fit the single shift z₀ so that X(z_rel + z₀) follows the polynomial basis

    Samples are weighted uniformly.

    Args:
        samples: (z_rel in m, X in N/V²) pairs
        radius: Sphere radius, m
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise FitError("contact fit needs (z_rel, X) pairs")
    if data.shape[0] < MIN_CONTACT_SAMPLES:
        raise FitError(f"contact fit needs at least {MIN_CONTACT_SAMPLES} samples, got {data.shape[0]}")
    order = np.argsort(data[:, 0])
    z_rel, x_meas = data[order, 0], data[order, 1]
    if z_rel[0] <= 0 or z_rel[-1] / z_rel[0] < 2.0:
        raise FitError("contact fit samples must be positive and span a factor >= 2 in separation")
    if np.any(x_meas >= 0):
        raise FitError("contact fit needs attractive (negative) X samples")

    scale = float(np.max(np.abs(x_meas)))
    estimates = -math.pi * EPS0 * radius / x_meas[:2] - z_rel[:2]
    z0_init = float(np.mean(estimates))

    def residuals(p):
        z = z_rel + p[0]
        if np.any(z <= 0):
            return np.full(z.size, 1e6)
        return (electrostatic_basis(radius, z, coefficients, warn=False) - x_meas) / scale

    def jacobian(p):
        z = np.maximum(z_rel + p[0], 1e-12)
        return (_basis_derivative(radius, z, coefficients) / scale)[:, None]

    if np.linalg.norm(jacobian([z0_init])) == 0:
        raise FitError("contact fit objective is flat in z0")
    result = least_squares(residuals, [z0_init], jac=jacobian, method="lm", x_scale=[NM])
    if not result.success:
        raise FitError(f"contact fit failed: {result.message}")
    z0 = float(result.x[0])
    # warns when the fitted separations leave the validity range
    electrostatic_basis(radius, z_rel + z0, coefficients)
    cov = _covariance(result.jac, result.fun)
    fit = ContactFit(
        z0=z0,
        z0_stderr=float(np.sqrt(max(cov[0, 0], 0.0))),
        residual_rms=float(np.sqrt(np.mean(result.fun**2))) * scale,
        n=z_rel.size,
    )
    logging.info("Contact separation fit: z0=%.3f nm (stderr %.3f nm)", fit.z0 / NM, fit.z0_stderr / NM)
    return fit


def contact_signal_per_volt2(radius: float, z_contact: float, force_calibration: float) -> float:
    """Deflection signal per V² at the contact separation (|X(z_c)| over the force calibration)"""
    return abs(exact_electrostatic_force(radius, z_contact, 1.0, 0.0)) / force_calibration


def fit_deflection_coefficient(
    contacts: Sequence[Tuple[float, float]], signal_per_volt2: float, v0: float
) -> DeflectionFit:
    """Regress contact piezo position on the deflection predicted at contact

    The piezo must extend further by m·S to reach contact when the
    cantilever is pre-deflected by S = s·(V - V₀)².

    Args:
        contacts: (V in volt, z_piezo at contact in m) pairs
        signal_per_volt2: Predicted deflection signal per V² at contact
        v0: Residual potential, V

    Returns:
        DeflectionFit with m in nm per unit signal
    """
    data = np.asarray(contacts, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < MIN_DEFLECTION_CONTACTS:
        raise FitError(f"deflection fit needs at least {MIN_DEFLECTION_CONTACTS} (V, z_piezo) contacts")
    signal = signal_per_volt2 * (data[:, 0] - v0) ** 2
    if np.unique(signal).size < 2:
        raise FitError("collinear design: all contacts have the same predicted deflection")
    reg = stats.linregress(signal, data[:, 1] / NM)
    fit = DeflectionFit(
        m_nm=float(-reg.slope), m_stderr=float(reg.stderr), intercept_nm=float(reg.intercept), n=data.shape[0]
    )
    logging.info("Deflection coefficient fit: m=%.3f ± %.3f nm/unit", fit.m_nm, fit.m_stderr)
    return fit


def locate_contact(z_piezo: Sequence[float], signal: Sequence[float], threshold: float) -> float:
    """Piezo position where the signal first reaches the threshold, linearly interpolated"""
    z = np.asarray(z_piezo, dtype=float)
    s = np.asarray(signal, dtype=float)
    if z.shape != s.shape or z.size < 2:
        raise FitError("contact location needs matching z_piezo and signal arrays of length >= 2")
    above = s >= threshold
    if above[0]:
        return float(z[0])
    crossing = np.flatnonzero(above)
    if crossing.size == 0:
        raise FitError(f"signal never reaches contact threshold {threshold:g}")
    i = int(crossing[0])
    frac = (threshold - s[i - 1]) / (s[i] - s[i - 1])
    return float(z[i - 1] + frac * (z[i] - z[i - 1]))


def fit_piezo_polynomial(voltage: Sequence[float], extension: Sequence[float], order: int = 4) -> PiezoCalibration:
    """Polynomial piezo extension versus applied voltage"""
    v = np.asarray(voltage, dtype=float)
    e = np.asarray(extension, dtype=float)
    if v.shape != e.shape or np.unique(v).size < order + 1:
        raise FitError(f"piezo fit of order {order} needs at least {order + 1} distinct voltages")
    poly = Polynomial.fit(v, e, order).convert()
    rms = float(np.sqrt(np.mean((poly(v) - e) ** 2)))
    return PiezoCalibration(tuple(float(c) for c in poly.coef), rms, poly)


def v0_independence(fits: Sequence[ParabolaFit], alpha: float = 0.05) -> V0Independence:
    """χ² test that V₀ does not depend on separation"""
    if len(fits) < 2:
        raise FitError("V0 independence needs at least 2 parabola fits")
    v0 = np.array([f.v0 for f in fits])
    err = np.array([f.v0_stderr for f in fits])
    if np.all(err <= 0):
        spread = float(np.ptp(v0))
        return V0Independence(float(v0.mean()), 0.0, len(fits) - 1, 1.0 if spread < 1e-9 else 0.0, spread >= 1e-9)
    err = np.where(err > 0, err, err[err > 0].min())
    w = 1.0 / err**2
    mean = float(np.sum(w * v0) / np.sum(w))
    chi2 = float(np.sum(w * (v0 - mean) ** 2))
    dof = len(fits) - 1
    p_value = float(stats.chi2.sf(chi2, dof))
    result = V0Independence(mean, chi2, dof, p_value, p_value < alpha)
    if result.distance_dependent:
        logging.warning("Residual potential varies with separation (chi2=%.2f, dof=%d, p=%.3g)", chi2, dof, p_value)
    return result


def fits_to_json(fits: Sequence[Any]) -> List[Dict[str, Any]]:
    return [{k: v for k, v in asdict(f).items() if k != "polynomial"} for f in fits]
