"""
afm2lifshitz.afm2lifshitz_lifshitz - Zero-temperature Lifshitz force, sphere-plate geometry

Evaluates the proximity-force form of the Lifshitz formula between a sphere
and a plate described by two permittivity models. The double integral is
taken over the dimensionless variables ξ̃ = 2zξ/c and y = 2zq with nested
adaptive quadrature.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .afm2lifshitz_dielectric import PermittivityModel
from .afm2lifshitz_utils import C_LIGHT, HBAR, CacheManager, DomainError, QuadratureError

FORCE_RTOL = 1e-5
QUAD_LIMIT = 200

# smallest anchor count of an interpolated force curve
MIN_ANCHORS = 8

# z/R above which the proximity form is questionable
PROXIMITY_WARN_RATIO = 0.05


class ForceCurveError(RuntimeError):
    """Force evaluation failed at one grid point"""

    def __init__(self, index: int, z: float, cause: Exception):
        self.index = index
        self.z = z
        self.cause = cause
        super().__init__(f"force curve point {index} (z={z / 1e-9:.4f} nm) failed: {cause}")


@dataclass(frozen=True)
class SpherePlateGeometry:
    """Sphere radius and its uncertainty, in m"""

    radius: float
    radius_uncertainty: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"radius must be > 0, got {self.radius}")
        if self.radius_uncertainty < 0:
            raise DomainError(f"radius uncertainty must be >= 0, got {self.radius_uncertainty}")

    def check_separation(self, z: float) -> bool:
        """Warn when z/R leaves the proximity regime, returns True when within it"""
        ratio = z / self.radius
        if ratio > PROXIMITY_WARN_RATIO:
            logging.warning(
                "Separation %.4g m gives z/R = %.3g > %.2f; proximity form loses accuracy",
                z,
                ratio,
                PROXIMITY_WARN_RATIO,
            )
            return False
        return True


@dataclass(frozen=True, eq=False)
class ForceCurve:
    """Force versus separation between zero roughness levels (SI units)"""

    z: np.ndarray
    force: np.ndarray
    error_bound: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        force = np.asarray(self.force, dtype=float)
        if z.ndim != 1 or z.shape != force.shape:
            raise DomainError("force curve needs 1-D z and F of equal length")
        if z.size > 1 and np.any(np.diff(z) <= 0):
            raise DomainError("force curve separations must be strictly increasing")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "force", force)

    def __len__(self):
        return self.z.size

    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.z.tolist(), self.force.tolist()))

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(np.abs(self.force)) < 0))

    def interpolator(self) -> Callable:
        """Vectorized F(z) from a cubic spline in log z - log |F|"""
        if self.z.size < 4:
            raise DomainError("interpolation needs at least 4 curve points")
        if np.any(self.force >= 0):
            raise DomainError("interpolation needs an attractive (negative) force curve")
        spline = CubicSpline(np.log(self.z), np.log(-self.force))
        lo, hi = self.z[0], self.z[-1]

        def force_at(z):
            arr = np.asarray(z, dtype=float)
            if np.any(arr < lo * (1 - 1e-12)) or np.any(arr > hi * (1 + 1e-12)):
                raise DomainError(
                    f"separation outside interpolated range [{lo:.4g}, {hi:.4g}] m: "
                    f"{arr.min():.4g}..{arr.max():.4g}"
                )
            values = -np.exp(spline(np.log(arr)))
            return float(values) if arr.ndim == 0 else values

        return force_at


def reflection_coefficients(eps: float, xi: float, k_perp: float) -> Tuple[float, float]:
    """Reflection coefficients (r_par, r_perp) of a semispace at imaginary frequency

    Args:
        eps: ε(iξ), >= 1 (math.inf for an ideal metal)
        xi: Imaginary frequency, rad/s
        k_perp: In-plane wave number, 1/m
    """
    if not eps >= 1:
        raise DomainError(f"eps must be >= 1, got {eps}")
    if not xi > 0:
        raise DomainError(f"xi must be > 0, got {xi}")
    if k_perp < 0:
        raise DomainError(f"k_perp must be >= 0, got {k_perp}")
    if math.isinf(eps):
        return 1.0, -1.0
    q = math.sqrt(k_perp**2 + (xi / C_LIGHT) ** 2)
    k = math.sqrt(k_perp**2 + eps * (xi / C_LIGHT) ** 2)
    return (eps * q - k) / (eps * q + k), (q - k) / (q + k)


def _scaled_reflections(eps: float, xt: float, y: float) -> Tuple[float, float]:
    if math.isinf(eps):
        return 1.0, -1.0
    kt = math.sqrt(y * y + (eps - 1.0) * xt * xt)
    return (eps * y - kt) / (eps * y + kt), (y - kt) / (y + kt)


def _inner_integrand(t: float, xt: float, e1: float, e2: float) -> float:
    y = xt + t
    p1, s1 = _scaled_reflections(e1, xt, y)
    p2, s2 = _scaled_reflections(e2, xt, y)
    decay = math.exp(-y)
    return y * (math.log1p(-p1 * p2 * decay) + math.log1p(-s1 * s2 * decay))


def casimir_force(
    geom: SpherePlateGeometry,
    eps1: PermittivityModel,
    eps2: PermittivityModel,
    z: float,
    rtol: float = FORCE_RTOL,
    full_output: bool = False,
    cache: Optional[CacheManager] = None,
):
    """Lifshitz force between sphere (eps1) and plate (eps2) at separation z

    Args:
        geom: Sphere-plate geometry
        eps1, eps2: Permittivity models of the two bodies
        z: Separation, m
        rtol: Relative tolerance of the outer quadrature
        full_output: Also return the absolute error bound
        cache: Optional on-disk cache for permittivity grids

    Returns:
        Force in N (negative is attractive), or (force, error_bound)
    """
    if not z > 0:
        raise DomainError(f"separation must be > 0, got {z}")
    geom.check_separation(z)
    model1 = eps1.gridded(cache)
    model2 = eps2.gridded(cache)
    scale = C_LIGHT / (2.0 * z)
    failures: List[str] = []

    def outer(xt: float) -> float:
        xi = xt * scale
        e1 = float(model1(xi))
        e2 = float(model2(xi))
        result = quad(
            _inner_integrand,
            0.0,
            np.inf,
            args=(xt, e1, e2),
            epsabs=0.0,
            epsrel=rtol * 0.1,
            limit=QUAD_LIMIT,
            full_output=1,
        )
        if len(result) > 3 and not failures:
            failures.append(f"inner integral at xi~={xt:.4g}: {result[3]}")
        return result[0]

    result = quad(outer, 0.0, np.inf, epsabs=0.0, epsrel=rtol, limit=QUAD_LIMIT, full_output=1)
    prefactor = HBAR * C_LIGHT * geom.radius / (16.0 * math.pi * z**3)
    force = prefactor * result[0]
    # outer estimate plus the relative tolerance of the inner integrals
    bound = abs(prefactor) * (result[1] + 0.1 * rtol * abs(result[0]))
    if len(result) > 3:
        failures.insert(0, f"outer integral: {result[3]}")
    if failures:
        raise QuadratureError(f"Lifshitz quadrature did not converge at z={z:.4g} m; {failures[0]}", force, bound)
    if full_output:
        return force, bound
    return force


def ideal_metal_force(geom: SpherePlateGeometry, z):
    """-π³ħcR/(360 z³)"""
    z_arr = np.asarray(z, dtype=float)
    value = -(math.pi**3) * HBAR * C_LIGHT * geom.radius / (360.0 * z_arr**3)
    return float(value) if z_arr.ndim == 0 else value


def _force_point(job):
    index, z, geom, eps1, eps2, rtol = job
    try:
        return index, casimir_force(geom, eps1, eps2, z, rtol=rtol, full_output=True), None
    except Exception as e:
        return index, None, e


def force_curve(
    geom: SpherePlateGeometry,
    eps1: PermittivityModel,
    eps2: PermittivityModel,
    z_grid: Sequence[float],
    rtol: float = FORCE_RTOL,
    workers: Optional[int] = 1,
    cache: Optional[CacheManager] = None,
    anchors: Optional[int] = None,
) -> ForceCurve:
    """Lifshitz force on a grid of separations

    Grid permittivities are built before points are shared with the workers.
    workers=None uses one process per CPU; results are ordered by grid index.

    With anchors set and a longer grid, the formula is evaluated on that many
    log-spaced separations spanning the grid and the curve is interpolated in
    log z - log |F|. The error bound then includes the spline error, estimated
    from a spline through every other anchor.
    """
    z = np.asarray(z_grid, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise DomainError("separation grid must be a non-empty 1-D sequence")
    if np.any(z <= 0):
        raise DomainError("separations must be > 0")
    if np.any(np.diff(z) <= 0):
        raise DomainError("separation grid must be strictly increasing")

    model1 = eps1.gridded(cache)
    model2 = eps2.gridded(cache)
    if z[-1] / geom.radius > PROXIMITY_WARN_RATIO:
        geom.check_separation(float(z[-1]))

    if anchors is not None and z.size > max(anchors, MIN_ANCHORS):
        curve = _anchored_curve(geom, model1, model2, z, max(anchors, MIN_ANCHORS), rtol, workers)
    else:
        logging.info("Computing Lifshitz force on %d separations (%s vs %s)", z.size, eps1.name, eps2.name)
        forces, bounds = _evaluate(geom, model1, model2, z, rtol, workers)
        curve = ForceCurve(z, forces, bounds)
    if z.size > 1 and not curve.is_monotone():
        logging.warning("Force magnitude is not strictly decreasing along the grid")
    return curve


def _evaluate(geom, model1, model2, z: np.ndarray, rtol: float, workers: Optional[int]):
    jobs = [(i, float(value), geom, model1, model2, rtol) for i, value in enumerate(z)]
    if workers == 1 or z.size == 1:
        results = list(map(_force_point, jobs))
    else:
        chunk = max(1, z.size // (4 * (workers or 8)))
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_force_point, jobs, chunksize=chunk))

    forces = np.empty(z.size)
    bounds = np.empty(z.size)
    for index, value, error in sorted(results, key=lambda item: item[0]):
        if error is not None:
            logging.error("Force evaluation failed at point %d (z=%.4f nm): %s", index, z[index] / 1e-9, error)
            raise ForceCurveError(index, float(z[index]), error)
        forces[index], bounds[index] = value
    return forces, bounds


def _anchored_curve(geom, model1, model2, z: np.ndarray, count: int, rtol: float, workers: Optional[int]):
    z_anchor = np.geomspace(z[0], z[-1], count)
    logging.info(
        "Computing Lifshitz force on %d anchors for %d separations (%s vs %s)",
        count,
        z.size,
        model1.name,
        model2.name,
    )
    forces, bounds = _evaluate(geom, model1, model2, z_anchor, rtol, workers)
    if np.any(forces >= 0):
        logging.warning("Force is not attractive at every anchor; evaluating all %d separations", z.size)
        forces, bounds = _evaluate(geom, model1, model2, z, rtol, workers)
        return ForceCurve(z, forces, bounds)

    fine = ForceCurve(z_anchor, forces).interpolator()
    kept = list(range(0, count, 2))
    if kept[-1] != count - 1:
        kept.append(count - 1)
    skipped = np.setdiff1d(np.arange(count), kept)
    coarse = ForceCurve(z_anchor[kept], forces[kept]).interpolator()
    spline_error = float(np.max(np.abs(coarse(z_anchor[skipped]) / forces[skipped] - 1.0)))
    logging.debug("Anchor spline relative error estimate: %.3g", spline_error)

    values = fine(z)
    error_bound = np.interp(z, z_anchor, bounds) + spline_error * np.abs(values)
    return ForceCurve(z, values, error_bound)


def relative_force_change(
    geom: SpherePlateGeometry,
    reference: Tuple[PermittivityModel, PermittivityModel],
    variant: Tuple[PermittivityModel, PermittivityModel],
    z_values: Sequence[float],
    rtol: float = FORCE_RTOL,
) -> np.ndarray:
    """(F_variant - F_reference)/F_reference at each separation"""
    changes = []
    for z in z_values:
        f_ref = casimir_force(geom, reference[0], reference[1], z, rtol=rtol)
        f_var = casimir_force(geom, variant[0], variant[1], z, rtol=rtol)
        changes.append((f_var - f_ref) / f_ref)
    return np.asarray(changes)


def drude_sensitivity(
    geom: SpherePlateGeometry,
    model_factory: Callable[[float], Tuple[PermittivityModel, PermittivityModel]],
    z_values: Sequence[float],
    scale: float = 1.5,
    rtol: float = FORCE_RTOL,
) -> np.ndarray:
    """Relative force change when the Drude plasma frequency is scaled

    Args:
        model_factory: Returns the (sphere, plate) models for a given ω_p scale
        z_values: Separations, m
        scale: Plasma frequency scale of the variant
    """
    reference = model_factory(1.0)
    variant = model_factory(scale)
    changes = relative_force_change(geom, reference, variant, z_values, rtol=rtol)
    for z, change in zip(z_values, changes):
        logging.info("Drude sensitivity at z=%.2f nm: ω_p x%g changes F by %.3f%%", z / 1e-9, scale, 100 * change)
    return changes
