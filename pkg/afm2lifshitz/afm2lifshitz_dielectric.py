"""
afm2lifshitz.afm2lifshitz_dielectric - Dielectric permittivity along the imaginary axis

Builds ε(iξ) for the sphere and plate materials from tabulated optical data
(Kramers-Kronig transform with Drude extrapolation below the table and an
ω⁻³ closure above it), closed-form Drude and oscillator models, and the
doped-silicon composite. Models evaluated inside the force integrand can be
sampled once on a logarithmic ξ grid and interpolated with a monotone cubic.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import hyp2f1

from .afm2lifshitz_utils import (
    E_CHARGE,
    EPS0,
    M_ELECTRON,
    CacheManager,
    DomainError,
    QuadratureError,
    UncoveredTailError,
    ValidationError,
    fingerprint,
)

# ξ grid used by cached models (rad/s)
GRID_XI_MIN = 1e11
GRID_XI_MAX = 1e18
GRID_POINTS_PER_DECADE = 200

KK_RTOL = 1e-6

# Widest log-ω interval integrated by a single Gauss-Legendre panel
_MAX_PANEL_WIDTH = 0.25
_MAX_REFINEMENTS = 12
_XI_BLOCK = 128
_GAUSS_LOW = np.polynomial.legendre.leggauss(8)
_GAUSS_HIGH = np.polynomial.legendre.leggauss(16)


def _positive_array(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be positive and finite, got: {value}")
    return arr


def _as_output(arr: np.ndarray, template):
    return float(arr) if np.ndim(template) == 0 else arr


@dataclass(frozen=True, eq=False)
class OpticalDataTable:
    """Tabulated (ω, Im ε(ω)) samples"""

    omega: np.ndarray
    im_eps: np.ndarray
    source: str = ""

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        im_eps = np.asarray(self.im_eps, dtype=float)
        if omega.ndim != 1 or omega.shape != im_eps.shape:
            raise ValidationError("omega and im_eps must be 1-D arrays of equal length")
        if omega.size < 2:
            raise ValidationError("optical table needs at least 2 samples")
        if omega[0] <= 0:
            raise ValidationError(f"omega_min must be > 0, got {omega[0]:g}")
        if np.any(np.diff(omega) <= 0):
            raise ValidationError("omega must be strictly increasing")
        if np.any(im_eps < 0) or np.any(~np.isfinite(im_eps)):
            raise ValidationError("im_eps must be finite and >= 0")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "im_eps", im_eps)

    @property
    def omega_min(self) -> float:
        return float(self.omega[0])

    @property
    def omega_max(self) -> float:
        return float(self.omega[-1])

    def scaled(self, factor: float) -> "OpticalDataTable":
        return OpticalDataTable(self.omega, self.im_eps * factor, self.source)

    def interpolate(self, omega) -> np.ndarray:
        """Im ε inside the table, linear in log ω - log Im ε"""
        log_im = np.log(np.maximum(self.im_eps, 1e-300))
        values = np.exp(np.interp(np.log(omega), np.log(self.omega), log_im))
        return np.where(values < 1e-250, 0.0, values)


@dataclass(frozen=True)
class DrudeParams:
    """Plasma frequency and relaxation parameter, both in rad/s"""

    omega_p: float
    gamma: float

    def __post_init__(self):
        if not self.omega_p > 0:
            raise DomainError(f"omega_p must be > 0, got {self.omega_p}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be > 0, got {self.gamma}")

    def scaled(self, omega_p_factor: float) -> "DrudeParams":
        return DrudeParams(self.omega_p * omega_p_factor, self.gamma)


@dataclass(frozen=True)
class CarrierParams:
    """Free-carrier parameters of a doped semiconductor"""

    n_carriers: float
    m_eff_ratio: float
    resistivity: float

    def __post_init__(self):
        for name in ("n_carriers", "m_eff_ratio", "resistivity"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)}")


def drude_im_eps(p: DrudeParams, omega):
    """Imaginary part of the Drude permittivity at real frequency ω"""
    w = _positive_array(omega, "omega")
    result = p.omega_p**2 * p.gamma / (w * (w**2 + p.gamma**2))
    return _as_output(result, omega)


def drude_eps_imag_axis(p: DrudeParams, xi):
    """Drude permittivity at imaginary frequency iξ"""
    x = _positive_array(xi, "xi")
    result = 1.0 + p.omega_p**2 / (x * (x + p.gamma))
    return _as_output(result, xi)


def plasma_frequency(c: CarrierParams) -> float:
    """ω_p = e √n / √(ε₀ m*)"""
    m_star = c.m_eff_ratio * M_ELECTRON
    return E_CHARGE * math.sqrt(c.n_carriers) / math.sqrt(EPS0 * m_star)


def relaxation_parameter(c: CarrierParams, omega_p: float) -> float:
    """γ = ε₀ ρ ω_p²"""
    if not omega_p > 0:
        raise DomainError(f"omega_p must be > 0, got {omega_p}")
    return EPS0 * c.resistivity * omega_p**2


def drude_from_carriers(c: CarrierParams) -> DrudeParams:
    omega_p = plasma_frequency(c)
    return DrudeParams(omega_p, relaxation_parameter(c, omega_p))


def _drude_low_segment(p: DrudeParams, upper: float, xi: np.ndarray) -> np.ndarray:
    """Closed form of ∫₀^upper ω Im ε_D(ω)/(ω²+ξ²) dω"""
    g = p.gamma
    near = np.abs(xi - g) <= 1e-7 * g
    safe_xi = np.where(near, 2.0 * g, xi)
    generic = (np.arctan(upper / g) / g - np.arctan(upper / safe_xi) / safe_xi) / (safe_xi**2 - g**2)
    equal = upper / (2 * g**2 * (upper**2 + g**2)) + np.arctan(upper / g) / (2 * g**3)
    return p.omega_p**2 * g * np.where(near, equal, generic)


def _power_tail_below(table: OpticalDataTable, xi: np.ndarray) -> Tuple[np.ndarray, float]:
    """Power-law continuation of the table below omega_min, with its exponent"""
    i0, i1 = table.im_eps[0], table.im_eps[1]
    if i0 <= 0:
        return np.zeros_like(xi), float("inf")
    if i1 <= 0:
        slope = 1.0
    else:
        slope = math.log(i1 / i0) / math.log(table.omega[1] / table.omega[0])
    if slope <= -2.0:
        return np.full_like(xi, np.inf), slope
    # I0 ∫₀¹ t^(s+1)/(t²+b²) dt, b = ξ/ω_min
    b2 = (xi / table.omega_min) ** 2
    a = (slope + 2.0) / 2.0
    tail = i0 * hyp2f1(1.0, a, a + 1.0, -1.0 / b2) / (b2 * (slope + 2.0))
    return tail, slope


def _omega_cubed_tail(table: OpticalDataTable, xi: np.ndarray) -> np.ndarray:
    """Im ε = A ω⁻³ fitted to the last decade, integrated analytically to ∞"""
    decade = table.omega >= table.omega_max / 10.0
    positive = decade & (table.im_eps > 0)
    if not np.any(positive):
        return np.zeros_like(xi)
    log_a = np.mean(np.log(table.im_eps[positive]) + 3.0 * np.log(table.omega[positive]))
    amplitude = math.exp(log_a)
    a = table.omega_max
    x = xi / a
    series = (1.0 / 3.0 - x**2 / 5.0 + x**4 / 7.0 - x**6 / 9.0) / a**3
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (1.0 / a - np.arctan(x) / xi) / xi**2
    return amplitude * np.where(x < 1e-2, series, exact)


def _panel_edges(table: OpticalDataTable) -> np.ndarray:
    u = np.log(table.omega)
    edges: List[float] = [u[0]]
    for left, right in zip(u[:-1], u[1:]):
        pieces = max(1, int(math.ceil((right - left) / _MAX_PANEL_WIDTH)))
        edges.extend(np.linspace(left, right, pieces + 1)[1:])
    return np.asarray(edges)


def _gauss_panels(table, edges, xi, rule) -> np.ndarray:
    nodes, weights = rule
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    u = (0.5 * (right + left))[:, None] + half[:, None] * nodes[None, :]
    omega = np.exp(u)
    integrand = omega**2 * table.interpolate(omega)
    # shape (panels, nodes, xi)
    values = integrand[:, :, None] / (omega[:, :, None] ** 2 + xi[None, None, :] ** 2)
    return np.einsum("pnx,n->px", values, weights) * half[:, None]


def _table_segment(table: OpticalDataTable, xi: np.ndarray, rtol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Adaptive Gauss-Legendre over [omega_min, omega_max] in log ω"""
    total = np.zeros_like(xi)
    bound = np.zeros_like(xi)
    base_edges = _panel_edges(table)
    for start in range(0, xi.size, _XI_BLOCK):
        block = xi[start:start + _XI_BLOCK]
        edges = base_edges
        for level in range(_MAX_REFINEMENTS + 1):
            coarse = _gauss_panels(table, edges, block, _GAUSS_LOW)
            fine = _gauss_panels(table, edges, block, _GAUSS_HIGH)
            error = np.abs(fine - coarse)
            value = fine.sum(axis=0)
            allowed = rtol * np.maximum(np.abs(value), 1e-300)
            if np.all(error.sum(axis=0) <= allowed):
                break
            # Split every panel whose share of the error exceeds its share of the budget
            share = error / allowed[None, :]
            bad = np.any(share > 1.0 / len(coarse), axis=1)
            mid = 0.5 * (edges[:-1] + edges[1:])
            edges = np.sort(np.concatenate([edges, mid[bad]]))
        else:
            raise QuadratureError(
                "Kramers-Kronig quadrature did not converge",
                estimate=float(value[0]),
                error_bound=float(error.sum(axis=0).max()),
            )
        total[start:start + _XI_BLOCK] = value
        bound[start:start + _XI_BLOCK] = error.sum(axis=0)
    return total, bound


def kramers_kronig(
    table: OpticalDataTable,
    extrapolation: Optional[DrudeParams],
    xi,
    rtol: float = KK_RTOL,
):
    """ε(iξ) = 1 + (2/π) ∫₀^∞ ω Im ε(ω)/(ω²+ξ²) dω

    Below omega_min the Drude extrapolation is used when given. Without it the
    table is continued by the power law of its first two samples, which is only
    accepted for insulator-like data or when its contribution is negligible.

    Args:
        table: Tabulated Im ε samples
        extrapolation: Drude parameters for ω < omega_min, or None
        xi: Imaginary frequency (scalar or array), rad/s
        rtol: Relative quadrature tolerance

    Returns:
        ε(iξ) with the shape of xi
    """
    x = np.atleast_1d(_positive_array(xi, "xi")).astype(float)
    middle, middle_bound = _table_segment(table, x, rtol)
    high = _omega_cubed_tail(table, x)

    if extrapolation is not None:
        low = _drude_low_segment(extrapolation, table.omega_min, x)
    else:
        low, slope = _power_tail_below(table, x)
        rest = middle + high
        significant = low > np.maximum(rtol * rest, middle_bound)
        if slope <= 0 and np.any(significant):
            worst = int(np.argmax(np.where(significant, low, -np.inf)))
            raise UncoveredTailError(
                f"uncovered low-frequency tail below {table.omega_min:.4g} rad/s at xi={x[worst]:.4g} rad/s; "
                "supply a Drude extrapolation",
                estimate=float(1.0 + 2.0 / math.pi * (rest[worst] + low[worst])),
                error_bound=float(2.0 / math.pi * low[worst]),
            )
        if not np.all(np.isfinite(low)):
            raise UncoveredTailError(
                "uncovered low-frequency tail: table diverges faster than 1/omega^2",
                estimate=float("inf"),
                error_bound=float("inf"),
            )

    result = 1.0 + (2.0 / math.pi) * (low + middle + high)
    return float(result[0]) if np.ndim(xi) == 0 else result


def doped_si_eps(base: "PermittivityModel", d: DrudeParams, xi):
    """ε̃(iξ) + ω_p²/[ξ(ξ+γ)]"""
    x = _positive_array(xi, "xi")
    result = np.asarray(base(x), dtype=float) + d.omega_p**2 / (x * (x + d.gamma))
    return _as_output(result, xi)


class PermittivityModel:
    """Dielectric permittivity ε(iξ) of one material"""

    kind = "abstract"
    needs_grid = False

    def __init__(self, name: str = "", approximate: Optional[str] = None):
        self.name = name or self.kind
        self.approximate = approximate
        self._grid: Optional["GriddedPermittivity"] = None

    def __call__(self, xi):
        x = _positive_array(xi, "xi")
        return _as_output(np.asarray(self._evaluate(np.atleast_1d(x)), dtype=float).reshape(x.shape), xi)

    def _evaluate(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> Dict[str, Any]:
        """JSON-friendly description, also used as cache key"""
        return {"kind": self.kind, "name": self.name}

    def static_limit(self) -> float:
        return float(self(1e6))

    def gridded(self, cache: Optional[CacheManager] = None) -> "PermittivityModel":
        """Model to use inside integrands (grid-interpolated when expensive)"""
        if not self.needs_grid:
            return self
        if self._grid is None:
            self._grid = GriddedPermittivity.build(self, cache)
        return self._grid

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class VacuumModel(PermittivityModel):
    """ε ≡ 1"""

    kind = "vacuum"

    def _evaluate(self, xi):
        return np.ones_like(xi)


class IdealMetalModel(PermittivityModel):
    """Perfect reflector, ε = ∞"""

    kind = "ideal-metal"

    def _evaluate(self, xi):
        return np.full_like(xi, np.inf)

    def static_limit(self) -> float:
        return float("inf")


class DrudeModel(PermittivityModel):
    kind = "drude"

    def __init__(self, params: DrudeParams, name: str = ""):
        super().__init__(name)
        self.params = params

    def _evaluate(self, xi):
        return drude_eps_imag_axis(self.params, xi)

    def describe(self):
        return {**super().describe(), "omega_p": self.params.omega_p, "gamma": self.params.gamma}

    def static_limit(self) -> float:
        return float("inf")


@dataclass(frozen=True)
class Oscillator:
    """Lorentz term f ω₀²/(ω₀² + ξ² + Γξ), frequencies in rad/s"""

    strength: float
    omega_0: float
    damping: float = 0.0


class OscillatorModel(PermittivityModel):
    """Sum of Lorentz oscillators on the imaginary axis"""

    kind = "analytic-oscillator"

    def __init__(self, oscillators: Sequence[Oscillator], name: str = "", approximate: Optional[str] = None):
        super().__init__(name, approximate)
        for osc in oscillators:
            if osc.strength < 0 or osc.omega_0 <= 0 or osc.damping < 0:
                raise DomainError(f"invalid oscillator {osc}")
        self.oscillators = tuple(oscillators)

    def _evaluate(self, xi):
        eps = np.ones_like(xi)
        for osc in self.oscillators:
            eps = eps + osc.strength * osc.omega_0**2 / (osc.omega_0**2 + xi**2 + osc.damping * xi)
        return eps

    def static_limit(self) -> float:
        return 1.0 + sum(osc.strength for osc in self.oscillators)

    def describe(self):
        return {
            **super().describe(),
            "oscillators": [[o.strength, o.omega_0, o.damping] for o in self.oscillators],
        }


class TabulatedModel(PermittivityModel):
    """Kramers-Kronig transform of an optical table"""

    kind = "tabulated+extrapolation"
    needs_grid = True

    def __init__(self, table: OpticalDataTable, extrapolation: Optional[DrudeParams] = None, name: str = ""):
        super().__init__(name)
        self.table = table
        self.extrapolation = extrapolation

    def _evaluate(self, xi):
        return kramers_kronig(self.table, self.extrapolation, xi)

    def describe(self):
        desc = {**super().describe(), "omega": self.table.omega, "im_eps": self.table.im_eps}
        if self.extrapolation is not None:
            desc["extrapolation"] = [self.extrapolation.omega_p, self.extrapolation.gamma]
        return desc


class CompositeModel(PermittivityModel):
    """Base permittivity plus a Drude free-carrier term"""

    kind = "composite-sum"

    def __init__(self, base: PermittivityModel, drude: DrudeParams, name: str = ""):
        super().__init__(name, base.approximate)
        self.base = base
        self.drude = drude
        self.needs_grid = base.needs_grid

    def _evaluate(self, xi):
        return doped_si_eps(self.base, self.drude, xi)

    def describe(self):
        return {
            **super().describe(),
            "base": self.base.describe(),
            "drude": [self.drude.omega_p, self.drude.gamma],
        }

    def static_limit(self) -> float:
        return float("inf")


class GriddedPermittivity(PermittivityModel):
    """ε sampled on a log ξ grid; monotone cubic in log ξ - log ε"""

    def __init__(self, source: PermittivityModel, xi_grid: np.ndarray, eps_grid: np.ndarray):
        super().__init__(source.name, source.approximate)
        self.kind = source.kind
        self.source = source
        self.xi_grid = xi_grid
        self.eps_grid = eps_grid
        u = np.log(self.xi_grid)
        v = np.log(self.eps_grid)
        self._interp = PchipInterpolator(u, v, extrapolate=False)
        self._u_range = (u[0], u[-1])
        self._slopes = (
            min(0.0, (v[1] - v[0]) / (u[1] - u[0])),
            min(0.0, (v[-1] - v[-2]) / (u[-1] - u[-2])),
        )
        self._ends = (v[0], v[-1])

    @classmethod
    def build(cls, model: PermittivityModel, cache: Optional[CacheManager] = None) -> "GriddedPermittivity":
        decades = math.log10(GRID_XI_MAX / GRID_XI_MIN)
        count = int(round(decades * GRID_POINTS_PER_DECADE)) + 1
        xi = np.logspace(math.log10(GRID_XI_MIN), math.log10(GRID_XI_MAX), count)
        key = fingerprint({"model": model.describe(), "grid": [GRID_XI_MIN, GRID_XI_MAX, count]})
        loaded = cache.load_grid(key) if cache is not None else None
        if loaded is not None and np.allclose(loaded[0], xi, rtol=1e-12):
            eps = loaded[1]
        else:
            logging.info("Building permittivity grid for %s (%d points)", model.name, count)
            eps = np.asarray(model(xi), dtype=float)
            if cache is not None:
                cache.save_grid(key, xi, eps)
        if np.any(eps < 1.0 - 1e-12) or np.any(~np.isfinite(eps)):
            raise ValidationError(f"model {model.name} produced eps < 1 or non-finite values")
        eps = np.maximum(eps, 1.0)
        if np.any(np.diff(eps) > 1e-9 * eps[1:]):
            logging.warning("Permittivity of %s is not monotone on the grid", model.name)
        return cls(source=model, xi_grid=xi, eps_grid=eps)

    def _evaluate(self, xi):
        u = np.log(xi)
        v = self._interp(u)
        below = u < self._u_range[0]
        above = u > self._u_range[1]
        v = np.where(below, self._ends[0] + self._slopes[0] * (u - self._u_range[0]), v)
        v = np.where(above, np.maximum(self._ends[1] + self._slopes[1] * (u - self._u_range[1]), 0.0), v)
        return np.exp(v)

    def describe(self):
        return self.source.describe()

    def static_limit(self) -> float:
        return self.source.static_limit()

    def gridded(self, cache=None):
        return self


def permittivity_table(model: PermittivityModel, xi: np.ndarray) -> List[Tuple[float, float]]:
    """(ξ, ε) rows for report output"""
    values = np.asarray(model(np.asarray(xi, dtype=float)), dtype=float)
    return [(float(x), float(e)) for x, e in zip(xi, values)]
