"""
afm2lifshitz.afm2lifshitz_materials - Material catalogue and model specs

Built-in permittivity models for the sphere and plate materials and the
builder that turns JSON material specs from the configuration file into
PermittivityModel instances.
"""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

import numpy as np

from .afm2lifshitz_dielectric import (
    CarrierParams,
    CompositeModel,
    DrudeModel,
    DrudeParams,
    IdealMetalModel,
    OpticalDataTable,
    Oscillator,
    OscillatorModel,
    PermittivityModel,
    TabulatedModel,
    VacuumModel,
    drude_from_carriers,
    drude_im_eps,
)
from .afm2lifshitz_utils import EV_TO_RAD_S, ValidationError

# Au free-electron parameters used for the extrapolation below optical tables
GOLD_DRUDE_EV = (9.0, 0.035)

# Interband Lorentz terms of Au (f, Γ in eV, ω₀ in eV) over the reference plasma energy
GOLD_INTERBAND_PLASMA_EV = 9.03
GOLD_INTERBAND_EV = (
    (0.024, 0.241, 0.415),
    (0.010, 0.345, 0.830),
    (0.071, 0.870, 2.969),
    (0.601, 2.494, 4.304),
    (4.384, 2.214, 13.32),
)

# Synthesized Au table range and density
GOLD_TABLE_EV = (0.125, 1.0e4)
GOLD_TABLE_POINTS_PER_DECADE = 120

# Single-oscillator high-resistivity Si, ε(0) = 11.67
SI_OSCILLATOR = Oscillator(strength=10.67, omega_0=6.6e15, damping=0.0)
SI_APPROXIMATE = "approximate (≈10% force error)"

# Free carriers of the B-doped plate
DOPED_SI_CARRIERS = CarrierParams(n_carriers=3.0e25, m_eff_ratio=0.206, resistivity=3.5e-5)


def drude_params_ev(omega_p_ev: float, gamma_ev: float) -> DrudeParams:
    return DrudeParams(omega_p_ev * EV_TO_RAD_S, gamma_ev * EV_TO_RAD_S)


def gold_interband_oscillators():
    wp2 = GOLD_INTERBAND_PLASMA_EV**2
    return [
        Oscillator(strength=f * wp2 / w0**2, omega_0=w0 * EV_TO_RAD_S, damping=g * EV_TO_RAD_S)
        for f, g, w0 in GOLD_INTERBAND_EV
    ]


def interband_im_eps(oscillators, omega) -> np.ndarray:
    """Im ε of a sum of Lorentz terms on the real axis"""
    w = np.asarray(omega, dtype=float)
    total = np.zeros_like(w)
    for osc in oscillators:
        w02 = osc.omega_0**2
        total += osc.strength * w02 * osc.damping * w / ((w02 - w**2) ** 2 + (osc.damping * w) ** 2)
    return total


def gold_optical_table() -> OpticalDataTable:
    """Au optical table synthesized from free-electron and interband terms"""
    lo, hi = GOLD_TABLE_EV
    count = int(round(np.log10(hi / lo) * GOLD_TABLE_POINTS_PER_DECADE)) + 1
    omega = np.logspace(np.log10(lo), np.log10(hi), count) * EV_TO_RAD_S
    drude = drude_params_ev(*GOLD_DRUDE_EV)
    im_eps = drude_im_eps(drude, omega) + interband_im_eps(gold_interband_oscillators(), omega)
    return OpticalDataTable(omega, im_eps, source="builtin:gold")


def gold(omega_p_factor: float = 1.0) -> PermittivityModel:
    drude = drude_params_ev(*GOLD_DRUDE_EV)
    table = gold_optical_table()
    if omega_p_factor != 1.0:
        drude = drude.scaled(omega_p_factor)
        # free-electron part of the table follows ω_p²
        free = drude_im_eps(drude_params_ev(*GOLD_DRUDE_EV), table.omega)
        table = OpticalDataTable(
            table.omega, table.im_eps + free * (omega_p_factor**2 - 1.0), f"{table.source}*{omega_p_factor:g}"
        )
    return TabulatedModel(table, drude, name="gold")


def gold_drude(omega_p_factor: float = 1.0) -> PermittivityModel:
    return DrudeModel(drude_params_ev(*GOLD_DRUDE_EV).scaled(omega_p_factor), name="gold_drude")


def dielectric_si() -> PermittivityModel:
    logging.debug("Using single-oscillator Si model: %s", SI_APPROXIMATE)
    return OscillatorModel([SI_OSCILLATOR], name="dielectric_si", approximate=SI_APPROXIMATE)


def doped_si(base: Optional[PermittivityModel] = None) -> PermittivityModel:
    return CompositeModel(base or dielectric_si(), drude_from_carriers(DOPED_SI_CARRIERS), name="doped_si")


BUILTIN_MATERIALS: Dict[str, Callable[[], PermittivityModel]] = {
    "vacuum": lambda: VacuumModel(name="vacuum"),
    "ideal_metal": lambda: IdealMetalModel(name="ideal_metal"),
    "gold": gold,
    "gold_drude": gold_drude,
    "dielectric_si": dielectric_si,
    "doped_si": doped_si,
}


def builtin_material(name: str) -> PermittivityModel:
    try:
        factory = BUILTIN_MATERIALS[name]
    except KeyError:
        raise ValidationError(
            f"unknown built-in material '{name}' (available: {', '.join(sorted(BUILTIN_MATERIALS))})"
        )
    return factory()


def _number(spec: Dict[str, Any], key: str, context: str) -> float:
    if key not in spec:
        raise ValidationError(f"material {context}: missing '{key}'")
    value = spec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"material {context}: '{key}' must be a number, got {value!r}")
    return float(value)


def _drude_from_spec(spec: Dict[str, Any], context: str) -> DrudeParams:
    if "omega_p_eV" in spec:
        return drude_params_ev(_number(spec, "omega_p_eV", context), _number(spec, "gamma_eV", context))
    if "omega_p" in spec:
        return DrudeParams(_number(spec, "omega_p", context), _number(spec, "gamma", context))
    if "n_m3" in spec:
        return drude_from_carriers(
            CarrierParams(
                _number(spec, "n_m3", context),
                _number(spec, "m_eff_ratio", context),
                _number(spec, "resistivity_ohm_m", context),
            )
        )
    raise ValidationError(f"material {context}: Drude spec needs omega_p_eV/gamma_eV, omega_p/gamma or n_m3")


def build_model(
    spec: Union[str, Dict[str, Any]],
    base_dir: Optional[Path] = None,
    name: str = "",
    omega_p_factor: float = 1.0,
) -> PermittivityModel:
    """Build a permittivity model from a JSON material spec

    Args:
        spec: Built-in name or dict with a 'kind' key
        base_dir: Directory relative table paths are resolved against
        name: Name given to the model (defaults to the spec kind)
        omega_p_factor: Plasma frequency scale applied to Drude parts

    Returns:
        PermittivityModel
    """
    if isinstance(spec, str):
        spec = {"kind": "builtin", "name": spec}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValidationError(f"material {name or '?'}: spec must be a name or an object with 'kind'")

    kind = spec["kind"]
    context = name or kind

    if kind == "builtin":
        material = spec.get("name")
        if omega_p_factor != 1.0 and material in ("gold", "gold_drude"):
            return BUILTIN_MATERIALS[material](omega_p_factor)
        if omega_p_factor != 1.0 and material == "doped_si":
            return CompositeModel(
                dielectric_si(), drude_from_carriers(DOPED_SI_CARRIERS).scaled(omega_p_factor), name="doped_si"
            )
        return builtin_material(material)
    if kind == "vacuum":
        return VacuumModel(name=context)
    if kind == "ideal-metal":
        return IdealMetalModel(name=context)
    if kind == "drude":
        return DrudeModel(_drude_from_spec(spec, context).scaled(omega_p_factor), name=context)
    if kind == "oscillator":
        terms = spec.get("oscillators")
        if not terms:
            raise ValidationError(f"material {context}: 'oscillators' must be a non-empty list")
        oscillators = []
        for term in terms:
            if "omega_0_eV" in term:
                oscillators.append(
                    Oscillator(
                        _number(term, "strength", context),
                        _number(term, "omega_0_eV", context) * EV_TO_RAD_S,
                        float(term.get("damping_eV", 0.0)) * EV_TO_RAD_S,
                    )
                )
            else:
                oscillators.append(
                    Oscillator(
                        _number(term, "strength", context),
                        _number(term, "omega_0", context),
                        float(term.get("damping", 0.0)),
                    )
                )
        return OscillatorModel(oscillators, name=context, approximate=spec.get("approximate"))
    if kind == "tabulated":
        from .afm2lifshitz_parser import DataParser

        table_path = Path(spec.get("table", ""))
        if not table_path.is_absolute() and base_dir is not None:
            table_path = Path(base_dir) / table_path
        table = DataParser.read_optical_table(table_path)
        drude = _drude_from_spec(spec["drude"], context).scaled(omega_p_factor) if "drude" in spec else None
        return TabulatedModel(table, drude, name=context)
    if kind in ("composite", "doped-si"):
        base_spec = spec.get("base", "dielectric_si")
        base = build_model(base_spec, base_dir, name=f"{context}.base")
        drude_spec = spec.get("drude") or spec.get("carriers")
        drude = _drude_from_spec(drude_spec, context) if drude_spec else drude_from_carriers(DOPED_SI_CARRIERS)
        return CompositeModel(base, drude.scaled(omega_p_factor), name=context)

    raise ValidationError(
        f"material {context}: unknown kind '{kind}' "
        "(vacuum, ideal-metal, drude, oscillator, tabulated, composite, doped-si, builtin)"
    )
