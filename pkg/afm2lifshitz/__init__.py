"""
afm2lifshitz - Casimir force theory and AFM data comparison

Zero-temperature Lifshitz force between a gold sphere and a silicon plate
with Kramers-Kronig permittivities and roughness corrections, electrostatic
calibration fits, and the statistical comparison of theory against measured
force-distance campaigns.
"""

__version__ = "1.0.0"
__author__ = "afm2lifshitz developers"
__license__ = "GPL-3.0"

from .afm2lifshitz_args import ArgumentParser
from .afm2lifshitz_config import ConfigManager
from .afm2lifshitz_parser import DataParser
from .afm2lifshitz_report import ReportGenerator
from .afm2lifshitz_utils import (
    CacheManager,
    DomainError,
    FitError,
    QuadratureError,
    SeriesConvergenceError,
    UncoveredTailError,
    UnitUtils,
    UnsupportedCoefficientError,
    ValidationError,
)
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
    drude_eps_imag_axis,
    drude_from_carriers,
    drude_im_eps,
    kramers_kronig,
    plasma_frequency,
    relaxation_parameter,
)
from .afm2lifshitz_materials import build_model, builtin_material
from .afm2lifshitz_lifshitz import (
    ForceCurve,
    ForceCurveError,
    SpherePlateGeometry,
    casimir_force,
    drude_sensitivity,
    force_curve,
    ideal_metal_force,
    reflection_coefficients,
)
from .afm2lifshitz_roughness import (
    RoughnessError,
    TopographyHistogram,
    additive_corrected_force,
    multiplicative_corrected_force,
    stochastic_variance,
    zero_level,
)
from .afm2lifshitz_calibration import (
    SeparationModel,
    exact_electrostatic_force,
    fit_contact_separation,
    fit_deflection_coefficient,
    fit_voltage_parabola,
    polynomial_electrostatic_force,
    reconstruct_separation,
)
from .afm2lifshitz_stats import (
    ForceCurveSet,
    align_to_grid,
    band_conformity,
    combine_systematic,
    confidence_band,
    mean_force,
    outlier_scan,
    random_error,
    smooth_variance,
    theory_error_budget,
    total_experimental_error,
    variance_of_mean,
)

__all__ = [
    "ArgumentParser",
    "ConfigManager",
    "DataParser",
    "ReportGenerator",
    "CacheManager",
    "UnitUtils",
    "DomainError",
    "FitError",
    "QuadratureError",
    "SeriesConvergenceError",
    "UncoveredTailError",
    "UnsupportedCoefficientError",
    "ValidationError",
    "CarrierParams",
    "CompositeModel",
    "DrudeModel",
    "DrudeParams",
    "IdealMetalModel",
    "OpticalDataTable",
    "Oscillator",
    "OscillatorModel",
    "PermittivityModel",
    "TabulatedModel",
    "VacuumModel",
    "drude_eps_imag_axis",
    "drude_from_carriers",
    "drude_im_eps",
    "kramers_kronig",
    "plasma_frequency",
    "relaxation_parameter",
    "build_model",
    "builtin_material",
    "ForceCurve",
    "ForceCurveError",
    "SpherePlateGeometry",
    "casimir_force",
    "drude_sensitivity",
    "force_curve",
    "ideal_metal_force",
    "reflection_coefficients",
    "RoughnessError",
    "TopographyHistogram",
    "additive_corrected_force",
    "multiplicative_corrected_force",
    "stochastic_variance",
    "zero_level",
    "SeparationModel",
    "exact_electrostatic_force",
    "fit_contact_separation",
    "fit_deflection_coefficient",
    "fit_voltage_parabola",
    "polynomial_electrostatic_force",
    "reconstruct_separation",
    "ForceCurveSet",
    "align_to_grid",
    "band_conformity",
    "combine_systematic",
    "confidence_band",
    "mean_force",
    "outlier_scan",
    "random_error",
    "smooth_variance",
    "theory_error_budget",
    "total_experimental_error",
    "variance_of_mean",
]
