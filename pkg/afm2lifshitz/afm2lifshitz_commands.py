"""
afm2lifshitz.afm2lifshitz_commands - Subcommand pipelines

Each subcommand validates its inputs, computes its results, and only then
writes reports. The report files of one run appear together or not at all.
Failures are wrapped in StageError so the log names the pipeline stage that
broke.
"""

import logging
import math
from contextlib import contextmanager
from dataclasses import asdict, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .afm2lifshitz_calibration import (
    MIN_CONTACT_SAMPLES,
    SeparationModel,
    contact_signal_per_volt2,
    fit_contact_separation,
    fit_deflection_coefficient,
    fit_piezo_polynomial,
    fit_voltage_parabola,
    fits_to_json,
    force_from_signal,
    reconstruct_separation,
    v0_independence,
)
from .afm2lifshitz_config import ConfigManager
from .afm2lifshitz_dielectric import PermittivityModel, permittivity_table
from .afm2lifshitz_lifshitz import SpherePlateGeometry, drude_sensitivity, force_curve
from .afm2lifshitz_materials import build_model
from .afm2lifshitz_parser import DataParser
from .afm2lifshitz_report import ReportGenerator
from .afm2lifshitz_roughness import (
    TopographyHistogram,
    additive_corrected_force,
    correction_table,
    roughness_summary,
    shifted_range,
)
from .afm2lifshitz_stats import (
    NORMALITY_MIN_SAMPLES,
    ConfidenceBand,
    ErrorBudget,
    ForceCurveSet,
    align_to_grid,
    band_conformity,
    confidence_band,
    consistency_verdicts,
    error_bar_subset,
    experimental_error_budget,
    make_grid,
    normality_check,
    outlier_scan,
    theory_error_budget,
)
from .afm2lifshitz_utils import NM, PN, UM, CacheManager, ValidationError

EXIT_ACCEPTED = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2

SENSITIVITY_POINTS = 5

# margin around the sampled range of the theory spline
_BASE_MARGIN = 0.01


class StageError(RuntimeError):
    """A pipeline stage failed"""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


@contextmanager
def stage(label: str):
    logging.debug("Stage: %s", label)
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(label, e) from e


class CommandRunner:
    """Runs the subcommands against the effective configuration"""

    def __init__(self, config_manager: ConfigManager, report: ReportGenerator):
        self.config = config_manager
        self.settings = config_manager.settings
        self.report = report
        self.cache: Optional[CacheManager] = None
        if self.settings["cache_dir"]:
            self.cache = CacheManager(self.config.resolve(self.settings["cache_dir"]))
        self.geometry = SpherePlateGeometry(
            self.settings["radius_um"] * UM, self.settings["radius_uncertainty_um"] * UM
        )
        self._models: Dict[str, PermittivityModel] = {}
        # 0 or null: one process per CPU
        self.workers: Optional[int] = self.settings["workers"] or None

    def run(self, command: str, args) -> int:
        handlers: Dict[str, Callable] = {
            "permittivity": cmd_permittivity,
            "force": cmd_force,
            "roughness": cmd_roughness,
            "calibrate": cmd_calibrate,
            "stats": cmd_stats,
            "compare": cmd_compare,
        }
        with self.report.staged():
            code = handlers[command](self, args)
        if self.cache is not None:
            logging.info("Permittivity grid cache: %d hits, %d misses", self.cache.hits, self.cache.misses)
        return code

    # Inputs

    def material(self, name: str, omega_p_factor: float = 1.0) -> PermittivityModel:
        materials = self.settings["materials"]
        if name not in materials:
            raise ValidationError(f"unknown material '{name}' (configured: {', '.join(sorted(materials))})")
        if omega_p_factor == 1.0 and name in self._models:
            return self._models[name]
        model = build_model(materials[name], self.config.base_dir, name=name, omega_p_factor=omega_p_factor)
        if model.approximate:
            logging.warning("Material %s uses an %s permittivity", name, model.approximate)
        if omega_p_factor == 1.0:
            self._models[name] = model
        return model

    def z_grid(self) -> np.ndarray:
        grid = self.config.get_grid()
        if "n" in grid:
            return np.linspace(grid["zmin_nm"], grid["zmax_nm"], grid["n"]) * NM
        return make_grid(grid["zmin_nm"] * NM, grid["zmax_nm"] * NM, grid["pitch_nm"] * NM)

    def xi_grid(self) -> np.ndarray:
        spec = self.settings["xi_grid"]
        return np.logspace(math.log10(float(spec["min"])), math.log10(float(spec["max"])), int(spec["n"]))

    def histograms(self) -> Tuple[TopographyHistogram, TopographyHistogram]:
        renormalize = self.settings["renormalize_histograms"]
        sphere = DataParser.load_histogram(self.settings["sphere_histogram"], self.config.base_dir, renormalize)
        plate = DataParser.load_histogram(self.settings["plate_histogram"], self.config.base_dir, renormalize)
        return sphere, plate

    def campaign(self) -> ForceCurveSet:
        paths = self.config.campaign_paths()
        if not paths:
            raise ValidationError("no 'campaign' files configured")
        with stage("ingestion"):
            raw = DataParser.read_campaign(paths)
        with stage("alignment"):
            fcs = align_to_grid(raw, self.z_grid())
        logging.info("Campaign: %d force curve sets on %d grid points", fcs.n, len(fcs))
        return fcs

    def variant(self, name: Optional[str]) -> Dict[str, Any]:
        if name is None:
            sphere, plate = self.settings["sphere"], self.settings["plate"]
            return {"name": f"{sphere}_{plate}", "sphere": sphere, "plate": plate, "experimental": True}
        for variant in self.settings["variants"]:
            if variant["name"] == name:
                return variant
        names = ", ".join(v["name"] for v in self.settings["variants"])
        raise ValidationError(f"unknown variant '{name}' (configured: {names})")

    # Theory

    def theory_base(self, eps1: PermittivityModel, eps2: PermittivityModel, z_lo: float, z_hi: float) -> Callable:
        """Lifshitz force spline over [z_lo, z_hi]"""
        z = np.geomspace(z_lo * (1 - _BASE_MARGIN), z_hi * (1 + _BASE_MARGIN), self.settings["theory_points"])
        curve = force_curve(self.geometry, eps1, eps2, z, workers=self.workers, cache=self.cache)
        return curve.interpolator()

    def corrected_theory(
        self, eps1: PermittivityModel, eps2: PermittivityModel, z: np.ndarray, t1, t2
    ) -> Tuple[np.ndarray, Callable]:
        """Roughness-corrected theory on z and the uncorrected base"""
        low, high = shifted_range(t1, t2, float(z.min()), float(z.max()))
        base = self.theory_base(eps1, eps2, min(low, float(z.min())), max(high, float(z.max())))
        corrected = np.array([additive_corrected_force(base, t1, t2, float(v)) for v in z])
        return corrected, base

    def error_budget(self, fcs: ForceCurveSet) -> ErrorBudget:
        s = self.settings
        budget = experimental_error_budget(
            fcs,
            [v * PN for v in s["systematic_errors_pN"]],
            beta=s["beta"],
            window=s["smoothing_window"],
            weights=s["smoothing_weights"],
            policy=s["total_error_policy"],
            paper_compat=s["paper_compat"],
            k_table=self.config.get_k_coefficients(),
        )
        theory = theory_error_budget(
            fcs.z_grid, self.geometry.radius, self.geometry.radius_uncertainty, s["dz_nm"] * NM, s["delta1"]
        )
        return replace(budget, theory=theory)


def cmd_permittivity(runner: CommandRunner, args) -> int:
    """ε(iξ) tables of the requested materials"""
    names = args.material or list(dict.fromkeys([runner.settings["sphere"], runner.settings["plate"]]))
    xi = runner.xi_grid()
    tables = {}
    with stage("permittivity"):
        for name in names:
            tables[name] = permittivity_table(runner.material(name), xi)
            logging.info("Permittivity %s: eps from %.6g to %.6g", name, tables[name][0][1], tables[name][-1][1])
    with stage("report"):
        for name, rows in tables.items():
            runner.report.write_csv(f"permittivity_{name}.csv", ("xi_rad_s", "eps"), rows)
    return EXIT_ACCEPTED


def cmd_force(runner: CommandRunner, args) -> int:
    """Lifshitz force curve, optionally with the Drude sensitivity check"""
    variant = runner.variant(getattr(args, "variant", None))
    z = runner.z_grid()
    with stage("permittivity"):
        eps1 = runner.material(variant["sphere"])
        eps2 = runner.material(variant["plate"])
    with stage("force"):
        curve = force_curve(
            runner.geometry,
            eps1,
            eps2,
            z,
            workers=runner.workers,
            cache=runner.cache,
            anchors=runner.settings["theory_points"],
        )

    changes = None
    if getattr(args, "sensitivity", False):
        z_check = np.linspace(z[0], z[-1], min(SENSITIVITY_POINTS, z.size))

        def models(scale: float):
            return (
                runner.material(variant["sphere"], omega_p_factor=scale).gridded(runner.cache),
                runner.material(variant["plate"], omega_p_factor=scale).gridded(runner.cache),
            )

        with stage("sensitivity"):
            changes = drude_sensitivity(runner.geometry, models, z_check)

    with stage("report"):
        runner.report.write_csv(
            f"force_{variant['name']}.csv",
            ("z_nm", "F_pN"),
            [(zi / NM, fi / PN) for zi, fi in curve.points()],
        )
        if changes is not None:
            runner.report.write_csv(
                f"drude_sensitivity_{variant['name']}.csv",
                ("z_nm", "change_percent"),
                [(zi / NM, 100 * c) for zi, c in zip(z_check, changes)],
            )
    return EXIT_ACCEPTED


def cmd_roughness(runner: CommandRunner, args) -> int:
    """Zero levels, stochastic variances and correction ratios on the grid"""
    z = runner.z_grid()
    with stage("ingestion"):
        t1, t2 = runner.histograms()
    with stage("permittivity"):
        eps1 = runner.material(runner.settings["sphere"])
        eps2 = runner.material(runner.settings["plate"])
    with stage("roughness"):
        low, high = shifted_range(t1, t2, float(z.min()), float(z.max()))
        base = runner.theory_base(eps1, eps2, min(low, float(z.min())), max(high, float(z.max())))
        rows = correction_table(base, t1, t2, z)
        summary = roughness_summary(t1, t2)
        summary["additive_ratio_range"] = [rows[0][1], rows[-1][1]]
        summary["multiplicative_ratio_range"] = [rows[0][2], rows[-1][2]]
        logging.info(
            "Roughness ratios at %.2f nm: additive %.5f, multiplicative %.5f",
            rows[0][0] / NM,
            rows[0][1],
            rows[0][2],
        )
    with stage("report"):
        runner.report.write_csv(
            "roughness.csv",
            ("z_nm", "ratio_additive", "ratio_multiplicative"),
            [(zi / NM, a, m) for zi, a, m in rows],
        )
        runner.report.write_json("roughness_summary.json", summary)
    return EXIT_ACCEPTED


def _group_parabolas(keys: np.ndarray, z_rel: np.ndarray, volts: np.ndarray, forces: np.ndarray):
    """Parabola fit per separation group, sorted by separation"""
    fits = []
    for key in np.unique(np.round(keys / NM, 3)):
        members = np.isclose(np.round(keys / NM, 3), key)
        fit = fit_voltage_parabola(list(zip(volts[members], forces[members])))
        fits.append((float(np.mean(z_rel[members])), fit))
    return sorted(fits, key=lambda item: item[0])


def cmd_calibrate(runner: CommandRunner, args) -> int:
    """V₀, z₀, m and piezo calibration from the configured sweeps"""
    s = runner.settings
    if not s["sweep"]:
        raise StageError("configuration", ValidationError("calibrate needs a 'sweep' file in the configuration"))
    base_model = SeparationModel.from_json(s["separation_model"])
    results: Dict[str, Any] = {}

    with stage("ingestion"):
        sweep = DataParser.read_sweep(runner.config.resolve(s["sweep"]))
        contacts = DataParser.read_contacts(runner.config.resolve(s["contacts"])) if s["contacts"] else None
        piezo = DataParser.read_piezo(runner.config.resolve(s["piezo"])) if s["piezo"] else None

    with stage("calibration"):
        if "F" in sweep:
            keys = z_rel = sweep["z"]
            forces = sweep["F"]
        else:
            keys = sweep["z_piezo"]
            z_rel = reconstruct_separation(sweep["z_piezo"], sweep["S_def"], replace(base_model, z0=0.0))
            forces = force_from_signal(sweep["S_def"], base_model)
        groups = _group_parabolas(keys, np.asarray(z_rel), sweep["V"], np.asarray(forces))
        fits = [fit for _, fit in groups]
        logging.info("Parabola fits at %d separations", len(fits))
        results["parabola_fits"] = [
            {"z_rel_nm": z / NM, **row} for (z, _), row in zip(groups, fits_to_json(fits))
        ]

        v0 = fits[0].v0
        if len(fits) >= 2:
            independence = v0_independence(fits)
            results["v0_independence"] = asdict(independence)
            v0 = independence.weighted_mean
        logging.info("Residual potential V0 = %.6f V", v0)

        z0 = base_model.z0
        if len(groups) >= MIN_CONTACT_SAMPLES:
            contact = fit_contact_separation([(z, fit.x) for z, fit in groups], runner.geometry.radius)
            results["contact_fit"] = asdict(contact)
            z0 = contact.z0
        else:
            logging.warning(
                "Only %d separations in the sweep, contact separation fit needs %d; keeping z0=%.2f nm",
                len(groups),
                MIN_CONTACT_SAMPLES,
                z0 / NM,
            )

        m_nm = base_model.m_nm
        if contacts is not None:
            per_volt2 = contact_signal_per_volt2(runner.geometry.radius, z0, base_model.force_calibration)
            deflection = fit_deflection_coefficient(contacts, per_volt2, v0)
            results["deflection_fit"] = asdict(deflection)
            m_nm = deflection.m_nm

        if piezo is not None:
            calibration = fit_piezo_polynomial(*piezo)
            results["piezo"] = fits_to_json([calibration])[0]

        model = SeparationModel(m_nm=m_nm, z0=z0, v0=v0, force_calibration=base_model.force_calibration)
        results["separation_model"] = model.to_json()

    with stage("report"):
        runner.report.write_csv(
            "parabola_fits.csv",
            ("z_rel_nm", "V0_volt", "V0_stderr_volt", "X_N_per_V2", "X_stderr_N_per_V2"),
            [(z / NM, f.v0, f.v0_stderr, f.x, f.x_stderr) for z, f in groups],
        )
        runner.report.write_json("calibration.json", results)
    return EXIT_ACCEPTED


def _normality(fcs: ForceCurveSet, method: str) -> List[Dict[str, Any]]:
    if fcs.n < NORMALITY_MIN_SAMPLES:
        logging.info("Normality check skipped: %d sets, needs %d", fcs.n, NORMALITY_MIN_SAMPLES)
        return []
    checks = []
    for index in sorted({0, len(fcs) // 2, len(fcs) - 1}):
        result = normality_check(fcs.forces[:, index], method)
        if not result.normal:
            logging.warning("Normality rejected at z=%.2f nm: %s", fcs.z_grid[index] / NM, result.reason)
        checks.append({"z_nm": fcs.z_grid[index] / NM, **asdict(result)})
    return checks


def _statistics(runner: CommandRunner) -> Tuple[ForceCurveSet, ErrorBudget, Dict[str, Any]]:
    fcs = runner.campaign()
    with stage("statistics"):
        scan = outlier_scan(fcs, runner.settings["outlier_beta"])
        checks = _normality(fcs, runner.settings["normality_method"])
        budget = runner.error_budget(fcs)
    extra = {
        "sets": fcs.n,
        "outliers": {
            "beta": scan.beta,
            "critical": scan.critical,
            "max_statistic": float(scan.statistic.max()),
            "z_nm": (fcs.z_grid[scan.outliers] / NM).tolist(),
        },
        "normality": checks,
    }
    return fcs, budget, extra


def cmd_stats(runner: CommandRunner, args) -> int:
    """Outliers, normality and the error budget of the measured campaign"""
    fcs, budget, extra = _statistics(runner)
    subset = error_bar_subset(len(fcs), runner.settings["error_bar_step"])
    with stage("report"):
        runner.report.write_csv(
            "mean_force.csv",
            ("z_nm", "F_mean_pN", "s_mean_pN", "s_smoothed_pN", "random_pN", "total_pN"),
            [
                (z / NM, f / PN, sm / PN, st / PN, r / PN, t / PN)
                for z, f, sm, st, r, t in zip(
                    budget.z, budget.mean_force, budget.s_mean, budget.s_smoothed, budget.random, budget.total
                )
            ],
        )
        runner.report.write_csv(
            "error_bars.csv",
            ("z_nm", "F_mean_pN", "total_pN"),
            [(budget.z[i] / NM, budget.mean_force[i] / PN, budget.total[i] / PN) for i in subset],
        )
        runner.report.write_json("error_budget.json", {**extra, **budget.to_json()})
    return EXIT_ACCEPTED


def _compare_variant(
    runner: CommandRunner, variant: Dict[str, Any], budget: ErrorBudget, histograms, window: np.ndarray
) -> Dict[str, Any]:
    with stage(f"permittivity:{variant['name']}"):
        eps1 = runner.material(variant["sphere"])
        eps2 = runner.material(variant["plate"])
    with stage(f"force:{variant['name']}"):
        theory, _ = runner.corrected_theory(eps1, eps2, budget.z, *histograms)
    with stage(f"comparison:{variant['name']}"):
        theory_abs = budget.theory.total * np.abs(theory)
        band = confidence_band(theory_abs, budget.total)
        diff = theory - budget.mean_force
        full = band_conformity(diff, band)
        conformity = band_conformity(diff[window], ConfidenceBand(band.xi95[window], band.xi70[window]))
        verdicts = dict(consistency_verdicts(conformity))
        logging.info(
            "Variant %s: %.1f%% inside the 95%% band, %.1f%% inside the 70%% band over %d points",
            variant["name"],
            100 * conformity.fraction95,
            100 * conformity.fraction70,
            int(window.sum()),
        )
    rows = [
        (z / NM, t / PN, e / PN, d / PN, x95 / PN, x70 / PN, i95, i70)
        for z, t, e, d, x95, x70, i95, i70 in zip(
            budget.z, theory, budget.mean_force, diff, band.xi95, band.xi70, full.inside95, full.inside70
        )
    ]
    return {
        "name": variant["name"],
        "sphere": variant["sphere"],
        "plate": variant["plate"],
        "experimental": bool(variant.get("experimental", False)),
        "fraction95": conformity.fraction95,
        "fraction70": conformity.fraction70,
        "consistent95": verdicts["95"],
        "consistent70": verdicts["70"],
        "rows": rows,
    }


def cmd_compare(runner: CommandRunner, args) -> int:
    """Band comparison of every configured variant against the campaign"""
    fcs, budget, extra = _statistics(runner)
    with stage("ingestion"):
        histograms = runner.histograms()
    low, high = (v * NM for v in runner.settings["comparison_window_nm"])
    window = (budget.z >= low) & (budget.z <= high)
    if not window.any():
        raise StageError(
            "comparison", ValidationError(f"comparison window [{low / NM:g}, {high / NM:g}] nm holds no grid points")
        )

    outcomes = [_compare_variant(runner, v, budget, histograms, window) for v in runner.settings["variants"]]

    rejected = [o["name"] for o in outcomes if not o["consistent70"]]
    failing = [o["name"] for o in outcomes if o["experimental"] and not o["consistent95"]]
    for name in rejected:
        logging.warning("Variant %s rejected by the data at 70%% confidence", name)
    for name in failing:
        logging.warning("Experimental variant %s is not consistent at 95%% confidence", name)
    code = EXIT_REJECTED if rejected or failing else EXIT_ACCEPTED

    with stage("report"):
        for outcome in outcomes:
            runner.report.write_csv(
                f"compare_{outcome['name']}.csv",
                ("z_nm", "F_theor_pN", "F_expt_pN", "diff_pN", "xi95_pN", "xi70_pN", "inside95", "inside70"),
                outcome["rows"],
            )
        runner.report.write_json("error_budget.json", {**extra, **budget.to_json()})
        runner.report.write_json(
            "compare_summary.json",
            {
                "window_nm": runner.settings["comparison_window_nm"],
                "points": int(window.sum()),
                "variants": [{k: v for k, v in o.items() if k != "rows"} for o in outcomes],
                "exit_code": code,
            },
        )
    return code
