import logging
import math

import numpy as np
import pytest

from afm2lifshitz.afm2lifshitz_calibration import (
    ParabolaFit,
    SeparationModel,
    contact_signal_per_volt2,
    electrostatic_basis,
    exact_electrostatic_force,
    fit_contact_separation,
    fit_deflection_coefficient,
    fit_piezo_polynomial,
    fit_voltage_parabola,
    force_from_signal,
    locate_contact,
    polynomial_electrostatic_force,
    reconstruct_separation,
    v0_independence,
)
from afm2lifshitz.afm2lifshitz_utils import EPS0, NM, UM, DomainError, FitError, SeriesConvergenceError

RADIUS = 101.3 * UM
V0 = -0.114


class TestElectrostaticForce:
    @pytest.mark.parametrize("ratio", [0.006, 0.01, 0.03, 0.055])
    def test_polynomial_matches_exact_series(self, ratio):
        z = ratio * RADIUS
        exact = exact_electrostatic_force(RADIUS, z, 0.3, V0)
        poly = polynomial_electrostatic_force(RADIUS, z, 0.3, V0)
        assert poly == pytest.approx(exact, rel=2e-3)

    def test_proximity_limit(self):
        z = 0.006 * RADIUS
        force = exact_electrostatic_force(RADIUS, z, 1.0, 0.0)
        assert force == pytest.approx(-math.pi * EPS0 * RADIUS / z, rel=0.02)
        assert force < 0

    def test_quadratic_in_voltage(self):
        z = 1 * UM
        one = exact_electrostatic_force(RADIUS, z, V0 + 0.1, V0)
        three = exact_electrostatic_force(RADIUS, z, V0 - 0.3, V0)
        assert three == pytest.approx(9 * one, rel=1e-12)

    def test_vanishes_at_residual_potential(self):
        assert exact_electrostatic_force(RADIUS, 1 * UM, V0, V0) == 0.0

    def test_truncated_series_is_rejected(self):
        with pytest.raises(SeriesConvergenceError) as excinfo:
            exact_electrostatic_force(RADIUS, 0.006 * RADIUS, 1.0, 0.0, n_terms=5)
        assert excinfo.value.tail_estimate > 0

    @pytest.mark.parametrize("radius,z", [(RADIUS, 0.0), (0.0, 1e-6)])
    def test_domain(self, radius, z):
        with pytest.raises(DomainError):
            exact_electrostatic_force(radius, z, 1.0, 0.0)

    def test_basis_warns_outside_validity_range(self, caplog):
        with caplog.at_level(logging.WARNING):
            electrostatic_basis(RADIUS, 0.1 * RADIUS)
        assert "validity range" in caplog.text


class TestSeparation:
    def test_reconstruct(self):
        model = SeparationModel(m_nm=40.0, z0=30 * NM)
        z = reconstruct_separation(np.array([100.0, 200.0]) * NM, np.array([0.5, 0.0]), model)
        np.testing.assert_allclose(z, np.array([150.0, 230.0]) * NM)
        assert isinstance(reconstruct_separation(0.0, 0.0, model), float)

    def test_zero_parameters_are_allowed(self):
        model = SeparationModel(m_nm=0.0, z0=0.0)
        assert reconstruct_separation(1e-7, 3.0, model) == pytest.approx(1e-7)

    def test_force_from_signal(self):
        model = SeparationModel(force_calibration=2e-9)
        assert force_from_signal(0.25, model) == pytest.approx(5e-10)

    def test_json_keys(self):
        data = SeparationModel().to_json()
        assert data == pytest.approx(
            {"m_nm_per_unit": 43.3, "z0_nm": 32.1, "v0_volt": -0.114, "force_calibration_nN_per_unit": 1.44}
        )
        restored = SeparationModel.from_json({"z0_nm": 10.0})
        assert restored.z0 == pytest.approx(10 * NM)
        assert restored.m_nm == 43.3

    @pytest.mark.parametrize("kwargs", [{"m_nm": -1.0}, {"z0": -1e-9}, {"force_calibration": 0.0}])
    def test_validation(self, kwargs):
        with pytest.raises(DomainError):
            SeparationModel(**kwargs)


def _parabola_samples(x, v0, volts, noise=0.0, rng=None):
    forces = x * (volts - v0) ** 2
    if noise:
        forces = forces + rng.normal(0.0, noise, volts.size)
    return np.column_stack((volts, forces))


class TestParabolaFit:
    def test_exact_recovery(self):
        volts = np.linspace(-0.6, 0.4, 11)
        fit = fit_voltage_parabola(_parabola_samples(-1.4e-8, V0, volts))
        assert fit.v0 == pytest.approx(V0, abs=1e-7)
        assert fit.x == pytest.approx(-1.4e-8, rel=1e-6)
        assert fit.n == 11

    def test_noisy_residual_potential(self):
        rng = np.random.default_rng(7)
        volts = np.linspace(-0.6, 0.4, 11)
        hits = 0
        for _ in range(100):
            fit = fit_voltage_parabola(_parabola_samples(-1.4e-8, V0, volts, noise=2e-12, rng=rng))
            hits += abs(fit.v0 - V0) < 0.002
            assert fit.v0_stderr > 0
        assert hits >= 90

    def test_degenerate_design(self):
        samples = [(0.1, -1e-10), (0.1, -1.1e-10), (0.2, -2e-10)]
        with pytest.raises(FitError):
            fit_voltage_parabola(samples)


def _contact_samples(z0, rng=None, noise=0.0, count=400):
    z_true = np.linspace(0.6, 1.5, count) * UM
    x = electrostatic_basis(RADIUS, z_true, warn=False)
    if noise:
        x = x + rng.normal(0.0, noise * abs(x[-1]), count)
    return np.column_stack((z_true - z0, x))


class TestContactFit:
    def test_exact_recovery(self):
        fit = fit_contact_separation(_contact_samples(32.1 * NM), RADIUS)
        assert fit.z0 == pytest.approx(32.1 * NM, abs=1e-2 * NM)
        assert fit.n == 400

    def test_noisy_recovery(self):
        rng = np.random.default_rng(11)
        hits = 0
        for _ in range(100):
            fit = fit_contact_separation(_contact_samples(32.1 * NM, rng, noise=2e-3), RADIUS)
            hits += abs(fit.z0 - 32.1 * NM) < 0.8 * NM
        assert hits >= 85

    def test_too_few_samples(self):
        with pytest.raises(FitError):
            fit_contact_separation(_contact_samples(32.1 * NM, count=5), RADIUS)

    def test_narrow_span(self):
        samples = _contact_samples(32.1 * NM)
        narrow = samples[samples[:, 0] < 0.9 * UM]
        with pytest.raises(FitError):
            fit_contact_separation(narrow, RADIUS)

    def test_repulsive_samples(self):
        samples = _contact_samples(32.1 * NM)
        samples[:, 1] *= -1
        with pytest.raises(FitError):
            fit_contact_separation(samples, RADIUS)


class TestDeflection:
    def test_recovers_coefficient(self):
        s = contact_signal_per_volt2(RADIUS, 30 * NM, 1.44e-9)
        assert s > 0
        volts = np.array([-1.0, -0.6, 0.3, 0.7, 1.0])
        z_contact = (500.0 - 43.3 * s * (volts - V0) ** 2) * NM
        fit = fit_deflection_coefficient(np.column_stack((volts, z_contact)), s, V0)
        assert fit.m_nm == pytest.approx(43.3, rel=1e-9)
        assert fit.intercept_nm == pytest.approx(500.0)
        assert fit.n == 5

    def test_collinear_design(self):
        with pytest.raises(FitError):
            fit_deflection_coefficient([(0.5, 1e-7), (0.5, 1.1e-7), (0.5, 1.2e-7)], 1.0, 0.0)

    def test_too_few_contacts(self):
        with pytest.raises(FitError):
            fit_deflection_coefficient([(0.5, 1e-7), (0.7, 1.1e-7)], 1.0, 0.0)


def test_locate_contact():
    z = np.array([0.0, 1.0, 2.0, 3.0])
    assert locate_contact(z, [0.0, 0.1, 0.5, 1.0], 0.3) == pytest.approx(1.5)
    assert locate_contact(z, [0.4, 0.5, 0.6, 0.7], 0.3) == 0.0
    with pytest.raises(FitError):
        locate_contact(z, [0.0, 0.0, 0.1, 0.2], 0.3)


def test_piezo_polynomial():
    volts = np.linspace(0, 100, 21)
    extension = 1e-9 * (3.0 + 2.0 * volts + 0.01 * volts**2)
    calibration = fit_piezo_polynomial(volts, extension, order=2)
    np.testing.assert_allclose(calibration.coefficients, [3e-9, 2e-9, 1e-11], rtol=1e-6, atol=1e-15)
    assert calibration(50.0) == pytest.approx(1e-9 * (3 + 100 + 25))
    with pytest.raises(FitError):
        fit_piezo_polynomial([1.0, 2.0], [1.0, 2.0], order=4)


class TestV0Independence:
    def _fit(self, v0, err):
        return ParabolaFit(v0=v0, x=-1e-8, v0_stderr=err, x_stderr=0.0, residual_rms=0.0, n=9)

    def test_consistent(self):
        result = v0_independence([self._fit(V0 + d, 1e-3) for d in (0.0, 5e-4, -5e-4, 2e-4)])
        assert not result.distance_dependent
        assert result.dof == 3
        assert result.weighted_mean == pytest.approx(V0 + 5e-5)

    def test_drifting(self, caplog):
        with caplog.at_level(logging.WARNING):
            result = v0_independence([self._fit(V0 + 0.01 * i, 1e-3) for i in range(5)])
        assert result.distance_dependent
        assert result.p_value < 0.05
        assert "varies with separation" in caplog.text

    def test_needs_two_fits(self):
        with pytest.raises(FitError):
            v0_independence([self._fit(V0, 1e-3)])
