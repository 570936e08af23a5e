import logging
import math
import time

import numpy as np
import pytest

from afm2lifshitz.afm2lifshitz_dielectric import IdealMetalModel
from afm2lifshitz.afm2lifshitz_lifshitz import (
    ForceCurve,
    SpherePlateGeometry,
    casimir_force,
    drude_sensitivity,
    force_curve,
    ideal_metal_force,
    reflection_coefficients,
)
from afm2lifshitz.afm2lifshitz_materials import dielectric_si, gold_drude
from afm2lifshitz.afm2lifshitz_stats import make_grid
from afm2lifshitz.afm2lifshitz_utils import C_LIGHT, NM, PN, UM, DomainError


class TestReflection:
    def test_dielectric_values(self):
        k = 1e7
        r_par, r_perp = reflection_coefficients(2.0, C_LIGHT * k, k)
        assert r_par == pytest.approx((2 * math.sqrt(2) - math.sqrt(3)) / (2 * math.sqrt(2) + math.sqrt(3)))
        assert r_par == pytest.approx(0.2404, abs=1e-4)
        assert r_perp == pytest.approx((math.sqrt(2) - math.sqrt(3)) / (math.sqrt(2) + math.sqrt(3)))

    def test_vacuum_does_not_reflect(self):
        assert reflection_coefficients(1.0, 1e15, 3e6) == pytest.approx((0.0, 0.0))

    def test_ideal_metal(self):
        assert reflection_coefficients(math.inf, 1e15, 3e6) == (1.0, -1.0)

    def test_bounded_by_one(self):
        for eps in (1.5, 10.0, 1e6):
            for k in (0.0, 1e5, 1e9):
                r_par, r_perp = reflection_coefficients(eps, 1e15, k)
                assert 0 <= r_par < 1
                assert -1 < r_perp <= 0

    @pytest.mark.parametrize("eps,xi,k", [(0.5, 1e15, 1e6), (2.0, 0.0, 1e6), (2.0, 1e15, -1.0)])
    def test_domain(self, eps, xi, k):
        with pytest.raises(DomainError):
            reflection_coefficients(eps, xi, k)


class TestIdealMetal:
    def test_closed_form_value(self, geometry):
        assert ideal_metal_force(geometry, 100 * NM) / PN == pytest.approx(-275.8, rel=1e-3)

    def test_inverse_cube(self, geometry):
        z = np.array([50.0, 100.0, 200.0]) * NM
        forces = ideal_metal_force(geometry, z)
        assert forces[0] / forces[1] == pytest.approx(8.0)
        assert forces[1] / forces[2] == pytest.approx(8.0)

    def test_lifshitz_integral_reproduces_closed_form(self, geometry):
        metal = IdealMetalModel()
        force = casimir_force(geometry, metal, metal, 100 * NM)
        assert force == pytest.approx(ideal_metal_force(geometry, 100 * NM), rel=1e-4)

    @pytest.mark.parametrize("z_nm", [60.0, 150.0, 300.0])
    def test_closed_form_across_range(self, geometry, z_nm):
        metal = IdealMetalModel()
        force = casimir_force(geometry, metal, metal, z_nm * NM)
        assert force == pytest.approx(ideal_metal_force(geometry, z_nm * NM), rel=1e-3)


class TestCasimirForce:
    def test_drude_metal_weaker_than_ideal(self, geometry):
        metal = gold_drude()
        force = casimir_force(geometry, metal, metal, 100 * NM)
        assert ideal_metal_force(geometry, 100 * NM) < force < 0

    def test_decay_between_proximity_limits(self, geometry):
        metal = gold_drude()
        near = casimir_force(geometry, metal, metal, 100 * NM)
        far = casimir_force(geometry, metal, metal, 200 * NM)
        assert 4.0 < near / far < 8.0

    def test_linear_in_radius(self):
        metal = gold_drude()
        small = casimir_force(SpherePlateGeometry(50 * UM), metal, metal, 150 * NM)
        large = casimir_force(SpherePlateGeometry(100 * UM), metal, metal, 150 * NM)
        assert large == pytest.approx(2 * small, rel=1e-6)

    def test_full_output_bound(self, geometry):
        metal = gold_drude()
        force, bound = casimir_force(geometry, metal, metal, 120 * NM, full_output=True)
        assert 0 <= bound < 1e-3 * abs(force)

    def test_symmetric_in_the_two_bodies(self, geometry):
        metal, silicon = gold_drude(), dielectric_si()
        forward = casimir_force(geometry, metal, silicon, 90 * NM)
        backward = casimir_force(geometry, silicon, metal, 90 * NM)
        assert backward == pytest.approx(forward, rel=1e-12)

    def test_doubled_tolerance_within_bounds(self, geometry):
        metal, silicon = gold_drude(), dielectric_si()
        tight = casimir_force(geometry, metal, silicon, 100 * NM, rtol=1e-5)
        loose, loose_bound = casimir_force(geometry, metal, silicon, 100 * NM, rtol=2e-5, full_output=True)
        assert abs(loose - tight) <= loose_bound

    @pytest.mark.parametrize("z", [0.0, -1e-9])
    def test_rejects_non_positive_separation(self, geometry, z):
        with pytest.raises(DomainError):
            casimir_force(geometry, gold_drude(), gold_drude(), z)

    def test_geometry_validation(self):
        with pytest.raises(DomainError):
            SpherePlateGeometry(0.0)
        with pytest.raises(DomainError):
            SpherePlateGeometry(1e-4, -1e-7)

    def test_large_separation_warns(self, caplog):
        geom = SpherePlateGeometry(1 * UM)
        with caplog.at_level(logging.WARNING):
            assert not geom.check_separation(100 * NM)
        assert "proximity form" in caplog.text

    @pytest.mark.slow
    def test_gold_doped_silicon_magnitude(self, geometry, au_si_pair):
        gold, silicon = au_si_pair
        force = casimir_force(geometry, gold, silicon, 100.07 * NM)
        assert force / PN == pytest.approx(-104.2, rel=0.1)


class TestForceCurve:
    def test_matches_pointwise_evaluation(self, geometry):
        metal = gold_drude()
        z = np.array([80.0, 120.0, 200.0]) * NM
        curve = force_curve(geometry, metal, metal, z)
        assert len(curve) == 3
        for zi, fi in curve.points():
            assert fi == pytest.approx(casimir_force(geometry, metal, metal, zi), rel=1e-9)
        assert curve.is_monotone()

    def test_anchored_curve_matches_direct_evaluation(self, geometry):
        metal = gold_drude()
        z = np.linspace(60.0, 120.0, 30) * NM
        curve = force_curve(geometry, metal, metal, z, anchors=8)
        assert len(curve) == 30
        assert curve.is_monotone()
        assert np.all(curve.error_bound > 0)
        for index in (0, 7, 16, 29):
            direct = casimir_force(geometry, metal, metal, z[index])
            assert curve.force[index] == pytest.approx(direct, rel=1e-4)

    def test_short_grid_ignores_anchors(self, geometry):
        metal = gold_drude()
        z = np.array([80.0, 120.0, 200.0]) * NM
        curve = force_curve(geometry, metal, metal, z, anchors=40)
        assert curve.force[1] == pytest.approx(casimir_force(geometry, metal, metal, z[1]), rel=1e-12)

    @pytest.mark.slow
    def test_full_grid_within_a_minute(self, geometry, au_si_pair):
        gold, silicon = au_si_pair
        z = make_grid(62.33 * NM, 349.97 * NM, 0.17 * NM)
        assert z.size == 1693
        start = time.perf_counter()
        curve = force_curve(geometry, gold, silicon, z, anchors=40)
        assert time.perf_counter() - start < 60.0
        assert len(curve) == 1693
        assert curve.is_monotone()
        index = int(np.argmin(np.abs(z - 100.07 * NM)))
        assert curve.force[index] / PN == pytest.approx(-104.2, rel=0.1)

    @pytest.mark.parametrize("grid", [[], [100e-9, 90e-9], [0.0, 1e-7], [1e-7, 1e-7]])
    def test_rejects_bad_grids(self, geometry, grid):
        with pytest.raises(DomainError):
            force_curve(geometry, gold_drude(), gold_drude(), grid)

    def test_interpolator_is_exact_for_power_law(self, geometry):
        z = np.geomspace(60, 320, 8) * NM
        curve = ForceCurve(z, ideal_metal_force(geometry, z))
        force_at = curve.interpolator()
        between = np.array([73.0, 155.5, 301.0]) * NM
        np.testing.assert_allclose(force_at(between), ideal_metal_force(geometry, between), rtol=1e-10)
        assert isinstance(force_at(100 * NM), float)

    def test_interpolator_range_and_sign(self, geometry):
        z = np.geomspace(60, 320, 8) * NM
        force_at = ForceCurve(z, ideal_metal_force(geometry, z)).interpolator()
        with pytest.raises(DomainError):
            force_at(50 * NM)
        with pytest.raises(DomainError):
            ForceCurve(z, -ideal_metal_force(geometry, z)).interpolator()
        with pytest.raises(DomainError):
            ForceCurve(z[:3], ideal_metal_force(geometry, z[:3])).interpolator()

    def test_curve_validation(self):
        with pytest.raises(DomainError):
            ForceCurve(np.array([2.0, 1.0]), np.array([-1.0, -2.0]))
        with pytest.raises(DomainError):
            ForceCurve(np.array([1.0, 2.0]), np.array([-1.0]))


def test_drude_sensitivity_grows_force_with_plasma_frequency(geometry):
    def factory(scale):
        return gold_drude(scale), gold_drude(scale)

    changes = drude_sensitivity(geometry, factory, [100 * NM, 200 * NM], scale=1.5)
    assert changes.shape == (2,)
    assert np.all(changes > 0)
    assert np.all(changes < 0.2)
