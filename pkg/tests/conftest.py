"""Shared fixtures: measured tables, geometry and the Au / doped-Si pair"""

import pytest

from afm2lifshitz.afm2lifshitz_lifshitz import SpherePlateGeometry
from afm2lifshitz.afm2lifshitz_materials import doped_si, gold
from afm2lifshitz.afm2lifshitz_parser import DataParser
from afm2lifshitz.afm2lifshitz_utils import UM

# z (nm), F̄expt, Ftheor, F̃theor, Ftheor - F̄expt, Ξ95, F̃theor - F̄expt, Ξ70 (pN)
FORCE_TABLE = [
    (62.33, -380.0, -380.5, -374.4, -0.50, 15.2, 5.7, 7.6),
    (69.98, -280.9, -277.9, -272.9, 3.0, 10.4, 8.0, 5.2),
    (80.01, -196.4, -192.8, -188.9, 3.6, 7.1, 7.5, 3.55),
    (90.04, -140.4, -139.4, -136.3, 1.0, 5.4, 4.1, 2.7),
    (100.07, -106.2, -104.2, -101.7, 2.0, 4.5, 4.5, 2.25),
    (109.93, -80.30, -80.35, -78.23, -0.05, 4.1, 2.1, 2.05),
    (119.96, -62.90, -63.05, -61.26, -0.15, 3.9, 1.64, 1.95),
    (140.02, -40.98, -40.96, -39.64, 0.02, 3.8, 1.35, 1.9),
    (160.08, -26.93, -28.14, -27.11, -1.2, 3.7, -0.19, 1.8),
    (180.14, -19.70, -20.18, -19.36, -0.48, 3.7, 0.34, 1.8),
    (200.03, -14.71, -15.02, -14.35, -0.31, 3.7, 0.36, 1.8),
    (250.18, -7.132, -7.968, -7.539, -0.84, 3.7, -0.41, 1.8),
    (299.99, -5.221, -4.756, -4.455, 0.46, 3.7, 0.76, 1.8),
]

# z (nm), relative errors in %: random, systematic, total (expt); δ₀, δ₃, total (theory)
ERROR_TABLE = [
    (62.33, 0.78, 0.31, 0.87, 0.55, 3.8, 3.8),
    (69.98, 1.1, 0.42, 1.2, 0.56, 3.4, 3.4),
    (80.01, 1.6, 0.60, 1.7, 0.56, 2.9, 2.9),
    (90.04, 2.1, 0.84, 2.4, 0.56, 2.7, 2.7),
    (100.07, 2.9, 1.1, 3.1, 0.56, 2.4, 2.4),
    (109.93, 3.7, 1.4, 4.1, 0.56, 2.2, 2.2),
    (119.96, 4.7, 1.8, 5.3, 0.56, 2.0, 2.0),
    (140.02, 7.3, 2.8, 8.1, 0.57, 1.8, 1.9),
    (160.08, 10, 4.1, 12, 0.58, 1.5, 1.7),
    (180.14, 15, 5.7, 17, 0.58, 1.4, 1.6),
    (200.03, 20, 7.7, 22, 0.59, 1.2, 1.4),
    (250.18, 42, 16, 47, 0.61, 1.0, 1.3),
    (299.99, 57, 22, 64, 0.64, 0.9, 1.2),
]

SYSTEMATIC_ERRORS_PN = [0.82, 0.55, 0.31, 0.12]


@pytest.fixture
def force_table():
    return FORCE_TABLE


@pytest.fixture
def error_table():
    return ERROR_TABLE


@pytest.fixture
def sphere_histogram():
    return DataParser.load_histogram("au")


@pytest.fixture
def plate_histogram():
    return DataParser.load_histogram("si")


@pytest.fixture
def geometry():
    return SpherePlateGeometry(101.3 * UM, 0.15 * UM)


@pytest.fixture(scope="session")
def au_si_pair():
    """Gridded Au and doped-Si permittivities, built once per session"""
    return gold().gridded(), doped_si().gridded()


@pytest.fixture
def systematic_errors():
    """Systematic error components, pN"""
    return SYSTEMATIC_ERRORS_PN
