"""
afm2lifshitz.afm2lifshitz_parser - CSV ingestion

Reads optical tables, topography histograms, force campaigns and
calibration sweeps from CSV files. Every validation failure names the file
and line it comes from. Lines starting with '#' and blank lines are skipped.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .afm2lifshitz_dielectric import OpticalDataTable
from .afm2lifshitz_roughness import TopographyHistogram
from .afm2lifshitz_utils import EV_TO_RAD_S, NM, PN, ValidationError

DATA_DIR = Path(__file__).parent / "data"

BUILTIN_HISTOGRAMS = {
    "au": DATA_DIR / "au_topography.csv",
    "si": DATA_DIR / "si_topography.csv",
}

PathLike = Union[str, Path]


class DataParser:
    """Validating readers for the CSV inputs"""

    @staticmethod
    def _rows(path: PathLike, required: Sequence[str]) -> Iterator[Tuple[int, Dict[str, float]]]:
        """Yield (line number, numeric row) for the required columns"""
        path = Path(path)
        if not path.exists():
            raise ValidationError("file not found", path)
        with open(path, "r", encoding="utf-8", newline="") as f:
            lines = (
                (i, line) for i, line in enumerate(f, start=1) if line.strip() and not line.lstrip().startswith("#")
            )
            header = None
            for line_no, line in lines:
                fields = next(csv.reader([line]))
                if header is None:
                    header = [h.strip() for h in fields]
                    missing = [c for c in required if c not in header]
                    if missing:
                        raise ValidationError(
                            f"missing column(s) {', '.join(missing)}; expected header {','.join(required)}",
                            path,
                            line_no,
                        )
                    continue
                if len(fields) != len(header):
                    raise ValidationError(f"expected {len(header)} fields, got {len(fields)}", path, line_no)
                row = {}
                for name, value in zip(header, fields):
                    if name not in required:
                        continue
                    try:
                        number = float(value)
                    except ValueError:
                        raise ValidationError(f"column {name}: not a number: {value.strip()!r}", path, line_no)
                    if not math.isfinite(number):
                        raise ValidationError(f"column {name}: not finite: {value.strip()!r}", path, line_no)
                    row[name] = number
                yield line_no, row
            if header is None:
                raise ValidationError(f"empty file, expected header {','.join(required)}", path)

    @staticmethod
    def _header(path: PathLike) -> List[str]:
        if not Path(path).exists():
            raise ValidationError("file not found", Path(path))
        with open(path, "r", encoding="utf-8", newline="") as f:
            for line in f:
                if line.strip() and not line.lstrip().startswith("#"):
                    return [h.strip() for h in next(csv.reader([line]))]
        raise ValidationError("empty file", Path(path))

    @classmethod
    def read_optical_table(cls, path: PathLike) -> OpticalDataTable:
        """omega_eV,n,kappa → Im ε = 2nκ over ω in rad/s"""
        omega, im_eps = [], []
        previous = 0.0
        for line_no, row in cls._rows(path, ("omega_eV", "n", "kappa")):
            if row["omega_eV"] <= previous:
                raise ValidationError("omega_eV must be positive and strictly increasing", Path(path), line_no)
            if row["n"] < 0 or row["kappa"] < 0:
                raise ValidationError("n and kappa must be >= 0", Path(path), line_no)
            previous = row["omega_eV"]
            omega.append(row["omega_eV"] * EV_TO_RAD_S)
            im_eps.append(2.0 * row["n"] * row["kappa"])
        if len(omega) < 2:
            raise ValidationError("optical table needs at least 2 rows", Path(path))
        logging.debug("Optical table %s: %d samples", path, len(omega))
        return OpticalDataTable(np.array(omega), np.array(im_eps), source=str(path))

    @classmethod
    def read_histogram(cls, path: PathLike, renormalize: bool = False) -> TopographyHistogram:
        """h_nm,v"""
        heights, fractions = [], []
        for line_no, row in cls._rows(path, ("h_nm", "v")):
            if row["h_nm"] < 0 or (heights and row["h_nm"] <= heights[-1]):
                raise ValidationError("h_nm must be non-negative and strictly increasing", Path(path), line_no)
            if row["v"] < 0:
                raise ValidationError("v must be >= 0", Path(path), line_no)
            heights.append(row["h_nm"])
            fractions.append(row["v"])
        if not heights:
            raise ValidationError("histogram has no bins", Path(path))
        try:
            return TopographyHistogram.from_nm(heights, fractions, name=Path(path).stem, renormalize=renormalize)
        except ValidationError as e:
            raise ValidationError(str(e), Path(path))

    @classmethod
    def load_histogram(
        cls, reference: str, base_dir: Optional[Path] = None, renormalize: bool = False
    ) -> TopographyHistogram:
        """Built-in histogram name ('au', 'si') or CSV path"""
        if reference in BUILTIN_HISTOGRAMS:
            return cls.read_histogram(BUILTIN_HISTOGRAMS[reference], renormalize)
        path = Path(reference)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        return cls.read_histogram(path, renormalize)

    @classmethod
    def read_force_curve(cls, path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
        """z_nm,F_pN → (z in m, F in N)"""
        z, f = [], []
        for _, row in cls._rows(path, ("z_nm", "F_pN")):
            z.append(row["z_nm"] * NM)
            f.append(row["F_pN"] * PN)
        if len(z) < 2:
            raise ValidationError("force curve needs at least 2 rows", Path(path))
        return np.array(z), np.array(f)

    @classmethod
    def read_campaign(cls, paths: Sequence[PathLike]) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Raw force curves, one file per set or a single matrix file

        A matrix file has a z_nm column followed by one force column (pN) per set.
        """
        if not paths:
            raise ValidationError("campaign has no input files")
        if len(paths) == 1:
            header = cls._header(paths[0])
            if header and header[0] == "z_nm" and len(header) > 2:
                return cls._read_matrix(paths[0], header)
        return [cls.read_force_curve(p) for p in paths]

    @classmethod
    def _read_matrix(cls, path: PathLike, header: List[str]) -> List[Tuple[np.ndarray, np.ndarray]]:
        rows = [row for _, row in cls._rows(path, header)]
        if len(rows) < 2:
            raise ValidationError("campaign matrix needs at least 2 rows", Path(path))
        z = np.array([r["z_nm"] for r in rows]) * NM
        curves = [(z, np.array([r[name] for r in rows]) * PN) for name in header[1:]]
        logging.info("Campaign matrix %s: %d sets x %d points", path, len(curves), z.size)
        return curves

    @classmethod
    def read_sweep(cls, path: PathLike) -> Dict[str, np.ndarray]:
        """Calibration sweep: z_nm,V_volt,F_pN or raw z_piezo_nm,S_def,V_volt"""
        header = cls._header(path)
        if "F_pN" in header:
            rows = [row for _, row in cls._rows(path, ("z_nm", "V_volt", "F_pN"))]
            return {
                "z": np.array([r["z_nm"] for r in rows]) * NM,
                "V": np.array([r["V_volt"] for r in rows]),
                "F": np.array([r["F_pN"] for r in rows]) * PN,
            }
        rows = [row for _, row in cls._rows(path, ("z_piezo_nm", "S_def", "V_volt"))]
        return {
            "z_piezo": np.array([r["z_piezo_nm"] for r in rows]) * NM,
            "S_def": np.array([r["S_def"] for r in rows]),
            "V": np.array([r["V_volt"] for r in rows]),
        }

    @classmethod
    def read_contacts(cls, path: PathLike) -> List[Tuple[float, float]]:
        """V_volt,z_piezo_nm at contact → (V, z_piezo in m)"""
        return [(row["V_volt"], row["z_piezo_nm"] * NM) for _, row in cls._rows(path, ("V_volt", "z_piezo_nm"))]

    @classmethod
    def read_piezo(cls, path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
        """V,extension_nm"""
        rows = [row for _, row in cls._rows(path, ("V", "extension_nm"))]
        return np.array([r["V"] for r in rows]), np.array([r["extension_nm"] for r in rows]) * NM
