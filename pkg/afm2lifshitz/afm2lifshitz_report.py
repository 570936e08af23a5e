"""
afm2lifshitz.afm2lifshitz_report - Report generation

Writes the plot-ready CSV tables and JSON summaries produced by the
subcommands. Every file is written to a temporary sibling and moved into
place, so an interrupted run never leaves a partial report behind. Inside
staged() the moves wait until the whole group of files has been written.
"""

import json
import logging
import os
import tempfile
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .afm2lifshitz_utils import UnitUtils

# Separation columns (z_nm, z_rel_nm) keep the grid's 0.01 nm resolution
SEPARATION_DECIMALS = 2


def is_separation_column(name: str) -> bool:
    return name.startswith("z_") and name.endswith("_nm")


class ReportGenerator:
    """Writes CSV and JSON report files into the output directory"""

    def __init__(self, out_dir: Path, metadata: bool = False, digits: int = 4):
        self.out_dir = Path(out_dir)
        self.metadata = metadata
        self.digits = digits
        self.files_written: List[Path] = []
        self._pending: Optional[List[Tuple[str, Path]]] = None

    def _metadata(self) -> Dict[str, str]:
        from . import __version__

        return {
            "generator": f"afm2lifshitz {__version__}",
            "created": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        }

    @contextmanager
    def staged(self):
        """Publish every file written inside the block together, or none of them"""
        if self._pending is not None:
            raise RuntimeError("report staging cannot be nested")
        self._pending = []
        try:
            yield self
        except BaseException:
            for tmp_name, _ in self._pending:
                _discard(tmp_name)
            logging.debug("Discarded %d staged report files", len(self._pending))
            raise
        else:
            for tmp_name, target in self._pending:
                self._publish(tmp_name, target)
        finally:
            self._pending = None

    def _atomic_write(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        target = self.out_dir / name
        fd, tmp_name = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.out_dir)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        except BaseException:
            _discard(tmp_name)
            raise
        if self._pending is not None:
            self._pending.append((tmp_name, target))
            return target
        self._publish(tmp_name, target)
        return target

    def _publish(self, tmp_name: str, target: Path):
        try:
            os.replace(tmp_name, target)
        except BaseException:
            _discard(tmp_name)
            raise
        self.files_written.append(target)
        logging.info("Report file created: %s (%d bytes)", target.name, target.stat().st_size)

    def format_value(self, value: Any, separation: bool = False) -> str:
        if isinstance(value, (bool, np.bool_)):
            return "1" if value else "0"
        if separation and isinstance(value, (int, float, np.integer, np.floating)):
            return f"{float(value):.{SEPARATION_DECIMALS}f}"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            return UnitUtils.format_sig(float(value), self.digits)
        return str(value)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """CSV table with separations at 0.01 nm and other values at the configured significant digits"""
        lines = []
        if self.metadata:
            lines.extend(f"# {key}: {value}" for key, value in self._metadata().items())
        lines.append(",".join(header))
        separation = [is_separation_column(h) for h in header]
        count = 0
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{name}: row {count + 1} has {len(row)} values for {len(header)} columns")
            lines.append(",".join(self.format_value(v, s) for v, s in zip(row, separation)))
            count += 1
        logging.debug("%s: %d rows", name, count)
        return self._atomic_write(name, "\n".join(lines) + "\n")

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        payload = dict(data)
        if self.metadata:
            payload = {"metadata": self._metadata(), **payload}
        text = json.dumps(payload, indent=2, default=_json_value)
        return self._atomic_write(name, text + "\n")

    def summary(self) -> Optional[str]:
        if not self.files_written:
            return None
        return ", ".join(p.name for p in self.files_written)


def _discard(tmp_name: str):
    try:
        os.unlink(tmp_name)
    except OSError:
        pass


def _json_value(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Not serializable: {type(value).__name__}")
