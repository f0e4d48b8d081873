"""Computed-to-true depth correction through a monotone lookup table.

The table is built from paired measurements (depth the pipeline reported,
depth measured in the world).  Lookups interpolate linearly between entries
and clamp to the end values outside the calibrated range.
"""

import csv
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.errors import CalibrationError, InvalidDepthError

logger = logging.getLogger("refine")

_CSV_HEADER = ["computed_m", "true_m"]


def _check_entries(entries) -> None:
    if len(entries) < 2:
        raise CalibrationError("a depth LUT needs at least 2 entries")
    computed = np.array([e[0] for e in entries], dtype=np.float64)
    true = np.array([e[1] for e in entries], dtype=np.float64)
    if np.any(computed <= 0) or np.any(true <= 0):
        raise CalibrationError("LUT depths must be > 0")
    if np.any(np.diff(computed) <= 0):
        raise CalibrationError("LUT computed_m must be strictly increasing")
    if np.any(np.diff(true) <= 0):
        raise CalibrationError("LUT true_m must be strictly increasing (non-monotone calibration data)")


class DepthLUT(BaseModel):
    """``entries`` empty means the identity table."""

    model_config = ConfigDict(frozen=True)

    entries: tuple[tuple[float, float], ...] = ()

    @model_validator(mode="after")
    def _monotone(self):
        if self.entries:
            _check_entries(self.entries)
        return self

    @classmethod
    def identity(cls) -> "DepthLUT":
        return cls()

    @property
    def is_identity(self) -> bool:
        return not self.entries

    def _columns(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([e[0] for e in self.entries], dtype=np.float64),
            np.array([e[1] for e in self.entries], dtype=np.float64),
        )


def build_lut(samples) -> DepthLUT:
    samples = [(float(c), float(t)) for c, t in samples]
    if len(samples) < 2:
        raise CalibrationError(f"need at least 2 samples, got {len(samples)}")
    computed = [c for c, _ in samples]
    if len(set(computed)) != len(computed):
        raise CalibrationError("duplicate computed_m values in LUT samples")
    entries = tuple(sorted(samples))
    _check_entries(entries)
    return DepthLUT(entries=entries)


def refine(lut: DepthLUT, computed: float) -> float:
    if not computed > 0:
        raise InvalidDepthError(f"computed depth must be > 0 (got {computed})")
    if lut.is_identity:
        return float(computed)
    xs, ys = lut._columns()
    return float(np.interp(computed, xs, ys))


def refine_map(lut: DepthLUT, depth: np.ndarray) -> np.ndarray:
    """Vectorized :func:`refine` over a float32 depth array; NaN stays NaN."""
    if lut.is_identity:
        return depth.copy()
    xs, ys = lut._columns()
    out = np.interp(depth.astype(np.float64), xs, ys).astype(np.float32)
    out[~np.isfinite(depth)] = np.nan
    return out


def read_lut_csv(path: str | Path) -> DepthLUT:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != _CSV_HEADER:
            raise CalibrationError(f"{path}: header must be {','.join(_CSV_HEADER)}")
        try:
            samples = [(float(row["computed_m"]), float(row["true_m"])) for row in reader]
        except (TypeError, ValueError) as e:
            raise CalibrationError(f"{path}: bad number ({e})") from e
    lut = build_lut(samples)
    logger.info("Loaded depth LUT from %s (%d entries)", path, len(lut.entries))
    return lut


def write_lut_csv(path: str | Path, lut: DepthLUT) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(_CSV_HEADER)
        for computed, true in lut.entries:
            writer.writerow([repr(computed), repr(true)])
