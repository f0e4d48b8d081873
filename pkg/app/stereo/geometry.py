"""Camera geometry: the disparity/depth relation and the epipolar residual.

For a rectified pair with baseline B (m) and focal length f (px), a point at
camera-plane distance z (m) shows up with disparity d = B * f / z (px).
"""

from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.errors import InvalidDepthError, InvalidDisparityError


class CameraRig(BaseModel):
    model_config = ConfigDict(frozen=True)

    baseline_m: float = Field(..., gt=0)
    focal_px: float = Field(..., gt=0)
    principal_x_px: float
    principal_y_px: float
    width_px: int = Field(..., gt=0)
    height_px: int = Field(..., gt=0)

    @model_validator(mode="after")
    def _principal_point_inside(self):
        if not 0 <= self.principal_x_px < self.width_px:
            raise ValueError("principal_x_px must lie in [0, width_px)")
        if not 0 <= self.principal_y_px < self.height_px:
            raise ValueError("principal_y_px must lie in [0, height_px)")
        return self

    @property
    def bf(self) -> float:
        """Baseline times focal length, the numerator of the depth relation."""
        return self.baseline_m * self.focal_px

    @classmethod
    def centered(cls, baseline_m: float, focal_px: float, width_px: int, height_px: int) -> "CameraRig":
        return cls(
            baseline_m=baseline_m,
            focal_px=focal_px,
            principal_x_px=width_px / 2,
            principal_y_px=height_px / 2,
            width_px=width_px,
            height_px=height_px,
        )

    def scaled(self, factor: float) -> "CameraRig":
        """Same field of view at a different resolution."""
        return CameraRig.centered(
            self.baseline_m,
            self.focal_px * factor,
            int(round(self.width_px * factor)),
            int(round(self.height_px * factor)),
        )


def load_rig(path: str | Path) -> CameraRig:
    return CameraRig.model_validate_json(Path(path).read_text(encoding="utf-8"))


class PixelHomog(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    w: float = 1.0

    @field_validator("w")
    @classmethod
    def _finite(cls, v: float) -> float:
        if v == 0:
            raise ValueError("w must be non-zero for a finite pixel")
        return v

    def normalized(self) -> "PixelHomog":
        if self.w == 1.0:
            return self
        return PixelHomog(x=self.x / self.w, y=self.y / self.w, w=1.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w], dtype=np.float64)


class FundamentalMatrix(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: tuple[float, float, float, float, float, float, float, float, float]

    @model_validator(mode="after")
    def _rank_two(self):
        if abs(np.linalg.det(self.as_array())) > 1e-9:
            raise ValueError("fundamental matrix must be rank 2 (det = 0)")
        return self

    def as_array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=np.float64).reshape(3, 3)


def depth_from_disparity(d: float, rig: CameraRig) -> float:
    if not d > 0:
        raise InvalidDisparityError(f"disparity must be > 0 (got {d}); zero disparity is infinite depth")
    return rig.bf / d


def disparity_from_depth(z: float, rig: CameraRig) -> float:
    if not z > 0:
        raise InvalidDepthError(f"depth must be > 0 (got {z})")
    return rig.bf / z


def rectified_fundamental() -> FundamentalMatrix:
    """F of an ideally rectified pair: m2^T F m1 = y1 - y2."""
    return FundamentalMatrix(entries=(0, 0, 0, 0, 0, -1, 0, 1, 0))


def epipolar_residual(m1: PixelHomog, m2: PixelHomog, F: FundamentalMatrix) -> float:
    """The scalar m2^T F m1; zero when the pair satisfies the epipolar constraint."""
    a = m1.normalized().as_array()
    b = m2.normalized().as_array()
    return float(b @ F.as_array() @ a)
