"""The 3x3 region grid around a central safe window, and per-region minimum depth."""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import DimensionMismatchError, StereoAvoidError

# Reported for a region with no valid pixel; 3x the normalization span so it
# saturates to "fully far".
FAR_SENTINEL_M = 9.0

REGION_NAMES = (
    "center", "up", "down", "left", "right",
    "up_left", "up_right", "down_left", "down_right",
)

# (row band, column band) of each region; image row 0 is "up".
_BANDS = {
    "up_left": (0, 0), "up": (0, 1), "up_right": (0, 2),
    "left": (1, 0), "center": (1, 1), "right": (1, 2),
    "down_left": (2, 0), "down": (2, 1), "down_right": (2, 2),
}


class RegionGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    width_px: int
    height_px: int
    x_lo: int
    x_hi: int
    y_lo: int
    y_hi: int

    @model_validator(mode="after")
    def _center_strictly_inside(self):
        if not 0 < self.x_lo < self.x_hi < self.width_px:
            raise ValueError(f"need 0 < x_lo < x_hi < width_px, got {self.x_lo}, {self.x_hi}, {self.width_px}")
        if not 0 < self.y_lo < self.y_hi < self.height_px:
            raise ValueError(f"need 0 < y_lo < y_hi < height_px, got {self.y_lo}, {self.y_hi}, {self.height_px}")
        return self

    def rectangles(self) -> dict[str, tuple[int, int, int, int]]:
        """Half-open ``(x0, x1, y0, y1)`` per region name."""
        xs = (0, self.x_lo, self.x_hi, self.width_px)
        ys = (0, self.y_lo, self.y_hi, self.height_px)
        return {
            name: (xs[col], xs[col + 1], ys[row], ys[row + 1])
            for name, (row, col) in _BANDS.items()
        }


class RegionDepths(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: float = Field(..., gt=0)
    up: float = Field(..., gt=0)
    down: float = Field(..., gt=0)
    left: float = Field(..., gt=0)
    right: float = Field(..., gt=0)
    up_left: float = Field(..., gt=0)
    up_right: float = Field(..., gt=0)
    down_left: float = Field(..., gt=0)
    down_right: float = Field(..., gt=0)

    @classmethod
    def uniform(cls, depth_m: float) -> "RegionDepths":
        return cls(**{name: depth_m for name in REGION_NAMES})

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in REGION_NAMES}


def center_region_px(focal_px: float, safe_width_m: float, plane_dist_m: float) -> int:
    """Pixel side of the safe window projected onto a plane ``plane_dist_m`` ahead."""
    if focal_px <= 0 or safe_width_m <= 0 or plane_dist_m <= 0:
        raise StereoAvoidError(
            f"center_region_px needs positive arguments (f={focal_px}, w={safe_width_m}, z={plane_dist_m})"
        )
    return int(round(focal_px * safe_width_m / plane_dist_m))


def make_grid(width_px: int, height_px: int, center_side_px: int) -> RegionGrid:
    if center_side_px < 1 or center_side_px >= min(width_px, height_px) - 2:
        raise StereoAvoidError(
            f"center side {center_side_px}px does not fit a {width_px}x{height_px} image"
        )
    x_lo = width_px // 2 - center_side_px // 2
    y_lo = height_px // 2 - center_side_px // 2
    return RegionGrid(
        width_px=width_px,
        height_px=height_px,
        x_lo=x_lo,
        x_hi=x_lo + center_side_px,
        y_lo=y_lo,
        y_hi=y_lo + center_side_px,
    )


def partial_minima(values: np.ndarray, y0: int, grid: RegionGrid) -> dict[str, float]:
    """Per-region minimum over a row band starting at image row ``y0``.

    NaN pixels are skipped; regions the band misses or that hold no valid
    pixel come back as +inf.
    """
    y1 = y0 + values.shape[0]
    out = {}
    for name, (x0, x1, ry0, ry1) in grid.rectangles().items():
        lo, hi = max(ry0, y0), min(ry1, y1)
        if lo >= hi:
            out[name] = np.inf
            continue
        block = values[lo - y0:hi - y0, x0:x1]
        valid = block[~np.isnan(block)]
        out[name] = float(valid.min()) if valid.size else np.inf
    return out


def merge_minima(parts: list[dict[str, float]]) -> RegionDepths:
    """Reduce band partials; a region that never saw a valid pixel gets the far sentinel."""
    merged = {}
    for name in REGION_NAMES:
        m = min((p[name] for p in parts), default=np.inf)
        merged[name] = m if np.isfinite(m) else FAR_SENTINEL_M
    return RegionDepths(**merged)


def region_min_depths(depth, grid: RegionGrid) -> RegionDepths:
    """``depth`` is a :class:`~app.stereo.disparity.DepthMap` or a raw 2-D array."""
    values = getattr(depth, "values", depth)
    if values.shape != (grid.height_px, grid.width_px):
        raise DimensionMismatchError(
            f"depth map {values.shape[1]}x{values.shape[0]} does not match grid "
            f"{grid.width_px}x{grid.height_px}"
        )
    return merge_minima([partial_minima(values, 0, grid)])
