"""SAD block matching with winner-take-all search along rectified scanlines.

Costs for every candidate disparity come from OpenCV integral images of the
absolute difference between the left image and the shifted right image, so
each window sum is four lookups.  All costs are exact integers and every
reduction (argmin, min) is order independent, which makes the output
bit-identical for any worker count.

Invalid pixels are NaN in both :class:`DisparityMap` and :class:`DepthMap`.
"""

import logging
from dataclasses import dataclass

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.errors import DimensionMismatchError, InvalidDepthError, WindowOutOfBoundsError
from app.parallel import row_bands, run_bands
from app.stereo.geometry import CameraRig
from app.stereo.images import GrayImage, StereoPair
from app.stereo.refine import DepthLUT, refine_map
from app.stereo.regions import RegionDepths, RegionGrid, merge_minima, partial_minima

logger = logging.getLogger("disparity")

_COST_MAX = np.iinfo(np.int32).max


class MatchParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    window_radius_px: int = Field(4, ge=1)
    max_disparity_px: int = Field(64, ge=1)
    uniqueness_ratio: float = Field(0.15, ge=0, lt=1)
    # None disables the left-right check
    lr_consistency_px: int | None = Field(None, ge=0)


@dataclass(frozen=True, eq=False)
class DisparityMap:
    values: np.ndarray  # float32, NaN = invalid
    max_disparity_px: int

    @property
    def width_px(self) -> int:
        return int(self.values.shape[1])

    @property
    def height_px(self) -> int:
        return int(self.values.shape[0])

    def valid_mask(self) -> np.ndarray:
        return ~np.isnan(self.values)


@dataclass(frozen=True, eq=False)
class DepthMap:
    values: np.ndarray  # float32 meters, NaN = invalid

    def __post_init__(self):
        valid = self.values[~np.isnan(self.values)]
        if valid.size and not np.all(valid > 0):
            raise InvalidDepthError("depth map holds a non-positive value")

    @property
    def width_px(self) -> int:
        return int(self.values.shape[1])

    @property
    def height_px(self) -> int:
        return int(self.values.shape[0])

    def valid_mask(self) -> np.ndarray:
        return ~np.isnan(self.values)


def sad_cost(left: GrayImage, right: GrayImage, x: int, y: int, d: int, radius: int) -> int:
    """Sum of absolute differences between the left window at (x, y) and the right one at (x - d, y)."""
    h, w = left.pixels.shape
    if right.pixels.shape != (h, w):
        raise DimensionMismatchError("left and right images differ in size")
    xr = x - d
    if not (
        radius <= y < h - radius
        and radius <= x < w - radius
        and radius <= xr < w - radius
    ):
        raise WindowOutOfBoundsError(
            f"window radius {radius} at ({x},{y}) with d={d} leaves the {w}x{h} image"
        )
    a = left.pixels[y - radius:y + radius + 1, x - radius:x + radius + 1].astype(np.int32)
    b = right.pixels[y - radius:y + radius + 1, xr - radius:xr + radius + 1].astype(np.int32)
    return int(np.abs(a - b).sum())


def _check_pair(pair: StereoPair, params: MatchParams) -> None:
    w, h = pair.left.width_px, pair.left.height_px
    side = 2 * params.window_radius_px + 1
    if w < side or h < side:
        raise WindowOutOfBoundsError(f"{w}x{h} image is smaller than the {side}x{side} window")
    if params.max_disparity_px >= w:
        raise WindowOutOfBoundsError(
            f"max_disparity_px {params.max_disparity_px} must be below the image width {w}"
        )


def _band_disparity(left: np.ndarray, right: np.ndarray, y0: int, y1: int, params: MatchParams) -> np.ndarray:
    """Disparity for image rows ``[y0, y1)``; reads up to ``radius`` rows of halo either side."""
    h, w = left.shape
    r = params.window_radius_px
    dmax = params.max_disparity_px
    out = np.full((y1 - y0, w), np.nan, dtype=np.float32)

    ys_lo, ys_hi = max(y0, r), min(y1, h - r)
    x0 = r + dmax
    wv = w - r - x0
    if ys_lo >= ys_hi or wv <= 0:
        return out
    hv = ys_hi - ys_lo
    left_band = left[ys_lo - r:ys_hi + r]
    right_band = right[ys_lo - r:ys_hi + r]

    n = 2 * r + 1
    costs = np.empty((dmax + 1, hv, wv), dtype=np.int32)
    for d in range(dmax + 1):
        diff = cv2.absdiff(left_band[:, d:], right_band[:, :w - d])
        s = cv2.integral(diff)
        c = dmax - d
        costs[d] = (
            s[n:n + hv, c + n:c + n + wv]
            - s[:hv, c + n:c + n + wv]
            - s[n:n + hv, c:c + wv]
            + s[:hv, c:c + wv]
        )

    best = np.argmin(costs, axis=0)
    valid = np.ones((hv, wv), dtype=bool)

    if params.uniqueness_ratio > 0:
        best_cost = np.take_along_axis(costs, best[None], axis=0)[0]
        cand = np.arange(dmax + 1)[:, None, None]
        masked = np.where(np.abs(cand - best[None]) <= 1, _COST_MAX, costs)
        second = masked.min(axis=0)
        has_second = second != _COST_MAX
        ambiguous = best_cost.astype(np.float64) >= (1.0 - params.uniqueness_ratio) * second.astype(np.float64)
        valid &= ~(has_second & ambiguous)

    if params.lr_consistency_px is not None:
        # right-referenced costs: right column m (= x_right - r) sees left pixel m + d - dmax at disparity d
        right_costs = np.full((dmax + 1, hv, wv + dmax), _COST_MAX, dtype=np.int32)
        for d in range(dmax + 1):
            right_costs[d, :, dmax - d:dmax - d + wv] = costs[d]
        best_right = np.argmin(right_costs, axis=0)
        cols = np.arange(wv)[None, :] + dmax - best
        back = np.take_along_axis(best_right, cols, axis=1)
        valid &= np.abs(best - back) <= params.lr_consistency_px

    disp = best.astype(np.float32)
    disp[~valid] = np.nan
    out[ys_lo - y0:ys_hi - y0, x0:x0 + wv] = disp
    return out


def block_match(pair: StereoPair, params: MatchParams, workers: int | None = None) -> DisparityMap:
    _check_pair(pair, params)
    left, right = pair.left.pixels, pair.right.pixels
    bands = row_bands(pair.left.height_px)
    parts = run_bands(
        lambda y0, y1: _band_disparity(left, right, y0, y1, params),
        bands, workers=workers, name="match",
    )
    return DisparityMap(values=np.vstack(parts), max_disparity_px=params.max_disparity_px)


def _depth_values(disparity: np.ndarray, bf: float) -> np.ndarray:
    d = disparity.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = np.where(d > 0, bf / d, np.nan)
    return depth.astype(np.float32)


def disparity_to_depth(dmap: DisparityMap, rig: CameraRig) -> DepthMap:
    """Per-pixel z = B*f/d; invalid and zero-disparity pixels stay invalid."""
    return DepthMap(values=_depth_values(dmap.values, rig.bf))


def fused_pipeline(
    pair: StereoPair,
    params: MatchParams,
    grid: RegionGrid,
    lut: DepthLUT,
    workers: int | None = None,
) -> tuple[DepthMap, RegionDepths]:
    """Matching, depth, refinement and region minima in one pass per row band.

    Equal to ``region_min_depths(refine_map(disparity_to_depth(block_match(...))))``
    bit for bit; each band only contributes a partial minimum per region.
    """
    _, depth, regions = fused_pipeline_full(pair, params, grid, lut, workers)
    return depth, regions


def fused_pipeline_full(
    pair: StereoPair,
    params: MatchParams,
    grid: RegionGrid,
    lut: DepthLUT,
    workers: int | None = None,
) -> tuple[DisparityMap, DepthMap, RegionDepths]:
    """:func:`fused_pipeline` that also hands back the disparity map."""
    _check_pair(pair, params)
    if (grid.width_px, grid.height_px) != (pair.left.width_px, pair.left.height_px):
        raise DimensionMismatchError(
            f"grid {grid.width_px}x{grid.height_px} does not match image "
            f"{pair.left.width_px}x{pair.left.height_px}"
        )
    left, right = pair.left.pixels, pair.right.pixels
    bf = pair.rig.bf

    def band(y0: int, y1: int):
        disp = _band_disparity(left, right, y0, y1, params)
        depth = refine_map(lut, _depth_values(disp, bf))
        return disp, depth, partial_minima(depth, y0, grid)

    parts = run_bands(band, row_bands(pair.left.height_px), workers=workers, name="fused")
    disparity = DisparityMap(values=np.vstack([p[0] for p in parts]), max_disparity_px=params.max_disparity_px)
    depth = DepthMap(values=np.vstack([p[1] for p in parts]))
    regions = merge_minima([p[2] for p in parts])
    logger.debug("fused pass: %d valid px, center %.3f m", int(depth.valid_mask().sum()), regions.center)
    return disparity, depth, regions
