"""Synthetic stereo world of textured axis-aligned boxes.

World axes: x right, y up, z forward.  A vehicle with heading (yaw, pitch)
carries an ideally rectified stereo rig; the right camera sits
``baseline_m`` along the camera-right axis.  Rays are cast per pixel
through a pinhole with the ray's forward component fixed at 1, so the hit
parameter is the camera-plane depth z directly.
"""

import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.errors import InvalidDepthError, StereoAvoidError
from app.parallel import row_bands, run_bands
from app.stereo.disparity import DepthMap
from app.stereo.geometry import CameraRig, PixelHomog
from app.stereo.images import GrayImage, StereoPair

logger = logging.getLogger("sim")

Vec3 = tuple[float, float, float]

SKY_INTENSITY = 235
# value-noise cell size (m) and weight per octave
_OCTAVES = ((0.03, 0.5), (0.07, 0.3), (0.17, 0.2))
_TEXTURE_BASE = 30.0
_TEXTURE_SPAN = 170.0


class Box(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    min_corner: Vec3 = Field(..., alias="min")
    max_corner: Vec3 = Field(..., alias="max")
    seed: int = 0
    # scripted constant velocity, m/s
    velocity: Vec3 = (0.0, 0.0, 0.0)

    @model_validator(mode="after")
    def _positive_extent(self):
        if any(hi <= lo for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError(f"box needs positive extent on every axis: {self.min_corner} .. {self.max_corner}")
        return self

    def at(self, t: float) -> "Box":
        if not any(self.velocity):
            return self
        shift = np.asarray(self.velocity) * t
        return self.model_copy(update={
            "min_corner": tuple(float(v) for v in np.asarray(self.min_corner) + shift),
            "max_corner": tuple(float(v) for v in np.asarray(self.max_corner) + shift),
        })

    def distance(self, point) -> float:
        """Euclidean distance from ``point`` to the box; 0 inside."""
        p = np.asarray(point, dtype=np.float64)
        gap = np.maximum(np.maximum(np.asarray(self.min_corner) - p, 0.0), p - np.asarray(self.max_corner))
        return float(np.linalg.norm(gap))


class Scene(BaseModel):
    model_config = ConfigDict(frozen=True)

    boxes: tuple[Box, ...] = ()
    bounds: tuple[Vec3, Vec3] = ((-10.0, -10.0, -10.0), (10.0, 10.0, 10.0))

    @field_validator("bounds")
    @classmethod
    def _bounds(cls, v):
        lo, hi = v
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("world bounds need min < max on every axis")
        return v

    def at(self, t: float) -> "Scene":
        return self.model_copy(update={"boxes": tuple(b.at(t) for b in self.boxes)})

    def distance(self, point) -> float:
        return min((b.distance(point) for b in self.boxes), default=math.inf)

    def contains(self, point) -> bool:
        lo, hi = self.bounds
        return all(a <= p <= b for a, p, b in zip(lo, point, hi))


def load_scene(path: str | Path) -> Scene:
    return Scene.model_validate_json(Path(path).read_text(encoding="utf-8"))


class VehicleState(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    heading_yaw: float = 0.0
    heading_pitch: float = Field(0.0, gt=-math.pi / 2, lt=math.pi / 2)
    speed: float = Field(0.5, ge=0)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit (forward, right, up) vectors of the camera frame."""
        sy, cy = math.sin(self.heading_yaw), math.cos(self.heading_yaw)
        sp, cp = math.sin(self.heading_pitch), math.cos(self.heading_pitch)
        forward = np.array([sy * cp, sp, cy * cp])
        right = np.array([cy, 0.0, -sy])
        up = np.array([-sy * sp, cp, -cy * sp])
        return forward, right, up


def _camera_origin(state: VehicleState, rig: CameraRig, camera: str) -> np.ndarray:
    if camera == "left":
        return state.position
    if camera == "right":
        return state.position + rig.baseline_m * state.axes()[1]
    raise StereoAvoidError(f"camera must be 'left' or 'right', got {camera!r}")


def project(point, state: VehicleState, rig: CameraRig, camera: str = "left") -> PixelHomog:
    """Pixel position of a world point in the left or right image."""
    forward, right, up = state.axes()
    rel = np.asarray(point, dtype=np.float64) - _camera_origin(state, rig, camera)
    z = float(rel @ forward)
    if z <= 0:
        raise InvalidDepthError(f"point is behind the {camera} camera (z={z:.3f})")
    u = rig.principal_x_px + rig.focal_px * float(rel @ right) / z
    v = rig.principal_y_px - rig.focal_px * float(rel @ up) / z
    return PixelHomog(x=u, y=v)


def _hash01(i: np.ndarray, j: np.ndarray, salt: int) -> np.ndarray:
    """Deterministic per-lattice-point value in [0, 1)."""
    h = i.astype(np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    h ^= j.astype(np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    h ^= np.uint64(salt & 0xFFFFFFFFFFFFFFFF)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xC4CEB9FE1A85EC53)
    h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _value_noise(u: np.ndarray, v: np.ndarray, salt: int) -> np.ndarray:
    fu, fv = np.floor(u), np.floor(v)
    tu, tv = u - fu, v - fv
    i, j = fu.astype(np.int64), fv.astype(np.int64)
    n00 = _hash01(i, j, salt)
    n10 = _hash01(i + 1, j, salt)
    n01 = _hash01(i, j + 1, salt)
    n11 = _hash01(i + 1, j + 1, salt)
    return (n00 * (1 - tu) + n10 * tu) * (1 - tv) + (n01 * (1 - tu) + n11 * tu) * tv


def _texture(box: Box, points: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Intensity of hit points on ``box``; ``axis`` is the hit face's normal axis."""
    local = points - np.asarray(box.min_corner)
    out = np.zeros(len(points))
    for a in range(3):
        sel = axis == a
        if not sel.any():
            continue
        u_axis, v_axis = [k for k in range(3) if k != a]
        n = np.zeros(int(sel.sum()))
        for octave, (cell, weight) in enumerate(_OCTAVES):
            salt = (box.seed * 1_000_003 + a * 101 + octave) * 2654435761
            n += weight * _value_noise(local[sel, u_axis] / cell, local[sel, v_axis] / cell, salt)
        out[sel] = _TEXTURE_BASE + _TEXTURE_SPAN * n
    return out


def _cast(boxes: tuple[Box, ...], origin: np.ndarray, dirs: np.ndarray, shade: bool):
    """Nearest hit along each ray: (t, intensity). t is +inf on a miss."""
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_box = np.full(n, -1)
    best_axis = np.zeros(n, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        for k, box in enumerate(boxes):
            t1 = (np.asarray(box.min_corner) - origin) * inv
            t2 = (np.asarray(box.max_corner) - origin) * inv
            t_enter = np.fmin(t1, t2)
            t_exit = np.fmax(t1, t2)
            near = t_enter.max(axis=1)
            far = t_exit.min(axis=1)
            hit = (far >= near) & (near > 1e-9) & (near < best_t)
            best_t[hit] = near[hit]
            best_box[hit] = k
            best_axis[hit] = np.argmax(t_enter[hit], axis=1)
    if not shade:
        return best_t, None
    intensity = np.full(n, float(SKY_INTENSITY))
    for k, box in enumerate(boxes):
        sel = best_box == k
        if sel.any():
            points = origin + dirs[sel] * best_t[sel, None]
            intensity[sel] = _texture(box, points, best_axis[sel])
    return best_t, intensity


def _rays(state: VehicleState, rig: CameraRig, y0: int, y1: int) -> np.ndarray:
    forward, right, up = state.axes()
    u = np.arange(rig.width_px, dtype=np.float64)
    v = np.arange(y0, y1, dtype=np.float64)
    xc = (u - rig.principal_x_px) / rig.focal_px
    yc = (v - rig.principal_y_px) / rig.focal_px
    xx, yy = np.meshgrid(xc, yc)
    dirs = right * xx[..., None] - up * yy[..., None] + forward
    return dirs.reshape(-1, 3)


def _render_view(scene: Scene, state: VehicleState, rig: CameraRig, camera: str, workers: int | None, shade: bool):
    origin = _camera_origin(state, rig, camera)

    def band(y0: int, y1: int):
        t, intensity = _cast(scene.boxes, origin, _rays(state, rig, y0, y1), shade)
        shape = (y1 - y0, rig.width_px)
        return t.reshape(shape), (intensity.reshape(shape) if shade else None)

    parts = run_bands(band, row_bands(rig.height_px), workers=workers, name=f"render-{camera}")
    depth = np.vstack([p[0] for p in parts])
    intensity = np.vstack([p[1] for p in parts]) if shade else None
    return depth, intensity


def _to_gray(intensity: np.ndarray) -> GrayImage:
    return GrayImage.from_array(np.clip(np.rint(intensity), 0, 255).astype(np.uint8))


def render_stereo(
    scene: Scene,
    state: VehicleState,
    rig: CameraRig,
    noise_stddev: float = 0.0,
    seed: int = 0,
    workers: int | None = None,
) -> StereoPair:
    """Ray-cast an ideally rectified pair; Gaussian noise is drawn from ``seed``."""
    if not scene.contains(state.position):
        raise StereoAvoidError(f"vehicle at {tuple(state.position)} is outside the world bounds")
    _, left = _render_view(scene, state, rig, "left", workers, shade=True)
    _, right = _render_view(scene, state, rig, "right", workers, shade=True)
    if noise_stddev > 0:
        rng = np.random.default_rng(seed)
        left = left + rng.normal(0.0, noise_stddev, left.shape)
        right = right + rng.normal(0.0, noise_stddev, right.shape)
    return StereoPair(_to_gray(left), _to_gray(right), rig)


def ground_truth_depth(scene: Scene, state: VehicleState, rig: CameraRig, workers: int | None = None) -> DepthMap:
    """Camera-plane depth of the nearest hit per left-image pixel; sky is invalid."""
    t, _ = _render_view(scene, state, rig, "left", workers, shade=False)
    values = t.astype(np.float32)
    values[~np.isfinite(t)] = np.nan
    return DepthMap(values=values)


def check_collision(scene: Scene, state: VehicleState, radius_m: float) -> bool:
    """True when the sphere of ``radius_m`` around the vehicle touches any box (boundary included)."""
    if not radius_m > 0:
        raise StereoAvoidError(f"collision radius must be > 0 (got {radius_m})")
    return scene.distance(state.position) <= radius_m
