"""Configuration via Pydantic Settings, loaded from .env file."""

import logging
import os
from pathlib import Path

from pydantic_settings import BaseSettings

_cfg_logger = logging.getLogger("config")

# Resolve .env path relative to the project root (parent of app/) so it
# works regardless of the working directory the process is launched from.
_PROJECT_ROOT = Path(__file__).resolve().parent.parent


def _resolve_env_file() -> Path:
    """Return an absolute path to the .env file.

    If ``STEREO_AVOID_ENV_FILE`` is set, use it (resolved relative to the project
    root when not absolute).  Otherwise default to ``<project_root>/.env``.
    """
    raw = os.environ.get("STEREO_AVOID_ENV_FILE", "")
    if raw:
        p = Path(raw)
        return p if p.is_absolute() else _PROJECT_ROOT / p
    return _PROJECT_ROOT / ".env"


def _default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


class Settings(BaseSettings):
    # Camera rig (ZED-like: 120 mm baseline)
    baseline_m: float = 0.12
    focal_px: float = 450.0
    width_px: int = 640
    height_px: int = 360
    principal_x_px: float | None = None  # None = image centre
    principal_y_px: float | None = None

    # Block matching
    window_radius_px: int = 4
    max_disparity_px: int = 64
    uniqueness_ratio: float = 0.15
    lr_consistency_px: int | None = None  # None = left-right check disabled

    # Parallelism
    workers: int = _default_workers()
    band_rows: int = 32

    # Region grid: safe window projected onto a plane in front of the camera
    safe_width_m: float = 0.5
    plane_dist_m: float = 1.5
    center_side_px: int | None = None  # None = derived from the safe window

    # Fuzzy controller
    normalization_span_m: float = 3.0
    rules: str = "paper_corrected"
    diagonal_trigger: float = 0.05
    diagonal_near_gate: float = 0.5
    fuzzy_samples: int = 1001

    # Simulator
    sim_dt_s: float = 0.1
    sim_speed_mps: float = 0.5
    sim_yaw_rate_gain: float = 4.0
    sim_pitch_rate_gain: float = 4.0
    sim_max_steps: int = 300
    sim_collision_radius_m: float = 0.25
    sim_noise_stddev: float = 0.0
    sim_seed: int = 0

    # Server
    host: str = "127.0.0.1"
    port: int = 8000
    log_level: str = "INFO"

    model_config = {
        "env_file": str(_resolve_env_file()),
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }

    def rig(self):
        from app.stereo.geometry import CameraRig

        return CameraRig(
            baseline_m=self.baseline_m,
            focal_px=self.focal_px,
            principal_x_px=self.principal_x_px if self.principal_x_px is not None else self.width_px / 2,
            principal_y_px=self.principal_y_px if self.principal_y_px is not None else self.height_px / 2,
            width_px=self.width_px,
            height_px=self.height_px,
        )

    def match_params(self):
        from app.stereo.disparity import MatchParams

        return MatchParams(
            window_radius_px=self.window_radius_px,
            max_disparity_px=self.max_disparity_px,
            uniqueness_ratio=self.uniqueness_ratio,
            lr_consistency_px=self.lr_consistency_px,
        )

    def grid(self, width_px: int | None = None, height_px: int | None = None, focal_px: float | None = None):
        """Region grid for the given image size, centre side from the safe window unless pinned."""
        from app.stereo.regions import center_region_px, make_grid

        side = self.center_side_px
        if side is None:
            side = center_region_px(focal_px or self.focal_px, self.safe_width_m, self.plane_dist_m)
        return make_grid(width_px or self.width_px, height_px or self.height_px, side)

    def controller_config(self):
        from app.fuzzy.controller import ControllerConfig

        return ControllerConfig(
            normalization_span_m=self.normalization_span_m,
            rules=self.rules,
            diagonal_trigger=self.diagonal_trigger,
            diagonal_near_gate=self.diagonal_near_gate,
            samples=self.fuzzy_samples,
        )

    def episode_defaults(self, rig=None, match=None, lut=None):
        """EpisodeConfig from the sim settings; the grid follows the rig's size and focal length."""
        from app.sim.episode import EpisodeConfig
        from app.stereo.refine import DepthLUT

        rig = rig or self.rig()
        return EpisodeConfig(
            rig=rig,
            match=match or self.match_params(),
            grid=self.grid(rig.width_px, rig.height_px, rig.focal_px),
            lut=lut or DepthLUT.identity(),
            controller=self.controller_config(),
            dt=self.sim_dt_s,
            yaw_rate_gain=self.sim_yaw_rate_gain,
            pitch_rate_gain=self.sim_pitch_rate_gain,
            max_steps=self.sim_max_steps,
            collision_radius_m=self.sim_collision_radius_m,
            noise_stddev=self.sim_noise_stddev,
            seed=self.sim_seed,
            workers=self.workers,
        )

    def log_startup(self):
        """Log the effective configuration source. Called once by entry points."""
        env_path = _resolve_env_file()
        _cfg_logger.info(
            "Settings loaded (env_file=%s, exists=%s, workers=%d, rules=%s)",
            env_path, env_path.exists(), self.workers, self.rules,
        )


settings = Settings()
