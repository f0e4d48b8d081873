"""Closed-loop episodes: render, estimate, steer, move, repeat."""

import csv
import logging
import math
from enum import Enum
from pathlib import Path

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import StereoAvoidError
from app.fuzzy.controller import ControllerConfig, SteerCommand, get_controller
from app.stereo.disparity import MatchParams, fused_pipeline
from app.stereo.geometry import CameraRig
from app.stereo.images import GrayImage, write_ppm
from app.stereo.refine import DepthLUT
from app.stereo.regions import REGION_NAMES, RegionDepths, RegionGrid
from app.sim.world import Scene, VehicleState, check_collision, render_stereo

logger = logging.getLogger("sim")

MAX_PITCH_RAD = math.pi / 3

TRAJECTORY_COLUMNS = (
    ["t", "x", "y", "z", "yaw", "pitch", "cmd_pitch", "cmd_yaw"]
    + list(REGION_NAMES)
    + ["collision"]
)


class EpisodeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    rig: CameraRig
    match: MatchParams
    grid: RegionGrid
    lut: DepthLUT = DepthLUT()
    controller: ControllerConfig = ControllerConfig()
    dt: float = Field(0.1, gt=0)
    yaw_rate_gain: float = Field(4.0, ge=0)
    pitch_rate_gain: float = Field(4.0, ge=0)
    max_steps: int = Field(300, ge=1)
    collision_radius_m: float = Field(0.25, gt=0)
    noise_stddev: float = Field(0.0, ge=0)
    seed: int = 0
    workers: int | None = None

    @model_validator(mode="after")
    def _grid_fits_rig(self):
        if (self.grid.width_px, self.grid.height_px) != (self.rig.width_px, self.rig.height_px):
            raise ValueError("region grid and camera rig disagree on image size")
        return self


class Outcome(str, Enum):
    MAX_STEPS = "max_steps"
    COLLISION = "collision"
    OUT_OF_BOUNDS = "out_of_bounds"


class TrajectoryStep(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    state: VehicleState
    command: SteerCommand
    depths: RegionDepths
    collision: bool = False


class TrajectoryLog(BaseModel):
    seed: int = 0
    steps: list[TrajectoryStep] = []
    outcome: Outcome = Outcome.MAX_STEPS

    @property
    def collided(self) -> bool:
        return any(s.collision for s in self.steps)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(TRAJECTORY_COLUMNS)
            for s in self.steps:
                st = s.state
                writer.writerow(
                    [repr(v) for v in (s.t, st.x, st.y, st.z, st.heading_yaw, st.heading_pitch,
                                       s.command.pitch, s.command.yaw)]
                    + [repr(v) for v in s.depths.as_dict().values()]
                    + [int(s.collision)]
                )


def read_trajectory_csv(path: str | Path, speed: float = 0.0, seed: int = 0) -> TrajectoryLog:
    """Inverse of :meth:`TrajectoryLog.write_csv`; speed is not stored in the file."""
    steps = []
    with Path(path).open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != TRAJECTORY_COLUMNS:
            raise StereoAvoidError(f"{path}: unexpected trajectory header")
        for row in reader:
            steps.append(TrajectoryStep(
                t=float(row["t"]),
                state=VehicleState(
                    x=float(row["x"]), y=float(row["y"]), z=float(row["z"]),
                    heading_yaw=float(row["yaw"]), heading_pitch=float(row["pitch"]),
                    speed=speed,
                ),
                command=SteerCommand(pitch=float(row["cmd_pitch"]), yaw=float(row["cmd_yaw"])),
                depths=RegionDepths(**{k: float(row[k]) for k in REGION_NAMES}),
                collision=row["collision"] == "1",
            ))
    outcome = Outcome.COLLISION if steps and steps[-1].collision else Outcome.MAX_STEPS
    return TrajectoryLog(seed=seed, steps=steps, outcome=outcome)


def step_vehicle(state: VehicleState, cmd: SteerCommand, cfg: EpisodeConfig) -> VehicleState:
    yaw = state.heading_yaw + cmd.yaw * cfg.yaw_rate_gain * cfg.dt
    pitch = state.heading_pitch + cmd.pitch * cfg.pitch_rate_gain * cfg.dt
    pitch = min(max(pitch, -MAX_PITCH_RAD), MAX_PITCH_RAD)
    turned = state.model_copy(update={"heading_yaw": yaw, "heading_pitch": pitch})
    forward = turned.axes()[0]
    x, y, z = state.position + state.speed * cfg.dt * forward
    return turned.model_copy(update={"x": float(x), "y": float(y), "z": float(z)})


def write_debug_frame(path: str | Path, image: GrayImage, grid: RegionGrid, cmd: SteerCommand) -> None:
    """Left image with the region grid and the steering command drawn as an arrow."""
    frame = cv2.cvtColor(np.ascontiguousarray(image.pixels), cv2.COLOR_GRAY2BGR)
    w, h = grid.width_px, grid.height_px
    for x in (grid.x_lo, grid.x_hi):
        cv2.line(frame, (x, 0), (x, h - 1), (0, 160, 0), 1)
    for y in (grid.y_lo, grid.y_hi):
        cv2.line(frame, (0, y), (w - 1, y), (0, 160, 0), 1)
    cv2.rectangle(frame, (grid.x_lo, grid.y_lo), (grid.x_hi - 1, grid.y_hi - 1), (0, 255, 255), 1)
    cx, cy = w // 2, h // 2
    reach = min(w, h) // 3
    tip = (int(round(cx + cmd.yaw * reach)), int(round(cy - cmd.pitch * reach)))
    if tip == (cx, cy):
        cv2.circle(frame, (cx, cy), 3, (0, 0, 255), -1)
    else:
        cv2.arrowedLine(frame, (cx, cy), tip, (0, 0, 255), 2, tipLength=0.25)
    write_ppm(path, frame)


def run_episode(
    scene: Scene,
    start: VehicleState,
    cfg: EpisodeConfig,
    frame_dir: str | Path | None = None,
) -> TrajectoryLog:
    if not scene.contains(start.position):
        raise StereoAvoidError("start state lies outside the world bounds")
    if check_collision(scene.at(0.0), start, cfg.collision_radius_m):
        raise StereoAvoidError("start state already collides with the scene")
    if frame_dir is not None:
        frame_dir = Path(frame_dir)
        frame_dir.mkdir(parents=True, exist_ok=True)

    controller = get_controller(cfg.controller)
    log = TrajectoryLog(seed=cfg.seed)
    state = start
    logger.info("Episode start at (%.2f, %.2f, %.2f), %d steps max", start.x, start.y, start.z, cfg.max_steps)

    for k in range(cfg.max_steps):
        t = k * cfg.dt
        world = scene.at(t)
        pair = render_stereo(world, state, cfg.rig, cfg.noise_stddev, seed=cfg.seed + k, workers=cfg.workers)
        _, depths = fused_pipeline(pair, cfg.match, cfg.grid, cfg.lut, workers=cfg.workers)
        command = controller.steer(depths).command
        hit = check_collision(world, state, cfg.collision_radius_m)
        log.steps.append(TrajectoryStep(t=t, state=state, command=command, depths=depths, collision=hit))
        logger.debug("step %d t=%.2f cmd=(%.3f, %.3f) center=%.2f", k, t, command.pitch, command.yaw, depths.center)
        if frame_dir is not None:
            write_debug_frame(frame_dir / f"frame_{k:04d}.ppm", pair.left, cfg.grid, command)
        if hit:
            logger.warning("Collision at step %d (t=%.2f)", k, t)
            log.outcome = Outcome.COLLISION
            break
        state = step_vehicle(state, command, cfg)
        if not scene.contains(state.position):
            logger.warning("Left the world bounds at step %d", k)
            log.outcome = Outcome.OUT_OF_BOUNDS
            break

    logger.info("Episode finished: %s after %d steps", log.outcome.value, len(log.steps))
    return log


def closest_approach(log: TrajectoryLog, scene: Scene) -> float:
    """Smallest vehicle-to-box distance over the logged steps."""
    return min((scene.at(s.t).distance(s.state.position) for s in log.steps), default=math.inf)
