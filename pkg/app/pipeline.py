"""End-to-end runs over image files, output writers and the worker-count benchmark."""

import csv
import json
import logging
import time
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import settings
from app.errors import DeterminismError, ImageFormatError, NoValidDepthError, StereoAvoidError
from app.fuzzy.controller import ControllerConfig, SteerDecision, get_controller
from app.sim.world import Box, Scene, VehicleState, render_stereo
from app.stereo.disparity import (
    DepthMap,
    DisparityMap,
    MatchParams,
    block_match,
    disparity_to_depth,
    fused_pipeline,
    fused_pipeline_full,
)
from app.stereo.geometry import CameraRig, load_rig
from app.stereo.images import GrayImage, load_pair, write_pgm
from app.stereo.refine import DepthLUT, read_lut_csv, refine_map
from app.stereo.regions import RegionDepths, RegionGrid, region_min_depths

logger = logging.getLogger("pipeline")


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def write_depth_csv(path: str | Path, depth: DepthMap) -> None:
    """One CSV row per image row, meters; invalid pixels are ``nan``."""
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        for row in depth.values:
            writer.writerow([repr(float(v)) for v in row])


def read_depth_csv(path: str | Path) -> DepthMap:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        try:
            rows = [[float(v) for v in row] for row in csv.reader(f)]
        except ValueError as e:
            raise ImageFormatError(f"{path}: bad depth value ({e})") from e
    if not rows or len({len(r) for r in rows}) != 1:
        raise ImageFormatError(f"{path}: depth CSV must be a non-empty rectangular grid")
    return DepthMap(values=np.array(rows, dtype=np.float32))


def write_disparity_pgm(path: str | Path, disparity: DisparityMap, scale: float = 4.0) -> None:
    """Disparity times ``scale`` as 8-bit gray, saturating at 255; invalid pixels are 0."""
    scaled = np.nan_to_num(disparity.values, nan=0.0) * scale
    write_pgm(path, GrayImage.from_array(np.clip(np.rint(scaled), 0, 255)))


# ---------------------------------------------------------------------------
# Single run
# ---------------------------------------------------------------------------


class RunConfig(BaseModel):
    """Inputs for one pipeline run; ``None`` fields fall back to settings."""

    model_config = ConfigDict(frozen=True)

    rig_path: Path | None = None
    rules: str | None = None
    lut_path: Path | None = None
    window_radius_px: int | None = Field(None, ge=1)
    max_disparity_px: int | None = Field(None, ge=1)
    uniqueness_ratio: float | None = Field(None, ge=0, lt=1)
    lr_consistency_px: int | None = Field(None, ge=0)
    workers: int | None = Field(None, ge=1)
    out_dir: Path | None = None
    disparity_scale: float = Field(4.0, gt=0)

    @model_validator(mode="after")
    def _files_exist(self):
        for label, path in (("rig", self.rig_path), ("LUT", self.lut_path)):
            if path is not None and not path.is_file():
                raise ValueError(f"{label} file {path} does not exist")
        return self

    def rig(self) -> CameraRig:
        return load_rig(self.rig_path) if self.rig_path else settings.rig()

    def match_params(self) -> MatchParams:
        base = settings.match_params()
        overrides = {
            k: v
            for k, v in (
                ("window_radius_px", self.window_radius_px),
                ("max_disparity_px", self.max_disparity_px),
                ("uniqueness_ratio", self.uniqueness_ratio),
                ("lr_consistency_px", self.lr_consistency_px),
            )
            if v is not None
        }
        return MatchParams(**{**base.model_dump(), **overrides})

    def lut(self) -> DepthLUT:
        return read_lut_csv(self.lut_path) if self.lut_path else DepthLUT.identity()

    def controller_config(self) -> ControllerConfig:
        cfg = settings.controller_config()
        if self.rules:
            cfg = cfg.model_copy(update={"rules": self.rules})
        return cfg


class PipelineResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    depths: RegionDepths
    decision: SteerDecision
    valid_fraction: float

    def summary(self) -> dict:
        return {
            "depths": self.depths.as_dict(),
            "pitch": self.decision.command.pitch,
            "yaw": self.decision.command.yaw,
            "active_controller": self.decision.active_controller.value,
            "rule_strengths": self.decision.rule_strengths,
            "valid_fraction": self.valid_fraction,
        }


def run_pipeline(left_path: str | Path, right_path: str | Path | None, cfg: RunConfig) -> PipelineResult:
    """Fused depth pass then steering; writes depth CSV, disparity PGM and command JSON to ``out_dir``.

    ``right_path`` None means ``left_path`` is a side-by-side frame.
    """
    # parse every input before any computation
    rig = cfg.rig()
    params = cfg.match_params()
    lut = cfg.lut()
    controller = get_controller(cfg.controller_config())
    pair = load_pair(left_path, right_path, rig)
    grid = settings.grid(rig.width_px, rig.height_px, rig.focal_px)

    disparity, depth, depths = fused_pipeline_full(pair, params, grid, lut, workers=cfg.workers)
    valid = depth.valid_mask()
    if not valid.any():
        raise NoValidDepthError(f"no valid disparity in {left_path}")
    decision = controller.steer(depths)
    result = PipelineResult(depths=depths, decision=decision, valid_fraction=float(valid.mean()))

    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_depth_csv(out / "depth.csv", depth)
        write_disparity_pgm(out / "disparity.pgm", disparity, cfg.disparity_scale)
        (out / "command.json").write_text(json.dumps(result.summary(), indent=2) + "\n", encoding="utf-8")
        logger.info("Wrote depth.csv, disparity.pgm and command.json to %s", out)
    return result


def unfused(pair, params: MatchParams, grid: RegionGrid, lut: DepthLUT, workers: int | None = None):
    """The four stages run one after another; reference for :func:`fused_pipeline`."""
    depth = disparity_to_depth(block_match(pair, params, workers=workers), pair.rig)
    refined = DepthMap(values=refine_map(lut, depth.values))
    return refined, region_min_depths(refined, grid)


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------


class BenchEntry(BaseModel):
    workers: int
    seconds: float
    speedup: float


class BenchReport(BaseModel):
    width_px: int
    height_px: int
    max_disparity_px: int
    entries: list[BenchEntry]
    fused_equals_unfused: bool

    def speedup(self, workers: int) -> float:
        return max(e.speedup for e in self.entries if e.workers == workers)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["width_px", "height_px", "max_disparity_px", "workers", "seconds", "speedup",
                             "fused_equals_unfused"])
            for e in self.entries:
                writer.writerow([self.width_px, self.height_px, self.max_disparity_px, e.workers,
                                 repr(e.seconds), repr(e.speedup), int(self.fused_equals_unfused)])


def bench_pair(rig: CameraRig, seed: int = 0):
    """Fixed scene for timing: a textured wall with a box in front of it."""
    scene = Scene(boxes=(
        Box(min=(-4.0, -3.0, 2.5), max=(4.0, 3.0, 2.6), seed=seed + 1),
        Box(min=(-0.3, -0.4, 1.2), max=(0.5, 0.3, 1.6), seed=seed + 2),
    ))
    return render_stereo(scene, VehicleState(), rig, seed=seed)


def _same(a: tuple[DepthMap, RegionDepths], b: tuple[DepthMap, RegionDepths]) -> bool:
    return np.array_equal(a[0].values, b[0].values, equal_nan=True) and a[1] == b[1]


def bench(
    worker_counts: list[int],
    rig: CameraRig | None = None,
    params: MatchParams | None = None,
    repeats: int = 1,
) -> BenchReport:
    if 1 not in worker_counts or len(worker_counts) < 2:
        raise StereoAvoidError("bench needs at least two worker counts including 1")
    rig = rig or settings.rig()
    params = params or settings.match_params()
    grid = settings.grid(rig.width_px, rig.height_px, rig.focal_px)
    lut = DepthLUT.identity()
    pair = bench_pair(rig)

    reference = unfused(pair, params, grid, lut, workers=1)
    times: list[tuple[int, float]] = []
    for n in worker_counts:
        best = float("inf")
        for _ in range(max(1, repeats)):
            t0 = time.perf_counter()
            out = fused_pipeline(pair, params, grid, lut, workers=n)
            best = min(best, time.perf_counter() - t0)
            if not _same(out, reference):
                raise DeterminismError(f"fused output with {n} workers differs from the sequential composition")
        times.append((n, best))
        logger.info("bench: %d workers %.3f s", n, best)

    base = next(t for n, t in times if n == 1)
    entries = [BenchEntry(workers=n, seconds=t, speedup=base / t) for n, t in times]
    return BenchReport(
        width_px=rig.width_px,
        height_px=rig.height_px,
        max_disparity_px=params.max_disparity_px,
        entries=entries,
        fused_equals_unfused=True,
    )
