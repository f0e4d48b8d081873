import json

import cv2
import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import NoValidDepthError, StereoAvoidError
from app.pipeline import (
    RunConfig,
    bench,
    read_depth_csv,
    run_pipeline,
    write_depth_csv,
)
from app.sim.world import Box, Scene, VehicleState, render_stereo
from app.stereo.disparity import DepthMap, MatchParams, fused_pipeline
from app.stereo.geometry import CameraRig
from app.stereo.images import GrayImage, StereoPair, read_pgm, write_pgm
from app.stereo.refine import DepthLUT, build_lut, refine
from app.stereo.regions import make_grid


def _write_pair(tmp_path, pair: StereoPair):
    write_pgm(tmp_path / "left.pgm", pair.left)
    write_pgm(tmp_path / "right.pgm", pair.right)
    return tmp_path / "left.pgm", tmp_path / "right.pgm"


def test_wall_ahead_beyond_the_near_band_flies_straight(tmp_path, wall_pair, rig):
    left, right = _write_pair(tmp_path, wall_pair(3.0, rig))
    out = tmp_path / "out"
    result = run_pipeline(left, right, RunConfig(out_dir=out))
    assert result.decision.command.pitch == pytest.approx(0.0, abs=1e-9)
    assert result.decision.command.yaw == pytest.approx(0.0, abs=1e-9)
    assert result.depths.center == pytest.approx(3.0, rel=0.05)

    summary = json.loads((out / "command.json").read_text())
    assert summary["active_controller"] == "primary"
    depth = read_depth_csv(out / "depth.csv")
    assert (depth.width_px, depth.height_px) == (640, 360)
    assert read_pgm(out / "disparity.pgm").width_px == 640


def test_obstacle_low_in_view_pitches_up(tmp_path, rig):
    scene = Scene(boxes=(Box(min=(-2.0, -2.0, 1.0), max=(2.0, 0.05, 1.2), seed=4),))
    left, right = _write_pair(tmp_path, render_stereo(scene, VehicleState(), rig))
    result = run_pipeline(left, right, RunConfig())
    assert result.decision.command.pitch > 0.2
    assert result.decision.command.yaw == pytest.approx(0.0, abs=1e-6)


def test_side_by_side_input_matches_separate_files(tmp_path, wall_pair, rig):
    pair = wall_pair(1.2, rig)
    left, right = _write_pair(tmp_path, pair)
    write_pgm(tmp_path / "sbs.pgm", GrayImage.from_array(cv2.hconcat([pair.left.pixels, pair.right.pixels])))
    cfg = RunConfig(max_disparity_px=64)
    assert run_pipeline(tmp_path / "sbs.pgm", None, cfg) == run_pipeline(left, right, cfg)


def test_uniform_images_have_no_valid_depth(tmp_path, rig):
    flat = GrayImage.from_array(np.full((360, 640), 120))
    write_pgm(tmp_path / "flat.pgm", flat)
    with pytest.raises(NoValidDepthError):
        run_pipeline(tmp_path / "flat.pgm", tmp_path / "flat.pgm", RunConfig())


def test_run_config_checks_files_and_overrides(tmp_path):
    with pytest.raises(ValidationError, match="missing.json"):
        RunConfig(rig_path=tmp_path / "missing.json")
    params = RunConfig(window_radius_px=3, lr_consistency_px=1).match_params()
    assert params.window_radius_px == 3 and params.lr_consistency_px == 1
    assert params.max_disparity_px == 64
    rig_file = tmp_path / "rig.json"
    rig_file.write_text(CameraRig.centered(0.1, 300, 320, 240).model_dump_json())
    assert RunConfig(rig_path=rig_file).rig().focal_px == 300


def test_depth_csv_round_trip(tmp_path):
    values = np.array([[1.5, np.nan], [0.123456789, 9.0]], dtype=np.float32)
    write_depth_csv(tmp_path / "d.csv", DepthMap(values=values))
    assert np.array_equal(read_depth_csv(tmp_path / "d.csv").values, values, equal_nan=True)


def test_biased_baseline_is_fixed_by_the_lut(rig):
    true_rig = rig
    assumed = CameraRig.centered(0.10, rig.focal_px, rig.width_px, rig.height_px)
    params = MatchParams(max_disparity_px=64, lr_consistency_px=1)
    grid = make_grid(640, 360, 150)

    def measured(z_m: float) -> float:
        scene = Scene(boxes=(Box(min=(-6.0, -6.0, z_m), max=(6.0, 6.0, z_m + 0.1), seed=13),))
        rendered = render_stereo(scene, VehicleState(), true_rig)
        pair = StereoPair(rendered.left, rendered.right, assumed)
        depth, _ = fused_pipeline(pair, params, grid, DepthLUT.identity())
        return float(np.nanmedian(depth.values))

    truths = [1.0, 1.25, 1.5, 1.75, 2.0]
    lut = build_lut([(measured(z), z) for z in truths])

    raw = measured(1.6)
    assert abs(raw - 1.6) / 1.6 > 0.1
    assert abs(refine(lut, raw) - 1.6) / 1.6 < 0.05


def test_bench_reports_identical_outputs(half_rig):
    params = MatchParams(max_disparity_px=32, lr_consistency_px=1)
    report = bench([1, 2], rig=half_rig, params=params, repeats=1)
    assert report.fused_equals_unfused
    assert [e.workers for e in report.entries] == [1, 2]
    assert report.speedup(1) == 1.0
    assert (report.width_px, report.height_px) == (320, 180)


def test_bench_needs_a_sequential_baseline(half_rig):
    with pytest.raises(StereoAvoidError):
        bench([2, 4], rig=half_rig)
    with pytest.raises(StereoAvoidError):
        bench([1], rig=half_rig)


@pytest.mark.perf
def test_four_workers_are_at_least_twice_as_fast(rig):
    report = bench([1, 4], rig=rig, params=MatchParams(max_disparity_px=64), repeats=3)
    assert report.speedup(4) >= 2.0
