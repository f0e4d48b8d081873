import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.config import settings
from app.errors import InvalidDepthError, StereoAvoidError
from app.fuzzy.controller import SteerCommand
from app.sim.episode import MAX_PITCH_RAD, step_vehicle
from app.sim.world import (
    SKY_INTENSITY,
    Box,
    Scene,
    VehicleState,
    check_collision,
    ground_truth_depth,
    load_scene,
    project,
    render_stereo,
)
from app.stereo.disparity import MatchParams, block_match
from app.stereo.geometry import epipolar_residual, rectified_fundamental


def _wall(z_m: float) -> Scene:
    return Scene(boxes=(Box(min=(-6.0, -6.0, z_m), max=(6.0, 6.0, z_m + 0.1), seed=3),))


def test_box_needs_positive_extent():
    with pytest.raises(ValidationError):
        Box(min=(0, 0, 0), max=(1, 0, 1))


def test_box_motion_and_distance():
    box = Box(min=(0, 0, 0), max=(1, 1, 1), velocity=(-0.5, 0, 0))
    moved = box.at(2.0)
    assert moved.min_corner == (-1.0, 0.0, 0.0) and moved.max_corner == (0.0, 1.0, 1.0)
    assert box.distance((0.5, 0.5, 0.5)) == 0.0
    assert box.distance((3.0, 0.5, 0.5)) == pytest.approx(2.0)
    assert box.distance((2.0, 2.0, 0.5)) == pytest.approx(math.sqrt(2))


def test_scene_json_uses_min_max_keys(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text('{"boxes": [{"min": [-1, -1, 2], "max": [1, 1, 2.5], "seed": 4}],'
                    ' "bounds": [[-5, -5, -5], [5, 5, 5]]}')
    scene = load_scene(path)
    assert scene.boxes[0].min_corner == (-1.0, -1.0, 2.0)
    assert scene.contains((0, 0, 0)) and not scene.contains((0, 0, 6))


def test_collision_examples():
    scene = Scene(boxes=(Box(min=(1.0, -1, -1), max=(2.0, 1, 1)),))
    assert check_collision(scene, VehicleState(x=1.5), 0.25)
    assert not check_collision(scene, VehicleState(x=0.0), 0.25)
    # touching counts
    assert check_collision(scene, VehicleState(x=0.75), 0.25)
    with pytest.raises(StereoAvoidError):
        check_collision(scene, VehicleState(), 0.0)


def test_projection_satisfies_the_epipolar_constraint(rig):
    state = VehicleState(x=0.3, y=-0.2, z=0.5, heading_yaw=0.4, heading_pitch=-0.2)
    forward, right, up = state.axes()
    F = rectified_fundamental()
    rng = np.random.default_rng(1)
    for a, b, depth in zip(rng.uniform(-0.5, 0.5, 50), rng.uniform(-0.3, 0.3, 50), rng.uniform(0.5, 5.0, 50)):
        point = state.position + depth * forward + a * right + b * up
        m1 = project(point, state, rig, "left")
        m2 = project(point, state, rig, "right")
        assert abs(epipolar_residual(m1, m2, F)) < 1e-6
        assert m1.x - m2.x == pytest.approx(rig.bf / depth, rel=1e-9)
    with pytest.raises(InvalidDepthError):
        project(state.position - forward, state, rig)


def test_camera_axes_are_orthonormal():
    state = VehicleState(heading_yaw=1.1, heading_pitch=0.4)
    axes = np.array(state.axes())
    assert np.allclose(axes @ axes.T, np.eye(3))
    forward, right, up = axes
    assert np.allclose(np.cross(right, up), forward)


def test_render_is_deterministic_per_seed(half_rig):
    scene = _wall(2.0)
    a = render_stereo(scene, VehicleState(), half_rig, noise_stddev=2.0, seed=9)
    b = render_stereo(scene, VehicleState(), half_rig, noise_stddev=2.0, seed=9)
    c = render_stereo(scene, VehicleState(), half_rig, noise_stddev=2.0, seed=10)
    assert np.array_equal(a.left.pixels, b.left.pixels)
    assert np.array_equal(a.right.pixels, b.right.pixels)
    assert not np.array_equal(a.left.pixels, c.left.pixels)


def test_render_does_not_depend_on_worker_count(half_rig):
    scene = _wall(1.7)
    one = render_stereo(scene, VehicleState(), half_rig, workers=1)
    four = render_stereo(scene, VehicleState(), half_rig, workers=4)
    assert np.array_equal(one.left.pixels, four.left.pixels)
    assert np.array_equal(one.right.pixels, four.right.pixels)


def test_empty_scene_renders_sky(half_rig):
    pair = render_stereo(Scene(), VehicleState(), half_rig)
    assert np.all(pair.left.pixels == SKY_INTENSITY)
    assert np.all(np.isnan(ground_truth_depth(Scene(), VehicleState(), half_rig).values))


def test_render_outside_bounds_is_rejected(half_rig):
    with pytest.raises(StereoAvoidError):
        render_stereo(Scene(), VehicleState(z=20.0), half_rig)


def test_ground_truth_depth_is_camera_plane_distance(half_rig):
    truth = ground_truth_depth(_wall(1.5), VehicleState(), half_rig).values
    assert np.allclose(truth, 1.5, atol=1e-5)
    turned = ground_truth_depth(_wall(1.5), VehicleState(heading_yaw=0.3), half_rig).values
    # plane depth along the optical axis grows as 1.5 / cos(yaw)
    assert truth.shape == turned.shape
    assert turned[90, 160] == pytest.approx(1.5 / math.cos(0.3), rel=1e-5)


def test_wall_disparity_matches_geometry(wall_pair, rig):
    dmap = block_match(wall_pair(1.5, rig), MatchParams(max_disparity_px=64, lr_consistency_px=1))
    valid = dmap.values[dmap.valid_mask()]
    assert valid.size > 0.8 * (360 - 8) * (640 - 8 - 64)
    assert np.mean(np.abs(valid - 36) <= 1) > 0.95


def test_block_match_tracks_ground_truth(half_rig, sim_match):
    scene = Scene(boxes=(
        Box(min=(-4.0, -3.0, 2.5), max=(4.0, 3.0, 2.6), seed=1),
        Box(min=(-0.3, -0.4, 1.2), max=(0.5, 0.3, 1.6), seed=2),
    ))
    pair = render_stereo(scene, VehicleState(), half_rig)
    dmap = block_match(pair, sim_match)
    truth = ground_truth_depth(scene, VehicleState(), half_rig).values
    both = dmap.valid_mask() & np.isfinite(truth)
    expected = half_rig.bf / truth[both]
    assert both.sum() > 0.5 * truth.size
    assert np.mean(np.abs(dmap.values[both] - expected) <= 1.0) > 0.9


def test_step_vehicle_examples(half_rig, sim_match):
    cfg = settings.episode_defaults(rig=half_rig, match=sim_match)
    start = VehicleState(speed=0.5)
    straight = step_vehicle(start, SteerCommand(), cfg)
    assert (straight.x, straight.y, straight.z) == pytest.approx((0.0, 0.0, 0.05))

    turned = step_vehicle(start, SteerCommand(yaw=0.5), cfg)
    assert turned.heading_yaw == pytest.approx(0.2)
    assert turned.x == pytest.approx(0.05 * math.sin(0.2))
    back = step_vehicle(turned, SteerCommand(yaw=-0.5), cfg)
    assert back.heading_yaw == pytest.approx(0.0, abs=1e-12)

    state = start
    for _ in range(20):
        state = step_vehicle(state, SteerCommand(pitch=1.0), cfg)
    assert state.heading_pitch == pytest.approx(MAX_PITCH_RAD)
