"""Test configuration: isolated settings, shared rigs and image factories."""

import os

# Keep a developer's .env out of the tests; must be set before any app imports
os.environ["STEREO_AVOID_ENV_FILE"] = "tests/.env.missing"

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from app.config import settings  # noqa: E402
from app.sim.world import Box, Scene, VehicleState, render_stereo  # noqa: E402
from app.stereo.disparity import MatchParams  # noqa: E402
from app.stereo.geometry import CameraRig  # noqa: E402
from app.stereo.images import GrayImage, StereoPair  # noqa: E402


@pytest.fixture
def anyio_backend():
    return "asyncio"


@pytest.fixture
def rig():
    """The default full-resolution rig: 640x360, f=450 px, 120 mm baseline."""
    return settings.rig()


@pytest.fixture
def half_rig():
    return CameraRig.centered(0.12, 225.0, 320, 180)


@pytest.fixture
def sim_match():
    return MatchParams(window_radius_px=4, max_disparity_px=48, uniqueness_ratio=0.15, lr_consistency_px=1)


@pytest.fixture
def texture():
    """Factory for uniform-noise uint8 images."""

    def make(height: int, width: int, seed: int = 0) -> np.ndarray:
        return np.random.default_rng(seed).integers(0, 256, size=(height, width), dtype=np.uint8)

    return make


@pytest.fixture
def shifted_pair(texture):
    """Factory for a pair whose right image is the left one moved ``shift`` px to the left."""

    def make(shift: int, height: int = 96, width: int = 160, seed: int = 0) -> StereoPair:
        left = texture(height, width, seed)
        right = np.roll(left, -shift, axis=1)
        return StereoPair(
            GrayImage.from_array(left),
            GrayImage.from_array(right),
            CameraRig.centered(0.12, 450.0, width, height),
        )

    return make


@pytest.fixture
def wall_pair():
    """Factory for a rendered pair looking straight at a textured wall ``z_m`` ahead."""

    def make(z_m: float, rig: CameraRig, seed: int = 7) -> StereoPair:
        scene = Scene(boxes=(Box(min=(-6.0, -6.0, z_m), max=(6.0, 6.0, z_m + 0.1), seed=seed),))
        return render_stereo(scene, VehicleState(), rig)

    return make
