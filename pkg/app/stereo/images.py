"""Grayscale image containers and binary PGM/PPM file I/O via OpenCV."""

import logging
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from app.errors import DimensionMismatchError, ImageFormatError
from app.stereo.geometry import CameraRig

logger = logging.getLogger("images")


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major 8-bit intensities, shape (height_px, width_px)."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.dtype != np.uint8:
            raise ImageFormatError(
                f"GrayImage needs a 2-D uint8 array, got {self.pixels.dtype} {self.pixels.shape}"
            )
        # own a private C-ordered copy so the caller's buffer stays writeable
        pixels = np.array(self.pixels, order="C")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def width_px(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height_px(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "GrayImage":
        return cls(np.asarray(arr, dtype=np.uint8))


@dataclass(frozen=True, eq=False)
class StereoPair:
    left: GrayImage
    right: GrayImage
    rig: CameraRig

    def __post_init__(self):
        shapes = {self.left.pixels.shape, self.right.pixels.shape, (self.rig.height_px, self.rig.width_px)}
        if len(shapes) != 1:
            raise DimensionMismatchError(
                f"left {self.left.pixels.shape}, right {self.right.pixels.shape} and rig "
                f"{self.rig.height_px}x{self.rig.width_px} must agree"
            )


def split_side_by_side(frame: GrayImage) -> tuple[GrayImage, GrayImage]:
    """Split a synchronized side-by-side frame at the vertical midline (left half first)."""
    if frame.width_px % 2:
        raise DimensionMismatchError(f"side-by-side frame width {frame.width_px} is odd")
    half = frame.width_px // 2
    return GrayImage.from_array(frame.pixels[:, :half]), GrayImage.from_array(frame.pixels[:, half:])


def _decode(data: bytes, magic: bytes, source: str) -> np.ndarray:
    if data[:2] != magic:
        raise ImageFormatError(f"{source}: expected binary {magic.decode()} header")
    flags = cv2.IMREAD_UNCHANGED if magic == b"P5" else cv2.IMREAD_COLOR
    arr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), flags)
    if arr is None or arr.dtype != np.uint8:
        raise ImageFormatError(f"{source}: not an 8-bit {magic.decode()} image")
    return arr


def decode_pgm(data: bytes, source: str = "<bytes>") -> GrayImage:
    return GrayImage.from_array(_decode(data, b"P5", source))


def read_pgm(path: str | Path) -> GrayImage:
    path = Path(path)
    return decode_pgm(path.read_bytes(), str(path))


def encode_pgm(image: GrayImage) -> bytes:
    ok, buf = cv2.imencode(".pgm", np.ascontiguousarray(image.pixels), [cv2.IMWRITE_PXM_BINARY, 1])
    if not ok:
        raise ImageFormatError("PGM encoding failed")
    return buf.tobytes()


def write_pgm(path: str | Path, image: GrayImage) -> None:
    Path(path).write_bytes(encode_pgm(image))


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a P6 file as an (H, W, 3) BGR array, OpenCV's channel order."""
    path = Path(path)
    return _decode(path.read_bytes(), b"P6", str(path))


def write_ppm(path: str | Path, bgr: np.ndarray) -> None:
    ok, buf = cv2.imencode(".ppm", np.ascontiguousarray(bgr, dtype=np.uint8), [cv2.IMWRITE_PXM_BINARY, 1])
    if not ok:
        raise ImageFormatError("PPM encoding failed")
    Path(path).write_bytes(buf.tobytes())


def load_pair(left_path: str | Path, right_path: str | Path | None, rig: CameraRig) -> StereoPair:
    """Load a pair from two PGMs, or from one side-by-side PGM when ``right_path`` is None."""
    if right_path is None:
        left, right = split_side_by_side(read_pgm(left_path))
    else:
        left, right = read_pgm(left_path), read_pgm(right_path)
    logger.debug("Loaded pair %dx%d", left.width_px, left.height_px)
    return StereoPair(left, right, rig)
