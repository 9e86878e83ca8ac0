"""Raster containers and resampling between panorama and window views.

An equirectangular (ERA) frame maps pixel axes linearly to the sphere:
column 0 is longitude -pi, row 0 is latitude +pi/2, and pixel (i, j)
covers [i, i+1) x [j, j+1) with its center at (i + 0.5, j + 0.5).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import SphereCoord, WindowSpec, window_grid_rays

ERAI_MAGIC = b"ERAI"


@dataclass(frozen=True)
class EraImage:
    """Immutable 2:1 equirectangular raster, 8-bit, 1 or 3 channels."""

    width: int
    height: int
    channels: int
    data: np.ndarray  # (height, width, channels) uint8

    def __post_init__(self):
        if self.width != 2 * self.height:
            raise ValueError(
                f"equirectangular frame must be 2:1, got {self.width}x{self.height}"
            )
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if self.data.dtype != np.uint8:
            raise ValueError("samples must be uint8")
        self.data.flags.writeable = False

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "EraImage":
        if arr.ndim == 2:
            arr = arr[:, :, None]
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr)


@dataclass(frozen=True)
class WindowImage:
    """Rendered sub-projection raster together with its WindowSpec."""

    spec: WindowSpec
    raster: np.ndarray  # (out_h, out_w, channels) uint8

    def __post_init__(self):
        if self.raster.shape[:2] != (self.spec.out_h, self.spec.out_w):
            raise ValueError("raster dimensions do not match the window spec")
        self.raster.flags.writeable = False


def era_pixel_to_sphere(width: int, height: int, px: float, py: float) -> SphereCoord:
    """Continuous ERA pixel coordinate to canonical direction (wraps in x)."""
    lon = -np.pi + (px / width) * 2.0 * np.pi
    lat = np.pi / 2 - (py / height) * np.pi
    return SphereCoord(float(lat), float(lon))


def sphere_to_era_pixel(
    width: int, height: int, s: SphereCoord
) -> tuple[float, float]:
    """Canonical direction to continuous ERA pixel coordinate in [0,W)x[0,H]."""
    px = (s.lon + np.pi) * width / (2.0 * np.pi)
    py = (np.pi / 2 - s.lat) * height / np.pi
    if px >= width:
        px -= width
    return float(px), float(py)


def sphere_to_era_pixel_arrays(
    width: int, height: int, lat: np.ndarray, lon: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized sphere_to_era_pixel over angle arrays."""
    px = (lon + np.pi) * (width / (2.0 * np.pi))
    py = (np.pi / 2 - lat) * (height / np.pi)
    px = np.where(px >= width, px - width, px)
    return px, py


def bilinear_sample(data: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Bilinear sampling at pixel-center coordinates.

    Wraps horizontally (cylinder) and clamps vertically at the poles.
    """
    h, w = data.shape[:2]
    gx = px - 0.5
    gy = py - 0.5
    x0f = np.floor(gx)
    y0f = np.floor(gy)
    fx = (gx - x0f).astype(np.float32)[..., None]
    fy = (gy - y0f).astype(np.float32)[..., None]
    x0 = x0f.astype(np.int64) % w
    x1 = x0 + 1
    x1[x1 == w] = 0
    y0 = np.clip(y0f.astype(np.int64), 0, h - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    flat = data.reshape(-1, data.shape[2])
    row0 = y0 * w
    row1 = y1 * w
    # interpolate in float32 with in-place ops; sample values are 8-bit so
    # the 24-bit mantissa loses nothing that survives requantization
    top = flat[row0 + x0].astype(np.float32)
    tr = flat[row0 + x1].astype(np.float32)
    np.subtract(tr, top, out=tr)
    np.multiply(tr, fx, out=tr)
    np.add(top, tr, out=top)
    bot = flat[row1 + x0].astype(np.float32)
    br = flat[row1 + x1].astype(np.float32)
    np.subtract(br, bot, out=br)
    np.multiply(br, fx, out=br)
    np.add(bot, br, out=bot)
    np.subtract(bot, top, out=bot)
    np.multiply(bot, fy, out=bot)
    np.add(top, bot, out=top)
    return top


def render_window(src: EraImage, spec: WindowSpec) -> WindowImage:
    """Render a sub-projection view out of an ERA frame.

    Each output pixel center is traced through the window projection to a
    direction, then to a continuous ERA coordinate, and bilinearly sampled.
    Pure and deterministic: fixed inputs give bit-identical rasters.
    """
    lat, lon = window_grid_rays(spec)
    ex, ey = sphere_to_era_pixel_arrays(src.width, src.height, lat, lon)
    values = bilinear_sample(src.data, ex, ey)
    np.rint(values, out=values)
    raster = values.astype(np.uint8)
    return WindowImage(spec=spec, raster=raster)


def read_png(path: str | Path) -> EraImage:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im)
    return EraImage.from_array(arr)


def write_png(path: str | Path, data: np.ndarray) -> None:
    _image_from_array(data).save(path, format="PNG")


def encode_png(data: np.ndarray) -> bytes:
    buf = io.BytesIO()
    _image_from_array(data).save(buf, format="PNG")
    return buf.getvalue()


def _image_from_array(data: np.ndarray) -> Image.Image:
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    return Image.fromarray(data)


def read_erai(path: str | Path) -> EraImage:
    """Read the headerless-payload raw fixture format.

    Layout: magic "ERAI", little-endian u32 width, u32 height, u8 channels,
    then row-major samples.
    """
    raw = Path(path).read_bytes()
    if raw[:4] != ERAI_MAGIC:
        raise ValueError(f"{path}: not an ERAI file")
    width, height = struct.unpack_from("<II", raw, 4)
    channels = raw[12]
    expected = 13 + width * height * channels
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8, offset=13).reshape(
        height, width, channels
    )
    return EraImage(width=width, height=height, channels=channels, data=arr.copy())


def write_erai(path: str | Path, img: EraImage) -> None:
    header = ERAI_MAGIC + struct.pack("<II", img.width, img.height) + bytes(
        [img.channels]
    )
    Path(path).write_bytes(header + img.data.tobytes())


def read_image(path: str | Path) -> EraImage:
    """Read a panorama by extension: .erai raw fixture, else PNG."""
    p = Path(path)
    if p.suffix.lower() == ".erai":
        return read_erai(p)
    return read_png(p)
