"""Annotation data model: angular bounding FOVs, panorama boxes, file I/O.

Objects in a panorama are annotated either as a BFOV (angular center plus
angular extents, drawn in a re-centered view) or as a pixel box directly
on the panorama.  Boxes that cross the longitude seam carry a wrap flag.

Dataset files are JSON with angles in degrees; degrees are quantized to
six decimals on write, which makes parse(write(parse(f))) == parse(f)
exact in floating point.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import ProjectionParams, SphereCoord, WindowSpec, window_rays
from .imaging import sphere_to_era_pixel_arrays

PERIMETER_SAMPLES_PER_EDGE = 64

VALID_SOURCES = ("bfov-derived", "corrected")


class DatasetFormatError(ValueError):
    """Dataset or detection file violates the JSON schema."""


class UnknownLabelWarning(UserWarning):
    """A label in the file is not part of the declared vocabulary."""


@dataclass(frozen=True)
class Bfov:
    """Bounding FOV: angular center plus angular extents of the object."""

    label: str
    center: SphereCoord
    extent_lat: float
    extent_lon: float

    def __post_init__(self):
        for name, ext in (
            ("extent_lat", self.extent_lat),
            ("extent_lon", self.extent_lon),
        ):
            if not 0.0 < ext <= math.pi:
                raise ValueError(f"{name} must be in (0, pi], got {ext}")


@dataclass(frozen=True)
class EraBox:
    """Axis-aligned panorama box; cx, cy is the center in continuous pixels."""

    label: str
    cx: float
    cy: float
    w: float
    h: float
    wraps: bool = False

    def __post_init__(self):
        if self.w <= 0.0 or self.h <= 0.0:
            raise ValueError("box dimensions must be positive")

    def x_start(self, width: float) -> float:
        """Left edge of the box arc, wrapped into [0, width)."""
        return (self.cx - self.w / 2.0) % width

    def contains(self, px: float, py: float, width: float) -> bool:
        """Wrap-aware point-in-box test on an image of the given width."""
        if not (self.cy - self.h / 2.0 <= py <= self.cy + self.h / 2.0):
            return False
        dx = (px - self.x_start(width)) % width
        return dx <= self.w


@dataclass(frozen=True)
class AnnotatedObject:
    """One ground-truth entry: a shape plus its provenance tag."""

    shape: Bfov | EraBox
    source: str = "bfov-derived"

    def __post_init__(self):
        if self.source not in VALID_SOURCES:
            raise ValueError(f"unknown source tag {self.source!r}")

    @property
    def label(self) -> str:
        return self.shape.label


@dataclass(frozen=True)
class FrameAnnotations:
    frame_id: str
    width: int
    height: int
    objects: list[AnnotatedObject] = field(default_factory=list)


def wrap_aware_hull(
    xs: np.ndarray, ys: np.ndarray, width: float, label: str = ""
) -> EraBox:
    """Axis-aligned hull of points on the panorama cylinder.

    The x interval is the minimal arc covering all points (the complement
    of the largest longitude gap); the wrap flag is set when that arc
    crosses the seam.
    """
    ys = np.asarray(ys, dtype=np.float64)
    cy = float(ys.min() + ys.max()) / 2.0
    h = float(ys.max() - ys.min())

    xs = np.sort(np.asarray(xs, dtype=np.float64) % width)
    gaps = np.diff(xs)
    wrap_gap = xs[0] + width - xs[-1]
    if len(gaps) == 0 or wrap_gap >= gaps.max():
        start, w = xs[0], float(xs[-1] - xs[0])
    else:
        i = int(np.argmax(gaps))
        start, w = xs[i + 1], float(width - gaps[i])
    cx = (start + w / 2.0) % width
    wraps = bool(start + w > width)
    return EraBox(label=label, cx=float(cx), cy=cy, w=w, h=h, wraps=wraps)


def _rect_perimeter(hx: float, hy: float, per_edge: int) -> tuple[np.ndarray, np.ndarray]:
    """Points walking the perimeter of [-hx, hx] x [-hy, hy], corners once."""
    t = np.linspace(-1.0, 1.0, per_edge, endpoint=False)
    xs = np.concatenate([t * hx, np.full(per_edge, hx), -t * hx, np.full(per_edge, -hx)])
    ys = np.concatenate([np.full(per_edge, hy), -t * hy, np.full(per_edge, -hy), t * hy])
    return xs, ys


def bfov_perimeter_era(
    b: Bfov, width: int, height: int, per_edge: int = PERIMETER_SAMPLES_PER_EDGE
) -> tuple[np.ndarray, np.ndarray]:
    """ERA pixel coordinates of the BFOV's centered-view box perimeter.

    The box is taken in a perspective view centered on the object (the
    geometry of the annotation tool), then mapped back to the panorama.
    """
    if b.extent_lat >= math.pi or b.extent_lon >= math.pi:
        raise ValueError("perspective centering requires extents < pi")
    params = ProjectionParams(d=0.0, fov_h=b.extent_lat, fov_w=b.extent_lon)
    # raster [0,2]x[0,2] spans exactly the extent rectangle on the plane
    spec = WindowSpec(center=b.center, params=params, out_w=2, out_h=2)
    pxs, pys = _rect_perimeter(1.0, 1.0, per_edge)
    lat, lon = window_rays(spec, pxs + 1.0, 1.0 - pys)
    return sphere_to_era_pixel_arrays(width, height, lat, lon)


def bfov_to_erabox(b: Bfov, width: int, height: int) -> EraBox:
    """Convert a BFOV to the axis-aligned panorama box containing it."""
    ex, ey = bfov_perimeter_era(b, width, height)
    return wrap_aware_hull(ex, ey, width, label=b.label)


# ---------------------------------------------------------------------------
# dataset JSON

def _deg(rad: float) -> float:
    return round(math.degrees(rad), 6)


def _require(obj: dict, key: str, kind, ctx: str):
    if key not in obj:
        raise DatasetFormatError(f"{ctx}: missing field {key!r}")
    value = obj[key]
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise DatasetFormatError(
            f"{ctx}.{key}: expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _object_from_json(obj: dict, ctx: str) -> AnnotatedObject:
    label = _require(obj, "label", str, ctx)
    kind = _require(obj, "kind", str, ctx)
    source = obj.get("source", "bfov-derived")
    if source not in VALID_SOURCES:
        raise DatasetFormatError(f"{ctx}.source: unknown tag {source!r}")
    try:
        if kind == "bfov":
            raw = _require(obj, "bfov", dict, ctx)
            shape: Bfov | EraBox = Bfov(
                label=label,
                center=SphereCoord(
                    math.radians(_require(raw, "lat", float, f"{ctx}.bfov")),
                    math.radians(_require(raw, "lon", float, f"{ctx}.bfov")),
                ),
                extent_lat=math.radians(_require(raw, "dlat", float, f"{ctx}.bfov")),
                extent_lon=math.radians(_require(raw, "dlon", float, f"{ctx}.bfov")),
            )
        elif kind == "box":
            raw = _require(obj, "box", dict, ctx)
            shape = EraBox(
                label=label,
                cx=_require(raw, "cx", float, f"{ctx}.box"),
                cy=_require(raw, "cy", float, f"{ctx}.box"),
                w=_require(raw, "w", float, f"{ctx}.box"),
                h=_require(raw, "h", float, f"{ctx}.box"),
                wraps=bool(raw.get("wraps", False)),
            )
        else:
            raise DatasetFormatError(f"{ctx}.kind: expected 'bfov' or 'box', got {kind!r}")
    except ValueError as exc:
        if isinstance(exc, DatasetFormatError):
            raise
        raise DatasetFormatError(f"{ctx}: {exc}") from exc
    return AnnotatedObject(shape=shape, source=source)


def _object_to_json(entry: AnnotatedObject) -> dict:
    shape = entry.shape
    out: dict = {"label": entry.label, "source": entry.source}
    if isinstance(shape, Bfov):
        out["kind"] = "bfov"
        out["bfov"] = {
            "lat": _deg(shape.center.lat),
            "lon": _deg(shape.center.lon),
            "dlat": _deg(shape.extent_lat),
            "dlon": _deg(shape.extent_lon),
        }
    else:
        out["kind"] = "box"
        out["box"] = {
            "cx": shape.cx,
            "cy": shape.cy,
            "w": shape.w,
            "h": shape.h,
            "wraps": shape.wraps,
        }
    return out


def frame_from_json(raw: dict, ctx: str = "frame") -> FrameAnnotations:
    frame_id = _require(raw, "id", str, ctx)
    width = _require(raw, "width", int, ctx)
    height = _require(raw, "height", int, ctx)
    objects = []
    for j, entry in enumerate(_require(raw, "objects", list, ctx)):
        if not isinstance(entry, dict):
            raise DatasetFormatError(f"{ctx}.objects[{j}]: expected object")
        objects.append(_object_from_json(entry, f"{ctx}.objects[{j}]"))
    return FrameAnnotations(frame_id=frame_id, width=width, height=height, objects=objects)


def frame_to_json(frame: FrameAnnotations) -> dict:
    return {
        "id": frame.frame_id,
        "width": frame.width,
        "height": frame.height,
        "objects": [_object_to_json(o) for o in frame.objects],
    }


def _check_vocabulary(frames: list[FrameAnnotations], vocabulary) -> None:
    if vocabulary is None:
        return
    unknown = {
        o.label for f in frames for o in f.objects if o.label not in vocabulary
    }
    for label in sorted(unknown):
        warnings.warn(f"label {label!r} not in vocabulary", UnknownLabelWarning)


def parse_dataset(path: str | Path, vocabulary=None) -> list[FrameAnnotations]:
    """Parse a dataset file; field-path diagnostics on schema violations."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DatasetFormatError(f"{path}: top level must be an object")
    frames = [
        frame_from_json(f, f"frames[{i}]")
        for i, f in enumerate(_require(raw, "frames", list, str(path)))
    ]
    _check_vocabulary(frames, vocabulary)
    return frames


def write_dataset(path: str | Path, frames: list[FrameAnnotations]) -> None:
    payload = {"frames": [frame_to_json(f) for f in frames]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
