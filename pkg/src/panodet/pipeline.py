"""Per-frame detection pipeline: render, detect, back-project, re-align.

Window detections are mapped back to the panorama as the axis-aligned
hull of their back-projected outline (the minimum frame), then shrunk
around their center by exp(-d^2 / sigma), where d is the detection's
normalized planar distance from its window center.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annotations import DatasetFormatError, EraBox, _require, wrap_aware_hull
from .detectors import DetectorOutputError, DetectorPort, WindowDetection
from .geometry import WindowSpec, plane_extents, window_pixel_to_plane, window_rays
from .imaging import EraImage, render_window, sphere_to_era_pixel_arrays

HULL_SAMPLES_PER_EDGE = 64


class FrameProcessingError(RuntimeError):
    """One or more windows of a frame failed; the frame is not partial."""


@dataclass(frozen=True)
class RealignParams:
    """Size penalty exp(-d^2/sigma) applied to back-projected hulls."""

    sigma: float = 0.6

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class Detection:
    """A re-aligned panorama detection with its window provenance."""

    label: str
    score: float
    box: EraBox
    window_index: int
    center_dist: float  # normalized planar distance from window center

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")
        if not 0.0 <= self.center_dist <= 1.0:
            raise ValueError("center_dist must be in [0, 1]")


@dataclass(frozen=True)
class FrameDetections:
    frame_id: str
    width: int
    height: int
    detections: list[Detection] = field(default_factory=list)


def detect_window(
    detector: DetectorPort, win, window_index: int = 0
) -> list[WindowDetection]:
    """Run the detector on one window; validate and clip its output."""
    raw = detector.detect(win, window_index)
    out = []
    for i, det in enumerate(raw):
        values = (det.score, det.x, det.y, det.w, det.h)
        if any(not math.isfinite(v) for v in values):
            raise DetectorOutputError(f"detection {i}: non-finite field")
        if not 0.0 <= det.score <= 1.0:
            raise DetectorOutputError(f"detection {i}: score {det.score} outside [0, 1]")
        if det.w <= 0.0 or det.h <= 0.0:
            raise DetectorOutputError(f"detection {i}: non-positive size")
        x0 = max(0.0, det.x)
        y0 = max(0.0, det.y)
        x1 = min(float(win.spec.out_w), det.x + det.w)
        y1 = min(float(win.spec.out_h), det.y + det.h)
        if x1 - x0 <= 0.0 or y1 - y0 <= 0.0:
            raise DetectorOutputError(f"detection {i}: rectangle outside the raster")
        out.append(replace(det, x=x0, y=y0, w=x1 - x0, h=y1 - y0))
    return out


def backproject_min_frame(
    wd: WindowDetection, spec: WindowSpec, era_width: int, era_height: int
) -> tuple[EraBox, float]:
    """Minimum frame of a window detection plus its center distance d.

    Samples the rectangle outline (64 points per edge), maps every sample
    through the window projection to panorama pixels, and returns the
    wrap-aware axis-aligned hull.  d is the rectangle center's planar
    distance from the window center, normalized by the center-to-corner
    distance, so d = 0 on axis and d = 1 at a window corner.
    """
    if wd.w <= 0.0 or wd.h <= 0.0:
        raise ValueError("degenerate detection rectangle")
    n = HULL_SAMPLES_PER_EDGE
    t = np.linspace(0.0, 1.0, n, endpoint=False)
    xs = np.concatenate(
        [wd.x + t * wd.w, np.full(n, wd.x + wd.w), wd.x + (1 - t) * wd.w, np.full(n, wd.x)]
    )
    ys = np.concatenate(
        [np.full(n, wd.y), wd.y + t * wd.h, np.full(n, wd.y + wd.h), wd.y + (1 - t) * wd.h]
    )
    lat, lon = window_rays(spec, xs, ys)
    if not (np.isfinite(lat).all() and np.isfinite(lon).all()):
        raise ValueError("detection rectangle leaves the projection domain")
    ex, ey = sphere_to_era_pixel_arrays(era_width, era_height, lat, lon)
    hull = wrap_aware_hull(ex, ey, era_width, label=wd.label)

    center = window_pixel_to_plane(spec, wd.x + wd.w / 2.0, wd.y + wd.h / 2.0)
    hx, hy = plane_extents(spec.params)
    dist = math.hypot(center.x, center.y) / math.hypot(hx, hy)
    return hull, min(dist, 1.0)


def realign(
    raw: EraBox, center_dist: float, params: RealignParams, era_width: int
) -> EraBox:
    """Shrink a minimum frame around its center by exp(-d^2/sigma)."""
    if not 0.0 <= center_dist <= 1.0:
        raise ValueError("center_dist must be in [0, 1]")
    factor = math.exp(-(center_dist * center_dist) / params.sigma)
    w = raw.w * factor
    h = raw.h * factor
    wraps = bool(raw.cx - w / 2.0 < 0.0 or raw.cx + w / 2.0 > era_width)
    return EraBox(label=raw.label, cx=raw.cx, cy=raw.cy, w=w, h=h, wraps=wraps)


def run_frame(
    era: EraImage,
    plan: list[WindowSpec],
    detector: DetectorPort,
    params: RealignParams = RealignParams(),
    workers: int = 1,
) -> list[Detection]:
    """Render every window, detect, back-project and re-align.

    Results are concatenated in window-index order; a failure in any
    window fails the whole frame with per-window diagnostics.
    """

    def process(index: int, spec: WindowSpec) -> list[Detection]:
        win = render_window(era, spec)
        dets = []
        for wd in detect_window(detector, win, index):
            hull, dist = backproject_min_frame(wd, spec, era.width, era.height)
            box = realign(hull, dist, params, era.width)
            dets.append(
                Detection(
                    label=wd.label,
                    score=wd.score,
                    box=box,
                    window_index=index,
                    center_dist=dist,
                )
            )
        return dets

    results: list[list[Detection] | None] = [None] * len(plan)
    errors: list[str] = []
    if workers > 1 and getattr(detector, "concurrent", False):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(process, i, spec): i for i, spec in enumerate(plan)
            }
            for future, i in futures.items():
                try:
                    results[i] = future.result()
                except Exception as exc:  # noqa: BLE001 - aggregated below
                    errors.append(f"window {i}: {exc}")
    else:
        for i, spec in enumerate(plan):
            try:
                results[i] = process(i, spec)
            except Exception as exc:  # noqa: BLE001 - aggregated below
                errors.append(f"window {i}: {exc}")
    if errors:
        raise FrameProcessingError("; ".join(errors))
    return [det for dets in results for det in dets]  # type: ignore[union-attr]


# ---------------------------------------------------------------------------
# detection results JSON

def _detection_to_json(det: Detection) -> dict:
    return {
        "label": det.label,
        "score": det.score,
        "window": det.window_index,
        "dist": det.center_dist,
        "box": {
            "cx": det.box.cx,
            "cy": det.box.cy,
            "w": det.box.w,
            "h": det.box.h,
            "wraps": det.box.wraps,
        },
    }


def _detection_from_json(raw: dict, ctx: str) -> Detection:
    label = _require(raw, "label", str, ctx)
    box_raw = _require(raw, "box", dict, ctx)
    try:
        box = EraBox(
            label=label,
            cx=_require(box_raw, "cx", float, f"{ctx}.box"),
            cy=_require(box_raw, "cy", float, f"{ctx}.box"),
            w=_require(box_raw, "w", float, f"{ctx}.box"),
            h=_require(box_raw, "h", float, f"{ctx}.box"),
            wraps=bool(box_raw.get("wraps", False)),
        )
        return Detection(
            label=label,
            score=_require(raw, "score", float, ctx),
            box=box,
            window_index=_require(raw, "window", int, ctx),
            center_dist=_require(raw, "dist", float, ctx),
        )
    except ValueError as exc:
        if isinstance(exc, DatasetFormatError):
            raise
        raise DatasetFormatError(f"{ctx}: {exc}") from exc


def write_detections(path: str | Path, frames: list[FrameDetections]) -> None:
    payload = {
        "frames": [
            {
                "id": f.frame_id,
                "width": f.width,
                "height": f.height,
                "detections": [_detection_to_json(d) for d in f.detections],
            }
            for f in frames
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def parse_detections(path: str | Path) -> list[FrameDetections]:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DatasetFormatError(f"{path}: top level must be an object")
    frames = []
    for i, f in enumerate(_require(raw, "frames", list, str(path))):
        ctx = f"frames[{i}]"
        if not isinstance(f, dict):
            raise DatasetFormatError(f"{ctx}: expected object")
        dets = [
            _detection_from_json(d, f"{ctx}.detections[{j}]")
            for j, d in enumerate(_require(f, "detections", list, ctx))
        ]
        frames.append(
            FrameDetections(
                frame_id=_require(f, "id", str, ctx),
                width=_require(f, "width", int, ctx),
                height=_require(f, "height", int, ctx),
                detections=dets,
            )
        )
    return frames
