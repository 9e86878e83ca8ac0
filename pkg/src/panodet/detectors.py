"""Pluggable per-window detector ports: stub, ground-truth oracle, external.

A detector consumes one rendered window and returns labeled, scored
rectangles in window pixels.  The neural detector itself is out of scope;
the external port speaks line-delimited JSON to any child process that
implements one.
"""

from __future__ import annotations

import base64
import json
import math
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .annotations import EraBox, FrameAnnotations, bfov_to_erabox
from .geometry import window_pixels
from .imaging import WindowImage, encode_png


class DetectorError(RuntimeError):
    pass


class DetectorUnavailableError(DetectorError):
    """The detector backend cannot be reached (dead child, bad command)."""


class DetectorOutputError(DetectorError):
    """The detector produced output violating the protocol contract."""


@dataclass(frozen=True)
class WindowDetection:
    """A detector hit: top-left corner plus size, in window pixels."""

    label: str
    score: float
    x: float
    y: float
    w: float
    h: float


class DetectorPort(Protocol):
    concurrent: bool

    def detect(self, window: WindowImage, window_index: int) -> list[WindowDetection]:
        ...


class StubDetector:
    """Fixture-driven detector: returns pre-configured boxes per window."""

    concurrent = True

    def __init__(self, by_window: dict[int, list[WindowDetection]] | None = None):
        self.by_window = by_window or {}

    def detect(self, window: WindowImage, window_index: int) -> list[WindowDetection]:
        return list(self.by_window.get(window_index, []))


class OracleDetector:
    """Ground-truth-driven detector for pipeline tests.

    Emits each annotated object whose center lies strictly inside the
    window FOV, as the window-space hull of the object's panorama box
    outline.  Scores default to 1.0; a seeded rng adds controlled noise.
    """

    concurrent = False  # rng draws are ordered

    def __init__(
        self,
        frame: FrameAnnotations,
        score: float = 1.0,
        score_noise: float = 0.0,
        rng: np.random.Generator | None = None,
    ):
        self.frame = frame
        self.score = score
        self.score_noise = score_noise
        self.rng = rng
        self._boxes = [
            o.shape
            if isinstance(o.shape, EraBox)
            else bfov_to_erabox(o.shape, frame.width, frame.height)
            for o in frame.objects
        ]

    def detect(self, window: WindowImage, window_index: int) -> list[WindowDetection]:
        spec = window.spec
        width, height = self.frame.width, self.frame.height
        out = []
        for box in self._boxes:
            lat, lon = self._era_to_angles(box.cx, box.cy, width, height)
            cpx, cpy, vis = window_pixels(spec, lat, lon)
            if not (
                bool(vis)
                and 0.0 < float(cpx) < spec.out_w
                and 0.0 < float(cpy) < spec.out_h
            ):
                continue
            rect = self._project_outline(box, spec, width, height)
            if rect is None:
                continue
            score = self.score
            if self.rng is not None and self.score_noise > 0.0:
                score = float(
                    np.clip(
                        score - self.rng.uniform(0.0, self.score_noise), 1e-6, 1.0
                    )
                )
            out.append(WindowDetection(box.label, score, *rect))
        return out

    @staticmethod
    def _era_to_angles(px, py, width, height):
        lon = -math.pi + np.asarray(px) * (2.0 * math.pi / width)
        lat = math.pi / 2 - np.asarray(py) * (math.pi / height)
        return lat, lon

    def _project_outline(self, box, spec, width, height):
        n = 64
        t = np.linspace(0.0, 1.0, n, endpoint=False)
        x0 = box.cx - box.w / 2.0
        y0, y1 = box.cy - box.h / 2.0, box.cy + box.h / 2.0
        xs = np.concatenate([x0 + t * box.w, np.full(n, x0 + box.w), x0 + (1 - t) * box.w, np.full(n, x0)]) % width
        ys = np.concatenate([np.full(n, y0), y0 + t * box.h, np.full(n, y1), y0 + (1 - t) * box.h])
        lat, lon = self._era_to_angles(xs, ys, width, height)
        px, py, vis = window_pixels(spec, lat, lon)
        if vis.sum() < 8:
            return None
        px, py = px[vis], py[vis]
        rx0 = max(0.0, float(px.min()))
        ry0 = max(0.0, float(py.min()))
        rx1 = min(float(spec.out_w), float(px.max()))
        ry1 = min(float(spec.out_h), float(py.max()))
        if rx1 - rx0 <= 0.0 or ry1 - ry0 <= 0.0:
            return None
        return rx0, ry0, rx1 - rx0, ry1 - ry0


class ExternalProcessDetector:
    """Detector behind a child process speaking line-delimited JSON.

    One request line per window: {"id", "width", "height", "png_b64"};
    one response line per request: {"id", "detections": [...]}.  Requests
    are serialized per child; the child exits when stdin closes.
    """

    concurrent = False

    def __init__(self, command: list[str]):
        self.command = command
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()
        self._next_id = 0

    def _ensure_child(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                )
            except OSError as exc:
                raise DetectorUnavailableError(
                    f"cannot start detector {self.command!r}: {exc}"
                ) from exc
        return self._proc

    def detect(self, window: WindowImage, window_index: int) -> list[WindowDetection]:
        request = {
            "id": self._next_id,
            "width": window.spec.out_w,
            "height": window.spec.out_h,
            "png_b64": base64.b64encode(encode_png(window.raster)).decode("ascii"),
        }
        with self._lock:
            self._next_id += 1
            proc = self._ensure_child()
            try:
                proc.stdin.write(json.dumps(request) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise DetectorUnavailableError(f"detector child died: {exc}") from exc
        if not line:
            raise DetectorUnavailableError("detector child closed its output")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DetectorOutputError(f"bad detector reply: {exc}") from exc
        if reply.get("id") != request["id"]:
            raise DetectorOutputError(
                f"detector reply id {reply.get('id')} != request id {request['id']}"
            )
        dets = reply.get("detections")
        if not isinstance(dets, list):
            raise DetectorOutputError("detector reply missing 'detections' list")
        out = []
        for i, det in enumerate(dets):
            try:
                out.append(
                    WindowDetection(
                        label=str(det["label"]),
                        score=float(det["score"]),
                        x=float(det["x"]),
                        y=float(det["y"]),
                        w=float(det["w"]),
                        h=float(det["h"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DetectorOutputError(f"detections[{i}]: {exc}") from exc
        return out

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
