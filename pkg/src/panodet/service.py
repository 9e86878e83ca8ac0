"""HTTP service for the annotator UI: view rendering plus annotation storage.

The service is deliberately thin: it renders projection views out of the
panorama frames under a dataset root, answers view-pixel-to-angle queries,
and stores per-frame annotations with optimistic versioning.  Heavy
pipeline runs stay in the CLI.

All angles cross this boundary in degrees.
"""

from __future__ import annotations

import json
import math
import threading
from collections import defaultdict
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import geometry
from .annotations import (
    DatasetFormatError,
    Bfov,
    bfov_to_erabox,
    frame_from_json,
    frame_to_json,
    FrameAnnotations,
)
from .geometry import ProjectionParams, SphereCoord, WindowSpec
from .imaging import EraImage, encode_png, read_image, render_window

IMAGE_SUFFIXES = (".png", ".erai")


class ViewParams(BaseModel):
    """A projection view over one frame; angles in degrees."""

    frame: str
    lat: float = Field(ge=-90.0, le=90.0)
    lon: float
    fov_h: float = Field(gt=0.0, le=180.0)
    fov_w: float = Field(gt=0.0, le=180.0)
    d: float = Field(default=0.0, ge=0.0)
    out_w: int = Field(default=864, ge=2, le=4096)
    out_h: int = Field(default=864, ge=2, le=4096)

    def to_spec(self) -> WindowSpec:
        return WindowSpec(
            center=SphereCoord(math.radians(self.lat), math.radians(self.lon)),
            params=ProjectionParams(
                d=self.d,
                fov_h=math.radians(self.fov_h),
                fov_w=math.radians(self.fov_w),
            ),
            out_w=self.out_w,
            out_h=self.out_h,
        )


class UnprojectRequest(ViewParams):
    px: float
    py: float


class SphereResponse(BaseModel):
    lat: float
    lon: float


class BfovConvertRequest(BaseModel):
    label: str = ""
    lat: float = Field(ge=-90.0, le=90.0)
    lon: float
    dlat: float = Field(gt=0.0, lt=180.0)
    dlon: float = Field(gt=0.0, lt=180.0)
    width: int = Field(gt=0)
    height: int = Field(gt=0)


class BoxResponse(BaseModel):
    label: str
    cx: float
    cy: float
    w: float
    h: float
    wraps: bool


class FrameInfo(BaseModel):
    id: str
    width: int
    height: int


class FrameStore:
    """Panorama frames plus versioned annotation files under one root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise ValueError(f"dataset root {self.root} is not a directory")
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._cache: dict[str, tuple[float, EraImage]] = {}

    def frame_ids(self) -> list[str]:
        ids = {
            p.stem
            for p in self.root.iterdir()
            if p.suffix.lower() in IMAGE_SUFFIXES
        }
        return sorted(ids)

    def _image_path(self, frame_id: str) -> Path:
        for suffix in IMAGE_SUFFIXES:
            p = self.root / f"{frame_id}{suffix}"
            if p.exists():
                return p
        raise KeyError(frame_id)

    def image(self, frame_id: str) -> EraImage:
        path = self._image_path(frame_id)
        mtime = path.stat().st_mtime_ns
        cached = self._cache.get(frame_id)
        if cached is not None and cached[0] == mtime:
            return cached[1]
        img = read_image(path)
        self._cache[frame_id] = (mtime, img)
        return img

    def _annotation_path(self, frame_id: str) -> Path:
        return self.root / f"{frame_id}.annotations.json"

    def load_annotations(self, frame_id: str) -> tuple[int, FrameAnnotations]:
        img = self.image(frame_id)
        path = self._annotation_path(frame_id)
        if not path.exists():
            return 0, FrameAnnotations(frame_id, img.width, img.height, [])
        raw = json.loads(path.read_text())
        return int(raw.get("version", 0)), frame_from_json(raw["frame"], frame_id)

    def store_annotations(
        self, frame_id: str, version: int, frame: FrameAnnotations
    ) -> int:
        with self._locks[frame_id]:
            current, _ = self.load_annotations(frame_id)
            if version != current:
                raise StaleVersionError(current)
            new_version = current + 1
            payload = {"version": new_version, "frame": frame_to_json(frame)}
            self._annotation_path(frame_id).write_text(
                json.dumps(payload, indent=2) + "\n"
            )
            return new_version


class StaleVersionError(Exception):
    def __init__(self, current: int):
        self.current = current


def create_app(root: str | Path, frontend_dir: str | Path | None = None) -> FastAPI:
    store = FrameStore(root)
    app = FastAPI(title="panodet annotation service")

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    def get_image(frame_id: str) -> EraImage:
        try:
            return store.image(frame_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown frame {frame_id!r}")

    @app.get("/frames", response_model=list[FrameInfo])
    def list_frames():
        out = []
        for frame_id in store.frame_ids():
            img = store.image(frame_id)
            out.append(FrameInfo(id=frame_id, width=img.width, height=img.height))
        return out

    @app.get("/frames/{frame_id}/image")
    def frame_image(frame_id: str):
        img = get_image(frame_id)
        return Response(content=encode_png(img.data), media_type="image/png")

    @app.post("/project")
    def project(view: ViewParams):
        img = get_image(view.frame)
        window = render_window(img, view.to_spec())
        return Response(content=encode_png(window.raster), media_type="image/png")

    @app.post("/unproject", response_model=SphereResponse)
    def unproject(req: UnprojectRequest):
        get_image(req.frame)
        s = geometry.window_to_sphere(req.to_spec(), req.px, req.py)
        return SphereResponse(
            lat=round(math.degrees(s.lat), 6), lon=round(math.degrees(s.lon), 6)
        )

    @app.get("/frames/{frame_id}/annotations")
    def get_annotations(frame_id: str):
        get_image(frame_id)
        try:
            version, frame = store.load_annotations(frame_id)
        except DatasetFormatError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return {"version": version, **frame_to_json(frame)}

    @app.put("/frames/{frame_id}/annotations")
    def put_annotations(frame_id: str, body: dict):
        img = get_image(frame_id)
        if "version" not in body:
            raise HTTPException(status_code=400, detail="missing version field")
        version = body["version"]
        if not isinstance(version, int):
            raise HTTPException(status_code=400, detail="version must be an integer")
        payload = dict(body)
        payload.pop("version")
        payload.setdefault("id", frame_id)
        payload.setdefault("width", img.width)
        payload.setdefault("height", img.height)
        try:
            frame = frame_from_json(payload, frame_id)
        except DatasetFormatError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        try:
            new_version = store.store_annotations(frame_id, version, frame)
        except StaleVersionError as exc:
            raise HTTPException(
                status_code=409,
                detail={"message": "stale version", "current": exc.current},
            )
        return {"version": new_version}

    @app.post("/convert/bfov-to-box", response_model=BoxResponse)
    def convert_bfov(req: BfovConvertRequest):
        bfov = Bfov(
            label=req.label,
            center=SphereCoord(math.radians(req.lat), math.radians(req.lon)),
            extent_lat=math.radians(req.dlat),
            extent_lon=math.radians(req.dlon),
        )
        box = bfov_to_erabox(bfov, req.width, req.height)
        return BoxResponse(
            label=box.label, cx=box.cx, cy=box.cy, w=box.w, h=box.h, wraps=box.wraps
        )

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
