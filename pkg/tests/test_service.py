"""HTTP service behavior over a temporary dataset root."""

import io
import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from panodet.annotations import bfov_to_erabox, Bfov
from panodet.geometry import (
    ProjectionParams,
    SphereCoord,
    WindowSpec,
    window_to_sphere,
)
from panodet.imaging import render_window, write_png
from panodet.service import create_app

W, H = 256, 128


@pytest.fixture()
def root(tmp_path):
    rng = np.random.default_rng(4)
    arr = rng.integers(0, 256, (H, W, 3), dtype=np.uint8)
    # uniform 2x2 block around the exact image center so the projection
    # identity check is insensitive to interpolation
    arr[H // 2 - 1 : H // 2 + 1, W // 2 - 1 : W // 2 + 1] = (10, 200, 30)
    write_png(tmp_path / "frame0.png", arr)
    return tmp_path


@pytest.fixture()
def client(root):
    return TestClient(create_app(root))


def view(frame="frame0", **overrides):
    body = {
        "frame": frame, "lat": 0.0, "lon": 0.0,
        "fov_h": 90.0, "fov_w": 90.0, "d": 0.0,
        "out_w": 101, "out_h": 101,
    }
    body.update(overrides)
    return body


class TestFrames:
    def test_empty_root_lists_nothing(self, tmp_path):
        client = TestClient(create_app(tmp_path))
        response = client.get("/frames")
        assert response.status_code == 200
        assert response.json() == []

    def test_lists_frames_with_dims(self, client):
        assert client.get("/frames").json() == [
            {"id": "frame0", "width": W, "height": H}
        ]

    def test_image_roundtrip(self, client, root):
        response = client.get("/frames/frame0/image")
        assert response.status_code == 200
        img = np.asarray(Image.open(io.BytesIO(response.content)))
        original = np.asarray(Image.open(root / "frame0.png"))
        assert np.array_equal(img, original)

    def test_unknown_frame_404(self, client):
        assert client.get("/frames/ghost/image").status_code == 404
        assert client.post("/project", json=view(frame="ghost")).status_code == 404


class TestProjectEndpoint:
    def test_center_pixel_matches_era_center(self, client, root):
        response = client.post("/project", json=view())
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        img = np.asarray(Image.open(io.BytesIO(response.content)))
        assert tuple(img[50, 50]) == (10, 200, 30)

    def test_bytes_match_direct_render(self, client, root):
        """The endpoint and the library path must be byte-identical."""
        from panodet.imaging import encode_png, read_png

        response = client.post("/project", json=view(fov_h=120.0, d=1.0, lon=30.0))
        era = read_png(root / "frame0.png")
        spec = WindowSpec(
            SphereCoord(0.0, math.radians(30.0)),
            ProjectionParams(d=1.0, fov_h=math.radians(120.0), fov_w=math.radians(90.0)),
            101,
            101,
        )
        expected = encode_png(render_window(era, spec).raster)
        assert response.content == expected

    def test_schema_violation_400(self, client):
        assert client.post("/project", json=view(lat=200.0)).status_code == 400
        bad = view()
        del bad["frame"]
        assert client.post("/project", json=bad).status_code == 400

    def test_bytes_match_cli_project_output(self, client, root, tmp_path):
        """The service and the project subcommand share one render path."""
        from panodet.cli import main

        plan = {
            "windows": [
                {"lat": 5.0, "lon": 30.0, "fov_h": 120.0, "fov_w": 90.0,
                 "d": 1.0, "out_w": 96, "out_h": 64}
            ]
        }
        plan_path = tmp_path / "plan.json"
        plan_path.write_text(json.dumps(plan))
        out_dir = tmp_path / "proj"
        rc = main(
            [
                "project", "--input", str(root / "frame0.png"),
                "--out", str(out_dir), "--plan", str(plan_path),
            ]
        )
        assert rc == 0
        response = client.post(
            "/project",
            json=view(lat=5.0, lon=30.0, fov_h=120.0, fov_w=90.0, d=1.0,
                      out_w=96, out_h=64),
        )
        assert response.content == (out_dir / "window_00.png").read_bytes()


class TestUnprojectEndpoint:
    def test_center_maps_to_view_center(self, client):
        response = client.post("/unproject", json={**view(), "px": 50.5, "py": 50.5})
        assert response.status_code == 200
        body = response.json()
        assert body["lat"] == pytest.approx(0.0, abs=1e-6)
        assert body["lon"] == pytest.approx(0.0, abs=1e-6)

    def test_matches_library_geometry(self, client):
        response = client.post(
            "/unproject",
            json={**view(lat=10.0, lon=40.0, d=1.0), "px": 20.0, "py": 70.0},
        )
        spec = WindowSpec(
            SphereCoord(math.radians(10.0), math.radians(40.0)),
            ProjectionParams(d=1.0, fov_h=math.radians(90.0), fov_w=math.radians(90.0)),
            101,
            101,
        )
        expected = window_to_sphere(spec, 20.0, 70.0)
        body = response.json()
        assert body["lat"] == pytest.approx(math.degrees(expected.lat), abs=1e-5)
        assert body["lon"] == pytest.approx(math.degrees(expected.lon), abs=1e-5)


class TestAnnotationStorage:
    BODY = {
        "version": 0,
        "objects": [
            {
                "label": "person",
                "kind": "bfov",
                "source": "bfov-derived",
                "bfov": {"lat": 10.0, "lon": -45.0, "dlat": 20.0, "dlon": 15.0},
            }
        ],
    }

    def test_fresh_frame_has_version_zero(self, client):
        body = client.get("/frames/frame0/annotations").json()
        assert body["version"] == 0
        assert body["objects"] == []

    def test_put_get_roundtrip_field_exact(self, client):
        put = client.put("/frames/frame0/annotations", json=self.BODY)
        assert put.status_code == 200
        assert put.json() == {"version": 1}
        got = client.get("/frames/frame0/annotations").json()
        assert got["version"] == 1
        assert got["objects"] == self.BODY["objects"]

    def test_stale_version_conflict(self, client):
        assert client.put("/frames/frame0/annotations", json=self.BODY).status_code == 200
        stale = client.put("/frames/frame0/annotations", json=self.BODY)
        assert stale.status_code == 409
        assert stale.json()["detail"]["current"] == 1
        retry = dict(self.BODY, version=1)
        assert client.put("/frames/frame0/annotations", json=retry).status_code == 200

    def test_schema_violation_400(self, client):
        bad = {"version": 0, "objects": [{"label": "p", "kind": "circle"}]}
        assert client.put("/frames/frame0/annotations", json=bad).status_code == 400

    def test_missing_version_400(self, client):
        assert (
            client.put("/frames/frame0/annotations", json={"objects": []}).status_code
            == 400
        )


class TestConvertEndpoint:
    def test_matches_library_conversion(self, client):
        request = {
            "label": "person", "lat": 0.0, "lon": 0.0,
            "dlat": 30.0, "dlon": 30.0, "width": 3840, "height": 1920,
        }
        response = client.post("/convert/bfov-to-box", json=request)
        assert response.status_code == 200
        expected = bfov_to_erabox(
            Bfov(
                "person",
                SphereCoord(0.0, 0.0),
                math.radians(30.0),
                math.radians(30.0),
            ),
            3840,
            1920,
        )
        body = response.json()
        assert body["cx"] == pytest.approx(expected.cx)
        assert body["cy"] == pytest.approx(expected.cy)
        assert body["w"] == pytest.approx(expected.w)
        assert body["h"] == pytest.approx(expected.h)
        assert body["wraps"] is False
