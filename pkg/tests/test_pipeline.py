"""Back-projection, re-alignment, frame orchestration, detector ports."""

import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

from panodet.annotations import (
    AnnotatedObject,
    Bfov,
    FrameAnnotations,
    wrap_aware_hull,
)
from panodet.detectors import (
    DetectorOutputError,
    DetectorUnavailableError,
    ExternalProcessDetector,
    OracleDetector,
    StubDetector,
    WindowDetection,
)
from panodet.geometry import (
    ProjectionParams,
    SphereCoord,
    WindowSpec,
    default_window_plan,
    window_rays,
)
from panodet.imaging import (
    EraImage,
    render_window,
    sphere_to_era_pixel,
    sphere_to_era_pixel_arrays,
)
from panodet.pipeline import (
    Detection,
    FrameDetections,
    FrameProcessingError,
    RealignParams,
    backproject_min_frame,
    detect_window,
    parse_detections,
    realign,
    run_frame,
    write_detections,
)
from panodet.annotations import EraBox

ERA_W, ERA_H = 512, 256
FOV180 = ProjectionParams(d=1.0, fov_h=math.pi, fov_w=math.pi)
FIXTURES = Path(__file__).parent / "fixtures"


def gray_era() -> EraImage:
    return EraImage.from_array(np.full((ERA_H, ERA_W, 1), 100, dtype=np.uint8))


class TestRealign:
    def test_identity_at_zero_distance(self):
        raw = EraBox("x", 400.0, 100.0, 120.0, 90.0)
        out = realign(raw, 0.0, RealignParams(sigma=0.5), ERA_W)
        assert (out.w, out.h) == (120.0, 90.0)

    def test_exact_exponential_shrink(self):
        raw = EraBox("x", 400.0, 100.0, 100.0, 100.0)
        out = realign(raw, 1.0, RealignParams(sigma=0.5), ERA_W)
        assert abs(out.w - 100.0 * math.exp(-2.0)) < 1e-9
        assert abs(out.h - 100.0 * math.exp(-2.0)) < 1e-9

    def test_center_preserved_exactly(self):
        raw = EraBox("x", 123.456, 78.9, 50.0, 40.0)
        out = realign(raw, 0.7, RealignParams(sigma=0.3), ERA_W)
        assert out.cx == raw.cx
        assert out.cy == raw.cy

    def test_size_never_grows(self):
        raw = EraBox("x", 100.0, 100.0, 60.0, 30.0)
        for d in np.linspace(0.0, 1.0, 21):
            out = realign(raw, float(d), RealignParams(sigma=0.6), ERA_W)
            assert out.w <= raw.w and out.h <= raw.h

    def test_monotone_in_distance_and_sigma(self):
        raw = EraBox("x", 100.0, 100.0, 80.0, 80.0)
        widths_by_d = [
            realign(raw, float(d), RealignParams(sigma=0.6), ERA_W).w
            for d in np.linspace(0.0, 1.0, 11)
        ]
        assert all(a >= b for a, b in zip(widths_by_d, widths_by_d[1:]))
        widths_by_sigma = [
            realign(raw, 0.8, RealignParams(sigma=float(s)), ERA_W).w
            for s in (0.1, 0.3, 0.6, 1.0, 10.0, 1000.0)
        ]
        assert all(a <= b for a, b in zip(widths_by_sigma, widths_by_sigma[1:]))
        assert widths_by_sigma[-1] == pytest.approx(raw.w, rel=1e-3)

    def test_wrap_flag_recomputed_after_shrink(self):
        raw = EraBox("x", 2.0, 100.0, 30.0, 30.0, wraps=True)
        still = realign(raw, 0.0, RealignParams(sigma=0.6), ERA_W)
        assert still.wraps
        shrunk = realign(raw, 1.0, RealignParams(sigma=0.2), ERA_W)
        assert not shrunk.wraps


class TestBackprojectMinFrame:
    def test_on_axis_rect_has_zero_distance(self):
        spec = WindowSpec(SphereCoord(0.0, 0.5), FOV180, 128, 128)
        rect = WindowDetection("x", 1.0, 54.0, 54.0, 20.0, 20.0)  # centered
        hull, dist = backproject_min_frame(rect, spec, ERA_W, ERA_H)
        assert dist == pytest.approx(0.0, abs=1e-12)
        cx, cy = sphere_to_era_pixel(ERA_W, ERA_H, spec.center)
        assert hull.cx == pytest.approx(cx, abs=1e-6)
        assert hull.cy == pytest.approx(cy, abs=1e-6)

    def test_corner_rect_has_unit_distance(self):
        spec = WindowSpec(SphereCoord(0.0, 0.0), FOV180, 128, 128)
        rect = WindowDetection("x", 1.0, 118.0, 118.0, 20.0, 20.0)  # center at corner
        _, dist = backproject_min_frame(rect, spec, ERA_W, ERA_H)
        assert dist == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_rect_rejected(self):
        spec = WindowSpec(SphereCoord(0.0, 0.0), FOV180, 128, 128)
        with pytest.raises(ValueError):
            backproject_min_frame(
                WindowDetection("x", 1.0, 10.0, 10.0, 0.0, 5.0), spec, ERA_W, ERA_H
            )

    @pytest.mark.parametrize("window_index", [0, 1, 2, 3])
    def test_hull_matches_dense_mask_oracle(self, window_index):
        """Perimeter hull equals the dense interior rasterization within 1 px."""
        spec = default_window_plan(160, 160)[window_index]
        rng = np.random.default_rng(31 + window_index)
        for _ in range(12):
            x = rng.uniform(8.0, 110.0)
            y = rng.uniform(8.0, 110.0)
            w = rng.uniform(8.0, 160.0 - x - 8.0)
            h = rng.uniform(8.0, 160.0 - y - 8.0)
            rect = WindowDetection("x", 1.0, x, y, w, h)
            hull, _ = backproject_min_frame(rect, spec, ERA_W, ERA_H)

            gx = np.linspace(x, x + w, max(2, int(w) + 1))
            gy = np.linspace(y, y + h, max(2, int(h) + 1))
            mx, my = np.meshgrid(gx, gy)
            lat, lon = window_rays(spec, mx.ravel(), my.ravel())
            ex, ey = sphere_to_era_pixel_arrays(ERA_W, ERA_H, lat, lon)
            dense = wrap_aware_hull(ex, ey, ERA_W)

            assert abs(hull.w - dense.w) <= 1.0
            assert abs(hull.h - dense.h) <= 1.0
            dcx = abs(hull.cx - dense.cx)
            assert min(dcx, ERA_W - dcx) <= 1.0
            assert abs(hull.cy - dense.cy) <= 1.0


class TestDetectWindow:
    def _window(self):
        spec = WindowSpec(SphereCoord(0.0, 0.0), FOV180, 64, 64)
        return render_window(gray_era(), spec)

    def test_stub_with_no_fixtures_returns_empty(self):
        assert detect_window(StubDetector(), self._window(), 0) == []

    def test_rectangles_clipped_to_raster(self):
        stub = StubDetector({0: [WindowDetection("p", 0.9, -5.0, 10.0, 20.0, 80.0)]})
        (det,) = detect_window(stub, self._window(), 0)
        assert det.x == 0.0 and det.w == 15.0
        assert det.y == 10.0 and det.h == 54.0

    def test_bad_score_rejected(self):
        stub = StubDetector({0: [WindowDetection("p", 1.5, 1.0, 1.0, 5.0, 5.0)]})
        with pytest.raises(DetectorOutputError, match="score"):
            detect_window(stub, self._window(), 0)

    def test_non_finite_rejected(self):
        stub = StubDetector({0: [WindowDetection("p", 0.5, math.nan, 1.0, 5.0, 5.0)]})
        with pytest.raises(DetectorOutputError, match="finite"):
            detect_window(stub, self._window(), 0)

    def test_fully_outside_rect_rejected(self):
        stub = StubDetector({0: [WindowDetection("p", 0.5, 100.0, 1.0, 5.0, 5.0)]})
        with pytest.raises(DetectorOutputError, match="outside"):
            detect_window(stub, self._window(), 0)


class TestOracleDetector:
    def make_frame(self):
        return FrameAnnotations(
            "f",
            ERA_W,
            ERA_H,
            [
                AnnotatedObject(
                    Bfov(
                        "person",
                        SphereCoord(0.0, 0.0),
                        math.radians(25),
                        math.radians(25),
                    )
                ),
                AnnotatedObject(
                    Bfov(
                        "car",
                        SphereCoord(0.0, math.pi),  # wraps to -180
                        math.radians(25),
                        math.radians(25),
                    )
                ),
            ],
        )

    def test_emits_exactly_visible_objects(self):
        frame = self.make_frame()
        plan = default_window_plan(96, 96)
        oracle = OracleDetector(frame)
        labels_per_window = [
            sorted(d.label for d in oracle.detect(render_window(gray_era(), spec), i))
            for i, spec in enumerate(plan)
        ]
        # each object center sits exactly on the FOV boundary of the two
        # perpendicular windows, so only the facing window emits it
        assert labels_per_window == [["car"], [], ["person"], []]

    def test_overlap_zone_object_emitted_by_both_neighbors(self):
        frame = FrameAnnotations(
            "f",
            ERA_W,
            ERA_H,
            [
                AnnotatedObject(
                    Bfov(
                        "person",
                        SphereCoord(0.0, math.radians(45)),
                        math.radians(25),
                        math.radians(25),
                    )
                )
            ],
        )
        plan = default_window_plan(96, 96)
        oracle = OracleDetector(frame)
        counts = [
            len(oracle.detect(render_window(gray_era(), spec), i))
            for i, spec in enumerate(plan)
        ]
        assert counts == [0, 0, 1, 1]

    def test_on_axis_object_yields_zero_distance_detection(self):
        frame = FrameAnnotations(
            "f",
            ERA_W,
            ERA_H,
            [
                AnnotatedObject(
                    Bfov(
                        "person",
                        SphereCoord(0.0, 0.0),
                        math.radians(20),
                        math.radians(20),
                    )
                )
            ],
        )
        plan = default_window_plan(128, 128)
        dets = run_frame(gray_era(), plan, OracleDetector(frame))
        by_window = {d.window_index: d for d in dets}
        assert 2 in by_window  # window centered at lon 0
        assert by_window[2].center_dist == pytest.approx(0.0, abs=1e-9)


class TestRunFrame:
    def test_empty_oracle_empty_output(self):
        frame = FrameAnnotations("f", ERA_W, ERA_H, [])
        plan = default_window_plan(64, 64)
        assert run_frame(gray_era(), plan, OracleDetector(frame)) == []

    def test_overlap_object_detected_twice_before_fusion(self):
        frame = FrameAnnotations(
            "f",
            ERA_W,
            ERA_H,
            [
                AnnotatedObject(
                    Bfov(
                        "person",
                        SphereCoord(0.0, math.radians(45)),
                        math.radians(25),
                        math.radians(25),
                    )
                )
            ],
        )
        plan = default_window_plan(96, 96)
        dets = run_frame(gray_era(), plan, OracleDetector(frame))
        assert len(dets) >= 2
        assert sorted(d.window_index for d in dets) == [2, 3]

    def test_deterministic_with_stub(self):
        stub = StubDetector(
            {
                1: [WindowDetection("p", 0.9, 10.0, 12.0, 30.0, 25.0)],
                2: [WindowDetection("q", 0.8, 40.0, 40.0, 10.0, 10.0)],
            }
        )
        plan = default_window_plan(64, 64)
        first = run_frame(gray_era(), plan, stub)
        second = run_frame(gray_era(), plan, stub)
        assert first == second
        assert [d.window_index for d in first] == [1, 2]

    def test_concurrent_matches_serial(self):
        stub = StubDetector(
            {
                0: [WindowDetection("p", 0.7, 5.0, 5.0, 20.0, 20.0)],
                3: [WindowDetection("p", 0.9, 30.0, 30.0, 12.0, 18.0)],
            }
        )
        plan = default_window_plan(64, 64)
        serial = run_frame(gray_era(), plan, stub, workers=1)
        threaded = run_frame(gray_era(), plan, stub, workers=4)
        assert serial == threaded

    def test_window_failure_fails_frame(self):
        class Exploding:
            concurrent = False

            def detect(self, window, window_index):
                if window_index == 2:
                    raise DetectorOutputError("boom")
                return []

        plan = default_window_plan(64, 64)
        with pytest.raises(FrameProcessingError, match="window 2: boom"):
            run_frame(gray_era(), plan, Exploding())


class TestExternalProcessDetector:
    def test_echoes_fixture(self, tmp_path):
        fixture = [
            {"label": "person", "score": 0.75, "x": 4.0, "y": 6.0, "w": 20.0, "h": 22.0},
            {"label": "car", "score": 0.5, "x": 30.0, "y": 8.0, "w": 14.0, "h": 10.0},
        ]
        fpath = tmp_path / "dets.json"
        fpath.write_text(json.dumps(fixture))
        spec = WindowSpec(SphereCoord(0.0, 0.0), FOV180, 64, 64)
        window = render_window(gray_era(), spec)
        with ExternalProcessDetector(
            [sys.executable, str(FIXTURES / "echo_detector.py"), str(fpath)]
        ) as detector:
            result = detector.detect(window, 0)
            again = detector.detect(window, 1)
        expected = [WindowDetection(**d) for d in fixture]
        assert result == expected
        assert again == expected

    def test_bad_command_raises_unavailable(self):
        detector = ExternalProcessDetector(["/nonexistent/detector"])
        spec = WindowSpec(SphereCoord(0.0, 0.0), FOV180, 64, 64)
        window = render_window(gray_era(), spec)
        with pytest.raises(DetectorUnavailableError):
            detector.detect(window, 0)

    def test_malformed_reply_raises_output_error(self, tmp_path):
        script = tmp_path / "bad.py"
        script.write_text(
            "import sys\n"
            "for line in sys.stdin:\n"
            "    sys.stdout.write('not json\\n')\n"
            "    sys.stdout.flush()\n"
        )
        spec = WindowSpec(SphereCoord(0.0, 0.0), FOV180, 64, 64)
        window = render_window(gray_era(), spec)
        with ExternalProcessDetector([sys.executable, str(script)]) as detector:
            with pytest.raises(DetectorOutputError):
                detector.detect(window, 0)


class TestDetectionsIO:
    def test_roundtrip(self, tmp_path):
        frames = [
            FrameDetections(
                "f1",
                ERA_W,
                ERA_H,
                [
                    Detection(
                        "person",
                        0.9,
                        EraBox("person", 100.0, 50.0, 30.0, 20.0),
                        2,
                        0.25,
                    ),
                    Detection(
                        "car",
                        0.4,
                        EraBox("car", 10.0, 60.0, 44.0, 18.0, wraps=True),
                        0,
                        0.8,
                    ),
                ],
            ),
            FrameDetections("f2", ERA_W, ERA_H, []),
        ]
        path = tmp_path / "dets.json"
        write_detections(path, frames)
        assert parse_detections(path) == frames

    def test_schema_error_reports_path(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"frames": [{"id": "f", "width": 10, "height": 5,
                                                "detections": [{"label": "p"}]}]}))
        with pytest.raises(Exception, match=r"frames\[0\].detections\[0\]"):
            parse_detections(path)
