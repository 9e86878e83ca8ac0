"""Shared fixtures: synthetic panorama suites driven by the oracle detector."""

import math

import numpy as np
import pytest

from panodet.annotations import AnnotatedObject, Bfov, FrameAnnotations
from panodet.detectors import OracleDetector
from panodet.geometry import SphereCoord, default_window_plan
from panodet.imaging import EraImage
from panodet.pipeline import FrameDetections, RealignParams, run_frame

SUITE_ERA_W, SUITE_ERA_H = 512, 256


def make_synthetic_suite(n_frames: int, seed: int, labels=("person", "car")):
    """Frames with objects spread uniformly in longitude, well separated.

    Object spacing (>= 90 degrees minus jitter) keeps same-label ground
    truths from overlapping, so per-window NMS only ever sees duplicates
    of one object.
    """
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n_frames):
        objects = []
        n_obj = int(rng.integers(2, 5))
        base = float(rng.uniform(0.0, 360.0))
        for k in range(n_obj):
            lon_deg = (base + k * 360.0 / n_obj + rng.uniform(-18.0, 18.0)) % 360.0
            lon = math.radians(lon_deg - 180.0)
            lat = math.radians(rng.uniform(-40.0, 40.0))
            dlat = math.radians(rng.uniform(18.0, 35.0))
            dlon = math.radians(rng.uniform(18.0, 35.0))
            label = labels[int(rng.integers(0, len(labels)))]
            objects.append(
                AnnotatedObject(Bfov(label, SphereCoord(lat, lon), dlat, dlon))
            )
        frames.append(
            FrameAnnotations(f"frame{i:03d}", SUITE_ERA_W, SUITE_ERA_H, objects)
        )
    return frames


def run_synthetic_suite(
    frames,
    score_noise: float = 0.0,
    seed: int = 0,
    sigma: float = 0.6,
    window_size: int = 160,
):
    """Oracle-detector pipeline over a suite; returns raw FrameDetections."""
    era = EraImage.from_array(
        np.full((SUITE_ERA_H, SUITE_ERA_W, 1), 100, dtype=np.uint8)
    )
    plan = default_window_plan(window_size, window_size)
    params = RealignParams(sigma=sigma)
    out = []
    for i, frame in enumerate(frames):
        detector = OracleDetector(
            frame,
            score_noise=score_noise,
            rng=np.random.default_rng(seed * 100003 + i),
        )
        dets = run_frame(era, plan, detector, params)
        out.append(FrameDetections(frame.frame_id, frame.width, frame.height, dets))
    return out


@pytest.fixture(scope="session")
def synthetic_suite():
    """50-frame suite plus raw noisy and clean pipeline outputs."""
    frames = make_synthetic_suite(50, seed=7)
    noisy = run_synthetic_suite(frames, score_noise=0.2, seed=1)
    clean = run_synthetic_suite(frames, score_noise=0.0, seed=1)
    return frames, noisy, clean
