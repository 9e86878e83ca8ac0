"""Cross-window box selection: per-window NMS plus soft re-scoring.

Duplicate detections of one object appear wherever windows overlap.  The
soft rule keeps them all but re-scores each by
exp(-(IoU(b_hat, b_i)^2 / sigma1 + d_i^2 / sigma2)) for every kept box
b_hat closer to its window center; the plain-NMS path is the baseline.
IoU is computed on the panorama cylinder so seam-crossing boxes behave
like any others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .annotations import EraBox
from .pipeline import Detection


@dataclass(frozen=True)
class FusionParams:
    nms_iou: float = 0.3
    sigma1: float = 0.3  # overlap penalty
    sigma2: float = 0.6  # center-distance penalty
    score_floor: float = 0.001

    def __post_init__(self):
        if not 0.0 < self.nms_iou < 1.0:
            raise ValueError("nms_iou must be in (0, 1)")
        if self.sigma1 <= 0.0 or self.sigma2 <= 0.0:
            raise ValueError("sigma1 and sigma2 must be positive")
        if not 0.0 <= self.score_floor < 1.0:
            raise ValueError("score_floor must be in [0, 1)")


def _arc_overlap(sa: float, wa: float, sb: float, wb: float, width: float) -> float:
    """Overlap length of two arcs [s, s+w) on a circle of the given width."""
    delta = (sb - sa) % width
    o1 = max(0.0, min(wa, delta + wb) - delta)
    o2 = max(0.0, min(wa, delta + wb - width))
    return min(o1 + o2, wa, wb)


def iou(a: EraBox, b: EraBox, width: float) -> float:
    """Wrap-aware Intersection-over-Union on the panorama cylinder."""
    y_olap = max(
        0.0,
        min(a.cy + a.h / 2.0, b.cy + b.h / 2.0)
        - max(a.cy - a.h / 2.0, b.cy - b.h / 2.0),
    )
    if y_olap == 0.0:
        return 0.0
    x_olap = _arc_overlap(a.x_start(width), a.w, b.x_start(width), b.w, width)
    inter = x_olap * y_olap
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0.0 else 0.0


def _nms_order(det: Detection):
    return (-det.score, det.center_dist, det.window_index)


def nms(dets: list[Detection], thr: float, width: float) -> list[Detection]:
    """Greedy per-class NMS: suppress boxes with IoU > thr against a kept box."""
    kept: list[Detection] = []
    by_label: dict[str, list[Detection]] = {}
    for det in dets:
        by_label.setdefault(det.label, []).append(det)
    for label in sorted(by_label):
        group = sorted(by_label[label], key=_nms_order)
        chosen: list[Detection] = []
        for det in group:
            if all(iou(det.box, k.box, width) <= thr for k in chosen):
                chosen.append(det)
        kept.extend(chosen)
    return sorted(kept, key=_final_order)


def _soft_order(det: Detection):
    return (det.center_dist, -det.score, det.window_index)


def _final_order(det: Detection):
    return (-det.score, det.center_dist, det.window_index, det.label, det.box.cx)


def soft_select(
    dets: list[Detection], params: FusionParams, width: float
) -> list[Detection]:
    """Re-score detections by overlap with, and distance behind, nearer boxes.

    Per class, candidates are visited in order of increasing center
    distance; each visited box is kept at its current score and decays
    every remaining same-class box multiplicatively.  Boxes whose running
    score falls below the floor are dropped; everything else survives.
    """
    by_label: dict[str, list[Detection]] = {}
    for det in dets:
        by_label.setdefault(det.label, []).append(det)
    survivors: list[Detection] = []
    for label in sorted(by_label):
        queue = sorted(by_label[label], key=_soft_order)
        scores = [det.score for det in queue]
        while queue:
            best = queue.pop(0)
            best_score = scores.pop(0)
            survivors.append(replace(best, score=best_score))
            remaining_q: list[Detection] = []
            remaining_s: list[float] = []
            for det, score in zip(queue, scores):
                overlap = iou(best.box, det.box, width)
                score = score * math.exp(
                    -(
                        overlap * overlap / params.sigma1
                        + det.center_dist * det.center_dist / params.sigma2
                    )
                )
                if score >= params.score_floor:
                    remaining_q.append(det)
                    remaining_s.append(score)
            queue, scores = remaining_q, remaining_s
    return sorted(survivors, key=_final_order)


def fuse(
    dets: list[Detection],
    params: FusionParams,
    width: float,
    mode: str = "soft",
) -> list[Detection]:
    """Per-window NMS, then soft re-scoring or the global-NMS baseline."""
    if mode not in ("soft", "nms"):
        raise ValueError(f"mode must be 'soft' or 'nms', got {mode!r}")
    by_window: dict[int, list[Detection]] = {}
    for det in dets:
        by_window.setdefault(det.window_index, []).append(det)
    stage1: list[Detection] = []
    for index in sorted(by_window):
        stage1.extend(nms(by_window[index], params.nms_iou, width))
    if mode == "soft":
        return soft_select(stage1, params, width)
    return nms(stage1, params.nms_iou, width)
