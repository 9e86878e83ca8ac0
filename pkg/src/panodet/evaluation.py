"""Pascal-VOC-style average precision against panorama annotations.

Matching is greedy per frame: detections in descending score order claim
the unmatched same-label ground truth with the highest cylinder IoU at or
above the threshold.  AP integrates the precision envelope over recall
with all distinct score cut points (no 11-point sampling), which makes
the result independent of the ordering of equal-score detections.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .annotations import (
    EraBox,
    FrameAnnotations,
    UnknownLabelWarning,
    bfov_to_erabox,
)
from .fusion import iou
from .pipeline import Detection, FrameDetections


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = (0.5, 0.4)
    vocabulary: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.iou_thresholds:
            raise ValueError("at least one IoU threshold is required")
        for thr in self.iou_thresholds:
            if not 0.0 < thr < 1.0:
                raise ValueError(f"IoU threshold {thr} outside (0, 1)")


@dataclass(frozen=True)
class ClassResult:
    ap: float
    gt_count: int
    tp: int
    fp: int

    @property
    def fn(self) -> int:
        return self.gt_count - self.tp


@dataclass(frozen=True)
class ApReport:
    threshold: float
    per_class: dict[str, ClassResult] = field(default_factory=dict)

    @property
    def map(self) -> float:
        present = [r.ap for r in self.per_class.values() if r.gt_count > 0]
        return sum(present) / len(present) if present else 0.0


def gt_boxes(frame: FrameAnnotations) -> list[EraBox]:
    """Ground truth as panorama boxes; BFOV entries are converted."""
    return [
        o.shape
        if isinstance(o.shape, EraBox)
        else bfov_to_erabox(o.shape, frame.width, frame.height)
        for o in frame.objects
    ]


def match_frame(
    dets: list[Detection], gts: list[EraBox], iou_thr: float, width: float
) -> list[bool]:
    """Per-detection TP flags; dets must already be sorted by score desc."""
    matched = [False] * len(gts)
    flags = []
    for det in dets:
        best, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if matched[j] or gt.label != det.label:
                continue
            overlap = iou(det.box, gt, width)
            if overlap >= iou_thr and overlap > best_iou:
                best, best_iou = j, overlap
        if best >= 0:
            matched[best] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(
    flags: list[bool], scores: list[float], gt_count: int
) -> float:
    """All-point interpolated AP over the (recall, precision) staircase.

    Detections sharing a score form one operating point, so equal-score
    ordering cannot change the result.
    """
    if gt_count <= 0 or not flags:
        return 0.0
    order = sorted(range(len(flags)), key=lambda i: -scores[i])
    points = []  # (recall, precision) at each distinct score cut
    tp = fp = 0
    for rank, i in enumerate(order):
        if flags[i]:
            tp += 1
        else:
            fp += 1
        is_cut = rank == len(order) - 1 or scores[order[rank + 1]] != scores[i]
        if is_cut:
            points.append((tp / gt_count, tp / (tp + fp)))
    # right-to-left pass: each recall segment uses the envelope of the
    # precisions at its right endpoint and beyond
    ap = 0.0
    env = 0.0
    prev_recall: float | None = None
    for recall, precision in reversed(points):
        if prev_recall is not None:
            ap += (prev_recall - recall) * env
        env = max(env, precision)
        prev_recall = recall
    ap += prev_recall * env  # segment from recall 0 to the first cut
    return ap


def evaluate(
    dataset: list[FrameAnnotations],
    detections: list[FrameDetections],
    cfg: EvalConfig = EvalConfig(),
) -> list[ApReport]:
    """One ApReport per configured IoU threshold."""
    frames = {f.frame_id: f for f in dataset}
    for det_frame in detections:
        if det_frame.frame_id not in frames:
            raise EvaluationError(f"detections reference unknown frame {det_frame.frame_id!r}")

    gt_labels = {o.label for f in dataset for o in f.objects}
    known = set(cfg.vocabulary) if cfg.vocabulary is not None else gt_labels
    unknown = {
        d.label for f in detections for d in f.detections if d.label not in known
    }
    for label in sorted(unknown):
        warnings.warn(f"detected label {label!r} not in vocabulary", UnknownLabelWarning)

    # (label, threshold) -> pooled scored flags
    pooled: dict[tuple[str, float], list[tuple[float, bool]]] = {
        (label, thr): []
        for label in gt_labels
        for thr in cfg.iou_thresholds
    }
    gt_counts = {label: 0 for label in gt_labels}
    for f in dataset:
        for o in f.objects:
            gt_counts[o.label] += 1

    for det_frame in detections:
        frame = frames[det_frame.frame_id]
        gts = gt_boxes(frame)
        indexed = sorted(
            enumerate(det_frame.detections), key=lambda p: (-p[1].score, p[0])
        )
        ordered = [d for _, d in indexed]
        for thr in cfg.iou_thresholds:
            flags = match_frame(ordered, gts, thr, frame.width)
            for det, flag in zip(ordered, flags):
                if det.label in gt_labels:
                    pooled[(det.label, thr)].append((det.score, flag))

    reports = []
    for thr in cfg.iou_thresholds:
        per_class = {}
        for label in sorted(gt_labels):
            entries = pooled[(label, thr)]
            scores = [s for s, _ in entries]
            flags = [f for _, f in entries]
            per_class[label] = ClassResult(
                ap=average_precision(flags, scores, gt_counts[label]),
                gt_count=gt_counts[label],
                tp=sum(flags),
                fp=len(flags) - sum(flags),
            )
        reports.append(ApReport(threshold=thr, per_class=per_class))
    return reports


def report_csv(reports: list[ApReport]) -> str:
    lines = ["class,threshold,AP,TP,FP,FN"]
    for report in reports:
        for label, res in sorted(report.per_class.items()):
            lines.append(
                f"{label},{report.threshold},{res.ap:.6f},{res.tp},{res.fp},{res.fn}"
            )
        lines.append(f"mAP,{report.threshold},{report.map:.6f},,,")
    return "\n".join(lines) + "\n"


def report_table(reports: list[ApReport]) -> str:
    labels = sorted({label for r in reports for label in r.per_class})
    header = ["AP @ thr"] + labels + ["mAP"]
    rows = [header]
    for report in reports:
        row = [f"{report.threshold:g}"]
        row += [f"{report.per_class[label].ap * 100:.2f}" for label in labels]
        row.append(f"{report.map * 100:.2f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    out = []
    for row in rows:
        out.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    return "\n".join(out) + "\n"
