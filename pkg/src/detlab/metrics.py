"""Detection evaluation from first principles.

Matching is score-ordered greedy: each detection takes the unmatched ground
truth with the highest IoU at or above the threshold (earliest ground truth
on exact ties), otherwise it is a false positive. AP integrates the
precision envelope over recall; protocols differ only in IoU thresholds and
interpolation mode. Classes with no ground truth are excluded from mAP.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

from .errors import ValidationError

Box = tuple[float, float, float, float]


class Protocol(str, Enum):
    VOC50_11PT = "voc50_11pt"
    VOC50_ALLPT = "voc50_allpt"
    COCO_50_95 = "coco_50_95"


COCO_THRESHOLDS = tuple((50 + 5 * i) / 100 for i in range(10))


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: Box
    class_id: int
    score: float

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValidationError(f"degenerate box {self.box}")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")


GroundTruthSet = dict[str, list[tuple[Box, int]]]


@dataclass
class PrCurve:
    points: list[tuple[float, float]]  # (recall, precision) after each detection
    num_gt: int


@dataclass
class MetricsReport:
    protocol: Protocol
    per_class_ap: dict[int, float]
    map_value: float
    iou_thresholds: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "mAP": self.map_value,
            "iou_thresholds": list(self.iou_thresholds),
        }


def iou(a: Box, b: Box) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def match_detections(
    det_boxes: list[Box], gt_boxes: list[Box], iou_thr: float
) -> list[bool]:
    """TP/FP flags for detections already sorted by descending score."""
    matched: set[int] = set()
    flags = []
    for det in det_boxes:
        best_index = -1
        best_iou = -1.0
        for gi, gt in enumerate(gt_boxes):
            if gi in matched:
                continue
            value = iou(det, gt)
            if value >= iou_thr and value > best_iou:
                best_iou, best_index = value, gi
        if best_index >= 0:
            matched.add(best_index)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def pr_curve(flags: list[bool], num_gt: int) -> PrCurve:
    """Cumulative precision/recall after each detection in score order."""
    if num_gt == 0:
        return PrCurve(points=[], num_gt=0)
    points = []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        if flag:
            tp += 1
        points.append((tp / num_gt, tp / k))
    return PrCurve(points=points, num_gt=num_gt)


class ApMode(str, Enum):
    ALL_POINT = "all_point"
    ELEVEN_POINT = "eleven_point"


def average_precision(pr: PrCurve, mode: ApMode = ApMode.ALL_POINT) -> float:
    if not pr.points:
        return 0.0
    # precision envelope: max precision at recall >= r, built right-to-left
    envelope = [0.0] * len(pr.points)
    running = 0.0
    for i in range(len(pr.points) - 1, -1, -1):
        running = max(running, pr.points[i][1])
        envelope[i] = running

    if mode == ApMode.ELEVEN_POINT:
        total = 0.0
        for i in range(11):
            r = i / 10
            value = 0.0
            for (recall, _), env in zip(pr.points, envelope):
                if recall >= r:
                    value = env
                    break
            total += value
        return total / 11

    area = 0.0
    prev_recall = 0.0
    for (recall, _), env in zip(pr.points, envelope):
        if recall > prev_recall:
            area += (recall - prev_recall) * env
            prev_recall = recall
    return area


def _class_ap(
    dets: list[Detection],
    gts: GroundTruthSet,
    class_id: int,
    num_gt: int,
    iou_thr: float,
    mode: ApMode,
) -> float:
    class_dets = [d for d in dets if d.class_id == class_id]
    # stable: ties in score keep input order
    class_dets.sort(key=lambda d: -d.score)

    by_image: dict[str, list[int]] = defaultdict(list)
    for index, det in enumerate(class_dets):
        by_image[det.image_id].append(index)

    flags = [False] * len(class_dets)
    for image_id, indices in by_image.items():
        gt_boxes = [b for (b, c) in gts.get(image_id, []) if c == class_id]
        image_flags = match_detections(
            [class_dets[i].box for i in indices], gt_boxes, iou_thr
        )
        for i, flag in zip(indices, image_flags):
            flags[i] = flag
    return average_precision(pr_curve(flags, num_gt), mode)


def evaluate(
    dets: list[Detection], gts: GroundTruthSet, protocol: Protocol, class_ids: set[int]
) -> MetricsReport:
    """Per-class AP and mAP under the given protocol.

    ``class_ids`` is the labelmap universe; any detection or ground truth
    outside it is an error. Classes with zero ground truth are skipped.
    """
    for det in dets:
        if det.class_id not in class_ids:
            raise ValidationError(f"detection class_id {det.class_id} not in labelmap")
    for image_id, entries in gts.items():
        for _, class_id in entries:
            if class_id not in class_ids:
                raise ValidationError(
                    f"ground truth class_id {class_id} (image '{image_id}')"
                    " not in labelmap"
                )

    if protocol == Protocol.COCO_50_95:
        thresholds: tuple[float, ...] = COCO_THRESHOLDS
        mode = ApMode.ALL_POINT
    else:
        thresholds = (0.5,)
        mode = (
            ApMode.ELEVEN_POINT
            if protocol == Protocol.VOC50_11PT
            else ApMode.ALL_POINT
        )

    gt_counts: dict[int, int] = defaultdict(int)
    for entries in gts.values():
        for _, class_id in entries:
            gt_counts[class_id] += 1

    per_class_ap: dict[int, float] = {}
    for class_id in sorted(class_ids):
        num_gt = gt_counts.get(class_id, 0)
        if num_gt == 0:
            continue
        aps = [
            _class_ap(dets, gts, class_id, num_gt, thr, mode) for thr in thresholds
        ]
        per_class_ap[class_id] = sum(aps) / len(aps)

    map_value = (
        sum(per_class_ap.values()) / len(per_class_ap) if per_class_ap else 0.0
    )
    return MetricsReport(
        protocol=protocol,
        per_class_ap=per_class_ap,
        map_value=map_value,
        iou_thresholds=thresholds,
    )


def render_report_table(report: MetricsReport, class_names: dict[int, str]) -> str:
    """Fixed-width per-class AP table with an mAP footer."""
    rows = [("class", "AP")]
    for class_id, ap in sorted(report.per_class_ap.items()):
        rows.append((class_names.get(class_id, f"id {class_id}"), f"{ap:.4f}"))
    name_width = max(len(name) for name, _ in rows)
    lines = [f"protocol: {report.protocol.value}"]
    lines.append(f"{'class'.ljust(name_width)}  AP")
    lines.append("-" * (name_width + 9))
    for name, ap in rows[1:]:
        lines.append(f"{name.ljust(name_width)}  {ap}")
    lines.append("-" * (name_width + 9))
    lines.append(f"{'mAP'.ljust(name_width)}  {report.map_value:.4f}")
    return "\n".join(lines) + "\n"
