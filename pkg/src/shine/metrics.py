"""Detector evaluation: IoU, greedy matching, P/R/F1, AP, mAP, confusion.

Average precision uses all-point interpolation (the exact area under the
precision envelope over recall).  Matching is greedy in descending
confidence with a one-to-one constraint: per-class for AP and counts,
class-agnostic for the confusion matrix.  Classes without any ground
truth are excluded from the mAP mean.  All 0/0 ratios are defined as 0.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import _kernels
from .domain import BBox, Detection

# The ten-threshold ranged preset: 0.50, 0.55, ... 0.95.
RANGE_THRESHOLDS = tuple((50 + 5 * k) / 100 for k in range(10))

# One evaluation sample: detections plus (class-id, box) ground truths.
Sample = tuple[Sequence[Detection], Sequence[tuple[int, BBox]]]


def _corners_flat(boxes: Iterable[BBox]) -> array:
    flat = array("d")
    for b in boxes:
        flat.extend(b.corners())
    return flat


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 0 when disjoint."""
    return _kernels.iou_matrix(_corners_flat([a]), _corners_flat([b]))[0]


def _confidence_order(dets: Sequence[Detection]) -> array:
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    return array("q", order)


def _match(dets: Sequence[Detection], gt_boxes: Sequence[BBox], tau: float):
    """(matched gt index per det or -1, flat IoU matrix)."""
    ious = _kernels.iou_matrix(
        _corners_flat(d.box for d in dets), _corners_flat(gt_boxes)
    )
    matched = _kernels.greedy_match(
        ious, len(dets), len(gt_boxes), _confidence_order(dets), tau
    )
    return matched, ious


@dataclass(frozen=True)
class MatchResult:
    """Counts plus the matched (detection, ground-truth, iou) triples."""

    tp: int
    fp: int
    fn: int
    matched_pairs: tuple[tuple[int, int, float], ...]


def match_detections(
    dets: Sequence[Detection], gts: Sequence[BBox], tau: float
) -> MatchResult:
    """Greedy one-to-one matching of same-class detections at IoU >= tau.

    Detections are processed in descending confidence; each takes the
    unmatched ground truth of maximal IoU when that IoU clears ``tau``,
    otherwise it counts as a false positive.  Leftover ground truths are
    false negatives.
    """
    if not (0.0 < tau < 1.0):
        raise ValueError(f"IoU threshold must be in (0, 1), got {tau}")
    matched, ious = _match(dets, [b for b in gts], tau)
    n_gt = len(gts)
    pairs = []
    for di in _confidence_order(dets):
        gi = matched[di]
        if gi >= 0:
            pairs.append((int(di), gi, ious[di * n_gt + gi]))
    tp = len(pairs)
    return MatchResult(tp, len(dets) - tp, n_gt - tp, tuple(pairs))


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall and their harmonic mean; 0 where undefined."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, harmonic_f1(precision, recall)


def harmonic_f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class PRCurve:
    """(recall, precision) after each detection, best-confidence first."""

    points: tuple[tuple[float, float], ...]


def _pooled_flags(
    samples: Sequence[Sample], class_id: int, tau: float
) -> tuple[list[tuple[float, int, int]], int]:
    """Confidence-sorted (confidence, sample, det) TP flags for one class.

    Matching runs independently per sample; the returned list is ordered
    by descending confidence (ties by sample then detection index) with a
    1/0 true-positive flag attached.  Second result is the ground-truth
    count.
    """
    scored: list[tuple[float, int, int, int]] = []
    n_gt = 0
    for s_idx, (dets, gts) in enumerate(samples):
        class_dets = [d for d in dets if d.class_id == class_id]
        gt_boxes = [b for cid, b in gts if cid == class_id]
        n_gt += len(gt_boxes)
        matched, _ = _match(class_dets, gt_boxes, tau)
        for d_idx, det in enumerate(class_dets):
            flag = 1 if matched[d_idx] >= 0 else 0
            scored.append((det.confidence, s_idx, d_idx, flag))
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [(c, s, f) for c, s, _, f in scored], n_gt


def pr_curve(dets: Sequence[Detection], gts: Sequence[BBox], tau: float) -> PRCurve:
    """Precision/recall trajectory over descending confidence cutoffs."""
    flags, n_gt = _pooled_flags([(list(dets), [(0, b) for b in gts])], 0, tau)
    points = []
    tp = 0
    for rank, (_, _, flag) in enumerate(flags, 1):
        tp += flag
        points.append((tp / n_gt if n_gt else 0.0, tp / rank))
    return PRCurve(tuple(points))


def _envelope_area(points: Sequence[tuple[float, float]]) -> float:
    """All-point interpolated area: sum of recall steps times the maximum
    precision at recall >= that step."""
    if not points:
        return 0.0
    env = [p for _, p in points]
    for i in range(len(env) - 2, -1, -1):
        env[i] = max(env[i], env[i + 1])
    area = 0.0
    prev_r = 0.0
    for (r, _), e in zip(points, env):
        if r > prev_r:
            area += (r - prev_r) * e
            prev_r = r
    return area


def average_precision(
    dets: Sequence[Detection], gts: Sequence[BBox], tau: float
) -> float:
    """AP of one class on one sample; requires at least one ground truth."""
    if not gts:
        raise ValueError("AP is undefined without ground truth")
    return _envelope_area(pr_curve(dets, gts, tau).points)


@dataclass(frozen=True)
class APReport:
    """Per-class AP (averaged over thresholds) and their mean."""

    per_class: dict[int, float]
    map_value: float
    thresholds: tuple[float, ...]


def mean_ap(
    samples: Sequence[Sample],
    thresholds: Sequence[float] = (0.5,),
    *,
    class_ids: Sequence[int] | None = None,
) -> APReport:
    """AP per class per threshold, averaged over thresholds then classes.

    Only classes with at least one ground truth participate; an empty
    ``class_ids`` default means every class seen in the ground truth.
    """
    if not thresholds:
        raise ValueError("at least one IoU threshold is required")
    if class_ids is None:
        seen = {cid for _, gts in samples for cid, _ in gts}
        class_ids = sorted(seen)
    per_class: dict[int, float] = {}
    for cid in class_ids:
        aps = []
        for tau in thresholds:
            flags, n_gt = _pooled_flags(samples, cid, tau)
            if n_gt == 0:
                aps = None
                break
            points = []
            tp = 0
            for rank, (_, _, flag) in enumerate(flags, 1):
                tp += flag
                points.append((tp / n_gt, tp / rank))
            aps.append(_envelope_area(points))
        if aps is not None:
            per_class[cid] = sum(aps) / len(aps)
    map_value = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return APReport(per_class, map_value, tuple(thresholds))


@dataclass
class ConfusionMatrix:
    """Square table over class ids plus a trailing background row/column.

    ``counts[gt][det]``; unmatched ground truth lands in the background
    column, spurious detections in the background row.
    """

    n_classes: int
    counts: list[list[int]]

    @classmethod
    def empty(cls, n_classes: int) -> "ConfusionMatrix":
        size = n_classes + 1
        return cls(n_classes, [[0] * size for _ in range(size)])

    @property
    def background(self) -> int:
        return self.n_classes

    def cell(self, gt_class: int, det_class: int) -> int:
        return self.counts[gt_class][det_class]

    def merge(self, other: "ConfusionMatrix") -> None:
        if other.n_classes != self.n_classes:
            raise ValueError("cannot merge confusion matrices of different sizes")
        for i, row in enumerate(other.counts):
            for j, v in enumerate(row):
                self.counts[i][j] += v


def confusion_matrix(
    dets: Sequence[Detection],
    gts: Sequence[tuple[int, BBox]],
    tau: float,
    n_classes: int,
) -> ConfusionMatrix:
    """Class-agnostic spatial matching at ``tau``, then class comparison."""
    cm = ConfusionMatrix.empty(n_classes)
    matched, _ = _match(dets, [b for _, b in gts], tau)
    gt_hit = [False] * len(gts)
    for di, det in enumerate(dets):
        gi = matched[di]
        if gi >= 0:
            cm.counts[gts[gi][0]][det.class_id] += 1
            gt_hit[gi] = True
        else:
            cm.counts[cm.background][det.class_id] += 1
    for gi, (cid, _) in enumerate(gts):
        if not gt_hit[gi]:
            cm.counts[cid][cm.background] += 1
    return cm
