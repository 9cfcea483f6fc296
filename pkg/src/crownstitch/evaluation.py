"""COCO-protocol instance segmentation evaluation.

Detections are pooled across images into one ranking per IoU threshold;
matching is greedy per image in descending score; AP is the 101-point
interpolated average. Results are reported on the usual 0-100 scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .masks import RlePayload, mask_iou, rle_decode

IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.arange(101) / 100.0


@dataclass
class EvalItem:
    """One image's detections and ground truths, masks in a shared pixel frame."""

    image_id: int
    pred_scores: list[float]
    pred_masks: list[RlePayload]
    gt_masks: list[RlePayload]


@dataclass
class EvalResult:
    map: float
    map50: float
    map75: float
    per_threshold_ap: list[float]
    counts: dict  # {"tp": ..., "fp": ..., "fn": ...} at IoU 0.5

    def as_dict(self) -> dict:
        return {
            "map": self.map,
            "map50": self.map50,
            "map75": self.map75,
            "iou_thresholds": list(IOU_THRESHOLDS),
            "per_threshold_ap": self.per_threshold_ap,
            "counts_iou50": self.counts,
        }


def match_detections(
    iou_matrix: np.ndarray, scores: list[float], iou_threshold: float
) -> tuple[list[bool], int]:
    """Greedy single-match assignment between detections and ground truths.

    iou_matrix is (num_preds, num_gts); detections are visited in descending
    score (ties by input order) and take the unmatched GT of highest IoU when
    that IoU clears the threshold. Returns per-detection TP flags in input
    order plus the count of unmatched GTs.
    """
    n_pred, n_gt = iou_matrix.shape
    order = sorted(range(n_pred), key=lambda i: (-scores[i], i))
    gt_taken = [False] * n_gt
    tp = [False] * n_pred
    for i in order:
        best_j, best_iou = -1, 0.0
        for j in range(n_gt):
            if gt_taken[j]:
                continue
            iou = iou_matrix[i, j]
            if iou >= iou_threshold and iou > best_iou:
                best_j, best_iou = j, iou
        if best_j >= 0:
            gt_taken[best_j] = True
            tp[i] = True
    return tp, gt_taken.count(False)


def average_precision(tp_flags: list[bool], num_gt: int) -> float | None:
    """101-point interpolated AP for a score-descending TP/FP sequence.

    Returns None (undefined, skip) when there are no ground truths and no
    detections; 0 when there are detections but no ground truths.
    """
    if num_gt == 0:
        return None if not tp_flags else 0.0
    if not tp_flags:
        return 0.0
    tp_cum = np.cumsum(np.asarray(tp_flags, dtype=float))
    ranks = np.arange(1, len(tp_flags) + 1)
    precision = tp_cum / ranks
    recall = tp_cum / num_gt
    # Precision envelope: best precision achievable at recall >= r.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    sampled = np.zeros_like(RECALL_POINTS)
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    valid = idx < len(recall)
    sampled[valid] = envelope[idx[valid]]
    return float(sampled.mean())


def _iou_matrix_from_masks(preds: list[RlePayload], gts: list[RlePayload]) -> np.ndarray:
    pm = [rle_decode(p) for p in preds]
    gm = [rle_decode(g) for g in gts]
    out = np.zeros((len(pm), len(gm)))
    for i, a in enumerate(pm):
        for j, b in enumerate(gm):
            out[i, j] = mask_iou(a, b)
    return out


def evaluate_generic(
    items: list[tuple[int, list[float], np.ndarray, int]], max_dets: int = 100
) -> EvalResult:
    """Core protocol over per-image (image_id, scores, iou_matrix, num_gt) tuples.

    The iou_matrix rows must follow the scores list order.
    """
    total_gt = sum(num_gt for _, _, _, num_gt in items)
    if total_gt == 0:
        raise ValidationError("no ground-truth instances; nothing to evaluate")

    # Cap detections per image by score (ties by input order), as COCO does.
    capped = []
    for image_id, scores, ious, num_gt in items:
        keep = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:max_dets]
        keep.sort()
        ious = np.asarray(ious, dtype=float).reshape(len(scores), num_gt)
        capped.append((image_id, [scores[i] for i in keep], ious[keep], num_gt))

    per_threshold = []
    counts50 = {"tp": 0, "fp": 0, "fn": 0}
    for t_index, thr in enumerate(IOU_THRESHOLDS):
        pooled = []  # (score, image_id, input_index, is_tp)
        for image_id, scores, ious, num_gt in capped:
            tp, unmatched = match_detections(ious, scores, thr)
            for i, s in enumerate(scores):
                pooled.append((s, image_id, i, tp[i]))
            if t_index == 0:
                counts50["tp"] += sum(tp)
                counts50["fp"] += len(tp) - sum(tp)
                counts50["fn"] += unmatched
        pooled.sort(key=lambda rec: (-rec[0], rec[2], rec[1]))
        ap = average_precision([rec[3] for rec in pooled], total_gt)
        per_threshold.append(100.0 * (ap if ap is not None else 0.0))

    return EvalResult(
        map=float(np.mean(per_threshold)),
        map50=per_threshold[0],
        map75=per_threshold[IOU_THRESHOLDS.index(0.75)],
        per_threshold_ap=per_threshold,
        counts=counts50,
    )


def evaluate_coco(items: list[EvalItem], max_dets: int = 100) -> EvalResult:
    """Evaluate RLE-mask detections against RLE-mask ground truths."""
    generic = []
    for it in items:
        ious = _iou_matrix_from_masks(it.pred_masks, it.gt_masks)
        generic.append((it.image_id, list(it.pred_scores), ious, len(it.gt_masks)))
    return evaluate_generic(generic, max_dets=max_dets)


def evaluate_polygons(
    pred_polys, gt_polys, max_dets: int = 100
) -> EvalResult:
    """Polygon-IoU evaluation of final GeoJSON outputs against GT polygons.

    Treats the whole collection as a single image; a convenience mode, not
    part of the COCO protocol proper.
    """
    from .polygons import polygon_iou

    scores = [p.score if p.score is not None else 1.0 for p in pred_polys]
    ious = np.zeros((len(pred_polys), len(gt_polys)))
    for i, p in enumerate(pred_polys):
        for j, g in enumerate(gt_polys):
            ious[i, j] = polygon_iou(p, g)
    return evaluate_generic([(0, scores, ious, len(gt_polys))], max_dets=max_dets)
