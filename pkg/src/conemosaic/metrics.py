"""Segmentation and detection evaluation metrics.

Aggregate IoU/Dice treat all foreground as one mask; instance metrics
match pred and gt instances one-to-one by IoU. Instance matching uses an
optimal assignment: greedy matching by descending IoU can drop a valid
pair (e.g. pairwise IoUs [[0.6, 0.55], [0.55, 0.0]] where greedy takes
the 0.6 pair and strands the rest), so totals would depend on tie order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .errors import (
    ConstantSeries,
    DimensionMismatch,
    InvalidThreshold,
    LengthMismatch,
)
from .maskops import CenterSet, InstanceLabelMap


@dataclass
class SegEvalReport:
    aggregate_iou: float
    aggregate_dice: float
    matched_pairs: List[Tuple[int, int, float]]  # (pred label, gt label, IoU)
    mean_matched_iou: float
    mean_matched_dice: float
    tp: int
    fp: int
    fn: int
    detection_precision: float
    detection_recall: float
    detection_f1: float


@dataclass
class CorrelationReport:
    pearson_r: float
    spearman_rho: float
    n: int


def _check_dims(pred: InstanceLabelMap, gt: InstanceLabelMap) -> None:
    if pred.labels.shape != gt.labels.shape:
        raise DimensionMismatch(f"pred {pred.labels.shape} vs gt {gt.labels.shape}")


def aggregate_overlap(pred: InstanceLabelMap, gt: InstanceLabelMap) -> Tuple[float, float]:
    """Foreground-union IoU and Dice; (1.0, 1.0) when both foregrounds are empty."""
    _check_dims(pred, gt)
    p = pred.labels > 0
    g = gt.labels > 0
    inter = int(np.count_nonzero(p & g))
    np_ = int(np.count_nonzero(p))
    ng = int(np.count_nonzero(g))
    union = np_ + ng - inter
    if union == 0:
        return 1.0, 1.0
    return inter / union, 2.0 * inter / (np_ + ng)


def _ratio(tp: int, total: int, other_total: int) -> float:
    # empty-vs-empty counts as perfect agreement
    if total == 0:
        return 1.0 if other_total == 0 else 0.0
    return tp / total


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def match_instances(pred: InstanceLabelMap, gt: InstanceLabelMap,
                    iou_threshold: float = 0.5) -> SegEvalReport:
    """One-to-one instance matching maximizing total IoU over pairs at or above the threshold."""
    _check_dims(pred, gt)
    if not 0.0 < iou_threshold <= 1.0:
        raise InvalidThreshold(f"threshold must be in (0, 1], got {iou_threshold}")
    agg_iou, agg_dice = aggregate_overlap(pred, gt)
    p = pred.labels.ravel().astype(np.int64)
    g = gt.labels.ravel().astype(np.int64)
    p_ids, p_sizes = np.unique(p[p > 0], return_counts=True)
    g_ids, g_sizes = np.unique(g[g > 0], return_counts=True)
    n_pred = len(p_ids)
    n_gt = len(g_ids)

    matched: List[Tuple[int, int, float]] = []
    dice_of: dict = {}
    if n_pred and n_gt:
        both = (p > 0) & (g > 0)
        codes = p[both] * (int(g_ids.max()) + 1) + g[both]
        pair_codes, inter = np.unique(codes, return_counts=True)
        pi = np.searchsorted(p_ids, pair_codes // (int(g_ids.max()) + 1))
        gi = np.searchsorted(g_ids, pair_codes % (int(g_ids.max()) + 1))
        iou = np.zeros((n_pred, n_gt))
        dice = np.zeros((n_pred, n_gt))
        union = p_sizes[pi] + g_sizes[gi] - inter
        iou[pi, gi] = inter / union
        dice[pi, gi] = 2.0 * inter / (p_sizes[pi] + g_sizes[gi])
        scores = np.where(iou >= iou_threshold, iou, 0.0)
        rows, cols = linear_sum_assignment(scores, maximize=True)
        for r, c in zip(rows, cols):
            if iou[r, c] >= iou_threshold:
                matched.append((int(p_ids[r]), int(g_ids[c]), float(iou[r, c])))
                dice_of[(int(p_ids[r]), int(g_ids[c]))] = float(dice[r, c])
        matched.sort(key=lambda t: t[0])

    tp = len(matched)
    fp = n_pred - tp
    fn = n_gt - tp
    if matched:
        mean_iou = float(np.mean([m[2] for m in matched]))
        mean_dice = float(np.mean([dice_of[(m[0], m[1])] for m in matched]))
    else:
        vacuous = n_pred == 0 and n_gt == 0
        mean_iou = mean_dice = 1.0 if vacuous else 0.0
    precision = _ratio(tp, n_pred, n_gt)
    recall = _ratio(tp, n_gt, n_pred)
    return SegEvalReport(
        aggregate_iou=agg_iou,
        aggregate_dice=agg_dice,
        matched_pairs=matched,
        mean_matched_iou=mean_iou,
        mean_matched_dice=mean_dice,
        tp=tp,
        fp=fp,
        fn=fn,
        detection_precision=precision,
        detection_recall=recall,
        detection_f1=_f1(precision, recall),
    )


def detection_metrics(pred_centers: CenterSet, gt_centers: CenterSet,
                      tolerance: float) -> Tuple[float, float, float]:
    """Precision/recall/F1 of center detection by mutual-nearest matching within tolerance."""
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    n_pred = len(pred_centers)
    n_gt = len(gt_centers)
    tp = 0
    if n_pred and n_gt:
        d = cdist(np.asarray(pred_centers.points, dtype=float),
                  np.asarray(gt_centers.points, dtype=float))
        d[d > tolerance] = np.inf
        p_free = np.ones(n_pred, dtype=bool)
        g_free = np.ones(n_gt, dtype=bool)
        while True:
            sub = d[np.ix_(p_free, g_free)]
            if sub.size == 0 or not np.isfinite(sub).any():
                break
            p_idx = np.flatnonzero(p_free)
            g_idx = np.flatnonzero(g_free)
            near_g = np.argmin(sub, axis=1)  # ties resolve to the lowest index
            near_p = np.argmin(sub, axis=0)
            mutual = [(i, near_g[i]) for i in range(len(p_idx))
                      if near_p[near_g[i]] == i and np.isfinite(sub[i, near_g[i]])]
            if not mutual:
                break
            for i, j in mutual:
                p_free[p_idx[i]] = False
                g_free[g_idx[j]] = False
                tp += 1
    precision = _ratio(tp, n_pred, n_gt)
    recall = _ratio(tp, n_gt, n_pred)
    return precision, recall, _f1(precision, recall)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"series lengths {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise LengthMismatch(f"need at least 2 samples, got {len(x)}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.dot(dx, dx))
    sy = float(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        raise ConstantSeries("a constant series has no defined correlation")
    r = float(np.dot(dx, dy)) / np.sqrt(sx * sy)
    return min(1.0, max(-1.0, r))


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average-ranked series."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"series lengths {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise LengthMismatch(f"need at least 2 samples, got {len(x)}")
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def correlations(xs: Sequence[float], ys: Sequence[float]) -> CorrelationReport:
    return CorrelationReport(pearson(xs, ys), spearman(xs, ys), len(list(xs)))
