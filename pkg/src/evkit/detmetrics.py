"""COCO-style mean average precision over per-frame detections.

Matching is greedy in descending score order: each prediction takes the
highest-IoU still-unmatched ground-truth box of its own class with
IoU >= threshold; everything else is a false positive, unmatched ground
truth a false negative.  Average precision interpolates the
monotone-from-the-right precision envelope on a fixed recall grid
(101 points by default) and mAP averages over classes (those with at least
one ground-truth box) and IoU thresholds (0.50:0.05:0.95 by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import AnnotatedBox, read_annotations
from .errors import NoGroundTruth

DEFAULT_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
DEFAULT_RECALL_GRID = tuple(np.linspace(0.0, 1.0, 101))


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    recall_grid: tuple[float, ...] = DEFAULT_RECALL_GRID
    class_ids: tuple[int, ...] | None = None
    min_diagonal: float | None = None
    skip_initial_us: int | None = None
    time_tolerance_us: int = 0

    def __post_init__(self):
        t = self.iou_thresholds
        if not t or any(not 0.0 < v <= 1.0 for v in t) or any(
            a >= b for a, b in zip(t, t[1:])
        ):
            raise ValueError("iou_thresholds must be strictly increasing in (0,1]")


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching outcome for one frame at one IoU threshold.

    Prediction arrays are ordered by descending score (ties keep input
    order); pred_matched holds the matched gt's input index or -1.
    """

    threshold: float
    pred_scores: np.ndarray
    pred_classes: np.ndarray
    pred_matched: np.ndarray
    pred_ious: np.ndarray
    gt_classes: np.ndarray
    gt_matched: np.ndarray

    @property
    def n_true_positives(self) -> int:
        return int(np.count_nonzero(self.pred_matched >= 0))

    @property
    def n_false_positives(self) -> int:
        return len(self.pred_matched) - self.n_true_positives

    @property
    def n_false_negatives(self) -> int:
        return int(np.count_nonzero(~self.gt_matched))


def iou(a: AnnotatedBox, b: AnnotatedBox) -> float:
    """Intersection over union of two axis-aligned boxes, in [0, 1]."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.w * a.h + b.w * b.h - inter)


def match_frame(
    preds: list[AnnotatedBox], gts: list[AnnotatedBox], iou_threshold: float
) -> MatchResult:
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    gt_matched = np.zeros(len(gts), dtype=bool)
    matched = np.full(len(preds), -1, dtype=np.int64)
    ious = np.zeros(len(preds))
    for rank, i in enumerate(order):
        pred = preds[i]
        best_j, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if gt_matched[j] or gt.class_id != pred.class_id:
                continue
            v = iou(pred, gt)
            if v >= iou_threshold and v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            gt_matched[best_j] = True
            matched[rank] = best_j
            ious[rank] = best_iou
    return MatchResult(
        threshold=iou_threshold,
        pred_scores=np.array([preds[i].score for i in order]),
        pred_classes=np.array([preds[i].class_id for i in order], dtype=np.int64),
        pred_matched=matched,
        pred_ious=ious,
        gt_classes=np.array([g.class_id for g in gts], dtype=np.int64),
        gt_matched=gt_matched,
    )


def average_precision(
    matches: list[MatchResult], class_id: int,
    recall_grid: tuple[float, ...] = DEFAULT_RECALL_GRID,
) -> float:
    """AP for one class from per-frame matches (all at one threshold).

    Returns NaN when the class has no ground truth anywhere (such classes
    are excluded from mAP averaging).
    """
    scores, tps = [], []
    n_gt = 0
    for m in matches:
        sel = m.pred_classes == class_id
        scores.append(m.pred_scores[sel])
        tps.append(m.pred_matched[sel] >= 0)
        n_gt += int(np.count_nonzero(m.gt_classes == class_id))
    if n_gt == 0:
        return math.nan
    score = np.concatenate(scores) if scores else np.empty(0)
    tp = np.concatenate(tps) if tps else np.empty(0, dtype=bool)
    if score.size == 0:
        return 0.0
    order = np.argsort(-score, kind="stable")
    tp = tp[order]
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(~tp)
    recall = tp_cum / n_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    grid = np.asarray(recall_grid)
    inds = np.searchsorted(recall, grid, side="left")
    interp = np.where(inds < len(recall), envelope[np.minimum(inds, len(recall) - 1)], 0.0)
    return float(np.mean(interp))


@dataclass(frozen=True)
class EvalReport:
    map: float
    map50: float
    map75: float
    per_class: dict[int, float] = field(default_factory=dict)
    n_frames: int = 0
    n_predictions: int = 0
    n_ground_truth: int = 0


def _apply_filters(boxes: list[AnnotatedBox], cfg: EvalConfig) -> list[AnnotatedBox]:
    out = boxes
    if cfg.skip_initial_us is not None:
        out = [b for b in out if b.t >= cfg.skip_initial_us]
    if cfg.min_diagonal is not None:
        out = [b for b in out if math.hypot(b.w, b.h) >= cfg.min_diagonal]
    return out


def _group_frames(
    preds: list[AnnotatedBox], gts: list[AnnotatedBox], tolerance_us: int
) -> list[tuple[list[AnnotatedBox], list[AnnotatedBox]]]:
    """Pair boxes into frames by timestamp; predictions snap to the nearest
    ground-truth timestamp within the tolerance."""
    gt_times = sorted({b.t for b in gts})
    def snap(t: int) -> int:
        if not gt_times or tolerance_us <= 0:
            return t
        pos = np.searchsorted(gt_times, t)
        best = t
        best_gap = tolerance_us + 1
        for cand in (gt_times[max(pos - 1, 0)], gt_times[min(pos, len(gt_times) - 1)]):
            gap = abs(cand - t)
            if gap <= tolerance_us and (gap < best_gap or (gap == best_gap and cand < best)):
                best, best_gap = cand, gap
        return best

    frames: dict[int, tuple[list, list]] = {}
    for b in gts:
        frames.setdefault(b.t, ([], []))[1].append(b)
    for b in preds:
        frames.setdefault(snap(b.t), ([], []))[0].append(b)
    return [frames[t] for t in sorted(frames)]


def evaluate_boxes(
    preds: list[AnnotatedBox], gts: list[AnnotatedBox], cfg: EvalConfig = EvalConfig()
) -> EvalReport:
    """Evaluate in-memory box lists; filters apply to both sides."""
    preds = _apply_filters(preds, cfg)
    gts = _apply_filters(gts, cfg)
    if not gts:
        raise NoGroundTruth("no ground-truth boxes after filtering")
    frames = _group_frames(preds, gts, cfg.time_tolerance_us)
    classes = (
        sorted(set(cfg.class_ids))
        if cfg.class_ids is not None
        else sorted({b.class_id for b in gts})
    )
    thresholds = list(cfg.iou_thresholds)
    extra = [t for t in (0.5, 0.75) if t not in thresholds]
    ap: dict[float, dict[int, float]] = {}
    for thr in thresholds + extra:
        matches = [match_frame(p, g, thr) for p, g in frames]
        ap[thr] = {c: average_precision(matches, c, cfg.recall_grid) for c in classes}

    def mean_over_classes(values: dict[int, float]) -> float:
        live = [v for v in values.values() if not math.isnan(v)]
        return sum(live) / len(live) if live else math.nan

    grid_means = [mean_over_classes(ap[t]) for t in thresholds]
    per_class = {}
    for c in classes:
        vals = [ap[t][c] for t in thresholds if not math.isnan(ap[t][c])]
        per_class[c] = sum(vals) / len(vals) if vals else math.nan
    return EvalReport(
        map=sum(grid_means) / len(grid_means),
        map50=mean_over_classes(ap[0.5]),
        map75=mean_over_classes(ap[0.75]),
        per_class=per_class,
        n_frames=len(frames),
        n_predictions=len(preds),
        n_ground_truth=len(gts),
    )


def evaluate(pred_path, gt_path, cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Evaluate prediction/ground-truth annotation files."""
    return evaluate_boxes(read_annotations(pred_path), read_annotations(gt_path), cfg)


def format_report(report: EvalReport) -> str:
    """Machine-diffable report with a fixed key order."""
    lines = [
        f"map={report.map!r}",
        f"map50={report.map50!r}",
        f"map75={report.map75!r}",
        f"frames={report.n_frames}",
        f"predictions={report.n_predictions}",
        f"ground_truth={report.n_ground_truth}",
    ]
    for c in sorted(report.per_class):
        lines.append(f"ap class={c} value={report.per_class[c]!r}")
    return "".join(line + "\n" for line in lines)
