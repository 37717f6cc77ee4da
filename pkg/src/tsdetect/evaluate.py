"""Detection evaluation: interpolated AP over IoU thresholds, operating-point
precision/recall/F1, mean IoU, per-frame recall traces, and the negative-frame
false-positive rate.

Matching follows the usual greedy protocol: predictions in score-descending
order each take the highest-IoU still-uncovered ground truth, provided that
IoU reaches the threshold. AP uses 101-point interpolation of the precision
envelope over recall 0.00..1.00.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box, FrameDetections, SequenceDataset, area, iou
from .errors import EvaluationError

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))  # 0.50 .. 0.95

# Area cutoffs for the small/medium/large buckets.
AREA_SMALL_MAX = 32.0 ** 2
AREA_MEDIUM_MAX = 96.0 ** 2


@dataclass(frozen=True)
class PredMatch:
    pred_index: int
    score: float
    gt_index: int | None
    iou: float


@dataclass
class MatchResult:
    iou_threshold: float
    matches: list[PredMatch]
    gt_covered: list[bool]

    @property
    def n_tp(self) -> int:
        return sum(1 for m in self.matches if m.gt_index is not None)

    @property
    def n_fp(self) -> int:
        return sum(1 for m in self.matches if m.gt_index is None)

    @property
    def n_fn(self) -> int:
        return sum(1 for covered in self.gt_covered if not covered)


def match(preds: list[Box], gts: list[Box], iou_thresh: float) -> MatchResult:
    """Greedily match one frame's predictions to its ground truths.

    Score ties keep the lower prediction index first; IoU ties between ground
    truths resolve to the lower ground-truth index. Each side is matched at
    most once.
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    covered = [False] * len(gts)
    matches: list[PredMatch] = []
    for i in order:
        best_j, best_iou = None, 0.0
        for j, gt in enumerate(gts):
            if covered[j]:
                continue
            v = iou(preds[i], gt)
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j is not None and best_iou >= iou_thresh:
            covered[best_j] = True
            matches.append(PredMatch(i, preds[i].score, best_j, best_iou))
        else:
            matches.append(PredMatch(i, preds[i].score, None, 0.0))
    return MatchResult(iou_thresh, matches, covered)


def average_precision(results: list[MatchResult]) -> float:
    """101-point interpolated AP over pooled, globally score-sorted predictions.

    Returns NaN when there are no ground truths at all (undefined, kept
    distinct from a genuine 0).
    """
    n_gt = sum(len(r.gt_covered) for r in results)
    if n_gt == 0:
        return math.nan
    pooled = [m for r in results for m in r.matches]
    if not pooled:
        return 0.0
    order = sorted(range(len(pooled)), key=lambda i: (-pooled[i].score, i))
    tp = np.array([pooled[i].gt_index is not None for i in order], dtype=float)
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(1.0 - tp)
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    samples = np.linspace(0.0, 1.0, 101)
    idx = np.searchsorted(recall, samples, side="left")
    valid = idx < len(envelope)
    return float(np.where(valid, envelope[np.minimum(idx, len(envelope) - 1)], 0.0).mean())


def _paired_frames(
    preds: SequenceDataset, gts: SequenceDataset
) -> list[tuple[list[Box], list[Box]]]:
    """Align frames by (sequence, frame index); sequence sets must agree."""
    pred_ids = set(preds.sequence_ids())
    gt_ids = set(gts.sequence_ids())
    if pred_ids != gt_ids:
        only_pred = sorted(pred_ids - gt_ids)
        only_gt = sorted(gt_ids - pred_ids)
        raise EvaluationError(
            "sequence ids differ between predictions and ground truth"
            f" (only in predictions: {only_pred}; only in ground truth: {only_gt})"
        )
    pairs: list[tuple[list[Box], list[Box]]] = []
    for sid in sorted(pred_ids):
        pred_frames = {f.frame_index: f for f in preds.sequence(sid)}
        gt_frames = {f.frame_index: f for f in gts.sequence(sid)}
        for fidx in sorted(set(pred_frames) | set(gt_frames)):
            p = pred_frames.get(fidx)
            g = gt_frames.get(fidx)
            pairs.append((p.boxes if p else [], g.boxes if g else []))
    return pairs


def ap_over_range(
    preds: SequenceDataset, gts: SequenceDataset, thresholds: list[float]
) -> dict[float, float]:
    """AP at each IoU threshold over the paired dataset."""
    if not thresholds:
        raise EvaluationError("threshold list must not be empty")
    pairs = _paired_frames(preds, gts)
    out: dict[float, float] = {}
    for t in thresholds:
        results = [match(p, g, t) for p, g in pairs]
        out[t] = average_precision(results)
    return out


def _bucket_filter(boxes: list[Box], lo: float, hi: float) -> list[Box]:
    return [b for b in boxes if lo <= area(b) < hi]


def _bucket_ap(
    pairs: list[tuple[list[Box], list[Box]]], thresholds: list[float], lo: float, hi: float
) -> float:
    """AP restricted to boxes in one area bucket, averaged over thresholds.

    Both predictions and ground truths are filtered to the bucket before
    matching (a desk-scale stand-in for ignore-region bookkeeping).
    """
    filtered = [(_bucket_filter(p, lo, hi), _bucket_filter(g, lo, hi)) for p, g in pairs]
    aps = []
    for t in thresholds:
        results = [match(p, g, t) for p, g in filtered]
        aps.append(average_precision(results))
    return float(np.mean(aps))


@dataclass
class MetricsReport:
    ap_per_threshold: dict[float, float] = field(default_factory=dict)
    ap_mean: float = math.nan
    ap_subrange: float = math.nan
    subrange: tuple[float, float] = (0.5, 0.75)
    ap_small: float = math.nan
    ap_medium: float = math.nan
    ap_large: float = math.nan
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    mean_iou: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def lines(self) -> list[str]:
        """One metric per line, name<TAB>value; the report wire format."""
        out = []
        for t in sorted(self.ap_per_threshold):
            out.append(f"ap_{t:.2f}\t{self.ap_per_threshold[t]:.6f}")
        out.append(f"ap_mean\t{self.ap_mean:.6f}")
        lo, hi = self.subrange
        out.append(f"ap_{lo:g}-{hi:g}\t{self.ap_subrange:.6f}")
        out.append(f"ap_small\t{self.ap_small:.6f}")
        out.append(f"ap_medium\t{self.ap_medium:.6f}")
        out.append(f"ap_large\t{self.ap_large:.6f}")
        out.append(f"precision\t{self.precision:.6f}")
        out.append(f"recall\t{self.recall:.6f}")
        out.append(f"f1\t{self.f1:.6f}")
        out.append(f"mean_iou\t{self.mean_iou:.6f}")
        out.append(f"tp\t{self.tp}")
        out.append(f"fp\t{self.fp}")
        out.append(f"fn\t{self.fn}")
        return out


def evaluate(
    preds: SequenceDataset,
    gts: SequenceDataset,
    thresholds: list[float] | None = None,
    score_thresh: float = 0.5,
    operating_iou: float = 0.5,
    subrange: tuple[float, float] = (0.5, 0.75),
) -> MetricsReport:
    """Full report: AP sweep, area buckets, and the operating-point metrics.

    Precision/recall/F1/mean-IoU are computed at `operating_iou` over
    predictions with score >= score_thresh; AP uses every prediction.
    """
    thresholds = list(thresholds) if thresholds else list(COCO_THRESHOLDS)
    pairs = _paired_frames(preds, gts)

    ap_per_threshold: dict[float, float] = {}
    for t in thresholds:
        results = [match(p, g, t) for p, g in pairs]
        ap_per_threshold[t] = average_precision(results)
    ap_values = list(ap_per_threshold.values())
    ap_mean = float(np.mean(ap_values))
    lo, hi = subrange
    in_range = [v for t, v in ap_per_threshold.items() if lo <= t <= hi]
    ap_subrange = float(np.mean(in_range)) if in_range else math.nan

    tp = fp = fn = 0
    matched_ious: list[float] = []
    for p_boxes, g_boxes in pairs:
        kept = [b for b in p_boxes if b.score >= score_thresh]
        r = match(kept, g_boxes, operating_iou)
        tp += r.n_tp
        fp += r.n_fp
        fn += r.n_fn
        matched_ious.extend(m.iou for m in r.matches if m.gt_index is not None)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    mean_iou = float(np.mean(matched_ious)) if matched_ious else 0.0

    return MetricsReport(
        ap_per_threshold=ap_per_threshold,
        ap_mean=ap_mean,
        ap_subrange=ap_subrange,
        subrange=subrange,
        ap_small=_bucket_ap(pairs, thresholds, 0.0, AREA_SMALL_MAX),
        ap_medium=_bucket_ap(pairs, thresholds, AREA_SMALL_MAX, AREA_MEDIUM_MAX),
        ap_large=_bucket_ap(pairs, thresholds, AREA_MEDIUM_MAX, math.inf),
        precision=precision,
        recall=recall,
        f1=f1,
        mean_iou=mean_iou,
        tp=tp,
        fp=fp,
        fn=fn,
    )


@dataclass(frozen=True)
class TraceRow:
    sequence_id: str
    frame_index: int
    hits: tuple[int, ...]  # 0/1 per ground-truth box, in ground-truth order

    @property
    def n_gt(self) -> int:
        return len(self.hits)

    @property
    def n_hit(self) -> int:
        return sum(self.hits)


def recall_trace(
    preds: SequenceDataset,
    gts: SequenceDataset,
    iou_thresh: float = 0.5,
    score_thresh: float = 0.5,
) -> list[TraceRow]:
    """Per-frame hit/miss record of ground-truth coverage, frame order.

    One row per ground-truth frame (negative frames carry an empty hit
    tuple), enabling the continuity scatter plot.
    """
    pred_ids = set(preds.sequence_ids())
    rows: list[TraceRow] = []
    for sid in sorted(gts.sequence_ids()):
        if sid not in pred_ids:
            raise EvaluationError(f"predictions missing for sequence {sid!r}")
        pred_frames = {f.frame_index: f for f in preds.sequence(sid)}
        for gf in gts.sequence(sid):
            pf = pred_frames.get(gf.frame_index)
            kept = [b for b in pf.boxes if b.score >= score_thresh] if pf else []
            r = match(kept, gf.boxes, iou_thresh)
            rows.append(
                TraceRow(sid, gf.frame_index, tuple(int(c) for c in r.gt_covered))
            )
    return rows


@dataclass(frozen=True)
class FpRateReport:
    n_frames: int
    n_fp_boxes: int
    rate: float  # fraction of frames with at least one detection

    def lines(self) -> list[str]:
        return [
            f"negative_frames\t{self.n_frames}",
            f"false_positive_boxes\t{self.n_fp_boxes}",
            f"false_positive_rate\t{self.rate:.6f}",
        ]


def false_positive_rate(
    frames: list[FrameDetections], score_thresh: float = 0.5
) -> FpRateReport:
    """False-positive behavior on frames known to contain no objects.

    The rate is the fraction of frames with at least one detection above the
    score threshold; the box count is also reported so a per-box ratio can be
    formed instead.
    """
    if not frames:
        raise EvaluationError("no negative frames given")
    n_fp = 0
    flagged = 0
    for f in frames:
        above = sum(1 for b in f.boxes if b.score >= score_thresh)
        n_fp += above
        flagged += 1 if above else 0
    return FpRateReport(len(frames), n_fp, flagged / len(frames))
