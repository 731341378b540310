"""RQ/SQ/PQ, AP and Dice.

Dataset values are unweighted (macro) means over categories that have at
least one ground-truth instance, unless ``average="micro"`` pools counts
across categories first. Undefined values are ``None``.
"""

from __future__ import annotations

import warnings
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import ClassMetrics, MetricsRecord, PanopticMap
from .errors import ConfidenceWarning, MissingConfidence
from .matching import MatchConfig, MatchReport, OverlapTable, check_compatible

AVERAGES = ("macro", "micro")
INTERPOLATIONS = ("coco101", "all-points")


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def _class_quality(cid: int, tp: int, fp: int, fn: int, iou_sum: float) -> ClassMetrics:
    denom = tp + 0.5 * fp + 0.5 * fn
    rq = tp / denom if denom else 0.0
    sq = iou_sum / tp if tp else None
    pq = rq * sq if tp else 0.0
    return ClassMetrics(cid, tp, fp, fn, iou_sum, rq, sq, pq)


def panoptic_quality(report: MatchReport, average: str = "macro") -> MetricsRecord:
    """Per-class and dataset RQ/SQ/PQ from a (possibly merged) match report.

    Per class: RQ = TP / (TP + FP/2 + FN/2), SQ = mean TP IoU (undefined for
    TP = 0), PQ = RQ * SQ (0 for TP = 0). The returned record has ``ap`` and
    ``dice`` unset.
    """
    if average not in AVERAGES:
        raise ValueError(f"average must be one of {AVERAGES}")
    per_class: Dict[int, ClassMetrics] = {}
    for cid, sub in report.by_category().items():
        iou_sum = 0.0
        for pair in sub.tp:
            iou_sum += pair.iou
        per_class[cid] = _class_quality(cid, len(sub.tp), len(sub.fp), len(sub.fn), iou_sum)
    return _reduce(report.tau, per_class, average)


def _reduce(tau: float, per_class: Dict[int, ClassMetrics], average: str) -> MetricsRecord:
    if average == "micro":
        tp = sum(c.tp_count for c in per_class.values())
        fp = sum(c.fp_count for c in per_class.values())
        fn = sum(c.fn_count for c in per_class.values())
        pooled = _class_quality(0, tp, fp, fn, sum(c.iou_sum for c in per_class.values()))
        if tp + fn == 0:
            return MetricsRecord(tau, None, None, None, None, None, per_class)
        return MetricsRecord(tau, pooled.rq, pooled.sq, pooled.pq, None, None, per_class)
    scored = [c for c in per_class.values() if c.gt_count > 0]
    if not scored:
        return MetricsRecord(tau, None, None, None, None, None, per_class)
    return MetricsRecord(
        tau,
        _mean(c.rq for c in scored),
        _mean(c.sq for c in scored),
        _mean(c.pq for c in scored),
        None,
        None,
        per_class,
    )


def _confidence(seg, require: bool) -> float:
    if seg.confidence is not None:
        return float(seg.confidence)
    if require:
        raise MissingConfidence(f"prediction segment {seg.segment_id} has no confidence")
    warnings.warn(
        ConfidenceWarning(f"prediction segment {seg.segment_id} has no confidence; assuming 1.0"),
        stacklevel=3,
    )
    return 1.0


def interpolated_ap(hits: Sequence[bool], n_gt: int, interpolation: str = "coco101") -> float:
    """AP of a ranked hit/miss list against ``n_gt`` ground truths.

    ``coco101`` averages the precision envelope at recall 0.00, 0.01, ..., 1.00
    (0 where the recall is never reached); ``all-points`` integrates the
    envelope over every recall step.
    """
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
    if n_gt <= 0:
        raise ValueError("AP needs at least one ground truth")
    hits = np.asarray(hits, dtype=bool)
    if hits.size == 0:
        return 0.0
    tp_cum = np.cumsum(hits)
    precision = tp_cum / np.arange(1, hits.size + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if interpolation == "all-points":
        recall = tp_cum / n_gt
        steps = np.diff(np.r_[0.0, recall])
        return float(np.sum(steps * envelope))
    # first rank whose recall reaches j/100, compared in integers
    levels = np.arange(101) * n_gt
    first = np.searchsorted(tp_cum * 100, levels, side="left")
    reached = first < hits.size
    total = float(np.sum(envelope[first[reached]]))
    return total / 101.0


def _ap_from_tables(
    tables: Sequence[OverlapTable],
    tau: float,
    interpolation: str = "coco101",
    require_confidence: bool = False,
) -> Dict[int, Optional[float]]:
    n_gt: Dict[int, int] = {}
    for t in tables:
        for seg in t.gt_segments:
            n_gt[seg.category_id] = n_gt.get(seg.category_id, 0) + 1
    dets: Dict[int, List[Tuple[float, int, int, int]]] = {}
    for k, t in enumerate(tables):
        for j, seg in enumerate(t.pred_segments):
            conf = _confidence(seg, require_confidence)
            dets.setdefault(seg.category_id, []).append((-conf, seg.segment_id, k, j))
    ious = [t.iou_matrix() for t in tables]

    out: Dict[int, Optional[float]] = {}
    for cid in sorted(set(n_gt) | set(dets)):
        if n_gt.get(cid, 0) == 0:
            out[cid] = None
            continue
        claimed = [np.zeros(len(t.gt_segments), dtype=bool) for t in tables]
        hits = []
        for _, _, k, j in sorted(dets.get(cid, [])):
            t = tables[k]
            col = np.where(
                (t.gt_cat[1:] == cid) & ~claimed[k] & (ious[k][:, j] >= tau), ious[k][:, j], -1.0
            )
            i = int(np.argmax(col)) if col.size else 0
            if col.size and col[i] >= 0:
                claimed[k][i] = True
                hits.append(True)
            else:
                hits.append(False)
        out[cid] = interpolated_ap(hits, n_gt[cid], interpolation)
    return out


def _as_pairs(gt, pred) -> List[Tuple[PanopticMap, PanopticMap]]:
    if isinstance(gt, PanopticMap):
        return [(gt, pred)]
    gt, pred = list(gt), list(pred)
    if len(gt) != len(pred):
        raise ValueError(f"{len(gt)} ground-truth maps but {len(pred)} predictions")
    return list(zip(gt, pred))


def average_precision(
    gt, pred, tau: float = 0.5, interpolation: str = "coco101", require_confidence: bool = False
) -> Tuple[Dict[int, Optional[float]], Optional[float]]:
    """Per-class AP and mAP at IoU threshold ``tau``.

    ``gt`` and ``pred`` are single maps or equal-length sequences of maps;
    detections from all images are ranked together by confidence (ties:
    smaller segment id, then earlier image). Each detection claims the
    unclaimed same-class ground truth of its image with the highest IoU
    >= ``tau``. Predictions without a confidence are scored 1.0 with a
    :class:`ConfidenceWarning`, or rejected when ``require_confidence``.
    """
    tables = [OverlapTable(g, p) for g, p in _as_pairs(gt, pred)]
    per_class = _ap_from_tables(tables, tau, interpolation, require_confidence)
    return per_class, _mean(per_class.values())


def _dice_value(inter: int, p: int, g: int) -> Optional[float]:
    return 2.0 * inter / (p + g) if p + g else None


def dice(gt: PanopticMap, pred: PanopticMap) -> Tuple[Dict[int, float], Optional[float]]:
    """Per-class Dice of the category-collapsed masks and their macro mean."""
    check_compatible(gt, pred)
    cats = sorted({s.category_id for s in gt.segments} | {s.category_id for s in pred.segments})
    per_class = {}
    for cid in cats:
        g = gt.semantic_mask(cid).bits
        p = pred.semantic_mask(cid).bits
        value = _dice_value(int(np.count_nonzero(g & p)), int(p.sum()), int(g.sum()))
        if value is not None:
            per_class[cid] = value
    return per_class, _mean(per_class.values())


def _dice_from_tables(
    tables: Sequence[OverlapTable], per_image: bool = False, average: str = "macro"
) -> Tuple[Dict[int, float], Optional[float]]:
    if per_image:
        class_vals: Dict[int, List[float]] = {}
        image_means = []
        for t in tables:
            vals = {}
            for cid, (i, p, g) in t.semantic_counts().items():
                v = _dice_value(i, p, g)
                if v is not None:
                    vals[cid] = v
                    class_vals.setdefault(cid, []).append(v)
            if vals:
                if average == "micro":
                    counts = t.semantic_counts().values()
                    image_means.append(_dice_value(*(sum(c[n] for c in counts) for n in range(3))))
                else:
                    image_means.append(_mean(vals.values()))
        return {c: _mean(v) for c, v in sorted(class_vals.items())}, _mean(image_means)

    pooled: Dict[int, List[int]] = {}
    for t in tables:
        for cid, counts in t.semantic_counts().items():
            acc = pooled.setdefault(cid, [0, 0, 0])
            for n in range(3):
                acc[n] += counts[n]
    per_class = {}
    for cid, (i, p, g) in sorted(pooled.items()):
        v = _dice_value(i, p, g)
        if v is not None:
            per_class[cid] = v
    if average == "micro":
        total = [sum(c[n] for c in pooled.values()) for n in range(3)]
        return per_class, _dice_value(*total)
    return per_class, _mean(per_class.values())


def metrics_from_tables(
    tables: Sequence[OverlapTable],
    cfg: MatchConfig,
    average: str = "macro",
    interpolation: str = "coco101",
    per_image_dice: bool = False,
    require_confidence: bool = False,
    dice_values: Optional[Tuple[Dict[int, float], Optional[float]]] = None,
) -> MetricsRecord:
    """Full MetricsRecord for a dataset whose overlaps are already tabulated.

    ``dice_values`` lets a threshold sweep reuse the (threshold-free) Dice.
    """
    if tables:
        report = MatchReport.merge([t.match(cfg) for t in tables])
    else:
        report = MatchReport(cfg.tau)
    record = panoptic_quality(report, average)
    ap_per_class = _ap_from_tables(tables, cfg.tau, interpolation, require_confidence)
    dice_per_class, dice_mean = dice_values or _dice_from_tables(tables, per_image_dice, average)

    for cid in sorted(set(ap_per_class) | set(dice_per_class)):
        record.per_class.setdefault(cid, ClassMetrics(cid))
    for cid, cm in record.per_class.items():
        cm.ap = ap_per_class.get(cid)
        cm.dice = dice_per_class.get(cid)
    record.per_class = dict(sorted(record.per_class.items()))

    # classes without ground truth carry AP None and drop out of the mean
    record.ap = _mean(ap_per_class.values())
    record.dice = dice_mean
    return record
