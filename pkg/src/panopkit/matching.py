"""Pairing predicted segments with ground-truth segments at an IoU threshold.

Matching is greedy in descending IoU (ties: smaller gt id, then smaller pred
id). Because the candidates above a threshold are a prefix of that ordering,
the matches at a higher threshold are exactly the lower-threshold matches
whose IoU clears it. :class:`OverlapTable` computes the per-image pixel
overlaps once so any number of thresholds can be matched cheaply.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .core import BinaryMask, PanopticMap, Segment
from .errors import CategoryTableMismatch, DimensionMismatch, OverlapViolation


@dataclass(frozen=True)
class MatchConfig:
    tau: float = 0.5
    class_aware: bool = True
    void_forgiveness: bool = False

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")

    def at(self, tau: float) -> "MatchConfig":
        return MatchConfig(tau, self.class_aware, self.void_forgiveness)


class TPPair(NamedTuple):
    gt: Segment
    pred: Segment
    iou: float


@dataclass
class MatchReport:
    """TP pairs, FP predictions and FN ground truths at one threshold.

    Pairs are attributed to the ground truth's category. ``ignored`` holds
    predictions discarded by void forgiveness; they count as neither TP nor FP.
    """

    tau: float
    tp: List[TPPair] = field(default_factory=list)
    fp: List[Segment] = field(default_factory=list)
    fn: List[Segment] = field(default_factory=list)
    ignored: List[Segment] = field(default_factory=list)

    def categories(self) -> List[int]:
        cats = {p.gt.category_id for p in self.tp}
        cats.update(s.category_id for s in self.fp)
        cats.update(s.category_id for s in self.fn)
        return sorted(cats)

    def by_category(self) -> Dict[int, "MatchReport"]:
        out: Dict[int, MatchReport] = defaultdict(lambda: MatchReport(self.tau))
        for pair in self.tp:
            out[pair.gt.category_id].tp.append(pair)
        for seg in self.fp:
            out[seg.category_id].fp.append(seg)
        for seg in self.fn:
            out[seg.category_id].fn.append(seg)
        for seg in self.ignored:
            out[seg.category_id].ignored.append(seg)
        return dict(sorted(out.items()))

    @classmethod
    def merge(cls, reports: Sequence["MatchReport"]) -> "MatchReport":
        """Concatenate per-image reports (all at the same threshold)."""
        if not reports:
            raise ValueError("nothing to merge")
        taus = {r.tau for r in reports}
        if len(taus) != 1:
            raise ValueError(f"cannot merge reports at different thresholds {sorted(taus)}")
        out = cls(reports[0].tau)
        for r in reports:
            out.tp.extend(r.tp)
            out.fp.extend(r.fp)
            out.fn.extend(r.fn)
            out.ignored.extend(r.ignored)
        return out


def iou(a: BinaryMask, b: BinaryMask) -> float:
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = a.area + b.area - inter
    return inter / union if union else 0.0


def check_compatible(gt: PanopticMap, pred: PanopticMap) -> None:
    if gt.shape != pred.shape:
        raise DimensionMismatch(f"gt is {gt.shape}, pred is {pred.shape}")
    if gt.categories is not None and pred.categories is not None and gt.categories != pred.categories:
        raise CategoryTableMismatch("gt and pred carry different category tables")


def _index_of(id_map: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Position of each pixel's id within ``ids`` (sorted, ids[0] == 0)."""
    idx = np.minimum(np.searchsorted(ids, id_map), len(ids) - 1)
    if not np.array_equal(ids[idx], id_map):
        raise OverlapViolation("id_map holds ids missing from the segment table")
    return idx


class OverlapTable:
    """Pixel overlap counts between every gt and pred segment of one image.

    ``inter[i, j]`` counts pixels with gt id ``gt_ids[i]`` and pred id
    ``pred_ids[j]``; row and column 0 are void.
    """

    def __init__(self, gt: PanopticMap, pred: PanopticMap):
        check_compatible(gt, pred)
        self.gt_segments = sorted(gt.segments, key=lambda s: s.segment_id)
        self.pred_segments = sorted(pred.segments, key=lambda s: s.segment_id)
        gt_ids = np.array([0] + [s.segment_id for s in self.gt_segments], dtype=np.int64)
        pred_ids = np.array([0] + [s.segment_id for s in self.pred_segments], dtype=np.int64)
        ng, npr = len(gt_ids), len(pred_ids)
        key = _index_of(gt.id_map, gt_ids) * npr + _index_of(pred.id_map, pred_ids)
        self.inter = np.bincount(key.ravel(), minlength=ng * npr).reshape(ng, npr)
        self.gt_area = self.inter.sum(axis=1)
        self.pred_area = self.inter.sum(axis=0)
        self.gt_cat = np.array([0] + [s.category_id for s in self.gt_segments], dtype=np.int64)
        self.pred_cat = np.array([0] + [s.category_id for s in self.pred_segments], dtype=np.int64)
        self._candidates: Dict[bool, tuple] = {}

    def iou_matrix(self) -> np.ndarray:
        """IoU of gt segments (rows) against pred segments (cols), void excluded."""
        inter = self.inter[1:, 1:].astype(np.float64)
        union = self.gt_area[1:, None] + self.pred_area[None, 1:] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union > 0, inter / union, 0.0)

    def candidates(self, class_aware: bool = True):
        """(gt index, pred index, iou) of overlapping pairs in greedy order."""
        if class_aware not in self._candidates:
            m = self.iou_matrix()
            ok = m > 0
            if class_aware:
                ok &= self.gt_cat[1:, None] == self.pred_cat[None, 1:]
            gi, pj = np.nonzero(ok)
            vals = m[gi, pj]
            gid = np.array([self.gt_segments[i].segment_id for i in gi], dtype=np.int64)
            pid = np.array([self.pred_segments[j].segment_id for j in pj], dtype=np.int64)
            order = np.lexsort((pid, gid, -vals))
            self._candidates[class_aware] = (gi[order], pj[order], vals[order])
        return self._candidates[class_aware]

    def match(self, cfg: MatchConfig) -> MatchReport:
        gi, pj, vals = self.candidates(cfg.class_aware)
        n_ok = int(np.count_nonzero(vals >= cfg.tau))
        gt_used = np.zeros(len(self.gt_segments), dtype=bool)
        pred_used = np.zeros(len(self.pred_segments), dtype=bool)
        report = MatchReport(cfg.tau)
        for g, p, v in zip(gi[:n_ok].tolist(), pj[:n_ok].tolist(), vals[:n_ok].tolist()):
            if gt_used[g] or pred_used[p]:
                continue
            gt_used[g] = pred_used[p] = True
            report.tp.append(TPPair(self.gt_segments[g], self.pred_segments[p], v))
        for j, seg in enumerate(self.pred_segments):
            if pred_used[j]:
                continue
            if cfg.void_forgiveness and 2 * self.inter[0, j + 1] > self.pred_area[j + 1]:
                report.ignored.append(seg)
            else:
                report.fp.append(seg)
        report.fn = [seg for i, seg in enumerate(self.gt_segments) if not gt_used[i]]
        return report

    def semantic_counts(self):
        """Per category: (|P ∩ G|, |P|, |G|) of the category-collapsed masks."""
        counts: Dict[int, List[int]] = {}
        for i, c in enumerate(self.gt_cat[1:], start=1):
            counts.setdefault(int(c), [0, 0, 0])[2] += int(self.gt_area[i])
        for j, c in enumerate(self.pred_cat[1:], start=1):
            counts.setdefault(int(c), [0, 0, 0])[1] += int(self.pred_area[j])
        same = self.gt_cat[1:, None] == self.pred_cat[None, 1:]
        gi, pj = np.nonzero(same & (self.inter[1:, 1:] > 0))
        for i, j in zip(gi.tolist(), pj.tolist()):
            counts[int(self.gt_cat[i + 1])][0] += int(self.inter[i + 1, j + 1])
        return {c: tuple(v) for c, v in sorted(counts.items())}


def match_segments(gt: PanopticMap, pred: PanopticMap, cfg: Optional[MatchConfig] = None) -> MatchReport:
    return OverlapTable(gt, pred).match(cfg or MatchConfig())
