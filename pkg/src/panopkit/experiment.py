"""Threshold sweeps, fold splits and mean ± std aggregation."""

from __future__ import annotations

import math
import os
import statistics
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core import METRIC_NAMES, MetricsRecord, PanopticMap
from .errors import EmptyGrid, MixedThresholds, TooFewFolds, TooFewItems, UndefinedValueWarning
from .matching import MatchConfig, OverlapTable
from .metrics import _dice_from_tables, metrics_from_tables

DEFAULT_TAUS: Tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(1, 19))

MapSource = Union[PanopticMap, str, os.PathLike]


def _load(src: MapSource) -> PanopticMap:
    if isinstance(src, PanopticMap):
        return src
    from .io import read_panoptic

    return read_panoptic(src)


def _table(pair) -> OverlapTable:
    gt, pred = pair
    return OverlapTable(_load(gt), _load(pred))


def default_jobs() -> int:
    return os.cpu_count() or 1


def build_tables(pairs: Sequence[Tuple[MapSource, MapSource]], jobs: int = 1) -> List[OverlapTable]:
    """Overlap tables for each (gt, pred) pair, in input order.

    Sources may be maps or paths to panoptic PNGs; with ``jobs > 1`` paths
    are read inside the worker processes. Output does not depend on ``jobs``.
    """
    pairs = list(pairs)
    if jobs <= 1 or len(pairs) < 2:
        return [_table(p) for p in pairs]
    chunk = max(1, len(pairs) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_table, pairs, chunksize=chunk))


@dataclass(frozen=True)
class EvalOptions:
    average: str = "macro"
    interpolation: str = "coco101"
    per_image_dice: bool = False
    require_confidence: bool = False


def evaluate(
    pairs: Sequence[Tuple[MapSource, MapSource]],
    cfg: MatchConfig = MatchConfig(),
    options: EvalOptions = EvalOptions(),
    jobs: int = 1,
) -> MetricsRecord:
    tables = build_tables(pairs, jobs)
    return metrics_from_tables(
        tables, cfg, options.average, options.interpolation, options.per_image_dice,
        options.require_confidence,
    )


@dataclass
class SweepResult:
    rows: List[MetricsRecord]
    optimal_tau: Optional[float]

    def __post_init__(self):
        taus = [r.tau for r in self.rows]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("sweep rows must have strictly increasing tau")
        if self.optimal_tau is not None and self.optimal_tau not in taus:
            raise ValueError(f"optimal tau {self.optimal_tau} is not a sweep row")

    @property
    def taus(self) -> List[float]:
        return [r.tau for r in self.rows]

    def column(self, name: str) -> List[Optional[float]]:
        return [r.value(name) for r in self.rows]

    @property
    def optimal(self) -> Optional[MetricsRecord]:
        for r in self.rows:
            if r.tau == self.optimal_tau:
                return r
        return None


def check_grid(taus: Sequence[float]) -> List[float]:
    taus = [float(t) for t in taus]
    if not taus:
        raise EmptyGrid("threshold grid is empty")
    if any(not (0.0 < t <= 1.0) for t in taus):
        raise ValueError(f"thresholds must lie in (0, 1]: {taus}")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError(f"thresholds must be strictly increasing: {taus}")
    return taus


def optimal_threshold(rows: Sequence[MetricsRecord]) -> Optional[float]:
    """Threshold with the highest PQ; the smallest one wins ties."""
    best_tau, best = None, -math.inf
    for r in rows:
        if r.pq is not None and r.pq > best:
            best_tau, best = r.tau, r.pq
    return best_tau


def sweep_tables(
    tables: Sequence[OverlapTable],
    taus: Sequence[float] = DEFAULT_TAUS,
    cfg: MatchConfig = MatchConfig(),
    options: EvalOptions = EvalOptions(),
) -> SweepResult:
    taus = check_grid(taus)
    dice_values = _dice_from_tables(tables, options.per_image_dice, options.average)
    rows = [
        metrics_from_tables(
            tables, cfg.at(t), options.average, options.interpolation, options.per_image_dice,
            options.require_confidence, dice_values,
        )
        for t in taus
    ]
    return SweepResult(rows, optimal_threshold(rows))


def sweep(
    pairs: Sequence[Tuple[MapSource, MapSource]],
    taus: Sequence[float] = DEFAULT_TAUS,
    cfg: MatchConfig = MatchConfig(),
    options: EvalOptions = EvalOptions(),
    jobs: int = 1,
) -> SweepResult:
    """Evaluate every threshold in ``taus`` (default 0.05, 0.10, ..., 0.90).

    Overlaps are tabulated once and re-matched per threshold.
    """
    taus = check_grid(taus)
    return sweep_tables(build_tables(pairs, jobs), taus, cfg, options)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: Mapping[Hashable, int]
    seed: int
    group_key: Optional[str] = None

    def folds(self) -> List[List[Hashable]]:
        out: List[List[Hashable]] = [[] for _ in range(self.k)]
        for item, fold in self.assignments.items():
            out[fold].append(item)
        return out

    def split(self, fold: int) -> Tuple[List[Hashable], List[Hashable]]:
        """(train items, validation items) for one fold."""
        train = [i for i, f in self.assignments.items() if f != fold]
        val = [i for i, f in self.assignments.items() if f == fold]
        return train, val


def kfold_split(
    items: Sequence[Hashable],
    k: int = 5,
    seed: int = 0,
    groups: Optional[Sequence[Optional[Hashable]]] = None,
    group_key: Optional[str] = None,
) -> FoldPlan:
    """Deterministic (optionally grouped) k-fold assignment.

    Groups are put in sorted order, shuffled with a seeded generator and dealt
    round-robin into ``k`` folds, so every group lands in exactly one fold and
    fold group counts differ by at most one. Items without a group value are
    their own group.
    """
    items = list(items)
    if len(set(items)) != len(items):
        raise ValueError("item ids must be unique")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if groups is None:
        groups = [None] * len(items)
    if len(groups) != len(items):
        raise ValueError("groups must align with items")
    keys = [("g", str(g)) if g is not None and g != "" else ("i", str(i)) for i, g in zip(items, groups)]
    unique = sorted(set(keys))
    if len(unique) < k:
        raise TooFewItems(f"{len(unique)} groups cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(unique))
    fold_of = {unique[g]: pos % k for pos, g in enumerate(order)}
    assignments = {item: fold_of[key] for item, key in zip(items, keys)}
    return FoldPlan(k, assignments, seed, group_key)


@dataclass(frozen=True)
class MetricSummary:
    mean: Optional[float]
    std: Optional[float]
    n: int


@dataclass
class Summary:
    """Per-metric mean and sample standard deviation across folds."""

    tau: float
    metrics: Dict[str, MetricSummary] = field(default_factory=dict)
    n_folds: int = 0

    def __getitem__(self, name: str) -> MetricSummary:
        return self.metrics[name]


def aggregate(fold_records: Sequence[MetricsRecord]) -> Summary:
    records = list(fold_records)
    if len(records) < 2:
        raise TooFewFolds(f"need at least 2 fold records, got {len(records)}")
    taus = sorted({r.tau for r in records})
    if len(taus) > 1:
        raise MixedThresholds(f"fold records use different thresholds: {taus}")
    summary = Summary(taus[0], n_folds=len(records))
    for name in METRIC_NAMES:
        values = [r.value(name) for r in records]
        defined = [v for v in values if v is not None]
        if len(defined) < len(values):
            warnings.warn(
                UndefinedValueWarning(
                    f"{name}: {len(values) - len(defined)} undefined fold value(s) excluded"
                ),
                stacklevel=2,
            )
        n = len(defined)
        mean = statistics.mean(defined) if n else None
        std = statistics.stdev(defined) if n >= 2 else None
        summary.metrics[name] = MetricSummary(mean, std, n)
    return summary
