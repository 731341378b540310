"""Domain types shared across the toolkit.

Segment id 0 is void/background everywhere. All containers are immutable
after construction: numpy buffers are copied and marked read-only so maps can
be handed to worker processes or cached without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    AreaMismatch,
    BoxOutOfBounds,
    DimensionMismatch,
    OverlapViolation,
    UnknownCategory,
)

VOID = 0
MAX_SEGMENT_ID = 2**24 - 1


def _frozen(array: np.ndarray, dtype=None) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel intensity raster, indexed ``pixels[row, col]``.

    ``bitdepth`` records the nominal range of the source data (8 or 16 bit).
    Blurred images keep the bitdepth of their source and carry float values
    inside the same range.
    """

    pixels: np.ndarray
    bitdepth: int = 8

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise ValueError(f"GrayImage needs a 2-D grid, got shape {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError("GrayImage must be at least 1x1")
        if self.bitdepth not in (8, 16):
            raise ValueError(f"bitdepth must be 8 or 16, got {self.bitdepth}")
        if pixels.size and (pixels.min() < 0 or pixels.max() >= 2**self.bitdepth):
            raise ValueError(f"intensities outside [0, 2**{self.bitdepth})")
        object.__setattr__(self, "pixels", _frozen(pixels))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.bitdepth == other.bitdepth and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"BinaryMask needs a 2-D grid, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits, dtype=bool))

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.bits.shape

    @cached_property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self.shape, other.shape)
        return BinaryMask(self.bits | other.bits)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self.shape, other.shape)
        return BinaryMask(self.bits & other.bits)


def _check_same_shape(a, b):
    if tuple(a) != tuple(b):
        raise DimensionMismatch(f"shape {tuple(a)} != {tuple(b)}")


@dataclass(frozen=True)
class CategoryTable:
    entries: Tuple[Tuple[int, str], ...]

    def __post_init__(self):
        entries = tuple((int(cid), str(name)) for cid, name in self.entries)
        ids = [cid for cid, _ in entries]
        names = [name for _, name in entries]
        if any(cid <= 0 for cid in ids):
            raise ValueError("category ids must be > 0 (0 is reserved for void)")
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate category ids in {ids}")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate category names in {names}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_ids(cls, ids: Iterable[int]) -> "CategoryTable":
        """Table whose names are the decimal ids, e.g. BI-RADS scores."""
        return cls(tuple((int(i), str(int(i))) for i in sorted(set(ids))))

    @property
    def ids(self) -> Tuple[int, ...]:
        return tuple(cid for cid, _ in self.entries)

    def __contains__(self, category_id) -> bool:
        return category_id in self.ids

    def __len__(self):
        return len(self.entries)

    def name(self, category_id: int) -> str:
        for cid, name in self.entries:
            if cid == category_id:
                return name
        raise UnknownCategory(f"category {category_id} not in table")

    def id_for(self, name: str) -> int:
        for cid, n in self.entries:
            if n == name:
                return cid
        raise UnknownCategory(f"category name {name!r} not in table")


@dataclass(frozen=True)
class Segment:
    segment_id: int
    category_id: int
    area: int
    confidence: Optional[float] = None


@dataclass(frozen=True, eq=False)
class PanopticMap:
    """Per-pixel segment ids plus the table describing each segment.

    Construction only normalizes the buffers; call :func:`validate_panoptic`
    to check the cross-field invariants.
    """

    id_map: np.ndarray
    segments: Tuple[Segment, ...] = ()
    categories: Optional[CategoryTable] = None

    def __post_init__(self):
        id_map = np.asarray(self.id_map)
        if id_map.ndim != 2:
            raise ValueError(f"id_map must be 2-D, got shape {id_map.shape}")
        if id_map.size and id_map.min() < 0:
            raise ValueError("segment ids must be non-negative")
        object.__setattr__(self, "id_map", _frozen(id_map, dtype=np.int32))
        object.__setattr__(self, "segments", tuple(self.segments))

    @classmethod
    def void(cls, height: int, width: int, categories=None) -> "PanopticMap":
        return cls(np.zeros((height, width), dtype=np.int32), (), categories)

    @classmethod
    def from_masks(
        cls,
        masks: Sequence[BinaryMask],
        category_ids: Sequence[int],
        confidences: Optional[Sequence[Optional[float]]] = None,
        categories: Optional[CategoryTable] = None,
        shape: Optional[Tuple[int, int]] = None,
    ) -> Tuple["PanopticMap", list]:
        """Paint masks first-wins in the given order.

        Returns the map and the list of input indices that were dropped
        because every pixel had already been claimed. Surviving segments get
        consecutive ids starting at 1.
        """
        if shape is None:
            if not masks:
                raise ValueError("shape is required when no masks are given")
            shape = masks[0].shape
        id_map = np.zeros(shape, dtype=np.int32)
        segments = []
        dropped = []
        for i, mask in enumerate(masks):
            _check_same_shape(mask.shape, shape)
            free = mask.bits & (id_map == VOID)
            area = int(np.count_nonzero(free))
            if area == 0:
                dropped.append(i)
                continue
            seg_id = len(segments) + 1
            id_map[free] = seg_id
            conf = None if confidences is None else confidences[i]
            segments.append(Segment(seg_id, int(category_ids[i]), area, conf))
        return cls(id_map, tuple(segments), categories), dropped

    @property
    def width(self) -> int:
        return self.id_map.shape[1]

    @property
    def height(self) -> int:
        return self.id_map.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.id_map.shape

    @cached_property
    def by_id(self) -> Mapping[int, Segment]:
        return {s.segment_id: s for s in self.segments}

    def mask(self, segment_id: int) -> BinaryMask:
        return BinaryMask(self.id_map == segment_id)

    def semantic_mask(self, category_id: int) -> BinaryMask:
        ids = [s.segment_id for s in self.segments if s.category_id == category_id]
        return BinaryMask(np.isin(self.id_map, ids))

    def __eq__(self, other):
        if not isinstance(other, PanopticMap):
            return NotImplemented
        return (
            np.array_equal(self.id_map, other.id_map)
            and self.segments == other.segments
            and self.categories == other.categories
        )


@dataclass(frozen=True)
class BoxAnnotation:
    """Weak label. ``box`` is ``(xmin, ymin, xmax, ymax)``, max exclusive."""

    image_id: str
    box: Tuple[int, int, int, int]
    category_id: int

    def __post_init__(self):
        xmin, ymin, xmax, ymax = (int(v) for v in self.box)
        if not (0 <= xmin < xmax and 0 <= ymin < ymax):
            raise ValueError(f"invalid box {self.box}: need 0 <= min < max")
        object.__setattr__(self, "box", (xmin, ymin, xmax, ymax))

    def check_bounds(self, width: int, height: int) -> None:
        xmin, ymin, xmax, ymax = self.box
        if xmax > width or ymax > height:
            raise BoxOutOfBounds(
                f"box {self.box} of {self.image_id!r} exceeds image {width}x{height}"
            )

    @property
    def slices(self) -> Tuple[slice, slice]:
        xmin, ymin, xmax, ymax = self.box
        return slice(ymin, ymax), slice(xmin, xmax)


@dataclass
class ClassMetrics:
    """Counts and metric values for one category at one IoU threshold.

    ``sq`` is ``None`` when there are no true positives. ``ap`` and ``dice``
    are ``None`` when the class has no ground truth (AP) or is empty on both
    sides (Dice).
    """

    category_id: int
    tp_count: int = 0
    fp_count: int = 0
    fn_count: int = 0
    iou_sum: float = 0.0
    rq: float = 0.0
    sq: Optional[float] = None
    pq: float = 0.0
    ap: Optional[float] = None
    dice: Optional[float] = None

    @property
    def gt_count(self) -> int:
        return self.tp_count + self.fn_count


METRIC_NAMES = ("rq", "sq", "pq", "ap", "dice")


@dataclass
class MetricsRecord:
    """RQ/SQ/PQ/AP/Dice for one evaluation at IoU threshold ``tau``.

    Dataset-level values are macro means over classes, so ``pq == rq * sq``
    holds per class (when TP > 0) but not in general for the means.
    """

    tau: float
    rq: Optional[float]
    sq: Optional[float]
    pq: Optional[float]
    ap: Optional[float]
    dice: Optional[float]
    per_class: Dict[int, ClassMetrics] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        for name in METRIC_NAMES:
            value = getattr(self, name)
            if value is not None and not (0.0 <= value <= 1.0 + 1e-12):
                raise ValueError(f"{name}={value} outside [0, 1]")

    def value(self, name: str) -> Optional[float]:
        return getattr(self, name)


def validate_panoptic(pmap: PanopticMap, cats: Optional[CategoryTable] = None) -> PanopticMap:
    """Return ``pmap`` unchanged if it satisfies every PanopticMap invariant.

    Checks, in order: segment ids unique and nonzero, segment table and id map
    agree on the set of ids, areas match pixel counts, categories are known.
    ``cats`` defaults to the map's own table; with neither, the category
    check is skipped.
    """
    cats = cats if cats is not None else pmap.categories
    ids = [s.segment_id for s in pmap.segments]
    if len(set(ids)) != len(ids):
        raise OverlapViolation(f"duplicate segment ids in table: {sorted(ids)}")
    if VOID in ids:
        raise OverlapViolation("segment id 0 is reserved for void")

    present, counts = np.unique(pmap.id_map, return_counts=True)
    pixel_counts = dict(zip(present.tolist(), counts.tolist()))
    pixel_counts.pop(VOID, None)
    missing_from_table = sorted(set(pixel_counts) - set(ids))
    if missing_from_table:
        raise OverlapViolation(f"ids {missing_from_table} in id_map but not in segment table")
    missing_from_map = sorted(set(ids) - set(pixel_counts))
    if missing_from_map:
        raise OverlapViolation(f"ids {missing_from_map} in segment table but not in id_map")

    for seg in pmap.segments:
        if seg.area != pixel_counts[seg.segment_id]:
            raise AreaMismatch(
                f"segment {seg.segment_id}: table area {seg.area} != pixel count "
                f"{pixel_counts[seg.segment_id]}"
            )
        if seg.confidence is not None and not (0.0 <= seg.confidence <= 1.0):
            raise ValueError(f"segment {seg.segment_id}: confidence {seg.confidence} outside [0, 1]")
        if cats is not None and seg.category_id not in cats:
            raise UnknownCategory(
                f"segment {seg.segment_id} has category {seg.category_id}, "
                f"table has {list(cats.ids)}"
            )
    return pmap
