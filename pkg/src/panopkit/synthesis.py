"""Panoptic ground truth from weak bounding boxes.

Each box is cropped, blurred, Otsu-thresholded, and the foreground is wrapped
in a single concave-hull segment. Boxes are then painted first-wins in
annotation order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BinaryMask, BoxAnnotation, CategoryTable, GrayImage, PanopticMap, validate_panoptic
from .errors import (
    CollinearPoints,
    DegenerateRegion,
    FallbackWarning,
    OverlapDropWarning,
    TooFewPoints,
    UnknownCategory,
)
from .imgproc import blur, boundary_pixels, concave_hull, otsu_threshold, pixel_centers, rasterize, to_bins

OVERLAP_POLICIES = ("first-wins",)
FALLBACK_POLICIES = ("whole-box",)


@dataclass(frozen=True)
class SynthesisConfig:
    sigma: float = 7.0
    hull_k_start: int = 3
    overlap_policy: str = "first-wins"
    fallback_policy: str = "whole-box"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.hull_k_start < 3:
            raise ValueError(f"hull_k_start must be >= 3, got {self.hull_k_start}")
        if self.overlap_policy not in OVERLAP_POLICIES:
            raise ValueError(f"unknown overlap policy {self.overlap_policy!r}")
        if self.fallback_policy not in FALLBACK_POLICIES:
            raise ValueError(f"unknown fallback policy {self.fallback_policy!r}")


def _box_foreground(crop: GrayImage, cfg: SynthesisConfig) -> np.ndarray:
    blurred = blur(crop, cfg.sigma)
    t = otsu_threshold(blurred)
    return to_bins(blurred) > t


def synthesize_segment(img: GrayImage, box: BoxAnnotation, cfg: SynthesisConfig = SynthesisConfig()) -> BinaryMask:
    """Single-segment mask for one box, in full-image coordinates.

    Degenerate boxes (flat intensities, or too few / collinear foreground
    pixels for a polygon) become the whole box and emit a
    :class:`FallbackWarning`.
    """
    box.check_bounds(img.width, img.height)
    rows, cols = box.slices
    crop = GrayImage(img.pixels[rows, cols], img.bitdepth)
    try:
        fg = _box_foreground(crop, cfg)
        edge = boundary_pixels(fg)
        hull = concave_hull(pixel_centers(edge), cfg.hull_k_start)
        seg = rasterize(hull, crop.width, crop.height).bits | fg
    except (DegenerateRegion, TooFewPoints, CollinearPoints) as exc:
        warnings.warn(
            FallbackWarning(f"image {box.image_id!r} box {box.box}: {exc}; using whole box"),
            stacklevel=2,
        )
        seg = np.ones(crop.shape, dtype=bool)
    full = np.zeros(img.shape, dtype=bool)
    full[rows, cols] = seg
    return BinaryMask(full)


def build_panoptic(
    img: GrayImage,
    annotations: Sequence[BoxAnnotation],
    cfg: SynthesisConfig = SynthesisConfig(),
    cats: CategoryTable | None = None,
) -> PanopticMap:
    """Synthesize every box and paint the segments first-wins.

    Segments keep annotation order and get ids 1..n; one that loses every
    pixel to earlier boxes is dropped with an :class:`OverlapDropWarning`.
    """
    for ann in annotations:
        ann.check_bounds(img.width, img.height)
        if cats is not None and ann.category_id not in cats:
            raise UnknownCategory(
                f"annotation for {ann.image_id!r} has category {ann.category_id}, "
                f"table has {list(cats.ids)}"
            )
    masks = [synthesize_segment(img, ann, cfg) for ann in annotations]
    pmap, dropped = PanopticMap.from_masks(
        masks, [a.category_id for a in annotations], categories=cats, shape=img.shape
    )
    for i in dropped:
        ann = annotations[i]
        warnings.warn(
            OverlapDropWarning(
                f"image {ann.image_id!r} box {ann.box}: fully covered by earlier segments; dropped"
            ),
            stacklevel=2,
        )
    return validate_panoptic(pmap, cats)
