"""Raster primitives behind mask synthesis.

Coordinates: pixel ``[row, col]`` has its center at ``(x, y) = (col + 0.5,
row + 0.5)``. Polygons live in that continuous frame, so a polygon whose
vertices are pixel centers rasterizes back onto those same pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .core import BinaryMask, GrayImage
from .errors import (
    CollinearPoints,
    DegeneratePolygon,
    DegenerateRegion,
    NonPositiveSigma,
    TooFewPoints,
)

N_BINS = 256


@dataclass(frozen=True)
class Kernel1D:
    radius: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        w.setflags(write=False)
        if w.shape != (2 * self.radius + 1,):
            raise ValueError("kernel needs 2*radius+1 weights")
        object.__setattr__(self, "weights", w)


def gaussian_kernel(sigma: float) -> Kernel1D:
    if not (sigma > 0 and math.isfinite(sigma)):
        raise NonPositiveSigma(f"sigma must be a positive finite number, got {sigma}")
    radius = math.ceil(3 * sigma)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(k * k) / (2.0 * sigma * sigma))
    w /= w.sum()
    # exact mirror symmetry regardless of rounding in the sum
    w = 0.5 * (w + w[::-1])
    return Kernel1D(radius, w)


def _correlate_axis(data: np.ndarray, weights: np.ndarray, radius: int, axis: int) -> np.ndarray:
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    # numpy "symmetric" is abc|cba and keeps reflecting when radius > size
    padded = np.pad(data, pad, mode="symmetric")
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * radius + 1, axis=axis)
    return windows @ weights


def blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur, rows first then columns, reflected borders."""
    kernel = gaussian_kernel(sigma)
    data = np.asarray(img.pixels, dtype=np.float64)
    out = _correlate_axis(data, kernel.weights, kernel.radius, axis=1)
    out = _correlate_axis(out, kernel.weights, kernel.radius, axis=0)
    # convex combination: clamp float noise back into the input range
    out = np.clip(out, data.min(), data.max())
    return GrayImage(out, img.bitdepth)


def to_bins(img: GrayImage) -> np.ndarray:
    """Map intensities onto 256 histogram bins.

    8-bit data bins by integer part; 16-bit data by the high byte.
    """
    data = np.asarray(img.pixels, dtype=np.float64)
    if img.bitdepth == 16:
        data = data / 256.0
    return np.clip(np.floor(data), 0, N_BINS - 1).astype(np.int64)


def histogram(img: GrayImage) -> np.ndarray:
    return np.bincount(to_bins(img).ravel(), minlength=N_BINS)


def otsu_from_histogram(hist: Sequence[int]) -> int:
    """Threshold bin maximizing between-class variance; first bin on ties.

    Scores are compared exactly: with n0, s0 the count and intensity sum at
    or below ``t`` and n, s the totals, the between-class variance is
    proportional to (n*s0 - s*n0)**2 / (n0 * (n - n0)).
    """
    hist = [int(h) for h in hist]
    if any(h < 0 for h in hist):
        raise ValueError("histogram counts must be non-negative")
    if sum(1 for h in hist if h > 0) < 2:
        raise DegenerateRegion("region has fewer than two distinct intensity levels")
    n = sum(hist)
    s = sum(i * h for i, h in enumerate(hist))
    best_t, best = -1, Fraction(-1)
    n0 = s0 = 0
    for t, h in enumerate(hist[:-1]):
        n0 += h
        s0 += t * h
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        score = Fraction((n * s0 - s * n0) ** 2, n0 * n1)
        if score > best:
            best_t, best = t, score
    return best_t


def otsu_threshold(region: GrayImage) -> int:
    """Otsu threshold of ``region`` as a bin index; foreground is ``to_bins > t``."""
    return otsu_from_histogram(histogram(region))


_EIGHT = np.ones((3, 3), dtype=bool)


def connected_components(mask: BinaryMask) -> List[BinaryMask]:
    """8-connected components, largest first, ties by first pixel in raster order."""
    labels, n = ndimage.label(mask.bits, structure=_EIGHT)
    if n == 0:
        return []
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=n + 1)[1:]
    nz = np.flatnonzero(flat)
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat[nz], nz)
    order = sorted(range(1, n + 1), key=lambda lab: (-areas[lab - 1], first[lab]))
    return [BinaryMask(labels == lab) for lab in order]


@dataclass(frozen=True, eq=False)
class Polygon:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(v) < 3:
            raise DegeneratePolygon(f"polygon needs >= 3 vertices, got {len(v)}")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    @property
    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def contains(self, points, boundary: bool = True) -> np.ndarray:
        """Even-odd containment of ``points``; boundary counts as inside by default."""
        return points_in_polygon(np.asarray(points, dtype=np.float64), self.vertices, boundary)

    def is_simple(self) -> bool:
        return _is_simple(self.vertices)


def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def points_in_polygon(points: np.ndarray, vertices: np.ndarray, boundary: bool = True,
                      chunk: int = 4096) -> np.ndarray:
    points = points.reshape(-1, 2)
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    out = np.empty(len(points), dtype=bool)
    for start in range(0, len(points), chunk):
        p = points[start:start + chunk]
        px, py = p[:, 0:1], p[:, 1:2]
        ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
        inside = (np.count_nonzero(straddle & (px < x_cross), axis=1) % 2) == 1
        on_edge = (
            (_cross(ax, ay, bx, by, px, py) == 0)
            & (px >= np.minimum(ax, bx)) & (px <= np.maximum(ax, bx))
            & (py >= np.minimum(ay, by)) & (py <= np.maximum(ay, by))
        ).any(axis=1)
        out[start:start + chunk] = (inside | on_edge) if boundary else (inside & ~on_edge)
    return out


def _segments_intersect(p, q, a, b) -> np.ndarray:
    """Closed-segment intersection of ``p->q`` against each ``a[i]->b[i]``.

    Touching and collinear overlap count as intersecting. Exact for
    coordinates on a half-integer grid.
    """
    d1 = _cross(a[:, 0], a[:, 1], b[:, 0], b[:, 1], p[0], p[1])
    d2 = _cross(a[:, 0], a[:, 1], b[:, 0], b[:, 1], q[0], q[1])
    d3 = _cross(p[0], p[1], q[0], q[1], a[:, 0], a[:, 1])
    d4 = _cross(p[0], p[1], q[0], q[1], b[:, 0], b[:, 1])
    proper = (np.sign(d1) * np.sign(d2) < 0) & (np.sign(d3) * np.sign(d4) < 0)

    def on_seg(sx, sy, ex, ey, tx, ty, d):
        return (d == 0) & (np.minimum(sx, ex) <= tx) & (tx <= np.maximum(sx, ex)) \
            & (np.minimum(sy, ey) <= ty) & (ty <= np.maximum(sy, ey))

    touch = (
        on_seg(a[:, 0], a[:, 1], b[:, 0], b[:, 1], p[0], p[1], d1)
        | on_seg(a[:, 0], a[:, 1], b[:, 0], b[:, 1], q[0], q[1], d2)
        | on_seg(p[0], p[1], q[0], q[1], a[:, 0], a[:, 1], d3)
        | on_seg(p[0], p[1], q[0], q[1], b[:, 0], b[:, 1], d4)
    )
    return proper | touch


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    if n < 3:
        return False
    if len(np.unique(v, axis=0)) != n:
        return False
    a, b = v, np.roll(v, -1, axis=0)
    for i in range(n):
        # edges i-1, i, i+1 share endpoints with edge i; test the rest
        others = [(i + j) % n for j in range(2, n - 1)]
        if not others:
            continue
        if _segments_intersect(a[i], b[i], a[others], b[others]).any():
            return False
    return True


def convex_hull(points) -> Polygon:
    """Andrew's monotone chain; collinear boundary points are dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).tolist())))
    if len(pts) < 3:
        raise TooFewPoints(f"need >= 3 distinct points, got {len(pts)}")

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2 and _cross(*chain[-2], *chain[-1], *p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower, upper = half(pts), half(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise CollinearPoints("all points are collinear")
    return Polygon(np.array(hull))


def _knn_hull_attempt(pts: np.ndarray, k: int):
    """One k-nearest-neighbour walk; returns vertex array or None on failure."""
    n = len(pts)
    available = np.ones(n, dtype=bool)
    first_idx = int(np.lexsort((pts[:, 0], pts[:, 1]))[0])
    first = pts[first_idx]
    hull = [first_idx]
    available[first_idx] = False
    current = first
    back = np.array([-1.0, 0.0])
    step = 2
    while True:
        if step == 5:
            available[first_idx] = True
        cand_idx = np.flatnonzero(available)
        if len(cand_idx) == 0:
            break
        d = np.sum((pts[cand_idx] - current) ** 2, axis=1)
        near = cand_idx[np.argsort(d, kind="stable")[:k]]
        v = pts[near] - current
        # clockwise angle from the backward direction; largest right turn first
        ang = (math.atan2(back[1], back[0]) - np.arctan2(v[:, 1], v[:, 0])) % (2 * math.pi)
        dist = np.sum(v * v, axis=1)
        backtrack = (v[:, 0] * back[1] - v[:, 1] * back[0] == 0) & (v @ back > 0)
        order = np.lexsort((dist, -ang))
        hv = pts[hull]
        chosen = None
        for o in order:
            if backtrack[o]:
                continue
            c = near[o]
            closing = c == first_idx
            # edges hull[i]->hull[i+1]; skip the last (shares current) and,
            # when closing, the first (shares the start point)
            lo = 1 if closing else 0
            hi = len(hull) - 2
            if hi > lo and _segments_intersect(current, pts[c], hv[lo:hi], hv[lo + 1:hi + 1]).any():
                continue
            chosen = c
            break
        if chosen is None:
            return None
        if chosen == first_idx:
            break
        hull.append(chosen)
        available[chosen] = False
        back = current - pts[chosen]
        current = pts[chosen]
        step += 1
    if len(hull) < 3:
        return None
    return pts[hull]


def concave_hull(points, k: int = 3) -> Polygon:
    """k-nearest-neighbour concave hull (Moreira & Santos, 2007).

    The walk starts at the lowest point (smallest y, then x) and repeatedly
    takes the neighbour with the sharpest right turn whose edge does not cross
    the polygon built so far. A walk that gets stuck, self-intersects or
    leaves a point outside is retried with ``k + 1``; once ``k`` reaches the
    point count the convex hull is returned. The result is simple and
    contains every input point, boundary inclusive.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise TooFewPoints(f"need >= 3 distinct points, got {len(pts)}")
    rel = pts - pts[0]
    if np.all(rel[1:, 0] * rel[1, 1] - rel[1:, 1] * rel[1, 0] == 0):
        raise CollinearPoints("all points are collinear")
    if len(pts) == 3:
        return Polygon(pts)
    k = max(int(k), 3)
    while k < len(pts):
        verts = _knn_hull_attempt(pts, k)
        if verts is not None and _is_simple(verts) and points_in_polygon(pts, verts).all():
            return Polygon(verts)
        k += 1
    return convex_hull(pts)


_EPS = 1e-9


def rasterize(poly: Polygon, width: int, height: int) -> BinaryMask:
    """Set every pixel whose center lies inside or on ``poly`` (even-odd rule)."""
    v = poly.vertices
    if poly.area == 0.0:
        raise DegeneratePolygon("polygon has zero area")
    bits = np.zeros((height, width), dtype=bool)
    a, b = v, np.roll(v, -1, axis=0)

    # interior spans: half-open crossing rule on each row's center line
    rows, xs = [], []
    for (x1, y1), (x2, y2) in zip(a, b):
        if y1 == y2:
            continue
        lo, hi = min(y1, y2), max(y1, y2)
        r0 = max(0, math.ceil(lo - 0.5))
        r1 = min(height - 1, math.ceil(hi - 0.5) - 1)
        if r1 < r0:
            continue
        r = np.arange(r0, r1 + 1)
        yc = r + 0.5
        rows.append(r)
        xs.append(x1 + (yc - y1) * (x2 - x1) / (y2 - y1))
    if rows:
        rows = np.concatenate(rows)
        xs = np.concatenate(xs)
        order = np.lexsort((xs, rows))
        rows, xs = rows[order], xs[order]
        starts = np.flatnonzero(np.r_[True, rows[1:] != rows[:-1]])
        ends = np.r_[starts[1:], len(rows)]
        for s, e in zip(starts, ends):
            r = rows[s]
            for xa, xb in zip(xs[s:e:2], xs[s + 1:e:2]):
                c0 = max(0, math.ceil(xa - 0.5 - _EPS))
                c1 = min(width - 1, math.floor(xb - 0.5 + _EPS))
                if c1 >= c0:
                    bits[r, c0:c1 + 1] = True

    # boundary: centers lying exactly on an edge
    for (x1, y1), (x2, y2) in zip(a, b):
        lo, hi = min(y1, y2), max(y1, y2)
        r0 = max(0, math.ceil(lo - 0.5 - _EPS))
        r1 = min(height - 1, math.floor(hi - 0.5 + _EPS))
        if r1 < r0:
            continue
        if abs(y2 - y1) <= _EPS:
            c0 = max(0, math.ceil(min(x1, x2) - 0.5 - _EPS))
            c1 = min(width - 1, math.floor(max(x1, x2) - 0.5 + _EPS))
            if c1 >= c0:
                bits[r0:r1 + 1, c0:c1 + 1] = True
            continue
        r = np.arange(r0, r1 + 1)
        x = x1 + (r + 0.5 - y1) * (x2 - x1) / (y2 - y1)
        col = np.round(x - 0.5)
        hit = (np.abs(x - 0.5 - col) <= _EPS) & (col >= 0) & (col < width)
        bits[r[hit], col[hit].astype(np.int64)] = True
    return BinaryMask(bits)


def boundary_pixels(bits: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least one 8-neighbour outside the foreground."""
    interior = ndimage.binary_erosion(bits, structure=_EIGHT, border_value=0)
    return bits & ~interior


def pixel_centers(bits: np.ndarray) -> np.ndarray:
    r, c = np.nonzero(bits)
    return np.column_stack([c + 0.5, r + 0.5])
