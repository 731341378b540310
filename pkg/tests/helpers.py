"""Synthetic data generators and independent oracles shared by the tests."""

from __future__ import annotations

import struct
import zlib
from fractions import Fraction

import numpy as np
from scipy import ndimage

from panopkit.core import BoxAnnotation, GrayImage, PanopticMap, Segment

BIRADS = (3, 4, 5)


# --- oracles -------------------------------------------------------------------

def otsu_oracle(values) -> int:
    """Textbook Otsu over 256 levels, brute force, exact arithmetic.

    Between-class variance w0*w1*(mu0-mu1)^2 computed from class weights and
    means for every cut t; first maximizing t wins.
    """
    values = [int(v) for v in np.asarray(values).ravel()]
    n = len(values)
    best_t, best = None, None
    for t in range(255):
        lo = [v for v in values if v <= t]
        hi = [v for v in values if v > t]
        if not lo or not hi:
            continue
        w0, w1 = Fraction(len(lo), n), Fraction(len(hi), n)
        mu0, mu1 = Fraction(sum(lo), len(lo)), Fraction(sum(hi), len(hi))
        score = w0 * w1 * (mu0 - mu1) ** 2
        if best is None or score > best:
            best_t, best = t, score
    return best_t


def otsu_oracle_hist(hist) -> int:
    """Same oracle driven by a histogram instead of pixel values."""
    hist = [int(h) for h in hist]
    n = sum(hist)
    best_t, best = None, None
    for t in range(255):
        n0 = sum(hist[: t + 1])
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum(i * hist[i] for i in range(t + 1)), n0)
        mu1 = Fraction(sum(i * hist[i] for i in range(t + 1, 256)), n1)
        score = Fraction(n0, n) * Fraction(n1, n) * (mu0 - mu1) ** 2
        if best is None or score > best:
            best_t, best = t, score
    return best_t


def dense_blur_oracle(img: np.ndarray, sigma: float) -> np.ndarray:
    """Direct 2-D correlation with the full Gaussian outer-product kernel.

    Kernel built from the closed form, border by explicit half-sample
    symmetric index mapping, no separability used.
    """
    r = int(np.ceil(3 * sigma))
    k = np.arange(-r, r + 1)
    g = np.exp(-(k**2) / (2 * sigma**2))
    g = g / g.sum()
    k2 = np.outer(g, g)
    h, w = img.shape

    def reflect(i, n):
        period = 2 * n
        i = i % period
        return i if i < n else period - 1 - i

    rows = np.array([[reflect(i + d, h) for d in range(-r, r + 1)] for i in range(h)])
    cols = np.array([[reflect(j + d, w) for d in range(-r, r + 1)] for j in range(w)])
    out = np.empty((h, w))
    img = img.astype(np.float64)
    for i in range(h):
        block = img[rows[i]]  # (2r+1, w)
        for j in range(w):
            out[i, j] = np.sum(block[:, cols[j]] * k2)
    return out


def pixel_center_mask(poly, width, height) -> np.ndarray:
    """Pixels whose center is inside or on a polygon, via matplotlib's path test.

    A tiny positive and negative radius are both tried so boundary centers
    count as inside whatever the vertex orientation.
    """
    from matplotlib.path import Path as MplPath

    yy, xx = np.mgrid[0:height, 0:width]
    centers = np.column_stack([xx.ravel() + 0.5, yy.ravel() + 0.5])
    path = MplPath(np.asarray(poly))
    inside = path.contains_points(centers, radius=1e-9) | path.contains_points(centers, radius=-1e-9)
    return inside.reshape(height, width)


def pixel_center_count(poly, width, height) -> int:
    return int(pixel_center_mask(poly, width, height).sum())


def png_bytes_gray8(arr: np.ndarray) -> bytes:
    """Minimal PNG encoder (filter 0, zlib) independent of Pillow."""
    arr = np.asarray(arr, dtype=np.uint8)
    h, w = arr.shape

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    raw = b"".join(b"\x00" + arr[r].tobytes() for r in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b"")


# --- generators --------------------------------------------------------------

def blob_image(rng, height, width, blobs, noise=8.0, background=20, peak=200, edge_blur=1.5):
    """Dark noisy image with flat-topped elliptical blobs; returns (image, supports).

    ``blobs`` is a list of (cy, cx, ry, rx). Each support is the exact ellipse.
    """
    yy, xx = np.mgrid[0:height, 0:width] + 0.5
    supports = []
    canvas = np.zeros((height, width))
    for cy, cx, ry, rx in blobs:
        s = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        supports.append(s)
        canvas = np.maximum(canvas, s.astype(float))
    soft = ndimage.gaussian_filter(canvas, edge_blur) if edge_blur else canvas
    img = background + (peak - background) * soft + rng.normal(0, noise, (height, width))
    return GrayImage(np.clip(np.round(img), 0, 255).astype(np.uint8)), supports


def box_around(support, margin, width, height, image_id="img", category=4):
    ys, xs = np.nonzero(support)
    return BoxAnnotation(
        image_id,
        (max(0, xs.min() - margin), max(0, ys.min() - margin),
         min(width, xs.max() + 1 + margin), min(height, ys.max() + 1 + margin)),
        category,
    )


def random_blob_dataset(rng, n_images, size=(256, 256), max_blobs=3, image_prefix="im"):
    """Images with lesion-scale blobs (radius 20-50 px) and boxes around them."""
    h, w = size
    out = []
    for n in range(n_images):
        k = int(rng.integers(1, max_blobs + 1))
        blobs, tries = [], 0
        while len(blobs) < k and tries < 200:
            tries += 1
            ry, rx = rng.uniform(20, 50, size=2)
            cy, cx = rng.uniform(ry + 15, h - ry - 15), rng.uniform(rx + 15, w - rx - 15)
            if all(abs(cy - b[0]) > ry + b[2] + 30 or abs(cx - b[1]) > rx + b[3] + 30 for b in blobs):
                blobs.append((cy, cx, ry, rx))
        img, supports = blob_image(rng, h, w, blobs)
        image_id = f"{image_prefix}{n:03d}"
        boxes = []
        for s, (_, _, ry, rx) in zip(supports, blobs):
            margin = int(round(rng.uniform(0.2, 0.5) * min(ry, rx)))
            boxes.append(box_around(s, margin, w, h, image_id, int(rng.choice(BIRADS))))
        out.append((image_id, img, boxes, supports))
    return out


def random_panoptic(rng, height=48, width=48, n_max=6, cats=BIRADS, id_pool=None, confidence=False):
    """Map of random rectangles and ellipses painted first-wins."""
    id_map = np.zeros((height, width), dtype=np.int64)
    n = int(rng.integers(0, n_max + 1))
    yy, xx = np.mgrid[0:height, 0:width]
    if id_pool is None:
        ids = rng.choice(np.arange(1, 1000), size=n, replace=False)
    else:
        ids = rng.choice(np.asarray(id_pool), size=n, replace=False)
    segs = []
    for sid in ids:
        cy, cx = rng.integers(0, height), rng.integers(0, width)
        ry, rx = rng.integers(2, max(3, height // 3)), rng.integers(2, max(3, width // 3))
        if rng.random() < 0.5:
            shape = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
        else:
            shape = (abs(yy - cy) <= ry) & (abs(xx - cx) <= rx)
        free = shape & (id_map == 0)
        if not free.any():
            continue
        id_map[free] = sid
        conf = float(rng.random()) if confidence else None
        segs.append(Segment(int(sid), int(rng.choice(cats)), int(free.sum()), conf))
    return PanopticMap(id_map, tuple(segs))


def perturb(rng, gt: PanopticMap, cats=BIRADS, p_drop=0.2, p_extra=0.5, p_relabel=0.1):
    """Prediction derived from ``gt``: shifted/dilated copies, drops, spurious segments."""
    h, w = gt.shape
    id_map = np.zeros((h, w), dtype=np.int64)
    segs = []
    next_id = int(rng.integers(1, 50))
    for seg in gt.segments:
        if rng.random() < p_drop:
            continue
        m = gt.id_map == seg.segment_id
        dy, dx = rng.integers(-4, 5, size=2)
        m = np.roll(np.roll(m, dy, axis=0), dx, axis=1)
        op = rng.integers(0, 3)
        if op == 1:
            m = ndimage.binary_dilation(m, iterations=int(rng.integers(1, 3)))
        elif op == 2:
            m = ndimage.binary_erosion(m)
        free = m & (id_map == 0)
        if not free.any():
            continue
        cat = seg.category_id if rng.random() > p_relabel else int(rng.choice(cats))
        id_map[free] = next_id
        segs.append(Segment(next_id, cat, int(free.sum()), float(rng.random())))
        next_id += int(rng.integers(1, 7))
    while rng.random() < p_extra:
        cy, cx = rng.integers(0, h), rng.integers(0, w)
        r = int(rng.integers(2, 8))
        yy, xx = np.mgrid[0:h, 0:w]
        free = ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r) & (id_map == 0)
        if free.any():
            id_map[free] = next_id
            segs.append(Segment(next_id, int(rng.choice(cats)), int(free.sum()), float(rng.random())))
            next_id += 1
    return PanopticMap(id_map, tuple(segs))


def brute_iou_matrix(gt: PanopticMap, pred: PanopticMap):
    """{(gt id, pred id): IoU} by explicit mask comparison."""
    out = {}
    for g in gt.segments:
        gm = gt.id_map == g.segment_id
        for p in pred.segments:
            pm = pred.id_map == p.segment_id
            inter = int(np.sum(gm & pm))
            union = int(np.sum(gm | pm))
            out[(g.segment_id, p.segment_id)] = inter / union if union else 0.0
    return out
