"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import csv
import json
import math
import os
import time
import warnings
import xml.etree.ElementTree as ET
from fractions import Fraction

import numpy as np
import pytest
from matplotlib.path import Path as MplPath
from scipy import ndimage
from scipy.spatial import ConvexHull

from helpers import (
    BIRADS,
    dense_blur_oracle,
    otsu_oracle_hist,
    perturb,
    random_blob_dataset,
    random_panoptic,
)
from panopkit.cli import main as cli_main
from panopkit.core import CategoryTable, GrayImage, MetricsRecord, PanopticMap, Segment
from panopkit.errors import CollinearPoints, FallbackWarning
from panopkit.experiment import (
    DEFAULT_TAUS,
    MetricSummary,
    Summary,
    aggregate,
    evaluate,
    kfold_split,
    sweep,
)
from panopkit.imgproc import blur, concave_hull, otsu_from_histogram
from panopkit.io import (
    DatasetManifest,
    ManifestItem,
    read_manifest,
    read_panoptic,
    write_gray,
    write_manifest,
    write_panoptic,
    write_report,
)
from panopkit.matching import MatchConfig, MatchReport, OverlapTable, TPPair, match_segments
from panopkit.metrics import average_precision, dice, panoptic_quality
from panopkit.synthesis import SynthesisConfig, build_panoptic, synthesize_segment

pytestmark = pytest.mark.acceptance
VINDR = CategoryTable.from_ids(BIRADS)
SVG = "{http://www.w3.org/2000/svg}"


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}")
    assert ok, detail


# 1 ---------------------------------------------------------------------------------

def _synthetic_report(rng):
    """Match report built directly from random counts and IoUs."""
    tau = float(rng.uniform(0.05, 0.9))
    report = MatchReport(tau)
    sid = 1
    for cid in rng.choice(BIRADS, size=int(rng.integers(1, 4)), replace=False):
        cid = int(cid)
        for _ in range(int(rng.integers(0, 12))):
            g, p = Segment(sid, cid, 10), Segment(sid, cid, 10, 0.5)
            report.tp.append(TPPair(g, p, float(rng.uniform(tau, 1.0))))
            sid += 1
        for _ in range(int(rng.integers(0, 8))):
            report.fp.append(Segment(sid, cid, 5, 0.5))
            sid += 1
        for _ in range(int(rng.integers(0, 8))):
            report.fn.append(Segment(sid, cid, 5))
            sid += 1
    return report


def test_criterion_1_identities(capsys):
    rng = np.random.default_rng(101)
    worst_prod = worst_alt = 0.0
    n_classes = 0
    for n in range(1000):
        if n % 2:
            report = _synthetic_report(rng)
        else:
            gt = random_panoptic(rng, n_max=8)
            report = match_segments(gt, perturb(rng, gt, p_extra=0.6), MatchConfig(float(rng.uniform(0.05, 0.9))))
        for cm in panoptic_quality(report).per_class.values():
            if not cm.tp_count:
                continue
            n_classes += 1
            worst_prod = max(worst_prod, abs(cm.pq - cm.rq * cm.sq))
            alt = cm.iou_sum / (cm.tp_count + 0.5 * cm.fp_count + 0.5 * cm.fn_count)
            worst_alt = max(worst_alt, abs(cm.pq - alt))
    ok = worst_prod <= 1e-12 and worst_alt <= 1e-12 and n_classes > 1000
    verdict(capsys, 1, "PQ identities", ok,
            f"1000 reports, {n_classes} classes with TP; max |PQ-RQ*SQ|={worst_prod:.1e}, "
            f"max |PQ-alt|={worst_alt:.1e}")


# 2 ---------------------------------------------------------------------------------

def test_criterion_2_monotonicity(capsys, tmp_path):
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    failures = []
    last = None
    for n in range(200):
        gt = random_panoptic(rng, n_max=8)
        pred = perturb(rng, gt, p_extra=0.6)
        table = OverlapTable(gt, pred)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = sweep([(gt, pred)])
        rq = [v for v in res.column("rq") if v is not None]
        sq = [v for v in res.column("sq") if v is not None]
        if any(b > a + 1e-12 for a, b in zip(rq, rq[1:])):
            failures.append((n, "rq"))
        if any(b < a - 1e-12 for a, b in zip(sq, sq[1:])):
            failures.append((n, "sq"))
        tps = [{(p.gt.segment_id, p.pred.segment_id, p.iou) for p in table.match(MatchConfig(t)).tp}
               for t in DEFAULT_TAUS]
        for i, t1 in enumerate(DEFAULT_TAUS):
            for j in range(i + 1, len(DEFAULT_TAUS)):
                if tps[j] != {x for x in tps[i] if x[2] >= DEFAULT_TAUS[j]}:
                    failures.append((n, "filtration", t1, DEFAULT_TAUS[j]))
        last = res
    elapsed = time.perf_counter() - start

    write_report(last, tmp_path, "sweep")
    root = ET.parse(tmp_path / "sweep.svg").getroot()
    series = sorted(g.get("data-metric") for g in root.iter(f"{SVG}g") if g.get("class") == "series")
    ticks = root.find(f".//{SVG}g[@class='x-ticks']").findall(f"{SVG}g[@class='tick']")
    svg_ok = series == ["PQ", "RQ", "SQ"] and len(ticks) == 18
    ok = not failures and svg_ok and elapsed < 60
    verdict(capsys, 2, "threshold monotonicity", ok,
            f"200 pairs x 18 thresholds, {len(failures)} violations, SVG series={series} "
            f"ticks={len(ticks)}, {elapsed:.1f}s")


# 3 ---------------------------------------------------------------------------------

def _hull_point_sets(rng):
    sets = []
    for n in range(100):
        kind = n % 4
        if kind == 0:
            pts = rng.uniform(0, 50, size=(int(rng.integers(3, 80)), 2))
        elif kind == 1:
            pts = rng.integers(0, 30, size=(int(rng.integers(5, 120)), 2)) + 0.5
        elif kind == 2:
            centers = rng.uniform(10, 90, size=(3, 2))
            pts = np.concatenate([c + rng.normal(0, 4, size=(30, 2)) for c in centers])
        else:
            # boundary pixels of a random blob, as the synthesis pipeline feeds them
            yy, xx = np.mgrid[0:60, 0:60]
            blob = np.zeros((60, 60), bool)
            for _ in range(3):
                cy, cx, r = rng.uniform(15, 45, 2).tolist() + [rng.uniform(5, 12)]
                blob |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
            edge = blob & ~ndimage.binary_erosion(blob, np.ones((3, 3)))
            r_, c_ = np.nonzero(edge)
            pts = np.column_stack([c_ + 0.5, r_ + 0.5])
        sets.append(pts)
    return sets


def test_criterion_3_oracle_equivalences(capsys):
    rng = np.random.default_rng(303)
    otsu_bad = 0
    for n in range(100):
        if n % 3 == 0:
            hist = rng.integers(0, 50, 256)
        elif n % 3 == 1:
            hist = np.zeros(256, int)
            idx = rng.choice(256, size=int(rng.integers(2, 12)), replace=False)
            hist[idx] = rng.integers(1, 500, len(idx))
        else:
            x = np.clip(np.concatenate([rng.normal(rng.uniform(20, 100), 15, 400),
                                        rng.normal(rng.uniform(120, 230), 20, 300)]), 0, 255)
            hist = np.bincount(x.astype(int), minlength=256)
        if otsu_from_histogram(hist) != otsu_oracle_hist(hist):
            otsu_bad += 1

    worst_blur = 0.0
    for n in range(20):
        data = rng.integers(0, 256, (64, 64)).astype(np.uint8)
        sigma = 7.0 if n % 2 == 0 else float(rng.uniform(0.5, 6.0))
        out = blur(GrayImage(data), sigma).pixels
        ref = dense_blur_oracle(data, sigma)
        worst_blur = max(worst_blur, float(np.max(np.abs(out - ref) / np.maximum(np.abs(ref), 1e-12))))

    outside = skipped = 0
    for pts in _hull_point_sets(rng):
        try:
            poly = concave_hull(pts)
        except CollinearPoints:
            skipped += 1
            continue
        path = MplPath(poly.vertices)
        inside = path.contains_points(pts, radius=1e-9) | path.contains_points(pts, radius=-1e-9)
        outside += int((~inside).sum())

    convex_bad = 0
    for n in range(100):
        ang = np.sort(rng.uniform(0, 2 * np.pi, int(rng.integers(3, 40))))
        ax, ay = rng.uniform(5, 40, 2)
        pts = np.column_stack([50 + ax * np.cos(ang), 50 + ay * np.sin(ang)])
        poly = concave_hull(pts)
        ref = ConvexHull(pts)
        same = {tuple(p) for p in poly.vertices.tolist()} == {tuple(p) for p in pts[ref.vertices].tolist()}
        if not same or not math.isclose(poly.area, ref.volume, rel_tol=1e-12):
            convex_bad += 1

    ok = otsu_bad == 0 and worst_blur <= 1e-6 and outside == 0 and skipped == 0 and convex_bad == 0
    verdict(capsys, 3, "oracle equivalences", ok,
            f"Otsu mismatches {otsu_bad}/100; blur max rel err {worst_blur:.1e} on 20 images; "
            f"hull points outside {outside} over 100 sets; convex-position mismatches {convex_bad}/100")


# 4 ---------------------------------------------------------------------------------

def _map(h, w, segs):
    id_map = np.zeros((h, w), dtype=np.int64)
    for sid, cat, where, conf in segs:
        id_map[where] = sid
    return PanopticMap(id_map, tuple(Segment(s, c, int(np.sum(id_map == s)), f) for s, c, _, f in segs))


def test_criterion_4_hand_values(capsys):
    gt = _map(4, 20, [(1, 4, np.s_[0, 0:6], None), (2, 4, np.s_[3, 0:5], None)])
    pred = _map(4, 20, [(7, 4, np.s_[0, 0:10], 0.9), (8, 4, np.s_[2, 12:18], 0.4)])
    pq = panoptic_quality(match_segments(gt, pred, MatchConfig(0.5)))
    pq_ok = all(math.isclose(a, b, abs_tol=1e-12) for a, b in ((pq.rq, 0.5), (pq.sq, 0.6), (pq.pq, 0.3)))

    gt = _map(6, 6, [(1, 4, np.s_[0, 0:2], None), (2, 4, np.s_[2, 0:2], None)])
    pred = _map(6, 6, [(1, 4, np.s_[0, 0:2], 0.9), (2, 4, np.s_[4, 4:6], 0.7), (3, 4, np.s_[2, 0:2], 0.5)])
    _, ap = average_precision(gt, pred, 0.5)
    exact = float((51 + 50 * Fraction(2, 3)) / 101)
    ap_ok = abs(ap - 0.8350) <= 1e-4 and math.isclose(ap, exact, abs_tol=1e-12)

    gt = _map(12, 20, [(1, 3, np.s_[0:10, 0:10], None)])
    pred = _map(12, 20, [(1, 3, np.s_[0:10, 5:15], 1.0)])
    _, d = dice(gt, pred)
    ok = pq_ok and ap_ok and d == 0.5
    verdict(capsys, 4, "metric hand values", ok,
            f"(RQ, SQ, PQ)=({pq.rq:.4f}, {pq.sq:.4f}, {pq.pq:.4f}); AP={ap:.4f}; Dice={d:.4f}")


# 5 ---------------------------------------------------------------------------------

def test_criterion_5_end_to_end_perfection(capsys, tmp_path):
    data = random_blob_dataset(np.random.default_rng(505), 20)
    paths = []
    for image_id, img, boxes, _ in data:
        pmap = build_panoptic(img, boxes, SynthesisConfig(), VINDR)
        png, _ = write_panoptic(pmap, tmp_path / f"{image_id}.png")
        paths.append((png, png))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = sweep(paths, DEFAULT_TAUS)
    bad = [(r.tau, m) for r in res.rows for m in ("rq", "sq", "pq", "ap", "dice") if r.value(m) != 1.0]
    ok = not bad and len(res.rows) == 18 and res.optimal_tau == 0.05
    n_segments = sum(len(read_panoptic(p).segments) for p, _ in paths)
    verdict(capsys, 5, "end-to-end perfection", ok,
            f"20 images, {n_segments} segments; {len(bad)} metric cells != 1 over 18 thresholds; "
            f"optimal tau={res.optimal_tau}")


# 6 ---------------------------------------------------------------------------------

def test_criterion_6_synthesis_fidelity(capsys, tmp_path):
    data = random_blob_dataset(np.random.default_rng(606), 60)
    ious = []
    cfg = SynthesisConfig(sigma=7.0)
    for _, img, boxes, supports in data:
        for box, support in zip(boxes, supports):
            m = synthesize_segment(img, box, cfg).bits
            ious.append((m & support).sum() / (m | support).sum())
    ious = np.array(ious)
    frac = float(np.mean(ious >= 0.7))

    # a flat box through the CLI: whole-box segment and a logged warning
    images = tmp_path / "images"
    images.mkdir()
    flat = np.full((40, 50), 100, np.uint8)
    write_gray(GrayImage(flat), images / "flat.png")
    with open(tmp_path / "boxes.csv", "w", newline="") as fh:
        csv.writer(fh).writerows([["image_id", "xmin", "ymin", "xmax", "ymax", "category"],
                                  ["flat", 5, 6, 30, 25, "BI-RADS 3"]])
    code = cli_main(["synthesize", str(images), str(tmp_path / "boxes.csv"), str(tmp_path / "out"), "--jobs", "1"])
    log = [json.loads(line) for line in (tmp_path / "out" / "synthesis_warnings.jsonl").read_text().splitlines()]
    pmap = read_panoptic(tmp_path / "out" / "flat.png")
    whole = np.zeros((40, 50), bool)
    whole[6:25, 5:30] = True
    fallback_ok = (code == 0 and np.array_equal(pmap.id_map == 1, whole)
                   and [r["category"] for r in log] == [FallbackWarning.__name__])

    ok = frac >= 0.95 and fallback_ok
    verdict(capsys, 6, "synthesis fidelity", ok,
            f"{len(ious)} boxes, {100 * frac:.1f}% with IoU >= 0.7 (min {ious.min():.3f}, "
            f"median {np.median(ious):.3f}); flat-box fallback logged={fallback_ok}")


# 7 ---------------------------------------------------------------------------------

def test_criterion_7_format_exactness(capsys, tmp_path):
    rng = np.random.default_rng(707)
    high = np.arange(2**24 - 64, 2**24)
    bad = 0
    max_id = 0
    for n in range(100):
        pool = high if n % 2 == 0 else None
        pmap = random_panoptic(rng, 40, 56, n_max=8, id_pool=pool, confidence=bool(n % 3))
        if n == 0:
            top = np.zeros((40, 56), np.int64)
            top[3:9, 4:20] = 2**24 - 1
            top[20:30, 30:50] = 2**24 - 2
            pmap = PanopticMap(top, (Segment(2**24 - 1, 5, 96, 0.25), Segment(2**24 - 2, 3, 200, 1.0)))
        if n % 4 == 0:
            pmap = PanopticMap(pmap.id_map, pmap.segments, VINDR)
        if pmap.segments:
            max_id = max(max_id, max(s.segment_id for s in pmap.segments))
        png, js = write_panoptic(pmap, tmp_path / f"m{n}.png")
        back = read_panoptic(png)
        png2, js2 = write_panoptic(back, tmp_path / f"r{n}.png")
        same = (back == pmap and np.array_equal(back.id_map, pmap.id_map)
                and png.read_bytes() == png2.read_bytes() and js.read_bytes() == js2.read_bytes())
        bad += not same

    summary = Summary(0.1, {m: MetricSummary(0.2544, 0.0187, 5) for m in ("rq", "sq", "pq", "ap", "dice")}, 5)
    write_report(summary, tmp_path, "summary", ("csv",))
    with open(tmp_path / "summary.csv", encoding="utf-8") as fh:
        cell = list(csv.reader(fh))[1][3]
    ok = bad == 0 and max_id == 2**24 - 1 and cell == "25.44 ± 1.87"
    verdict(capsys, 7, "format exactness", ok,
            f"100 maps round-tripped, {bad} mismatches, largest id {max_id}; PQ cell '{cell}'")


# 8 ---------------------------------------------------------------------------------

def test_criterion_8_split_integrity(capsys, tmp_path):
    rng = np.random.default_rng(808)
    groups = [f"P{g:03d}" for g in range(200)]
    # every patient has at least one image; the rest are spread at random
    owner = groups + [groups[i] for i in rng.integers(0, 200, 300)]
    rng.shuffle(owner)
    items = [ManifestItem(f"img{n:03d}", f"img/{n}.png", f"gt/{n}.png", None, g) for n, g in enumerate(owner)]
    write_manifest(DatasetManifest(items), tmp_path / "manifest.csv")
    runs = []
    for name in ("a.csv", "b.csv"):
        assert cli_main(["split", str(tmp_path / "manifest.csv"), "--k", "5", "--seed", "8",
                         "--out", str(tmp_path / name)]) == 0
        runs.append((tmp_path / name).read_bytes())
    manifest = read_manifest(tmp_path / "a.csv")
    fold_of = {i.image_id: i.fold for i in manifest.items}
    partition = sorted(fold_of) == sorted(i.image_id for i in items) and set(fold_of.values()) == set(range(5))
    by_group = {}
    for i in manifest.items:
        by_group.setdefault(i.group, set()).add(i.fold)
    straddle = sum(len(f) > 1 for f in by_group.values())
    plan = kfold_split([i.image_id for i in items], 5, 8, [i.group for i in items], "group")
    library_same = plan.assignments == fold_of
    groups_per_fold = [len({i.group for i in manifest.items if i.fold == f}) for f in range(5)]

    s = aggregate([MetricsRecord(0.1, v / 10, v / 10, v / 10, v / 10, v / 10) for v in (1, 2, 3, 4, 5)])
    agg_ok = math.isclose(s["pq"].mean * 10, 3.0, abs_tol=1e-12) and math.isclose(
        s["pq"].std * 10, math.sqrt(2.5), abs_tol=1e-12)
    ok = partition and straddle == 0 and runs[0] == runs[1] and library_same and agg_ok
    verdict(capsys, 8, "split integrity", ok,
            f"500 items / 200 groups, groups per fold {groups_per_fold}, {straddle} straddling groups, "
            f"rerun identical={runs[0] == runs[1]}; aggregate mean={s['pq'].mean * 10:.4f} "
            f"std={s['pq'].std * 10:.4f} (scaled x10)")


# 9 ---------------------------------------------------------------------------------

def _fast_pair(rng, size=512, n_max=10):
    """512x512 gt/pred maps of up to ``n_max`` ellipses each, painted in local windows."""
    def paint(shapes):
        id_map = np.zeros((size, size), dtype=np.int32)
        segs = []
        for sid, cat, cy, cx, ry, rx, conf in shapes:
            y0, y1 = max(0, int(cy - ry)), min(size, int(cy + ry) + 1)
            x0, x1 = max(0, int(cx - rx)), min(size, int(cx + rx) + 1)
            yy, xx = np.ogrid[y0:y1, x0:x1]
            shape = ((yy + 0.5 - cy) / ry) ** 2 + ((xx + 0.5 - cx) / rx) ** 2 <= 1
            window = id_map[y0:y1, x0:x1]
            free = shape & (window == 0)
            if free.any():
                window[free] = sid
                segs.append(Segment(sid, cat, int(free.sum()), conf))
        return PanopticMap(id_map, tuple(segs))

    n = int(rng.integers(1, n_max + 1))
    ids = rng.choice(np.arange(1, 100000), size=3 * n_max, replace=False).tolist()
    gt_shapes = []
    for k in range(n):
        ry, rx = rng.uniform(6, 60, 2)
        gt_shapes.append((ids[k], int(rng.choice(BIRADS)), rng.uniform(0, size), rng.uniform(0, size), ry, rx, None))
    pred_shapes = []
    for k, (_, cat, cy, cx, ry, rx, _) in enumerate(gt_shapes):
        if rng.random() < 0.15:
            continue
        if rng.random() < 0.1:
            cat = int(rng.choice(BIRADS))
        jitter = rng.normal(0, 0.15, 4)
        pred_shapes.append((ids[n_max + k], cat, cy + jitter[0] * ry, cx + jitter[1] * rx,
                            ry * (1 + jitter[2]), rx * (1 + jitter[3]), float(rng.random())))
    extra = 2 * n_max
    while len(pred_shapes) < n_max and rng.random() < 0.3:
        pred_shapes.append((ids[extra], int(rng.choice(BIRADS)), rng.uniform(0, size), rng.uniform(0, size),
                            rng.uniform(5, 30), rng.uniform(5, 30), float(rng.random())))
        extra += 1
    return paint(gt_shapes), paint(pred_shapes)


def test_criterion_9_throughput(capsys):
    rng = np.random.default_rng(909)
    pairs = [_fast_pair(rng) for _ in range(1000)]
    assert all(len(g.segments) <= 10 and len(p.segments) <= 10 and g.shape == (512, 512) for g, p in pairs)
    cores = os.cpu_count() or 1
    jobs = min(4, cores)
    cfg = MatchConfig(0.5)
    start = time.perf_counter()
    timed = evaluate(pairs, cfg, jobs=jobs)
    elapsed = time.perf_counter() - start
    others = {j: evaluate(pairs, cfg, jobs=j) for j in sorted({1, 2, 4} - {jobs})}
    identical = all(r == timed for r in others.values())
    ok = elapsed < 30 and identical
    verdict(capsys, 9, "throughput", ok,
            f"1000 pairs of 512x512 at tau=0.5 in {elapsed:.1f}s with {jobs} worker(s) "
            f"on {cores} available core(s); identical across jobs {sorted({jobs, *others})}={identical}")
