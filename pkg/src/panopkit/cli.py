"""``panopkit`` command line: synthesize, evaluate, sweep, split, aggregate.

Exit status is 0 on success, 1 on a toolkit/IO error and 2 on a usage
error. Warnings go to stderr (and a log file where noted) as one JSON object
per line and never change the exit status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .core import CategoryTable, PanopticMap
from .errors import PanopkitError
from .experiment import (
    DEFAULT_TAUS,
    EvalOptions,
    build_tables,
    default_jobs,
    kfold_split,
    sweep_tables,
)
from .io import (
    list_panoptic_dir,
    read_box_annotations,
    read_gray,
    read_manifest,
    read_panoptic,
    read_records_json,
    write_manifest,
    write_panoptic,
    write_report,
    write_summary,
)
from .matching import MatchConfig
from .metrics import metrics_from_tables
from .synthesis import SynthesisConfig, build_panoptic

log = logging.getLogger("panopkit")


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _threshold(text: str) -> float:
    value = _positive_float(text)
    if value > 1:
        raise argparse.ArgumentTypeError(f"IoU threshold must be in (0, 1], got {text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _tau_grid(text: str) -> List[float]:
    return [_threshold(t) for t in text.split(",") if t.strip()]


def _categories(text: str) -> CategoryTable:
    """``"3,4,5"`` or ``"1:benign,2:malignant"``."""
    entries = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        cid, _, name = part.partition(":")
        try:
            entries.append((int(cid), name or cid))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad category entry {part!r}")
    try:
        return CategoryTable(tuple(entries))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def emit_warning(message, stream=None, log_file=None, **fields) -> None:
    record = {"level": "warning", "category": type(message).__name__, "message": str(message)}
    record.update(fields)
    line = json.dumps(record, sort_keys=True)
    print(line, file=stream or sys.stderr)
    if log_file is not None:
        log_file.write(line + "\n")


def _synthesize_one(job):
    image_id, image_path, annotations, cfg, cats = job
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        img = read_gray(image_path)
        pmap = build_panoptic(img, annotations, cfg, cats)
    return image_id, pmap, [w.message for w in caught]


def cmd_synthesize(args) -> int:
    images = {p.stem: p for p in sorted(Path(args.images).glob("*.png"))}
    columns = {}
    if args.category_column:
        columns["category"] = args.category_column
    annotations = read_box_annotations(args.annotations, columns, args.categories, args.skip_empty_boxes)
    unknown = sorted({a.image_id for a in annotations} - set(images))
    if unknown:
        raise PanopkitError(f"annotations reference images missing from {args.images}: {unknown}")
    cats = args.categories or CategoryTable.from_ids(a.category_id for a in annotations)
    by_image = {i: [] for i in images}
    for a in annotations:
        by_image[a.image_id].append(a)
    cfg = SynthesisConfig(sigma=args.sigma, hull_k_start=args.hull_k)
    jobs = [(i, images[i], by_image[i], cfg, cats) for i in images]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_synthesize_one, jobs))
    else:
        results = [_synthesize_one(j) for j in jobs]
    with open(out / "synthesis_warnings.jsonl", "w", encoding="utf-8") as wlog:
        for image_id, pmap, caught in results:
            write_panoptic(pmap, out / f"{image_id}.png")
            for message in caught:
                emit_warning(message, log_file=wlog, image_id=image_id)
    log.info("synthesized %d panoptic maps into %s", len(results), out)
    return 0


def _eval_pairs(gt_dir, pred_dir):
    gts = list_panoptic_dir(gt_dir)
    if not gts:
        raise PanopkitError(f"no panoptic maps (PNG + JSON) in {gt_dir}")
    preds = list_panoptic_dir(pred_dir) if pred_dir else {}
    pairs = []
    for image_id, gt_path in gts.items():
        if image_id in preds:
            pairs.append((gt_path, preds[image_id]))
        else:
            emit_warning(f"no prediction for {image_id}; treating it as empty", image_id=image_id)
            gt = read_panoptic(gt_path)
            pairs.append((gt, PanopticMap.void(gt.height, gt.width, gt.categories)))
    extra = sorted(set(preds) - set(gts))
    for image_id in extra:
        emit_warning(f"prediction {image_id} has no ground truth; ignored", image_id=image_id)
    return pairs


def _options(args) -> EvalOptions:
    return EvalOptions(
        average="micro" if args.micro else "macro",
        interpolation=args.interpolation,
        per_image_dice=args.per_image_dice,
        require_confidence=args.require_confidence,
    )


def _match_config(args, tau=0.5) -> MatchConfig:
    return MatchConfig(tau, class_aware=not args.class_agnostic, void_forgiveness=args.void_forgiveness)


def _build_tables(args):
    pairs = _eval_pairs(args.gt, args.pred)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tables = build_tables(pairs, args.jobs)
    for w in caught:
        emit_warning(w.message)
    return tables


def _with_warnings(fn, *a, **kw):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = fn(*a, **kw)
    for w in caught:
        emit_warning(w.message)
    return result


def cmd_evaluate(args) -> int:
    tables = _build_tables(args)
    opts = _options(args)
    record = _with_warnings(
        metrics_from_tables, tables, _match_config(args, args.tau), opts.average, opts.interpolation,
        opts.per_image_dice, opts.require_confidence,
    )
    write_report(record, args.out, "metrics", ("json", "csv"))
    return 0


def cmd_sweep(args) -> int:
    tables = _build_tables(args)
    result = _with_warnings(sweep_tables, tables, args.taus, _match_config(args), _options(args))
    write_report(result, args.out, "sweep", ("json", "csv", "svg"))
    log.info("optimal tau: %s", result.optimal_tau)
    return 0


def cmd_split(args) -> int:
    manifest = read_manifest(args.manifest)
    groups = None if args.ungrouped else [i.group for i in manifest.items]
    plan = kfold_split(manifest.ids, args.k, args.seed, groups, None if args.ungrouped else "group")
    write_manifest(manifest.with_folds(plan.assignments), args.out or args.manifest)
    return 0


def cmd_aggregate(args) -> int:
    records = []
    for path in args.folds:
        found = read_records_json(path)
        if len(found) != 1:
            raise PanopkitError(f"{path}: expected one metrics record, found {len(found)}")
        records.extend(found)
    _with_warnings(write_summary, records, args.out)
    return 0


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("gt", help="directory of ground-truth panoptic PNG + JSON pairs")
    p.add_argument("pred", nargs="?", help="directory of predicted panoptic maps (missing = empty)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--class-agnostic", action="store_true", help="match segments across categories")
    p.add_argument("--void-forgiveness", action="store_true",
                   help="discard unmatched predictions lying mostly on ground-truth void")
    p.add_argument("--micro", action="store_true", help="pool counts over classes instead of macro mean")
    p.add_argument("--per-image-dice", action="store_true", help="average Dice per image instead of pooling")
    p.add_argument("--interpolation", choices=("coco101", "all-points"), default="coco101")
    p.add_argument("--require-confidence", action="store_true",
                   help="fail on predictions without a confidence instead of assuming 1.0")
    p.add_argument("--jobs", type=_positive_int, default=default_jobs(), help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panopkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="panoptic ground truth from box annotations")
    p.add_argument("images", help="directory of <image_id>.png gray images")
    p.add_argument("annotations", help="CSV with image_id, xmin, ymin, xmax, ymax, category")
    p.add_argument("out", help="output directory for <image_id>.png/.json maps")
    p.add_argument("--sigma", type=_positive_float, default=7.0, help="Gaussian blur sigma (default 7)")
    p.add_argument("--hull-k", type=int, default=3, help="starting k of the concave hull")
    p.add_argument("--categories", type=_categories, default=None,
                   help='category table, e.g. "3,4,5" or "1:benign,2:malignant"')
    p.add_argument("--category-column", default=None, help="CSV column holding the category")
    p.add_argument("--skip-empty-boxes", action="store_true", help="skip rows without box coordinates")
    p.add_argument("--jobs", type=_positive_int, default=default_jobs(), help="worker processes")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="RQ/SQ/PQ/AP/Dice at one IoU threshold")
    _add_eval_flags(p)
    p.add_argument("--tau", type=_threshold, default=0.5, help="IoU threshold (default 0.5)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="evaluate over a grid of IoU thresholds")
    _add_eval_flags(p)
    p.add_argument("--taus", type=_tau_grid, default=list(DEFAULT_TAUS),
                   help="comma-separated thresholds (default 0.05..0.90 step 0.05)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("split", help="assign k folds in a manifest CSV")
    p.add_argument("manifest")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ungrouped", action="store_true", help="ignore the group column")
    p.add_argument("--out", help="output manifest (default: overwrite input)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("aggregate", help="mean ± std over per-fold metrics JSON files")
    p.add_argument("folds", nargs="+", help="metrics.json files, one per fold")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_aggregate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "hull_k", 3) < 3:
        parser.error("--hull-k must be >= 3")
    if getattr(args, "k", 2) < 2:
        parser.error("--k must be >= 2")
    if getattr(args, "taus", None) == []:
        parser.error("--taus is empty")
    try:
        return args.func(args)
    except (PanopkitError, OSError, ValueError) as exc:
        print(f"panopkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
