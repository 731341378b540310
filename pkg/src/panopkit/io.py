"""File formats: gray PNGs, COCO-style panoptic PNG + JSON, CSV tables, reports.

Panoptic id maps are stored as RGB PNGs with ``id = R + 256*G + 65536*B``
and a JSON sidecar listing the segments. Metric values are stored as [0, 1]
ratios in JSON and rendered x100 with two decimals in CSV/SVG.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import (
    MAX_SEGMENT_ID,
    METRIC_NAMES,
    BinaryMask,
    BoxAnnotation,
    CategoryTable,
    ClassMetrics,
    GrayImage,
    MetricsRecord,
    PanopticMap,
    Segment,
    validate_panoptic,
)
from .errors import (
    DecodeError,
    DimensionMismatch,
    EmptyInput,
    IdOverflow,
    MalformedRow,
    MissingColumn,
    OverlapDropWarning,
    SidecarMismatch,
    UnknownCategory,
    UnsupportedFormat,
    WriteError,
)
from .experiment import Summary, SweepResult, aggregate

PathLike = Union[str, os.PathLike]

UNDEFINED_CELL = "—"
METRIC_LABELS = {"rq": "RQ", "sq": "SQ", "pq": "PQ", "ap": "AP", "dice": "Dice"}


# --- rasters -----------------------------------------------------------------

def _open_png(path: PathLike) -> Image.Image:
    try:
        im = Image.open(path)
        im.load()
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    if im.format != "PNG":
        raise UnsupportedFormat(f"{path}: expected PNG, got {im.format}")
    return im


def read_gray(path: PathLike) -> GrayImage:
    """Decode an 8- or 16-bit single-channel PNG."""
    im = _open_png(path)
    if im.mode == "L":
        return GrayImage(np.asarray(im, dtype=np.uint8), 8)
    if im.mode in ("I;16", "I;16B", "I;16L"):
        return GrayImage(np.asarray(im).astype(np.uint16), 16)
    if im.mode == "I":
        data = np.asarray(im)
        if data.min() < 0 or data.max() >= 2**16:
            raise UnsupportedFormat(f"{path}: 32-bit values outside 16-bit range")
        return GrayImage(data.astype(np.uint16), 16)
    raise UnsupportedFormat(f"{path}: mode {im.mode} is not single-channel 8/16-bit gray")


def write_gray(img: GrayImage, path: PathLike) -> None:
    data = np.asarray(img.pixels)
    if img.bitdepth == 8:
        im = Image.fromarray(data.astype(np.uint8))
    else:
        im = Image.fromarray(data.astype(np.uint16))
    _save(im, path)


def _save(im: Image.Image, path: PathLike) -> None:
    try:
        im.save(path, format="PNG")
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def read_binary_mask(path: PathLike) -> BinaryMask:
    """Any PNG; a pixel is set if any channel is nonzero."""
    data = np.asarray(_open_png(path))
    if data.ndim == 3:
        data = data.any(axis=2)
    return BinaryMask(data != 0)


def ids_to_rgb(id_map: np.ndarray) -> np.ndarray:
    ids = np.asarray(id_map, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() > MAX_SEGMENT_ID):
        raise IdOverflow(f"segment ids must be in [0, {MAX_SEGMENT_ID}]")
    rgb = np.empty(ids.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = ids % 256
    rgb[..., 1] = (ids // 256) % 256
    rgb[..., 2] = ids // 65536
    return rgb


def rgb_to_ids(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.int32)
    return rgb[..., 0] + 256 * rgb[..., 1] + 65536 * rgb[..., 2]


# --- panoptic maps -----------------------------------------------------------

def sidecar_path(png_path: PathLike) -> Path:
    return Path(png_path).with_suffix(".json")


def panoptic_to_json(pmap: PanopticMap) -> dict:
    segs = []
    for s in pmap.segments:
        entry = {"id": s.segment_id, "category_id": s.category_id, "area": s.area}
        if s.confidence is not None:
            entry["confidence"] = s.confidence
        segs.append(entry)
    doc = {"width": pmap.width, "height": pmap.height, "segments_info": segs}
    if pmap.categories is not None:
        doc["categories"] = [{"id": c, "name": n} for c, n in pmap.categories.entries]
    return doc


def write_panoptic(pmap: PanopticMap, png_path: PathLike, json_path: Optional[PathLike] = None) -> Tuple[Path, Path]:
    """Write ``pmap`` as an RGB id PNG plus JSON sidecar (``.json`` next to it by default)."""
    ids = [s.segment_id for s in pmap.segments]
    if ids and max(ids) > MAX_SEGMENT_ID:
        raise IdOverflow(f"segment id {max(ids)} does not fit in 24 bits")
    validate_panoptic(pmap)
    png_path = Path(png_path)
    json_path = Path(json_path) if json_path is not None else sidecar_path(png_path)
    _save(Image.fromarray(ids_to_rgb(pmap.id_map)), png_path)
    _write_text(json_path, json.dumps(panoptic_to_json(pmap), indent=2) + "\n")
    return png_path, json_path


def read_panoptic(png_path: PathLike, json_path: Optional[PathLike] = None) -> PanopticMap:
    png_path = Path(png_path)
    json_path = Path(json_path) if json_path is not None else sidecar_path(png_path)
    im = _open_png(png_path)
    if im.mode != "RGB":
        raise UnsupportedFormat(f"{png_path}: panoptic PNG must be RGB, got {im.mode}")
    id_map = rgb_to_ids(np.asarray(im))
    try:
        doc = json.loads(Path(json_path).read_text())
    except json.JSONDecodeError as exc:
        raise DecodeError(f"{json_path}: {exc}") from exc

    if (doc.get("width", id_map.shape[1]), doc.get("height", id_map.shape[0])) != (id_map.shape[1], id_map.shape[0]):
        raise SidecarMismatch(f"{json_path}: size disagrees with {png_path}")
    cats = None
    if "categories" in doc:
        cats = CategoryTable(tuple((c["id"], c["name"]) for c in doc["categories"]))
    segments = []
    for entry in doc.get("segments_info", []):
        conf = entry.get("confidence")
        segments.append(
            Segment(int(entry["id"]), int(entry["category_id"]), int(entry["area"]),
                    None if conf is None else float(conf))
        )
    pmap = PanopticMap(id_map, tuple(segments), cats)

    present, counts = np.unique(id_map, return_counts=True)
    pixel_counts = {int(i): int(c) for i, c in zip(present, counts) if i != 0}
    listed = {s.segment_id: s for s in segments}
    if set(pixel_counts) != set(listed):
        raise SidecarMismatch(
            f"{png_path}: ids in image {sorted(pixel_counts)} != ids in sidecar {sorted(listed)}"
        )
    bad = [i for i, c in pixel_counts.items() if listed[i].area != c]
    if bad:
        raise SidecarMismatch(f"{png_path}: sidecar areas disagree for ids {sorted(bad)}")
    return validate_panoptic(pmap)


def list_panoptic_dir(directory: PathLike) -> Dict[str, Path]:
    """image_id -> PNG path for every ``<image_id>.png`` with a JSON sidecar."""
    directory = Path(directory)
    out = {}
    for png in sorted(directory.glob("*.png")):
        if sidecar_path(png).exists():
            out[png.stem] = png
    return out


# --- annotation tables -------------------------------------------------------

DEFAULT_BOX_COLUMNS = {
    "image_id": "image_id",
    "xmin": "xmin",
    "ymin": "ymin",
    "xmax": "xmax",
    "ymax": "ymax",
    "category": "category",
}

_TRAILING_INT = re.compile(r"(\d+)\s*$")


def parse_category(value: str, cats: Optional[CategoryTable] = None) -> int:
    """Category id from ``"4"``, ``"BI-RADS 4"`` or a name in ``cats``."""
    text = str(value).strip()
    if cats is not None:
        for cid, name in cats.entries:
            if name == text:
                return cid
    if re.fullmatch(r"[+-]?\d+", text):
        cid = int(text)
    else:
        m = _TRAILING_INT.search(text)
        if not m:
            raise ValueError(f"cannot read a category from {value!r}")
        cid = int(m.group(1))
    if cats is not None and cid not in cats:
        raise UnknownCategory(f"category {cid} not in table {list(cats.ids)}")
    if cid <= 0:
        raise ValueError(f"category id must be > 0, got {cid}")
    return cid


def _read_table(path: PathLike) -> Tuple[List[str], List[Tuple[int, Dict[str, str]]]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = [(reader.line_num, row) for row in reader]
    except UnicodeDecodeError as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return header, rows


def read_box_annotations(
    csv_path: PathLike,
    columns: Optional[Mapping[str, str]] = None,
    cats: Optional[CategoryTable] = None,
    skip_empty: bool = False,
) -> List[BoxAnnotation]:
    """One :class:`BoxAnnotation` per CSV row.

    ``columns`` maps the logical names (image_id, xmin, ymin, xmax, ymax,
    category) to header names. Fractional coordinates are widened to the
    enclosing pixel box. Every bad row is collected and reported together in
    one :class:`MalformedRow`, keyed by file line number (header is line 1).
    With ``skip_empty``, rows whose four box cells are all blank (images
    without findings) are skipped instead of rejected.
    """
    cols = dict(DEFAULT_BOX_COLUMNS)
    cols.update(columns or {})
    header, rows = _read_table(csv_path)
    missing = [cols[k] for k in DEFAULT_BOX_COLUMNS if cols[k] not in header]
    if missing:
        raise MissingColumn(f"{csv_path}: missing column(s) {missing}; header is {header}")

    out, problems = [], []
    coord_keys = ("xmin", "ymin", "xmax", "ymax")
    for line, row in rows:
        cells = [(row.get(cols[k]) or "").strip() for k in coord_keys]
        if skip_empty and not any(cells):
            continue
        try:
            image_id = (row.get(cols["image_id"]) or "").strip()
            if not image_id:
                raise ValueError("empty image_id")
            x0, y0, x1, y1 = (float(c) for c in cells)
            if not all(math.isfinite(v) for v in (x0, y0, x1, y1)):
                raise ValueError("non-finite coordinate")
            box = (math.floor(x0), math.floor(y0), math.ceil(x1), math.ceil(y1))
            if not (0 <= box[0] < box[2] and 0 <= box[1] < box[3]):
                raise ValueError(f"need 0 <= xmin < xmax and 0 <= ymin < ymax, got {box}")
            cid = parse_category(row.get(cols["category"]) or "", cats)
            out.append(BoxAnnotation(image_id, box, cid))
        except (ValueError, UnknownCategory) as exc:
            problems.append((line, str(exc)))
    if problems:
        raise MalformedRow(csv_path, problems)
    return out


def read_instance_masks(
    listing_path: PathLike,
    cats: Optional[CategoryTable] = None,
    shape: Optional[Tuple[int, int]] = None,
    mask_column: str = "mask_file",
    category_column: str = "category",
) -> PanopticMap:
    """Build a map from per-lesion binary mask PNGs named in a listing CSV.

    Mask paths are relative to the listing. Masks become segments 1..n in
    listing order; overlaps resolve first-wins. ``shape`` (height, width) is
    the image size every mask must match.
    """
    listing_path = Path(listing_path)
    header, rows = _read_table(listing_path)
    missing = [c for c in (mask_column, category_column) if c not in header]
    if missing:
        raise MissingColumn(f"{listing_path}: missing column(s) {missing}")
    masks, cat_ids = [], []
    for line, row in rows:
        mask = read_binary_mask(listing_path.parent / row[mask_column].strip())
        expected = shape if shape is not None else (masks[0].shape if masks else mask.shape)
        if mask.shape != tuple(expected):
            raise DimensionMismatch(
                f"{listing_path} line {line}: mask is {mask.shape}, expected {tuple(expected)}"
            )
        masks.append(mask)
        cat_ids.append(parse_category(row[category_column], cats))
    if not masks and shape is None:
        raise ValueError(f"{listing_path}: no masks listed and no image shape given")
    pmap, dropped = PanopticMap.from_masks(masks, cat_ids, categories=cats, shape=shape or masks[0].shape)
    for i in dropped:
        warnings.warn(
            OverlapDropWarning(f"{listing_path}: mask {rows[i][1][mask_column]} is empty after overlap"),
            stacklevel=2,
        )
    return validate_panoptic(pmap, cats)


# --- manifests ---------------------------------------------------------------

MANIFEST_COLUMNS = ("image_id", "image_path", "gt_path", "pred_path", "group", "fold")


@dataclass(frozen=True)
class ManifestItem:
    image_id: str
    image_path: str = ""
    gt_path: str = ""
    pred_path: Optional[str] = None
    group: Optional[str] = None
    fold: Optional[int] = None


@dataclass
class DatasetManifest:
    items: List[ManifestItem] = field(default_factory=list)

    def __post_init__(self):
        ids = [i.image_id for i in self.items]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"duplicate image ids in manifest: {dupes}")

    @property
    def ids(self) -> List[str]:
        return [i.image_id for i in self.items]

    def with_folds(self, assignments: Mapping[str, int]) -> "DatasetManifest":
        return DatasetManifest([replace(i, fold=assignments[i.image_id]) for i in self.items])


def read_manifest(path: PathLike) -> DatasetManifest:
    header, rows = _read_table(path)
    if "image_id" not in header:
        raise MissingColumn(f"{path}: manifest needs an image_id column")
    items, problems = [], []
    for line, row in rows:
        try:
            image_id = (row.get("image_id") or "").strip()
            if not image_id:
                raise ValueError("empty image_id")
            fold = (row.get("fold") or "").strip()
            items.append(
                ManifestItem(
                    image_id,
                    (row.get("image_path") or "").strip(),
                    (row.get("gt_path") or "").strip(),
                    (row.get("pred_path") or "").strip() or None,
                    (row.get("group") or "").strip() or None,
                    int(fold) if fold else None,
                )
            )
        except ValueError as exc:
            problems.append((line, str(exc)))
    if problems:
        raise MalformedRow(path, problems)
    return DatasetManifest(items)


def write_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    rows = [MANIFEST_COLUMNS]
    for i in manifest.items:
        rows.append((i.image_id, i.image_path, i.gt_path, i.pred_path or "", i.group or "",
                     "" if i.fold is None else str(i.fold)))
    _write_csv(path, rows)


# --- reports -----------------------------------------------------------------

def _class_to_dict(cm: ClassMetrics) -> dict:
    return {
        "category_id": cm.category_id,
        "tp": cm.tp_count,
        "fp": cm.fp_count,
        "fn": cm.fn_count,
        "iou_sum": cm.iou_sum,
        "rq": cm.rq,
        "sq": cm.sq,
        "pq": cm.pq,
        "ap": cm.ap,
        "dice": cm.dice,
    }


def record_to_dict(record: MetricsRecord) -> dict:
    out = {"tau": record.tau}
    out.update({m: record.value(m) for m in METRIC_NAMES})
    out["per_class"] = [_class_to_dict(c) for _, c in sorted(record.per_class.items())]
    return out


def record_from_dict(doc: Mapping) -> MetricsRecord:
    per_class = {}
    for c in doc.get("per_class", []):
        per_class[int(c["category_id"])] = ClassMetrics(
            int(c["category_id"]), int(c["tp"]), int(c["fp"]), int(c["fn"]), float(c["iou_sum"]),
            c["rq"], c["sq"], c["pq"], c["ap"], c["dice"],
        )
    return MetricsRecord(float(doc["tau"]), *(doc.get(m) for m in METRIC_NAMES), per_class=per_class)


def summary_to_dict(summary: Summary) -> dict:
    return {
        "tau": summary.tau,
        "n_folds": summary.n_folds,
        "metrics": {
            name: {"mean": s.mean, "std": s.std, "n": s.n} for name, s in summary.metrics.items()
        },
    }


def sweep_to_dict(result: SweepResult) -> dict:
    return {"optimal_tau": result.optimal_tau, "rows": [record_to_dict(r) for r in result.rows]}


def read_records_json(path: PathLike) -> List[MetricsRecord]:
    """Records from a metrics or sweep JSON report (a single record becomes a list)."""
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, list):
        return [record_from_dict(d) for d in doc]
    if "rows" in doc:
        return [record_from_dict(d) for d in doc["rows"]]
    return [record_from_dict(doc)]


def format_value(value: Optional[float]) -> str:
    """Ratio rendered as a percentage with two decimals; ``—`` when undefined."""
    if value is None:
        return UNDEFINED_CELL
    return f"{100.0 * value:.2f}"


def format_cell(mean: Optional[float], std: Optional[float] = None) -> str:
    if mean is None:
        return UNDEFINED_CELL
    if std is None:
        return format_value(mean)
    return f"{format_value(mean)} ± {format_value(std)}"


def _metric_header() -> List[str]:
    return ["tau"] + [METRIC_LABELS[m] for m in METRIC_NAMES]


def records_table(records: Sequence[MetricsRecord]) -> List[List[str]]:
    rows = [_metric_header()]
    for r in records:
        rows.append([f"{r.tau:.2f}"] + [format_value(r.value(m)) for m in METRIC_NAMES])
    return rows


def summary_table(summary: Summary) -> List[List[str]]:
    row = [f"{summary.tau:.2f}"]
    for m in METRIC_NAMES:
        s = summary.metrics[m]
        row.append(format_cell(s.mean, s.std))
    return [_metric_header(), row]


def _write_text(path: PathLike, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def _write_csv(path: PathLike, rows: Iterable[Sequence[str]]) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerows(rows)
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def render_sweep_svg(result: SweepResult, title: str = "Performance across IoU thresholds") -> str:
    """Line chart of PQ, RQ and SQ (in %) against the IoU threshold.

    One ``<g class="series">`` per metric; undefined SQ points break the line.
    The optimal threshold is marked with a dashed vertical line.
    """
    if not result.rows:
        raise EmptyInput("sweep has no rows")
    width, height = 640, 420
    left, right, top, bottom = 60, 110, 40, 50
    pw, ph = width - left - right, height - top - bottom
    taus = result.taus
    lo, hi = min(taus), max(taus)
    span = hi - lo or 1.0

    def x(t):
        return left + (t - lo) / span * pw if len(taus) > 1 else left + pw / 2

    def y(v):
        return top + ph - v * ph

    colors = {"pq": "#1f77b4", "rq": "#d62728", "sq": "#2ca02c"}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<g class="axes" stroke="#333" stroke-width="1">'
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}"/>'
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}"/></g>',
    ]
    out.append('<g class="x-ticks">')
    for t in taus:
        out.append(
            f'<g class="tick"><line x1="{x(t):.1f}" y1="{top + ph}" x2="{x(t):.1f}" y2="{top + ph + 4}" stroke="#333"/>'
            f'<text x="{x(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{t:.2f}</text></g>'
        )
    out.append("</g>")
    out.append('<g class="y-ticks">')
    for v in range(0, 101, 20):
        yy = y(v / 100)
        out.append(
            f'<g class="tick"><line x1="{left - 4}" y1="{yy:.1f}" x2="{left + pw}" y2="{yy:.1f}" stroke="#ddd"/>'
            f'<text x="{left - 8}" y="{yy + 4:.1f}" text-anchor="end">{v}</text></g>'
        )
    out.append("</g>")
    out.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">IoU threshold</text>'
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">Score (%)</text>'
    )
    if result.optimal_tau is not None:
        xo = x(result.optimal_tau)
        out.append(
            f'<line class="optimal" x1="{xo:.1f}" y1="{top}" x2="{xo:.1f}" y2="{top + ph}" '
            f'stroke="#777" stroke-dasharray="4 3"/>'
        )
    for i, metric in enumerate(("pq", "rq", "sq")):
        label = METRIC_LABELS[metric]
        out.append(f'<g class="series" data-metric="{label}" stroke="{colors[metric]}" fill="{colors[metric]}">')
        run: List[str] = []
        runs = []
        for t, v in zip(taus, result.column(metric)):
            if v is None:
                if run:
                    runs.append(run)
                run = []
                continue
            run.append(f"{x(t):.1f},{y(v):.1f}")
            out.append(f'<circle cx="{x(t):.1f}" cy="{y(v):.1f}" r="2.5"/>')
        if run:
            runs.append(run)
        for r in runs:
            out.append(f'<polyline fill="none" stroke-width="1.8" points="{" ".join(r)}"/>')
        ly = top + 10 + 18 * i
        out.append(
            f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 35}" y2="{ly}" stroke-width="2"/>'
            f'<text x="{left + pw + 40}" y="{ly + 4}" stroke="none" fill="#000">{label}</text></g>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(obj, out_dir: PathLike, stem: str = "metrics",
                 formats: Sequence[str] = ("json", "csv", "svg")) -> List[Path]:
    """Write a record, list of records, Summary or SweepResult.

    JSON keeps full precision ratios; CSV renders percentages with two
    decimals (``mean ± std`` for summaries); SVG is produced for sweeps only.
    Use :func:`write_summary` to aggregate fold records before writing.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteError(f"cannot create {out_dir}: {exc}") from exc

    if isinstance(obj, MetricsRecord):
        doc, table = record_to_dict(obj), records_table([obj])
    elif isinstance(obj, Summary):
        doc, table = summary_to_dict(obj), summary_table(obj)
    elif isinstance(obj, SweepResult):
        if not obj.rows:
            raise EmptyInput("sweep has no rows")
        doc, table = sweep_to_dict(obj), records_table(obj.rows)
    else:
        records = list(obj)
        if not records:
            raise EmptyInput("no records to report")
        doc, table = [record_to_dict(r) for r in records], records_table(records)

    written = []
    if "json" in formats:
        path = out_dir / f"{stem}.json"
        _write_text(path, json.dumps(doc, indent=2, allow_nan=False) + "\n")
        written.append(path)
    if "csv" in formats:
        path = out_dir / f"{stem}.csv"
        _write_csv(path, table)
        written.append(path)
    if "svg" in formats and isinstance(obj, SweepResult):
        path = out_dir / f"{stem}.svg"
        _write_text(path, render_sweep_svg(obj))
        written.append(path)
    return written


def write_summary(records: Sequence[MetricsRecord], out_dir: PathLike, stem: str = "summary") -> List[Path]:
    """Aggregate fold records to mean ± std and write JSON + CSV."""
    records = list(records)
    if not records:
        raise EmptyInput("no fold records")
    return write_report(aggregate(records), out_dir, stem, ("json", "csv"))
