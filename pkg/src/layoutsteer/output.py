"""Writers for result bundles, benchmark reports and portable any-maps.

Everything written here is a pure function of its inputs, so repeated runs
produce byte-identical files.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .scene import dumps_scene

REPORT_SCHEMA = "layoutsteer-report/1"


def write_ppm(path, image: np.ndarray) -> None:
    """Binary P6 pixmap from an ``h x w x 3`` uint8 array."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PPM needs h x w x 3, got {img.shape}")
    h, w = img.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def write_pgm(path, gray: np.ndarray) -> None:
    """Binary P5 graymap. Boolean masks map to 0/255; floats are taken to lie in [0, 1]."""
    g = np.asarray(gray)
    if g.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got {g.shape}")
    if g.dtype == bool:
        g = g.astype(np.uint8) * 255
    elif g.dtype.kind == "f":
        g = np.floor(np.clip(g, 0.0, 1.0) * 255 + 0.5).astype(np.uint8)
    else:
        g = g.astype(np.uint8)
    h, w = g.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(g).tobytes())


def read_pnm(path) -> np.ndarray:
    """Read back a P5 or P6 file written by this module."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    magic, dims, maxval, raw = parts
    w, h = map(int, dims.split())
    if int(maxval) != 255:
        raise ValueError("only 8-bit maps are supported")
    arr = np.frombuffer(raw, dtype=np.uint8)
    if magic == b"P6":
        return arr.reshape(h, w, 3).copy()
    if magic == b"P5":
        return arr.reshape(h, w).copy()
    raise ValueError(f"unsupported magic {magic!r}")


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, ensure_ascii=False) + "\n"


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name)


def write_bundle(result, out_dir, scene=None) -> Path:
    """Image, stage log, RoI and refill masks and hull vertices of one generation."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # files owned by a bundle; left over from an earlier run they would go stale
    for old in [*out.glob("masks/*.pgm"), out / "hulls.txt", out / "scene.json"]:
        old.unlink(missing_ok=True)
    write_ppm(out / "image.ppm", result.image)
    (out / "log.json").write_text(dumps_json(result.log), encoding="utf-8")
    if scene is not None:
        (out / "scene.json").write_text(dumps_scene(scene), encoding="utf-8")
    if result.rois is not None:
        masks = out / "masks"
        masks.mkdir(exist_ok=True)
        lines = []
        for roi in result.rois.objects:
            stem = f"roi_{roi.object_index:02d}_{_safe(roi.category)}"
            write_pgm(masks / f"{stem}.pgm", roi.mask)
            verts = " ".join(f"{v.x},{v.y}" for v in roi.hull.vertices)
            lines.append(f"{roi.object_index} {roi.category}: {verts}")
        if result.rois.refill_mask is not None:
            write_pgm(masks / "refill.pgm", result.rois.refill_mask)
        (out / "hulls.txt").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return out


def thumbnail(result, size: int = 64) -> np.ndarray:
    """Nearest-neighbour downsample of the decoded image."""
    img = result.image
    fx, fy = max(1, img.shape[0] // size), max(1, img.shape[1] // size)
    return np.ascontiguousarray(img[::fx, ::fy][:size, :size])


def contact_sheet(tiles, columns: int, pad: int = 2, fill=(255, 255, 255)) -> np.ndarray:
    """Tiles laid out row by row with ``pad`` pixels between them."""
    tiles = list(tiles)
    if not tiles:
        raise ValueError("no tiles")
    th, tw = tiles[0].shape[:2]
    rows = -(-len(tiles) // columns)
    sheet = np.empty((rows * (th + pad) + pad, columns * (tw + pad) + pad, 3), dtype=np.uint8)
    sheet[:] = fill
    for i, t in enumerate(tiles):
        r, c = divmod(i, columns)
        x, y = pad + r * (th + pad), pad + c * (tw + pad)
        sheet[x : x + th, y : y + tw] = t
    return sheet


def report_dict(table, scenes_label: str, config: dict) -> dict:
    """Report document: one entry per ablation row plus per-scene details.

    ``improvement`` gives each metric relative to the first row (the baseline).
    """
    base = table.rows[0].summary()
    rows = []
    for row in table.rows:
        summ = row.summary()
        imp = {}
        for key in ("mean_iou", "hit50", "hit75", "coverage"):
            imp[key] = summ[key] - base[key]
        imp["distance_reduction"] = (
            (base["mean_distance"] - summ["mean_distance"]) / base["mean_distance"] if base["mean_distance"] else 0.0
        )
        entry = {"label": row.flags.label, **summ, "improvement": imp}
        if row.distance is not None:
            entry["distance_distribution"] = {
                "edges": list(row.distance.edges),
                "p": list(row.distance.probabilities),
                "p_baseline": list(row.distance.baseline),
                "delta": list(row.distance.delta),
            }
        entry["scenes_detail"] = [r.as_dict() for r in row.reports]
        rows.append(entry)
    return {
        "schema": REPORT_SCHEMA,
        "scenes": scenes_label,
        "config": config,
        "rows": rows,
        "skipped": list(table.skipped),
    }


def summary_line(entry: dict) -> str:
    return (
        f"{entry['label']}: mean_iou={entry['mean_iou']:.4f} hit50={entry['hit50']:.4f} "
        f"hit75={entry['hit75']:.4f} dist={entry['mean_distance']:.3f} coverage={entry['coverage']:.4f}"
    )
