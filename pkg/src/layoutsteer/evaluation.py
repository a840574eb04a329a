"""Layout-consistency measurement, synthetic benchmark scenes and ablations.

Detection is a proxy: objects are read off the final attention map of each
category's matched token as 4-connected components above a threshold.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._hashing import stable_rng
from .geometry import components
from .grid import NormBox, normalize_stack, resize_bilinear
from .matching import TableEmbedding
from .pipeline import ABLATION_ROWS, AblationFlags, ScheduleConfig, generate_many
from .scene import ObjectCondition, Scene, group_semantics

log = logging.getLogger(__name__)

CATEGORIES = (
    "person", "dog", "cat", "horse", "sheep", "cow", "bird", "car", "bus", "bicycle",
    "boat", "chair", "bench", "table", "umbrella", "kite", "cup", "bottle", "clock",
    "laptop", "tree", "teddy bear", "elephant", "giraffe",
)
COMPANIONS = {
    "person": ("suit", "shirt", "jacket"),
    "dog": ("collar", "puppy"),
    "cat": ("kitten",),
    "horse": ("saddle", "pony"),
    "car": ("wheels",),
    "boat": ("sail",),
    "bird": ("wings",),
    "table": ("tablecloth",),
    "bicycle": ("bike",),
    "teddy bear": ("toy",),
    "tree": ("branches",),
}
LINKS = {"person": "wearing a", "teddy bear": "like a"}
PLACES = ("kitchen", "street", "park", "field", "beach", "room", "yard", "garden")
NUMBER_WORDS = {2: "two", 3: "three", 4: "four"}

DEFAULT_EDGES = tuple(float(e) for e in range(0, 501, 50)) + (math.inf,)


@dataclass(frozen=True)
class DetectedObject:
    category: str
    box: NormBox
    score: float
    centroid: tuple[float, float]
    area: int


@dataclass
class LayoutReport:
    ious: list[float]
    mean_iou: float
    hit50: float
    hit75: float
    distances: list[float | None]
    mean_distance: float
    coverage: float | None = None

    def as_dict(self) -> dict:
        return {
            "ious": self.ious,
            "mean_iou": self.mean_iou,
            "hit50": self.hit50,
            "hit75": self.hit75,
            "distances": self.distances,
            "mean_distance": self.mean_distance,
            "coverage": self.coverage,
        }


@dataclass(frozen=True)
class DistanceDistribution:
    edges: tuple[float, ...]
    probabilities: tuple[float, ...]
    baseline: tuple[float, ...]
    delta: tuple[float, ...]


def final_maps(result):
    h, w = result.latent.shape[:2]
    return resize_bilinear(normalize_stack(result.final_stack), h, w)


def detect(result, category: str, matched_index: int, threshold: float = 0.5) -> list[DetectedObject]:
    """One detection per 4-connected component of the matched map above ``threshold``."""
    maps = final_maps(result)
    return detect_in_layer(maps.layer(matched_index), category, threshold)


def detect_in_layer(layer, category, threshold=0.5) -> list[DetectedObject]:
    h, w = layer.shape
    out = []
    for comp in components(layer > threshold):
        xs, ys = np.nonzero(comp)
        box = NormBox(xs.min() / h, ys.min() / w, (xs.max() + 1) / h, (ys.max() + 1) / w)
        out.append(
            DetectedObject(category, box, float(layer[comp].mean()), (float(xs.mean()), float(ys.mean())), int(xs.size))
        )
    return out


def iou(a: NormBox, b: NormBox) -> float:
    ix = max(0.0, min(a.x1, b.x1) - max(a.x0, b.x0))
    iy = max(0.0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def layout_score(scene: Scene, detections: dict[str, list[DetectedObject]], grid=(64, 64)) -> LayoutReport:
    """Greedy matching of each ground-truth box to its best unmatched detection.

    Ties in IoU go to the detection whose centroid is nearer the box center.
    Distances are in grid cells; a box with no detection of its category
    counts the grid diagonal when averaging.
    """
    h, w = grid
    penalty = math.hypot(h, w)
    used: dict[str, set[int]] = {}
    ious, dists = [], []
    for obj in scene.objects:
        box = obj.geometry
        cx, cy = box.center[0] * h - 0.5, box.center[1] * w - 0.5
        cands = detections.get(obj.category, [])
        taken = used.setdefault(obj.category, set())
        best = None
        for i, det in enumerate(cands):
            if i in taken:
                continue
            key = (-iou(box, det.box), math.hypot(det.centroid[0] - cx, det.centroid[1] - cy), i)
            if best is None or key < best:
                best = key
        if best is None:
            ious.append(0.0)
            dists.append(None)
        else:
            taken.add(best[2])
            ious.append(-best[0])
            dists.append(best[1])
    n = len(ious)
    mean_dist = sum(penalty if d is None else d for d in dists) / n
    return LayoutReport(
        ious,
        sum(ious) / n,
        sum(v >= 0.5 for v in ious) / n,
        sum(v >= 0.75 for v in ious) / n,
        dists,
        mean_dist,
    )


def distance_distribution(distances, baseline, edges=DEFAULT_EDGES) -> DistanceDistribution:
    """Share of objects per distance interval, and its change against a baseline.

    Intervals are ``[e_k, e_{k+1})`` with the last one closed, and must cover
    every distance.
    """
    edges = tuple(float(e) for e in edges)
    if len(edges) < 2 or edges[0] != 0 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("edges must start at 0 and increase strictly")

    def probs(ds):
        ds = list(ds)
        if not ds:
            raise ValueError("distance distribution of an empty ground truth")
        counts = [0] * (len(edges) - 1)
        for d in ds:
            if not (edges[0] <= d <= edges[-1]):
                raise ValueError(f"distance {d} outside [{edges[0]}, {edges[-1]}]")
            k = min(int(np.searchsorted(edges, d, side="right")) - 1, len(counts) - 1)
            counts[k] += 1
        return tuple(c / len(ds) for c in counts)

    p, q = probs(distances), probs(baseline)
    return DistanceDistribution(edges, p, q, tuple(a - b for a, b in zip(p, q)))


def image_distances(report: LayoutReport, scale: int = 8, grid=(64, 64)) -> list[float]:
    """Per-object distances in upscaled image pixels; misses count the image diagonal."""
    penalty = math.hypot(*grid)
    return [scale * (penalty if d is None else d) for d in report.distances]


def scene_detections(result, scene: Scene, threshold: float = 0.5):
    maps = final_maps(result)
    out = {}
    for g in group_semantics(scene.objects):
        idx = result.match.indices[g.category]
        out[g.category] = detect_in_layer(maps.layer(idx), g.category, threshold)
    return out


def prompt_coverage(result, scene: Scene, detections) -> float:
    """Share of categories named in the generation prompt whose matched map
    yields at least one detection."""
    groups = group_semantics(scene.objects)
    hit = sum(1 for g in groups if result.prompt.contains(g.category) and detections.get(g.category))
    return hit / len(groups)


def evaluate(result, scene: Scene, threshold: float = 0.5) -> LayoutReport:
    dets = scene_detections(result, scene, threshold)
    report = layout_score(scene, dets, result.latent.shape[:2])
    report.coverage = prompt_coverage(result, scene, dets)
    return report


# synthetic benchmark ------------------------------------------------------


def lexicon_embedding(dimension: int = 64, seed: int = 0) -> TableEmbedding:
    """Word vectors for the benchmark vocabulary: plurals and companion words
    sit near their category, everything else is unrelated."""
    vectors = {}
    for cat in CATEGORIES:
        base = stable_rng("lexicon", seed, cat).normal(size=dimension)
        base /= np.linalg.norm(base)
        vectors[cat] = base
        plural = _plural(cat)
        vectors[plural] = base + 0.15 * stable_rng("lexicon", seed, plural).normal(size=dimension) / np.sqrt(dimension)
        for comp in COMPANIONS.get(cat, ()):
            vectors[comp] = base + 0.5 * stable_rng("lexicon", seed, comp).normal(size=dimension) / np.sqrt(dimension)
    return TableEmbedding(vectors, seed=seed)


def _plural(cat: str) -> str:
    if cat.endswith("s"):
        return cat + "es"
    if cat == "person":
        return "people"
    return cat + "s"


def _phrase(cat: str, count: int, companion: str | None) -> str:
    if count == 1:
        head = f"a {cat}"
    else:
        head = f"{NUMBER_WORDS.get(count, 'several')} {_plural(cat)}"
    if companion:
        head += f" {LINKS.get(cat, 'with a')} {companion}"
    return head


def synth_scene(seed: int, index: int) -> Scene:
    rng = stable_rng("scene", seed, index)
    n = int(rng.integers(3, 9))
    duplicated = rng.random() < 0.3
    n_unique = int(rng.integers(max(1, n - 3), n)) if duplicated else n
    cats = [CATEGORIES[i] for i in rng.choice(len(CATEGORIES), size=n_unique, replace=False)]
    per_object = list(cats)
    if duplicated:
        per_object += [cats[int(i)] for i in rng.integers(0, n_unique, size=n - n_unique)]
    objects = []
    for cat in per_object:
        bh, bw = rng.uniform(0.15, 0.35, size=2)
        x0 = rng.uniform(0.0, 1.0 - bh)
        y0 = rng.uniform(0.0, 1.0 - bw)
        box = NormBox(round(x0, 4), round(y0, 4), round(x0 + bh, 4), round(y0 + bw, 4))
        objects.append(ObjectCondition(cat, box))
    counts = {c: per_object.count(c) for c in cats}
    with_companion = [c for c in cats if c in COMPANIONS]
    companion_for = None
    if with_companion and rng.random() < 0.3:
        companion_for = with_companion[int(rng.integers(len(with_companion)))]
    omitted = None
    if len(cats) > 1 and rng.random() < 0.3:
        omitted = cats[int(rng.integers(len(cats)))]
    phrases = []
    for c in cats:
        if c == omitted:
            continue
        comp = None
        if c == companion_for:
            choices = COMPANIONS[c]
            comp = choices[int(rng.integers(len(choices)))]
        phrases.append(_phrase(c, counts[c], comp))
    listed = phrases[0] if len(phrases) == 1 else ", ".join(phrases[:-1]) + " and " + phrases[-1]
    place = PLACES[int(rng.integers(len(PLACES)))]
    return Scene(f"a photo of {listed} in the {place}.", tuple(objects))


def synth_scenes(seed: int, count: int) -> list[Scene]:
    if count < 1:
        raise ValueError("count must be >= 1")
    return [synth_scene(seed, i) for i in range(count)]


# ablation -----------------------------------------------------------------


@dataclass
class AblationRow:
    flags: AblationFlags
    reports: list[LayoutReport] = field(default_factory=list)
    distance: DistanceDistribution | None = None

    def _mean(self, attr):
        vals = [getattr(r, attr) for r in self.reports]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def mean_iou(self) -> float:
        """Mean IoU over every ground-truth object in the benchmark."""
        ious = [v for r in self.reports for v in r.ious]
        return float(np.mean(ious)) if ious else float("nan")

    def _object_rate(self, thr):
        ious = [v for r in self.reports for v in r.ious]
        return float(np.mean([v >= thr for v in ious])) if ious else float("nan")

    @property
    def hit50(self) -> float:
        return self._object_rate(0.5)

    @property
    def hit75(self) -> float:
        return self._object_rate(0.75)

    @property
    def mean_distance(self) -> float:
        return self._mean("mean_distance")

    @property
    def coverage(self) -> float:
        return self._mean("coverage")

    def summary(self) -> dict:
        return {
            "semantic": self.flags.semantic_enabled,
            "geometric": self.flags.geometric_enabled,
            "scenes": len(self.reports),
            "mean_iou": self.mean_iou,
            "hit50": self.hit50,
            "hit75": self.hit75,
            "mean_distance": self.mean_distance,
            "coverage": self.coverage,
        }


@dataclass
class AblationTable:
    rows: list[AblationRow]
    skipped: list[str] = field(default_factory=list)

    def row(self, semantic: bool, geometric: bool) -> AblationRow:
        for r in self.rows:
            if r.flags == AblationFlags(semantic, geometric):
                return r
        raise KeyError((semantic, geometric))


def run_ablation(scenes, cfg: ScheduleConfig, denoiser, embeddings=None, rows=ABLATION_ROWS, on_result=None) -> AblationTable:
    """Run every flag combination on every scene with a per-scene shared seed.

    A scene that fails under any combination is dropped from every row so
    the rows stay comparable. ``on_result(index, flags, result)`` is called
    for every generation of a scene that succeeded, in row order.
    """
    embeddings = embeddings or lexicon_embedding()
    table = AblationTable([AblationRow(f) for f in rows])
    for i, scene in enumerate(scenes):
        scene_cfg = replace(cfg, seed=cfg.seed + i)
        reports = []
        try:
            results = generate_many(scene, scene_cfg, [r.flags for r in table.rows], denoiser, embeddings)
            reports = [evaluate(res, scene) for res in results]
        except Exception as exc:  # noqa: BLE001 - any scene failure skips the scene
            msg = f"scene {i}: {type(exc).__name__}: {exc}"
            log.warning(msg)
            table.skipped.append(msg)
            continue
        for row, rep, res in zip(table.rows, reports, results):
            row.reports.append(rep)
            if on_result is not None:
                on_result(i, row.flags, res)
    baseline = table.rows[0]
    base_d = [d for r in baseline.reports for d in image_distances(r)]
    if base_d:
        for row in table.rows:
            mine = [d for r in row.reports for d in image_distances(r)]
            row.distance = distance_distribution(mine, base_d)
    return table


def run_benchmark(scenes, cfg: ScheduleConfig, denoiser, out_dir, rows=ABLATION_ROWS, embeddings=None,
                  bundles: int = 2, sheet_scenes: int = 16, scenes_label: str = "") -> tuple[AblationTable, dict]:
    """Run an ablation and write ``report.json``, ``contact.ppm`` and full
    bundles for the first ``bundles`` scenes under ``out_dir``."""
    from pathlib import Path

    from .output import contact_sheet, dumps_json, report_dict, thumbnail, write_bundle, write_ppm
    from .pipeline import config_summary

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenes = list(scenes)
    tiles = []

    def on_result(i, flags, res):
        if i < sheet_scenes:
            tiles.append(thumbnail(res))
        if i < bundles:
            tag = f"sem{int(flags.semantic_enabled)}_geo{int(flags.geometric_enabled)}"
            write_bundle(res, out / "bundles" / f"scene_{i:03d}" / tag, scenes[i])

    table = run_ablation(scenes, cfg, denoiser, embeddings, rows, on_result)
    report = report_dict(table, scenes_label, config_summary(cfg))
    (out / "report.json").write_text(dumps_json(report), encoding="utf-8")
    if tiles:
        write_ppm(out / "contact.ppm", contact_sheet(tiles, columns=len(rows)))
    return table, report
