"""Locate each object's region in the latent, move it to its target and refill
the vacated area.

Hull vertices are listed counter-clockwise in the ``(x, y)`` = (row, column)
frame, i.e. every consecutive triple has a positive cross product
``(b - a) x (c - a)``, starting from the lexicographically smallest vertex.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import (
    AttentionStack,
    EmptyRoIError,
    GridPoint,
    NormBox,
    box_center_point,
    centroid,
    translate_mask,
)


@dataclass(frozen=True)
class HullPolygon:
    vertices: tuple[GridPoint, ...]

    def __post_init__(self):
        if not self.vertices:
            raise EmptyRoIError("hull with no vertices")

    def as_array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class RefillConfig:
    mode: str = "diffusion"
    aux_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("diffusion", "none"):
            raise ValueError(f"refill mode must be 'diffusion' or 'none', got {self.mode!r}")


@dataclass
class ObjectRoI:
    """Region found for one target object and the move applied to it."""

    object_index: int
    category: str
    mask: np.ndarray
    hull: HullPolygon
    source: GridPoint
    target: GridPoint
    component: int | None = None

    @property
    def delta(self) -> GridPoint:
        return self.target - self.source


@dataclass
class RoIResult:
    objects: list[ObjectRoI] = field(default_factory=list)
    refill_mask: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)


def threshold_pixels(layer: np.ndarray, lam: float) -> list[GridPoint]:
    xs, ys = np.nonzero(np.asarray(layer) > lam)
    return [GridPoint(int(x), int(y)) for x, y in zip(xs, ys)]


def convex_hull(points) -> HullPolygon:
    """Andrew's monotone chain; collinear boundary points are dropped, so a
    collinear input yields its two endpoints."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyRoIError("convex hull of no points")
    hull = _kernels.convex_hull(pts)
    return HullPolygon(tuple(GridPoint(int(x), int(y)) for x, y in hull))


def rasterize_hull(hull: HullPolygon, h: int, w: int) -> np.ndarray:
    """Boundary-inclusive fill of the hull on an ``h x w`` grid."""
    return _kernels.rasterize_convex(hull.as_array(), h, w)


def identify_roi(stack: AttentionStack, index: int, lam: float) -> np.ndarray:
    mask, _ = identify_roi_hull(stack, index, lam)
    return mask


def identify_roi_hull(stack: AttentionStack, index: int, lam: float):
    if not 0 <= index < stack.tokens:
        raise IndexError(f"token index {index} outside stack of {stack.tokens}")
    pts = threshold_pixels(stack.layer(index), lam)
    if not pts:
        raise EmptyRoIError(f"no pixel of layer {index} exceeds {lam}")
    hull = convex_hull(pts)
    return rasterize_hull(hull, stack.height, stack.width), hull


def relocate_latents(z: np.ndarray, mask: np.ndarray, c_b: GridPoint, c_g: GridPoint) -> np.ndarray:
    """Copy the channel vectors under ``mask`` by ``c_g - c_b``.

    Reads come from the unmodified input, so overlapping source and target
    regions are well defined. Targets outside the grid are dropped.
    """
    if mask.shape != z.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match latent {z.shape[:2]}")
    dx, dy = c_g.x - c_b.x, c_g.y - c_b.y
    if dx == 0 and dy == 0:
        return np.array(z, dtype=np.float64, copy=True)
    return _kernels.relocate(z, mask, dx, dy)


def components(mask: np.ndarray) -> list[np.ndarray]:
    """4-connected components, in raster order of their first pixel."""
    labels, n = _kernels.label_components(mask)
    return [labels == k for k in range(1, n + 1)]


def assign_components(comps, targets):
    """Greedy nearest centroid-to-center matching.

    Returns one component index per target. Targets left over once every
    component is used receive the largest component.
    """
    cents = [np.argwhere(c).mean(axis=0) for c in comps]
    pairs = []
    for ci, cc in enumerate(cents):
        for ti, t in enumerate(targets):
            d = float(np.hypot(cc[0] - t.x, cc[1] - t.y))
            pairs.append((d, ci, ti))
    pairs.sort()
    out: list[int | None] = [None] * len(targets)
    used = set()
    for _, ci, ti in pairs:
        if ci in used or out[ti] is not None:
            continue
        out[ti] = ci
        used.add(ci)
    if any(o is None for o in out):
        largest = max(range(len(comps)), key=lambda i: (int(comps[i].sum()), -i))
        out = [largest if o is None else o for o in out]
    return out


def locate_category(layer_stack: AttentionStack, index: int, boxes: list[NormBox], lam: float):
    """RoIs for one category with ``len(boxes)`` targets on the latent grid.

    A single target uses the hull of every above-threshold pixel. Several
    targets split the map into connected components first.
    Returns ``[(mask, hull, component_id)]`` aligned with ``boxes``.
    """
    h, w = layer_stack.height, layer_stack.width
    if len(boxes) == 1:
        mask, hull = identify_roi_hull(layer_stack, index, lam)
        return [(mask, hull, None)]
    above = layer_stack.layer(index) > lam
    comps = components(above)
    if not comps:
        raise EmptyRoIError(f"no pixel of layer {index} exceeds {lam}")
    targets = [box_center_point(b, h, w) for b in boxes]
    assignment = assign_components(comps, targets)
    cache = {}
    out = []
    for ci in assignment:
        if ci not in cache:
            hull = convex_hull(np.argwhere(comps[ci]))
            cache[ci] = (rasterize_hull(hull, h, w), hull)
        mask, hull = cache[ci]
        out.append((mask, hull, ci))
    return out


def apply_relocations(z: np.ndarray, rois: list[ObjectRoI]):
    """Move every RoI from the same snapshot of ``z``.

    Returns the relocated latent and the refill mask: the union of source
    regions minus every translated footprint.
    """
    out = np.array(z, dtype=np.float64, copy=True)
    footprint = np.zeros(z.shape[:2], dtype=bool)
    sources = np.zeros(z.shape[:2], dtype=bool)
    for roi in rois:
        d = roi.delta
        moved = relocate_latents(z, roi.mask, roi.source, roi.target)
        fp = translate_mask(roi.mask, d.x, d.y)
        out[fp] = moved[fp]
        footprint |= fp
        sources |= roi.mask
    return out, sources & ~footprint


def run_refill(z_half, mask, denoiser, tokens, timesteps, cfg: RefillConfig, guidance_scale=7.5):
    """Refill ``mask`` from an auxiliary chain blended against ``z_half``.

    The auxiliary latent starts from fresh noise and is denoised over
    ``timesteps``; after each step every pixel outside the mask is reset to
    the frozen ``z_half``. The result replaces ``z_half`` on the mask.
    """
    z_half = np.asarray(z_half, dtype=np.float64)
    if cfg.mode == "none" or not mask.any():
        return z_half.copy()
    keep = ~mask
    aux = denoiser.noise(z_half.shape, cfg.aux_seed)
    for t in timesteps:
        aux, _ = denoiser.step(aux, t, tokens, guidance_scale)
        aux[keep] = z_half[keep]
    out = z_half.copy()
    out[mask] = aux[mask]
    return out
