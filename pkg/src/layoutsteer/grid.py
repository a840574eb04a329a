"""Grid and mask primitives shared by every stage.

Coordinates are row-major throughout the package: ``x`` is the row index and
``y`` the column index, both for integer grid points and for normalized boxes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class EmptyRoIError(ValueError):
    """Raised when a region of interest has no pixels."""


class GridPoint(NamedTuple):
    x: int
    y: int

    def __sub__(self, other):
        return GridPoint(self.x - other.x, self.y - other.y)

    def __add__(self, other):
        return GridPoint(self.x + other.x, self.y + other.y)


@dataclass(frozen=True)
class NormBox:
    """Axis-aligned box in normalized image coordinates, ``x`` along rows."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for v in (self.x0, self.y0, self.x1, self.y1):
            if not (0.0 <= v <= 1.0) or not math.isfinite(v):
                raise ValueError(f"box coordinate {v} outside [0, 1]")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box {self.as_list()}")

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2


@dataclass(frozen=True, eq=False)
class AttentionStack:
    """``h_a x w_a x J`` per-token attention maps."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"attention stack must be 3-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("attention stack has non-finite values")
        if self.normalized and v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("normalized stack outside [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def tokens(self) -> int:
        return self.values.shape[2]

    def layer(self, j: int) -> np.ndarray:
        return self.values[:, :, j]


def check_latent(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3 or min(z.shape) < 1:
        raise ValueError(f"latent must be h x w x c with every side >= 1, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent has non-finite values")
    return z


def round_half_away(v: float) -> int:
    return int(math.floor(abs(v) + 0.5)) * (1 if v >= 0 else -1)


def normalize_stack(stack: AttentionStack) -> AttentionStack:
    """Min-max rescale all maps jointly. A constant stack maps to zeros."""
    v = stack.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return AttentionStack(np.zeros_like(v), normalized=True)
    out = (v - lo) / (hi - lo)
    return AttentionStack(np.clip(out, 0.0, 1.0), normalized=True)


def _axis_weights(n_in: int, n_out: int):
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.floor(pos).astype(int)
    lo = np.minimum(lo, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_bilinear(stack: AttentionStack, h: int, w: int) -> AttentionStack:
    """Corner-aligned bilinear resize of every map to ``h x w``."""
    if h < 1 or w < 1:
        raise ValueError(f"invalid target dimensions {h}x{w}")
    v = stack.values
    if v.shape[:2] == (h, w):
        return stack
    xl, xh, xf = _axis_weights(v.shape[0], h)
    yl, yh, yf = _axis_weights(v.shape[1], w)
    # lerp form a + f*(b - a) keeps constant maps exact
    rows = v[xl] + xf[:, None, None] * (v[xh] - v[xl])
    out = rows[:, yl] + yf[None, :, None] * (rows[:, yh] - rows[:, yl])
    if stack.normalized:
        out = np.clip(out, 0.0, 1.0)
    return AttentionStack(out, normalized=stack.normalized)


def centroid(mask: np.ndarray) -> GridPoint:
    xs, ys = np.nonzero(mask)
    if xs.size == 0:
        raise EmptyRoIError("centroid of an empty mask")
    return GridPoint(round_half_away(xs.mean()), round_half_away(ys.mean()))


def rasterize_box(box: NormBox, h: int, w: int) -> np.ndarray:
    """Pixels whose centers fall in ``[x0, x1) x [y0, y1)``."""
    cx = (np.arange(h) + 0.5) / h
    cy = (np.arange(w) + 0.5) / w
    rows = (cx >= box.x0) & (cx < box.x1)
    cols = (cy >= box.y0) & (cy < box.y1)
    return rows[:, None] & cols[None, :]


def box_center_point(box: NormBox, h: int, w: int) -> GridPoint:
    """Grid cell whose center is nearest the box center, clamped to the grid."""
    cx, cy = box.center
    x = min(max(round_half_away(cx * h - 0.5), 0), h - 1)
    y = min(max(round_half_away(cy * w - 0.5), 0), w - 1)
    return GridPoint(x, y)


def mask_union(masks: Sequence[np.ndarray]) -> np.ndarray:
    if not masks:
        raise ValueError("union of no masks")
    shape = masks[0].shape
    out = np.zeros(shape, dtype=bool)
    for m in masks:
        if m.shape != shape:
            raise ValueError(f"mask shape {m.shape} does not match {shape}")
        out |= m.astype(bool)
    return out


def translate_mask(mask: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift a mask by ``(dx, dy)``; pixels leaving the grid are dropped."""
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    xs, ys = np.nonzero(mask)
    tx, ty = xs + dx, ys + dy
    keep = (tx >= 0) & (tx < h) & (ty >= 0) & (ty < w)
    out[tx[keep], ty[keep]] = True
    return out


def average_pool(values: np.ndarray, h: int, w: int) -> np.ndarray:
    """Block-average an ``H x W x J`` array down to ``h x w`` (exact divisors)."""
    H, W = values.shape[:2]
    if H % h or W % w:
        raise ValueError(f"cannot pool {H}x{W} to {h}x{w}")
    fx, fy = H // h, W // w
    return values.reshape(h, fx, w, fy, -1).mean(axis=(1, 3))
