"""NumPy reference versions of the hot kernels.

Every function here has a twin with the same signature in ``_native.pyx``.
Integer kernels must agree bit-for-bit between the two backends; floating
point kernels agree to rounding.
"""
from __future__ import annotations

from collections import deque

import numpy as np


def _logits(z, sig, tau):
    # channel-ordered accumulation, same order as the compiled loop
    h, w, c = z.shape
    out = np.zeros((h, w, sig.shape[0]))
    for k in range(c):
        out += z[:, :, k, None] * sig[None, None, :, k]
    return out / tau


def attention(z, sig, tau, sink):
    """Per-pixel softmax over tokens. ``sink`` is the logit of an extra
    zero-signature slot, or ``None`` for a plain softmax."""
    logits = _logits(z, sig, tau)
    top = logits.max(axis=2, keepdims=True)
    if sink is not None:
        top = np.maximum(top, sink)
    e = np.exp(logits - top)
    denom = e.sum(axis=2, keepdims=True)
    if sink is not None:
        denom = denom + np.exp(sink - top)
    return e / denom


def denoise_step(z, sig, tau, sink, amp, alpha):
    a = attention(z, sig, tau, sink)
    target = amp * (a @ sig)
    if alpha == 1.0:
        # a full step lands on the prediction exactly
        return target, a
    return z + alpha * (target - z), a


def attention_vjp(z, sig, tau, sink, upstream, att=None):
    """Gradient of ``sum(upstream * attention(z))`` with respect to ``z``.

    ``att`` may carry ``attention(z)`` when the caller already has it."""
    a = attention(z, sig, tau, sink) if att is None else np.asarray(att, dtype=np.float64)
    weighted = a * upstream
    mean_sig = a @ sig
    g = weighted @ sig - weighted.sum(axis=2, keepdims=True) * mean_sig
    return g / tau


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.int64).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=np.int64).reshape(-1, 2)
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=np.int64).reshape(-1, 2)


def rasterize_convex(vertices, h, w):
    v = np.asarray(vertices, dtype=np.int64).reshape(-1, 2)
    xs, ys = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    n = len(v)
    if n == 0:
        return np.zeros((h, w), dtype=bool)
    if n == 1:
        return (xs == v[0, 0]) & (ys == v[0, 1])
    if n == 2:
        (ax, ay), (bx, by) = v
        on_line = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax) == 0
        within = (
            (xs >= min(ax, bx)) & (xs <= max(ax, bx)) & (ys >= min(ay, by)) & (ys <= max(ay, by))
        )
        return on_line & within
    inside = np.ones((h, w), dtype=bool)
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        inside &= (bx - ax) * (ys - ay) - (by - ay) * (xs - ax) >= 0
    return inside


def relocate(z, mask, dx, dy):
    h, w = mask.shape
    out = z.copy()
    xs, ys = np.nonzero(mask)
    tx, ty = xs + dx, ys + dy
    keep = (tx >= 0) & (tx < h) & (ty >= 0) & (ty < w)
    out[tx[keep], ty[keep]] = z[xs[keep], ys[keep]]
    return out


def label_components(mask):
    """4-connected labels numbered 1..n in raster order of each component's
    first pixel; background is 0."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    n = 0
    for x in range(h):
        for y in range(w):
            if not mask[x, y] or labels[x, y]:
                continue
            n += 1
            labels[x, y] = n
            queue = deque([(x, y)])
            while queue:
                px, py = queue.popleft()
                for qx, qy in ((px - 1, py), (px + 1, py), (px, py - 1), (px, py + 1)):
                    if 0 <= qx < h and 0 <= qy < w and mask[qx, qy] and not labels[qx, qy]:
                        labels[qx, qy] = n
                        queue.append((qx, qy))
    return labels, n
