"""Independent slow reference implementations used as test oracles.

None of these call into the package's optimized code paths.
"""
from __future__ import annotations

import math

import numpy as np


def brute_hull_vertices(points) -> set[tuple[int, int]]:
    """Hull vertex set from all ordered pairs: ``p -> q`` is a hull edge when
    every point lies strictly left of it or on the closed segment ``pq``."""
    pts = np.unique(np.asarray(points, dtype=np.int64).reshape(-1, 2), axis=0)
    n = len(pts)
    if n <= 2:
        return {tuple(map(int, p)) for p in pts}
    p = pts[:, None, None, :]
    q = pts[None, :, None, :]
    r = pts[None, None, :, :]
    cross = (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])
    dot = (r[..., 0] - p[..., 0]) * (q[..., 0] - p[..., 0]) + (r[..., 1] - p[..., 1]) * (q[..., 1] - p[..., 1])
    seg2 = (q[..., 0] - p[..., 0]) ** 2 + (q[..., 1] - p[..., 1]) ** 2
    on_segment = (cross == 0) & (dot >= 0) & (dot <= seg2)
    ok = np.all((cross > 0) | on_segment, axis=2)
    np.fill_diagonal(ok, False)
    i, j = np.nonzero(ok)
    return {tuple(map(int, pts[k])) for k in np.concatenate([i, j])}


def point_in_convex(vertices, x, y) -> bool:
    """Sign test against every edge of a CCW polygon (boundary counts)."""
    v = [tuple(map(int, p)) for p in vertices]
    if len(v) == 1:
        return (x, y) == v[0]
    if len(v) == 2:
        (ax, ay), (bx, by) = v
        cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        return cross == 0 and min(ax, bx) <= x <= max(ax, bx) and min(ay, by) <= y <= max(ay, by)
    for k in range(len(v)):
        ax, ay = v[k]
        bx, by = v[(k + 1) % len(v)]
        if (bx - ax) * (y - ay) - (by - ay) * (x - ax) < 0:
            return False
    return True


def naive_relocate(z, mask, dx, dy):
    snapshot = [[list(map(float, z[i, j])) for j in range(z.shape[1])] for i in range(z.shape[0])]
    out = np.array(z, dtype=np.float64, copy=True)
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            if mask[i, j]:
                ti, tj = i + dx, j + dy
                if 0 <= ti < z.shape[0] and 0 <= tj < z.shape[1]:
                    out[ti, tj] = snapshot[i][j]
    return out


def straight_refill(z_half, b, denoiser, tokens, steps, aux_seed, guidance_scale=7.5):
    """Auxiliary chain, blend against the frozen main latent after each step,
    then splice, all written as arithmetic on a 0/1 mask."""
    bf = np.asarray(b, dtype=np.float64)[:, :, None]
    aux = denoiser.noise(z_half.shape, aux_seed)
    for t in steps:
        aux, _ = denoiser.step(aux, t, tokens, guidance_scale)
        aux = bf * aux + (1.0 - bf) * z_half
    return (1.0 - bf) * z_half + bf * aux


def softmax_loop(z, sig, tau, sink=None):
    h, w, _ = z.shape
    J = len(sig)
    out = np.zeros((h, w, J))
    for i in range(h):
        for j in range(w):
            logits = [float(np.dot(z[i, j], s)) / tau for s in sig]
            all_logits = logits + ([sink] if sink is not None else [])
            top = max(all_logits)
            e = [math.exp(v - top) for v in all_logits]
            tot = sum(e)
            for k in range(J):
                out[i, j, k] = e[k] / tot
    return out


def flood_components(mask):
    """4-connected components by recursive-free flood fill, raster order."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for i in range(h):
        for j in range(w):
            if mask[i, j] and not seen[i, j]:
                comp = set()
                todo = [(i, j)]
                seen[i, j] = True
                while todo:
                    a, b = todo.pop()
                    comp.add((a, b))
                    for c, d in ((a + 1, b), (a - 1, b), (a, b + 1), (a, b - 1)):
                        if 0 <= c < h and 0 <= d < w and mask[c, d] and not seen[c, d]:
                            seen[c, d] = True
                            todo.append((c, d))
                comps.append(comp)
    return comps


def topk_mean(values, k):
    vals = sorted(values, reverse=True)[:k]
    return sum(vals) / len(vals) if vals else 0.0


def category_loss_oracle(layer, mask, k):
    inside = [float(v) for v, m in zip(np.ravel(layer), np.ravel(mask)) if m]
    outside = [float(v) for v, m in zip(np.ravel(layer), np.ravel(mask)) if not m]
    loss = 0.0
    if inside:
        loss += 1.0 - topk_mean(inside, k)
    if outside:
        loss += topk_mean(outside, k)
    return loss
