# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same signatures and semantics as ``_pure``."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef void _softmax_pixel(const double[:, :, ::1] z, const double[:, ::1] sig, Py_ssize_t x,
                         Py_ssize_t y, double tau, bint has_sink, double sink,
                         double* out) noexcept nogil:
    cdef Py_ssize_t J = sig.shape[0], C = sig.shape[1], j, k
    cdef double acc, top, denom
    for j in range(J):
        acc = 0.0
        for k in range(C):
            acc = acc + z[x, y, k] * sig[j, k]
        out[j] = acc / tau
    top = out[0] if J > 0 else sink
    for j in range(1, J):
        if out[j] > top:
            top = out[j]
    if has_sink and sink > top:
        top = sink
    denom = 0.0
    for j in range(J):
        out[j] = exp(out[j] - top)
        denom = denom + out[j]
    if has_sink:
        denom = denom + exp(sink - top)
    for j in range(J):
        out[j] = out[j] / denom


def attention(z, sig, double tau, sink):
    cdef const double[:, :, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(sig, dtype=np.float64)
    cdef Py_ssize_t h = zv.shape[0], w = zv.shape[1], J = sv.shape[0], x, y
    cdef bint has_sink = sink is not None
    cdef double s = sink if has_sink else 0.0
    out = np.empty((h, w, J), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    with nogil:
        for x in range(h):
            for y in range(w):
                _softmax_pixel(zv, sv, x, y, tau, has_sink, s, &ov[x, y, 0] if J > 0 else NULL)
    return out


def denoise_step(z, sig, double tau, sink, double amp, double alpha):
    cdef const double[:, :, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(sig, dtype=np.float64)
    cdef Py_ssize_t h = zv.shape[0], w = zv.shape[1], C = zv.shape[2], J = sv.shape[0]
    cdef Py_ssize_t x, y, j, k
    cdef bint has_sink = sink is not None
    cdef double s = sink if has_sink else 0.0
    cdef double t
    att = np.empty((h, w, J), dtype=np.float64)
    nxt = np.empty((h, w, C), dtype=np.float64)
    cdef double[:, :, ::1] av = att
    cdef double[:, :, ::1] nv = nxt
    with nogil:
        for x in range(h):
            for y in range(w):
                if J > 0:
                    _softmax_pixel(zv, sv, x, y, tau, has_sink, s, &av[x, y, 0])
                for k in range(C):
                    t = 0.0
                    for j in range(J):
                        t = t + av[x, y, j] * sv[j, k]
                    if alpha == 1.0:
                        nv[x, y, k] = amp * t
                    else:
                        nv[x, y, k] = zv[x, y, k] + alpha * (amp * t - zv[x, y, k])
    return nxt, att


def attention_vjp(z, sig, double tau, sink, upstream, att=None):
    cdef const double[:, :, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(sig, dtype=np.float64)
    cdef const double[:, :, ::1] uv = np.ascontiguousarray(upstream, dtype=np.float64)
    cdef Py_ssize_t h = zv.shape[0], w = zv.shape[1], C = zv.shape[2], J = sv.shape[0]
    cdef Py_ssize_t x, y, j, k
    cdef bint has_sink = sink is not None
    cdef double s = sink if has_sink else 0.0
    cdef double wsum, mean_k, ws_k
    a = np.empty(J if J > 0 else 1, dtype=np.float64)
    cdef double[::1] av = a
    cdef bint given = att is not None
    cdef const double[:, :, ::1] pv = np.ascontiguousarray(att if given else np.zeros((1, 1, 1)), dtype=np.float64)
    grad = np.zeros((h, w, C), dtype=np.float64)
    cdef double[:, :, ::1] gv = grad
    if J == 0:
        return grad
    with nogil:
        for x in range(h):
            for y in range(w):
                if given:
                    for j in range(J):
                        av[j] = pv[x, y, j]
                else:
                    _softmax_pixel(zv, sv, x, y, tau, has_sink, s, &av[0])
                wsum = 0.0
                for j in range(J):
                    wsum = wsum + av[j] * uv[x, y, j]
                for k in range(C):
                    mean_k = 0.0
                    ws_k = 0.0
                    for j in range(J):
                        mean_k = mean_k + av[j] * sv[j, k]
                        ws_k = ws_k + av[j] * uv[x, y, j] * sv[j, k]
                    gv[x, y, k] = (ws_k - wsum * mean_k) / tau
    return grad


cdef inline long long _cross(long long ox, long long oy, long long ax, long long ay,
                             long long bx, long long by) noexcept nogil:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def convex_hull(points):
    pts = np.unique(np.asarray(points, dtype=np.int64).reshape(-1, 2), axis=0)
    cdef Py_ssize_t n = pts.shape[0]
    if n <= 2:
        return np.ascontiguousarray(pts)
    cdef const long long[:, ::1] p = np.ascontiguousarray(pts, dtype=np.int64)
    hull = np.empty((2 * n, 2), dtype=np.int64)
    cdef long long[:, ::1] hv = hull
    cdef Py_ssize_t m = 0, i, lower_size
    with nogil:
        for i in range(n):
            while m >= 2 and _cross(hv[m - 2, 0], hv[m - 2, 1], hv[m - 1, 0], hv[m - 1, 1],
                                    p[i, 0], p[i, 1]) <= 0:
                m -= 1
            hv[m, 0] = p[i, 0]
            hv[m, 1] = p[i, 1]
            m += 1
        lower_size = m + 1
        for i in range(n - 2, -1, -1):
            while m >= lower_size and _cross(hv[m - 2, 0], hv[m - 2, 1], hv[m - 1, 0],
                                             hv[m - 1, 1], p[i, 0], p[i, 1]) <= 0:
                m -= 1
            hv[m, 0] = p[i, 0]
            hv[m, 1] = p[i, 1]
            m += 1
    # last point repeats the first
    return hull[: m - 1].copy()


def rasterize_convex(vertices, Py_ssize_t h, Py_ssize_t w):
    cdef const long long[:, ::1] v = np.ascontiguousarray(
        np.asarray(vertices, dtype=np.int64).reshape(-1, 2))
    cdef Py_ssize_t n = v.shape[0], x, y, i
    out = np.zeros((h, w), dtype=np.bool_)
    cdef cnp.npy_bool[:, ::1] ov = out
    cdef long long ax, ay, bx, by
    cdef bint inside
    if n == 0:
        return out
    with nogil:
        for x in range(h):
            for y in range(w):
                if n == 1:
                    inside = x == v[0, 0] and y == v[0, 1]
                elif n == 2:
                    ax = v[0, 0]; ay = v[0, 1]; bx = v[1, 0]; by = v[1, 1]
                    inside = (_cross(ax, ay, bx, by, x, y) == 0
                              and x >= min(ax, bx) and x <= max(ax, bx)
                              and y >= min(ay, by) and y <= max(ay, by))
                else:
                    inside = True
                    for i in range(n):
                        if _cross(v[i, 0], v[i, 1], v[(i + 1) % n, 0], v[(i + 1) % n, 1],
                                  x, y) < 0:
                            inside = False
                            break
                ov[x, y] = inside
    return out


def relocate(z, mask, Py_ssize_t dx, Py_ssize_t dy):
    cdef const double[:, :, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const cnp.npy_bool[:, ::1] mv = np.ascontiguousarray(mask, dtype=np.bool_)
    cdef Py_ssize_t h = zv.shape[0], w = zv.shape[1], C = zv.shape[2], x, y, k, tx, ty
    out = np.array(zv, dtype=np.float64, copy=True)
    cdef double[:, :, ::1] ov = out
    with nogil:
        for x in range(h):
            for y in range(w):
                if not mv[x, y]:
                    continue
                tx = x + dx
                ty = y + dy
                if tx < 0 or tx >= h or ty < 0 or ty >= w:
                    continue
                for k in range(C):
                    ov[tx, ty, k] = zv[x, y, k]
    return out


def label_components(mask):
    cdef const cnp.npy_bool[:, ::1] mv = np.ascontiguousarray(mask, dtype=np.bool_)
    cdef Py_ssize_t h = mv.shape[0], w = mv.shape[1]
    labels = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] lv = labels
    stack = np.empty(h * w + 1, dtype=np.int64)
    cdef long long[::1] sv = stack
    cdef Py_ssize_t x, y, top, px, py, cell
    cdef int n = 0
    with nogil:
        for x in range(h):
            for y in range(w):
                if not mv[x, y] or lv[x, y] != 0:
                    continue
                n += 1
                lv[x, y] = n
                top = 0
                sv[top] = x * w + y
                top += 1
                while top > 0:
                    top -= 1
                    cell = sv[top]
                    px = cell // w
                    py = cell % w
                    if px > 0 and mv[px - 1, py] and lv[px - 1, py] == 0:
                        lv[px - 1, py] = n
                        sv[top] = (px - 1) * w + py
                        top += 1
                    if px + 1 < h and mv[px + 1, py] and lv[px + 1, py] == 0:
                        lv[px + 1, py] = n
                        sv[top] = (px + 1) * w + py
                        top += 1
                    if py > 0 and mv[px, py - 1] and lv[px, py - 1] == 0:
                        lv[px, py - 1] = n
                        sv[top] = px * w + py - 1
                        top += 1
                    if py + 1 < w and mv[px, py + 1] and lv[px, py + 1] == 0:
                        lv[px, py + 1] = n
                        sv[top] = px * w + py + 1
                        top += 1
    return labels, n
