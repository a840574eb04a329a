"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 64]

Prints one line per kernel with the best-of-``repeat`` time of each backend,
the speedup, and the largest difference between their outputs.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from layoutsteer._kernels import backend, native_available


def cases(size: int):
    rng = np.random.default_rng(0)
    z = rng.normal(size=(size, size, 8))
    sig = rng.normal(size=(12, 8))
    sig /= np.linalg.norm(sig, axis=1, keepdims=True)
    up = rng.normal(size=(size, size, 12))
    pts = rng.integers(0, size, size=(4 * size, 2))
    mask = rng.random((size, size)) > 0.55
    blob = np.zeros((size, size), bool)
    blob[size // 4 : size // 2, size // 4 : size // 2] = True
    return {
        "attention": lambda k: k.attention(z, sig, 0.25, 8.0),
        "denoise_step": lambda k: k.denoise_step(z, sig, 0.25, 8.0, 4.0, 0.2)[0],
        "attention_vjp": lambda k: k.attention_vjp(z, sig, 0.25, 8.0, up),
        "convex_hull": lambda k: k.convex_hull(pts),
        "rasterize_convex": lambda k: k.rasterize_convex(k.convex_hull(pts), size, size),
        "relocate": lambda k: k.relocate(z, blob, 5, -7),
        "label_components": lambda k: k.label_components(mask)[0],
    }


def best(fn, repeat: int) -> float:
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--size", type=int, default=64)
    a = p.parse_args(argv)
    if not native_available():
        print("compiled backend not built; run `pip install -e . --no-build-isolation` first")
        return 1
    py, cy = backend("python"), backend("cython")
    print(f"{'kernel':<18}{'python ms':>11}{'cython ms':>11}{'speedup':>9}{'max |diff|':>12}")
    for name, fn in cases(a.size).items():
        tp, tc = best(lambda: fn(py), a.repeat), best(lambda: fn(cy), a.repeat)
        diff = np.max(np.abs(np.asarray(fn(py), float) - np.asarray(fn(cy), float)))
        print(f"{name:<18}{tp * 1e3:>11.3f}{tc * 1e3:>11.3f}{tp / tc:>8.1f}x{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
