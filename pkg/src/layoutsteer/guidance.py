"""Category-level inner/outer box losses on attention, used as gradient
updates on the latent while the layout is still forming."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import mask_union, rasterize_box


@dataclass(frozen=True)
class GuidanceConfig:
    eta: float = 0.3
    k: int | None = None
    # guidance applies for lo < t <= hi; None means (T // 2, T)
    active_range: tuple[int, int] | None = None
    decay: str = "linear"
    enabled: bool = True

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.decay not in ("linear", "constant"):
            raise ValueError(f"unknown decay {self.decay!r}")

    def window(self, total_steps: int) -> tuple[int, int]:
        return self.active_range or (total_steps // 2, total_steps)

    def multiplier(self, t: int, total_steps: int) -> float:
        lo, hi = self.window(total_steps)
        if not lo < t <= hi:
            return 0.0
        if self.decay == "constant" or hi == lo:
            return 1.0
        return (t - lo) / (hi - lo)


@dataclass(frozen=True)
class CategoryTarget:
    """Matched token of one category and its boxes rasterized at attention resolution."""

    token: int
    mask: np.ndarray
    k: int


def default_k(mask: np.ndarray) -> int:
    return max(1, int(np.floor(0.1 * int(mask.sum()) + 0.5)))


def category_targets(match_indices, groups, boxes, res, k=None) -> list[CategoryTarget]:
    out = []
    for g in groups:
        mask = mask_union([rasterize_box(boxes[i], res, res) for i in g.member_indices])
        out.append(CategoryTarget(match_indices[g.category], mask, k or default_k(mask)))
    return out


def _topk(values, k):
    k = min(k, values.size)
    # stable order so ties resolve to the lowest flat index
    return np.argsort(-values, kind="stable")[:k]


def category_loss(layer: np.ndarray, mask: np.ndarray, k: int) -> float:
    """``(1 - mean top-k inside) + mean top-k outside``; an empty side adds 0."""
    loss, _ = category_loss_and_grad(layer, mask, k)
    return loss


def category_loss_and_grad(layer, mask, k):
    layer = np.asarray(layer, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if layer.shape != mask.shape:
        raise ValueError(f"layer {layer.shape} and box mask {mask.shape} differ")
    flat = layer.ravel()
    m = mask.ravel()
    grad = np.zeros_like(flat)
    loss = 0.0
    inside = np.flatnonzero(m)
    outside = np.flatnonzero(~m)
    if inside.size:
        sel = inside[_topk(flat[inside], k)]
        loss += 1.0 - flat[sel].mean()
        grad[sel] -= 1.0 / sel.size
    if outside.size:
        sel = outside[_topk(flat[outside], k)]
        loss += flat[sel].mean()
        grad[sel] += 1.0 / sel.size
    return float(loss), grad.reshape(layer.shape)


def total_loss(stack_values: np.ndarray, targets) -> float:
    return total_loss_and_grad(stack_values, targets)[0]


def total_loss_and_grad(stack_values, targets):
    """Sum of category losses and its gradient with respect to the stack."""
    v = np.asarray(stack_values, dtype=np.float64)
    grad = np.zeros_like(v)
    loss = 0.0
    for tgt in targets:
        l, g = category_loss_and_grad(v[:, :, tgt.token], tgt.mask, tgt.k)
        loss += l
        grad[:, :, tgt.token] += g
    return loss, grad


class AnalyticGradient:
    """d(total loss)/d(latent) through the denoiser's attention Jacobian."""

    capability = "analytic"

    def __init__(self, denoiser, tokens, targets):
        self.denoiser = denoiser
        self.tokens = list(tokens)
        self.targets = list(targets)

    def loss(self, z) -> float:
        return total_loss(self.denoiser.attention_stack(z, self.tokens).values, self.targets)

    def __call__(self, z) -> np.ndarray:
        if hasattr(self.denoiser, "attention") and hasattr(self.denoiser, "pool"):
            # reuse the full-resolution maps instead of recomputing them in the product
            att = self.denoiser.attention(z, self.tokens)
            _, up = total_loss_and_grad(self.denoiser.pool(att), self.targets)
            return self.denoiser.attention_jacobian_product(z, self.tokens, up, att)
        stack = self.denoiser.attention_stack(z, self.tokens)
        _, up = total_loss_and_grad(stack.values, self.targets)
        return self.denoiser.attention_jacobian_product(z, self.tokens, up)


class FiniteDifferenceGradient:
    """Central differences over every latent entry. Only for small grids."""

    capability = "finite-difference"
    max_side = 16

    def __init__(self, loss_fn, eps: float = 1e-4):
        self.loss_fn = loss_fn
        self.eps = eps

    def loss(self, z) -> float:
        return self.loss_fn(z)

    def __call__(self, z) -> np.ndarray:
        z = np.array(z, dtype=np.float64, copy=True)
        if max(z.shape[:2]) > self.max_side:
            raise ValueError(f"finite differences are limited to {self.max_side}x{self.max_side} grids")
        g = np.zeros_like(z)
        for idx in np.ndindex(z.shape):
            orig = z[idx]
            z[idx] = orig + self.eps
            up = self.loss_fn(z)
            z[idx] = orig - self.eps
            down = self.loss_fn(z)
            z[idx] = orig
            g[idx] = (up - down) / (2 * self.eps)
        return g


def gradient_provider(denoiser, tokens, targets):
    if hasattr(denoiser, "attention_jacobian_product"):
        return AnalyticGradient(denoiser, tokens, targets)
    return FiniteDifferenceGradient(
        lambda z: total_loss(denoiser.attention_stack(z, tokens).values, targets)
    )


def guidance_step(z, grad, cfg: GuidanceConfig, t: int, total_steps: int) -> np.ndarray:
    """``z - eta * decay(t) * grad(z)`` inside the active window, else ``z``."""
    mult = cfg.multiplier(t, total_steps)
    if mult == 0.0:
        return z
    g = np.asarray(grad(z) if callable(grad) else grad, dtype=np.float64)
    if g.shape != np.shape(z):
        raise ValueError(f"gradient shape {g.shape} does not match latent {np.shape(z)}")
    return z - cfg.eta * mult * g
