"""Procedural denoiser whose attention is an analytic function of the latent.

Each prompt token ``j`` owns a unit signature ``sig_j`` in channel space. A
pixel's attention is a softmax of ``<z, sig_j> / tau`` over the tokens plus a
start-of-text slot with a fixed logit and a zero signature, which soaks up
attention where nothing is depicted. One step moves the latent toward
``A * sum_j a_j sig_j``.

With the defaults the per-pixel dynamics are bistable: a pixel whose
projection on some signature exceeds ``tau * sink_logit`` (2.0) saturates
toward ``A * sig_j``, anything weaker decays to background. Objects are
therefore planted in ``z_T`` as Gaussian bumps along their token's
signature, at positions hashed from the prompt and seed, and they stay put
unless the latent is edited.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._hashing import stable_rng
from .grid import AttentionStack, average_pool, check_latent

# words that never get a planted object
FUNCTION_WORDS = frozenset(
    """a an the and or of on in at to with by for from into onto over under near
    next beside behind above below is are was were be being been this that these
    those it its his her their there here some many several few one two three four
    five six seven eight nine ten photo picture image scene view each other while
    wearing holding sitting standing lying""".split()
)

BACKGROUND_COLOR = (236, 236, 228)


@dataclass(frozen=True)
class BlobWorldConfig:
    channels: int = 8
    tau: float = 0.25
    amplitude: float = 4.0
    sink_logit: float | None = 8.0
    alpha_min: float = 0.06
    alpha_max: float = 0.3
    noise_scale: float = 0.25
    seed_amplitude: tuple[float, float] = (2.8, 3.4)
    seed_radius: tuple[float, float] = (4.5, 8.0)
    dormant_rate: float = 0.15
    display_threshold: float = 2.0
    upscale: int = 8
    signature_seed: int = 0

    def __post_init__(self):
        if self.channels < 1 or self.tau <= 0 or self.amplitude <= 0:
            raise ValueError("channels >= 1, tau > 0 and amplitude > 0 are required")
        if not 0 < self.alpha_min <= self.alpha_max <= 1:
            raise ValueError("need 0 < alpha_min <= alpha_max <= 1")


@dataclass(frozen=True)
class PlantedSeed:
    token: int
    word: str
    x: float
    y: float
    radius: float
    amplitude: float


class BlobWorld:
    """Deterministic denoiser satisfying the pipeline's denoiser contract.

    ``step`` reports attention average-pooled to ``attn_res``; the
    unpooled per-pixel maps come from ``attention``.
    """

    def __init__(self, config: BlobWorldConfig | None = None, total_steps: int = 50, attn_res: int = 16):
        self.config = config or BlobWorldConfig()
        self.total_steps = total_steps
        self.attn_res = attn_res
        self._sig_cache: dict[str, np.ndarray] = {}

    # signatures -----------------------------------------------------------

    def signature(self, word: str) -> np.ndarray:
        sig = self._sig_cache.get(word)
        if sig is None:
            v = stable_rng("signature", self.config.signature_seed, word).normal(size=self.config.channels)
            sig = v / np.linalg.norm(v)
            self._sig_cache[word] = sig
        return sig

    def signatures(self, tokens) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.config.channels))
        return np.stack([self.signature(t) for t in tokens])

    # schedule -------------------------------------------------------------

    def alpha(self, t: int, guidance_scale: float = 7.5) -> float:
        """Step gain, rising linearly from ``alpha_min`` at ``t = T`` to
        ``alpha_max`` at ``t = 1``. The guidance scale multiplies it
        (7.5 is neutral) and the result is clipped to (0, 1]."""
        T = self.total_steps
        frac = 0.0 if T <= 1 else (T - t) / (T - 1)
        a = self.config.alpha_min + (self.config.alpha_max - self.config.alpha_min) * frac
        return float(min(1.0, max(1e-6, a * guidance_scale / 7.5)))

    # core operations ------------------------------------------------------

    def attention(self, z, tokens) -> np.ndarray:
        """Per-pixel attention, ``h x w x J``."""
        c = self.config
        return _kernels.attention(check_latent(z), self.signatures(tokens), c.tau, c.sink_logit)

    def pool(self, att: np.ndarray) -> np.ndarray:
        r = self.attn_res
        if att.shape[0] == r and att.shape[1] == r:
            return att
        return average_pool(att, r, r)

    def attention_stack(self, z, tokens) -> AttentionStack:
        return AttentionStack(self.pool(self.attention(z, tokens)))

    def predict_clean(self, z, tokens) -> np.ndarray:
        """``A * sum_j a_j sig_j``, computed by the same kernel as ``step``."""
        c = self.config
        return _kernels.denoise_step(check_latent(z), self.signatures(tokens), c.tau, c.sink_logit, c.amplitude, 1.0)[0]

    def step(self, z, t, tokens, guidance_scale=7.5):
        """One denoising step ``z_t -> z_{t-1}``; returns the new latent and
        the pooled attention of ``z_t``."""
        if t < 1:
            raise ValueError(f"step needs t >= 1, got {t}")
        c = self.config
        nxt, att = _kernels.denoise_step(
            check_latent(z), self.signatures(tokens), c.tau, c.sink_logit, c.amplitude,
            self.alpha(t, guidance_scale),
        )
        return nxt, AttentionStack(self.pool(att))

    def attention_jacobian_product(self, z, tokens, upstream, att=None) -> np.ndarray:
        """Chain rule through the per-pixel softmax.

        ``upstream`` is d(loss)/d(attention) at either the pooled or the full
        resolution; pooled gradients are spread evenly over their blocks.
        ``att`` optionally supplies the full-resolution ``attention(z)``.
        """
        z = check_latent(z)
        up = np.asarray(upstream, dtype=np.float64)
        h, w = z.shape[:2]
        if up.shape[:2] != (h, w):
            fx, fy = h // up.shape[0], w // up.shape[1]
            if up.shape[0] * fx != h or up.shape[1] * fy != w:
                raise ValueError(f"upstream {up.shape} does not tile latent {z.shape}")
            up = np.repeat(np.repeat(up, fx, axis=0), fy, axis=1) / (fx * fy)
        c = self.config
        return _kernels.attention_vjp(z, self.signatures(tokens), c.tau, c.sink_logit, up, att)

    # latents --------------------------------------------------------------

    def noise(self, shape, seed) -> np.ndarray:
        """Prior sample: standard normal in model units (``noise_scale``)."""
        return self.config.noise_scale * stable_rng("noise", seed).standard_normal(shape)

    def planted_seeds(self, tokens, shape, seed) -> list[PlantedSeed]:
        c = self.config
        h, w = shape[:2]
        seeds = []
        for j, word in enumerate(tokens):
            if word in FUNCTION_WORDS or word.isdigit():
                continue
            rng = stable_rng("plant", seed, j, word)
            if rng.random() < c.dormant_rate:
                continue
            radius = rng.uniform(*c.seed_radius)
            margin_x = min(radius, (h - 1) / 2)
            margin_y = min(radius, (w - 1) / 2)
            x = rng.uniform(margin_x, h - 1 - margin_x)
            y = rng.uniform(margin_y, w - 1 - margin_y)
            seeds.append(PlantedSeed(j, word, float(x), float(y), float(radius), float(rng.uniform(*c.seed_amplitude))))
        return seeds

    def initial_latent(self, tokens, shape, seed) -> np.ndarray:
        z = self.noise(shape, seed)
        xs, ys = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
        for s in self.planted_seeds(tokens, shape, seed):
            # bump reaches the switching level 2.0 at distance ~radius
            sigma = s.radius / np.sqrt(2 * np.log(s.amplitude / 2.0))
            bump = s.amplitude * np.exp(-((xs - s.x) ** 2 + (ys - s.y) ** 2) / (2 * sigma**2))
            z += bump[:, :, None] * self.signature(s.word)[None, None, :]
        return z

    # decoding -------------------------------------------------------------

    def palette(self, n_tokens: int) -> np.ndarray:
        cols = []
        for j in range(n_tokens):
            hue = (j * 0.61803398875) % 1.0
            cols.append([round(255 * v) for v in colorsys.hsv_to_rgb(hue, 0.75, 0.9)])
        return np.array(cols, dtype=np.uint8).reshape(-1, 3)

    def decode(self, z, tokens, upscale=None) -> np.ndarray:
        """RGB image: each pixel takes the color of its best-aligned token when
        that alignment clears the display threshold, else the background."""
        z = check_latent(z)
        up = self.config.upscale if upscale is None else upscale
        h, w = z.shape[:2]
        img = np.empty((h, w, 3), dtype=np.uint8)
        img[:] = BACKGROUND_COLOR
        if tokens:
            proj = z @ self.signatures(tokens).T
            best = proj.argmax(axis=2)
            show = proj.max(axis=2) > self.config.display_threshold
            img[show] = self.palette(len(tokens))[best[show]]
        return np.repeat(np.repeat(img, up, axis=0), up, axis=1)
