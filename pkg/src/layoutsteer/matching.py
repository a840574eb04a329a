"""Find, per category, the prompt token whose attention map depicts it.

A category's own word is used when its map shows a focused active region.
Otherwise tokens are ranked by embedding distance to the category and the
nearest one with a focused region wins.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._hashing import stable_rng
from .grid import AttentionStack
from .scene import Prompt, tokenize

TABLE_MAGIC = b"LSEMB001"


class HashEmbedding:
    """Deterministic pseudo-random unit vectors keyed by the word text."""

    source = "seeded-hash"

    def __init__(self, dimension: int = 64, seed: int = 0):
        self.dimension = dimension
        self.seed = seed

    def embed(self, word: str) -> np.ndarray:
        v = stable_rng("word-vector", self.seed, word.lower()).normal(size=self.dimension)
        return v / np.linalg.norm(v)


class TableEmbedding:
    """Word vectors from a table. Phrases missing from the table use the mean
    of their words' vectors; unknown words fall back to ``HashEmbedding``."""

    source = "loaded-table"

    def __init__(self, vectors: dict[str, np.ndarray], seed: int = 0):
        if not vectors:
            raise ValueError("empty embedding table")
        dims = {np.asarray(v).shape for v in vectors.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise ValueError(f"inconsistent vector shapes {dims}")
        self.vectors = {k.lower(): np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        self.dimension = next(iter(dims))[0]
        self._fallback = HashEmbedding(self.dimension, seed)

    def _raw(self, word):
        if word in self.vectors:
            return self.vectors[word]
        return self._fallback.embed(word)

    def embed(self, word: str) -> np.ndarray:
        word = word.lower()
        if word in self.vectors:
            v = self.vectors[word]
        else:
            parts = tokenize(word)
            if len(parts) > 1:
                v = np.mean([self._raw(p) / np.linalg.norm(self._raw(p)) for p in parts], axis=0)
            else:
                v = self._raw(word)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError(f"zero vector for {word!r}")
        return v / n


def save_table(path, vectors: dict[str, np.ndarray]) -> None:
    """Write the flat binary table: magic, dimension and vocabulary size as
    little-endian uint32, each word as a uint32 byte length plus UTF-8 bytes,
    then the float32 little-endian matrix in vocabulary order."""
    words = list(vectors)
    mat = np.asarray([vectors[w] for w in words], dtype="<f4")
    dim = mat.shape[1] if mat.ndim == 2 else 0
    with open(path, "wb") as f:
        f.write(TABLE_MAGIC)
        f.write(struct.pack("<II", dim, len(words)))
        for w in words:
            b = w.encode("utf-8")
            f.write(struct.pack("<I", len(b)))
            f.write(b)
        f.write(mat.tobytes())


def load_table(path, seed: int = 0) -> TableEmbedding:
    data = Path(path).read_bytes()
    if data[: len(TABLE_MAGIC)] != TABLE_MAGIC:
        raise ValueError(f"{path}: not an embedding table (bad magic)")
    off = len(TABLE_MAGIC)
    dim, n = struct.unpack_from("<II", data, off)
    off += 8
    words = []
    for _ in range(n):
        (length,) = struct.unpack_from("<I", data, off)
        off += 4
        words.append(data[off : off + length].decode("utf-8"))
        off += length
    expected = off + 4 * dim * n
    if len(data) != expected:
        raise ValueError(f"{path}: truncated or oversized matrix ({len(data)} != {expected} bytes)")
    mat = np.frombuffer(data, dtype="<f4", offset=off).reshape(n, dim).astype(np.float64)
    return TableEmbedding(dict(zip(words, mat)), seed=seed)


@dataclass(frozen=True)
class MatchConfig:
    theta_act: float = 0.3
    rho_min: float = 0.02
    rho_max: float = 0.5
    t_match: int = 40

    def __post_init__(self):
        if not 0 < self.theta_act < 1:
            raise ValueError("theta_act must lie in (0, 1)")
        if not 0 < self.rho_min < self.rho_max < 1:
            raise ValueError("need 0 < rho_min < rho_max < 1")


@dataclass
class MatchResult:
    indices: dict[str, int]
    ratios: tuple[float, ...] = ()
    distances: dict[str, tuple[float, ...]] = field(default_factory=dict)
    reasons: dict[str, str] = field(default_factory=dict)


def activation_ratio(layer: np.ndarray, theta_act: float) -> float:
    layer = np.asarray(layer)
    return float(np.count_nonzero(layer > theta_act)) / layer.size


def is_regionally_activated(layer: np.ndarray, cfg: MatchConfig) -> bool:
    r = activation_ratio(layer, cfg.theta_act)
    return cfg.rho_min <= r <= cfg.rho_max


def word_distance(a: str, b: str, emb) -> float:
    if a.lower() == b.lower():
        return 0.0
    return float(1.0 - np.dot(emb.embed(a), emb.embed(b)))


def _match(category, prompt, stack, cfg, emb):
    if not prompt.words:
        raise ValueError("cannot match against an empty prompt")
    if stack.tokens != len(prompt.words):
        raise ValueError(f"stack has {stack.tokens} layers for {len(prompt.words)} prompt tokens")
    active = [is_regionally_activated(stack.layer(j), cfg) for j in range(stack.tokens)]
    dists = [word_distance(w, category, emb) for w in prompt.words]
    own = prompt.find(category)
    if own is not None and active[own]:
        return own, "direct", dists
    order = sorted(range(len(dists)), key=lambda j: (dists[j], j))
    for j in order:
        if active[j]:
            return j, "ranked", dists
    return order[0], "fallback", dists


def match_category(category: str, prompt: Prompt, stack: AttentionStack, cfg: MatchConfig, emb) -> int:
    return _match(category, prompt, stack, cfg, emb)[0]


def match_all(groups, prompt: Prompt, stack: AttentionStack, cfg: MatchConfig, emb) -> MatchResult:
    ratios = tuple(activation_ratio(stack.layer(j), cfg.theta_act) for j in range(stack.tokens))
    result = MatchResult({}, ratios)
    for g in groups:
        idx, why, dists = _match(g.category, prompt, stack, cfg, emb)
        result.indices[g.category] = idx
        result.reasons[g.category] = why
        result.distances[g.category] = tuple(dists)
    return result


def default_match(groups, prompt: Prompt) -> MatchResult:
    """Mapping used while matching is off: the category's own token, else token 0."""
    result = MatchResult({})
    for g in groups:
        own = prompt.find(g.category)
        result.indices[g.category] = 0 if own is None else own
        result.reasons[g.category] = "own-token" if own is not None else "first-token"
    return result
