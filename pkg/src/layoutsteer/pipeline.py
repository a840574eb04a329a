"""Staged, training-free layout control around a denoiser.

Timesteps count down from ``T`` to 0; ``t_match = 40`` with ``T = 50``
means ten steps have run. In order, one generation:

1. appends missing categories to the prompt (semantic stage),
2. samples ``z_T`` and denoises, applying attention guidance inside its window,
3. re-matches categories to tokens once ``z_{t_match}`` exists (semantic stage),
4. relocates and refills object latents at ``z_{t_geo}`` (geometric stage),
5. finishes denoising and decodes ``z_0``.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Protocol

import numpy as np

from ._hashing import stable_seed
from .geometry import ObjectRoI, RefillConfig, RoIResult, apply_relocations, locate_category, run_refill
from .grid import AttentionStack, EmptyRoIError, box_center_point, centroid, normalize_stack, resize_bilinear
from .guidance import GuidanceConfig, category_targets, gradient_provider, guidance_step
from .matching import HashEmbedding, MatchConfig, MatchResult, default_match, match_all
from .scene import Keypoint, Prompt, Scene, edit_prompt, group_semantics

log = logging.getLogger(__name__)


class Denoiser(Protocol):
    def initial_latent(self, tokens, shape, seed) -> np.ndarray: ...

    def noise(self, shape, seed) -> np.ndarray: ...

    def step(self, z, t, tokens, guidance_scale) -> tuple[np.ndarray, AttentionStack]: ...


@dataclass(frozen=True)
class ScheduleConfig:
    steps: int = 50
    guidance_scale: float = 7.5
    attn_res: int = 16
    latent_h: int = 64
    latent_w: int = 64
    latent_c: int = 8
    t_match: int = 40
    t_geo: int = 25
    lam: float = 0.45
    match: MatchConfig = field(default_factory=MatchConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    refill: RefillConfig = field(default_factory=RefillConfig)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.t_geo < self.t_match < self.steps:
            raise ValueError(
                f"need 0 < t_geo < t_match < steps, got t_geo={self.t_geo}, "
                f"t_match={self.t_match}, steps={self.steps}"
            )
        if min(self.latent_h, self.latent_w, self.latent_c, self.attn_res) < 1:
            raise ValueError("grid sizes must be positive")
        if not 0 <= self.lam < 1:
            raise ValueError("lambda must lie in [0, 1)")
        if self.match.t_match != self.t_match:
            object.__setattr__(self, "match", replace(self.match, t_match=self.t_match))

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return (self.latent_h, self.latent_w, self.latent_c)


@dataclass(frozen=True)
class AblationFlags:
    semantic_enabled: bool = True
    geometric_enabled: bool = True

    @property
    def label(self) -> str:
        return f"sem={int(self.semantic_enabled)} geo={int(self.geometric_enabled)}"


ABLATION_ROWS = (
    AblationFlags(False, False),
    AblationFlags(True, False),
    AblationFlags(False, True),
    AblationFlags(True, True),
)


@dataclass
class GenerationResult:
    latent: np.ndarray
    image: np.ndarray
    prompt: Prompt
    match: MatchResult
    rois: RoIResult | None
    snapshots: dict[int, np.ndarray]
    stacks: dict[int, AttentionStack]
    log: dict
    flags: AblationFlags
    config: ScheduleConfig

    @property
    def tokens(self) -> list[str]:
        return list(self.prompt.words)

    @property
    def final_stack(self) -> AttentionStack:
        return self.stacks[0]


def config_summary(cfg: ScheduleConfig) -> dict:
    d = asdict(cfg)
    d["guidance"]["active_range"] = list(cfg.guidance.window(cfg.steps))
    return d


def _geometric_stage(z, stack, scene, groups, match, cfg, denoiser, tokens):
    h, w = cfg.latent_h, cfg.latent_w
    maps = resize_bilinear(normalize_stack(stack), h, w)
    boxes = scene.boxes()
    result = RoIResult()
    for g in groups:
        idx = match.indices[g.category]
        gboxes = [boxes[i] for i in g.member_indices]
        try:
            located = locate_category(maps, idx, gboxes, cfg.lam)
        except EmptyRoIError as exc:
            msg = f"{g.category}: empty RoI at t={cfg.t_geo} ({exc}); geometric stage skipped"
            log.warning(msg)
            result.warnings.append(msg)
            continue
        for obj_i, box, (mask, hull, comp) in zip(g.member_indices, gboxes, located):
            result.objects.append(
                ObjectRoI(obj_i, g.category, mask, hull, centroid(mask), box_center_point(box, h, w), comp)
            )
    moved, refill_mask = apply_relocations(z, result.objects)
    result.refill_mask = refill_mask
    refill_cfg = replace(cfg.refill, aux_seed=stable_seed("refill", cfg.seed, cfg.refill.aux_seed))
    steps = range(cfg.steps, cfg.t_geo, -1)
    z_new = run_refill(moved, refill_mask, denoiser, tokens, steps, refill_cfg, cfg.guidance_scale)
    return z_new, result


def _match_log(match: MatchResult, tokens) -> dict:
    return {
        cat: {"index": idx, "token": tokens[idx], "reason": match.reasons.get(cat, "")}
        for cat, idx in match.indices.items()
    }


def _roi_log(rois: RoIResult) -> dict:
    return {
        "objects": [
            {
                "object": r.object_index,
                "category": r.category,
                "source": list(r.source),
                "target": list(r.target),
                "delta": list(r.delta),
                "area": int(r.mask.sum()),
                "component": r.component,
                "hull": [list(v) for v in r.hull.vertices],
            }
            for r in rois.objects
        ],
        "refill_area": int(rois.refill_mask.sum()) if rois.refill_mask is not None else 0,
        "warnings": list(rois.warnings),
    }


def generate(scene: Scene, cfg: ScheduleConfig, flags: AblationFlags, denoiser, embeddings=None) -> GenerationResult:
    """Run one controlled generation. Deterministic in (scene, cfg, flags, denoiser)."""
    return generate_many(scene, cfg, [flags], denoiser, embeddings)[0]


def generate_many(scene: Scene, cfg: ScheduleConfig, flag_list, denoiser, embeddings=None) -> list[GenerationResult]:
    """Generate under several flag combinations.

    Runs that differ only in the geometric flag are identical until
    ``t_geo``, so they share that prefix. Each result equals what
    ``generate`` returns for its flags alone.
    """
    if any(isinstance(o.geometry, Keypoint) for o in scene.objects):
        raise ValueError("convert keypoints to boxes before generating")
    embeddings = embeddings or HashEmbedding()
    flag_list = list(flag_list)
    out: dict[int, GenerationResult] = {}
    for semantic in (False, True):
        branches = [i for i, f in enumerate(flag_list) if f.semantic_enabled == semantic]
        if not branches:
            continue
        prefix = _prefix(scene, cfg, semantic, denoiser, embeddings)
        for i in branches:
            out[i] = _finish(prefix, scene, cfg, flag_list[i], denoiser)
    return [out[i] for i in range(len(flag_list))]


def _prefix(scene, cfg, semantic, denoiser, embeddings):
    """Denoise from ``z_T`` through the step that produces ``z_{t_geo}``."""
    groups = group_semantics(scene.objects)
    prompt = Prompt(scene.prompt)
    if semantic:
        prompt = edit_prompt(prompt, groups)
    tokens = list(prompt.words)
    if not tokens:
        raise ValueError("prompt has no tokens")
    boxes = scene.boxes()
    T = cfg.steps

    z = denoiser.initial_latent(tokens, cfg.latent_shape, cfg.seed)
    snapshots = {T: z.copy()}
    stacks: dict[int, AttentionStack] = {}
    match = default_match(groups, prompt)
    stage_log: dict = {
        "prompt": scene.prompt,
        "edited_prompt": prompt.raw_text,
        "tokens": tokens,
        "config": config_summary(cfg),
        "initial_mapping": _match_log(match, tokens),
    }
    stack = None
    for t in range(T, cfg.t_geo, -1):
        z, stack = _advance(z, t, match, groups, boxes, tokens, cfg, denoiser)
        if t - 1 == cfg.t_match:
            if semantic:
                match = match_all(groups, prompt, normalize_stack(stack), cfg.match, embeddings)
                stage_log["match"] = _match_log(match, tokens)
                stage_log["activation_ratios"] = list(match.ratios)
            snapshots[cfg.t_match], stacks[cfg.t_match] = z.copy(), stack
    return dict(z=z, stack=stack, prompt=prompt, tokens=tokens, groups=groups, boxes=boxes,
                match=match, snapshots=snapshots, stacks=stacks, log=stage_log)


def _advance(z, t, match, groups, boxes, tokens, cfg, denoiser):
    if cfg.guidance.enabled and cfg.guidance.multiplier(t, cfg.steps) > 0:
        targets = category_targets(match.indices, groups, boxes, cfg.attn_res, cfg.guidance.k)
        z = guidance_step(z, gradient_provider(denoiser, tokens, targets), cfg.guidance, t, cfg.steps)
    return denoiser.step(z, t, tokens, cfg.guidance_scale)


def _finish(prefix, scene, cfg, flags, denoiser) -> GenerationResult:
    z, stack = prefix["z"].copy(), prefix["stack"]
    tokens, groups, boxes, match = prefix["tokens"], prefix["groups"], prefix["boxes"], prefix["match"]
    snapshots = {k: v.copy() for k, v in prefix["snapshots"].items()}
    stacks = dict(prefix["stacks"])
    stage_log = copy.deepcopy(prefix["log"])
    stage_log["flags"] = {"semantic": flags.semantic_enabled, "geometric": flags.geometric_enabled}
    rois = None
    if flags.geometric_enabled:
        z, rois = _geometric_stage(z, stack, scene, groups, match, cfg, denoiser, tokens)
        stage_log["geometric"] = _roi_log(rois)
    snapshots[cfg.t_geo], stacks[cfg.t_geo] = z.copy(), stack
    for t in range(cfg.t_geo, 0, -1):
        z, stack = _advance(z, t, match, groups, boxes, tokens, cfg, denoiser)
    if hasattr(denoiser, "attention_stack"):
        stack = denoiser.attention_stack(z, tokens)
    snapshots[0], stacks[0] = z.copy(), stack
    image = decode(z, denoiser, tokens)
    return GenerationResult(z, image, prefix["prompt"], match, rois, snapshots, stacks, stage_log, flags, cfg)


def decode(z0, denoiser, tokens) -> np.ndarray:
    if not hasattr(denoiser, "decode"):
        raise TypeError(f"{type(denoiser).__name__} has no decode capability")
    return denoiser.decode(z0, tokens)
