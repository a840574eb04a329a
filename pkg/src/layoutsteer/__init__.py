"""Training-free layout control for a denoiser: prompt editing, attention
map matching, latent relocation with refill, and box-constrained attention
guidance, plus a procedural denoiser and an evaluation harness."""
from ._kernels import BACKEND as KERNEL_BACKEND
from .blobworld import BlobWorld, BlobWorldConfig
from .evaluation import (
    DetectedObject,
    DistanceDistribution,
    LayoutReport,
    detect,
    distance_distribution,
    iou,
    layout_score,
    run_ablation,
    run_benchmark,
    synth_scenes,
)
from .geometry import HullPolygon, RefillConfig, convex_hull, identify_roi, relocate_latents, run_refill
from .grid import AttentionStack, EmptyRoIError, GridPoint, NormBox
from .guidance import GuidanceConfig, category_loss, guidance_step, total_loss
from .matching import HashEmbedding, MatchConfig, TableEmbedding, match_category
from .pipeline import ABLATION_ROWS, AblationFlags, GenerationResult, ScheduleConfig, generate
from .scene import (
    Keypoint,
    ObjectCondition,
    Prompt,
    Scene,
    SceneFormatError,
    SizeTable,
    edit_prompt,
    group_semantics,
    keypoint_to_box,
    load_scene,
)

__version__ = "0.1.0"

__all__ = [
    "ABLATION_ROWS", "AblationFlags", "AttentionStack", "BlobWorld", "BlobWorldConfig",
    "DetectedObject", "DistanceDistribution", "EmptyRoIError", "GenerationResult", "GridPoint",
    "GuidanceConfig", "HashEmbedding", "HullPolygon", "KERNEL_BACKEND", "Keypoint", "LayoutReport",
    "MatchConfig", "NormBox", "ObjectCondition", "Prompt", "RefillConfig", "Scene",
    "SceneFormatError", "ScheduleConfig", "SizeTable", "TableEmbedding", "category_loss",
    "convex_hull", "detect", "distance_distribution", "edit_prompt", "generate", "group_semantics",
    "guidance_step", "identify_roi", "iou", "keypoint_to_box", "layout_score", "load_scene",
    "match_category", "relocate_latents", "run_ablation", "run_benchmark", "run_refill",
    "synth_scenes", "total_loss",
]
