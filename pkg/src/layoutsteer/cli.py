"""Command-line entry point.

Exit codes: 0 success, 2 bad input (scene or points file, arguments),
3 failure inside the pipeline.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .blobworld import BlobWorld
from .evaluation import lexicon_embedding, run_benchmark, synth_scenes
from .geometry import RefillConfig, convex_hull, rasterize_hull
from .grid import normalize_stack, resize_bilinear
from .guidance import GuidanceConfig
from .output import summary_line, write_bundle, write_pgm
from .pipeline import ABLATION_ROWS, AblationFlags, ScheduleConfig, generate
from .scene import SceneFormatError, boxes_from_keypoints, load_scene

EXIT_OK, EXIT_INPUT, EXIT_PIPELINE = 0, 2, 3
OUT_ENV = "LAYOUTSTEER_OUT"

PUBLISHED_DEFAULTS = (("steps", 50), ("guidance_scale", 7.5), ("attn_res", 16), ("t_match", 40), ("t_geo", 25))

log = logging.getLogger("layoutsteer")


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _schedule_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("schedule")
    g.add_argument("--steps", type=_positive_int, default=50)
    g.add_argument("--guidance-scale", type=_positive_float, default=7.5)
    g.add_argument("--attn-res", type=_positive_int, default=16)
    g.add_argument("--t-match", type=_positive_int, default=40)
    g.add_argument("--t-geo", type=_positive_int, default=25)
    g.add_argument("--lambda", dest="lam", type=float, default=0.45, help="RoI threshold on normalized attention")
    g.add_argument("--eta", type=_positive_float, default=0.3, help="guidance step size")
    g.add_argument("--topk", type=_positive_int, default=None, help="k of the box loss (default 10%% of box area)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--no-semantic", action="store_true")
    g.add_argument("--no-geometric", action="store_true")
    g.add_argument("--no-refill", action="store_true")
    g.add_argument("--no-guidance", action="store_true")
    p.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV}/<command>)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layoutsteer", description="Layout-controlled generation on a toy denoiser.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate one scene and write its bundle")
    p.add_argument("scene", type=Path)
    _schedule_args(p)

    for name, text in (("eval", "stage combinations allowed by the --no-* flags"), ("ablate", "all four stage combinations")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--scenes", type=Path, default=None, help="scene file or directory of *.json scenes")
        p.add_argument("--count", type=_positive_int, default=200, help="synthetic scenes when --scenes is absent")
        p.add_argument("--bundles", type=int, default=2, help="scenes written as full bundles")
        _schedule_args(p)

    p = sub.add_parser("hull-debug", help="convex hull of a points file")
    p.add_argument("points", type=Path)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("inspect-attention", help="write normalized attention maps of one generation")
    p.add_argument("scene", type=Path)
    p.add_argument("--at", type=int, default=None, help="snapshot timestep (default t_match)")
    _schedule_args(p)
    return parser


def schedule_from_args(a) -> ScheduleConfig:
    try:
        return ScheduleConfig(
            steps=a.steps,
            guidance_scale=a.guidance_scale,
            attn_res=a.attn_res,
            t_match=a.t_match,
            t_geo=a.t_geo,
            lam=a.lam,
            guidance=GuidanceConfig(eta=a.eta, k=a.topk, enabled=not a.no_guidance),
            refill=RefillConfig(mode="none" if a.no_refill else "diffusion"),
            seed=a.seed,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None


def flags_from_args(a) -> AblationFlags:
    return AblationFlags(not a.no_semantic, not a.no_geometric)


def _out_dir(a, command: str) -> Path:
    if a.out is not None:
        return a.out
    return Path(os.environ.get(OUT_ENV, "layoutsteer-out")) / command


def _print_defaults(cfg: ScheduleConfig) -> None:
    parts = []
    for name, value in PUBLISHED_DEFAULTS:
        cur = getattr(cfg, name)
        parts.append(f"{name}={value}" + ("" if cur == value else f" (overridden: {cur})"))
    print("defaults (published settings): " + ", ".join(parts), file=sys.stderr)


def _load(path: Path):
    try:
        return boxes_from_keypoints(load_scene(path))
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except (SceneFormatError, OSError) as exc:
        raise InputError(str(exc)) from None


def _denoiser(cfg: ScheduleConfig) -> BlobWorld:
    return BlobWorld(total_steps=cfg.steps, attn_res=cfg.attn_res)


def _check_grid(cfg: ScheduleConfig) -> None:
    if cfg.latent_h % cfg.attn_res or cfg.latent_w % cfg.attn_res:
        raise InputError(f"--attn-res {cfg.attn_res} must divide the {cfg.latent_h}x{cfg.latent_w} latent")


def cmd_generate(a) -> int:
    cfg = schedule_from_args(a)
    _check_grid(cfg)
    scene = _load(a.scene)
    _print_defaults(cfg)
    result = generate(scene, cfg, flags_from_args(a), _denoiser(cfg), lexicon_embedding())
    out = write_bundle(result, _out_dir(a, "generate"), scene)
    print(f"wrote {out}")
    return EXIT_OK


def _scenes(a):
    if a.scenes is None:
        return synth_scenes(a.seed, a.count), f"synthetic seed={a.seed} count={a.count}"
    if a.scenes.is_dir():
        paths = sorted(a.scenes.glob("*.json"))
        if not paths:
            raise InputError(f"{a.scenes}: no *.json scene files")
    else:
        paths = [a.scenes]
    return [_load(p) for p in paths], str(a.scenes)


def _bench(a, command: str, rows) -> int:
    cfg = schedule_from_args(a)
    _check_grid(cfg)
    scenes, label = _scenes(a)
    _print_defaults(cfg)
    out = _out_dir(a, command)
    _, report = run_benchmark(
        scenes, cfg, _denoiser(cfg), out, rows, lexicon_embedding(), bundles=a.bundles, scenes_label=label
    )
    for entry in report["rows"]:
        print(summary_line(entry))
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def cmd_eval(a) -> int:
    """Ablation rows allowed by the stage flags: ``--no-geometric`` drops the
    rows that enable the geometric stage, and likewise for semantic."""
    allowed = flags_from_args(a)
    rows = tuple(
        f
        for f in ABLATION_ROWS
        if (allowed.semantic_enabled or not f.semantic_enabled)
        and (allowed.geometric_enabled or not f.geometric_enabled)
    )
    return _bench(a, "eval", rows)


def cmd_ablate(a) -> int:
    return _bench(a, "ablate", ABLATION_ROWS)


def read_points(path: Path) -> np.ndarray:
    """Integer pairs, one per line; blank lines and ``#`` comments are skipped."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    pts = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise InputError(f"{path}: line {n}: expected two integers")
        try:
            pts.append((int(fields[0]), int(fields[1])))
        except ValueError:
            raise InputError(f"{path}: line {n}: expected two integers") from None
    if not pts:
        raise InputError(f"{path}: no points")
    return np.array(pts, dtype=np.int64)


def cmd_hull_debug(a) -> int:
    pts = read_points(a.points)
    if pts.min() < 0:
        raise InputError(f"{a.points}: coordinates must be non-negative")
    hull = convex_hull(pts)
    for v in hull.vertices:
        print(f"{v.x} {v.y}")
    h, w = int(pts[:, 0].max()) + 1, int(pts[:, 1].max()) + 1
    img = np.where(rasterize_hull(hull, h, w), 128, 0).astype(np.uint8)
    img[pts[:, 0], pts[:, 1]] = 200
    for v in hull.vertices:
        img[v.x, v.y] = 255
    out = _out_dir(a, "hull-debug")
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "hull.pgm", img)
    return EXIT_OK


def cmd_inspect_attention(a) -> int:
    cfg = schedule_from_args(a)
    _check_grid(cfg)
    scene = _load(a.scene)
    _print_defaults(cfg)
    result = generate(scene, cfg, flags_from_args(a), _denoiser(cfg), lexicon_embedding())
    at = cfg.t_match if a.at is None else a.at
    if at not in result.stacks:
        raise InputError(f"--at {at}: snapshots exist for t in {sorted(result.stacks)}")
    maps = resize_bilinear(normalize_stack(result.stacks[at]), cfg.latent_h, cfg.latent_w)
    out = _out_dir(a, "inspect-attention")
    out.mkdir(parents=True, exist_ok=True)
    for j, word in enumerate(result.tokens):
        write_pgm(out / f"t{at:02d}_{j:02d}_{word}.pgm", maps.layer(j))
        print(f"{j:2d} {word}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "hull-debug": cmd_hull_debug,
    "inspect-attention": cmd_inspect_attention,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[a.command](a)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - every other failure is a pipeline error
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
