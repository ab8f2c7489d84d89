"""Command-line surface: match, eval, gen-synth, inspect.

Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure
(missing paths, unreadable or unwritable files).  Diagnostics go to
stderr; ``eval`` prints its report JSON to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .assignment import AssignmentConfig, DetectionResult, run_matching
from .descriptors import (
    ContainerError,
    SceneProposals,
    read_scene_proposals,
    read_template_library,
)
from .evaluation import evaluate_dataset
from .scoring import ScoreConfig
from .synth import SynthConfig, generate_benchmark

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


def _score_config(args) -> ScoreConfig:
    return ScoreConfig(
        delta_ct=args.delta_ct,
        w_appe=args.w_appe,
        clamp_weighted_appearance=not args.no_clamp,
        semantic_top_k=args.top_k,
        batch_proposals=args.batch_proposals,
        batch_objects=args.batch_objects,
    )


def _assignment_config(args) -> AssignmentConfig:
    return AssignmentConfig(
        min_proposal_conf=args.min_prop_conf,
        min_relative_area=args.min_rel_area,
        conf_threshold=args.conf_thresh,
        nms_iou=args.nms_iou,
    )


def _discover_scene_dirs(path: Path) -> list[Path]:
    if not path.is_dir():
        raise FileNotFoundError(f"no such directory: {path}")
    if (path / "manifest.json").is_file():
        return [path]
    dirs = sorted(d for d in path.iterdir() if (d / "manifest.json").is_file())
    if not dirs:
        raise ContainerError(f"no proposal containers under {path}")
    return dirs


def _detection_record(det: DetectionResult) -> dict:
    return {
        "scene_id": det.scene_id,
        "image_id": det.image_id,
        "category_id": det.object_id,
        "score": det.score,
        "bbox": [float(v) if isinstance(v, float) else int(v) for v in det.bbox],
        "segmentation": {"size": list(det.mask.size), "counts": list(det.mask.counts)},
        "time": -1.0,
    }


def cmd_match(args) -> int:
    lib = read_template_library(args.templates)
    score_cfg = _score_config(args)
    assign_cfg = _assignment_config(args)
    scene_dirs = _discover_scene_dirs(Path(args.proposals))
    scenes = [read_scene_proposals(d) for d in scene_dirs]

    def process(scene: SceneProposals):
        start = time.monotonic()
        dets = run_matching(scene, lib, score_cfg, assign_cfg)
        return dets, time.monotonic() - start

    jobs = max(1, args.jobs)
    if jobs == 1 or len(scenes) <= 1:
        outputs = [process(s) for s in scenes]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(process, scenes))

    detections: list[DetectionResult] = []
    for scene, (dets, elapsed) in zip(scenes, outputs):
        detections.extend(dets)
        print(
            f"scene {scene.scene_id} image {scene.image_id}: "
            f"{len(scene.proposals)} proposals -> {len(dets)} detections "
            f"in {elapsed:.3f}s"
        )
    detections.sort(key=lambda d: (d.scene_id, d.image_id, d.proposal_index))
    payload = json.dumps(
        [_detection_record(d) for d in detections], separators=(",", ":")
    )
    Path(args.out).write_text(payload)
    return EXIT_OK


def cmd_eval(args) -> int:
    for path in (args.results, args.gt):
        if not Path(path).is_file():
            raise FileNotFoundError(f"no such file: {path}")
    report = evaluate_dataset(args.results, args.gt)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed,
        n_objects=args.objects,
        n_templates=args.templates,
        n_proposals=args.proposals,
        embed_dim=args.embed_dim,
        grid=args.grid,
        noise_sigma=args.noise_sigma,
        distractor_fraction=args.distractor_fraction,
    )
    generate_benchmark(cfg, args.out)
    print(f"benchmark written to {args.out}")
    return EXIT_OK


def _inspect_library(path: Path) -> None:
    lib = read_template_library(path)
    n_templates = [len(o.templates) for o in lib.objects]
    valid_counts = [t.n_valid for o in lib.objects for t in o.templates]
    print("kind: template library")
    print(f"embed_dim: {lib.embed_dim}")
    print(f"grid: {lib.grid_size}x{lib.grid_size}")
    print(f"objects: {len(lib.objects)}")
    print(f"templates: {sum(n_templates)} (per object: min {min(n_templates)}, max {max(n_templates)})")
    print(
        "valid patches per template: "
        f"min {min(valid_counts)}, mean {sum(valid_counts) / len(valid_counts):.1f}, "
        f"max {max(valid_counts)}"
    )


def _inspect_scene(path: Path) -> None:
    scene = read_scene_proposals(path)
    print("kind: scene proposals")
    print(f"scene_id: {scene.scene_id}")
    print(f"image_id: {scene.image_id}")
    print(f"image_size: {scene.image_size[0]}x{scene.image_size[1]}")
    print(f"proposals: {len(scene.proposals)}")
    if scene.proposals:
        print(f"embed_dim: {scene.embed_dim}")
        print(f"grid: {scene.grid_size}x{scene.grid_size}")
        confs = [(p.box_conf + p.mask_conf) / 2.0 for p in scene.proposals]
        valid_counts = [p.descriptor.n_valid for p in scene.proposals]
        print(f"confidence: min {min(confs):.3f}, max {max(confs):.3f}")
        print(
            "valid patches per proposal: "
            f"min {min(valid_counts)}, mean {sum(valid_counts) / len(valid_counts):.1f}, "
            f"max {max(valid_counts)}"
        )


def cmd_inspect(args) -> int:
    path = Path(args.container)
    mf = path / "manifest.json"
    if not mf.is_file():
        raise FileNotFoundError(f"no manifest.json under {path}")
    data = json.loads(mf.read_text())
    if "objects" in data:
        _inspect_library(path)
    elif "proposals" in data:
        _inspect_scene(path)
    else:
        raise ContainerError("manifest has neither objects nor proposals")
    return EXIT_OK


def _nonnegative_float(text: str) -> float:
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noctis", description="Template-based instance matching and evaluation"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("match", help="match proposal scenes against a template library")
    m.add_argument("--templates", required=True, help="template container directory")
    m.add_argument("--proposals", required=True, help="scene container or directory of containers")
    m.add_argument("--out", required=True, help="result JSON path")
    m.add_argument("--config", help="JSON file with default flag values")
    m.add_argument("--delta-ct", type=float, default=None, dest="delta_ct")
    m.add_argument("--w-appe", type=float, default=None, dest="w_appe")
    m.add_argument("--no-clamp", action="store_true", default=None)
    m.add_argument("--top-k", type=int, default=None, dest="top_k")
    m.add_argument("--conf-thresh", type=float, default=None, dest="conf_thresh")
    m.add_argument("--nms-iou", type=float, default=None, dest="nms_iou")
    m.add_argument("--min-prop-conf", type=float, default=None, dest="min_prop_conf")
    m.add_argument("--min-rel-area", type=float, default=None, dest="min_rel_area")
    m.add_argument("--batch-proposals", type=int, default=None, dest="batch_proposals")
    m.add_argument("--batch-objects", type=int, default=None, dest="batch_objects")
    m.add_argument("--jobs", type=int, default=None)
    m.set_defaults(func=cmd_match)

    e = sub.add_parser("eval", help="evaluate a result file against ground truth")
    e.add_argument("--results", required=True)
    e.add_argument("--gt", required=True)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen-synth", help="generate a synthetic benchmark")
    g.add_argument("--seed", type=int, default=2025)
    g.add_argument("--objects", type=int, default=5)
    g.add_argument("--templates", type=int, default=7)
    g.add_argument("--proposals", type=int, default=20)
    g.add_argument("--embed-dim", type=int, default=1024, dest="embed_dim")
    g.add_argument("--grid", type=int, default=16)
    g.add_argument("--noise-sigma", type=_nonnegative_float, default=0.0, dest="noise_sigma")
    g.add_argument(
        "--distractor-fraction", type=float, default=0.0, dest="distractor_fraction"
    )
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)

    i = sub.add_parser("inspect", help="summarize a descriptor container")
    i.add_argument("container")
    i.set_defaults(func=cmd_inspect)
    return parser


_MATCH_DEFAULTS = {
    "delta_ct": 5.0,
    "w_appe": 2.0,
    "no_clamp": False,
    "top_k": 5,
    "conf_thresh": 0.2,
    "nms_iou": 0.5,
    "min_prop_conf": 0.15,
    "min_rel_area": 1e-4,
    "batch_proposals": 8,
    "batch_objects": 4,
    "jobs": os.cpu_count() or 1,
}


def _apply_config_file(args) -> None:
    """Fill unset match flags from --config, then from built-in defaults."""
    overrides = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"no such config file: {path}")
        overrides = json.loads(path.read_text())
        unknown = set(overrides) - set(_MATCH_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key, default in _MATCH_DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, overrides.get(key, default))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.func is cmd_match:
            _apply_config_file(args)
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ContainerError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
