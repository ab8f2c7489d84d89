"""Command line for descriptor extraction.

Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import sys

from .jobs import ExtractionJob, extract_proposals, extract_templates


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="input image directory")
    p.add_argument("--out", required=True, help="output container directory")
    p.add_argument("--embedder", default="dinov2", help="dinov2 or patchstat")
    p.add_argument("--checkpoint-embedder", default="ViT-L", dest="embedder_checkpoint")
    p.add_argument("--valid-coverage", type=float, default=0.5, dest="valid_coverage")
    p.add_argument("--device", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noctis-extract", description="Produce descriptor containers from images"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("extract-templates", help="embed per-object template views")
    _common_flags(t)

    p = sub.add_parser("extract-proposals", help="propose and embed query-image instances")
    _common_flags(p)
    p.add_argument("--proposer", default="grounded-sam2", help="grounded-sam2 or region")
    p.add_argument("--prompt", default="objects")
    p.add_argument("--checkpoint-grounding", default="Swin-B", dest="grounding_checkpoint")
    p.add_argument("--checkpoint-segmenter", default="sam2.1-L", dest="segmenter_checkpoint")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExtractionJob(
        input_dir=args.input,
        output_dir=args.out,
        embedder=args.embedder,
        embedder_checkpoint=args.embedder_checkpoint,
        valid_coverage=args.valid_coverage,
        device=args.device,
        proposer=getattr(args, "proposer", "grounded-sam2"),
        prompt=getattr(args, "prompt", "objects"),
        grounding_checkpoint=getattr(args, "grounding_checkpoint", "Swin-B"),
        segmenter_checkpoint=getattr(args, "segmenter_checkpoint", "sam2.1-L"),
    )
    try:
        if args.command == "extract-templates":
            out = extract_templates(job)
            print(f"templates written to {out}")
        else:
            written = extract_proposals(job)
            print(f"{len(written)} proposal containers written under {job.output_dir}")
        return 0
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
