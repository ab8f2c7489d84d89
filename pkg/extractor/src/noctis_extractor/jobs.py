"""Extraction jobs: turn images into noctis-desc/1 descriptor containers.

Template input layout: one ``obj_<id>`` directory per object holding an
``rgb/`` and a ``mask/`` folder with identically named view images.
Proposal input: a directory of query images; names like
``scene<S>_im<I>.png`` carry their ids, anything else is enumerated.

Containers are written straight to the published schema (manifest.json
plus ``.cls.f32`` / ``.patch.f32`` / ``.valid.u8`` blobs) so any
consumer of that format can read them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .backends import EMBED_DIM, make_embedder, make_proposer
from .preprocess import GRID, patch_validity, preprocess_crop

FORMAT_TAG = "noctis-desc/1"
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}
_SCENE_RE = re.compile(r"scene(\d+)_im(\d+)")


@dataclass
class ExtractionJob:
    input_dir: str
    output_dir: str
    embedder: str = "dinov2"
    proposer: str = "grounded-sam2"
    embedder_checkpoint: str = "ViT-L"
    grounding_checkpoint: str = "Swin-B"
    segmenter_checkpoint: str = "sam2.1-L"
    prompt: str = "objects"
    valid_coverage: float = 0.5
    device: str | None = None
    extra: dict = field(default_factory=dict)


def _load_image(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def _load_mask(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) > 127


def _make_embedder(job: ExtractionJob):
    kwargs = {}
    if job.embedder == "dinov2":
        kwargs = {"checkpoint": job.embedder_checkpoint, "device": job.device}
    return make_embedder(job.embedder, **kwargs)


def _make_proposer(job: ExtractionJob):
    kwargs = {}
    if job.proposer == "grounded-sam2":
        kwargs = {
            "prompt": job.prompt,
            "grounding_checkpoint": job.grounding_checkpoint,
            "segmenter_checkpoint": job.segmenter_checkpoint,
            "device": job.device,
        }
    return make_proposer(job.proposer, **kwargs)


def _descriptor_blobs(embedder, image, mask, coverage):
    """cls, patches (zeroed where invalid) and validity for one instance."""
    crop, crop_mask = preprocess_crop(image, mask)
    valid = patch_validity(crop_mask, coverage)
    cls, patches = embedder.embed(crop)
    patches = patches.copy()
    patches[~valid] = 0.0
    return cls, patches, valid


def _write_blobs(root: Path, stem: str, cls, patches, valid) -> dict:
    (root / stem).parent.mkdir(parents=True, exist_ok=True)
    (root / f"{stem}.cls.f32").write_bytes(np.ascontiguousarray(cls, dtype="<f4").tobytes())
    (root / f"{stem}.patch.f32").write_bytes(
        np.ascontiguousarray(patches, dtype="<f4").tobytes()
    )
    (root / f"{stem}.valid.u8").write_bytes(
        np.ascontiguousarray(valid, dtype=np.uint8).tobytes()
    )
    return {"cls": f"{stem}.cls.f32", "patch": f"{stem}.patch.f32", "valid": f"{stem}.valid.u8"}


def _rle_counts(mask: np.ndarray) -> list[int]:
    flat = mask.reshape(-1, order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = [int(c) for c in np.diff(bounds)]
    return [0] + counts if flat[0] else counts


def extract_templates(job: ExtractionJob) -> Path:
    """Embed every template view of every object; returns the container path."""
    in_dir = Path(job.input_dir)
    obj_dirs = sorted(d for d in in_dir.iterdir() if d.is_dir() and d.name.startswith("obj_"))
    if not obj_dirs:
        raise ValueError(f"no obj_* directories under {in_dir}")
    embedder = _make_embedder(job)
    out = Path(job.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    objects = []
    for obj_dir in obj_dirs:
        object_id = int(obj_dir.name.split("_", 1)[1])
        views = sorted(
            p for p in (obj_dir / "rgb").iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not views:
            raise ValueError(f"no template views under {obj_dir / 'rgb'}")
        refs = []
        for i, view in enumerate(views):
            mask_path = obj_dir / "mask" / view.name
            if not mask_path.is_file():
                raise FileNotFoundError(f"no mask for template view: {mask_path}")
            cls, patches, valid = _descriptor_blobs(
                embedder, _load_image(view), _load_mask(mask_path), job.valid_coverage
            )
            refs.append(_write_blobs(out, f"obj_{object_id:06d}/t{i:03d}", cls, patches, valid))
        objects.append({"object_id": object_id, "templates": refs})
    manifest = {
        "format": FORMAT_TAG,
        "embed_dim": EMBED_DIM,
        "grid": [GRID, GRID],
        "objects": objects,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def _scene_ids(stem: str, index: int) -> tuple[int, int]:
    match = _SCENE_RE.search(stem)
    if match:
        return int(match.group(1)), int(match.group(2))
    return 0, index


def extract_proposals(job: ExtractionJob) -> list[Path]:
    """Propose and embed instances per query image; one container each."""
    in_dir = Path(job.input_dir)
    images = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        raise ValueError(f"no images under {in_dir}")
    proposer = _make_proposer(job)
    embedder = _make_embedder(job)
    out_root = Path(job.output_dir)
    written = []
    for index, path in enumerate(images):
        image = _load_image(path)
        h, w = image.shape[:2]
        scene_id, image_id = _scene_ids(path.stem, index)
        out = out_root / path.stem
        out.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, prop in enumerate(proposer.propose(image)):
            cls, patches, valid = _descriptor_blobs(
                embedder, image, prop["mask"], job.valid_coverage
            )
            refs = _write_blobs(out, f"p{i:04d}", cls, patches, valid)
            entries.append(
                {
                    "bbox": [int(v) for v in prop["bbox"]],
                    "mask": {"size": [h, w], "counts": _rle_counts(prop["mask"])},
                    "box_conf": float(prop["box_conf"]),
                    "mask_conf": float(prop["mask_conf"]),
                    **refs,
                }
            )
        manifest = {
            "format": FORMAT_TAG,
            "embed_dim": EMBED_DIM,
            "grid": [GRID, GRID],
            "scene_id": scene_id,
            "image_id": image_id,
            "image_size": [w, h],
            "proposals": entries,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        written.append(out)
    return written
