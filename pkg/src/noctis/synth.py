"""Deterministic synthetic benchmark generator.

Builds a template library, one proposal scene with planted object
identities, and the matching ground truth, all driven by a single seed.
Planted proposals reuse a template descriptor perturbed by additive
noise and renormalized per vector; distractors get fresh random
descriptors and no ground-truth entry.  Proposal masks are disjoint
rectangles laid out on a grid, so a perfect matcher scores AP 1.0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .descriptors import (
    ObjectTemplates,
    PatchGridDescriptor,
    ProposalRecord,
    SceneProposals,
    TemplateLibrary,
    write_scene_proposals,
    write_template_library,
)
from .masks import rle_encode

TEMPLATES_SUBDIR = "templates"
PROPOSALS_SUBDIR = "proposals"
GT_FILENAME = "gt.json"

IMAGE_W = 640
IMAGE_H = 480
SCENE_ID = 1
IMAGE_ID = 1


@dataclass
class SynthConfig:
    seed: int = 2025
    n_objects: int = 5
    n_templates: int = 7
    n_proposals: int = 20
    embed_dim: int = 1024
    grid: int = 16
    noise_sigma: float = 0.0
    distractor_fraction: float = 0.0

    def __post_init__(self):
        if min(self.n_objects, self.n_templates, self.n_proposals) < 1:
            raise ValueError("object, template and proposal counts must be >= 1")
        if self.embed_dim < 1 or self.grid < 2:
            raise ValueError("embed_dim must be >= 1 and grid >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.distractor_fraction <= 1.0:
            raise ValueError("distractor_fraction must be in [0, 1]")


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _connected_valid_mask(rng: np.random.Generator, grid: int) -> np.ndarray:
    """Random connected blob covering at least 25% of the grid."""
    target = int(rng.integers(math.ceil(0.25 * grid * grid), grid * grid + 1))
    mask = np.zeros((grid, grid), dtype=bool)
    start = (int(rng.integers(grid)), int(rng.integers(grid)))
    mask[start] = True
    frontier = [start]
    while mask.sum() < target and frontier:
        idx = int(rng.integers(len(frontier)))
        r, c = frontier[idx]
        neighbors = [
            (nr, nc)
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1))
            if 0 <= nr < grid and 0 <= nc < grid and not mask[nr, nc]
        ]
        if not neighbors:
            frontier.pop(idx)
            continue
        nxt = neighbors[int(rng.integers(len(neighbors)))]
        mask[nxt] = True
        frontier.append(nxt)
    return mask


def _random_descriptor(rng: np.random.Generator, cfg: SynthConfig) -> PatchGridDescriptor:
    valid = _connected_valid_mask(rng, cfg.grid)
    patches = np.zeros((cfg.grid, cfg.grid, cfg.embed_dim), dtype=np.float32)
    for r, c in np.argwhere(valid):
        patches[r, c] = _unit_vector(rng, cfg.embed_dim)
    return PatchGridDescriptor(
        cls=_unit_vector(rng, cfg.embed_dim), patches=patches, valid=valid
    )


def _perturbed_descriptor(
    rng: np.random.Generator, base: PatchGridDescriptor, sigma: float
) -> PatchGridDescriptor:
    if sigma == 0.0:
        return PatchGridDescriptor(
            cls=base.cls.copy(), patches=base.patches.copy(), valid=base.valid.copy()
        )

    def jitter(v: np.ndarray) -> np.ndarray:
        out = v.astype(np.float64) + sigma * rng.standard_normal(v.shape[0])
        return out / np.linalg.norm(out)

    patches = np.zeros_like(base.patches)
    for r, c in np.argwhere(base.valid):
        patches[r, c] = jitter(base.patches[r, c])
    return PatchGridDescriptor(cls=jitter(base.cls), patches=patches, valid=base.valid.copy())


def _layout_rectangles(rng: np.random.Generator, n: int) -> list[tuple[int, int, int, int]]:
    """Disjoint (x, y, w, h) rectangles on a cell grid covering the image."""
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    cell_w = IMAGE_W // cols
    cell_h = IMAGE_H // rows
    rects = []
    for i in range(n):
        r, c = divmod(i, cols)
        margin_w = max(2, cell_w // 6)
        margin_h = max(2, cell_h // 6)
        x0 = c * cell_w + margin_w + int(rng.integers(max(1, margin_w // 2)))
        y0 = r * cell_h + margin_h + int(rng.integers(max(1, margin_h // 2)))
        w = cell_w - 2 * margin_w - int(rng.integers(max(1, margin_w // 2)))
        h = cell_h - 2 * margin_h - int(rng.integers(max(1, margin_h // 2)))
        rects.append((x0, y0, max(w, 4), max(h, 4)))
    return rects


def _rect_mask(rect: tuple[int, int, int, int]) -> np.ndarray:
    x, y, w, h = rect
    m = np.zeros((IMAGE_H, IMAGE_W), dtype=bool)
    m[y : y + h, x : x + w] = True
    return m


def generate_benchmark(cfg: SynthConfig, out) -> None:
    """Write templates, one proposal scene and ground truth under ``out``."""
    rng = np.random.default_rng(cfg.seed)
    out = Path(out)

    objects = []
    for object_id in range(1, cfg.n_objects + 1):
        templates = [_random_descriptor(rng, cfg) for _ in range(cfg.n_templates)]
        objects.append(ObjectTemplates(object_id=object_id, templates=templates))
    lib = TemplateLibrary(objects)

    n = cfg.n_proposals
    n_distractors = int(round(cfg.distractor_fraction * n))
    distractor_idx = set(
        int(i) for i in rng.choice(n, size=n_distractors, replace=False)
    )
    rects = _layout_rectangles(rng, n)

    proposals = []
    gt_entries = []
    for i in range(n):
        rect = rects[i]
        mask = rle_encode(_rect_mask(rect))
        if i in distractor_idx:
            desc = _random_descriptor(rng, cfg)
            box_conf = float(rng.uniform(0.3, 0.9))
            mask_conf = float(rng.uniform(0.3, 0.9))
        else:
            k = int(rng.integers(cfg.n_objects)) + 1
            t = int(rng.integers(cfg.n_templates))
            desc = _perturbed_descriptor(rng, lib.objects[k - 1].templates[t], cfg.noise_sigma)
            box_conf = float(rng.uniform(0.85, 1.0))
            mask_conf = float(rng.uniform(0.85, 1.0))
            gt_entries.append(
                {
                    "scene_id": SCENE_ID,
                    "image_id": IMAGE_ID,
                    "object_id": k,
                    "mask": {"size": list(mask.size), "counts": list(mask.counts)},
                    "ignore": False,
                }
            )
        proposals.append(
            ProposalRecord(
                bbox=rect, mask=mask, box_conf=box_conf, mask_conf=mask_conf, descriptor=desc
            )
        )

    scene = SceneProposals(
        scene_id=SCENE_ID, image_id=IMAGE_ID, image_size=(IMAGE_W, IMAGE_H), proposals=proposals
    )
    write_template_library(lib, out / TEMPLATES_SUBDIR)
    write_scene_proposals(scene, out / PROPOSALS_SUBDIR)
    (out / GT_FILENAME).write_text(json.dumps(gt_entries, indent=2) + "\n")
