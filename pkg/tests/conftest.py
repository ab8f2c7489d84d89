"""Shared builders for randomized descriptors, libraries and scenes."""

import numpy as np

from noctis.descriptors import (
    ObjectTemplates,
    PatchGridDescriptor,
    ProposalRecord,
    SceneProposals,
    TemplateLibrary,
)
from noctis.masks import rle_encode


def random_descriptor(rng, dim, grid, max_valid=None) -> PatchGridDescriptor:
    total = grid * grid
    upper = total if max_valid is None else min(max_valid, total)
    n_valid = int(rng.integers(1, upper + 1))
    flat_valid = np.zeros(total, dtype=bool)
    flat_valid[rng.choice(total, size=n_valid, replace=False)] = True
    valid = flat_valid.reshape(grid, grid)
    patches = np.zeros((grid, grid, dim), dtype=np.float32)
    patches[valid] = rng.standard_normal((n_valid, dim))
    return PatchGridDescriptor(cls=rng.standard_normal(dim), patches=patches, valid=valid)


def random_library(rng, n_objects, max_templates, dim, grid, max_valid=None) -> TemplateLibrary:
    objects = []
    for object_id in range(1, n_objects + 1):
        n_t = int(rng.integers(1, max_templates + 1))
        templates = [random_descriptor(rng, dim, grid, max_valid) for _ in range(n_t)]
        objects.append(ObjectTemplates(object_id=object_id, templates=templates))
    return TemplateLibrary(objects)


def make_proposal(descriptor, image_size=(32, 32), box_conf=1.0, mask_conf=1.0) -> ProposalRecord:
    w, h = image_size
    mask = np.zeros((h, w), dtype=bool)
    mask[1 : h - 1, 1 : w - 1] = True
    return ProposalRecord(
        bbox=(1, 1, w - 2, h - 2),
        mask=rle_encode(mask),
        box_conf=box_conf,
        mask_conf=mask_conf,
        descriptor=descriptor,
    )


def random_scene(rng, n_proposals, dim, grid, max_valid=None, scene_id=0, image_id=0) -> SceneProposals:
    proposals = [
        make_proposal(
            random_descriptor(rng, dim, grid, max_valid),
            box_conf=float(rng.uniform(0.0, 1.0)),
            mask_conf=float(rng.uniform(0.0, 1.0)),
        )
        for _ in range(n_proposals)
    ]
    return SceneProposals(
        scene_id=scene_id, image_id=image_id, image_size=(32, 32), proposals=proposals
    )
