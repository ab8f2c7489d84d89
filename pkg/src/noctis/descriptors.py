"""Descriptor data model and the on-disk container format.

A container is a directory with ``manifest.json`` plus raw blobs:
``*.cls.f32`` (D little-endian float32), ``*.patch.f32`` (G*G*D
little-endian float32, row-major grid, embedding contiguous) and
``*.valid.u8`` (G*G bytes, 0 or 1).  Containers are immutable once
written; reading re-validates every structural invariant so downstream
code can trust the arrays, and a write/read round trip is bit exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .masks import RleMask, validate_rle

FORMAT_TAG = "noctis-desc/1"
DEFAULT_EMBED_DIM = 1024
DEFAULT_GRID = 16


class ContainerError(ValueError):
    """Malformed or inconsistent descriptor container."""


@dataclass(eq=False)
class PatchGridDescriptor:
    """Class embedding plus a G x G grid of patch embeddings.

    ``patches[r, c]`` must be all zeros wherever ``valid[r, c]`` is
    False; only patches inside the instance mask carry information.
    """

    cls: np.ndarray
    patches: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.cls = np.ascontiguousarray(np.asarray(self.cls, dtype=np.float32))
        self.patches = np.ascontiguousarray(np.asarray(self.patches, dtype=np.float32))
        self.valid = np.ascontiguousarray(np.asarray(self.valid, dtype=bool))

    @property
    def embed_dim(self) -> int:
        return int(self.cls.shape[0])

    @property
    def grid_size(self) -> int:
        return int(self.valid.shape[0])

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def validate(self) -> None:
        if self.cls.ndim != 1 or self.cls.shape[0] < 1:
            raise ContainerError("cls embedding must be a non-empty vector")
        if self.valid.ndim != 2 or self.valid.shape[0] != self.valid.shape[1]:
            raise ContainerError("valid flags must form a square grid")
        g = self.valid.shape[0]
        d = self.cls.shape[0]
        if self.patches.shape != (g, g, d):
            raise ContainerError(
                f"patch grid shape {self.patches.shape} does not match grid {g} and dim {d}"
            )
        if not np.isfinite(self.cls).all() or not np.isfinite(self.patches).all():
            raise ContainerError("descriptor contains non-finite values")
        if not self.valid.any():
            raise ContainerError("descriptor has no valid patch")
        if np.any(self.patches[~self.valid]):
            raise ContainerError("invalid patch has nonzero embedding")


def descriptors_identical(a: PatchGridDescriptor, b: PatchGridDescriptor) -> bool:
    """Bit-exact equality of two descriptors."""
    return (
        a.cls.shape == b.cls.shape
        and a.patches.shape == b.patches.shape
        and np.array_equal(a.cls.view(np.uint32), b.cls.view(np.uint32))
        and np.array_equal(a.patches.view(np.uint32), b.patches.view(np.uint32))
        and np.array_equal(a.valid, b.valid)
    )


@dataclass(eq=False)
class ObjectTemplates:
    object_id: int
    templates: list[PatchGridDescriptor]


@dataclass(eq=False)
class TemplateLibrary:
    """All onboarded objects, each holding one descriptor per template view.

    Objects are kept sorted by ``object_id`` so that the in-memory form
    does not depend on manifest listing order.
    """

    objects: list[ObjectTemplates]

    def __post_init__(self):
        self.objects = sorted(self.objects, key=lambda o: o.object_id)

    @property
    def object_ids(self) -> list[int]:
        return [o.object_id for o in self.objects]

    @property
    def embed_dim(self) -> int:
        return self.objects[0].templates[0].embed_dim

    @property
    def grid_size(self) -> int:
        return self.objects[0].templates[0].grid_size

    def validate(self) -> None:
        if not self.objects:
            raise ContainerError("empty library")
        ids = self.object_ids
        if len(set(ids)) != len(ids):
            raise ContainerError("duplicate object_id")
        if any(i <= 0 for i in ids):
            raise ContainerError("object_id must be positive")
        d = g = None
        for obj in self.objects:
            if not obj.templates:
                raise ContainerError(f"object {obj.object_id} has no templates")
            for t in obj.templates:
                t.validate()
                if d is None:
                    d, g = t.embed_dim, t.grid_size
                elif (t.embed_dim, t.grid_size) != (d, g):
                    raise ContainerError("descriptors disagree on embed_dim or grid")


@dataclass(eq=False)
class ProposalRecord:
    """One object proposal: geometry, confidences and its descriptor."""

    bbox: tuple[float, float, float, float]
    mask: RleMask
    box_conf: float
    mask_conf: float
    descriptor: PatchGridDescriptor

    def __post_init__(self):
        self.bbox = tuple(self.bbox)


@dataclass(eq=False)
class SceneProposals:
    scene_id: int
    image_id: int
    image_size: tuple[int, int]  # (W, H)
    proposals: list[ProposalRecord]

    def __post_init__(self):
        self.image_size = tuple(self.image_size)

    @property
    def embed_dim(self) -> int:
        return self.proposals[0].descriptor.embed_dim

    @property
    def grid_size(self) -> int:
        return self.proposals[0].descriptor.grid_size

    def validate(self) -> None:
        if self.scene_id < 0 or self.image_id < 0:
            raise ContainerError("scene_id and image_id must be non-negative")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ContainerError("image_size must be positive")
        d = g = None
        for p in self.proposals:
            if not (0.0 <= p.box_conf <= 1.0 and 0.0 <= p.mask_conf <= 1.0):
                raise ContainerError("confidence outside [0, 1]")
            if tuple(p.mask.size) != (h, w):
                raise ContainerError("mask size does not match image size")
            try:
                validate_rle(p.mask)
            except ValueError as exc:
                raise ContainerError(str(exc)) from exc
            x, y, bw, bh = p.bbox
            if bw < 0 or bh < 0 or x < 0 or y < 0 or x + bw > w or y + bh > h:
                raise ContainerError("bbox outside image bounds")
            p.descriptor.validate()
            if d is None:
                d, g = p.descriptor.embed_dim, p.descriptor.grid_size
            elif (p.descriptor.embed_dim, p.descriptor.grid_size) != (d, g):
                raise ContainerError("descriptors disagree on embed_dim or grid")


# --- blob helpers ---------------------------------------------------------


def _write_f32(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _write_u8(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype=np.uint8).tobytes())


def _read_blob(root: Path, rel: str, expected_bytes: int) -> bytes:
    path = root / rel
    if not path.is_file():
        raise ContainerError(f"missing blob: {rel}")
    data = path.read_bytes()
    if len(data) != expected_bytes:
        raise ContainerError(
            f"blob length mismatch: {rel} has {len(data)} bytes, expected {expected_bytes}"
        )
    return data


def _read_descriptor(root: Path, ref: dict, d: int, g: int) -> PatchGridDescriptor:
    cls = np.frombuffer(_read_blob(root, ref["cls"], 4 * d), dtype="<f4").copy()
    patch = np.frombuffer(_read_blob(root, ref["patch"], 4 * g * g * d), dtype="<f4")
    valid_u8 = np.frombuffer(_read_blob(root, ref["valid"], g * g), dtype=np.uint8)
    if np.any(valid_u8 > 1):
        raise ContainerError(f"invalid validity byte in {ref['valid']}")
    desc = PatchGridDescriptor(
        cls=cls,
        patches=patch.reshape(g, g, d).copy(),
        valid=valid_u8.reshape(g, g).astype(bool),
    )
    try:
        desc.validate()
    except ContainerError as exc:
        raise ContainerError(f"{ref['cls']}: {exc}") from exc
    return desc


def _check_header(data: dict) -> tuple[int, int]:
    tag = data.get("format")
    if tag != FORMAT_TAG:
        raise ContainerError(f"unsupported version: {tag!r}")
    d = int(data["embed_dim"])
    grid = data["grid"]
    if len(grid) != 2 or grid[0] != grid[1]:
        raise ContainerError("non-square grid unsupported")
    return d, int(grid[0])


def _load_manifest(path) -> tuple[Path, dict]:
    root = Path(path)
    mf = root / "manifest.json"
    if not mf.is_file():
        raise FileNotFoundError(f"no manifest.json under {root}")
    try:
        data = json.loads(mf.read_text())
    except json.JSONDecodeError as exc:
        raise ContainerError(f"manifest is not valid JSON: {exc}") from exc
    return root, data


# --- template containers --------------------------------------------------


def write_template_library(lib: TemplateLibrary, path) -> None:
    lib.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for obj in lib.objects:
        sub = f"obj_{obj.object_id:06d}"
        (root / sub).mkdir(exist_ok=True)
        refs = []
        for i, t in enumerate(obj.templates):
            stem = f"{sub}/t{i:03d}"
            _write_f32(root / f"{stem}.cls.f32", t.cls)
            _write_f32(root / f"{stem}.patch.f32", t.patches)
            _write_u8(root / f"{stem}.valid.u8", t.valid)
            refs.append(
                {"cls": f"{stem}.cls.f32", "patch": f"{stem}.patch.f32", "valid": f"{stem}.valid.u8"}
            )
        entries.append({"object_id": obj.object_id, "templates": refs})
    manifest = {
        "format": FORMAT_TAG,
        "embed_dim": lib.embed_dim,
        "grid": [lib.grid_size, lib.grid_size],
        "objects": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def read_template_library(path) -> TemplateLibrary:
    root, data = _load_manifest(path)
    d, g = _check_header(data)
    objects = []
    for entry in data["objects"]:
        templates = [_read_descriptor(root, ref, d, g) for ref in entry["templates"]]
        objects.append(ObjectTemplates(object_id=int(entry["object_id"]), templates=templates))
    lib = TemplateLibrary(objects)
    lib.validate()
    return lib


# --- proposal containers --------------------------------------------------


def write_scene_proposals(scene: SceneProposals, path) -> None:
    scene.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    d = scene.embed_dim if scene.proposals else DEFAULT_EMBED_DIM
    g = scene.grid_size if scene.proposals else DEFAULT_GRID
    entries = []
    for i, p in enumerate(scene.proposals):
        stem = f"p{i:04d}"
        _write_f32(root / f"{stem}.cls.f32", p.descriptor.cls)
        _write_f32(root / f"{stem}.patch.f32", p.descriptor.patches)
        _write_u8(root / f"{stem}.valid.u8", p.descriptor.valid)
        entries.append(
            {
                "bbox": list(p.bbox),
                "mask": {"size": list(p.mask.size), "counts": list(p.mask.counts)},
                "box_conf": p.box_conf,
                "mask_conf": p.mask_conf,
                "cls": f"{stem}.cls.f32",
                "patch": f"{stem}.patch.f32",
                "valid": f"{stem}.valid.u8",
            }
        )
    manifest = {
        "format": FORMAT_TAG,
        "embed_dim": d,
        "grid": [g, g],
        "scene_id": scene.scene_id,
        "image_id": scene.image_id,
        "image_size": list(scene.image_size),
        "proposals": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def read_scene_proposals(path) -> SceneProposals:
    root, data = _load_manifest(path)
    d, g = _check_header(data)
    proposals = []
    for entry in data["proposals"]:
        desc = _read_descriptor(root, entry, d, g)
        mask = RleMask(
            size=tuple(int(v) for v in entry["mask"]["size"]),
            counts=[int(c) for c in entry["mask"]["counts"]],
        )
        proposals.append(
            ProposalRecord(
                bbox=tuple(entry["bbox"]),
                mask=mask,
                box_conf=float(entry["box_conf"]),
                mask_conf=float(entry["mask_conf"]),
                descriptor=desc,
            )
        )
    scene = SceneProposals(
        scene_id=int(data["scene_id"]),
        image_id=int(data["image_id"]),
        image_size=tuple(int(v) for v in data["image_size"]),
        proposals=proposals,
    )
    scene.validate()
    return scene
