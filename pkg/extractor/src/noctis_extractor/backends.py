"""Embedding and proposal backends.

Two families: foundation-model backends (DINOv2 embeddings, text-prompted
Grounded-SAM 2 proposals) that need the ``models`` extra plus downloaded
checkpoints, and dependency-free classical backends that are fully
deterministic and carry the test suite.  All embedders emit
1024-dimensional vectors on the 16 x 16 grid.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np
from scipy import ndimage

from .preprocess import GRID, PATCH_PIXELS

EMBED_DIM = 1024


def checkpoint_lock() -> dict:
    """Pinned model identifiers shipped with the package."""
    with resources.files("noctis_extractor").joinpath("models.lock.json").open() as fh:
        return json.load(fh)


# --- embedders ---------------------------------------------------------------


class PatchStatEmbedder:
    """Deterministic random-projection features over raw patch pixels.

    A stand-in embedder for offline work and tests: each 14 x 14 patch
    (and a 16 x 16 thumbnail for the crop token) is projected to 1024
    dimensions with a fixed seeded matrix.  A constant bias channel
    keeps all-black patches away from the zero vector.
    """

    name = "patchstat"
    _SEED = 604001

    def __init__(self):
        rng = np.random.default_rng(self._SEED)
        patch_in = PATCH_PIXELS * PATCH_PIXELS * 3 + 1
        cls_in = GRID * GRID * 3 + 1
        self._patch_proj = (
            rng.standard_normal((patch_in, EMBED_DIM)) / np.sqrt(patch_in)
        ).astype(np.float32)
        self._cls_proj = (
            rng.standard_normal((cls_in, EMBED_DIM)) / np.sqrt(cls_in)
        ).astype(np.float32)

    def embed(self, crop: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = crop.astype(np.float32) / 255.0
        blocks = x.reshape(GRID, PATCH_PIXELS, GRID, PATCH_PIXELS, 3)
        flat = blocks.transpose(0, 2, 1, 3, 4).reshape(GRID * GRID, -1)
        flat = np.concatenate([flat, np.ones((flat.shape[0], 1), dtype=np.float32)], axis=1)
        patches = (flat @ self._patch_proj).reshape(GRID, GRID, EMBED_DIM)
        thumb = blocks.mean(axis=(1, 3)).reshape(-1)
        thumb = np.concatenate([thumb, np.ones(1, dtype=np.float32)])
        cls = thumb @ self._cls_proj
        return cls.astype(np.float32), patches.astype(np.float32)


class Dinov2Embedder:
    """DINOv2 ViT-L tokens; needs torch and hub access to the checkpoint."""

    name = "dinov2"
    _HUB = {"ViT-L": "dinov2_vitl14"}
    _MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
    _STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

    def __init__(self, checkpoint: str = "ViT-L", device: str | None = None):
        try:
            import torch
        except ImportError as exc:
            raise RuntimeError(
                "the dinov2 embedder needs the 'models' extra (torch)"
            ) from exc
        if checkpoint not in self._HUB:
            raise ValueError(f"unknown dinov2 checkpoint: {checkpoint}")
        self._torch = torch
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        try:
            self.model = torch.hub.load("facebookresearch/dinov2", self._HUB[checkpoint])
        except Exception as exc:
            raise RuntimeError(f"failed to load dinov2 {checkpoint}: {exc}") from exc
        self.model.eval().to(self.device)

    def embed(self, crop: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        torch = self._torch
        x = crop.astype(np.float32) / 255.0
        x = (x - self._MEAN) / self._STD
        tensor = torch.from_numpy(x.transpose(2, 0, 1))[None].to(self.device)
        with torch.no_grad():
            out = self.model.forward_features(tensor)
        cls = out["x_norm_clstoken"][0].cpu().numpy().astype(np.float32)
        patches = (
            out["x_norm_patchtokens"][0]
            .cpu()
            .numpy()
            .reshape(GRID, GRID, EMBED_DIM)
            .astype(np.float32)
        )
        return cls, patches


# --- proposers ---------------------------------------------------------------


class RegionProposer:
    """Foreground proposals from intensity thresholding and labeling.

    Deterministic classical fallback: splits the image at the midpoint
    of its intensity range, labels connected foreground components and
    reports per-component boxes and masks.  Box confidence is the
    bounding-box fill ratio, mask confidence the normalized contrast
    between the component and the rest of the image.
    """

    name = "region"

    def __init__(self, min_area: int = 120):
        self.min_area = min_area

    def propose(self, image: np.ndarray) -> list[dict]:
        gray = np.asarray(image, dtype=np.float32).mean(axis=2)
        threshold = 0.5 * (float(gray.min()) + float(gray.max()))
        foreground = gray > threshold
        labels, count = ndimage.label(foreground)
        proposals = []
        for index in range(1, count + 1):
            mask = labels == index
            area = int(mask.sum())
            if area < self.min_area:
                continue
            rows = np.flatnonzero(mask.any(axis=1))
            cols = np.flatnonzero(mask.any(axis=0))
            x, y = int(cols[0]), int(rows[0])
            w = int(cols[-1] - cols[0] + 1)
            h = int(rows[-1] - rows[0] + 1)
            inside = float(gray[mask].mean())
            outside = float(gray[~mask].mean()) if (~mask).any() else 0.0
            proposals.append(
                {
                    "bbox": (x, y, w, h),
                    "mask": mask,
                    "box_conf": min(1.0, area / float(w * h)),
                    "mask_conf": min(1.0, abs(inside - outside) / 255.0),
                }
            )
        return proposals


class GroundedSam2Proposer:
    """Text-prompted proposals: Grounding-DINO boxes refined by SAM 2 masks.

    Needs the ``groundingdino`` and ``sam2`` packages plus their
    checkpoints; reports the detector score as box confidence and the
    segmenter's predicted IoU as mask confidence.
    """

    name = "grounded-sam2"

    def __init__(
        self,
        prompt: str = "objects",
        grounding_checkpoint: str = "Swin-B",
        segmenter_checkpoint: str = "sam2.1-L",
        box_threshold: float = 0.2,
        device: str | None = None,
    ):
        try:
            from groundingdino.util.inference import Model as GroundingModel
            from sam2.build_sam import build_sam2
            from sam2.sam2_image_predictor import SAM2ImagePredictor
        except ImportError as exc:
            raise RuntimeError(
                "the grounded-sam2 proposer needs the groundingdino and sam2 packages"
            ) from exc
        lock = checkpoint_lock()
        grounding = lock["grounding"][grounding_checkpoint]
        segmenter = lock["segmenter"][segmenter_checkpoint]
        self.prompt = prompt
        self.box_threshold = box_threshold
        self._grounding = GroundingModel(
            model_config_path=grounding["config"],
            model_checkpoint_path=grounding["weights"],
            device=device or "cuda",
        )
        self._predictor = SAM2ImagePredictor(
            build_sam2(segmenter["config"], segmenter["weights"], device=device or "cuda")
        )

    def propose(self, image: np.ndarray) -> list[dict]:
        detections = self._grounding.predict_with_classes(
            image=image[:, :, ::-1],  # grounding-dino expects BGR
            classes=[self.prompt],
            box_threshold=self.box_threshold,
            text_threshold=self.box_threshold,
        )
        self._predictor.set_image(image)
        proposals = []
        for (x0, y0, x1, y1), score in zip(detections.xyxy, detections.confidence):
            masks, ious, _ = self._predictor.predict(
                box=np.array([x0, y0, x1, y1]), multimask_output=False
            )
            mask = masks[0].astype(bool)
            if not mask.any():
                continue
            proposals.append(
                {
                    "bbox": (int(x0), int(y0), int(x1 - x0), int(y1 - y0)),
                    "mask": mask,
                    "box_conf": float(np.clip(score, 0.0, 1.0)),
                    "mask_conf": float(np.clip(ious[0], 0.0, 1.0)),
                }
            )
        return proposals


EMBEDDERS = {"patchstat": PatchStatEmbedder, "dinov2": Dinov2Embedder}
PROPOSERS = {"region": RegionProposer, "grounded-sam2": GroundedSam2Proposer}


def make_embedder(name: str, **kwargs):
    if name not in EMBEDDERS:
        raise ValueError(f"unknown embedder: {name}")
    return EMBEDDERS[name](**kwargs)


def make_proposer(name: str, **kwargs):
    if name not in PROPOSERS:
        raise ValueError(f"unknown proposer: {name}")
    return PROPOSERS[name](**kwargs)
