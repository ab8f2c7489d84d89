"""Offline descriptor producer for noctis-desc/1 containers."""

from .backends import make_embedder, make_proposer
from .jobs import ExtractionJob, extract_proposals, extract_templates
from .preprocess import patch_validity, preprocess_crop

__version__ = "0.1.0"
