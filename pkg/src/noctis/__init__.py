"""Template-based novel-object instance matching and evaluation toolkit."""

from .assignment import AssignmentConfig, DetectionResult, mask_nms, run_matching
from .descriptors import (
    ContainerError,
    ObjectTemplates,
    PatchGridDescriptor,
    ProposalRecord,
    SceneProposals,
    TemplateLibrary,
    read_scene_proposals,
    read_template_library,
    write_scene_proposals,
    write_template_library,
)
from .evaluation import ApReport, GroundTruthAnnotation, average_precision, evaluate_dataset
from .masks import RleMask, mask_iou, rle_decode, rle_encode
from .scoring import InstanceScoreMatrix, ScoreConfig, instance_score_matrix
from .similarity import cosine_similarity, cyclic_distance_map, patch_filter_flags
from .synth import SynthConfig, generate_benchmark

__version__ = "0.1.0"
