"""Memory-induced tracking, open-vocabulary classification and evaluation
for video instance segmentation."""

from .assignment import solve_assignment
from .classifier import (
    ClassHead,
    ClassifierConfig,
    OpenVocabularyClassifier,
    Vocabulary,
    class_head_forward,
    classification_logits,
    classification_scores,
    classify_average,
    classify_tracks,
)
from .evaluator import (
    EvalConfig,
    EvalReport,
    GtInstance,
    Prediction,
    average_precision,
    evaluate,
    match_category,
    st_iou,
)
from .exceptions import MemtrackError, ValidationError
from .mask_ops import RleMask, intersection_area, mask_area, rle_decode, rle_encode
from .tracker import (
    FrameProposals,
    MemoryBank,
    MemoryTracker,
    TrackerConfig,
    Tracklet,
    associate,
    init_memory,
    similarity_matrix,
    track_video,
    update_memory,
)

__version__ = "0.1.0"
