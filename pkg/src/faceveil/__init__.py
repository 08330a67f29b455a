"""Face anonymization toolkit: training, inference pipeline, evaluation."""

from .anonymizer import AnonymizerConfig, anonymize_frame, anonymize_video, refine_detection
from .config import RunConfig, load_config
from .dataset import (CLASS_NAMES, DatasetConfig, FaceSample, SemanticMask,
                      TrainingDataset, reduce_classes, sample_triple)
from .detectors import DetectionBox, FaceDetector, build_detector
from .losses import LossConfig
from .networks import ModelBundle, ModelConfig, build_models, segment, synthesize
from .training import TrainConfig, load_checkpoint, run_training, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "AnonymizerConfig", "anonymize_frame", "anonymize_video", "refine_detection",
    "RunConfig", "load_config",
    "CLASS_NAMES", "DatasetConfig", "FaceSample", "SemanticMask",
    "TrainingDataset", "reduce_classes", "sample_triple",
    "DetectionBox", "FaceDetector", "build_detector",
    "LossConfig",
    "ModelBundle", "ModelConfig", "build_models", "segment", "synthesize",
    "TrainConfig", "load_checkpoint", "run_training", "save_checkpoint",
    "__version__",
]
