"""Triangular-reasoning VQA on feature vectors.

A question-answering model with a forward path (question + visual ->
answer) and two reverse paths that reconstruct the question or visual
features from the answer. Training ties the three corners together; at
evaluation time the reverse reconstruction error separates correct from
incorrect answers.
"""

from .autodiff import Tape, Tensor, backward
from .config import RunConfig, build_run_config, config_hash, load_config_file
from .data import Dataset, Sample, SynthConfig, load_features, save_features, split, synth_generate
from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    DivergenceError,
    NumericsError,
    SchemaMismatchError,
    ShapeError,
    TriVqaError,
    UsageError,
)
from .evaluation import evaluate
from .gradcheck import grad_check, miniature_model_check, standard_suite
from .losses import ABLATION_MODES, LossBreakdown, LossWeights, total_loss
from .metrics import (
    attribute_accuracy,
    binary_metrics,
    reliability_measure,
    reliability_report,
)
from .model import AttributeSchema, AttributeSpec, TriVqaModel
from .optim import OptimizerState, learning_rate, sgd_step
from .train import model_from_checkpoint, run_training

__version__ = "0.1.0"

__all__ = [
    "ABLATION_MODES",
    "AttributeSchema",
    "AttributeSpec",
    "CheckpointError",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "DivergenceError",
    "LossBreakdown",
    "LossWeights",
    "NumericsError",
    "OptimizerState",
    "RunConfig",
    "Sample",
    "SchemaMismatchError",
    "ShapeError",
    "SynthConfig",
    "Tape",
    "Tensor",
    "TriVqaError",
    "TriVqaModel",
    "UsageError",
    "attribute_accuracy",
    "backward",
    "binary_metrics",
    "build_run_config",
    "config_hash",
    "evaluate",
    "grad_check",
    "learning_rate",
    "load_config_file",
    "load_features",
    "miniature_model_check",
    "model_from_checkpoint",
    "reliability_measure",
    "reliability_report",
    "run_training",
    "save_features",
    "sgd_step",
    "split",
    "standard_suite",
    "synth_generate",
    "total_loss",
]
