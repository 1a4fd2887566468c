"""Desk-scale Transformer NMT training with an evaluation-guided loss."""

from .autodiff import MaskError, ShapeError, Tensor
from .model import BOS, EOS, PAD, UNK, ModelConfig, TranslationModel
from .evaluation import EvaluationHead, generate_teacher_forced_sequence
from .optim import Adam, Parameter
from .trainer import LossBreakdown, Trainer, TrainSchedule

__all__ = [
    "Adam",
    "BOS",
    "EOS",
    "EvaluationHead",
    "LossBreakdown",
    "MaskError",
    "ModelConfig",
    "PAD",
    "Parameter",
    "ShapeError",
    "Tensor",
    "Trainer",
    "TrainSchedule",
    "TranslationModel",
    "UNK",
    "generate_teacher_forced_sequence",
]

__version__ = "0.1.0"
