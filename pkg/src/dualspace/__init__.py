"""Dual-space graph model for weakly supervised violence detection.

Snippet features are processed by a Euclidean graph branch and a Lorentz
(hyperbolic) graph branch, mixed by cross-space attention, and scored by a
hyperbolic classifier trained with multiple-instance learning plus a
vision-language contrastive term.  Everything runs on numpy through a small
reverse-mode autodiff engine (:mod:`dualspace.autodiff`).
"""

from .formats import Dataset, DataError, FeatureSequence, FormatError, TextBank
from .model import ModelConfig, forward, init_params
from .synthetic import SyntheticSpec, generate_synthetic
from .training import evaluate, gradcheck_model, train

__all__ = [
    "Dataset",
    "DataError",
    "FeatureSequence",
    "FormatError",
    "TextBank",
    "ModelConfig",
    "forward",
    "init_params",
    "SyntheticSpec",
    "generate_synthetic",
    "evaluate",
    "gradcheck_model",
    "train",
]

__version__ = "0.1.0"
