"""Layers, miniature backbones and optimisers with hand-written gradients."""

from fefakit.nn.functional import softmax_cross_entropy
from fefakit.nn.layers import (
    Conv2d, Dense, FefaLayer, GlobalAvgPool, Layer, MaxPool2x2, ReLU, ResidualBlock, SEBlock,
)
from fefakit.nn.models import BACKBONES, FEFA_MODES, Model, ModelSpec, build_model, insert_fefa
from fefakit.nn.optim import (
    AdamState, CyclicalLrSchedule, NonFiniteGradientError, adam_step, cyclical_lr,
)

__all__ = [
    "AdamState", "BACKBONES", "Conv2d", "CyclicalLrSchedule", "Dense", "FEFA_MODES",
    "FefaLayer", "GlobalAvgPool", "Layer", "MaxPool2x2", "Model", "ModelSpec",
    "NonFiniteGradientError", "ReLU", "ResidualBlock", "SEBlock", "adam_step",
    "build_model", "cyclical_lr", "insert_fefa", "softmax_cross_entropy",
]
