from .adam import Adam
from .gradcheck import gradient_check
from .layers import (
    BatchNorm,
    Conv1d,
    Dense,
    Flatten,
    Layer,
    MaxPool1d,
    ReLU,
    softmax,
    softmax_cross_entropy,
)
from .model import Model, load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "BatchNorm",
    "Conv1d",
    "Dense",
    "Flatten",
    "Layer",
    "MaxPool1d",
    "Model",
    "ReLU",
    "gradient_check",
    "load_checkpoint",
    "save_checkpoint",
    "softmax",
    "softmax_cross_entropy",
]
