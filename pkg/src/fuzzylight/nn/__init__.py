"""Minimal neural substrate: tensors, layers, optimizers, checkpoints."""

from .tensor import Tensor, concat, relu, sigmoid
from .layers import Layer, Linear, Mlp, MultiHeadAttention
from .optim import Adam, Optimizer, Sgd, make_optimizer
from .checkpoint import load_tensors, save_tensors

__all__ = [
    "Tensor", "concat", "relu", "sigmoid",
    "Layer", "Linear", "Mlp", "MultiHeadAttention",
    "Adam", "Optimizer", "Sgd", "make_optimizer",
    "load_tensors", "save_tensors",
]
