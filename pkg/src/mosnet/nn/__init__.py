"""Minimal numpy network engine with hand-written backward passes."""

from .gradcheck import grad_check, numerical_gradient, relative_error
from .layers import (
    BLSTM,
    Context,
    Conv2D,
    conv2d,
    Dense,
    Dropout,
    FlattenFreq,
    Layer,
    MeanPoolTime,
    Parameter,
    ReLU,
    Sequential,
    Sigmoid,
    Softmax,
    TimeMask,
    dropout,
    mean_pool_time,
    relu,
    sigmoid,
)
from .optim import Adam, adam_step

__all__ = [
    "Adam", "BLSTM", "Context", "Conv2D", "Dense", "Dropout", "FlattenFreq", "Layer",
    "MeanPoolTime", "Parameter", "ReLU", "Sequential", "Sigmoid", "Softmax", "TimeMask",
    "adam_step", "conv2d", "dropout", "grad_check", "mean_pool_time", "numerical_gradient",
    "relative_error", "relu", "sigmoid",
]
