"""Minimal differentiable numeric core: tensors with reverse-mode gradients,
standard layers, and the checkpoint container."""

from .tensor import Tensor, no_grad
from .layers import (
    FeedForwardParams,
    LayerNormParams,
    dropout,
    embed,
    feed_forward,
    init_feed_forward,
    init_layer_norm,
    layer_norm,
    positional_encoding,
    word_dropout,
    xavier_uniform,
)
from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint

__all__ = [
    "Tensor",
    "no_grad",
    "FeedForwardParams",
    "LayerNormParams",
    "dropout",
    "embed",
    "feed_forward",
    "init_feed_forward",
    "init_layer_norm",
    "layer_norm",
    "positional_encoding",
    "word_dropout",
    "xavier_uniform",
    "FORMAT_VERSION",
    "load_checkpoint",
    "save_checkpoint",
]
