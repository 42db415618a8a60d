"""Standard differentiable layers: feed-forward, layer norm, positional
encoding, embedding helpers, dropout and word-dropout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class FeedForwardParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class LayerNormParams:
    scale: Tensor
    offset: Tensor


def init_feed_forward(d_model: int, d_ff: int, rng: np.random.Generator, dtype=np.float64) -> FeedForwardParams:
    return FeedForwardParams(
        w1=Tensor.param(xavier_uniform(d_model, d_ff, rng, dtype)),
        b1=Tensor.param(np.zeros(d_ff, dtype=dtype)),
        w2=Tensor.param(xavier_uniform(d_ff, d_model, rng, dtype)),
        b2=Tensor.param(np.zeros(d_model, dtype=dtype)),
    )


def init_layer_norm(d_model: int, dtype=np.float64) -> LayerNormParams:
    return LayerNormParams(
        scale=Tensor.param(np.ones(d_model, dtype=dtype)),
        offset=Tensor.param(np.zeros(d_model, dtype=dtype)),
    )


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def feed_forward(x: Tensor, params: FeedForwardParams) -> Tensor:
    """Two affine maps with a ReLU between: relu(x W1 + b1) W2 + b2."""
    if x.shape[-1] != params.w1.shape[0]:
        raise ValueError(f"feed_forward width mismatch: input {x.shape[-1]}, weights {params.w1.shape[0]}")
    hidden = T.relu(x @ params.w1 + params.b1)
    return hidden @ params.w2 + params.b2


def layer_norm(x: Tensor, params: LayerNormParams, eps: float = 1e-5) -> Tensor:
    """Per-position normalization to zero mean / unit variance, then scale+offset."""
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = T.power(var + eps, -0.5)
    return centered * inv_std * params.scale + params.offset


def positional_encoding(max_len: int, d_model: int, dtype=np.float64) -> np.ndarray:
    """Fixed sinusoidal table over flat document positions, shape (max_len, d_model)."""
    position = np.arange(max_len, dtype=np.float64)[:, None]
    dim = np.arange(0, d_model, 2, dtype=np.float64)
    angle = position / np.power(10000.0, dim / d_model)
    pe = np.zeros((max_len, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe.astype(dtype)


def embed(table: Tensor, ids: np.ndarray) -> Tensor:
    return T.embedding(table, ids)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return x * keep


def word_dropout(
    tokens: np.ndarray,
    p: float,
    unk_id: int,
    rng: np.random.Generator,
    protected_ids: tuple[int, ...],
) -> np.ndarray:
    """Replace each unprotected token with ``unk_id`` independently with probability p.

    Sentence markers and padding must be listed in ``protected_ids`` so the
    group tags of the corrupted sequence stay identical to the original's.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"word dropout probability must be in [0, 1], got {p}")
    tokens = np.asarray(tokens)
    if p == 0.0:
        return tokens.copy()
    eligible = ~np.isin(tokens, np.asarray(protected_ids))
    hit = rng.random(tokens.shape) < p
    out = tokens.copy()
    out[eligible & hit] = unk_id
    return out
