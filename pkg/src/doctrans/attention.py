"""Attention mathematics: scaled dot-product attention, multi-head attention,
the sentence-locality mask built from group tags, group multi-head attention,
and the gated combination of local (group) and global attention.

All functions accept a single matrix (len, d) or any batched layout
(..., len, d); masks are additive pre-softmax matrices shaped (..., len_q,
len_k).  Query/key group tags select which pairs survive: entries with equal
non-zero tags get 0, everything else gets a large negative constant so the
softmax drives cross-sentence weights to zero.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nnet import tensor as T
from .nnet.tensor import Tensor

GAMMA_DEFAULT = -1e8

TRACE_SITES = ("enc-self", "dec-self", "cross")


class FullyMaskedRowWarning(RuntimeWarning):
    """A query row had every key masked; its weights fall back to uniform."""


def _tags_array(tags) -> np.ndarray:
    inner = getattr(tags, "tags", tags)
    arr = np.asarray(inner, dtype=np.int64)
    if (arr < 0).any():
        raise ValueError("group tags must be non-negative")
    return arr


@dataclass
class HeadProjections:
    """Per-head query/key/value projections plus the output projection.

    The per-head matrices are stored stacked: ``wq``/``wk``/``wv`` have shape
    (d_model, n_heads * d_head) and ``wo`` has shape (n_heads * d_head,
    d_model), with head i occupying columns [i*d_head, (i+1)*d_head).
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    n_heads: int

    def __post_init__(self):
        d_model, proj = self.wq.shape
        if proj % self.n_heads != 0:
            raise ValueError(f"head count {self.n_heads} must divide projection width {proj}")
        for name in ("wk", "wv"):
            if getattr(self, name).shape != (d_model, proj):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(d_model, proj)}")
        if self.wo.shape != (proj, d_model):
            raise ValueError(f"wo shape {self.wo.shape} != {(proj, d_model)}")

    @property
    def d_head(self) -> int:
        return self.wq.shape[1] // self.n_heads

    def head(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """View of (W_q, W_k, W_v) for head i, each (d_model, d_head)."""
        lo, hi = i * self.d_head, (i + 1) * self.d_head
        return self.wq.data[:, lo:hi], self.wk.data[:, lo:hi], self.wv.data[:, lo:hi]


@dataclass
class GateParams:
    """Linear gate mixing local and global attention outputs: sigmoid([H_L, H_G] w + b)."""

    w: Tensor
    b: Tensor

    def __post_init__(self):
        two_d, d = self.w.shape
        if two_d != 2 * d:
            raise ValueError(f"gate weight must map 2d -> d, got {self.w.shape}")
        if self.b.shape != (d,):
            raise ValueError(f"gate bias shape {self.b.shape} != {(d,)}")


@dataclass
class AttentionInputs:
    """Bundle of projections inputs plus the tag sequences that align them."""

    q: Tensor
    k: Tensor
    v: Tensor
    g_q: np.ndarray
    g_k: np.ndarray
    causal: bool = False

    def __post_init__(self):
        self.g_q = _tags_array(self.g_q)
        self.g_k = _tags_array(self.g_k)
        if self.q.shape[:-1] != self.g_q.shape:
            raise ValueError(f"query tags {self.g_q.shape} do not align with queries {self.q.shape}")
        if self.k.shape[:-1] != self.g_k.shape:
            raise ValueError(f"key tags {self.g_k.shape} do not align with keys {self.k.shape}")
        if self.k.shape != self.v.shape:
            raise ValueError(f"key/value shapes differ: {self.k.shape} vs {self.v.shape}")


def init_head_projections(d_model: int, n_heads: int, rng: np.random.Generator, dtype=np.float64) -> HeadProjections:
    from .nnet.layers import xavier_uniform

    if d_model % n_heads != 0:
        raise ValueError(f"n_heads {n_heads} must divide d_model {d_model}")
    return HeadProjections(
        wq=Tensor.param(xavier_uniform(d_model, d_model, rng, dtype)),
        wk=Tensor.param(xavier_uniform(d_model, d_model, rng, dtype)),
        wv=Tensor.param(xavier_uniform(d_model, d_model, rng, dtype)),
        wo=Tensor.param(xavier_uniform(d_model, d_model, rng, dtype)),
        n_heads=n_heads,
    )


def init_gate(d_model: int, rng: np.random.Generator, dtype=np.float64) -> GateParams:
    from .nnet.layers import xavier_uniform

    return GateParams(
        w=Tensor.param(xavier_uniform(2 * d_model, d_model, rng, dtype)),
        b=Tensor.param(np.zeros(d_model, dtype=dtype)),
    )


# --- masks ----------------------------------------------------------------------


def group_mask(g_q, g_k, gamma: float = GAMMA_DEFAULT, dtype=np.float64) -> np.ndarray:
    """Additive mask: 0 where tags match and are non-zero, gamma elsewhere.

    Tag 0 marks padding and is masked against everything, including other
    tag-0 positions; real sentence pairs survive only inside their own group.
    """
    gq = _tags_array(g_q)
    gk = _tags_array(g_k)
    same = gq[..., :, None] == gk[..., None, :]
    alive = same & (gq[..., :, None] != 0)
    return np.where(alive, 0.0, gamma).astype(dtype)


def key_padding_mask(g_k, gamma: float = GAMMA_DEFAULT, dtype=np.float64) -> np.ndarray:
    """Additive mask blocking tag-0 (padding) keys from every query."""
    gk = _tags_array(g_k)
    row = np.where(gk == 0, gamma, 0.0).astype(dtype)
    return row[..., None, :]


def causal_mask(len_q: int, len_k: int, gamma: float = GAMMA_DEFAULT, dtype=np.float64) -> np.ndarray:
    """Additive mask blocking attention to future positions (j > i)."""
    i = np.arange(len_q)[:, None]
    j = np.arange(len_k)[None, :]
    return np.where(j > i, gamma, 0.0).astype(dtype)


def unmasked_entry_count(g_q, g_k) -> int:
    """Number of query/key pairs the group mask leaves open.

    For self-attention over M equal sentences of N/M tokens this is N^2/M,
    the group-attention cost in score entries.
    """
    gq = _tags_array(g_q)
    gk = _tags_array(g_k)
    same = gq[:, None] == gk[None, :]
    alive = same & (gq[:, None] != 0)
    return int(alive.sum())


# --- attention variants ------------------------------------------------------


def scaled_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    extra_mask: np.ndarray | None = None,
    *,
    warn_rows: np.ndarray | None = None,
    probs_out: list | None = None,
) -> Tensor:
    """softmax(q k^T / sqrt(d_k) + extra_mask) v.

    ``extra_mask`` is an additive matrix of zeros and large negatives (group,
    causal, key-padding, or their sum).  A row whose mask blocks every key
    would otherwise silently ignore the mask (a constant shift cancels in the
    softmax), so such rows are forced to a uniform distribution and reported
    through :class:`FullyMaskedRowWarning`.  ``warn_rows`` (broadcastable to
    the row layout) can silence expected dead rows such as padding queries.
    Post-softmax weights are appended to ``probs_out`` when given.
    """
    d_k = q.shape[-1]
    if k.shape[-1] != d_k:
        raise ValueError(f"query width {d_k} != key width {k.shape[-1]}")
    scores = q @ T.swapaxes(k, -1, -2)
    scores = scores * (1.0 / np.sqrt(d_k))
    if extra_mask is not None:
        extra_mask = np.asarray(extra_mask, dtype=q.data.dtype)
        dead = (extra_mask < 0).all(axis=-1)
        if dead.any():
            flagged = dead if warn_rows is None else dead & np.broadcast_to(warn_rows, dead.shape)
            if flagged.any():
                warnings.warn(
                    f"{int(flagged.sum())} fully masked attention row(s); using uniform weights",
                    FullyMaskedRowWarning,
                    stacklevel=2,
                )
            # wipe dead rows' scores and mask so the softmax is uniform there
            scores = scores * (~dead[..., None]).astype(q.data.dtype)
            extra_mask = np.where(dead[..., None], 0.0, extra_mask)
        scores = scores + extra_mask
    probs = T.softmax(scores, axis=-1)
    if probs_out is not None:
        probs_out.append(probs.data)
    return probs @ v


def multi_head(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    extra_mask: np.ndarray | None,
    heads: HeadProjections,
    *,
    warn_rows: np.ndarray | None = None,
    probs_out: list | None = None,
) -> Tensor:
    """Per-head scaled attention on projected inputs, concatenated, re-projected.

    ``probs_out`` receives one array with a head axis: (..., n_heads, len_q, len_k).
    """
    d_model = heads.wq.shape[0]
    if q.shape[-1] != d_model or k.shape[-1] != d_model or v.shape[-1] != d_model:
        raise ValueError(
            f"input widths {q.shape[-1]}/{k.shape[-1]}/{v.shape[-1]} do not match projections ({d_model})"
        )
    h, d_head = heads.n_heads, heads.d_head

    def split_heads(x: Tensor) -> Tensor:
        parts = T.reshape(x @ getattr(heads, x_name[id(x)]), x.shape[:-1] + (h, d_head))
        return T.swapaxes(parts, -2, -3)

    # name lookup trick is too clever; project explicitly
    def project(x: Tensor, w: Tensor) -> Tensor:
        proj = T.reshape(x @ w, x.shape[:-1] + (h, d_head))
        return T.swapaxes(proj, -2, -3)

    x_name = {}
    qh = project(q, heads.wq)
    kh = project(k, heads.wk)
    vh = project(v, heads.wv)
    if extra_mask is not None:
        extra_mask = np.expand_dims(extra_mask, -3)  # broadcast over heads
    if warn_rows is not None:
        warn_rows = np.expand_dims(warn_rows, -2)
    att = scaled_attention(qh, kh, vh, extra_mask, warn_rows=warn_rows, probs_out=probs_out)
    merged = T.reshape(T.swapaxes(att, -2, -3), q.shape[:-1] + (h * d_head,))
    return merged @ heads.wo


def group_mha(
    inputs: AttentionInputs,
    heads: HeadProjections,
    gamma: float = GAMMA_DEFAULT,
    *,
    probs_out: list | None = None,
) -> Tensor:
    """Multi-head attention restricted to same-sentence query/key pairs."""
    mask = group_mask(inputs.g_q, inputs.g_k, gamma, dtype=inputs.q.data.dtype)
    if inputs.causal:
        mask = mask + causal_mask(inputs.q.shape[-2], inputs.k.shape[-2], gamma, dtype=inputs.q.data.dtype)
    warn_rows = inputs.g_q != 0  # dead padding queries are expected, stay silent
    return multi_head(inputs.q, inputs.k, inputs.v, mask, heads, warn_rows=warn_rows, probs_out=probs_out)


def global_mha(
    inputs: AttentionInputs,
    heads: HeadProjections,
    gamma: float = GAMMA_DEFAULT,
    *,
    probs_out: list | None = None,
) -> Tensor:
    """Unrestricted multi-head attention; only padding keys (and the causal
    future, when flagged) are blocked."""
    mask = key_padding_mask(inputs.g_k, gamma, dtype=inputs.q.data.dtype)
    mask = np.broadcast_to(mask, inputs.g_q.shape[:-1] + (inputs.q.shape[-2], inputs.k.shape[-2])).copy()
    if inputs.causal:
        mask = mask + causal_mask(inputs.q.shape[-2], inputs.k.shape[-2], gamma, dtype=inputs.q.data.dtype)
    warn_rows = inputs.g_q != 0
    return multi_head(inputs.q, inputs.k, inputs.v, mask, heads, warn_rows=warn_rows, probs_out=probs_out)


def combined_attention(
    inputs: AttentionInputs,
    group_heads: HeadProjections,
    global_heads: HeadProjections,
    gate: GateParams,
    gamma: float = GAMMA_DEFAULT,
    *,
    probs_out: list | None = None,
) -> Tensor:
    """Gated sum of group (local) and global attention outputs.

    g = sigmoid([H_L, H_G] w + b), output = H_L * g + H_G * (1 - g); the gate
    is computed per position and per feature.  ``probs_out`` receives the
    group half's weights.
    """
    h_local = group_mha(inputs, group_heads, gamma, probs_out=probs_out)
    h_global = global_mha(inputs, global_heads, gamma)
    gate_in = T.concat([h_local, h_global], axis=-1)
    g = T.sigmoid(gate_in @ gate.w + gate.b)
    return h_local * g + h_global * (1.0 - g)


# --- trace capture ----------------------------------------------------------------


@dataclass
class TraceRecord:
    site: str
    layer: int
    weights: np.ndarray  # (batch, n_heads, len_q, len_k) post-softmax
    query_mask: np.ndarray  # (batch, len_q) True where the query is a real token


@dataclass
class AttentionTrace:
    """Post-softmax attention weights captured during a forward pass.

    Stored one record per (site, layer) with a head axis; the file format
    flattens that to one array per (site, layer, head) plus the query-validity
    mask, so each head is an independently addressable record.
    """

    records: list[TraceRecord] = field(default_factory=list)

    def add(self, site: str, layer: int, weights: np.ndarray, query_mask: np.ndarray) -> None:
        if site not in TRACE_SITES:
            raise ValueError(f"unknown attention site {site!r}")
        weights = np.asarray(weights)
        if weights.ndim == 3:  # unbatched capture
            weights = weights[None]
        query_mask = np.atleast_2d(np.asarray(query_mask, dtype=bool))
        self.records.append(TraceRecord(site, layer, weights, query_mask))

    def get(self, site: str, layer: int) -> TraceRecord:
        for rec in self.records:
            if rec.site == site and rec.layer == layer:
                return rec
        raise KeyError((site, layer))

    def save(self, path) -> None:
        arrays: dict[str, np.ndarray] = {}
        index = []
        for rec in self.records:
            n_heads = rec.weights.shape[1]
            for head in range(n_heads):
                arrays[f"{rec.site}|{rec.layer}|{head}"] = rec.weights[:, head]
            arrays[f"{rec.site}|{rec.layer}|qmask"] = rec.query_mask
            index.append({"site": rec.site, "layer": rec.layer, "n_heads": n_heads})
        arrays["__index__"] = np.array(json.dumps(index))
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "AttentionTrace":
        path = Path(path)
        trace = cls()
        with np.load(path, allow_pickle=False) as archive:
            index = json.loads(str(archive["__index__"]))
            for entry in index:
                site, layer, n_heads = entry["site"], entry["layer"], entry["n_heads"]
                heads = [archive[f"{site}|{layer}|{h}"] for h in range(n_heads)]
                weights = np.stack(heads, axis=1)
                qmask = archive[f"{site}|{layer}|qmask"]
                trace.records.append(TraceRecord(site, layer, weights, qmask))
        return trace
