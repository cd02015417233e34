"""Forward-only temporal instance resampler.

Each layer runs an inter-frame block (per-instance temporal self-attention,
width-5 convolution over time, shortcut, layernorm) followed by an
intra-frame block (per-frame cross-attention to context tokens, self-attention
over instances, layernorm). Layer ``l`` reads context scale ``l % 3``.

Single-head attention, row-vector convention (``x @ W``), no positional
encodings.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import List, Sequence

import numpy as np

CONV_WIDTH = 5
N_SCALES = 3
LN_EPS = 1e-5


@dataclass
class LayerWeights:
    t_wq: np.ndarray
    t_wk: np.ndarray
    t_wv: np.ndarray
    t_wo: np.ndarray
    conv_w: np.ndarray  # (width, d_out, d_in)
    conv_b: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    c_wq: np.ndarray
    c_wk: np.ndarray
    c_wv: np.ndarray
    c_wo: np.ndarray
    s_wq: np.ndarray
    s_wk: np.ndarray
    s_wv: np.ndarray
    s_wo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray

    def __post_init__(self):
        d = self.t_wq.shape[0]
        if self.conv_w.shape != (CONV_WIDTH, d, d):
            raise ValueError(f"convolution kernel must have shape ({CONV_WIDTH}, {d}, {d}), got {self.conv_w.shape}")
        for f in fields(self):
            arr = getattr(self, f.name)
            if f.name == "conv_w":
                continue
            expected = (d,) if f.name.startswith(("ln", "conv_b")) else (d, d)
            if arr.shape != expected:
                raise ValueError(f"{f.name}: expected shape {expected}, got {arr.shape}")

    @property
    def d(self) -> int:
        return self.t_wq.shape[0]

    def named(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass
class TirWeights:
    layers: List[LayerWeights]

    @property
    def d(self) -> int:
        return self.layers[0].d

    def to_tensors(self) -> dict:
        return {f"layer{l}.{name}": arr for l, lw in enumerate(self.layers) for name, arr in lw.named()}

    @classmethod
    def from_tensors(cls, tensors: dict) -> "TirWeights":
        n_layers = 1 + max(int(key.split(".")[0][len("layer"):]) for key in tensors)
        layers = []
        for l in range(n_layers):
            kwargs = {f.name: np.asarray(tensors[f"layer{l}.{f.name}"], dtype=float) for f in fields(LayerWeights)}
            layers.append(LayerWeights(**kwargs))
        return cls(layers)


@dataclass
class ContextFeatures:
    """Three context scales, each of shape ``(T, tokens_i, d)``."""

    scales: Sequence[np.ndarray]

    def __post_init__(self):
        if len(self.scales) != N_SCALES:
            raise ValueError(f"expected {N_SCALES} context scales, got {len(self.scales)}")
        for s in self.scales:
            if s.ndim != 3 or s.shape[1] < 1:
                raise ValueError("each scale must have shape (T, tokens, d) with tokens >= 1")


def init_tir_weights(rng: np.random.Generator, d: int, layers: int) -> TirWeights:
    if d < 1 or layers < 1:
        raise ValueError("d and layers must be positive")
    std = 1.0 / np.sqrt(d)

    def proj():
        return rng.normal(0.0, std, (d, d))

    out = []
    for _ in range(layers):
        out.append(LayerWeights(
            t_wq=proj(), t_wk=proj(), t_wv=proj(), t_wo=proj(),
            conv_w=rng.normal(0.0, 1.0 / np.sqrt(CONV_WIDTH * d), (CONV_WIDTH, d, d)),
            conv_b=np.zeros(d),
            ln1_g=np.ones(d), ln1_b=np.zeros(d),
            c_wq=proj(), c_wk=proj(), c_wv=proj(), c_wo=proj(),
            s_wq=proj(), s_wk=proj(), s_wv=proj(), s_wo=proj(),
            ln2_g=np.ones(d), ln2_b=np.zeros(d),
        ))
    return TirWeights(out)


def layer_norm(x, gain, bias, eps: float = LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def attention(queries, memory, wq, wk, wv, wo):
    """Batched single-head scaled dot-product attention over the second-to-last axis."""
    q = queries @ wq
    k = memory @ wk
    v = memory @ wv
    logits = q @ np.swapaxes(k, -1, -2) / np.sqrt(q.shape[-1])
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    return (w @ v) @ wo


def temporal_conv(x, kernel, bias):
    """Width-5 stride-1 convolution over axis 1 of ``(N, T, d)`` with replicated edges."""
    half = kernel.shape[0] // 2
    T = x.shape[1]
    padded = np.concatenate([np.repeat(x[:, :1], half, axis=1), x, np.repeat(x[:, -1:], half, axis=1)], axis=1)
    out = np.broadcast_to(bias, x.shape).copy()
    for tap in range(kernel.shape[0]):
        out += padded[:, tap:tap + T] @ kernel[tap].T
    return out


def _check_queries(queries, d):
    q = np.asarray(queries, dtype=float)
    if q.ndim != 3 or min(q.shape) < 1:
        raise ValueError("queries must have shape (N, T, d) with N, T, d >= 1")
    if q.shape[2] != d:
        raise ValueError(f"query width {q.shape[2]} does not match weights ({d})")
    return q


def inter_frame_preln(queries, lw: LayerWeights, attention_on: bool = True):
    """Shortcut-plus-convolution activations before the layernorm."""
    q = _check_queries(queries, lw.d)
    att = attention(q, q, lw.t_wq, lw.t_wk, lw.t_wv, lw.t_wo) if attention_on else q
    return temporal_conv(att, lw.conv_w, lw.conv_b) + att


def inter_frame_forward(queries, lw: LayerWeights, attention_on: bool = True):
    """``attention_on=False`` bypasses temporal self-attention (passes queries through)."""
    return layer_norm(inter_frame_preln(queries, lw, attention_on), lw.ln1_g, lw.ln1_b)


def cross_attention(queries, context: ContextFeatures, scale: int, lw: LayerWeights):
    """Per-frame cross-attention output (pre-residual), shape ``(N, T, d)``."""
    q = _check_queries(queries, lw.d)
    if scale not in range(N_SCALES):
        raise ValueError(f"scale must be in 0..{N_SCALES - 1}, got {scale}")
    mem = np.asarray(context.scales[scale], dtype=float)
    if mem.shape[0] != q.shape[1] or mem.shape[2] != q.shape[2]:
        raise ValueError(f"context scale {scale} has shape {mem.shape}, incompatible with queries {q.shape}")
    frames = np.swapaxes(q, 0, 1)  # (T, N, d)
    out = attention(frames, mem, lw.c_wq, lw.c_wk, lw.c_wv, lw.c_wo)
    return np.swapaxes(out, 0, 1)


def intra_frame_forward(queries, context: ContextFeatures, scale: int, lw: LayerWeights):
    q = _check_queries(queries, lw.d)
    x = q + cross_attention(q, context, scale, lw)
    frames = np.swapaxes(x, 0, 1)
    frames = frames + attention(frames, frames, lw.s_wq, lw.s_wk, lw.s_wv, lw.s_wo)
    return layer_norm(np.swapaxes(frames, 0, 1), lw.ln2_g, lw.ln2_b)


def scale_schedule(layers: int) -> List[int]:
    return [l % N_SCALES for l in range(layers)]


def tir_forward(queries, context: ContextFeatures, weights: TirWeights, layers: int | None = None):
    layers = len(weights.layers) if layers is None else layers
    if layers < 1:
        raise ValueError("layers must be at least 1")
    if layers > len(weights.layers):
        raise ValueError(f"requested {layers} layers but weights hold {len(weights.layers)}")
    q = _check_queries(queries, weights.d)
    for l, scale in enumerate(scale_schedule(layers)):
        lw = weights.layers[l]
        q = inter_frame_forward(q, lw)
        q = intra_frame_forward(q, context, scale, lw)
    return q
