"""Stacked bidirectional GRU encoder with pooling over time.

Maps an N x 8 feature sequence to an L x D annotation matrix. Layers whose
index appears in ``pooled_layers`` pool their *input* (stride-2 windows by
default), so the standard 4-layer config with the top two layers pooled
shrinks the sequence by a factor of 4: L = ceil(ceil(N/2)/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    GruWeights,
    ModelParams,
    Tensor,
    add,
    concat_cols,
    constant,
    gru_sequence,
    matmul,
    mul,
    one_minus,
    pool_rows,
    sigmoid,
    tanh,
)
from .preprocess import FeatureSequence


@dataclass(frozen=True)
class EncoderConfig:
    """Structural encoder hyperparameters (shapes live in ModelConfig)."""

    layers: int = 4
    hidden_per_direction: int = 250
    pooled_layers: tuple[int, ...] = (2, 3)
    pooling_stride: int = 2
    pool_mode: str = "max"

    @classmethod
    def from_model_config(cls, cfg) -> "EncoderConfig":
        return cls(layers=cfg.encoder_layers,
                   hidden_per_direction=cfg.encoder_hidden,
                   pooled_layers=tuple(cfg.pooled_layers),
                   pooling_stride=cfg.pooling_stride,
                   pool_mode=cfg.pool_mode)


@dataclass
class AnnotationSequence:
    """Encoder output: L x D matrix plus the raw-point span of each row."""

    a: Tensor
    point_span: list[tuple[int, int]]

    @property
    def length(self) -> int:
        return self.a.data.shape[0]

    @property
    def dim(self) -> int:
        return self.a.data.shape[1]


def gru_step(x: Tensor, h_prev: Tensor, weights: GruWeights) -> Tensor:
    """One GRU update built from elementary ops.

    z = sigmoid(W_xz x + U_hz h);  r = sigmoid(W_xr x + U_hr h)
    hc = tanh(W_xh x + U_rh (r * h));  h' = (1 - z) * h + z * hc
    """
    z = sigmoid(add(matmul(weights.w_xz, x), matmul(weights.u_hz, h_prev)))
    r = sigmoid(add(matmul(weights.w_xr, x), matmul(weights.u_hr, h_prev)))
    hc = tanh(add(matmul(weights.w_xh, x), matmul(weights.u_rh, mul(r, h_prev))))
    return add(mul(one_minus(z), h_prev), mul(z, hc))


def bidirectional_layer(seq: Tensor, fwd: GruWeights, bwd: GruWeights) -> Tensor:
    """Forward and backward GRU passes from zero states, concatenated per row."""
    forward = gru_sequence(seq, fwd.w_xz, fwd.w_xr, fwd.w_xh,
                           fwd.u_hz, fwd.u_hr, fwd.u_rh, reverse=False)
    backward = gru_sequence(seq, bwd.w_xz, bwd.w_xr, bwd.w_xh,
                            bwd.u_hz, bwd.u_hr, bwd.u_rh, reverse=True)
    return concat_cols(forward, backward)


def pool_time(seq: Tensor, stride: int, mode: str = "max") -> Tensor:
    """Pool rows over non-overlapping windows; the last window may be short."""
    return pool_rows(seq, stride, mode)


def output_length(n: int, cfg: EncoderConfig) -> int:
    """L as a function of N alone: one ceiling division per pooled layer."""
    length = n
    for _ in cfg.pooled_layers:
        length = -(-length // cfg.pooling_stride)
    return length


def point_spans(n: int, cfg: EncoderConfig) -> list[tuple[int, int]]:
    """Inclusive raw-point ranges covered by each annotation index.

    Composes the pooling window maps; the spans partition [0, n).
    """
    spans = [(i, i) for i in range(n)]
    for _ in cfg.pooled_layers:
        stride = cfg.pooling_stride
        merged = []
        for j in range(-(-len(spans) // stride)):
            window = spans[j * stride:(j + 1) * stride]
            merged.append((window[0][0], window[-1][1]))
        spans = merged
    return spans


def encode(x: FeatureSequence, params: ModelParams) -> AnnotationSequence:
    """Run the full encoder stack over a feature sequence."""
    cfg = EncoderConfig.from_model_config(params.config)
    h = constant(x.rows)
    for layer in range(cfg.layers):
        if layer in cfg.pooled_layers:
            h = pool_time(h, cfg.pooling_stride, cfg.pool_mode)
        fwd = GruWeights.from_params(params, f"encoder.layer{layer}.fwd")
        bwd = GruWeights.from_params(params, f"encoder.layer{layer}.bwd")
        h = bidirectional_layer(h, fwd, bwd)
    assert np.isfinite(h.data).all(), "encoder produced non-finite annotations"
    return AnnotationSequence(a=h, point_span=point_spans(len(x), cfg))
