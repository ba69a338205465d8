"""Coverage-augmented attention: energies, probabilities, context vectors.

Per decode step t the energy at annotation i is
``v_att . tanh(W_att s_{t-1} + U_att a_i + U_f f_i)`` where f_i is the i-th
row of F = Q * beta (a same-padded 1-d convolution of the cumulative
attention mass beta over a single input channel). Softmax over i yields
alpha, and the context is the alpha-weighted sum of annotation rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    ModelParams,
    Tensor,
    add,
    add_col,
    constant,
    conv1d,
    matmul,
    reshape,
    softmax,
    tanh,
    transpose,
)
from .encoder import AnnotationSequence


@dataclass
class AttentionState:
    """Running coverage: beta is the exact sum of all past alpha vectors."""

    beta: Tensor
    alpha_history: list[Tensor]


def init_attention_state(length: int) -> AttentionState:
    return AttentionState(beta=constant(np.zeros(length)), alpha_history=[])


def coverage_features(beta: Tensor, q_filter: Tensor) -> Tensor:
    """F = Q * beta: (L,) convolved with (w, 1, q) into an L x q matrix."""
    signal = reshape(beta, (beta.data.shape[0], 1))
    return conv1d(signal, q_filter)


def project_annotations(a: Tensor, params: ModelParams) -> Tensor:
    """U_att A^T, an n' x L matrix reused across every decode step."""
    return matmul(params["attention.U_att"], transpose(a))


def attend(
    s_prev: Tensor,
    annotations: AnnotationSequence,
    state: AttentionState,
    params: ModelParams,
    proj_annotations: Tensor | None = None,
) -> tuple[Tensor, Tensor, AttentionState]:
    """One attention step: returns (alpha, context, advanced state)."""
    a = annotations.a
    if proj_annotations is None:
        proj_annotations = project_annotations(a, params)
    f = coverage_features(state.beta, params["coverage.Q"])
    cov = matmul(params["attention.U_f"], transpose(f))
    pre = add_col(add(proj_annotations, cov),
                  matmul(params["attention.W_att"], s_prev))
    energies = matmul(params["attention.v_att"], tanh(pre))
    alpha = softmax(energies)
    context = matmul(alpha, a)
    new_state = AttentionState(beta=add(state.beta, alpha),
                               alpha_history=state.alpha_history + [alpha])
    return alpha, context, new_state


def attend_plain(
    s_prev: Tensor,
    annotations: AnnotationSequence,
    params: ModelParams,
    proj_annotations: Tensor | None = None,
) -> tuple[Tensor, Tensor]:
    """Coverage-free attention (the pre-coverage energy form), for ablation."""
    a = annotations.a
    if proj_annotations is None:
        proj_annotations = project_annotations(a, params)
    pre = add_col(proj_annotations, matmul(params["attention.W_att"], s_prev))
    energies = matmul(params["attention.v_att"], tanh(pre))
    alpha = softmax(energies)
    return alpha, matmul(alpha, a)
