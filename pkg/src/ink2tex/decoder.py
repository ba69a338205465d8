"""Single-step GRU decoder: previous token + state + context -> next-token
distribution and new state.

The three gate inputs are the embedded previous symbol, the previous state,
and the context vector; the output distribution is
``softmax(W_o (E y_prev + W_s s_t + W_c c_t))``. One embedding matrix E
serves both the gates and the output term.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TokenError
from .numerics import (
    ModelParams,
    Tensor,
    add,
    embed,
    matmul,
    mean_rows,
    mul,
    one_minus,
    sigmoid,
    softmax,
    tanh,
)
from .encoder import AnnotationSequence


@dataclass
class DecoderStep:
    """State after the step and the distribution over the next symbol."""

    s: Tensor
    y_dist: Tensor


def _add3(a: Tensor, b: Tensor, c: Tensor) -> Tensor:
    return add(add(a, b), c)


def decode_step(y_prev: int, s_prev: Tensor, context: Tensor,
                params: ModelParams) -> DecoderStep:
    """Advance the decoder GRU one step under token y_prev and context c_t."""
    k = params.config.vocab_size
    if not 0 <= y_prev < k:
        raise TokenError(f"token index {y_prev} out of range for K={k}")
    t = params.tensors
    ey = embed(t["embedding.E"], y_prev)
    z = sigmoid(_add3(matmul(t["decoder.W_yz"], ey),
                      matmul(t["decoder.U_sz"], s_prev),
                      matmul(t["decoder.C_cz"], context)))
    r = sigmoid(_add3(matmul(t["decoder.W_yr"], ey),
                      matmul(t["decoder.U_sr"], s_prev),
                      matmul(t["decoder.C_cr"], context)))
    s_cand = tanh(_add3(matmul(t["decoder.W_ys"], ey),
                        matmul(t["decoder.U_rs"], mul(r, s_prev)),
                        matmul(t["decoder.C_cs"], context)))
    s_new = add(mul(one_minus(z), s_prev), mul(z, s_cand))
    logits = matmul(t["output.W_o"],
                    _add3(ey,
                          matmul(t["output.W_s"], s_new),
                          matmul(t["output.W_c"], context)))
    return DecoderStep(s=s_new, y_dist=softmax(logits))


def init_state(annotations: AnnotationSequence, params: ModelParams) -> Tensor:
    """s_0 = tanh(W_init . mean of annotation rows)."""
    return tanh(matmul(params["decoder.W_init"], mean_rows(annotations.a)))
