"""Differentiable numerics substrate: autodiff engine, parameters, model IO."""

from .engine import (
    Tensor,
    add,
    add_col,
    backward,
    concat_cols,
    constant,
    conv1d,
    embed,
    gru_sequence,
    log,
    matmul,
    mean_rows,
    mul,
    neg,
    no_grad,
    one_minus,
    parameter,
    pick,
    pool_rows,
    reshape,
    scale,
    sigmoid,
    softmax,
    sub,
    sum_all,
    tanh,
    transpose,
)
from .params import (
    GruWeights,
    ModelConfig,
    ModelParams,
    expected_shapes,
    init_params,
)
from .serialize import FORMAT_VERSION, MAGIC, load_model, model_bytes, save_model

__all__ = [
    "Tensor", "add", "add_col", "backward", "concat_cols", "constant",
    "conv1d", "embed", "gru_sequence", "log", "matmul", "mean_rows", "mul",
    "neg", "no_grad", "one_minus", "parameter", "pick", "pool_rows",
    "reshape", "scale", "sigmoid", "softmax", "sub", "sum_all", "tanh",
    "transpose",
    "GruWeights", "ModelConfig", "ModelParams", "expected_shapes",
    "init_params",
    "FORMAT_VERSION", "MAGIC", "load_model", "model_bytes", "save_model",
]
