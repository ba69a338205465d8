"""Shared fixtures and oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from ink2tex.numerics import ModelConfig, ModelParams, Tensor, backward, init_params


def tiny_config(**overrides) -> ModelConfig:
    """A small-everything config: quick graphs, non-trivial shapes."""
    base = dict(vocab_size=6, input_dim=8, encoder_layers=2, encoder_hidden=4,
                dec_hidden=5, embed_dim=3, att_dim=7, cov_width=3,
                cov_channels=2)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_model(seed: int = 0, **overrides) -> ModelParams:
    return init_params(tiny_config(**overrides), seed)


def finite_difference_check(loss_fn, params: ModelParams, names=None,
                            h: float = 1e-5, rel_tol: float = 1e-4,
                            abs_guard: float = 1e-8) -> None:
    """Compare backward() gradients against central finite differences.

    ``loss_fn`` rebuilds the scalar loss from the current parameter values
    on every call (the graph is per-evaluation). Elements whose analytic
    and numeric gradients are both below ``abs_guard`` are accepted; the
    rest must agree within ``rel_tol`` relative error.
    """
    params.zero_grads()
    loss = loss_fn()
    assert loss.data.ndim == 0, "loss_fn must produce a scalar"
    backward(loss)
    analytic = params.grads()
    params.zero_grads()
    for name in (names if names is not None else params.names()):
        tensor = params.tensors[name]
        grad = analytic[name]
        flat = tensor.data.reshape(-1)
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + h
            up = float(loss_fn().data)
            flat[idx] = keep - h
            down = float(loss_fn().data)
            flat[idx] = keep
            numeric = (up - down) / (2.0 * h)
            got = grad.reshape(-1)[idx]
            denom = max(abs(numeric), abs(got))
            if denom < abs_guard:
                continue
            rel = abs(got - numeric) / denom
            assert rel <= rel_tol, (
                f"{name}[{idx}]: analytic {got:.10g} vs numeric {numeric:.10g} "
                f"(rel {rel:.3g})"
            )


def random_feature_rows(rng: np.random.Generator, n: int) -> np.ndarray:
    """Plausible feature rows: coords, deltas, and a valid pen-flag pair."""
    rows = np.zeros((n, 8))
    rows[:, :6] = rng.normal(0.0, 1.0, size=(n, 6))
    down = rng.integers(0, 2, size=n)
    rows[:, 6] = down
    rows[:, 7] = 1 - down
    rows[-1, 6] = 0.0
    rows[-1, 7] = 1.0
    return rows


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
