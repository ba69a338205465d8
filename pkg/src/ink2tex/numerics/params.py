"""Model configuration, parameter shapes, and seeded initialization.

Parameter paths mirror the gate equations: ``encoder.layer{l}.{fwd,bwd}.*``
for the six encoder matrices per direction, ``decoder.*`` for the nine
decoder gate matrices plus the state-init projection, ``attention.*`` for
the energy MLP, ``coverage.Q`` for the coverage filter, ``output.*`` and
``embedding.E`` for the prediction layer. The equations carry no bias
terms and none are added here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import ConfigError, ModelIOError
from .engine import Tensor, parameter

ENCODER_INPUT_MATS = ("W_xz", "W_xr", "W_xh")
ENCODER_RECURRENT_MATS = ("U_hz", "U_hr", "U_rh")
DECODER_INPUT_MATS = ("W_yz", "W_yr", "W_ys")
DECODER_RECURRENT_MATS = ("U_sz", "U_sr", "U_rs")
DECODER_CONTEXT_MATS = ("C_cz", "C_cr", "C_cs")


def _default_pooled_layers(layers: int) -> tuple[int, ...]:
    # Pool the inputs of the top two layers (one layer when only one exists).
    return tuple(range(max(0, layers - 2), layers))


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters fixing every tensor shape in the model."""

    vocab_size: int
    input_dim: int = 8
    encoder_layers: int = 4
    encoder_hidden: int = 250
    pooled_layers: tuple[int, ...] | None = None
    pooling_stride: int = 2
    pool_mode: str = "max"
    dec_hidden: int = 256
    embed_dim: int = 256
    att_dim: int = 500
    cov_width: int = 11
    cov_channels: int = 5
    spacing: float = 6.25
    tokens: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.pooled_layers is None:
            object.__setattr__(self, "pooled_layers",
                               _default_pooled_layers(self.encoder_layers))
        else:
            object.__setattr__(self, "pooled_layers", tuple(self.pooled_layers))
        if self.tokens is not None:
            object.__setattr__(self, "tokens", tuple(self.tokens))
        if any(l < 0 or l >= self.encoder_layers for l in self.pooled_layers):
            raise ConfigError(
                f"pooled_layers {self.pooled_layers} outside 0..{self.encoder_layers - 1}"
            )
        if self.cov_width % 2 == 0:
            raise ConfigError(f"coverage filter width must be odd, got {self.cov_width}")
        if self.pool_mode not in ("max", "mean", "subsample"):
            raise ConfigError(f"unknown pool_mode {self.pool_mode!r}")
        if self.tokens is not None and len(self.tokens) != self.vocab_size:
            raise ConfigError(
                f"config carries {len(self.tokens)} tokens but vocab_size={self.vocab_size}"
            )

    @property
    def annotation_dim(self) -> int:
        """D: one forward plus one backward hidden vector."""
        return 2 * self.encoder_hidden

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["pooled_layers"] = list(self.pooled_layers)
        d["tokens"] = list(self.tokens) if self.tokens is not None else None
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("pooled_layers") is not None:
            d["pooled_layers"] = tuple(d["pooled_layers"])
        if d.get("tokens") is not None:
            d["tokens"] = tuple(d["tokens"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ModelIOError(f"bad config record: {exc}") from exc


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter path and its shape, in canonical (sorted) order."""
    h = cfg.encoder_hidden
    n = cfg.dec_hidden
    m = cfg.embed_dim
    n_att = cfg.att_dim
    d_ann = cfg.annotation_dim
    k = cfg.vocab_size
    shapes: dict[str, tuple[int, ...]] = {}
    for layer in range(cfg.encoder_layers):
        in_dim = cfg.input_dim if layer == 0 else d_ann
        for direction in ("fwd", "bwd"):
            prefix = f"encoder.layer{layer}.{direction}"
            for name in ENCODER_INPUT_MATS:
                shapes[f"{prefix}.{name}"] = (h, in_dim)
            for name in ENCODER_RECURRENT_MATS:
                shapes[f"{prefix}.{name}"] = (h, h)
    for name in DECODER_INPUT_MATS:
        shapes[f"decoder.{name}"] = (n, m)
    for name in DECODER_RECURRENT_MATS:
        shapes[f"decoder.{name}"] = (n, n)
    for name in DECODER_CONTEXT_MATS:
        shapes[f"decoder.{name}"] = (n, d_ann)
    shapes["decoder.W_init"] = (n, d_ann)
    shapes["attention.v_att"] = (n_att,)
    shapes["attention.W_att"] = (n_att, n)
    shapes["attention.U_att"] = (n_att, d_ann)
    shapes["attention.U_f"] = (n_att, cfg.cov_channels)
    shapes["coverage.Q"] = (cfg.cov_width, 1, cfg.cov_channels)
    shapes["output.W_o"] = (k, m)
    shapes["output.W_s"] = (m, n)
    shapes["output.W_c"] = (m, d_ann)
    shapes["embedding.E"] = (k, m)
    return dict(sorted(shapes.items()))


def _is_recurrent(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf in ENCODER_RECURRENT_MATS or leaf in DECODER_RECURRENT_MATS


def _glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    elif len(shape) == 2:
        fan_out, fan_in = shape
    else:  # conv filter (w, c_in, c_out)
        w, c_in, c_out = shape
        fan_in, fan_out = w * c_in, w * c_out
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def _orthogonal(rng: np.random.Generator, size: int) -> np.ndarray:
    a = rng.standard_normal((size, size))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))  # sign fix keeps the draw deterministic


@dataclass
class ModelParams:
    """Named parameter tensors plus the config that fixes their shapes."""

    config: ModelConfig
    tensors: dict[str, Tensor]

    def __post_init__(self) -> None:
        expected = expected_shapes(self.config)
        for name, shape in expected.items():
            if name not in self.tensors:
                raise ModelIOError(f"missing parameter {name!r} (expected shape {shape})")
            got = self.tensors[name].data.shape
            if got != shape:
                raise ModelIOError(
                    f"parameter {name!r} has shape {got}, expected {shape}"
                )
        extra = set(self.tensors) - set(expected)
        if extra:
            raise ModelIOError(f"unexpected parameter {sorted(extra)[0]!r}")

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Snapshot accumulated gradients; zeros for untouched parameters."""
        return {
            name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.tensors.items()
        }

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {
            name: parameter(t.data.copy()) for name, t in self.tensors.items()
        })

    def with_noise(self, rng: np.random.Generator, std: float) -> "ModelParams":
        """A noisy view for weight-noise training; the clean tensors stay put."""
        if std == 0.0:
            return self
        return ModelParams(self.config, {
            name: parameter(t.data + rng.normal(0.0, std, size=t.data.shape))
            for name, t in self.tensors.items()
        })


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Seeded initialization: Glorot-uniform weights, orthogonal recurrences."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in expected_shapes(cfg).items():
        if _is_recurrent(name):
            data = _orthogonal(rng, shape[0])
        else:
            data = _glorot_uniform(rng, shape)
        tensors[name] = parameter(data)
    return ModelParams(cfg, tensors)


@dataclass
class GruWeights:
    """The six matrices of one GRU direction."""

    w_xz: Tensor
    w_xr: Tensor
    w_xh: Tensor
    u_hz: Tensor
    u_hr: Tensor
    u_rh: Tensor

    @classmethod
    def from_params(cls, params: ModelParams, prefix: str) -> "GruWeights":
        t = params.tensors
        return cls(t[f"{prefix}.W_xz"], t[f"{prefix}.W_xr"], t[f"{prefix}.W_xh"],
                   t[f"{prefix}.U_hz"], t[f"{prefix}.U_hr"], t[f"{prefix}.U_rh"])
