"""Model container file: magic, version, canonical config JSON, raw tensors.

Layout (all integers little-endian):
    magic   7 bytes  b"INK2TEX"
    version u32      currently 1
    cfg_len u64      followed by cfg_len bytes of canonical JSON
    count   u64      number of tensors, sorted by name
    per tensor: name_len u16 + utf-8 name, ndim u8, ndim x u64 dims,
                row-major float64 data

Round trips are bit-exact; a truncated or inconsistent file raises before
any partial model escapes.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ModelIOError
from .engine import parameter
from .params import ModelConfig, ModelParams

MAGIC = b"INK2TEX"
FORMAT_VERSION = 1


def save_model(params: ModelParams, sink) -> None:
    """Write the model container to a path or binary file object."""
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            _write(params, fh)
    else:
        _write(params, sink)


def load_model(source) -> ModelParams:
    """Read a model container from a path or binary file object."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return _read(fh)
    return _read(source)


def model_bytes(params: ModelParams) -> bytes:
    buf = io.BytesIO()
    _write(params, buf)
    return buf.getvalue()


def _write(params: ModelParams, fh) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<I", FORMAT_VERSION))
    cfg_json = json.dumps(params.config.to_json_dict(), sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
    fh.write(struct.pack("<Q", len(cfg_json)))
    fh.write(cfg_json)
    names = params.names()
    fh.write(struct.pack("<Q", len(names)))
    for name in names:
        data = params.tensors[name].data
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<B", data.ndim))
        for dim in data.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def _take(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ModelIOError(f"truncated model file while reading {what}")
    return data


def _read(fh) -> ModelParams:
    magic = _take(fh, len(MAGIC), "magic")
    if magic != MAGIC:
        raise ModelIOError(f"bad magic {magic!r}, not a model container")
    (version,) = struct.unpack("<I", _take(fh, 4, "version"))
    if version != FORMAT_VERSION:
        raise ModelIOError(
            f"unsupported container version {version}, expected {FORMAT_VERSION}"
        )
    (cfg_len,) = struct.unpack("<Q", _take(fh, 8, "config length"))
    try:
        cfg_dict = json.loads(_take(fh, cfg_len, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelIOError(f"unreadable config block: {exc}") from exc
    config = ModelConfig.from_json_dict(cfg_dict)
    (count,) = struct.unpack("<Q", _take(fh, 8, "tensor count"))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _take(fh, 2, "tensor name length"))
        name = _take(fh, name_len, "tensor name").decode("utf-8")
        (ndim,) = struct.unpack("<B", _take(fh, 1, f"rank of {name}"))
        shape = tuple(
            struct.unpack("<Q", _take(fh, 8, f"shape of {name}"))[0]
            for _ in range(ndim)
        )
        n_bytes = 8 * int(np.prod(shape, dtype=np.int64)) if shape else 8
        raw = _take(fh, n_bytes, f"data of {name}")
        tensors[name] = parameter(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
    # ModelParams validation reports missing keys / shape mismatches by name.
    return ModelParams(config, tensors)
