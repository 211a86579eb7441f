"""Versioned binary checkpoint files.

Layout (all integers little-endian u32 unless noted)::

    b"PVSAT" | version | n_layers | dims[n_layers + 1] | activation (u8)
    | epoch | tune_rmse (f64, NaN when unknown)
    | parameters as little-endian float32, per layer: weights row-major, bias
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointFormatError,
    CheckpointMagicError,
    CheckpointSizeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .nn import LinearLayer, MlpRegressor

MAGIC = b"PVSAT"
FORMAT_VERSION = 1
_ACTIVATION_TAGS = {"identity": 0, "relu": 1}
_TAG_ACTIVATIONS = {v: k for k, v in _ACTIVATION_TAGS.items()}


def param_count(layer_dims) -> int:
    return sum(o * i + o for i, o in zip(layer_dims, layer_dims[1:]))


@dataclass(frozen=True, eq=False)
class Checkpoint:
    layer_dims: tuple[int, ...]
    activation: str
    params: np.ndarray  # flat float32
    epoch: int = 0
    tune_rmse: float | None = None
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        params = np.asarray(self.params, dtype="<f4").reshape(-1)
        if params.size != param_count(self.layer_dims):
            raise CheckpointSizeError(
                f"{params.size} parameters for dims {list(self.layer_dims)}, "
                f"expected {param_count(self.layer_dims)}"
            )
        if not np.all(np.isfinite(params)):
            raise CheckpointFormatError("checkpoint parameters must be finite")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))

    @classmethod
    def from_model(cls, model: MlpRegressor, epoch: int = 0, tune_rmse: float | None = None):
        """Snapshot ``model``; parameters are rounded to float32."""
        flat = np.concatenate([p.reshape(-1) for p in model.parameters()])
        return cls(tuple(model.layer_dims), model.activation, flat.astype("<f4"), epoch, tune_rmse)

    def to_model(self) -> MlpRegressor:
        values = self.params.astype(np.float64)
        layers = []
        pos = 0
        for fan_in, fan_out in zip(self.layer_dims, self.layer_dims[1:]):
            w = values[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in)
            pos += fan_in * fan_out
            b = values[pos:pos + fan_out]
            pos += fan_out
            layers.append(LinearLayer(w.copy(), b.copy()))
        return MlpRegressor(layers, self.activation)

    def to_bytes(self) -> bytes:
        dims = self.layer_dims
        rmse = math.nan if self.tune_rmse is None else float(self.tune_rmse)
        header = MAGIC + struct.pack(
            f"<II{len(dims)}IBId",
            self.format_version,
            len(dims) - 1,
            *dims,
            _ACTIVATION_TAGS[self.activation],
            self.epoch,
            rmse,
        )
        return header + self.params.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if data[:len(MAGIC)] != MAGIC:
            raise CheckpointMagicError("not a checkpoint file (bad magic)")
        pos = len(MAGIC)

        def take(fmt: str):
            nonlocal pos
            size = struct.calcsize(fmt)
            if pos + size > len(data):
                raise CheckpointTruncatedError("checkpoint header is truncated")
            out = struct.unpack_from(fmt, data, pos)
            pos += size
            return out

        version, n_layers = take("<II")
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"checkpoint format version {version}, this build reads {FORMAT_VERSION}"
            )
        if n_layers < 1:
            raise CheckpointFormatError("checkpoint declares no layers")
        dims = take(f"<{n_layers + 1}I")
        if any(d < 1 for d in dims) or dims[-1] != 1:
            raise CheckpointFormatError(f"invalid layer dims {list(dims)}")
        (tag,) = take("<B")
        if tag not in _TAG_ACTIVATIONS:
            raise CheckpointFormatError(f"unknown activation tag {tag}")
        epoch, rmse = take("<Id")
        expected = param_count(dims) * 4
        payload = data[pos:]
        if len(payload) < expected:
            raise CheckpointTruncatedError(
                f"payload has {len(payload)} bytes, dims {list(dims)} need {expected}"
            )
        if len(payload) > expected:
            raise CheckpointSizeError(
                f"payload has {len(payload) - expected} bytes beyond dims {list(dims)}"
            )
        params = np.frombuffer(payload, dtype="<f4").copy()
        return cls(
            tuple(dims),
            _TAG_ACTIVATIONS[tag],
            params,
            epoch,
            None if math.isnan(rmse) else rmse,
            version,
        )


def save_checkpoint(model: MlpRegressor | Checkpoint, path, epoch: int = 0,
                    tune_rmse: float | None = None) -> Checkpoint:
    """Write ``model`` (or an existing snapshot) to ``path`` atomically."""
    ckpt = model if isinstance(model, Checkpoint) else Checkpoint.from_model(model, epoch, tune_rmse)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(ckpt.to_bytes())
    os.replace(tmp, path)
    return ckpt


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.from_bytes(Path(path).read_bytes())
