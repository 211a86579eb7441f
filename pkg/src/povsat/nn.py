"""Dense regression network with hand-written backpropagation.

The network is a stack of affine layers with an activation after every
hidden layer and an identity output of width one. Parameters live in
float64 arrays; gradients and losses are accumulated at float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidConfigError, ShapeError

ACTIVATIONS = ("relu", "identity")
DEFAULT_HIDDEN = (512, 512)


@dataclass
class LinearLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("weights must be 2-D and bias 1-D")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != weight rows {self.weights.shape[0]}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class MlpRegressor:
    layers: list[LinearLayer]
    activation: str = "relu"

    def __post_init__(self):
        if not self.layers:
            raise InvalidConfigError("a model needs at least one layer")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfigError(f"unknown activation {self.activation!r}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        if self.layers[-1].out_dim != 1:
            raise ShapeError("the last layer must have a single output")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in layer order: weights then bias for each layer."""
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def copy(self) -> "MlpRegressor":
        return MlpRegressor(
            [LinearLayer(l.weights.copy(), l.bias.copy()) for l in self.layers],
            self.activation,
        )


def init_model(
    input_dim: int,
    hidden_dims: Sequence[int] = DEFAULT_HIDDEN,
    seed: int = 0,
    activation: str = "relu",
) -> MlpRegressor:
    """Build a network with weights uniform in +-1/sqrt(fan_in) and zero biases.

    Weights are rounded to float32-representable values so that a freshly
    initialized model survives a checkpoint round trip unchanged.
    """
    dims = [input_dim, *hidden_dims, 1]
    if any(int(d) != d or d < 1 for d in dims):
        raise InvalidConfigError(f"layer dims must be positive integers, got {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(np.float32)
        # float32 rounding may nudge a value just past the bound
        over = np.abs(w.astype(np.float64)) > bound
        w[over] = np.nextafter(w[over], np.float32(0))
        layers.append(LinearLayer(w.astype(np.float64), np.zeros(fan_out)))
    return MlpRegressor(layers, activation)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _as_batch(model: MlpRegressor, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"expected inputs of width {model.input_dim}, got shape {x.shape}")
    return x


def predict(model: MlpRegressor, batch_x) -> np.ndarray:
    """Predictions for a batch of feature vectors, shape (n,)."""
    a = _as_batch(model, batch_x)
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        z = a @ layer.weights.T + layer.bias
        a = _activate(z, model.activation) if i < last else z
    return a[:, 0]


def forward(model: MlpRegressor, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"forward takes one feature vector, got shape {x.shape}")
    return float(predict(model, x)[0])


def mse_loss(preds, targets) -> float:
    """Mean of squared differences between predictions and targets."""
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ShapeError(f"length mismatch: {p.shape[0]} preds vs {t.shape[0]} targets")
    if p.size == 0:
        raise ShapeError("mse of an empty batch is undefined")
    d = p - t
    return float(np.mean(d * d))


def backward(model: MlpRegressor, batch_x, batch_y) -> tuple[float, list[np.ndarray]]:
    """Loss and gradients of the batch MSE with respect to every parameter.

    Returns ``(loss, grads)`` where ``grads`` lines up with
    ``model.parameters()``.
    """
    x = _as_batch(model, batch_x)
    y = np.asarray(batch_y, dtype=np.float64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ShapeError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
    if y.size == 0:
        raise ShapeError("empty batch")

    last = len(model.layers) - 1
    inputs = []
    pre = []
    a = x
    for i, layer in enumerate(model.layers):
        inputs.append(a)
        z = a @ layer.weights.T + layer.bias
        pre.append(z)
        a = _activate(z, model.activation) if i < last else z
    err = a[:, 0] - y
    n = y.shape[0]
    loss = float(np.mean(err * err))

    delta = (2.0 / n) * err[:, None]
    grads: list[np.ndarray] = [None] * (2 * len(model.layers))  # type: ignore[list-item]
    for i in range(last, -1, -1):
        layer = model.layers[i]
        grads[2 * i] = delta.T @ inputs[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ layer.weights
            if model.activation == "relu":
                delta = delta * (pre[i - 1] > 0)
    return loss, grads


@dataclass
class SgdMomentum:
    """SGD with heavy-ball momentum: ``v = mu*v + g; p = p - lr*v``."""

    learning_rate: float
    momentum: float = 0.9
    velocity: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not (self.learning_rate >= 0 and np.isfinite(self.learning_rate)):
            raise InvalidConfigError(f"learning rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise InvalidConfigError(f"momentum must lie in [0, 1), got {self.momentum}")

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], learning_rate: float, momentum: float = 0.9):
        return cls(learning_rate, momentum, [np.zeros_like(p, dtype=np.float64) for p in params])


def sgd_step(state: SgdMomentum, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    """Apply one momentum update in place to ``params`` and ``state.velocity``."""
    if not state.velocity:
        state.velocity = [np.zeros_like(p, dtype=np.float64) for p in params]
    if not (len(params) == len(grads) == len(state.velocity)):
        raise ShapeError("params, grads and velocity buffers differ in count")
    for p, g, v in zip(params, grads, state.velocity):
        if not (p.shape == np.shape(g) == v.shape):
            raise ShapeError(f"shape mismatch: param {p.shape}, grad {np.shape(g)}, velocity {v.shape}")
        v *= state.momentum
        v += g
        p -= state.learning_rate * v
