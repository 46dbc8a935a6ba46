"""Fully-connected hashing heads with hand-written backprop, Adam, and a
central-difference gradient oracle.

Everything runs in float64. Inputs may be a single vector (1-D) or a batch
of row vectors (2-D); outputs keep the rank of the input.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NumericError

ACTIVATIONS = ("relu", "identity", "tanh")


@dataclass
class Layer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "identity"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class EncoderParams:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise InputError("a head needs at least one layer")
        for k, layer in enumerate(self.layers):
            layer.weight = np.asarray(layer.weight, dtype=np.float64)
            layer.bias = np.asarray(layer.bias, dtype=np.float64)
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.out_dim,):
                raise InputError(f"layer {k}: weight/bias shapes {layer.weight.shape}/{layer.bias.shape}")
            if layer.activation not in ACTIVATIONS:
                raise InputError(f"layer {k}: unknown activation {layer.activation!r}")
            if k and self.layers[k - 1].out_dim != layer.in_dim:
                raise InputError(
                    f"layer {k} expects {layer.in_dim} inputs, previous layer gives {self.layers[k - 1].out_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def arrays(self) -> list[np.ndarray]:
        """Flat view [W0, b0, W1, b1, ...]; the arrays are shared, not copied."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "EncoderParams":
        if len(arrays) != 2 * len(self.layers):
            raise InputError(f"expected {2 * len(self.layers)} arrays, got {len(arrays)}")
        return EncoderParams(
            [
                Layer(np.array(arrays[2 * k], dtype=np.float64), np.array(arrays[2 * k + 1], dtype=np.float64), layer.activation)
                for k, layer in enumerate(self.layers)
            ]
        )

    def copy(self) -> "EncoderParams":
        return self.with_arrays(self.arrays())

    def digest(self) -> str:
        """SHA-256 over shapes, activations and raw float64 bytes."""
        h = hashlib.sha256()
        for layer in self.layers:
            h.update(f"{layer.weight.shape}|{layer.activation}|".encode())
            h.update(np.ascontiguousarray(layer.weight).tobytes())
            h.update(np.ascontiguousarray(layer.bias).tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"weight": layer.weight.tolist(), "bias": layer.bias.tolist(), "activation": layer.activation}
                for layer in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderParams":
        return cls([Layer(np.array(l["weight"], dtype=np.float64).reshape(len(l["bias"]), -1), np.array(l["bias"], dtype=np.float64), l["activation"]) for l in d["layers"]])


def init_head(
    in_dim: int,
    code_length: int,
    hidden: Sequence[int] = (512,),
    rng: np.random.Generator | int | None = 0,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
) -> EncoderParams:
    """Fan-in uniform init, U(-1/sqrt(in), +1/sqrt(in)), for weights and biases."""
    if in_dim < 1 or code_length < 1 or any(h < 1 for h in hidden):
        raise InputError("layer widths must be positive")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    dims = [in_dim, *hidden, code_length]
    layers = []
    for k in range(len(dims) - 1):
        bound = 1.0 / np.sqrt(dims[k])
        w = rng.uniform(-bound, bound, size=(dims[k + 1], dims[k]))
        b = rng.uniform(-bound, bound, size=dims[k + 1])
        act = output_activation if k == len(dims) - 2 else hidden_activation
        layers.append(Layer(w, b, act))
    return EncoderParams(layers)


@dataclass
class ForwardTrace:
    inputs: np.ndarray  # always 2-D internally
    pre: list[np.ndarray]
    post: list[np.ndarray]
    squeeze: bool = False

    @property
    def output(self) -> np.ndarray:
        out = self.post[-1]
        return out[0] if self.squeeze else out


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, act: str) -> np.ndarray | None:
    if act == "relu":
        return (z > 0).astype(np.float64)
    if act == "tanh":
        return 1.0 - a * a
    return None


def _check_finite(name: str, *arrays: np.ndarray):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {name}")


def mlp_forward(params: EncoderParams, x: np.ndarray) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    X = x[None, :] if squeeze else x
    if X.ndim != 2 or X.shape[1] != params.in_dim:
        raise InputError(f"input has {X.shape[-1]} features, head expects {params.in_dim}")
    _check_finite("input", X)
    _check_finite("parameters", *params.arrays())
    pre, post = [], []
    a = X
    for layer in params.layers:
        z = a @ layer.weight.T + layer.bias
        a = _activate(z, layer.activation)
        pre.append(z)
        post.append(a)
    _check_finite("activations", a)
    return ForwardTrace(X, pre, post, squeeze)


def forward(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    return mlp_forward(params, x).output


def mlp_backward(
    params: EncoderParams, trace: ForwardTrace, output_grad: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Returns ([dW0, db0, dW1, db1, ...], d_input); batch rows are summed."""
    g = np.asarray(output_grad, dtype=np.float64)
    if trace.squeeze and g.ndim == 1:
        g = g[None, :]
    if g.shape != trace.post[-1].shape:
        raise InputError(f"output gradient shape {np.shape(output_grad)} does not match output {trace.output.shape}")
    grads: list[np.ndarray] = [None] * (2 * len(params.layers))  # type: ignore[list-item]
    for k in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[k]
        dact = _activation_grad(trace.pre[k], trace.post[k], layer.activation)
        dz = g if dact is None else g * dact
        a_prev = trace.inputs if k == 0 else trace.post[k - 1]
        grads[2 * k] = dz.T @ a_prev
        grads[2 * k + 1] = dz.sum(axis=0)
        g = dz @ layer.weight
    return grads, (g[0] if trace.squeeze else g)


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray], beta1=0.9, beta2=0.999, epsilon=1e-8) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0, beta1, beta2, epsilon)


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float
) -> tuple[list[np.ndarray], AdamState]:
    if lr <= 0:
        raise InputError("learning rate must be positive")
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise InputError("params, grads and optimizer state disagree in length")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise InputError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(p)}")
    _check_finite("gradients", *grads)

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_params.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    _check_finite("updated parameters", *new_params)
    return new_params, AdamState(new_m, new_v, t, b1, b2, state.epsilon)


def finite_diff_grad(
    loss_fn: Callable[[list[np.ndarray]], float], params: Sequence[np.ndarray], eps: float = 1e-5
) -> list[np.ndarray]:
    """Central differences, one coordinate at a time. ``loss_fn`` receives the
    full list of (perturbed) arrays."""
    if eps <= 0:
        raise InputError("eps must be positive")
    work = [np.array(p, dtype=np.float64) for p in params]
    grads = [np.zeros_like(p) for p in work]
    for a, g in zip(work, grads):
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn(work))
            flat[i] = orig - eps
            down = float(loss_fn(work))
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"loss is non-finite at probe coordinate {i}")
            gflat[i] = (up - down) / (2.0 * eps)
    return grads


def max_relative_error(a: Sequence[np.ndarray], b: Sequence[np.ndarray], floor: float = 1e-8) -> float:
    """max |a-b| / max(|a|, |b|, floor) over every entry of every array."""
    worst = 0.0
    for x, y in zip(a, b):
        x, y = np.asarray(x), np.asarray(y)
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        if x.size:
            worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst
