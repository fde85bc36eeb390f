"""Classical angle network: forcing features -> circuit angle slots.

Plain numpy feed-forward stacks (optionally a few conv2d layers in front for
grid inputs) with exact hand-written reverse-mode gradients. No framework
dependency keeps forward/backward bit-stable and easy to check against finite
differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation

__all__ = [
    "Dense",
    "Conv2d",
    "NetworkSpec",
    "NetworkState",
    "init",
    "forward",
    "backward",
    "save_checkpoint",
    "load_checkpoint",
]

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def _activation(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "gelu":
        # tanh approximation; absolute error below 1e-3, negligible next to
        # training noise and free of an erf dependency
        inner = _GELU_C * (x + _GELU_A * x**3)
        return 0.5 * x * (1.0 + np.tanh(inner))
    if name == "identity":
        return x
    raise ConfigurationError(f"unknown activation {name!r}")


def _activation_deriv(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (x > 0.0).astype(float)
    if name == "gelu":
        inner = _GELU_C * (x + _GELU_A * x**3)
        t = np.tanh(inner)
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
    if name == "identity":
        return np.ones_like(x)
    raise ConfigurationError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    activation: str = "identity"


@dataclass(frozen=True)
class Conv2d:
    """Stride-1, zero-padded (width-preserving) 2D convolution; odd kernel."""

    in_channels: int
    out_channels: int
    kernel: int
    activation: str = "identity"


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, ...]  # (features,) or (channels, height, width)
    layers: tuple

    def __post_init__(self):
        shape = tuple(self.input_shape)
        conv_done = False
        for layer in self.layers:
            if isinstance(layer, Conv2d):
                if conv_done:
                    raise ConfigurationError("conv layers must precede dense layers")
                if len(shape) != 3 or shape[0] != layer.in_channels:
                    raise ConfigurationError(
                        f"conv expects ({layer.in_channels}, H, W), feeding shape {shape}"
                    )
                if layer.kernel % 2 != 1:
                    raise ConfigurationError("conv kernel must be odd")
                shape = (layer.out_channels, shape[1], shape[2])
            elif isinstance(layer, Dense):
                conv_done = True
                flat = int(np.prod(shape))
                if flat != layer.in_dim:
                    raise ConfigurationError(
                        f"dense expects {layer.in_dim} inputs, feeding {flat}"
                    )
                shape = (layer.out_dim,)
            else:
                raise ConfigurationError(f"unknown layer type {type(layer).__name__}")
        if len(shape) != 1:
            raise ConfigurationError("network must end with a dense layer")

    @property
    def output_dim(self) -> int:
        last = self.layers[-1]
        return last.out_dim


@dataclass
class NetworkState:
    spec: NetworkSpec
    weights: list
    biases: list

    @property
    def parameter_count(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def copy(self) -> "NetworkState":
        return NetworkState(
            spec=self.spec,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init(spec: NetworkSpec, seed: int) -> NetworkState:
    """He-uniform weights for relu layers, Xavier-uniform otherwise; zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for layer in spec.layers:
        if isinstance(layer, Dense):
            fan_in, fan_out = layer.in_dim, layer.out_dim
            shape = (layer.out_dim, layer.in_dim)
            bias_shape = (layer.out_dim,)
        else:
            fan_in = layer.in_channels * layer.kernel**2
            fan_out = layer.out_channels * layer.kernel**2
            shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            bias_shape = (layer.out_channels,)
        if layer.activation == "relu":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=shape))
        biases.append(np.zeros(bias_shape))
    return NetworkState(spec=spec, weights=weights, biases=biases)


def _conv_windows(padded: np.ndarray, kernel: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(padded, (kernel, kernel), axis=(1, 2))


def _forward_cached(state: NetworkState, features: np.ndarray):
    x = np.asarray(features, dtype=float)
    if x.shape != state.spec.input_shape:
        raise ContractViolation(
            f"features shaped {x.shape}, spec expects {state.spec.input_shape}"
        )
    cache = []
    for layer, w, b in zip(state.spec.layers, state.weights, state.biases):
        if isinstance(layer, Dense):
            if x.ndim > 1:
                cache.append(("flatten", x.shape))
                x = x.reshape(-1)
            pre = w @ x + b
            cache.append(("dense", x, pre))
        else:
            pad = layer.kernel // 2
            padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
            windows = _conv_windows(padded, layer.kernel)
            pre = np.einsum("ocij,chwij->ohw", w, windows) + b[:, None, None]
            cache.append(("conv", padded, pre))
        x = _activation(layer.activation, pre)
    return x, cache


def forward(state: NetworkState, features: np.ndarray) -> np.ndarray:
    """Evaluate the network on one feature vector/grid."""
    return _forward_cached(state, features)[0]


def backward(
    state: NetworkState, features: np.ndarray, output_cotangent: np.ndarray
) -> tuple[list, np.ndarray]:
    """Exact gradients of <cotangent, output> for every weight and bias.

    Returns (grads, input_gradient) where grads is a list of (dW, db) pairs
    aligned with the layers.
    """
    out, cache = _forward_cached(state, features)
    delta = np.asarray(output_cotangent, dtype=float)
    if delta.shape != out.shape:
        raise ContractViolation("cotangent shape mismatch")
    grads: list = [None] * len(state.spec.layers)
    entries = list(cache)
    layer_idx = len(state.spec.layers) - 1
    while entries:
        entry = entries.pop()
        if entry[0] == "flatten":
            delta = delta.reshape(entry[1])
            continue
        layer = state.spec.layers[layer_idx]
        w = state.weights[layer_idx]
        if entry[0] == "dense":
            _, x_in, pre = entry
            delta = delta * _activation_deriv(layer.activation, pre)
            grads[layer_idx] = (np.outer(delta, x_in), delta.copy())
            delta = w.T @ delta
        else:
            _, padded, pre = entry
            delta = delta * _activation_deriv(layer.activation, pre)
            k = layer.kernel
            pad = k // 2
            windows = _conv_windows(padded, k)
            dw = np.einsum("ohw,chwij->ocij", delta, windows)
            db = delta.sum(axis=(1, 2))
            grads[layer_idx] = (dw, db)
            dpadded = np.zeros_like(padded)
            h, wd = delta.shape[1], delta.shape[2]
            for di in range(k):
                for dj in range(k):
                    dpadded[:, di : di + h, dj : dj + wd] += np.einsum(
                        "ohw,oc->chw", delta, w[:, :, di, dj]
                    )
            delta = dpadded[:, pad : pad + h, pad : pad + wd] if pad else dpadded
        layer_idx -= 1
    return grads, delta


def save_checkpoint(state: NetworkState, path) -> None:
    """Versioned binary dump of the spec plus all parameters (bit-exact)."""
    meta = {
        "version": 1,
        "input_shape": list(state.spec.input_shape),
        "layers": [
            {
                "kind": "dense",
                "in_dim": l.in_dim,
                "out_dim": l.out_dim,
                "activation": l.activation,
            }
            if isinstance(l, Dense)
            else {
                "kind": "conv2d",
                "in_channels": l.in_channels,
                "out_channels": l.out_channels,
                "kernel": l.kernel,
                "activation": l.activation,
            }
            for l in state.spec.layers
        ],
    }
    arrays = {}
    for i, (w, b) in enumerate(zip(state.weights, state.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> NetworkState:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != 1:
            raise ConfigurationError("unsupported checkpoint version")
        layers = []
        for entry in meta["layers"]:
            if entry["kind"] == "dense":
                layers.append(Dense(entry["in_dim"], entry["out_dim"], entry["activation"]))
            else:
                layers.append(
                    Conv2d(
                        entry["in_channels"],
                        entry["out_channels"],
                        entry["kernel"],
                        entry["activation"],
                    )
                )
        spec = NetworkSpec(input_shape=tuple(meta["input_shape"]), layers=tuple(layers))
        weights = [data[f"w{i}"] for i in range(len(layers))]
        biases = [data[f"b{i}"] for i in range(len(layers))]
    return NetworkState(spec=spec, weights=weights, biases=biases)
