"""
Residual MLP with optional batch normalization and analytic backprop.

Parameters live in one flat float64 vector; `param_layout` fixes the order
of every weight block so checkpoints, Adam moments and soft updates can all
work on the flat vector directly.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np


BN_EPS = 1e-5
BN_MOMENTUM = 0.9
HEADS = ("softmax", "linear")
ACTIVATIONS = ("relu", "tanh")


class ShapeError(Exception):
    """Raised on dimension mismatches, spec mismatches and stale tapes."""
    pass


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: Tuple[int, ...] = (128, 128)
    output_dim: int = 1
    residual: bool = False
    batch_norm: bool = False
    output_head: str = "linear"
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.output_head not in HEADS:
            raise ShapeError(f"Unknown output head: {self.output_head}")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"Unknown activation: {self.activation}")
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ShapeError(f"Layer widths must be positive: {self}")

    @property
    def widths(self) -> List[int]:
        return [self.input_dim, *self.hidden_dims]

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "residual": self.residual,
            "batch_norm": self.batch_norm,
            "output_head": self.output_head,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpSpec":
        return cls(**{**data, "hidden_dims": tuple(data["hidden_dims"])})


def param_layout(spec: MlpSpec) -> List[Tuple[str, Tuple[int, ...]]]:
    """Ordered (name, shape) of every trainable block."""
    layout = []
    widths = spec.widths
    for k in range(len(spec.hidden_dims)):
        fan_in, fan_out = widths[k], widths[k + 1]
        layout.append((f"W{k}", (fan_in, fan_out)))
        layout.append((f"b{k}", (fan_out,)))
        if spec.batch_norm:
            layout.append((f"gamma{k}", (fan_out,)))
            layout.append((f"beta{k}", (fan_out,)))
        if spec.residual and fan_in != fan_out:
            layout.append((f"P{k}", (fan_in, fan_out)))
    layout.append(("Wout", (widths[-1], spec.output_dim)))
    layout.append(("bout", (spec.output_dim,)))
    return layout


def buffer_layout(spec: MlpSpec) -> List[Tuple[str, Tuple[int, ...]]]:
    """Ordered (name, shape) of the batch-norm running statistics."""
    if not spec.batch_norm:
        return []
    layout = []
    for k, width in enumerate(spec.hidden_dims):
        layout.append((f"mean{k}", (width,)))
        layout.append((f"var{k}", (width,)))
    return layout


def _count(layout) -> int:
    return int(sum(np.prod(shape) for _, shape in layout))


def param_count(spec: MlpSpec) -> int:
    return _count(param_layout(spec))


def _views(flat: np.ndarray, layout) -> Dict[str, np.ndarray]:
    views, offset = {}, 0
    for name, shape in layout:
        size = int(np.prod(shape))
        views[name] = flat[offset:offset + size].reshape(shape)
        offset += size
    return views


@dataclass
class NetworkParams:
    spec: MlpSpec
    values: np.ndarray
    version: int = 0
    buffers: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (param_count(self.spec),):
            raise ShapeError(
                f"Parameter vector has {self.values.size} values, spec needs {param_count(self.spec)}"
            )
        expected = _count(buffer_layout(self.spec))
        if self.buffers.size == 0 and expected:
            self.buffers = default_buffers(self.spec)
        self.buffers = np.asarray(self.buffers, dtype=np.float64)
        if self.buffers.shape != (expected,):
            raise ShapeError(f"Buffer vector has {self.buffers.size} values, spec needs {expected}")

    def view(self, name: str) -> np.ndarray:
        """Writable view of one weight block."""
        return _views(self.values, param_layout(self.spec))[name]

    def buffer(self, name: str) -> np.ndarray:
        return _views(self.buffers, buffer_layout(self.spec))[name]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.spec, self.values.copy(), self.version, self.buffers.copy())


def default_buffers(spec: MlpSpec) -> np.ndarray:
    buffers = np.zeros(_count(buffer_layout(spec)))
    views = _views(buffers, buffer_layout(spec))
    for name, view in views.items():
        if name.startswith("var"):
            view[...] = 1.0
    return buffers


def init_params(spec: MlpSpec, rng: np.random.Generator) -> NetworkParams:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; BN scale 1, shift 0."""
    values = np.zeros(param_count(spec))
    views = _views(values, param_layout(spec))
    widths = spec.widths + [spec.output_dim]
    for name, shape in param_layout(spec):
        if name.startswith("gamma"):
            views[name][...] = 1.0
            continue
        if name.startswith("beta"):
            continue
        if name in ("Wout", "bout"):
            fan_in = widths[-2]
        else:
            fan_in = widths[int(name.lstrip("WbP"))]
        bound = 1.0 / np.sqrt(fan_in)
        views[name][...] = rng.uniform(-bound, bound, size=shape)
    return NetworkParams(spec=spec, values=values)


def zeros_like_params(spec: MlpSpec) -> NetworkParams:
    params = NetworkParams(spec=spec, values=np.zeros(param_count(spec)))
    for k in range(len(spec.hidden_dims)):
        if spec.batch_norm:
            params.view(f"gamma{k}")[...] = 1.0
    return params


@dataclass
class LayerCache:
    h_in: np.ndarray
    zhat: Optional[np.ndarray]
    std: Optional[np.ndarray]
    activated: np.ndarray
    pre_activation: np.ndarray


@dataclass
class Tape:
    spec: MlpSpec
    version: int
    values: np.ndarray
    mode: str
    layers: List[LayerCache]
    h_last: np.ndarray
    outputs: np.ndarray
    buffers: np.ndarray


def _activate(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_grad(spec: MlpSpec, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if spec.activation == "tanh":
        return 1.0 - a * a
    return (z > 0.0).astype(float)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def forward(params: NetworkParams, batch: np.ndarray, mode: str = "eval") -> Tuple[np.ndarray, Tape]:
    """
    Run the network on a (batch, input_dim) matrix.

    In train mode batch norm uses batch statistics and the tape carries the
    updated running statistics; `params` itself is never modified.
    """
    spec = params.spec
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"Expected input width {spec.input_dim}, got shape {x.shape}")
    if mode not in ("train", "eval"):
        raise ShapeError(f"Unknown mode: {mode}")

    w = _views(params.values, param_layout(spec))
    buffers = params.buffers.copy()
    running = _views(buffers, buffer_layout(spec))
    widths = spec.widths

    h = x
    layers: List[LayerCache] = []
    for k in range(len(spec.hidden_dims)):
        z = h @ w[f"W{k}"] + w[f"b{k}"]
        zhat = std = None
        if spec.batch_norm:
            if mode == "train":
                mean, var = z.mean(axis=0), z.var(axis=0)
                running[f"mean{k}"][...] = BN_MOMENTUM * running[f"mean{k}"] + (1 - BN_MOMENTUM) * mean
                running[f"var{k}"][...] = BN_MOMENTUM * running[f"var{k}"] + (1 - BN_MOMENTUM) * var
            else:
                mean, var = params.buffer(f"mean{k}"), params.buffer(f"var{k}")
            std = np.sqrt(var + BN_EPS)
            zhat = (z - mean) / std
            z = w[f"gamma{k}"] * zhat + w[f"beta{k}"]
        a = _activate(spec, z)
        out = a
        if spec.residual:
            out = out + (h if widths[k] == widths[k + 1] else h @ w[f"P{k}"])
        layers.append(LayerCache(h_in=h, zhat=zhat, std=std, activated=a, pre_activation=z))
        h = out

    logits = h @ w["Wout"] + w["bout"]
    outputs = softmax(logits) if spec.output_head == "softmax" else logits
    tape = Tape(
        spec=spec,
        version=params.version,
        values=params.values.copy(),
        mode=mode,
        layers=layers,
        h_last=h,
        outputs=outputs,
        buffers=buffers,
    )
    return outputs, tape


def commit_running_stats(params: NetworkParams, tape: Tape) -> NetworkParams:
    """Params carrying the running statistics a train-mode forward produced."""
    if not params.spec.batch_norm or tape.mode != "train":
        return params
    return NetworkParams(params.spec, params.values, params.version, tape.buffers.copy())


def backward(tape: Tape, output_gradient: np.ndarray, params: Optional[NetworkParams] = None):
    """
    Gradient of sum(outputs * output_gradient).

    Returns (parameter_gradient, input_gradient). Passing `params` checks the
    tape was recorded against the same parameter version.
    """
    spec = tape.spec
    if params is not None and (params.version != tape.version or params.spec != spec):
        raise ShapeError(f"Stale tape: recorded at version {tape.version}, params at {params.version}")
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.shape != tape.outputs.shape:
        raise ShapeError(f"Output gradient shape {g.shape} does not match outputs {tape.outputs.shape}")

    w = _views(tape.values, param_layout(spec))
    grads = np.zeros_like(tape.values)
    dw = _views(grads, param_layout(spec))
    widths = spec.widths

    if spec.output_head == "softmax":
        y = tape.outputs
        g = y * (g - np.sum(g * y, axis=1, keepdims=True))
    dw["Wout"][...] = tape.h_last.T @ g
    dw["bout"][...] = g.sum(axis=0)
    dh = g @ w["Wout"].T

    batch = g.shape[0]
    for k in reversed(range(len(spec.hidden_dims))):
        cache = tape.layers[k]
        dz = dh * _activation_grad(spec, cache.pre_activation, cache.activated)
        if spec.batch_norm:
            dw[f"gamma{k}"][...] = np.sum(dz * cache.zhat, axis=0)
            dw[f"beta{k}"][...] = dz.sum(axis=0)
            dzhat = dz * w[f"gamma{k}"]
            if tape.mode == "train":
                dz = (batch * dzhat - dzhat.sum(axis=0) - cache.zhat * np.sum(dzhat * cache.zhat, axis=0)) / (
                    batch * cache.std
                )
            else:
                dz = dzhat / cache.std
        dw[f"W{k}"][...] = cache.h_in.T @ dz
        dw[f"b{k}"][...] = dz.sum(axis=0)
        dh_in = dz @ w[f"W{k}"].T
        if spec.residual:
            if widths[k] == widths[k + 1]:
                dh_in = dh_in + dh
            else:
                dw[f"P{k}"][...] = cache.h_in.T @ dh
                dh_in = dh_in + dh @ w[f"P{k}"].T
        dh = dh_in

    return grads, dh
