"""Small float64 neural-network core: Dense / Conv1D / ReLU / Flatten, MSE and Adam."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class LayerSpec:
    kind: str  # Dense | Conv1D | ReLU | Flatten
    width: int = 0  # Dense units or Conv1D output channels
    kernel: int = 1
    padding: str = "same"


class Dense:
    kind = "Dense"

    def __init__(self, n_in: int, n_out: int):
        self.n_in, self.n_out = n_in, n_out
        self.W = np.zeros((n_in, n_out))
        self.b = np.zeros(n_out)

    @property
    def params(self):
        return [self.W, self.b]

    def init(self, rng):
        limit = np.sqrt(6.0 / self.n_in)
        self.W[...] = rng.uniform(-limit, limit, self.W.shape)
        self.b[...] = 0.0

    def output_shape(self, shape):
        if shape != (self.n_in,):
            raise ValueError(f"Dense expects ({self.n_in},), got {shape}")
        return (self.n_out,)

    def forward(self, x):
        return x @ self.W + self.b, x

    def backward(self, dy, x):
        return dy @ self.W.T, [x.T @ dy, dy.sum(axis=0)]

    def config(self):
        return {"kind": self.kind, "in": self.n_in, "out": self.n_out}


class Conv1D:
    """Cross-correlation over (batch, channels, length) with 'same' zero padding."""

    kind = "Conv1D"

    def __init__(self, in_channels: int, out_channels: int, kernel: int, padding: str = "same"):
        if padding != "same":
            raise ValueError(f"unsupported padding {padding!r}")
        if kernel < 1:
            raise ValueError("kernel must be >= 1")
        self.in_channels, self.out_channels, self.kernel = in_channels, out_channels, kernel
        self.pad_left = (kernel - 1) // 2
        self.pad_right = kernel - 1 - self.pad_left
        self.W = np.zeros((out_channels, in_channels, kernel))
        self.b = np.zeros(out_channels)

    @property
    def params(self):
        return [self.W, self.b]

    def init(self, rng):
        fan_in = self.in_channels * self.kernel
        limit = np.sqrt(6.0 / fan_in)
        self.W[...] = rng.uniform(-limit, limit, self.W.shape)
        self.b[...] = 0.0

    def output_shape(self, shape):
        if len(shape) != 2 or shape[0] != self.in_channels:
            raise ValueError(f"Conv1D expects ({self.in_channels}, L), got {shape}")
        return (self.out_channels, shape[1])

    def _cols(self, x):
        B, C, L = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad_left, self.pad_right)))
        win = sliding_window_view(xp, self.kernel, axis=2)  # (B, C, L, K)
        return win.transpose(0, 2, 1, 3).reshape(B * L, C * self.kernel)

    def forward(self, x):
        B, _, L = x.shape
        cols = self._cols(x)
        y = cols @ self.W.reshape(self.out_channels, -1).T + self.b
        return y.reshape(B, L, self.out_channels).transpose(0, 2, 1), (cols, x.shape)

    def backward(self, dy, cache):
        cols, (B, C, L) = cache
        dyr = dy.transpose(0, 2, 1).reshape(B * L, self.out_channels)
        dW = (dyr.T @ cols).reshape(self.W.shape)
        db = dyr.sum(axis=0)
        dcols = (dyr @ self.W.reshape(self.out_channels, -1)).reshape(B, L, C, self.kernel)
        dxp = np.zeros((B, C, L + self.kernel - 1))
        for k in range(self.kernel):
            dxp[:, :, k:k + L] += dcols[:, :, :, k].transpose(0, 2, 1)
        return dxp[:, :, self.pad_left:self.pad_left + L], [dW, db]

    def config(self):
        return {"kind": self.kind, "in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "padding": "same"}


class ReLU:
    kind = "ReLU"
    params: list = []

    def init(self, rng):
        pass

    def output_shape(self, shape):
        return shape

    def forward(self, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, dy, active):
        return dy * active, []

    def config(self):
        return {"kind": self.kind}


class Flatten:
    kind = "Flatten"
    params: list = []

    def init(self, rng):
        pass

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, shape):
        return dy.reshape(shape), []

    def config(self):
        return {"kind": self.kind}


class Sequential:
    def __init__(self, layers: Sequence, input_shape: tuple[int, ...]):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ValueError as exc:
                raise ValueError(f"layer {i} ({layer.kind}): {exc}") from None
        self.output_shape = shape

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def init(self, seed: int) -> "Sequential":
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init(rng)
        return self

    def topology(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [layer.config() for layer in self.layers]}

    def __call__(self, x):
        return forward(self, x)[0]


def build_network(input_shape: tuple[int, ...], specs: Sequence[LayerSpec], seed: int = 0) -> Sequential:
    """Instantiate a network from layer specs, inferring fan-in from the running shape."""
    layers = []
    shape = tuple(input_shape)
    for i, spec in enumerate(specs):
        if spec.kind == "Dense":
            if len(shape) != 1:
                raise ValueError(f"layer {i} (Dense): input shape {shape} is not flat")
            layer = Dense(shape[0], spec.width)
        elif spec.kind == "Conv1D":
            if len(shape) != 2:
                raise ValueError(f"layer {i} (Conv1D): input shape {shape} is not (channels, length)")
            layer = Conv1D(shape[0], spec.width, spec.kernel, spec.padding)
        elif spec.kind == "ReLU":
            layer = ReLU()
        elif spec.kind == "Flatten":
            layer = Flatten()
        else:
            raise ValueError(f"layer {i}: unknown kind {spec.kind!r}")
        shape = layer.output_shape(shape)
        layers.append(layer)
    return Sequential(layers, input_shape).init(seed)


def forward(model: Sequential, x: np.ndarray):
    """Evaluate a batch; returns ``(output, cache)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[1:] != model.input_shape:
        raise ValueError(f"layer 0 ({model.layers[0].kind if model.layers else '-'}): "
                         f"input shape {x.shape[1:]} != expected {model.input_shape}")
    caches = []
    for layer in model.layers:
        x, c = layer.forward(x)
        caches.append(c)
    return x, (caches, x)


def mse_loss(output: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((output - target) ** 2))


def backward(model: Sequential, cache, target: np.ndarray) -> list[np.ndarray]:
    """Gradients of the mean squared error w.r.t. every parameter, in ``model.params`` order."""
    caches, output = cache
    target = np.asarray(target, dtype=float)
    if target.shape != output.shape:
        raise ValueError(f"target shape {target.shape} != output shape {output.shape}")
    dy = 2.0 * (output - target) / output.size
    grads_rev = []
    for layer, c in zip(reversed(model.layers), reversed(caches)):
        dy, g = layer.backward(dy, c)
        grads_rev.append(g)
    return [g for layer_grads in reversed(grads_rev) for g in layer_grads]


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads and optimizer state disagree in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        # a single nan/inf anywhere poisons the sum, so one reduction suffices
        if not np.isfinite(np.sum(g)):
            raise ValueError("non-finite gradient")
    state.step_count += 1
    bias1 = 1.0 - state.beta1 ** state.step_count
    bias2 = 1.0 - state.beta2 ** state.step_count
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        kernels.adam_update(
            p.reshape(-1), np.ascontiguousarray(g, dtype=float).reshape(-1), m.reshape(-1), v.reshape(-1),
            state.lr, state.beta1, state.beta2, state.epsilon, bias1, bias2,
        )


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 200
    loss: str = "MSE"
    seed: int = 0
    lr: float = 1e-3

    def validate(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss != "MSE":
            raise ValueError(f"unsupported loss {self.loss!r}")


@dataclass
class TrainResult:
    loss_curve: list[float] = field(default_factory=list)
    optimizer: AdamState | None = None


def train(model: Sequential, X: np.ndarray, Y: np.ndarray, cfg: TrainConfig) -> TrainResult:
    """Seeded mini-batch Adam on MSE; the curve holds each epoch's sample-weighted mean batch loss."""
    cfg.validate()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = len(X)
    if n == 0:
        raise ValueError("empty training set")
    if len(Y) != n:
        raise ValueError("inputs and targets differ in length")
    if not np.all(np.isfinite(Y)):
        raise ValueError("non-finite training targets")
    rng = np.random.default_rng(cfg.seed)
    params = model.params
    state = AdamState.for_params(params, lr=cfg.lr)
    result = TrainResult(optimizer=state)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            out, cache = forward(model, X[idx])
            total += mse_loss(out, Y[idx]) * len(idx)
            adam_step(state, params, backward(model, cache, Y[idx]))
        result.loss_curve.append(total / n)
        log.debug("epoch %d loss %.6g", epoch + 1, result.loss_curve[-1])
    return result


def save_model(model: Sequential, path: str | Path, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``<path>.json`` (topology) and ``<path>.bin`` (little-endian float64 parameters)."""
    path = Path(path)
    meta = {"format_version": FORMAT_VERSION, **model.topology(),
            "params": [{"shape": list(p.shape)} for p in model.params], "extra": extra or {}}
    jpath, bpath = path.with_suffix(".json"), path.with_suffix(".bin")
    jpath.write_text(json.dumps(meta, indent=2, sort_keys=True))
    bpath.write_bytes(b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params))
    return jpath, bpath


_LAYER_FACTORY = {
    "Dense": lambda c: Dense(c["in"], c["out"]),
    "Conv1D": lambda c: Conv1D(c["in_channels"], c["out_channels"], c["kernel"], c.get("padding", "same")),
    "ReLU": lambda c: ReLU(),
    "Flatten": lambda c: Flatten(),
}


def load_model(path: str | Path) -> tuple[Sequential, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {meta.get('format_version')}")
    model = Sequential([_LAYER_FACTORY[c["kind"]](c) for c in meta["layers"]], tuple(meta["input_shape"]))
    blob = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    offset = 0
    for p, spec in zip(model.params, meta["params"]):
        if list(p.shape) != spec["shape"]:
            raise ValueError("parameter shapes in weights file do not match topology")
        p[...] = blob[offset:offset + p.size].reshape(p.shape)
        offset += p.size
    if offset != blob.size:
        raise ValueError("weights file size does not match topology")
    return model, meta.get("extra", {})
