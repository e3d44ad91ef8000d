"""Minimal dense feed-forward network with manual backpropagation.

Layers are fully connected with an optional ReLU and inverted dropout
(kept activations are scaled by 1/keep at train time, so evaluation is a
plain forward pass).  Gradients terminate in a loss gradient w.r.t. the
final-layer output supplied by the caller.

Checkpoint format (round-trip tested, version 1): an ASCII header
``lossforge-mlp 1``, one ``layer <in> <out> <activation> <keep>`` line per
layer, then ``params`` followed by the raw little-endian float64 bytes of
each layer's weight matrix (row-major) and bias vector, in layer order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, add_bias, argmax_rows, as_dense2, matmul
from .rng import Rng

RELU = "relu"
LINEAR = "linear"

_MAGIC = b"lossforge-mlp"
_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = RELU
    dropout_keep: float = 1.0

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in (RELU, LINEAR):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")


def mlp_specs(in_dim: int, n_classes: int, hidden_layers: int,
              hidden_width: int, dropout_keep: float = 1.0) -> list[LayerSpec]:
    """Spec chain for a rectifier MLP: ``hidden_layers`` ReLU layers (each
    followed by dropout) and a linear output layer.  ``hidden_layers=0``
    yields a single linear map, with no dropout anywhere."""
    specs = []
    d = in_dim
    for _ in range(hidden_layers):
        specs.append(LayerSpec(d, hidden_width, RELU, dropout_keep))
        d = hidden_width
    specs.append(LayerSpec(d, n_classes, LINEAR, 1.0))
    return specs


class MlpModel:
    """Dense layer stack; owns its parameters. Single writer during training."""

    def __init__(self, specs: list[LayerSpec], weights: list[np.ndarray],
                 biases: list[np.ndarray], mode: str = "train"):
        for a, b in zip(specs, specs[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        for s, w, bias in zip(specs, weights, biases):
            if w.shape != (s.in_dim, s.out_dim) or bias.shape != (s.out_dim,):
                raise ShapeError(f"parameter shapes do not match spec {s}")
        self.specs = list(specs)
        self.weights = weights
        self.biases = biases
        self.mode = mode

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    def train(self) -> "MlpModel":
        self.mode = "train"
        return self

    def eval(self) -> "MlpModel":
        self.mode = "eval"
        return self

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...] shared with the optimizer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def parameter_names(self) -> list[str]:
        out = []
        for i in range(len(self.weights)):
            out.extend((f"layer{i}.weights", f"layer{i}.bias"))
        return out


def init(specs: list[LayerSpec], rng: Rng) -> MlpModel:
    """He-scaled init: W ~ Normal(0, 2/in_dim), biases zero."""
    weights, biases = [], []
    for s in specs:
        sd = np.sqrt(2.0 / s.in_dim)
        weights.append(rng.normal((s.in_dim, s.out_dim), sd=sd))
        biases.append(np.zeros(s.out_dim))
    return MlpModel(specs, weights, biases)


def forward(model: MlpModel, x: np.ndarray, rng: Rng | None = None):
    """Run the stack; returns (output batch, cache for backward).

    In train mode each hidden activation with dropout_keep < 1 is masked by
    Bernoulli(keep)/keep draws from ``rng``; eval mode is deterministic and
    never consults the generator.
    """
    x = as_dense2(x, "input")
    if x.shape[1] != model.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, model expects {model.in_dim}")
    cache = []
    h = x
    for spec, w, b in zip(model.specs, model.weights, model.biases):
        z = add_bias(matmul(h, w), b)
        a = np.maximum(z, 0.0) if spec.activation == RELU else z
        mask = None
        if model.mode == "train" and spec.dropout_keep < 1.0:
            if rng is None:
                raise ValueError("train-mode forward with dropout needs an rng")
            keep = spec.dropout_keep
            mask = (rng.uniform(z.shape) < keep).astype(np.float64) / keep
            a = a * mask
        cache.append((h, z, mask))
        h = a
    return h, cache


def backward(model: MlpModel, cache, d_out: np.ndarray) -> list[np.ndarray]:
    """Backpropagate dL/do through the cached forward pass.

    Returns gradients in the ``parameters()`` order [dW0, db0, dW1, ...].
    Dropout masks recorded by the forward pass are reused as-is.
    """
    d_out = as_dense2(d_out, "output gradient")
    if len(cache) != len(model.specs):
        raise ShapeError("cache does not match model depth")
    if d_out.shape != (cache[-1][0].shape[0], model.out_dim):
        raise ShapeError(f"output gradient shape {d_out.shape} does not match model")
    grads_w = [None] * len(model.specs)
    grads_b = [None] * len(model.specs)
    delta = d_out
    for i in reversed(range(len(model.specs))):
        x_in, z, mask = cache[i]
        if mask is not None:
            delta = delta * mask
        if model.specs[i].activation == RELU:
            delta = delta * (z > 0.0)
        grads_w[i] = matmul(x_in.T, delta)
        grads_b[i] = np.sum(delta, axis=0)
        if i > 0:
            delta = matmul(delta, model.weights[i].T)
    out = []
    for gw, gb in zip(grads_w, grads_b):
        out.extend((gw, gb))
    return out


def predict_classes(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Argmax class per row (lowest index on ties); requires eval mode."""
    if model.mode != "eval":
        raise ValueError("predict_classes requires eval mode")
    o, _ = forward(model, x)
    return argmax_rows(o)


def save_model(model: MlpModel, path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC + b" %d\n" % _VERSION)
        f.write(b"layers %d\n" % len(model.specs))
        for s in model.specs:
            f.write(f"layer {s.in_dim} {s.out_dim} {s.activation} {s.dropout_keep!r}\n".encode())
        f.write(b"params\n")
        for w, b in zip(model.weights, model.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as f:
        header = f.readline().split()
        if header[:1] != [_MAGIC] or len(header) != 2 or int(header[1]) != _VERSION:
            raise ValueError(f"not a version-{_VERSION} model checkpoint: {path}")
        n_layers = int(f.readline().split()[1])
        specs = []
        for _ in range(n_layers):
            parts = f.readline().split()
            specs.append(LayerSpec(int(parts[1]), int(parts[2]),
                                   parts[3].decode(), float(parts[4])))
        if f.readline().strip() != b"params":
            raise ValueError("malformed checkpoint: missing params section")
        weights, biases = [], []
        for s in specs:
            nbytes = s.in_dim * s.out_dim * 8
            w = np.frombuffer(f.read(nbytes), dtype="<f8").reshape(s.in_dim, s.out_dim)
            b = np.frombuffer(f.read(s.out_dim * 8), dtype="<f8")
            if w.size != s.in_dim * s.out_dim or b.size != s.out_dim:
                raise ValueError("truncated checkpoint")
            weights.append(w.copy())
            biases.append(b.copy())
    model = MlpModel(specs, weights, biases)
    return model.eval()
