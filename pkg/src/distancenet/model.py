"""Feed-forward encoder + classifier head trained with a distance-regularized loss.

The encoder maps an input vector to a representation ``h`` (tanh hidden
layers, linear output layer).  The head maps ``h`` to class logits (ReLU
hidden layers, linear logits) followed by a softmax.  The training objective
is

    total = cross_entropy(source predictions) + beta * D(h_source, h_target)

where ``D`` is a single distance measure or a mixture.  Gradients are exact
reverse-mode derivatives written out by hand.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numerics
from .distances import DomainBatch, FldConfig, KernelConfig, MixtureSpec, d_mixture, grad_distance
from .errors import DimensionMismatch, ParseError

LOG_CLAMP = 1e-12
MAGIC = b"DNPM"
FORMAT_VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape

    def copy(self) -> "Layer":
        return Layer(self.weight.copy(), self.bias.copy())


@dataclass
class ModelParams:
    """Encoder layers (theta1) followed by head layers (theta2)."""

    encoder: list[Layer]
    head: list[Layer]

    def __post_init__(self):
        layers = self.layers
        if not self.encoder or not self.head:
            raise ValueError("encoder and head each need at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise DimensionMismatch(f"layer shapes do not chain: {a.shape} -> {b.shape}")
        for layer in layers:
            if layer.bias.shape != (layer.weight.shape[1],):
                raise DimensionMismatch(f"bias shape {layer.bias.shape} does not match weight {layer.shape}")

    @classmethod
    def init(
        cls,
        d_in: int,
        n_classes: int = 2,
        hidden: Sequence[int] = (32,),
        d_rep: int = 32,
        head_hidden: Sequence[int] = (16,),
        rng: np.random.Generator | int | None = 0,
    ) -> "ModelParams":
        """Random weights scaled by ``1/sqrt(fan_in)``, zero biases."""
        rng = np.random.default_rng(rng)
        enc_sizes = [d_in, *hidden, d_rep]
        head_sizes = [d_rep, *head_hidden, n_classes]

        def make(sizes):
            return [
                Layer(rng.normal(size=(a, b)) / np.sqrt(a), np.zeros(b))
                for a, b in zip(sizes, sizes[1:])
            ]

        return cls(make(enc_sizes), make(head_sizes))

    @classmethod
    def zeros_like(cls, other: "ModelParams") -> "ModelParams":
        return cls(
            [Layer(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in other.encoder],
            [Layer(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in other.head],
        )

    @property
    def layers(self) -> list[Layer]:
        return [*self.encoder, *self.head]

    @property
    def d_in(self) -> int:
        return self.encoder[0].weight.shape[0]

    @property
    def d_rep(self) -> int:
        return self.encoder[-1].weight.shape[1]

    @property
    def n_classes(self) -> int:
        return self.head[-1].weight.shape[1]

    def tensors(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> "ModelParams":
        tensors = list(tensors)
        layers = [Layer(np.asarray(w, float), np.asarray(b, float)) for w, b in zip(tensors[::2], tensors[1::2])]
        n_enc = len(self.encoder)
        return ModelParams(layers[:n_enc], layers[n_enc:])

    def copy(self) -> "ModelParams":
        return ModelParams([l.copy() for l in self.encoder], [l.copy() for l in self.head])

    # -- binary serialization ------------------------------------------------

    def to_bytes(self) -> bytes:
        header = [MAGIC, struct.pack("<III", FORMAT_VERSION, len(self.encoder), len(self.head))]
        for layer in self.layers:
            header.append(struct.pack("<II", *layer.shape))
        body = [np.ascontiguousarray(t, dtype="<f8").tobytes() for t in self.tensors()]
        return b"".join(header + body)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelParams":
        if data[:4] != MAGIC:
            raise ParseError("not a parameter file (bad magic)")
        version, n_enc, n_head = struct.unpack_from("<III", data, 4)
        if version != FORMAT_VERSION:
            raise ParseError(f"unsupported parameter file version {version}")
        offset = 16
        shapes = []
        for _ in range(n_enc + n_head):
            shapes.append(struct.unpack_from("<II", data, offset))
            offset += 8
        layers = []
        for rows, cols in shapes:
            count = rows * cols
            w = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(rows, cols)
            offset += 8 * count
            b = np.frombuffer(data, dtype="<f8", count=cols, offset=offset)
            offset += 8 * cols
            layers.append(Layer(w.astype(np.float64), b.astype(np.float64)))
        if offset != len(data):
            raise ParseError(f"parameter file has {len(data) - offset} trailing bytes")
        return cls(layers[:n_enc], layers[n_enc:])

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ModelParams":
        return cls.from_bytes(Path(path).read_bytes())


@dataclass
class LabeledBatch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = self.inputs
        if isinstance(x, np.ndarray) and x.ndim == 2 and x.shape[0] == 0:
            self.inputs = x.astype(np.float64)  # an empty split keeps its dimension
        else:
            self.inputs = numerics.as_samples(x)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise DimensionMismatch("inputs and labels differ in length")
        if np.any(self.labels < 0):
            raise ValueError("labels must be nonnegative class indices")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def take(self, idx) -> "LabeledBatch":
        return LabeledBatch(self.inputs[idx], self.labels[idx])


@dataclass
class LossBreakdown:
    total: float
    xe: float
    distance: float
    beta: float
    measure: str = ""


# --------------------------------------------------------------------------
# Forward / loss
# --------------------------------------------------------------------------


TANH, RELU = "tanh", "relu"


def _run_stack(layers: list[Layer], x: np.ndarray, act: str = TANH) -> list[np.ndarray]:
    """Activations of a stack: [input, a1, ..., out]; ``act`` on all but the last layer."""
    acts = [x]
    for i, layer in enumerate(layers):
        z = acts[-1] @ layer.weight + layer.bias
        if i != len(layers) - 1:
            z = np.tanh(z) if act == TANH else np.maximum(z, 0.0)
        acts.append(z)
    return acts


def _back_stack(
    layers: list[Layer], acts: list[np.ndarray], g_out: np.ndarray, grads: list[Layer], act: str = TANH
) -> np.ndarray:
    """Accumulate parameter gradients into ``grads``; return the input gradient."""
    g = g_out
    for i in range(len(layers) - 1, -1, -1):
        if i != len(layers) - 1:
            # ReLU derivative at exactly 0 is taken as 0.
            g = g * ((1.0 - acts[i + 1] ** 2) if act == TANH else (acts[i + 1] > 0.0))
        grads[i].weight += acts[i].T @ g
        grads[i].bias += g.sum(axis=0)
        g = g @ layers[i].weight.T
    return g


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _check_inputs(params: ModelParams, inputs) -> np.ndarray:
    x = numerics.as_samples(inputs)
    if x.shape[1] != params.d_in:
        raise DimensionMismatch(f"model expects dimension {params.d_in}, got {x.shape[1]}")
    return x


def encode(params: ModelParams, inputs) -> np.ndarray:
    return _run_stack(params.encoder, _check_inputs(params, inputs))[-1]


def forward(params: ModelParams, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(representations, class_probabilities)`` for a batch of inputs."""
    reps = encode(params, inputs)
    logits = _run_stack(params.head, reps, RELU)[-1]
    return reps, _softmax_rows(logits)


def predict(params: ModelParams, inputs) -> np.ndarray:
    return np.argmax(forward(params, inputs)[1], axis=1)


def xe_loss(probs: np.ndarray, labels) -> float:
    """Mean cross-entropy with the log clamped at 1e-12."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    picked = probs[np.arange(labels.shape[0]), labels]
    return float(np.mean(-np.log(np.maximum(picked, LOG_CLAMP))))


def _mixture(spec) -> MixtureSpec:
    return MixtureSpec.of(spec)


def distancenet_loss(
    params: ModelParams,
    src: LabeledBatch,
    tgt_inputs,
    spec,
    beta: float,
    kernel: KernelConfig | None = None,
    fld: FldConfig | None = None,
) -> LossBreakdown:
    return _loss_and_grads(params, src, tgt_inputs, spec, beta, kernel, fld, need_grads=False)[0]


def backward(
    params: ModelParams,
    src: LabeledBatch,
    tgt_inputs,
    spec,
    beta: float,
    kernel: KernelConfig | None = None,
    fld: FldConfig | None = None,
) -> tuple[ModelParams, LossBreakdown]:
    """Exact gradient of ``LossBreakdown.total`` with respect to every parameter."""
    loss, grads = _loss_and_grads(params, src, tgt_inputs, spec, beta, kernel, fld, need_grads=True)
    return grads, loss


def _loss_and_grads(params, src, tgt_inputs, spec, beta, kernel, fld, need_grads):
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    mixture = _mixture(spec)
    xs = _check_inputs(params, src.inputs)
    xt = _check_inputs(params, tgt_inputs)
    if np.any(src.labels >= params.n_classes):
        raise ValueError("label out of range for the model's class count")

    enc_s = _run_stack(params.encoder, xs)
    enc_t = _run_stack(params.encoder, xt)
    head_s = _run_stack(params.head, enc_s[-1], RELU)
    probs = _softmax_rows(head_s[-1])
    xe = xe_loss(probs, src.labels)

    hs, ht = DomainBatch(enc_s[-1]), DomainBatch(enc_t[-1])
    dist = d_mixture(hs, ht, mixture, kernel, fld)
    loss = LossBreakdown(xe + beta * dist, xe, dist, beta, mixture.describe())
    if not need_grads:
        return loss, None

    grads = ModelParams.zeros_like(params)
    n = xs.shape[0]
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), src.labels] = 1.0
    g_rep_s = _back_stack(params.head, head_s, (probs - onehot) / n, grads.head, RELU)
    g_rep_t = np.zeros_like(enc_t[-1])
    if beta != 0.0:
        gs, gt = grad_distance(mixture, hs, ht, kernel, fld)
        g_rep_s = g_rep_s + beta * gs
        g_rep_t = beta * gt
    _back_stack(params.encoder, enc_s, g_rep_s, grads.encoder)
    if beta != 0.0:
        _back_stack(params.encoder, enc_t, g_rep_t, grads.encoder)
    return loss, grads


# --------------------------------------------------------------------------
# Optimisation
# --------------------------------------------------------------------------


def sgd_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    learning_rate: float,
    momentum: float = 0.0,
    velocity: Sequence[np.ndarray] | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Heavy-ball update: ``v <- momentum * v + g``, ``p <- p - lr * v``.

    Returns new parameter and velocity lists; the inputs are left untouched.
    """
    if len(params) != len(grads):
        raise DimensionMismatch("parameter and gradient lists differ in length")
    if velocity is None:
        velocity = [np.zeros_like(p, dtype=np.float64) for p in params]
    new_params, new_velocity = [], []
    for p, g, v in zip(params, grads, velocity):
        p, g, v = np.asarray(p, float), np.asarray(g, float), np.asarray(v, float)
        if p.shape != g.shape:
            raise DimensionMismatch(f"parameter shape {p.shape} != gradient shape {g.shape}")
        v = momentum * v + g
        new_velocity.append(v)
        new_params.append(p - learning_rate * v)
    return new_params, new_velocity


@dataclass
class MomentumSGD:
    learning_rate: float = 0.05
    momentum: float = 0.9
    velocity: list[np.ndarray] | None = field(default=None, repr=False)

    def step(self, params: ModelParams, grads: ModelParams) -> ModelParams:
        new, self.velocity = sgd_step(params.tensors(), grads.tensors(), self.learning_rate, self.momentum, self.velocity)
        return params.with_tensors(new)
