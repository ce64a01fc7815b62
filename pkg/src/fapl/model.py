"""MLP embedding with a linear classifier head, analytic backprop, momentum SGD.

Weights are stored as ``(fan_in, fan_out)`` so a layer is ``h @ W + b``; the head
computes ``y = x @ W + b`` which is ``W^T x + b`` per sample.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericError, ParseError, ShapeError


ACTIVATIONS = ("tanh", "softplus")


@dataclass
class ModelParams:
    layers: list[tuple[np.ndarray, np.ndarray]]
    W: np.ndarray
    b: np.ndarray
    activation: str = "tanh"
    final_activation: bool = True

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        prev = None
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} inconsistent")
            if prev is not None and w.shape[0] != prev:
                raise ShapeError(f"layer {i}: fan-in {w.shape[0]} != previous width {prev}")
            prev = w.shape[1]
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ShapeError(f"head weight {self.W.shape} / bias {self.b.shape} inconsistent")
        if prev is not None and self.W.shape[0] != prev:
            raise ShapeError(f"head fan-in {self.W.shape[0]} != embedding width {prev}")

    @property
    def d_in(self) -> int:
        return self.layers[0][0].shape[0] if self.layers else self.W.shape[0]

    @property
    def d_feat(self) -> int:
        return self.W.shape[0]

    @property
    def n_out(self) -> int:
        return self.W.shape[1]

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in self.layers:
            out += [w, b]
        return out + [self.W, self.b]

    @classmethod
    def from_tensors(cls, tensors: Sequence[np.ndarray], activation: str = "tanh", final_activation: bool = True) -> ModelParams:
        t = list(tensors)
        if len(t) % 2 or not t:
            raise ShapeError("tensor list must hold (weight, bias) pairs")
        layers = [(t[i], t[i + 1]) for i in range(0, len(t) - 2, 2)]
        return cls(layers, t[-2], t[-1], activation, final_activation)

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> ModelParams:
        return ModelParams.from_tensors(tensors, self.activation, self.final_activation)

    def copy(self) -> ModelParams:
        return self.with_tensors([a.copy() for a in self.tensors()])

    def zeros_like(self) -> ModelParams:
        return self.with_tensors([np.zeros_like(a) for a in self.tensors()])

    def activated(self, i: int) -> bool:
        """Whether embedding layer ``i`` is followed by the nonlinearity."""
        return self.final_activation or i < len(self.layers) - 1


def init_params(
    d_in: int,
    layer_sizes: Sequence[int],
    n_out: int,
    seed: int = 0,
    activation: str = "tanh",
    final_activation: bool = True,
) -> ModelParams:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights, zero biases.

    ``layer_sizes`` lists the width of each embedding layer; empty means the
    embedding is the identity and ``d_feat == d_in``.
    """
    rng = np.random.default_rng(seed)
    dims = [d_in, *layer_sizes]
    if min(dims) < 1 or n_out < 1:
        raise ShapeError(f"all widths must be >= 1: {dims} -> {n_out}")

    def uniform(fan_in, fan_out):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    layers = [(uniform(i, o), np.zeros(o)) for i, o in zip(dims[:-1], dims[1:])]
    return ModelParams(layers, uniform(dims[-1], n_out), np.zeros(n_out), activation, final_activation)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    return np.logaddexp(0.0, z)


def _act_grad(name: str, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Derivative of the activation given its input ``z`` and output ``h``."""
    if name == "tanh":
        return 1.0 - h * h
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class ForwardCache:
    activations: list[np.ndarray]  # input, then each embedding layer output
    preacts: list[np.ndarray]

    @property
    def x(self) -> np.ndarray:
        return self.activations[-1]


def _as_batch(params: ModelParams, inputs) -> tuple[np.ndarray, bool]:
    arr = np.asarray(inputs, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != params.d_in:
        raise ShapeError(f"input shape {np.shape(inputs)} does not match d_in={params.d_in}")
    return arr, single


def forward_cached(params: ModelParams, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Batch forward pass; ``inputs`` must be 2-D."""
    h = inputs
    acts = [h]
    pre = []
    for i, (w, b) in enumerate(params.layers):
        z = h @ w + b
        h = _act(params.activation, z) if params.activated(i) else z
        pre.append(z)
        acts.append(h)
    y = h @ params.W + params.b
    return h, y, ForwardCache(acts, pre)


def forward(params: ModelParams, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Return the embedding ``x`` and logits ``y`` for one sample or a batch."""
    arr, single = _as_batch(params, inputs)
    x, y, _ = forward_cached(params, arr)
    if single:
        return x[0], y[0]
    return x, y


def embed(params: ModelParams, inputs) -> np.ndarray:
    return forward(params, inputs)[0]


def backward(params: ModelParams, inputs, grad_y, grad_x_extra=None, cache: ForwardCache | None = None) -> ModelParams:
    """Gradients of a scalar loss given its gradient w.r.t. the logits.

    ``grad_x_extra`` is added to the gradient flowing into the embedding ``x``
    (the center-loss term). Returns a ``ModelParams`` holding the gradients.
    """
    arr, single = _as_batch(params, inputs)
    gy = np.atleast_2d(np.asarray(grad_y, dtype=np.float64))
    if gy.shape != (arr.shape[0], params.n_out):
        raise ShapeError(f"grad_y shape {np.shape(grad_y)} != {(arr.shape[0], params.n_out)}")
    if cache is None:
        _, _, cache = forward_cached(params, arr)
    acts = cache.activations
    x = acts[-1]

    gW = x.T @ gy
    gb = gy.sum(axis=0)
    gx = gy @ params.W.T
    if grad_x_extra is not None:
        extra = np.atleast_2d(np.asarray(grad_x_extra, dtype=np.float64))
        if extra.shape != gx.shape:
            raise ShapeError(f"grad_x_extra shape {np.shape(grad_x_extra)} != {gx.shape}")
        gx = gx + extra

    grads: list[tuple[np.ndarray, np.ndarray]] = []
    g = gx
    for i in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[i]
        if params.activated(i):
            g = g * _act_grad(params.activation, cache.preacts[i], acts[i + 1])
        grads.append((acts[i].T @ g, g.sum(axis=0)))
        if i > 0:
            g = g @ w.T
    grads.reverse()
    return ModelParams(grads, gW, gb, params.activation, params.final_activation)


def softmax_prob(y) -> np.ndarray:
    """Max-shifted softmax along the last axis."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise NumericError("softmax input contains non-finite values")
    e = np.exp(y - y.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class OptimizerState:
    lr: float
    momentum: float = 0.9
    velocity: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: ModelParams, lr: float, momentum: float = 0.9) -> OptimizerState:
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        return cls(lr, momentum, [np.zeros_like(t) for t in params.tensors()])


def sgd_step(params: ModelParams, grads: ModelParams, opt: OptimizerState) -> ModelParams:
    """``v = momentum * v + g``; ``theta = theta - lr * v``. Velocities update in place."""
    ps, gs = params.tensors(), grads.tensors()
    if not opt.velocity:
        opt.velocity = [np.zeros_like(t) for t in ps]
    if len(ps) != len(gs) or len(ps) != len(opt.velocity):
        raise ShapeError("parameter, gradient and velocity lists differ in length")
    new = []
    for p, g, v in zip(ps, gs, opt.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {v.shape}")
        v *= opt.momentum
        v += g
        new.append(p - opt.lr * v)
    return params.with_tensors(new)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, params: ModelParams, centers: np.ndarray | None = None, config: dict | None = None) -> None:
    """JSON checkpoint; floats are written with shortest round-trip repr."""
    doc = {
        "format": "fapl-checkpoint/1",
        "activation": params.activation,
        "final_activation": params.final_activation,
        "shapes": [list(t.shape) for t in params.tensors()],
        "tensors": [t.ravel().tolist() for t in params.tensors()],
        "config_hash": config_hash(config or {}),
    }
    if centers is not None:
        doc["centers"] = {"shape": list(centers.shape), "values": centers.ravel().tolist()}
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path) -> tuple[ModelParams, np.ndarray | None, str]:
    """Return ``(params, centers, config_hash)``; raises ``ParseError`` on any malformed content."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != "fapl-checkpoint/1":
        raise ParseError(f"{path}: not a fapl checkpoint")
    try:
        shapes, flat = doc["shapes"], doc["tensors"]
        if len(shapes) != len(flat):
            raise ParseError(f"{path}: {len(shapes)} shapes for {len(flat)} tensors")
        tensors = []
        for shape, vals in zip(shapes, flat):
            arr = np.asarray(vals, dtype=np.float64)
            if arr.size != int(np.prod(shape)):
                raise ParseError(f"{path}: tensor of {arr.size} values cannot have shape {shape}")
            tensors.append(arr.reshape(shape))
        if not all(np.all(np.isfinite(t)) for t in tensors):
            raise ParseError(f"{path}: non-finite parameter values")
        params = ModelParams.from_tensors(
            tensors, doc.get("activation", "tanh"), bool(doc.get("final_activation", True))
        )
        centers = None
        if "centers" in doc:
            c = doc["centers"]
            centers = np.asarray(c["values"], dtype=np.float64).reshape(c["shape"])
        return params, centers, str(doc.get("config_hash", ""))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed checkpoint ({exc})") from None
