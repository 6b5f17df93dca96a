"""Dense tanh network with hand-written reverse mode, gradient checking and Adam.

Layout convention: a batch is ``(n_rows, n_features)`` and layer ``i`` maps
``h -> h @ W[i] + b[i]``. Hidden layers use tanh, the last layer is affine.

Optionally the network acts as a state-update map: ``skip`` is a fixed
``(n_in, n_out)`` pass-through matrix (``True`` means the first ``n_out``
inputs map to the outputs one to one) and ``out_scale`` multiplies the affine
head per output column::

    y = x @ S + out_scale * (h_L @ W_L + b_L)
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFinite

DEFAULT_LAYERS = (3, 128, 128, 128, 2)
CHECKPOINT_MAGIC = b"SISRNET1"


@dataclass
class NetworkParams:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None
    skip: np.ndarray | bool | None = None
    out_scale: np.ndarray | None = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of weight/bias arrays does not match layer_sizes")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if W.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {i}: got W{W.shape}, b{b.shape}, expected W{shape}")
        n_in, n_out = self.layer_sizes[0], self.layer_sizes[-1]
        if self.skip is True:
            if n_in < n_out:
                raise ValueError("identity skip needs n_in >= n_out")
            self.skip = np.eye(n_in, n_out)
        elif self.skip is False or self.skip is None:
            self.skip = None
        else:
            self.skip = np.asarray(self.skip, dtype=float)
            if self.skip.shape != (n_in, n_out):
                raise ValueError(f"skip matrix must have shape {(n_in, n_out)}")
        if self.out_scale is not None:
            self.out_scale = np.asarray(self.out_scale, dtype=float).reshape(self.layer_sizes[-1])

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([x.ravel() for x in self.arrays()])

    def with_flat(self, theta: np.ndarray) -> "NetworkParams":
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        weights, biases, pos = [], [], 0
        for W, b in zip(self.weights, self.biases):
            weights.append(theta[pos : pos + W.size].reshape(W.shape).copy())
            pos += W.size
            biases.append(theta[pos : pos + b.size].copy())
            pos += b.size
        return NetworkParams(self.layer_sizes, weights, biases, self.seed, self.skip, self.out_scale)

    def copy(self) -> "NetworkParams":
        return self.with_flat(self.flat())

    def structure(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "seed": self.seed,
            "skip": None if self.skip is None else self.skip.tolist(),
            "out_scale": None if self.out_scale is None else self.out_scale.tolist(),
        }


def init_network(
    seed: int = 42,
    layer_sizes=DEFAULT_LAYERS,
    skip=None,
    out_scale=None,
) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(tuple(layer_sizes), weights, biases, seed, skip, out_scale)


@dataclass
class Tape:
    """Activations of one forward pass: the input and every tanh output."""

    x: np.ndarray
    hidden: list[np.ndarray] = field(default_factory=list)


def forward(net: NetworkParams, x) -> tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[1] != net.layer_sizes[0]:
        raise ValueError(f"batch has {x.shape[1]} features, network expects {net.layer_sizes[0]}")
    tape = Tape(x)
    h = x
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.tanh(h @ W + b)
        tape.hidden.append(h)
    y = h @ net.weights[-1] + net.biases[-1]
    if net.out_scale is not None:
        y = y * net.out_scale
    if net.skip is not None:
        y = y + x @ net.skip
    if not np.all(np.isfinite(y)):
        raise NonFinite("network output is not finite")
    return y, tape


def predict(net: NetworkParams, x) -> np.ndarray:
    return forward(net, x)[0]


def backward(net: NetworkParams, tape: Tape, dy) -> list[np.ndarray]:
    """Gradient of sum(dy * y) w.r.t. ``[W0, b0, W1, b1, ...]``."""
    dy = np.asarray(dy, dtype=float)
    n_out = net.layer_sizes[-1]
    if dy.shape != (tape.x.shape[0], n_out):
        raise ValueError(f"cotangent shape {dy.shape} does not match outputs {(tape.x.shape[0], n_out)}")
    if net.out_scale is not None:
        dy = dy * net.out_scale
    acts = [tape.x] + tape.hidden
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))
    delta = dy
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (1.0 - acts[i] ** 2)
    return grads


def flatten(arrays) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays])


def finite_difference_grad(loss_fn, net: NetworkParams, indices, step: float = 1e-6) -> np.ndarray:
    """Central differences of ``loss_fn(net)`` for selected flat parameter indices."""
    theta = net.flat()
    out = np.empty(len(indices))
    for j, k in enumerate(indices):
        up = theta.copy()
        up[k] += step
        dn = theta.copy()
        dn[k] -= step
        out[j] = (loss_fn(net.with_flat(up)) - loss_fn(net.with_flat(dn))) / (2.0 * step)
    return out


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def for_params(cls, net: NetworkParams, lr: float = 1e-3, **kw) -> "AdamState":
        arrays = net.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0, lr, **kw)


def adam_step(state: AdamState, grads, net: NetworkParams) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update; returns new parameters and state."""
    params = net.arrays()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match parameters")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m = [b1 * mi + (1.0 - b1) * g for mi, g in zip(state.first_moment, grads)]
    v = [b2 * vi + (1.0 - b2) * g * g for vi, g in zip(state.second_moment, grads)]
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new = [
        p - state.lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps_hat)
        for p, mi, vi in zip(params, m, v)
    ]
    weights, biases = new[0::2], new[1::2]
    out = NetworkParams(net.layer_sizes, weights, biases, net.seed, net.skip, net.out_scale)
    return out, AdamState(m, v, t, state.lr, b1, b2, state.eps_hat)


def save_checkpoint(path, net: NetworkParams, epoch: int | None = None, metrics: dict | None = None, extra: dict | None = None) -> None:
    """Write ``MAGIC | uint32 LE header length | JSON header | float64 LE parameters``."""
    header = {**net.structure(), "epoch": epoch, "metrics": metrics or {}, "n_params": net.n_params}
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(net.flat().astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack("<I", raw[pos : pos + 4])
    pos += 4
    header = json.loads(raw[pos : pos + n].decode("utf-8"))
    theta = np.frombuffer(raw[pos + n :], dtype="<f8").astype(float)
    template = init_network(0, header["layer_sizes"], header["skip"], header["out_scale"])
    net = template.with_flat(theta)
    net.seed = header["seed"]
    return net, header
