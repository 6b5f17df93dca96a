"""Euler-Maruyama integration of the stochastic FHN model and frozen-w Langevin escapes.

Random numbers come from Philox streams keyed by ``(master_seed, *stream_id)``
so independent trajectories and Monte-Carlo samples do not depend on the order
in which they are evaluated.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numba
import numpy as np

from .errors import Diverged, Timeout
from .fhn_model import ModelParams, State
from .potential import nullcline_roots

DEFAULT_SEED = 42
DIVERGENCE_BOUND = 1e6


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent counter-based generator for ``stream`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@numba.njit(cache=True, nogil=True)
def _em_kernel(v0, w0, xi, n_steps, dt, a, b, c, eps, sigma, bound):
    v = np.empty(n_steps + 1)
    w = np.empty(n_steps + 1)
    v[0] = v0
    w[0] = w0
    amp = sigma * math.sqrt(dt)
    for k in range(n_steps):
        vk = v[k]
        wk = w[k]
        f = vk * (a - vk) * (vk - 1.0) - wk
        g = eps * (b * vk - c * wk)
        vn = vk + f * dt + amp * xi[k]
        wn = wk + g * dt
        v[k + 1] = vn
        w[k + 1] = wn
        if not (abs(vn) <= bound and abs(wn) <= bound):
            return v, w, k + 1
    return v, w, -1


@dataclass
class Trajectory:
    """Sampled path ``(v_k, w_k)`` with the unit normals ``noise_k`` that drive step k -> k+1.

    All three arrays have ``n_steps + 1`` entries; the last noise value is the
    draw for the step after the final state.
    """

    dt: float
    t0: float
    v: np.ndarray
    w: np.ndarray
    noise: np.ndarray
    seed: int
    params: ModelParams
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.v))

    def __len__(self) -> int:
        return len(self.v)

    def increments(self) -> np.ndarray:
        """Realised stochastic perturbations sigma sqrt(dt) xi_k."""
        return self.params.sigma * math.sqrt(self.dt) * self.noise


def integrate(
    p: ModelParams,
    init: State,
    dt: float,
    n_steps: int,
    seed: int = DEFAULT_SEED,
    stream: tuple[int, ...] = (),
    noise: np.ndarray | None = None,
) -> Trajectory:
    """Euler-Maruyama path of the stochastic FHN model.

    ``noise`` replays a stored sequence of unit normals instead of drawing
    fresh ones; this reproduces the original path bit for bit.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if noise is None:
        noise = rng_for(seed, *stream).standard_normal(n_steps + 1)
    else:
        noise = np.asarray(noise, dtype=float)
        if len(noise) < n_steps:
            raise ValueError("replayed noise shorter than n_steps")
        if len(noise) == n_steps:
            noise = np.append(noise, 0.0)
        noise = noise[: n_steps + 1]
    v, w, bad = _em_kernel(
        float(init.v), float(init.w), noise, n_steps, dt,
        p.a, p.b, p.c, p.eps, p.sigma, DIVERGENCE_BOUND,
    )
    if bad >= 0:
        raise Diverged(f"|state| exceeded {DIVERGENCE_BOUND:g} at step {bad} (dt={dt})")
    return Trajectory(dt, 0.0, v, w, noise, seed, p, {"init": [init.v, init.w], "stream": list(stream)})


@numba.njit(cache=True, nogil=True)
def _langevin_kernel(v0, xi, dt, w, a, sigma, v_saddle, from_left):
    v = v0
    amp = sigma * math.sqrt(dt)
    for k in range(len(xi)):
        drift = -(v * v * v - (a + 1.0) * v * v + a * v + w)
        v = v + drift * dt + amp * xi[k]
        if from_left:
            if v >= v_saddle:
                return k + 1, v
        elif v <= v_saddle:
            return k + 1, v
    return -1, v


def _first_passage(w, a, sigma, dt, seed, index, start, max_steps, chunk):
    roots = nullcline_roots(w, a)
    from_left = start == "left"
    v = roots.v_left if from_left else roots.v_right
    rng = rng_for(seed, 7, index)
    taken = 0
    while taken < max_steps:
        n = min(chunk, max_steps - taken)
        hit, v = _langevin_kernel(v, rng.standard_normal(n), dt, w, a, sigma, roots.v_saddle, from_left)
        if hit >= 0:
            return (taken + hit) * dt
        taken += n
    raise Timeout(f"sample {index} did not escape within {max_steps} steps")


def frozen_w_escape_time(
    w: float,
    a: float,
    sigma: float,
    dt: float = 0.01,
    seed: int = DEFAULT_SEED,
    n_samples: int = 200,
    start: Literal["left", "right"] = "left",
    max_steps: int = 50_000_000,
    workers: int = 1,
) -> tuple[float, float]:
    """Monte-Carlo mean first-passage time from a well minimum across the saddle.

    Returns ``(mean, stderr)``; brute-force counterpart of the Kramers time.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if start not in ("left", "right"):
        raise ValueError(f"start must be 'left' or 'right', got {start!r}")
    chunk = 1 << 16

    def job(i):
        return _first_passage(w, a, sigma, dt, seed, i, start, max_steps, chunk)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            times = np.array(list(pool.map(job, range(n_samples))))
    else:
        times = np.array([job(i) for i in range(n_samples)])
    stderr = times.std(ddof=1) / math.sqrt(n_samples) if n_samples > 1 else math.nan
    return float(times.mean()), float(stderr)


@dataclass
class Dataset:
    """One-step training pairs ``(v_k, w_k, sigma sqrt(dt) xi_k) -> (v_{k+1}, w_{k+1})``."""

    inputs: np.ndarray
    targets: np.ndarray
    params: ModelParams
    split: int
    dt: float
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets must align")
        if not 0 < self.split < len(self.inputs):
            raise ValueError(f"split index {self.split} out of bounds")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def train_inputs(self):
        return self.inputs[: self.split]

    @property
    def train_targets(self):
        return self.targets[: self.split]

    @property
    def test_inputs(self):
        return self.inputs[self.split :]

    @property
    def test_targets(self):
        return self.targets[self.split :]

    @property
    def ic(self) -> State:
        return State(float(self.inputs[0, 0]), float(self.inputs[0, 1]))

    @property
    def ic_noise(self) -> float:
        return float(self.inputs[0, 2])

    def header(self) -> dict:
        return {
            "format": "sisr-dataset/1",
            "dt": self.dt,
            "seed": self.seed,
            "split": self.split,
            "n_points": len(self),
            "params": self.params.to_dict(),
            "meta": self.meta,
        }

    def save(self, path) -> None:
        """Write an ``.npz`` container: arrays plus a JSON header string."""
        header = json.dumps(self.header(), sort_keys=True)
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(header), inputs=self.inputs, targets=self.targets)

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(Path(path), allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            inputs, targets = z["inputs"], z["targets"]
        return cls(
            inputs=inputs,
            targets=targets,
            params=ModelParams(**header["params"]),
            split=header["split"],
            dt=header["dt"],
            seed=header["seed"],
            meta=header.get("meta", {}),
        )


def make_dataset(
    p: ModelParams = ModelParams(),
    init: State = State(0.0, 0.0),
    dt: float = 0.05,
    n_points: int = 200_000,
    seed: int = DEFAULT_SEED,
    split_fraction: float = 0.8,
    burn_in: int = 2000,
) -> Dataset:
    """Simulate and package a chronological train/test one-step dataset."""
    if not 0 < split_fraction < 1:
        raise ValueError(f"split_fraction must be in (0, 1), got {split_fraction}")
    traj = integrate(p, init, dt, burn_in + n_points, seed)
    v = traj.v[burn_in:]
    w = traj.w[burn_in:]
    inc = traj.increments()[burn_in:]
    inputs = np.column_stack([v[:-1], w[:-1], inc[:-1]])
    targets = np.column_stack([v[1:], w[1:]])
    split = int(round(split_fraction * n_points))
    meta = {"init": [init.v, init.w], "burn_in": burn_in, "split_fraction": split_fraction, "split_rule": "chronological"}
    return Dataset(inputs, targets, p, split, dt, seed, meta)
