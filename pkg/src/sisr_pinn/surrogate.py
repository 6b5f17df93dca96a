"""Open-loop evaluation of a trained one-step network.

A rollout feeds the network its own predictions together with fresh noise
increments ``sigma sqrt(dt) xi_k``. Several independent rollouts (for example
one per noise intensity) advance together as rows of a single batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, NonFinite
from .fhn_model import State
from .nn import NetworkParams, forward
from .sde import rng_for
from .spikes import CvCurve, SpikeStatistics, V_THRESHOLD, detect_spikes_array, isi_cv

V_BOX = 2.0
W_BOX = 1.0


@dataclass
class RolloutResult:
    v: np.ndarray
    w: np.ndarray
    dt: float
    sigma: float
    seed: int
    bounded: bool
    stats: SpikeStatistics | None = None
    steps_completed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(len(self.v))


def rollout_batch(net: NetworkParams, init: np.ndarray, increments: np.ndarray):
    """Advance ``R`` rollouts through ``increments`` of shape ``(n_steps, R)``.

    Returns ``(v, w, inputs, n_done)`` where ``v``/``w`` have shape
    ``(n_steps + 1, R)`` and ``inputs[k]`` is the network input that produced
    state ``k + 1``. Stops early if an output is non-finite or leaves the
    divergence box; ``n_done`` counts completed steps.
    """
    init = np.atleast_2d(np.asarray(init, dtype=float))
    n_steps, R = increments.shape
    v = np.full((n_steps + 1, R), np.nan)
    w = np.full((n_steps + 1, R), np.nan)
    inputs = np.empty((n_steps, R, 3))
    v[0], w[0] = init[:, 0], init[:, 1]
    x = np.empty((R, 3))
    for k in range(n_steps):
        x[:, 0] = v[k]
        x[:, 1] = w[k]
        x[:, 2] = increments[k]
        inputs[k] = x
        try:
            y, _ = forward(net, x)
        except NonFinite:
            return v, w, inputs, k
        v[k + 1], w[k + 1] = y[:, 0], y[:, 1]
        if np.any(np.abs(y) > 1e6):
            return v, w, inputs, k + 1
    return v, w, inputs, n_steps


def _bounded(v, w) -> bool:
    return bool(np.all(np.isfinite(v)) and np.all(np.isfinite(w))
                and np.max(np.abs(v)) <= V_BOX and np.max(np.abs(w)) <= W_BOX)


def rollout(
    net: NetworkParams,
    init: State,
    sigma: float,
    dt: float,
    n_steps: int,
    seed: int = 42,
    stream: tuple[int, ...] = (),
    v_th: float = V_THRESHOLD,
    increments: np.ndarray | None = None,
) -> RolloutResult:
    """Free-running prediction from ``init`` with fresh Gaussian increments.

    ``increments`` overrides the fresh draws, e.g. to replay a training path.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if increments is None:
        increments = sigma * math.sqrt(dt) * rng_for(seed, 31, *stream).standard_normal(n_steps)
    inc = np.asarray(increments, dtype=float)[:n_steps, None]
    v, w, _, done = rollout_batch(net, np.array([[init.v, init.w]]), inc)
    v, w = v[: done + 1, 0], w[: done + 1, 0]
    bounded = done == n_steps and _bounded(v, w)
    stats = isi_cv(detect_spikes_array(v, dt, v_th)) if np.all(np.isfinite(v)) else None
    return RolloutResult(v, w, dt, sigma, seed, bounded, stats, done, {"stream": list(stream)})


def predicted_cv_curve(
    net: NetworkParams,
    sigma_grid,
    horizon: float,
    seed: int = 42,
    dt: float = 0.05,
    init: State = State(0.0, 0.0),
    params: dict | None = None,
    v_th: float = V_THRESHOLD,
    min_spikes: int = 3,
) -> CvCurve:
    """CV of surrogate rollouts at each noise level, in the simulation's container."""
    sigmas = np.asarray(sigma_grid, dtype=float)
    if np.any(np.diff(sigmas) <= 0):
        raise ValueError("sigma_grid must be strictly increasing")
    n_steps = int(round(horizon / dt))
    inc = np.empty((n_steps, len(sigmas)))
    for j, s in enumerate(sigmas):
        # stream keyed by the sigma value so grid order does not matter
        inc[:, j] = s * math.sqrt(dt) * rng_for(seed, 37, _sigma_key(s)).standard_normal(n_steps)
    v, w, _, done = rollout_batch(net, np.tile([init.v, init.w], (len(sigmas), 1)), inc)
    cvs, counts, status = [], [], []
    for j in range(len(sigmas)):
        vj = v[: done + 1, j]
        if done < n_steps or not _bounded(vj, w[: done + 1, j]):
            cvs.append(math.nan)
            counts.append(0)
            status.append("unbounded")
            continue
        st = isi_cv(detect_spikes_array(vj, dt, v_th))
        counts.append(st.n_spikes)
        if st.n_spikes < max(3, min_spikes):
            cvs.append(math.nan)
            status.append("too_few_spikes")
        else:
            cvs.append(st.cv)
            status.append("ok")
    return CvCurve(sigmas, np.array(cvs), params or {}, np.array(counts), status,
                   horizons=np.full(len(sigmas), horizon))


def _sigma_key(s: float) -> int:
    return int(np.float64(s).view(np.uint64) % (1 << 62))


@dataclass
class CurveComparison:
    max_abs_diff: float
    argmin_shift: int
    sigma_argmin_simulated: float
    sigma_argmin_predicted: float
    rows: list[dict]

    def to_dict(self) -> dict:
        return {
            "max_abs_diff": self.max_abs_diff,
            "argmin_shift": self.argmin_shift,
            "sigma_argmin_simulated": self.sigma_argmin_simulated,
            "sigma_argmin_predicted": self.sigma_argmin_predicted,
            "rows": self.rows,
        }


def compare_curves(simulated: CvCurve, predicted: CvCurve) -> CurveComparison:
    a, b = np.asarray(simulated.sigma_grid), np.asarray(predicted.sigma_grid)
    if a.shape != b.shape or not np.array_equal(a, b):
        raise GridMismatch("simulated and predicted curves use different sigma grids")
    rows, diffs = [], []
    for s, x, y in zip(a, simulated.cv_values, predicted.cv_values):
        valid = bool(np.isfinite(x) and np.isfinite(y))
        d = abs(x - y) if valid else math.nan
        if valid:
            diffs.append(d)
        rows.append({"sigma": float(s), "cv_simulated": float(x), "cv_predicted": float(y),
                     "abs_diff": float(d), "excluded": not valid})
    i_sim = simulated.argmin_index()
    i_pred = predicted.argmin_index()
    shift = abs(i_sim - i_pred) if i_sim is not None and i_pred is not None else -1
    return CurveComparison(
        max(diffs) if diffs else math.nan,
        shift,
        float(a[i_sim]) if i_sim is not None else math.nan,
        float(a[i_pred]) if i_pred is not None else math.nan,
        rows,
    )
