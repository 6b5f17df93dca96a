"""Spike detection, interspike-interval statistics and CV sweeps."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .fhn_model import ModelParams, State
from .sde import DEFAULT_SEED, rng_for

V_THRESHOLD = 0.4


@dataclass
class SpikeStatistics:
    spike_times: np.ndarray
    isis: np.ndarray
    cv: float  # NaN when fewer than 3 spikes
    n_spikes: int

    @property
    def defined(self) -> bool:
        return math.isfinite(self.cv)


def detect_spikes_array(v, dt: float, v_th: float = V_THRESHOLD, t0: float = 0.0) -> np.ndarray:
    """Upward crossings of ``v_th`` with linearly interpolated crossing times.

    A new spike is only armed once ``v`` is back below ``v_th``.
    """
    v = np.asarray(v, dtype=float)
    if len(v) < 2:
        return np.empty(0)
    k = np.nonzero((v[:-1] < v_th) & (v[1:] >= v_th))[0]
    frac = (v_th - v[k]) / (v[k + 1] - v[k])
    return t0 + dt * (k + frac)


def detect_spikes(traj, v_th: float = V_THRESHOLD) -> np.ndarray:
    return detect_spikes_array(traj.v, traj.dt, v_th, traj.t0)


def isi_cv(spike_times, sample_variance: bool = False) -> SpikeStatistics:
    """CV = sqrt(<ISI^2> - <ISI>^2) / <ISI>, population moments by default."""
    times = np.asarray(spike_times, dtype=float)
    isis = np.diff(times)
    n = len(times)
    if n < 3:
        return SpikeStatistics(times, isis, math.nan, n)
    mean = isis.mean()
    if sample_variance:
        var = isis.var(ddof=1)
    else:
        var = max(np.mean(isis**2) - mean**2, 0.0)
    return SpikeStatistics(times, isis, float(math.sqrt(var) / mean), n)


@numba.njit(cache=True, nogil=True)
def _em_spike_kernel(v, w, k0, xi, out, n_out, dt, a, b, c, eps, sigma, v_th):
    # same arithmetic as sde._em_kernel; records interpolated upward crossings
    amp = sigma * math.sqrt(dt)
    for j in range(len(xi)):
        f = v * (a - v) * (v - 1.0) - w
        g = eps * (b * v - c * w)
        vn = v + f * dt + amp * xi[j]
        wn = w + g * dt
        if v < v_th and vn >= v_th and n_out < len(out):
            out[n_out] = dt * ((k0 + j) + (v_th - v) / (vn - v))
            n_out += 1
        v = vn
        w = wn
        if not (abs(v) <= 1e6 and abs(w) <= 1e6):
            return v, w, n_out, False
    return v, w, n_out, True


def simulate_spike_times(
    p: ModelParams,
    horizon: float,
    seed: int,
    stream: tuple[int, ...] = (),
    dt: float = 0.05,
    init: State = State(0.0, 0.0),
    v_th: float = V_THRESHOLD,
    min_spikes: int = 0,
    max_horizon: float | None = None,
    chunk: int = 1 << 18,
) -> tuple[np.ndarray, float, bool]:
    """Spike times of an EM path without storing the path.

    The horizon doubles (up to ``max_horizon``) until ``min_spikes`` are seen.
    The noise is drawn sequentially from one stream so the result equals that of
    :func:`sde.integrate` with the same seed and stream.
    Returns ``(spike_times, horizon_used, ok)``.
    """
    rng = rng_for(seed, *stream)
    max_horizon = horizon if max_horizon is None else max(max_horizon, horizon)
    target_steps = int(round(horizon / dt))
    cap_steps = int(round(max_horizon / dt))
    out = np.empty(1024)
    n_out, k, v, w = 0, 0, float(init.v), float(init.w)
    while True:
        while k < target_steps:
            n = min(chunk, target_steps - k)
            if len(out) - n_out < n:
                out = np.concatenate([out, np.empty(max(len(out), n))])
            v, w, n_out, ok = _em_spike_kernel(
                v, w, k, rng.standard_normal(n), out, n_out,
                dt, p.a, p.b, p.c, p.eps, p.sigma, v_th,
            )
            if not ok:
                return out[:n_out].copy(), k * dt, False
            k += n
        if n_out >= min_spikes or target_steps >= cap_steps:
            break
        target_steps = min(2 * target_steps, cap_steps)
    return out[:n_out].copy(), target_steps * dt, True


@dataclass
class CvCurve:
    sigma_grid: np.ndarray
    cv_values: np.ndarray
    params: dict
    n_spikes_per_point: np.ndarray
    status: list[str] = field(default_factory=list)
    horizons: np.ndarray | None = None

    def argmin_index(self) -> int | None:
        cv = np.asarray(self.cv_values, dtype=float)
        if not np.any(np.isfinite(cv)):
            return None
        return int(np.nanargmin(cv))

    @property
    def cv_min(self) -> float:
        i = self.argmin_index()
        return math.nan if i is None else float(self.cv_values[i])

    @property
    def argmin_sigma(self) -> float:
        i = self.argmin_index()
        return math.nan if i is None else float(self.sigma_grid[i])

    def has_interior_minimum(self) -> bool:
        i = self.argmin_index()
        return i is not None and 0 < i < len(self.sigma_grid) - 1

    def rows(self) -> list[list]:
        hz = self.horizons if self.horizons is not None else [math.nan] * len(self.sigma_grid)
        return [
            [float(s), float(c), int(n), st, float(h)]
            for s, c, n, st, h in zip(self.sigma_grid, self.cv_values, self.n_spikes_per_point, self.status, hz)
        ]


CV_CURVE_COLUMNS = ["sigma", "cv", "n_spikes", "status", "horizon"]


def _value_key(*values: float) -> tuple[int, ...]:
    return tuple(int(np.float64(x).view(np.uint64) % (1 << 62)) for x in values)


def _cv_point(p: ModelParams, horizon, min_spikes, seed, dt, max_horizon, v_th):
    times, used, ok = simulate_spike_times(
        p, horizon, seed, _value_key(p.a, p.eps, p.sigma), dt,
        v_th=v_th, min_spikes=min_spikes, max_horizon=max_horizon,
    )
    st = isi_cv(times)
    if not ok:
        return math.nan, st.n_spikes, "diverged", used
    if st.n_spikes < max(3, min_spikes):
        return math.nan, st.n_spikes, "budget_exceeded", used
    return st.cv, st.n_spikes, "ok", used


def cv_curve(
    p_base: ModelParams,
    sigma_grid,
    t_horizon: float,
    min_spikes: int = 50,
    seed: int = DEFAULT_SEED,
    dt: float = 0.05,
    max_horizon_factor: float = 8.0,
    v_th: float = V_THRESHOLD,
    workers: int = 1,
) -> CvCurve:
    """CV of simulated spike trains across noise intensities.

    Each point draws from a stream keyed by ``(a, eps, sigma)``; points that
    never reach ``min_spikes`` within the extended horizon get a NaN CV and
    status ``budget_exceeded``.
    """
    sigmas = np.asarray(sigma_grid, dtype=float)
    if np.any(np.diff(sigmas) <= 0):
        raise ValueError("sigma_grid must be strictly increasing")
    if not t_horizon > 0:
        raise ValueError("t_horizon must be > 0")

    def job(s):
        return _cv_point(p_base.replace(sigma=float(s)), t_horizon, min_spikes, seed, dt,
                         t_horizon * max_horizon_factor, v_th)

    results = _map(job, sigmas, workers)
    cv, n, status, used = zip(*results)
    params = {"a": p_base.a, "b": p_base.b, "c": p_base.c, "eps": p_base.eps}
    return CvCurve(sigmas, np.array(cv), params, np.array(n), list(status), np.array(used))


@dataclass
class CvMinGrid:
    a_grid: np.ndarray
    eps_grid: np.ndarray
    cv_min: np.ndarray
    argmin_sigma: np.ndarray
    curves: list[list[CvCurve]] = field(default_factory=list)

    def rows(self) -> list[list]:
        return [
            [float(a), float(e), float(self.cv_min[i, j]), float(self.argmin_sigma[i, j])]
            for i, a in enumerate(self.a_grid)
            for j, e in enumerate(self.eps_grid)
        ]


CV_GRID_COLUMNS = ["a", "eps", "cv_min", "argmin_sigma"]


def cv_min_grid(
    a_grid,
    eps_grid,
    sigma_grid,
    budget: float,
    seed: int = DEFAULT_SEED,
    p_base: ModelParams = ModelParams(),
    min_spikes: int = 50,
    dt: float = 0.05,
    workers: int = 1,
) -> CvMinGrid:
    """Minimum-over-sigma CV for every ``(a, eps)`` cell."""
    a_grid = np.asarray(a_grid, dtype=float)
    eps_grid = np.asarray(eps_grid, dtype=float)
    if a_grid.size == 0 or eps_grid.size == 0:
        raise ValueError("grids must be nonempty")
    cells = [(a, e) for a in a_grid for e in eps_grid]
    curves = _map(
        lambda ae: cv_curve(p_base.replace(a=float(ae[0]), eps=float(ae[1])), sigma_grid, budget,
                            min_spikes, seed, dt),
        cells, workers,
    )
    shape = (len(a_grid), len(eps_grid))
    cv_min = np.array([c.cv_min for c in curves]).reshape(shape)
    arg = np.array([c.argmin_sigma for c in curves]).reshape(shape)
    nested = [curves[i * shape[1] : (i + 1) * shape[1]] for i in range(shape[0])]
    return CvMinGrid(a_grid, eps_grid, cv_min, arg, nested)


def _map(fn, items, workers):
    items = list(items)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]
