"""Composite physics-informed loss, training loop, NRMSE and the loss ablation.

Each loss has a scalar form and a ``*_grad`` form returning ``(value,
cotangent)`` where the cotangent is d(loss)/d(network outputs); the training
loop turns cotangents into parameter gradients with :func:`nn.backward`.

The network predicts the next state ``(v_hat, w_hat)`` from
``(v_k, w_k, sigma sqrt(dt) xi_k)``. Its time derivative is the discrete
quotient ``(y_hat - y_k) / dt``.
"""
from __future__ import annotations

import copy
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.signal import find_peaks

from .errors import DegenerateReference, NonFinite
from .fhn_model import ModelParams, State, fast_rate, slow_rate
from .nn import AdamState, NetworkParams, adam_step, backward, forward, init_network
from .potential import barrier_arrays, matching_target, nullcline_extrema, nullcline_roots_array
from .sde import Dataset, rng_for

COMPONENTS = ("data", "ic", "phy1", "phy2")

ABLATION_VARIANTS = {
    "data": ("data",),
    "data+ic+phy1": ("data", "ic", "phy1"),
    "data+phy2": ("data", "phy2"),
    "data+ic+phy1+phy2": ("data", "ic", "phy1", "phy2"),
}


@dataclass
class LossWeights:
    lambda_data: float = 1.0
    lambda_ic: float = 1.0
    lambda_phy1: float = 1.0
    lambda_phy2: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v >= 0:
                raise ValueError(f"{k} must be >= 0, got {v}")

    def get(self, name: str) -> float:
        return getattr(self, f"lambda_{name}")

    def as_dict(self) -> dict:
        return {k: self.get(k) for k in COMPONENTS}


# -- individual loss terms -------------------------------------------------------


def _scale(scale):
    return np.ones(2) if scale is None else np.asarray(scale, dtype=float)


def loss_data_grad(preds, targets, scale=None):
    """Mean over rows of the squared (optionally per-channel scaled) error."""
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape:
        raise ValueError(f"shape mismatch {preds.shape} vs {targets.shape}")
    s = _scale(scale)
    err = (preds - targets) / s
    n = preds.shape[0]
    return float(np.sum(err**2) / n), 2.0 * err / s / n


def loss_data(preds, targets, scale=None) -> float:
    return loss_data_grad(preds, targets, scale)[0]


def ic_input(ic: State, ic_noise: float) -> np.ndarray:
    return np.array([[ic.v, ic.w, ic_noise]])


def loss_ic_grad(pred_ic, ic: State, scale=None):
    """Squared deviation of the network's output at the initial input from the IC."""
    return loss_data_grad(np.atleast_2d(pred_ic), np.array([[ic.v, ic.w]]), scale)


def loss_ic(net: NetworkParams, ic: State, ic_noise: float = 0.0, scale=None) -> float:
    pred, _ = forward(net, ic_input(ic, ic_noise))
    return loss_ic_grad(pred, ic, scale)[0]


def phy1_residuals(inputs, preds, p: ModelParams, dt: float):
    v, w, inc = inputs[:, 0], inputs[:, 1], inputs[:, 2]
    vh, wh = preds[:, 0], preds[:, 1]
    r_v = (vh - v) / dt - fast_rate(vh, wh, p.a) - inc / dt
    r_w = (wh - w) / dt - slow_rate(vh, wh, p.eps, p.b, p.c)
    return r_v, r_w


def loss_phy1_grad(inputs, preds, p: ModelParams, dt: float, scale=None):
    """Residual of the stochastic FHN step with f, g evaluated at the predicted state.

    ``scale`` expresses the residual in units of per-channel increments
    (residual * dt / scale); ``None`` leaves it as a raw rate.
    """
    inputs = np.asarray(inputs, dtype=float)
    preds = np.asarray(preds, dtype=float)
    r_v, r_w = phy1_residuals(inputs, preds, p, dt)
    k = np.ones(2) if scale is None else dt / _scale(scale)
    n = len(r_v)
    value = float(np.sum((k[0] * r_v) ** 2 + (k[1] * r_w) ** 2) / n)
    vh = preds[:, 0]
    f_v = -3.0 * vh**2 + 2.0 * (p.a + 1.0) * vh - p.a
    g_v, g_w = p.eps * p.b, -p.eps * p.c
    gv = 2.0 * k[0] ** 2 * r_v
    gw = 2.0 * k[1] ** 2 * r_w
    d_vh = gv * (1.0 / dt - f_v) + gw * (-g_v)
    d_wh = gv * 1.0 + gw * (1.0 / dt - g_w)
    return value, np.column_stack([d_vh, d_wh]) / n


def loss_phy1(net: NetworkParams, batch, p: ModelParams, dt: float, scale=None) -> float:
    preds, _ = forward(net, batch)
    return loss_phy1_grad(batch, preds, p, dt, scale)[0]


def _clamped_barriers(w, a):
    ext = nullcline_extrema(a)
    w = np.asarray(w, dtype=float)
    inside = (w >= ext.w_min) & (w <= ext.w_max)
    wc = np.clip(w, ext.w_min, ext.w_max)
    dl, dr, ddl, ddr = barrier_arrays(wc, a)
    return dl, dr, np.where(inside, ddl, 0.0), np.where(inside, ddr, 0.0)


def loss_phy2_grad(escape_w_left, escape_w_right, a: float, sigma: float, eps: float):
    """Barrier-matching loss and its derivative w.r.t. every escape ordinate.

    Each side is averaged over its own event count. Ordinates outside the fold
    interval are clamped to it (zero derivative there). Returns
    ``(None, None, None)`` when there are no events at all.
    """
    wl = np.atleast_1d(np.asarray(escape_w_left, dtype=float))
    wr = np.atleast_1d(np.asarray(escape_w_right, dtype=float))
    if wl.size == 0 and wr.size == 0:
        return None, None, None
    target = matching_target(sigma, eps)
    value = 0.0
    gl = np.zeros_like(wl)
    gr = np.zeros_like(wr)
    if wl.size:
        dl, _, ddl, _ = _clamped_barriers(wl, a)
        value += float(np.mean((target - dl) ** 2))
        gl = -2.0 * (target - dl) * ddl / wl.size
    if wr.size:
        _, dr, _, ddr = _clamped_barriers(wr, a)
        value += float(np.mean((target - dr) ** 2))
        gr = -2.0 * (target - dr) * ddr / wr.size
    return value, gl, gr


def loss_phy2(escape_w_left, escape_w_right, a: float, sigma: float, eps: float) -> float | None:
    """Scalar barrier-matching loss, or ``None`` when no escapes were found."""
    return loss_phy2_grad(escape_w_left, escape_w_right, a, sigma, eps)[0]


# -- escape events -----------------------------------------------------------------


def escape_event_indices(w_series, v_series, prominence: float, a: float, lookback: int = 100):
    """Sample indices of left (w minima) and right (w maxima) escape events.

    A minimum counts as a left escape if ``v`` was below the saddle root at
    some point in the ``lookback`` samples up to it; a maximum counts as a
    right escape if ``v`` was above the saddle. The lookback covers the fast
    jump, during which ``w`` is still at its extremal value while ``v`` has
    already left the branch.
    """
    w = np.asarray(w_series, dtype=float)
    v = np.asarray(v_series, dtype=float)
    if w.shape != v.shape:
        raise ValueError("w and v series must be aligned")
    if prominence <= 0:
        raise ValueError("prominence must be > 0")
    if len(w) < 3 or not np.all(np.isfinite(w)):
        return np.empty(0, int), np.empty(0, int)
    ext = nullcline_extrema(a)
    _, v_s, _ = nullcline_roots_array(np.clip(w, ext.w_min, ext.w_max), a)
    lo_idx, _ = find_peaks(-w, prominence=prominence)
    hi_idx, _ = find_peaks(w, prominence=prominence)
    left = [k for k in lo_idx if np.any(v[max(0, k - lookback) : k + 1] < v_s[k])]
    right = [k for k in hi_idx if np.any(v[max(0, k - lookback) : k + 1] > v_s[k])]
    return np.array(left, dtype=int), np.array(right, dtype=int)


def extract_escape_points(w_series, v_series, prominence: float, a: float, lookback: int = 100):
    """Escape ordinates ``(w_left events, w_right events)`` of a predicted path."""
    il, ir = escape_event_indices(w_series, v_series, prominence, a, lookback)
    w = np.asarray(w_series, dtype=float)
    return w[il], w[ir]


def default_prominence(a: float, fraction: float = 0.1) -> float:
    ext = nullcline_extrema(a)
    return fraction * (ext.w_max - ext.w_min)


# -- adaptive weights ---------------------------------------------------------------


def update_weights_dynamic(grad_norms: dict, current: LossWeights, smoothing: float = 0.9,
                           bounds=(1e-3, 1e3)) -> LossWeights:
    """Move each weight toward ||grad L_data|| / ||grad L_k|| by exponential smoothing.

    ``lambda_data`` stays at 1; components with zero or missing gradient norm
    keep their weight.
    """
    ref = grad_norms.get("data", 0.0)
    new = {"lambda_data": 1.0}
    for name in COMPONENTS[1:]:
        lam = current.get(name)
        g = grad_norms.get(name, 0.0)
        if ref > 0 and g and g > 0:
            lam = smoothing * lam + (1.0 - smoothing) * (ref / g)
            lam = min(max(lam, bounds[0]), bounds[1])
        new[f"lambda_{name}"] = lam
    return LossWeights(**new)


# -- metrics -----------------------------------------------------------------------


def nrmse(reference, predicted) -> float:
    """RMSE over the population std of the reference, averaged over columns."""
    y = np.asarray(reference, dtype=float)
    yh = np.asarray(predicted, dtype=float)
    if y.shape != yh.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {yh.shape}")
    if y.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    if y.ndim == 1:
        y, yh = y[:, None], yh[:, None]
    std = y.std(axis=0)
    if np.any(std == 0):
        raise DegenerateReference("reference sequence has zero variance")
    rmse = np.sqrt(np.mean((y - yh) ** 2, axis=0))
    return float(np.mean(rmse / std))


def predict_batched(net: NetworkParams, inputs, chunk: int = 8192) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    return np.concatenate([forward(net, inputs[i : i + chunk])[0] for i in range(0, len(inputs), chunk)])


# -- training ----------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 2000
    batch_total: int = 512
    window_len: int = 32
    lr: float = 1e-3
    lr_final: float | None = None  # cosine decay target; None keeps lr constant
    dt: float = 0.05
    seed: int = 42
    loss_mask: tuple[str, ...] = COMPONENTS
    weights: LossWeights = field(default_factory=lambda: LossWeights(lambda_phy1=10.0))
    weight_adapt: str = "off"
    adapt_smoothing: float = 0.9
    phy2_rollout_len: int = 20_000
    phy2_every: int = 50
    prominence_fraction: float = 0.1
    escape_lookback: int = 100
    eval_every: int = 25
    hidden: tuple[int, ...] = (128, 128, 128)
    head: str = "euler"
    normalize: bool = True
    ic_noise: float = 0.0
    # extra residual points drawn over the phase box (physics only, no data)
    phy1_collocation: int = 2048
    collocation_sigma_max: float = 0.15

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.window_len < 1 or self.batch_total % self.window_len:
            raise ValueError("batch_total must be divisible by window_len")
        unknown = set(self.loss_mask) - set(COMPONENTS)
        if unknown:
            raise ValueError(f"unknown loss components {sorted(unknown)}")
        if self.weight_adapt not in ("off", "grad-norm"):
            raise ValueError("weight_adapt must be 'off' or 'grad-norm'")
        if self.head not in ("linear", "euler"):
            raise ValueError("head must be 'linear' or 'euler'")
        self.loss_mask = tuple(c for c in COMPONENTS if c in self.loss_mask)
        self.hidden = tuple(int(h) for h in self.hidden)

    @property
    def n_windows(self) -> int:
        return self.batch_total // self.window_len

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_mask"] = list(self.loss_mask)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = LossWeights(**d["weights"])
        for key in ("loss_mask", "hidden"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class TrainReport:
    config: dict
    loss_history: list[dict] = field(default_factory=list)
    eval_history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_test_nrmse: float = math.nan
    best_train_nrmse: float = math.nan
    wall_time: float = 0.0
    aborted_epoch: int | None = None
    channel_scale: list[float] | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def channel_scale(ds: Dataset) -> np.ndarray:
    """Per-variable std of the one-step increments over the training split."""
    inc = ds.train_targets - ds.train_inputs[:, :2]
    s = inc.std(axis=0)
    return np.where(s > 0, s, 1.0)


def build_network(cfg: TrainConfig, p: ModelParams) -> NetworkParams:
    sizes = (3, *cfg.hidden, 2)
    if cfg.head == "euler":
        # next state = state + noise increment + dt * diag(1, eps) * head;
        # the head then learns O(1) drift rates
        skip = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        return init_network(cfg.seed, sizes, skip=skip, out_scale=[cfg.dt, cfg.dt * p.eps])
    return init_network(cfg.seed, sizes)


@dataclass
class PhysicsCache:
    """Rollout inputs that produced detected escape events (refreshed periodically)."""

    left_inputs: np.ndarray
    right_inputs: np.ndarray
    epoch: int

    @property
    def n_events(self) -> int:
        return len(self.left_inputs) + len(self.right_inputs)


def refresh_escape_cache(net: NetworkParams, ds: Dataset, p: ModelParams, cfg: TrainConfig, epoch: int) -> PhysicsCache:
    from .surrogate import rollout_batch

    n = cfg.phy2_rollout_len
    rng = rng_for(cfg.seed, 23, epoch)
    inc = p.sigma * math.sqrt(cfg.dt) * rng.standard_normal((n, 1))
    ic = ds.ic
    v, w, inputs, done = rollout_batch(net, np.array([[ic.v, ic.w]]), inc)
    v, w, inputs = v[: done + 1, 0], w[: done + 1, 0], inputs[:done, 0]
    prom = default_prominence(p.a, cfg.prominence_fraction)
    il, ir = escape_event_indices(w, v, prom, p.a, cfg.escape_lookback)
    # state k was produced by inputs[k - 1]
    il, ir = il[il > 0], ir[ir > 0]
    return PhysicsCache(inputs[il - 1].copy(), inputs[ir - 1].copy(), epoch)


@dataclass
class StepBatch:
    inputs: np.ndarray
    targets: np.ndarray
    collocation: np.ndarray | None = None


def collocation_box(p: ModelParams) -> tuple[tuple[float, float], tuple[float, float]]:
    """Phase-space box covering both stable branches and the jumps between them."""
    ext = nullcline_extrema(p.a)
    pad = 0.25 * (ext.w_max - ext.w_min)
    return (-0.6, 1.4), (ext.w_min - pad, ext.w_max + pad)


def sample_collocation(p: ModelParams, cfg: TrainConfig, epoch: int) -> np.ndarray:
    """Uniform states in the phase box with increments at noise levels up to the configured maximum."""
    n = cfg.phy1_collocation
    rng = rng_for(cfg.seed, 19, epoch)
    (v0, v1), (w0, w1) = collocation_box(p)
    s_max = max(cfg.collocation_sigma_max, p.sigma)
    sig = rng.uniform(0.0, s_max, n)
    return np.column_stack([
        rng.uniform(v0, v1, n),
        rng.uniform(w0, w1, n),
        sig * math.sqrt(cfg.dt) * rng.standard_normal(n),
    ])


def sample_windows(ds: Dataset, cfg: TrainConfig, epoch: int) -> StepBatch:
    """``n_windows`` random runs of ``window_len`` consecutive training pairs."""
    n_train = ds.split
    T = cfg.window_len
    rng = rng_for(cfg.seed, 17, epoch)
    starts = rng.integers(0, n_train - T + 1, size=cfg.n_windows)
    idx = (starts[:, None] + np.arange(T)[None, :]).ravel()
    return StepBatch(ds.inputs[idx], ds.targets[idx])


def sample_batch(ds: Dataset, p: ModelParams, cfg: TrainConfig, epoch: int) -> StepBatch:
    batch = sample_windows(ds, cfg, epoch)
    if "phy1" in cfg.loss_mask and cfg.phy1_collocation > 0:
        batch.collocation = sample_collocation(p, cfg, epoch)
    return batch


def composite_loss(net: NetworkParams, batch: StepBatch, ds: Dataset, p: ModelParams, cfg: TrainConfig,
                   weights: LossWeights, cache: PhysicsCache | None, scale=None, ic: State | None = None,
                   per_component_grads: bool = False):
    """Weighted composite loss over the enabled components.

    Returns ``(total, components, grads, component_grads)``; ``components``
    maps enabled names to their values (``phy2`` is ``None`` when skipped),
    ``grads`` are flat-list parameter gradients of ``total``.
    """
    mask = set(cfg.loss_mask)
    ic = ic if ic is not None else _train_ic(ds)
    blocks = [batch.inputs]
    n_col = 0
    if "phy1" in mask and batch.collocation is not None:
        n_col = len(batch.collocation)
        blocks.append(batch.collocation)
    if "ic" in mask:
        blocks.append(ic_input(ic, cfg.ic_noise))
    n_left = n_right = 0
    if "phy2" in mask and cache is not None and cache.n_events:
        n_left, n_right = len(cache.left_inputs), len(cache.right_inputs)
        blocks += [cache.left_inputs.reshape(-1, 3), cache.right_inputs.reshape(-1, 3)]
    x = np.concatenate(blocks)
    y, tape = forward(net, x)
    nb = len(batch.inputs)
    n_res = nb + n_col
    seg_ic = slice(n_res, n_res + 1) if "ic" in mask else None
    off = n_res + (1 if "ic" in mask else 0)
    seg_l = slice(off, off + n_left)
    seg_r = slice(off + n_left, off + n_left + n_right)

    values: dict[str, float | None] = {}
    cots: dict[str, np.ndarray] = {}
    if "data" in mask:
        val, g = loss_data_grad(y[:nb], batch.targets, scale)
        values["data"] = val
        cots["data"] = _embed(g, slice(0, nb), y.shape)
    if "ic" in mask:
        val, g = loss_ic_grad(y[seg_ic], ic, scale)
        values["ic"] = val
        cots["ic"] = _embed(g, seg_ic, y.shape)
    if "phy1" in mask:
        val, g = loss_phy1_grad(x[:n_res], y[:n_res], p, cfg.dt, scale)
        values["phy1"] = val
        cots["phy1"] = _embed(g, slice(0, n_res), y.shape)
    if "phy2" in mask:
        val, gl, gr = loss_phy2_grad(y[seg_l, 1], y[seg_r, 1], p.a, p.sigma, p.eps)
        values["phy2"] = val
        if val is not None:
            c = np.zeros_like(y)
            c[seg_l, 1] = gl
            c[seg_r, 1] = gr
            cots["phy2"] = c

    total = sum(weights.get(k) * v for k, v in values.items() if v is not None)
    comp_grads = {}
    if per_component_grads:
        for k, c in cots.items():
            comp_grads[k] = backward(net, tape, c)
        grads = [sum(weights.get(k) * comp_grads[k][i] for k in comp_grads) for i in range(2 * len(net.weights))]
    else:
        dy = sum(weights.get(k) * c for k, c in cots.items())
        grads = backward(net, tape, dy)
    if not math.isfinite(total):
        raise NonFinite(f"composite loss is {total}")
    return total, values, grads, comp_grads


def _embed(g, seg, shape):
    out = np.zeros(shape)
    out[seg] = g
    return out


def _train_ic(ds: Dataset) -> State:
    init = ds.meta.get("init")
    if init is None:
        return ds.ic
    return State(float(init[0]), float(init[1]))


def evaluate(net: NetworkParams, ds: Dataset) -> tuple[float, float]:
    """Teacher-forced one-step NRMSE on the train and test splits."""
    tr = nrmse(ds.train_targets, predict_batched(net, ds.train_inputs))
    te = nrmse(ds.test_targets, predict_batched(net, ds.test_inputs))
    return tr, te


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    if cfg.lr_final is None or cfg.epochs == 1:
        return cfg.lr
    frac = (epoch - 1) / (cfg.epochs - 1)
    return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + math.cos(math.pi * frac))


def train(cfg: TrainConfig, ds: Dataset, p: ModelParams | None = None, progress=None):
    """Train the one-step network; returns ``(best network, TrainReport)``."""
    p = p or ds.params
    if ds.split < cfg.batch_total + cfg.window_len:
        raise ValueError("training split too short for one batch of windows")
    t_start = time.perf_counter()
    net = build_network(cfg, p)
    opt = AdamState.for_params(net, cfg.lr)
    weights = copy.copy(cfg.weights)
    scale = channel_scale(ds) if cfg.normalize else None
    report = TrainReport(cfg.to_dict(), channel_scale=None if scale is None else scale.tolist())
    best_net = net.copy()
    cache = None
    adapt = cfg.weight_adapt == "grad-norm"
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = learning_rate(cfg, epoch)
        try:
            if "phy2" in cfg.loss_mask and (cache is None or (epoch - 1) % cfg.phy2_every == 0):
                cache = refresh_escape_cache(net, ds, p, cfg, epoch)
            batch = sample_batch(ds, p, cfg, epoch)
            total, values, grads, comp = composite_loss(
                net, batch, ds, p, cfg, weights, cache, scale, per_component_grads=adapt
            )
        except NonFinite as exc:
            report.aborted_epoch = epoch
            report.wall_time = time.perf_counter() - t_start
            raise NonFinite(f"epoch {epoch}: {exc}") from exc
        report.loss_history.append({
            "epoch": epoch, "total": total,
            **{k: values.get(k) for k in cfg.loss_mask},
            "weights": weights.as_dict(),
            "n_escape_events": cache.n_events if cache is not None else 0,
        })
        if adapt:
            norms = {k: float(math.sqrt(sum(float(np.sum(g * g)) for g in gs))) for k, gs in comp.items()}
            weights = update_weights_dynamic(norms, weights, cfg.adapt_smoothing)
        net, opt = adam_step(opt, grads, net)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            tr, te = evaluate(net, ds)
            report.eval_history.append({"epoch": epoch, "train_nrmse": tr, "test_nrmse": te})
            if not te >= report.best_test_nrmse:
                report.best_epoch, report.best_test_nrmse, report.best_train_nrmse = epoch, te, tr
                best_net = net.copy()
            if progress:
                progress(epoch, tr, te)
    report.wall_time = time.perf_counter() - t_start
    return best_net, report


# -- ablation ---------------------------------------------------------------------


def run_ablation(base_cfg: TrainConfig, ds: Dataset, p: ModelParams | None = None, workers: int = 1,
                 variants: dict | None = None):
    """Train each loss-mask variant with identical seed and data.

    Returns ``(rows, nets)``; a failed variant gets an ``error`` entry and no net.
    """
    variants = variants or ABLATION_VARIANTS

    def job(item):
        name, mask = item
        try:
            cfg = replace(base_cfg, loss_mask=tuple(mask), weights=copy.copy(base_cfg.weights))
            net, rep = train(cfg, ds, p)
        except Exception as exc:  # recorded, other variants still run
            return {"variant": name, "mask": list(mask), "error": f"{type(exc).__name__}: {exc}"}, None
        return {
            "variant": name,
            "mask": list(mask),
            "train_nrmse": rep.best_train_nrmse,
            "test_nrmse": rep.best_test_nrmse,
            "best_epoch": rep.best_epoch,
            "wall_time": rep.wall_time,
            "curve": rep.eval_history,
        }, net

    items = list(variants.items())
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(job, items))
    else:
        results = [job(it) for it in items]
    rows = [r for r, _ in results]
    nets = {r["variant"]: n for r, n in results if n is not None}
    return rows, nets


def report_json(report: TrainReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, default=float)
