import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sisr_pinn.errors import DegenerateReference
from sisr_pinn.fhn_model import ModelParams, State
from sisr_pinn.nn import finite_difference_grad, forward, init_network
from sisr_pinn.pinn import (
    ABLATION_VARIANTS,
    COMPONENTS,
    LossWeights,
    PhysicsCache,
    StepBatch,
    TrainConfig,
    build_network,
    channel_scale,
    composite_loss,
    extract_escape_points,
    learning_rate,
    loss_data,
    loss_ic,
    loss_phy1,
    loss_phy1_grad,
    loss_phy2,
    loss_phy2_grad,
    nrmse,
    run_ablation,
    sample_batch,
    train,
    update_weights_dynamic,
)
from sisr_pinn.potential import barrier_arrays, solve_escape_points
from sisr_pinn.sde import make_dataset

DESK = ModelParams(a=0.05, eps=0.005, sigma=0.03061)


@pytest.fixture(scope="module")
def small_ds():
    return make_dataset(DESK, n_points=3000, burn_in=100, seed=42)


def zero_net(sizes=(3, 4, 2)):
    net = init_network(0, sizes)
    return net.with_flat(np.zeros(net.n_params))


# -- data / ic -------------------------------------------------------------------


def test_loss_data_examples():
    t = np.random.default_rng(0).normal(size=(7, 2))
    assert loss_data(t, t) == 0.0
    assert loss_data([[0.1, -0.2]], [[0.0, 0.0]]) == pytest.approx(0.05, abs=1e-16)
    p = t + 0.1
    assert loss_data(np.vstack([p, p]), np.vstack([t, t])) == pytest.approx(loss_data(p, t), rel=1e-15)


def test_loss_data_shape_mismatch():
    with pytest.raises(ValueError):
        loss_data(np.zeros((2, 2)), np.zeros((3, 2)))


def test_loss_ic_examples():
    net = zero_net()
    assert loss_ic(net, State(0.0, 0.0)) == 0.0
    assert loss_ic(net, State(0.5, 0.1)) == pytest.approx(0.26, abs=1e-15)
    identity = build_network(TrainConfig(hidden=(4,)), DESK)
    identity = identity.with_flat(np.zeros(identity.n_params))
    assert loss_ic(identity, State(0.5, 0.1)) == 0.0


# -- phy1 --------------------------------------------------------------------------


def em_map(x, p, dt):
    v, w, n = x[:, 0], x[:, 1], x[:, 2]
    f = v * (p.a - v) * (v - 1) - w
    g = p.eps * (p.b * v - p.c * w)
    return np.column_stack([v + f * dt + n, w + g * dt])


def test_phy1_oracle_net_has_order_dt_residual():
    p = ModelParams(a=0.1, eps=0.05, sigma=0.0)
    x = np.column_stack([np.linspace(-0.3, 1.0, 50), np.linspace(-0.02, 0.1, 50), np.zeros(50)])
    rms = []
    for dt in (0.02, 0.01, 0.005):
        r = loss_phy1_grad(x, em_map(x, p, dt), p, dt)[0]
        rms.append(math.sqrt(r))
    assert rms[0] > 0
    assert rms[0] / rms[1] == pytest.approx(2.0, rel=0.05)
    assert rms[1] / rms[2] == pytest.approx(2.0, rel=0.05)


def test_phy1_identity_at_fixed_point_is_zero():
    x = np.zeros((4, 3))
    assert loss_phy1_grad(x, x[:, :2], ModelParams(sigma=0.0), 0.05)[0] == 0.0
    net = build_network(TrainConfig(hidden=(4,)), DESK)
    net = net.with_flat(np.zeros(net.n_params))
    assert loss_phy1(net, x, DESK, 0.05) == 0.0


def test_phy1_counts_noise_as_rate():
    # a step carrying exactly the noise increment and the implicit drift has zero residual
    p = ModelParams(a=0.05, eps=0.005)
    y = np.array([[0.0, 0.0]])
    x = np.array([[-0.01, 0.0, 0.01]])
    assert loss_phy1_grad(x, y, p, 0.05)[0] == pytest.approx(0.0, abs=1e-30)


def test_phy1_gradient_wrt_predictions():
    rng = np.random.default_rng(3)
    x = rng.normal(0, 0.3, size=(6, 3))
    y = x[:, :2] + rng.normal(0, 0.01, size=(6, 2))
    for scale in (None, [0.01, 1e-4]):
        _, g = loss_phy1_grad(x, y, DESK, 0.05, scale)
        h = 1e-7
        for i, j in [(0, 0), (3, 1), (5, 0)]:
            up, dn = y.copy(), y.copy()
            up[i, j] += h
            dn[i, j] -= h
            fd = (loss_phy1_grad(x, up, DESK, 0.05, scale)[0] - loss_phy1_grad(x, dn, DESK, 0.05, scale)[0]) / (2 * h)
            assert g[i, j] == pytest.approx(fd, rel=1e-5)


# -- phy2 --------------------------------------------------------------------------


def test_phy2_single_left_event_example():
    val = loss_phy2([0.0], [], 0.5, 0.03061, 0.00025)
    assert val == pytest.approx(1.378e-4, rel=2e-3)
    target = 0.5 * 0.03061**2 * math.log(4000)
    assert val == pytest.approx((target - 0.015625) ** 2, rel=1e-10)


def test_phy2_zero_at_matched_points():
    ep = solve_escape_points(0.05, 0.03061, 0.00025)
    assert loss_phy2([ep.w_left] * 3, [ep.w_right] * 2, 0.05, 0.03061, 0.00025) == pytest.approx(0.0, abs=1e-20)


def test_phy2_unequal_counts_and_empty_sides():
    a, s, e = 0.5, 0.03061, 0.00025
    right_only = loss_phy2([], [0.01, 0.02], a, s, e)
    both = loss_phy2([0.0], [0.01, 0.02], a, s, e)
    assert both == pytest.approx(right_only + loss_phy2([0.0], [], a, s, e), rel=1e-14)
    assert loss_phy2([], [], a, s, e) is None
    assert loss_phy2_grad([], [], a, s, e) == (None, None, None)


def test_phy2_per_side_mean():
    a, s, e = 0.5, 0.03061, 0.00025
    assert loss_phy2([0.01, 0.01], [], a, s, e) == pytest.approx(loss_phy2([0.01], [], a, s, e), rel=1e-14)


def test_phy2_chain_rule_against_barrier_derivative():
    a, s, e = 0.5, 0.03061, 0.00025
    w = 0.01
    target = 0.5 * s**2 * math.log(1 / e)
    dl, _, ddl, _ = barrier_arrays(np.array([w]), a)
    h = 1e-6
    delta = loss_phy2([w + h], [], a, s, e) - loss_phy2([w], [], a, s, e)
    assert delta == pytest.approx(2 * (dl[0] - target) * ddl[0] * h, rel=1e-4)
    _, gl, _ = loss_phy2_grad([w], [], a, s, e)
    assert gl[0] == pytest.approx(2 * (dl[0] - target) * ddl[0], rel=1e-12)


def test_phy2_outside_fold_is_clamped_flat():
    val, gl, gr = loss_phy2_grad([-1.0], [1.0], 0.5, 0.03061, 0.00025)
    assert math.isfinite(val) and gl[0] == 0.0 and gr[0] == 0.0


# -- escape points -----------------------------------------------------------------


def sawtooth(w_lo, w_hi, n_cycles, n_half=200):
    up = np.linspace(w_lo, w_hi, n_half, endpoint=False)
    down = np.linspace(w_hi, w_lo, n_half, endpoint=False)
    w = np.concatenate([np.concatenate([up, down]) for _ in range(n_cycles)] + [[w_lo]])
    # v on the right branch while w climbs, on the left while it falls
    v = np.concatenate([np.concatenate([np.full(n_half, 1.0), np.full(n_half, -0.1)]) for _ in range(n_cycles)] + [[-0.1]])
    return w, v


def test_escape_points_sawtooth():
    ep = solve_escape_points(0.05, 0.03061, 0.00025)
    w, v = sawtooth(ep.w_left, ep.w_right, 4)
    left, right = extract_escape_points(w, v, 0.01, 0.05)
    np.testing.assert_allclose(right, [ep.w_right] * 4, atol=1e-3)
    np.testing.assert_allclose(left, [ep.w_left] * 3, atol=1e-12)


def test_escape_points_monotone_series():
    w = np.linspace(0.0, 0.1, 500)
    left, right = extract_escape_points(w, np.zeros_like(w), 0.01, 0.05)
    assert len(left) == 0 and len(right) == 0


def brute_force_extrema(w, prominence, sign):
    # direct prominence definition on strict local extrema
    x = sign * np.asarray(w)
    out = []
    for k in range(1, len(x) - 1):
        if not (x[k] > x[k - 1] and x[k] > x[k + 1]):
            continue
        left = x[:k][::-1]
        right = x[k + 1 :]
        lb = np.argmax(left > x[k]) if np.any(left > x[k]) else len(left)
        rb = np.argmax(right > x[k]) if np.any(right > x[k]) else len(right)
        base = max(left[:lb].min(initial=x[k]), right[:rb].min(initial=x[k]))
        if x[k] - base >= prominence:
            out.append(k)
    return out


def test_escape_points_ignore_sub_prominence_wiggles():
    rng = np.random.default_rng(0)
    w, v = sawtooth(0.0, 0.1, 3)
    w = w + 0.001 * rng.standard_normal(len(w))
    left, right = extract_escape_points(w, v, 0.02, 0.05)
    assert len(right) == 3 and len(left) == 2
    assert len(right) == len(brute_force_extrema(w, 0.02, +1))
    assert len(left) == len(brute_force_extrema(w, 0.02, -1))


def test_escape_points_branch_filter():
    # a w maximum reached while v stays on the left branch is not a right escape
    w, _ = sawtooth(0.0, 0.1, 2)
    left, right = extract_escape_points(w, np.full_like(w, -0.1), 0.01, 0.05)
    assert len(right) == 0 and len(left) == 1


# -- weights -----------------------------------------------------------------------


def test_update_weights_balanced_case():
    w = LossWeights(1.0, 3.0, 0.2, 7.0)
    for _ in range(300):
        w = update_weights_dynamic({k: 2.0 for k in COMPONENTS}, w)
    assert all(w.get(k) == pytest.approx(1.0, abs=1e-9) for k in COMPONENTS)


def test_update_weights_one_step_closed_form():
    w = update_weights_dynamic({"data": 1.0, "phy2": 0.1}, LossWeights())
    assert w.lambda_phy2 == pytest.approx(0.9 + 0.1 * 10.0, rel=1e-15)
    assert w.lambda_data == 1.0 and w.lambda_ic == 1.0 and w.lambda_phy1 == 1.0


def test_update_weights_clamped_and_zero_norm():
    w = LossWeights()
    for _ in range(500):
        w = update_weights_dynamic({"data": 1.0, "ic": 1e-9, "phy1": 0.0, "phy2": 1e9}, w)
    assert w.lambda_ic == 1e3 and w.lambda_phy2 == pytest.approx(1e-3) and w.lambda_phy1 == 1.0


def test_loss_weights_reject_negative():
    with pytest.raises(ValueError):
        LossWeights(lambda_phy1=-1.0)


# -- nrmse -------------------------------------------------------------------------


def test_nrmse_examples():
    y = np.array([0.0, 1.0, 2.0])
    assert nrmse(y, y) == 0.0
    assert nrmse(y, np.full(3, y.mean())) == pytest.approx(1.0, abs=1e-15)
    assert nrmse(y, np.array([0.0, 1.0, 1.0])) == pytest.approx(math.sqrt(0.5), abs=1e-15)


def test_nrmse_averages_columns_and_rejects_constant():
    y = np.column_stack([[0.0, 1.0, 2.0], [0.0, 2.0, 4.0]])
    yh = np.column_stack([[0.0, 1.0, 1.0], [0.0, 2.0, 4.0]])
    assert nrmse(y, yh) == pytest.approx(math.sqrt(0.5) / 2, abs=1e-15)
    with pytest.raises(DegenerateReference):
        nrmse(np.ones(5), np.zeros(5))
    with pytest.raises(ValueError):
        nrmse([1.0], [1.0])


@settings(max_examples=50, deadline=None)
@given(k=st.floats(0.01, 100.0), seed=st.integers(0, 1000))
def test_nrmse_scale_invariant(k, seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(20, 2))
    yh = y + 0.1 * rng.normal(size=(20, 2))
    assert nrmse(k * y, k * yh) == pytest.approx(nrmse(y, yh), rel=1e-9)


# -- composite loss and gradients -------------------------------------------------------


def mini_setup(ds, mask, head="euler", collocation=0):
    cfg = TrainConfig(hidden=(8, 8), loss_mask=mask, head=head, batch_total=64, window_len=8,
                      phy1_collocation=collocation, collocation_sigma_max=0.1)
    rng = np.random.default_rng(7)
    net = build_network(cfg, DESK)
    net = net.with_flat(net.flat() + 0.05 * rng.normal(size=net.n_params))
    batch = sample_batch(ds, DESK, cfg, 1)
    cache = PhysicsCache(
        np.array([[0.01, 0.03, 0.002], [0.02, 0.05, -0.004]]),
        np.array([[0.9, 0.09, 0.001]]),
        1,
    )
    return cfg, net, batch, cache


@pytest.mark.parametrize("variant", list(ABLATION_VARIANTS))
def test_composite_gradient_matches_finite_differences(small_ds, variant):
    mask = ABLATION_VARIANTS[variant]
    cfg, net, batch, cache = mini_setup(small_ds, mask, collocation=16)
    weights = LossWeights(1.0, 0.7, 0.3, 50.0)
    scale = channel_scale(small_ds)
    _, values, grads, _ = composite_loss(net, batch, small_ds, DESK, cfg, weights, cache, scale)
    if "phy2" in mask:
        assert values["phy2"] is not None
    g = np.concatenate([a.ravel() for a in grads])
    idx = np.random.default_rng(1).choice(net.n_params, 100, replace=False)

    def loss(n):
        return composite_loss(n, batch, small_ds, DESK, cfg, weights, cache, scale)[0]

    fd = finite_difference_grad(loss, net, idx)
    # relative error of the sampled gradient vector; single tiny entries are
    # limited by rounding in the loss (error ~ ulp(L) / step), not by backprop
    assert np.linalg.norm(g[idx] - fd) / np.linalg.norm(fd) < 1e-5
    rel = np.abs(g[idx] - fd) / np.maximum(np.maximum(np.abs(g[idx]), np.abs(fd)), 1e-6)
    assert np.max(rel) < 1e-4


def test_composite_total_is_weighted_sum(small_ds):
    cfg, net, batch, cache = mini_setup(small_ds, COMPONENTS, collocation=16)
    weights = LossWeights(1.0, 0.7, 0.3, 50.0)
    total, values, grads, comp = composite_loss(net, batch, small_ds, DESK, cfg, weights, cache,
                                                per_component_grads=True)
    assert total == sum(weights.get(k) * v for k, v in values.items())
    _, _, grads_fused, _ = composite_loss(net, batch, small_ds, DESK, cfg, weights, cache)
    for a, b in zip(grads, grads_fused):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)
    assert set(comp) == set(COMPONENTS)


def test_masking_ignores_disabled_inputs(small_ds):
    cfg, net, batch, cache = mini_setup(small_ds, ("data",))
    weights = LossWeights()
    ref = composite_loss(net, batch, small_ds, DESK, cfg, weights, cache)
    moved = PhysicsCache(cache.left_inputs + 0.3, cache.right_inputs - 0.2, 1)
    other = composite_loss(net, batch, small_ds, DESK, cfg, weights, moved)
    assert ref[0] == other[0]
    for a, b in zip(ref[2], other[2]):
        assert np.array_equal(a, b)
    assert set(ref[1]) == {"data"}


def test_phy2_skipped_without_events(small_ds):
    cfg, net, batch, _ = mini_setup(small_ds, ("data", "phy2"))
    empty = PhysicsCache(np.empty((0, 3)), np.empty((0, 3)), 1)
    total, values, _, _ = composite_loss(net, batch, small_ds, DESK, cfg, LossWeights(), empty)
    assert values["phy2"] is None and total == values["data"]


def test_collocation_only_with_phy1(small_ds):
    cfg = TrainConfig(hidden=(4,), loss_mask=("data",), phy1_collocation=32, batch_total=64, window_len=8)
    assert sample_batch(small_ds, DESK, cfg, 1).collocation is None
    cfg = TrainConfig(hidden=(4,), loss_mask=COMPONENTS, phy1_collocation=32, batch_total=64, window_len=8)
    col = sample_batch(small_ds, DESK, cfg, 1).collocation
    assert col.shape == (32, 3)
    np.testing.assert_array_equal(col, sample_batch(small_ds, DESK, cfg, 1).collocation)


def test_batch_windows_are_consecutive(small_ds):
    cfg = TrainConfig(batch_total=64, window_len=16)
    batch = sample_batch(small_ds, DESK, cfg, 3)
    assert batch.inputs.shape == (64, 3)
    rows = batch.inputs.reshape(4, 16, 3)
    targets = batch.targets.reshape(4, 16, 2)
    np.testing.assert_array_equal(targets[:, :-1], rows[:, 1:, :2])
    assert isinstance(batch, StepBatch)


def test_config_validation_and_roundtrip():
    with pytest.raises(ValueError):
        TrainConfig(batch_total=500, window_len=32)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(loss_mask=("data", "bogus"))
    cfg = TrainConfig(loss_mask=("phy1", "data"), weights=LossWeights(lambda_ic=2.0))
    assert cfg.loss_mask == ("data", "phy1")
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_learning_rate_schedule():
    cfg = TrainConfig(epochs=11, lr=1e-3)
    assert learning_rate(cfg, 1) == learning_rate(cfg, 11) == 1e-3
    cfg = TrainConfig(epochs=11, lr=1e-3, lr_final=1e-5)
    assert learning_rate(cfg, 1) == pytest.approx(1e-3)
    assert learning_rate(cfg, 11) == pytest.approx(1e-5)
    assert learning_rate(cfg, 6) == pytest.approx(0.5 * (1e-3 + 1e-5))


# -- training loop -----------------------------------------------------------------


def tiny_cfg(**kw):
    base = dict(epochs=6, hidden=(8, 8), batch_total=64, window_len=8, eval_every=2,
                phy2_rollout_len=500, phy2_every=3, phy1_collocation=16)
    base.update(kw)
    return TrainConfig(**base)


def test_train_reproducible_and_best_epoch(small_ds):
    net1, rep1 = train(tiny_cfg(), small_ds, DESK)
    net2, rep2 = train(tiny_cfg(), small_ds, DESK)
    np.testing.assert_array_equal(net1.flat(), net2.flat())
    strip = lambda r: [{k: v for k, v in h.items()} for h in r.loss_history]  # noqa: E731
    assert strip(rep1) == strip(rep2) and rep1.eval_history == rep2.eval_history
    tests = [e["test_nrmse"] for e in rep1.eval_history]
    assert rep1.best_test_nrmse == min(tests)
    assert rep1.eval_history[tests.index(min(tests))]["epoch"] == rep1.best_epoch
    assert len(rep1.loss_history) == 6


def test_train_best_net_matches_report(small_ds):
    from sisr_pinn.pinn import evaluate

    net, rep = train(tiny_cfg(), small_ds, DESK)
    assert evaluate(net, small_ds)[1] == rep.best_test_nrmse


def test_train_rejects_short_split():
    ds = make_dataset(DESK, n_points=100, burn_in=0)
    with pytest.raises(ValueError):
        train(TrainConfig(), ds, DESK)


def test_run_ablation_rows(small_ds):
    rows, nets = run_ablation(tiny_cfg(epochs=4), small_ds, DESK)
    assert [r["variant"] for r in rows] == list(ABLATION_VARIANTS)
    assert all("test_nrmse" in r for r in rows)
    assert set(nets) == set(ABLATION_VARIANTS)
    rows2, _ = run_ablation(tiny_cfg(epochs=4), small_ds, DESK, workers=2)
    assert [r["test_nrmse"] for r in rows] == [r["test_nrmse"] for r in rows2]


def test_run_ablation_records_failures(small_ds):
    rows, nets = run_ablation(tiny_cfg(epochs=2), small_ds, DESK, variants={"ok": ("data",), "bad": ("nope",)})
    assert "error" in rows[1] and "bad" not in nets and "ok" in nets


def test_forward_prediction_shapes(small_ds):
    net = build_network(TrainConfig(hidden=(4,)), DESK)
    y, _ = forward(net, small_ds.inputs[:5])
    assert y.shape == (5, 2)
