import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sisr_pinn.errors import NoMatch, OutOfRange
from sisr_pinn.fhn_model import ModelParams
from sisr_pinn.potential import (
    barrier_arrays,
    barriers,
    matching_target,
    nullcline_extrema,
    nullcline_roots,
    potential,
    potential_d2v,
    solve_escape_points,
    slow_drift,
)


def numeric_roots(w, a):
    r = np.roots([-1.0, a + 1.0, -a, -w])
    return np.sort(r.real[np.abs(r.imag) < 1e-7])


def test_potential_values():
    assert potential(0.0, 0.37, 0.2) == 0.0
    assert potential(1.0, 0.0, 0.5) == pytest.approx(0.0, abs=1e-16)
    assert potential(0.5, 0.0, 0.5) == pytest.approx(0.015625, abs=1e-16)
    a = 0.3
    assert potential(a, 0.0, a) == pytest.approx(a**3 * (2 - a) / 12, abs=1e-16)


@pytest.mark.parametrize("a", [0.5, 0.05])
def test_roots_factorise_at_w_zero(a):
    r = nullcline_roots(0.0, a)
    assert (r.v_left, r.v_saddle, r.v_right) == pytest.approx((0.0, a, 1.0), abs=1e-12)


def test_roots_out_of_range_beyond_fold():
    ext = nullcline_extrema(0.5)
    with pytest.raises(OutOfRange):
        nullcline_roots(ext.w_max + 0.01, 0.5)
    with pytest.raises(OutOfRange):
        nullcline_roots(ext.w_min - 0.01, 0.5)


def test_roots_at_fold_are_clamped_not_rejected():
    ext = nullcline_extrema(0.5)
    r = nullcline_roots(ext.w_max, 0.5)
    assert r.v_saddle == pytest.approx(r.v_right, abs=1e-6)


def test_extrema_at_half():
    ext = nullcline_extrema(0.5)
    assert ext.v_min == pytest.approx(0.211325, abs=1e-6)
    assert ext.v_max == pytest.approx(0.788675, abs=1e-6)
    assert ext.w_max == pytest.approx(-ext.w_min, abs=1e-12)
    # direct evaluation gives +-0.04811 (the caption of the figure prints 0.04775)
    assert ext.w_max == pytest.approx(0.0481125, abs=1e-6)
    assert ext.w_min < 0 < ext.w_max


@pytest.mark.parametrize("a", [0.05, 0.3, 0.5, 0.9])
def test_extrema_are_stationary(a):
    ext = nullcline_extrema(a)
    for v in (ext.v_min, ext.v_max):
        assert -3 * v * v + 2 * (a + 1) * v - a == pytest.approx(0.0, abs=1e-12)


def test_barriers_symmetric_case():
    b = barriers(0.0, 0.5, 0.1)
    assert b.dU_left == pytest.approx(0.015625, abs=1e-15)
    assert b.dU_right == pytest.approx(0.015625, abs=1e-15)
    assert b.c_left == pytest.approx(math.sqrt(0.5 * 0.25) / (2 * math.pi), rel=1e-12)
    assert b.c_left == pytest.approx(0.056270, abs=1e-6)
    assert b.tau_left == pytest.approx(math.exp(2 * 0.015625 / 0.01) / b.c_left, rel=1e-12)
    assert 404 < b.tau_left < 406


def test_barriers_without_noise_have_no_times():
    b = barriers(0.01, 0.5)
    assert b.tau_left is None and b.tau_right is None


def test_barriers_propagate_out_of_range():
    with pytest.raises(OutOfRange):
        barriers(1.0, 0.5)


def test_matching_target():
    assert matching_target(0.03061, 0.00025) == pytest.approx(0.5 * 0.03061**2 * math.log(4000), rel=1e-14)
    assert matching_target(0.03061, 0.00025) == pytest.approx(0.0038856, abs=1e-7)
    assert matching_target(0.0, 0.01) == 0.0
    assert matching_target(0.3, 1.0) == 0.0


def test_escape_points_reference_parameters():
    ep = solve_escape_points(0.05, 0.03061, 0.00025)
    assert ep.target == pytest.approx(0.0038856, abs=1e-7)
    ext = nullcline_extrema(0.05)
    assert ext.w_min <= ep.w_left <= ext.w_max
    assert ext.w_min <= ep.w_right <= ext.w_max
    assert abs(barriers(ep.w_left, 0.05).dU_left - ep.target) < 1e-10
    assert abs(barriers(ep.w_right, 0.05).dU_right - ep.target) < 1e-10


def test_escape_points_symmetric():
    # sigma chosen so the target equals the barrier at w = 0
    eps = 0.01
    sigma = math.sqrt(2 * 0.015625 / math.log(1 / eps))
    ep = solve_escape_points(0.5, sigma, eps)
    assert ep.w_left == pytest.approx(0.0, abs=1e-10)
    assert ep.w_right == pytest.approx(0.0, abs=1e-10)


def test_escape_points_no_match():
    a = 0.5
    ext = nullcline_extrema(a)
    top = barriers(ext.w_max, a).dU_left
    eps = 0.01
    sigma = math.sqrt(2 * 1.5 * top / math.log(1 / eps))
    with pytest.raises(NoMatch):
        solve_escape_points(a, sigma, eps)


def test_slow_drift_examples():
    p = ModelParams(a=0.5, b=1, c=2, eps=0.00025)
    assert slow_drift(0.0, 0.5, "left", p) == pytest.approx(0.0, abs=1e-15)
    assert slow_drift(0.0, 0.5, "right", p) == pytest.approx(2.5e-4, abs=1e-15)
    with pytest.raises(ValueError):
        slow_drift(0.0, 0.5, "middle", p)


def test_slow_drift_adiabatic_limit():
    # eps = 0 is outside ModelParams' domain; the formula itself is linear in eps
    p = ModelParams(a=0.5, eps=1e-300)
    assert abs(slow_drift(0.02, 0.5, "left", p)) < 1e-290
    assert abs(slow_drift(0.02, 0.5, "right", p)) < 1e-290


def test_root_formula_matches_numeric_solver_on_grid():
    worst = 0.0
    for a in np.linspace(0.02, 1.0, 50):
        ext = nullcline_extrema(a)
        for w in np.linspace(ext.w_min, ext.w_max, 52)[1:-1]:
            r = nullcline_roots(w, a)
            ref = numeric_roots(w, a)
            worst = max(worst, np.max(np.abs(np.array([r.v_left, r.v_saddle, r.v_right]) - ref)))
    assert worst < 1e-9


@settings(max_examples=300, deadline=None)
@given(a=st.floats(0.01, 2.0), u=st.floats(0.001, 0.999))
def test_roots_ordered_with_small_residual(a, u):
    ext = nullcline_extrema(a)
    w = ext.w_min + u * (ext.w_max - ext.w_min)
    r = nullcline_roots(w, a)
    assert r.v_left < r.v_saddle < r.v_right
    for v in (r.v_left, r.v_saddle, r.v_right):
        assert abs(v * (a - v) * (v - 1) - w) < 1e-10


@pytest.mark.parametrize("a", [0.05, 0.5, 1.0])
def test_barrier_monotonicity_and_positivity(a):
    ext = nullcline_extrema(a)
    ws = np.linspace(ext.w_min + 1e-9, ext.w_max - 1e-9, 1000)
    dl, dr, _, _ = barrier_arrays(ws, a)
    assert np.all(np.diff(dl) > 0)
    assert np.all(np.diff(dr) < 0)
    assert np.all(dl >= 0) and np.all(dr >= 0)
    # barriers vanish at the folds
    assert barriers(ext.w_min, a).dU_left == pytest.approx(0.0, abs=1e-12)
    assert barriers(ext.w_max, a).dU_right == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("a,w", [(0.5, 0.0), (0.05, 0.05), (0.9, -0.01), (0.3, 0.02)])
def test_prefactor_matches_finite_difference_curvature(a, w):
    r = nullcline_roots(w, a)
    h = 1e-4

    def d2(v):
        return (potential(v + h, w, a) - 2 * potential(v, w, a) + potential(v - h, w, a)) / h**2

    for v_well, c in ((r.v_left, barriers(w, a).c_left), (r.v_right, barriers(w, a).c_right)):
        c_fd = math.sqrt(d2(v_well) * abs(d2(r.v_saddle))) / (2 * math.pi)
        assert abs(c_fd - c) / c < 1e-6
    assert potential_d2v(r.v_saddle, a) < 0


@pytest.mark.parametrize("a,w", [(0.5, 0.01), (0.05, 0.08), (1.0, -0.05)])
def test_barrier_derivative_matches_finite_differences(a, w):
    h = 1e-7
    _, _, ddl, ddr = barrier_arrays(np.array([w]), a)
    up = barrier_arrays(np.array([w + h]), a)
    dn = barrier_arrays(np.array([w - h]), a)
    assert ddl[0] == pytest.approx((up[0][0] - dn[0][0]) / (2 * h), rel=1e-6)
    assert ddr[0] == pytest.approx((up[1][0] - dn[1][0]) / (2 * h), rel=1e-6)
