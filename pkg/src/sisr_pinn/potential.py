"""Effective double-well potential of the fast subsystem and Kramers escape theory.

For frozen ``w`` the fast variable obeys dv = -dU/dv dt + sigma dB with

    U(v, w, a) = v^4/4 - (a + 1) v^3/3 + a v^2/2 + v w.

The stationary points of ``U`` are the roots of the cubic v-nullcline,
ordered left well < saddle < right well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import NoMatch, OutOfRange
from .fhn_model import ModelParams

# slack tolerated on the arccos argument before declaring a single real root
ARCCOS_SLACK = 1e-12


@dataclass(frozen=True)
class NullclineRoots:
    v_left: float
    v_saddle: float
    v_right: float


@dataclass(frozen=True)
class NullclineExtrema:
    v_min: float
    w_min: float
    v_max: float
    w_max: float


@dataclass(frozen=True)
class BarrierPair:
    w: float
    a: float
    dU_left: float
    dU_right: float
    c_left: float
    c_right: float
    tau_left: float | None = None
    tau_right: float | None = None


@dataclass(frozen=True)
class EscapePoints:
    w_left: float
    w_right: float
    target: float


def potential(v, w, a):
    return 0.25 * v**4 - (a + 1.0) * v**3 / 3.0 + 0.5 * a * v**2 + v * w


def potential_dv(v, w, a):
    return v**3 - (a + 1.0) * v**2 + a * v + w


def potential_d2v(v, a):
    return 3.0 * v**2 - 2.0 * (a + 1.0) * v + a


def _arccos_argument(w, a):
    q = a * a - a + 1.0
    return ((a + 1.0) ** 3 - 4.5 * a * (a + 1.0) - 13.5 * w) / q**1.5


def nullcline_roots_array(w, a):
    """Vectorised closed-form roots ``(left, saddle, right)`` of v(a-v)(v-1) = w.

    Raises :class:`OutOfRange` if any ``w`` is beyond the fold points.
    """
    w = np.asarray(w, dtype=float)
    arg = _arccos_argument(w, a)
    if np.any(np.abs(arg) > 1.0 + ARCCOS_SLACK):
        bad = w[np.abs(arg) > 1.0 + ARCCOS_SLACK] if w.ndim else w
        raise OutOfRange(
            f"w={np.ravel(bad)[0]!r} outside the fold interval at a={a}: single real root"
        )
    theta = np.arccos(np.clip(arg, -1.0, 1.0)) / 3.0
    centre = (a + 1.0) / 3.0
    radius = 2.0 / 3.0 * math.sqrt(a * a - a + 1.0)
    v_left = centre + radius * np.cos(theta + 2.0 * math.pi / 3.0)
    v_saddle = centre + radius * np.cos(theta - 2.0 * math.pi / 3.0)
    v_right = centre + radius * np.cos(theta)
    return v_left, v_saddle, v_right


def nullcline_roots(w: float, a: float) -> NullclineRoots:
    vl, vs, vr = nullcline_roots_array(w, a)
    return NullclineRoots(float(vl), float(vs), float(vr))


def nullcline_extrema(a: float) -> NullclineExtrema:
    root = math.sqrt(a * a - a + 1.0)
    v_min = ((a + 1.0) - root) / 3.0
    v_max = ((a + 1.0) + root) / 3.0

    def cubic(v):
        return v * (a - v) * (v - 1.0)

    return NullclineExtrema(v_min, cubic(v_min), v_max, cubic(v_max))


def barrier_arrays(w, a):
    """Barrier heights and their w-derivatives, vectorised.

    Returns ``(dU_left, dU_right, ddU_left, ddU_right)``. Because dU/dv vanishes
    at every stationary point, d(dU)/dw reduces to differences of the roots.
    """
    vl, vs, vr = nullcline_roots_array(w, a)
    us = potential(vs, w, a)
    dU_left = us - potential(vl, w, a)
    dU_right = us - potential(vr, w, a)
    return dU_left, dU_right, vs - vl, vs - vr


def kramers_prefactor(v_well: float, v_saddle: float, a: float) -> float:
    # curvature at a well is >= 0 up to rounding at the fold points
    well = max(potential_d2v(v_well, a), 0.0)
    return math.sqrt(well * abs(potential_d2v(v_saddle, a))) / (2.0 * math.pi)


def escape_time(prefactor: float, barrier: float, sigma: float) -> float:
    """Arrhenius mean escape time (1/c) exp(2 dU / sigma^2)."""
    if prefactor == 0.0:
        return math.inf
    try:
        return math.exp(2.0 * barrier / sigma**2) / prefactor
    except OverflowError:
        return math.inf


def barriers(w: float, a: float, sigma: float = 0.0) -> BarrierPair:
    roots = nullcline_roots(w, a)
    u_s = potential(roots.v_saddle, w, a)
    dU_left = u_s - potential(roots.v_left, w, a)
    dU_right = u_s - potential(roots.v_right, w, a)
    c_left = kramers_prefactor(roots.v_left, roots.v_saddle, a)
    c_right = kramers_prefactor(roots.v_right, roots.v_saddle, a)
    tau_left = tau_right = None
    if sigma > 0:
        tau_left = escape_time(c_left, dU_left, sigma)
        tau_right = escape_time(c_right, dU_right, sigma)
    return BarrierPair(w, a, dU_left, dU_right, c_left, c_right, tau_left, tau_right)


def matching_target(sigma: float, eps: float) -> float:
    """Barrier height at which Kramers escape matches the slow timescale."""
    return 0.5 * sigma**2 * math.log(1.0 / eps)


def _bisect(fn, lo: float, hi: float, tol: float = 1e-15, max_iter: int = 200) -> float:
    f_lo = fn(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)) or mid in (lo, hi):
            break
        f_mid = fn(mid)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_escape_points(a: float, sigma: float, eps: float) -> EscapePoints:
    """Escape ordinates where each barrier equals the matching target.

    Bisection over the fold interval; the left barrier increases and the
    right barrier decreases in ``w`` so each solution is unique.
    """
    target = matching_target(sigma, eps)
    ext = nullcline_extrema(a)
    lo, hi = ext.w_min, ext.w_max

    def left(w):
        return barriers(w, a).dU_left - target

    def right(w):
        return barriers(w, a).dU_right - target

    for name, fn in (("left", left), ("right", right)):
        f_lo, f_hi = fn(lo), fn(hi)
        if f_lo * f_hi > 0:
            span = sorted((f_lo + target, f_hi + target))
            raise NoMatch(
                f"target {target:.6g} outside {name} barrier range "
                f"[{span[0]:.6g}, {span[1]:.6g}] at a={a}"
            )
    return EscapePoints(_bisect(left, lo, hi), _bisect(right, lo, hi), target)


def slow_drift(w: float, a: float, branch: Literal["left", "right"], p: ModelParams) -> float:
    """Adiabatic drift of ``w`` along a stable branch of the v-nullcline."""
    if branch not in ("left", "right"):
        raise ValueError(f"branch must be 'left' or 'right', got {branch!r}")
    roots = nullcline_roots(w, a)
    v = roots.v_left if branch == "left" else roots.v_right
    return p.eps * (p.b * v - p.c * w)


def barrier_curve(a: float, n: int = 201, sigma: float = 0.0, guard: float = 1e-9):
    """Barrier heights and Kramers times on an equispaced interior w-grid."""
    ext = nullcline_extrema(a)
    ws = np.linspace(ext.w_min + guard, ext.w_max - guard, n)
    return ws, [barriers(float(w), a, sigma) for w in ws]
