"""FitzHugh-Nagumo parameter space, vector field and excitable-regime analysis.

The model is

    dv = [v (a - v)(v - 1) - w] dt + sigma dB
    dw = eps (b v - c w) dt

with ``v`` the fast membrane potential and ``w`` the slow recovery current.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """FHN parameter set.

    ``a`` is the excitability threshold, ``b``/``c`` the recovery coupling and
    decay, ``eps`` the timescale separation and ``sigma`` the noise intensity.
    """

    a: float = 0.05
    b: float = 1.0
    c: float = 2.0
    eps: float = 0.00025
    sigma: float = 0.03061

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if not self.c > 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def replace(self, **changes) -> "ModelParams":
        return ModelParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class State:
    v: float
    w: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.w)):
            raise ValueError(f"state must be finite, got ({self.v}, {self.w})")

    def __iter__(self):
        yield self.v
        yield self.w


@dataclass
class StabilityReport:
    discriminant: float
    trace: float
    det: float
    fixed_points: list[State]
    excitable: bool
    a_range: tuple[float, float]
    degenerate: bool = False
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "discriminant": self.discriminant,
            "trace": self.trace,
            "det": self.det,
            "fixed_points": [[p.v, p.w] for p in self.fixed_points],
            "excitable": self.excitable,
            "degenerate": self.degenerate,
            "a_range": list(self.a_range),
            "params": self.params,
        }


def fast_rate(v, w, a):
    """f(v, w) = v (a - v)(v - 1) - w; works on scalars and arrays."""
    return v * (a - v) * (v - 1.0) - w


def slow_rate(v, w, eps, b, c):
    """g(v, w) = eps (b v - c w)."""
    return eps * (b * v - c * w)


def vector_field(s: State, p: ModelParams) -> tuple[float, float]:
    v, w = s
    return fast_rate(v, w, p.a), slow_rate(v, w, p.eps, p.b, p.c)


def jacobian_at(s: State, p: ModelParams) -> np.ndarray:
    v = s.v
    return np.array(
        [
            [-3.0 * v * v + 2.0 * (p.a + 1.0) * v - p.a, -1.0],
            [p.eps * p.b, -p.eps * p.c],
        ]
    )


def discriminant(a: float, b: float, c: float) -> float:
    return (a + 1.0) ** 2 - 4.0 * (a + b / c)


def excitable_a_range(b: float, c: float) -> tuple[float, float]:
    """Interval of ``a`` with a unique, stable rest state at the origin.

    The upper end is where the discriminant changes sign; the lower end is
    clipped at 0, below which the rest state loses stability through a Hopf
    bifurcation once the slow dynamics are taken into account.
    """
    half_width = 2.0 * math.sqrt(b / c)
    return max(0.0, 1.0 - half_width), 1.0 + half_width


def _polish(v: float, a: float, ratio: float) -> float:
    # one Newton step on h(v) = v (a - v)(v - 1) - ratio * v
    h = v * (a - v) * (v - 1.0) - ratio * v
    dh = -3.0 * v * v + 2.0 * (a + 1.0) * v - a - ratio
    if dh == 0.0:
        return v
    return v - h / dh


def fixed_points(p: ModelParams) -> list[State]:
    """All real equilibria sorted by ``v``.

    v = 0 always solves v (a - v)(v - 1) = (b/c) v; the remaining roots come
    from the quadratic v^2 - (a + 1) v + a + b/c = 0 whose discriminant is the
    excitability discriminant.
    """
    ratio = p.b / p.c
    disc = discriminant(p.a, p.b, p.c)
    vs = [0.0]
    if disc >= 0.0:
        root = math.sqrt(disc)
        # cancellation-free pair
        q = -0.5 * (-(p.a + 1.0) - root)
        r1 = q
        r2 = (p.a + ratio) / q if q != 0.0 else q
        for r in {r1, r2}:
            vs.append(_polish(r, p.a, ratio))
    vs.sort()
    return [State(v, ratio * v) for v in vs]


def classify_regime(p: ModelParams) -> StabilityReport:
    disc = discriminant(p.a, p.b, p.c)
    jac = jacobian_at(State(0.0, 0.0), p)
    trace = float(np.trace(jac))
    det = float(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0])
    degenerate = disc == 0.0
    excitable = disc < 0.0 and trace < 0.0 and det > 0.0
    return StabilityReport(
        discriminant=disc,
        trace=trace,
        det=det,
        fixed_points=fixed_points(p),
        excitable=excitable,
        a_range=excitable_a_range(p.b, p.c),
        degenerate=degenerate,
        params=p.to_dict(),
    )
