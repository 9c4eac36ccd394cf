"""Constructive positivity tools: barrier functions, Harnack chains and
Gaussian-tail minorants of simulated solutions.

Throughout, <s> = sqrt(1 + s^2) and positions live on the unit torus, where
the displacement x - x0 - t v is measured by its minimal representative.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import KineticPoint, galilean_compose, kinetic_scale, torus_representative
from .grid import PhaseField

__all__ = [
    "BarrierParams",
    "lower_barrier_value",
    "in_conclusion_region",
    "in_barrier_region",
    "barrier_subsolution_check",
    "barrier_ordering_check",
    "upper_barrier_value",
    "initial_layer_check",
    "HarnackChainParams",
    "harnack_chain",
    "chain_feasibility_check",
    "gaussian_tail_fit",
    "minorant_holds",
    "write_report",
]


def japanese(s) -> np.ndarray:
    return np.sqrt(1.0 + np.asarray(s, dtype=float) ** 2)


@dataclass(frozen=True)
class BarrierParams:
    delta: float = 0.5
    tau: float = 1.0
    r: float = 0.5
    x0: float = 0.5
    v0: float = 0.0
    c0: float = 0.01
    T: float = math.inf
    # upper (initial-layer) barrier
    Lambda: float = 2.0
    epsilon: float = 1.0
    R: float = 1.0
    x1: float = 0.5
    v1: float = 0.0
    C0_upper: float = 1.0

    def __post_init__(self) -> None:
        for name in ("delta", "tau", "r"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {val}")
        if not self.c0 > 0:
            raise ValueError(f"c0 must be positive, got {self.c0}")

    @property
    def C0(self) -> float:
        """Time slope of the lower barrier."""
        return float(self.delta * japanese(self.tau / self.r) ** 2 * japanese(self.v0) ** 2 / (8.0 * self.c0))

    @property
    def horizon(self) -> float:
        """Final time of the conclusion region."""
        return float(min(self.T, self.tau, self.c0 / (japanese(self.tau / self.r) ** 2 * japanese(self.v0) ** 2)))

    @property
    def C1(self) -> float:
        return 2.0 * self.C0_upper * self.epsilon**-2 * self.delta**-2 * (1.0 + self.R**2)

    @property
    def C2(self) -> float:
        return 2.0 * self.Lambda / self.delta**2

    @property
    def upper_window(self) -> float:
        return self.epsilon * self.delta / (4.0 * (1.0 + self.R))

    def derived(self) -> dict:
        return {"C0": self.C0, "horizon": self.horizon, "C1": self.C1, "C2": self.C2, "upper_window": self.upper_window}


def _sheared(t, x, v, x0, v0, eps: float = 1.0):
    """Minimal torus representative of x - x0 - t v / eps, and v - v0."""
    return torus_representative(np.asarray(x) - x0 - np.asarray(t) * np.asarray(v) / eps), np.asarray(v) - v0


def _coords(z):
    if isinstance(z, KineticPoint):
        return z.t, float(z.x[0]), float(z.v[0])
    return z


def lower_barrier_value(params: BarrierParams, z) -> float:
    """-C0 t + (delta/2)(1 - |x - x0 - t v|^2 / r^2 - tau^2 |v - v0|^2 / r^2)."""
    t, x, v = _coords(z)
    dx, dv = _sheared(t, x, v, params.x0, params.v0)
    p = params
    return -p.C0 * t + 0.5 * p.delta * (1.0 - dx**2 / p.r**2 - p.tau**2 * dv**2 / p.r**2)


def in_conclusion_region(params: BarrierParams, z) -> bool | np.ndarray:
    """Region where the solution is bounded below by delta / 8."""
    t, x, v = _coords(z)
    dx, dv = _sheared(t, x, v, params.x0, params.v0)
    return (np.asarray(t) >= 0) & (np.asarray(t) <= params.horizon) & (np.abs(dx) < 0.5 * params.r) & (
        np.abs(dv) < params.r / (2.0 * params.tau)
    )


def in_barrier_region(params: BarrierParams, z) -> bool | np.ndarray:
    """Region in which the barrier is compared with the solution."""
    t, x, v = _coords(z)
    dx, dv = _sheared(t, x, v, params.x0, params.v0)
    return (np.asarray(t) >= 0) & (np.asarray(t) <= min(params.T, params.tau)) & (
        dx**2 + params.tau**2 * dv**2 < params.r**2
    )


@dataclass
class BarrierReport:
    passed: bool
    worst_margin: float
    tol: float
    n_points: int
    n_snapshots: int
    constants: dict = field(default_factory=dict)
    notes: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _grid(h: PhaseField):
    return np.meshgrid(h.xgrid.nodes, h.vgrid.nodes, indexing="ij")


def barrier_subsolution_check(
    params: BarrierParams, snapshots: Sequence[PhaseField], tol: float = 1e-6
) -> BarrierReport:
    """min over grid points of the conclusion region of h - delta/8 >= -tol."""
    worst, count, used = math.inf, 0, 0
    for h in snapshots:
        X, V = _grid(h)
        mask = in_conclusion_region(params, (h.time, X, V))
        if mask.any():
            used += 1
            count += int(mask.sum())
            worst = min(worst, float(np.min(h.values[mask] - params.delta / 8.0)))
    if count == 0:
        return BarrierReport(False, math.nan, tol, 0, 0, params.derived(), "no grid point inside the region")
    return BarrierReport(worst >= -tol, worst, tol, count, used, params.derived())


def barrier_ordering_check(params: BarrierParams, snapshots: Sequence[PhaseField], tol: float = 1e-6) -> BarrierReport:
    """min over the barrier region of h - (lower barrier) >= -tol."""
    worst, count, used = math.inf, 0, 0
    for h in snapshots:
        X, V = _grid(h)
        mask = in_barrier_region(params, (h.time, X, V))
        if mask.any():
            used += 1
            count += int(mask.sum())
            barrier = lower_barrier_value(params, (h.time, X, V))
            worst = min(worst, float(np.min(h.values[mask] - barrier[mask])))
    if count == 0:
        return BarrierReport(False, math.nan, tol, 0, 0, params.derived(), "no grid point inside the region")
    return BarrierReport(worst >= -tol, worst, tol, count, used, params.derived())


def upper_barrier_value(params: BarrierParams, z) -> float:
    """C1 t + C2 (|x - x1 - t v / eps|^2 + |v - v1|^2), valid for t <= eps delta / (4 (1 + R))."""
    t, x, v = _coords(z)
    if np.any(np.asarray(t) > params.upper_window * (1 + 1e-12)) or np.any(np.asarray(t) < 0):
        raise ValueError(f"upper barrier is valid only for 0 <= t <= {params.upper_window}")
    dx, dv = _sheared(t, x, v, params.x1, params.v1, params.epsilon)
    return params.C1 * t + params.C2 * (dx**2 + dv**2)


@dataclass
class InitialLayerReport:
    passed: bool
    worst_margin: float
    oscillation: float
    times: list
    deviations: list
    bounds: list
    constants: dict

    def to_dict(self) -> dict:
        return asdict(self)


def initial_layer_check(
    params: BarrierParams, h_in: PhaseField, snapshots: Sequence[PhaseField]
) -> InitialLayerReport:
    """|h(t, x1, v1) - h_in(x1, v1)| <= upper barrier at (t, x1, v1) + oscillation of h_in on
    the delta-ball around (x1, v1), for the snapshots inside the validity window.

    (x1, v1) is snapped to the nearest grid node.
    """
    i = int(np.argmin(np.abs(torus_representative(h_in.xgrid.nodes - params.x1))))
    j = int(np.argmin(np.abs(h_in.vgrid.nodes - params.v1)))
    x1, v1 = float(h_in.xgrid.nodes[i]), float(h_in.vgrid.nodes[j])
    X, V = _grid(h_in)
    ball = torus_representative(X - x1) ** 2 + (V - v1) ** 2 <= params.delta**2
    osc = float(np.max(np.abs(h_in.values[ball] - h_in.values[i, j])))
    p = BarrierParams(**{**asdict(params), "x1": x1, "v1": v1})
    times, devs, bounds = [], [], []
    for h in snapshots:
        t = h.time - h_in.time
        if t < 0 or t > p.upper_window:
            continue
        times.append(t)
        devs.append(float(abs(h.values[i, j] - h_in.values[i, j])))
        bounds.append(float(upper_barrier_value(p, (t, x1, v1)) + osc))
    margins = [b - d for b, d in zip(bounds, devs)]
    worst = min(margins) if margins else math.nan
    return InitialLayerReport(bool(margins) and worst >= 0, worst, osc, times, devs, bounds, p.derived())


# --------------------------------------------------------------------------
# Harnack chains


@dataclass(frozen=True)
class HarnackChainParams:
    t1: float
    t: float
    x: tuple
    v: tuple
    x0: tuple
    v0: tuple
    r: float
    tau1: float
    tau2: float
    N: int
    R: float = 1.0
    delta: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", tuple(np.atleast_1d(np.asarray(self.x, dtype=float)).tolist()))
        object.__setattr__(self, "v", tuple(np.atleast_1d(np.asarray(self.v, dtype=float)).tolist()))
        object.__setattr__(self, "x0", tuple(np.atleast_1d(np.asarray(self.x0, dtype=float)).tolist()))
        object.__setattr__(self, "v0", tuple(np.atleast_1d(np.asarray(self.v0, dtype=float)).tolist()))
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not 0.0 < self.tau1 < 1.0:
            raise ValueError(f"tau1 must lie in (0, 1), got {self.tau1}")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(np.subtract(self.v, self.v0)))

    @classmethod
    def from_recipe(
        cls, t1: float, t: float, x, v, x0, v0, tau1: float, r_max: float, R: float = 1.0, delta: float = 0.5
    ) -> "HarnackChainParams":
        """Pick N = ceil((t - t1) / (r_max^2 tau1)), then r and tau2 so that
        N r^2 tau1 = t - t1 and N r tau2 = |v - v0|."""
        if not t > t1:
            raise ValueError("target time must exceed the start time")
        speed = float(np.linalg.norm(np.subtract(v, v0)))
        N = max(1, math.ceil((t - t1) / (r_max**2 * tau1) - 1e-12))
        r = math.sqrt((t - t1) / (N * tau1))
        tau2 = r * tau1 * speed / (t - t1)
        return cls(t1, t, x, v, x0, v0, r, tau1, tau2, N, R, delta)


def harnack_chain(params: HarnackChainParams) -> list[KineticPoint]:
    """Points z_1, ..., z_{N+1} with z_{N+1} = (t, x, v) and v_1 = v0."""
    p = params
    v = np.asarray(p.v)
    v0 = np.asarray(p.v0)
    speed = p.speed
    if speed == 0.0:
        raise ValueError("zero velocity displacement: the chain direction is undefined")
    e = (v - v0) / speed
    N = int(p.N)
    ts = [p.t1 + i * p.r**2 * p.tau1 for i in range(N)] + [p.t]
    vs = [v0 + i * p.r * p.tau2 * e for i in range(N)] + [v.copy()]
    xs = [None] * (N + 1)
    xs[N] = np.asarray(p.x, dtype=float)
    # x_i = x - r^2 tau1 sum_{j=i}^{N} v_{j+1}, accumulated backwards.
    acc = np.zeros_like(xs[N])
    for i in range(N - 1, -1, -1):
        acc = acc + vs[i + 1]
        xs[i] = xs[N] - p.r**2 * p.tau1 * acc
    return [KineticPoint(ts[i], xs[i], vs[i]) for i in range(N + 1)]


@dataclass
class ChainReport:
    passed: bool
    checks: dict
    max_departure: float
    closed_form_departure: list
    departure_bound: float
    endpoint_error: float
    diagnostics: list

    def to_dict(self) -> dict:
        return asdict(self)


def chain_feasibility_check(params: HarnackChainParams, tol: float = 1e-12) -> ChainReport:
    p = params
    chain = harnack_chain(p)
    N = int(p.N)
    z1 = chain[0]
    v0 = np.asarray(p.v0)
    speed = p.speed
    departures = [
        float(np.linalg.norm(chain[i].x - z1.x - (chain[i].t - z1.t) * v0)) for i in range(1, N + 1)
    ]
    closed = [i * (i + 1) / 2.0 * p.r**3 * p.tau1 * p.tau2 for i in range(1, N + 1)]
    bound = (p.t - p.t1) * speed
    target = KineticPoint(p.t, p.x, p.v)
    end = chain[-1]
    endpoint_error = max(abs(end.t - target.t), float(np.max(np.abs(end.x - target.x))),
                         float(np.max(np.abs(end.v - target.v))))
    # Consecutive links must follow the group law z_i = z_{i+1} o S_r(-tau1, 0, -tau2 e).
    e = (np.asarray(p.v) - v0) / speed
    link_err = 0.0
    for i in range(N):
        step = kinetic_scale(p.r, KineticPoint(-p.tau1, np.zeros_like(e), -p.tau2 * e))
        back = galilean_compose(chain[i + 1], step)
        link_err = max(link_err, abs(back.t - chain[i].t), float(np.max(np.abs(back.x - chain[i].x))),
                       float(np.max(np.abs(back.v - chain[i].v))))
    scale = max(1.0, speed, float(np.max(np.abs(p.x))))
    centre = np.asarray(p.x0) + p.t1 * v0
    checks = {
        "time_matches": abs(N * p.r**2 * p.tau1 - (p.t - p.t1)) <= tol * max(1.0, abs(p.t - p.t1)),
        "velocity_matches": abs(N * p.r * p.tau2 - speed) <= tol * max(1.0, speed),
        "tau2_in_range": 0.0 <= p.tau2 <= 1.0 - p.tau1 + tol,
        "v1_is_v0": bool(np.array_equal(z1.v, v0)),
        "endpoint_exact": endpoint_error <= tol * scale,
        "links_follow_group_law": link_err <= 10 * tol * scale,
        "departures_match_closed_form": all(
            abs(a - b) <= 10 * tol * scale for a, b in zip(departures, closed)
        ),
        "departure_bound": max(departures) <= bound * (1 + tol) + tol,
        "departure_within_R_over_8": bound <= p.R / 8.0 * (1 + tol),
        "x1_in_ball": float(np.linalg.norm(z1.x - centre)) < 5.0 * p.R / 8.0,
    }
    diag = [k for k, ok in checks.items() if not ok]
    return ChainReport(all(checks.values()), checks, max(departures), closed, bound, endpoint_error, diag)


# --------------------------------------------------------------------------
# Gaussian tails


def gaussian_tail_fit(h: PhaseField, x_policy: str | int = "min") -> tuple[float, float]:
    """Fit log h >= log eta1 - eta2 v^2 as a hard lower envelope on the grid.

    The profile m(v) is min over x of h (``x_policy='min'``) or a single
    column index. A least-squares line in v^2 gives the slope (clipped at 0);
    the intercept is then lowered until the envelope touches m from below.
    """
    if h.rep != "h":
        raise ValueError("gaussian_tail_fit expects an h-representation field")
    if x_policy == "min":
        m = h.values.min(axis=0)
    else:
        m = h.values[int(x_policy)]
    if np.any(m <= 0):
        raise ValueError("Gaussian tail fit requires a strictly positive profile")
    v2 = h.vgrid.nodes**2
    y = np.log(m)
    slope, _ = np.polyfit(v2, y, 1)
    eta2 = max(0.0, -float(slope))
    log_eta1 = float(np.min(y + eta2 * v2))
    return math.exp(log_eta1), eta2


def minorant_holds(h: PhaseField, eta1: float, eta2: float) -> bool:
    env = eta1 * np.exp(-eta2 * h.vgrid.nodes**2)
    return bool(np.all(h.values >= env[None, :]))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
