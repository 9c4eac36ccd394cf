"""Strang-split solver for (eps d_t + v d_x) h = eps^-1 <h>^beta L h on T x [-V, V].

L is the Ornstein-Uhlenbeck operator mu^-1 d_v (mu d_v h) discretized in
conservative flux form with zero-flux ends. One step is

    transport(dt/2) -> collision(dt, a = <h>^beta / eps^2) -> transport(dt/2).

The collision substep preserves <h> in every column, so the coefficient a(x)
is exactly constant during it. Two collision integrators are provided: the
backward-Euler M-matrix step and the exact exponential of the discrete
generator (second order inside Strang).

A linear Kolmogorov mode replaces the collision operator by the plain
Laplacian in v acting on f, for comparison against the exact oracle.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields, asdict
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.linalg.lapack import dgtsv

from .entropy import (
    DENSITY_FLOOR,
    collision_coefficient,
    entropy_dissipation,
    relative_phi_entropy,
)
from .grid import (
    PhaseField,
    TorusGrid,
    VelocityGrid,
    build_torus_grid,
    build_velocity_grid,
    lp_norm_dm,
    total_mass,
)

__all__ = [
    "SolverConfig",
    "SolverState",
    "Trajectory",
    "NumericalAbort",
    "DIAGNOSTIC_COLUMNS",
    "transport_half_step",
    "ou_operator",
    "ou_apply",
    "ou_implicit_step",
    "ou_exponential_step",
    "step",
    "simulate",
    "write_diagnostics_csv",
]

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = (
    "step", "time", "mass", "min_h", "max_h", "l2_dm_dist_to_M0",
    "entropy_Hbeta_vs_1", "dissipation", "min_x_mean_h",
)

COLLISION_MODES = ("fokker_planck", "kolmogorov")
COLLISION_SCHEMES = ("exponential", "implicit")
COEFFICIENT_UPDATES = ("frozen", "picard")
TRANSPORT_SCHEMES = ("cubic", "spectral")


class NumericalAbort(RuntimeError):
    """Raised when a non-finite value appears; carries the offending step index."""

    def __init__(self, step_index: int, message: str = ""):
        super().__init__(f"non-finite values at step {step_index}" + (f": {message}" if message else ""))
        self.step_index = step_index


@dataclass
class SolverConfig:
    epsilon: float = 1.0
    beta: float = 0.0
    t_final: float = 1.0
    dt: float | None = None  # None -> min(1e-2, eps^2 / 4)
    n_x: int = 64
    n_v: int = 129
    v_max: float = 8.0
    collision_mode: str = "fokker_planck"
    collision_scheme: str = "exponential"
    coefficient_update: str = "frozen"
    picard_iterations: int = 2
    picard_tol: float = 1e-10
    linear_tol: float = 1e-12
    transport_scheme: str = "cubic"
    clamp_transport: bool = False
    snapshot_stride: int = 10
    diagnostics_stride: int = 1
    bounds_tol: float = 1e-8
    density_floor: float = DENSITY_FLOOR

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.t_final > 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        for name, allowed in (
            ("collision_mode", COLLISION_MODES),
            ("collision_scheme", COLLISION_SCHEMES),
            ("coefficient_update", COEFFICIENT_UPDATES),
            ("transport_scheme", TRANSPORT_SCHEMES),
        ):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.picard_iterations < 1:
            raise ValueError("picard_iterations must be at least 1")

    @property
    def time_step(self) -> float:
        return self.dt if self.dt is not None else min(1e-2, self.epsilon**2 / 4.0)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.time_step)))

    def grids(self) -> tuple[TorusGrid, VelocityGrid]:
        return build_torus_grid(self.n_x), build_velocity_grid(self.v_max, self.n_v)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**data)


# --------------------------------------------------------------------------
# Transport


@lru_cache(maxsize=64)
def _cubic_plan(n_x: int, shifts: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Gather indices (4, n_v, n_x) and weights (4, n_v) for shifting each row by
    ``shifts[j]`` (in units of the period) with periodic cubic Lagrange interpolation."""
    c = np.asarray(shifts) * n_x
    m = np.floor(c)
    u = 1.0 - (c - m)  # position inside the cell [x_{i-m-1}, x_{i-m}]
    w = np.array([
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    ])
    i = np.arange(n_x)
    base = i[None, :] - m.astype(np.int64)[:, None] - 1
    idx = np.stack([(base + k) % n_x for k in (-1, 0, 1, 2)])
    return idx, w


def _shift_rows_cubic(rows: np.ndarray, shifts: np.ndarray, clamp: bool) -> np.ndarray:
    idx, w = _cubic_plan(rows.shape[1], tuple(shifts.tolist()))
    taps = [np.take_along_axis(rows, idx[k], axis=1) for k in range(4)]
    out = sum(w[k][:, None] * taps[k] for k in range(4))
    if clamp:
        lo = np.minimum(taps[1], taps[2])
        hi = np.maximum(taps[1], taps[2])
        out = np.clip(out, lo, hi)
    return out


def _shift_rows_spectral(rows: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    n = rows.shape[1]
    k = np.fft.rfftfreq(n, d=1.0 / n)
    mult = np.exp(-2j * np.pi * k[None, :] * shifts[:, None])
    if n % 2 == 0:
        # The Nyquist mode of a real signal can only be scaled, not rotated.
        mult[:, -1] = np.cos(np.pi * n * shifts)
    return np.fft.irfft(np.fft.rfft(rows, axis=1) * mult, n=n, axis=1)


def transport_half_step(
    h: PhaseField, tau: float, epsilon: float, scheme: str = "cubic", clamp: bool = False
) -> PhaseField:
    """Exact-in-time advection over ``tau``: h(x, v_j) <- h(x - tau v_j / eps, v_j)."""
    shifts = tau * h.vgrid.nodes / epsilon
    rows = h.values.T
    if scheme == "cubic":
        out = _shift_rows_cubic(rows, shifts, clamp)
    elif scheme == "spectral":
        out = _shift_rows_spectral(rows, shifts)
    else:
        raise ValueError(f"unknown transport scheme {scheme!r}")
    return PhaseField(np.ascontiguousarray(out.T), h.rep, h.xgrid, h.vgrid, h.time)


# --------------------------------------------------------------------------
# Collision


@dataclass(frozen=True)
class VelocityOperator:
    """Tridiagonal generator L = diag(lower, diag, upper) with its symmetrization.

    ``sym`` is the diagonal similarity s with s L s^-1 symmetric; ``eigvals``
    and ``eigvecs`` diagonalize that symmetric matrix.
    """

    lower: np.ndarray  # lower[j] couples row j to j-1 (lower[0] = 0)
    diag: np.ndarray
    upper: np.ndarray  # upper[j] couples row j to j+1 (upper[-1] = 0)
    sym: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray


@lru_cache(maxsize=16)
def ou_operator(v_max: float, n_v: int, mode: str = "fokker_planck") -> VelocityOperator:
    vgrid = build_velocity_grid(v_max, n_v)
    v, dv = vgrid.nodes, vgrid.spacing
    if mode == "fokker_planck":
        vm = 0.5 * (v[1:] + v[:-1])
        # mu_{j+1/2} / mu_j and mu_{j+1/2} / mu_{j+1}, formed without under/overflow.
        up = np.exp(-0.5 * (vm**2 - v[:-1] ** 2)) / dv**2
        lo = np.exp(-0.5 * (vm**2 - v[1:] ** 2)) / dv**2
        sym = np.exp(-0.25 * v**2)  # mu^(1/2) up to a constant
        off = np.exp(-0.5 * vm**2 + 0.25 * (v[:-1] ** 2 + v[1:] ** 2)) / dv**2
    elif mode == "kolmogorov":
        up = np.full(n_v - 1, 1.0 / dv**2)
        lo = up.copy()
        sym = np.ones(n_v)
        off = up.copy()
    else:
        raise ValueError(f"unknown collision mode {mode!r}")
    upper = np.append(up, 0.0)
    lower = np.insert(lo, 0, 0.0)
    diag = -(upper + lower)
    lam, Q = eigh_tridiagonal(diag, off)
    # The discrete null space (constants in h) is exact; remove eigenvalue roundoff.
    lam = lam.copy()
    lam[np.argmax(lam)] = 0.0
    for a in (lower, diag, upper, sym, lam, Q):
        a.setflags(write=False)
    return VelocityOperator(lower, diag, upper, sym, lam, Q)


def _operator_for(h: PhaseField, mode: str) -> VelocityOperator:
    return ou_operator(h.vgrid.cutoff, h.vgrid.n, mode)


def ou_apply(h: PhaseField, mode: str = "fokker_planck") -> np.ndarray:
    """Apply the discrete velocity operator to every column."""
    op = _operator_for(h, mode)
    H = h.values
    out = op.diag * H
    out[:, 1:] += op.lower[1:] * H[:, :-1]
    out[:, :-1] += op.upper[:-1] * H[:, 1:]
    return out


def ou_implicit_step(
    h: PhaseField, dt: float, coefficient: np.ndarray, mode: str = "fokker_planck"
) -> PhaseField:
    """Solve (I - dt a_i L) h_new(x_i, .) = h(x_i, .) for every column i.

    All columns are stacked into one tridiagonal system; the zero-flux ends
    decouple consecutive columns.
    """
    op = _operator_for(h, mode)
    a = np.asarray(coefficient, dtype=float).reshape(-1, 1)
    if np.any(a < 0):
        raise ValueError("collision coefficient must be nonnegative")
    n_x, n_v = h.shape
    d = (1.0 - dt * a * op.diag).ravel()
    du = (-dt * a * op.upper).ravel()[:-1]
    dl = (-dt * a * op.lower).ravel()[1:]
    *_, x, info = dgtsv(dl, d, du, h.values.ravel())
    if info != 0:
        raise RuntimeError(f"internal error: singular collision system (info={info})")
    return PhaseField(x.reshape(n_x, n_v), h.rep, h.xgrid, h.vgrid, h.time)


def ou_exponential_step(
    h: PhaseField, dt: float, coefficient: np.ndarray, mode: str = "fokker_planck"
) -> PhaseField:
    """h_new(x_i, .) = exp(dt a_i L) h(x_i, .), evaluated in the symmetric eigenbasis."""
    op = _operator_for(h, mode)
    a = np.asarray(coefficient, dtype=float).reshape(-1, 1)
    if np.any(a < 0):
        raise ValueError("collision coefficient must be nonnegative")
    # Constants are exact null vectors: evolve only the deviation from the
    # column mean, so equilibria are reproduced to the last bit.
    w = h.vgrid.weights if mode == "fokker_planck" else np.full(h.vgrid.n, 1.0 / h.vgrid.n)
    mean = (h.values @ w)[:, None]
    dev = h.values - mean
    C = (dev * op.sym) @ op.eigvecs
    C *= np.exp(dt * a * op.eigvals[None, :])
    out = (C @ op.eigvecs.T) / op.sym
    # The exact flow keeps the deviation mean-free; remove the rounding drift
    # of the eigenbasis along the null vector.
    out -= (out @ w)[:, None]
    return PhaseField(out + mean, h.rep, h.xgrid, h.vgrid, h.time)


# --------------------------------------------------------------------------
# Time stepping


@dataclass
class SolverState:
    h: PhaseField
    step_index: int = 0
    mean: np.ndarray | None = None

    @property
    def time(self) -> float:
        return self.h.time

    def refresh_mean(self) -> np.ndarray:
        self.mean = self.h.values @ self.h.vgrid.weights
        return self.mean


def _coefficient(h: PhaseField, config: SolverConfig) -> np.ndarray:
    if config.collision_mode == "kolmogorov":
        return np.full(h.xgrid.n, 1.0 / config.epsilon**2)
    mean = h.values @ h.vgrid.weights
    return collision_coefficient(mean, config.beta, config.epsilon, config.density_floor)


def _collide(h: PhaseField, dt: float, config: SolverConfig) -> PhaseField:
    solve = ou_exponential_step if config.collision_scheme == "exponential" else ou_implicit_step
    a = _coefficient(h, config)
    new = solve(h, dt, a, config.collision_mode)
    if config.coefficient_update == "picard" and config.collision_mode == "fokker_planck":
        for _ in range(config.picard_iterations - 1):
            # Midpoint coefficient from the start and end states of the substep.
            mid = 0.5 * (h.values + new.values) @ h.vgrid.weights
            a_new = collision_coefficient(mid, config.beta, config.epsilon, config.density_floor)
            if np.max(np.abs(a_new - a)) <= config.picard_tol * max(1.0, float(np.max(np.abs(a)))):
                break
            a = a_new
            new = solve(h, dt, a, config.collision_mode)
    return new


def step(state: SolverState, config: SolverConfig, dt: float | None = None) -> SolverState:
    """One Strang step: transport(dt/2), collision(dt), transport(dt/2)."""
    dt = config.time_step if dt is None else dt
    eps = config.epsilon
    kw = dict(scheme=config.transport_scheme, clamp=config.clamp_transport)
    h = transport_half_step(state.h, 0.5 * dt, eps, **kw)
    h = _collide(h, dt, config)
    h = transport_half_step(h, 0.5 * dt, eps, **kw)
    h.time = state.h.time + dt
    new = SolverState(h, state.step_index + 1)
    new.refresh_mean()
    if not np.all(np.isfinite(h.values)):
        raise NumericalAbort(new.step_index)
    return new


def diagnostics_row(state: SolverState, config: SolverConfig, M0: float | None = None) -> dict:
    h = state.h
    mean = state.mean if state.mean is not None else state.refresh_mean()
    mass = total_mass(h)
    M0 = mass if M0 is None else M0
    if config.collision_mode == "fokker_planck" and h.values.min() >= 0:
        H = relative_phi_entropy(h, 1.0, config.beta)
        D = entropy_dissipation(h, config.epsilon, config.beta, config.density_floor)
    else:
        H = D = float("nan")
    return {
        "step": state.step_index,
        "time": h.time,
        "mass": mass,
        "min_h": float(h.values.min()),
        "max_h": float(h.values.max()),
        "l2_dm_dist_to_M0": lp_norm_dm(h, M0, 2),
        "entropy_Hbeta_vs_1": H,
        "dissipation": D,
        "min_x_mean_h": float(mean.min()),
    }


@dataclass
class Trajectory:
    config: SolverConfig
    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    initial_bounds: tuple[float, float] = (0.0, 0.0)
    worst_bound_violation: float = 0.0

    @property
    def final(self) -> PhaseField:
        return self.snapshots[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def series(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.diagnostics], dtype=float)

    def bounds_preserved(self, tol: float | None = None) -> bool:
        tol = self.config.bounds_tol if tol is None else tol
        return self.worst_bound_violation <= tol


def simulate(
    config: SolverConfig,
    h_in: PhaseField,
    callback: Callable[[SolverState], None] | None = None,
    diagnostics: bool = True,
) -> Trajectory:
    """Run from h_in up to t_final.

    Snapshots are stored every ``snapshot_stride`` steps (and always at the
    start and end); diagnostics every ``diagnostics_stride`` steps. The
    distance of every step to the initial range [min h_in, max h_in] is
    tracked in ``worst_bound_violation``.
    """
    if not np.all(np.isfinite(h_in.values)):
        raise NumericalAbort(0, "initial data")
    want = "f" if config.collision_mode == "kolmogorov" else "h"
    if h_in.rep != want:
        raise ValueError(f"{config.collision_mode} mode expects a {want}-representation field")
    if config.collision_mode == "fokker_planck" and h_in.values.min() < 0:
        raise ValueError("initial data must be nonnegative")
    state = SolverState(h_in.copy())
    state.refresh_mean()
    lo, hi = float(h_in.values.min()), float(h_in.values.max())
    traj = Trajectory(config, [state.h.copy()], [], (lo, hi))
    M0 = total_mass(state.h)
    if diagnostics:
        traj.diagnostics.append(diagnostics_row(state, config, M0))
    n = config.n_steps
    dt = config.t_final / n
    stride = max(1, config.snapshot_stride) if config.snapshot_stride else n
    for k in range(1, n + 1):
        state = step(state, config, dt)
        vals = state.h.values
        traj.worst_bound_violation = max(traj.worst_bound_violation, lo - float(vals.min()), float(vals.max()) - hi)
        if diagnostics and (k % max(1, config.diagnostics_stride) == 0 or k == n):
            traj.diagnostics.append(diagnostics_row(state, config, M0))
        if k % stride == 0 or k == n:
            traj.snapshots.append(state.h.copy())
        if callback is not None:
            callback(state)
    return traj


def write_diagnostics_csv(rows: list[dict], path: str | Path, config_hash: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for row in rows:
            writer.writerow([row["step"]] + [repr(float(row[c])) for c in DIAGNOSTIC_COLUMNS[1:]])
