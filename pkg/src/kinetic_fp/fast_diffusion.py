"""Fast-diffusion equation d_t rho = d_x (rho^-beta d_x rho) on the unit torus.

Lagged-coefficient backward Euler: each step solves the cyclic tridiagonal
system (I - dt D(rho_n^-beta)) rho_{n+1} = rho_n, where D(a) is the
conservative flux Laplacian with harmonic-mean face coefficients.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

import numpy as np
from scipy.linalg.lapack import dgtsv

from .grid import DensityField, TorusGrid, build_torus_grid

__all__ = ["FdConfig", "FdTrajectory", "fd_step", "fd_simulate", "flux_laplacian", "write_fd_csv"]

logger = logging.getLogger(__name__)


@dataclass
class FdConfig:
    beta: float = 0.0
    dt: float = 1e-4
    n_x: int = 64
    t_final: float = 1.0
    lag: str = "lagged"  # coefficient from the start of the step
    floor: float = 1e-8
    snapshot_stride: int = 10

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.dt > 0 or not self.t_final > 0:
            raise ValueError("dt and t_final must be positive")
        if self.lag != "lagged":
            raise ValueError(f"unsupported coefficient lag mode {self.lag!r}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    @classmethod
    def from_dict(cls, data: dict) -> "FdConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown fast_diffusion keys: {sorted(unknown)}")
        return cls(**data)


def _face_coefficients(rho: np.ndarray, beta: float, floor: float) -> np.ndarray:
    """Harmonic mean of rho^-beta between node i and i+1 (periodic)."""
    if beta == 0.0:
        return np.ones_like(rho)
    clipped = np.maximum(rho, floor)
    if np.any(rho < floor):
        warnings.warn("density floor activated in the fast-diffusion coefficient", RuntimeWarning)
    a = clipped**-beta
    b = np.roll(a, -1)
    return 2.0 * a * b / (a + b)


def flux_laplacian(rho: np.ndarray, face: np.ndarray, dx: float) -> np.ndarray:
    """(face_{i+1/2}(rho_{i+1} - rho_i) - face_{i-1/2}(rho_i - rho_{i-1})) / dx^2."""
    flux = face * (np.roll(rho, -1) - rho)
    return (flux - np.roll(flux, 1)) / dx**2


def _solve_cyclic(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a cyclic tridiagonal system by Sherman-Morrison.

    Row i reads lower[i] x_{i-1} + diag[i] x_i + upper[i] x_{i+1} = rhs[i]
    with periodic indices.
    """
    n = diag.size
    alpha, beta_ = upper[-1], lower[0]  # corner entries A[n-1, 0] and A[0, n-1]
    gamma = -diag[0]
    d = diag.copy()
    d[0] -= gamma
    d[-1] -= alpha * beta_ / gamma
    dl, du = lower[1:].copy(), upper[:-1].copy()
    u = np.zeros(n)
    u[0], u[-1] = gamma, alpha
    rhs2 = np.column_stack([rhs, u])
    *_, sol, info = dgtsv(dl, d, du, rhs2)
    if info != 0:
        raise RuntimeError(f"internal error: singular fast-diffusion system (info={info})")
    y, z = sol[:, 0], sol[:, 1]
    vy = y[0] + beta_ / gamma * y[-1]
    vz = z[0] + beta_ / gamma * z[-1]
    return y - z * vy / (1.0 + vz)


def fd_step(rho: DensityField, dt: float, beta: float, floor: float = 1e-8) -> DensityField:
    """One lagged backward-Euler step."""
    r = rho.values
    if np.any(r <= 0):
        raise ValueError("fast-diffusion step requires a positive density")
    n = r.size
    dx = rho.xgrid.spacing
    face = _face_coefficients(r, beta, floor) * dt / dx**2  # face i+1/2
    face_left = np.roll(face, 1)
    diag = 1.0 + face + face_left
    if n == 1:
        return DensityField(r.copy(), rho.xgrid)
    if n == 2:
        A = np.array([[diag[0], -face[0] - face_left[0]], [-face[1] - face_left[1], diag[1]]])
        return DensityField(np.linalg.solve(A, r), rho.xgrid)
    out = _solve_cyclic(-face_left, diag, -face, r)
    return DensityField(out, rho.xgrid)


@dataclass
class FdTrajectory:
    config: FdConfig
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def at(self, t: float) -> DensityField:
        """Snapshot whose time is closest to t."""
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.snapshots[i]

    def series(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.diagnostics], dtype=float)


def _diagnostics(step: int, t: float, rho: DensityField) -> dict:
    r = rho.values
    grad = (np.roll(r, -1) - r) / rho.xgrid.spacing
    return {
        "step": step,
        "time": t,
        "mass": rho.integral(),
        "min_rho": float(r.min()),
        "max_rho": float(r.max()),
        "grad_sup": float(np.max(np.abs(grad))),
    }


def fd_simulate(
    config: FdConfig, rho_in: DensityField, output_times: list[float] | None = None, callback=None
) -> FdTrajectory:
    """Run to t_final. Snapshots every ``snapshot_stride`` steps plus any step
    landing on a requested output time (to within dt / 2)."""
    if rho_in.xgrid.n != config.n_x:
        raise ValueError("initial density does not match n_x")
    if np.any(rho_in.values <= 0):
        raise ValueError("initial density must be positive")
    n = config.n_steps
    dt = config.t_final / n
    wanted = set()
    for t in output_times or []:
        wanted.add(int(round(t / dt)))
    rho = DensityField(rho_in.values.copy(), rho_in.xgrid)
    traj = FdTrajectory(config, [0.0], [rho], [_diagnostics(0, 0.0, rho)])
    for k in range(1, n + 1):
        rho = fd_step(rho, dt, config.beta, config.floor)
        t = k * dt
        traj.diagnostics.append(_diagnostics(k, t, rho))
        if (config.snapshot_stride and k % config.snapshot_stride == 0) or k == n or k in wanted:
            traj.times.append(t)
            traj.snapshots.append(rho)
        if callback is not None:
            callback(k, rho)
    return traj


def write_fd_csv(traj: FdTrajectory, path: str | Path, config_hash: str = "") -> None:
    cols = ["step", "time", "mass", "min_rho", "max_rho", "grad_sup"]
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for row in traj.diagnostics:
            w.writerow([row["step"]] + [repr(float(row[c])) for c in cols[1:]])


def write_density_csv(rho: DensityField, path: str | Path, time: float, config_hash: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# time={time!r} config_hash={config_hash}\n")
        w = csv.writer(fh)
        w.writerow(["x", "rho"])
        for x, r in zip(rho.xgrid.nodes, rho.values):
            w.writerow([repr(float(x)), repr(float(r))])
