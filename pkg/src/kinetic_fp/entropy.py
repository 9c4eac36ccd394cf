"""Entropy functionals and hypocoercivity diagnostics.

The Tsallis-type entropy density is

    phi_beta(z) = (z^(2-beta) - (2-beta) z + 1 - beta) / (1 - beta),  beta in [0, 1),
    phi_1(z)    = z log z - z + 1,

and the relative phi-entropy is the Bregman integral of phi_beta over dm.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .grid import DensityField, PhaseField, lp_norm_dm, macro_micro_split, total_mass

__all__ = [
    "phi",
    "phi_prime",
    "relative_phi_entropy",
    "CKReport",
    "ck_bounds_check",
    "entropy_dissipation",
    "poisson_solve_torus",
    "spectral_derivative",
    "modified_entropy",
    "cross_term",
    "lambda_envelope",
    "DecayFit",
    "fit_decay_rate",
    "EntropyReport",
    "entropy_report",
    "DENSITY_FLOOR",
]

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-300
_BETA_ONE_SWITCH = 1e-8


def _is_boltzmann(beta: float) -> bool:
    return abs(1.0 - beta) < _BETA_ONE_SWITCH


def _check_beta(beta: float) -> None:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")


def phi(beta: float, z):
    """Entropy density phi_beta(z) for z >= 0."""
    _check_beta(beta)
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("phi is defined for z >= 0 only")
    if _is_boltzmann(beta):
        with np.errstate(divide="ignore", invalid="ignore"):
            zlogz = np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)
        out = zlogz - z + 1.0
    else:
        out = (z ** (2.0 - beta) - (2.0 - beta) * z + 1.0 - beta) / (1.0 - beta)
    return float(out) if out.ndim == 0 else out


def phi_prime(beta: float, z, floor: float = 0.0):
    """Derivative phi_beta'(z). For beta = 1 the argument is floored at ``floor``."""
    _check_beta(beta)
    z = np.asarray(z, dtype=float)
    if _is_boltzmann(beta):
        out = np.log(np.maximum(z, floor) if floor > 0 else z)
    else:
        out = (2.0 - beta) * (np.maximum(z, 0.0) ** (1.0 - beta) - 1.0) / (1.0 - beta)
    return float(out) if out.ndim == 0 else out


def _as_array(h1: PhaseField, h2) -> np.ndarray:
    if isinstance(h2, PhaseField):
        if not h1.same_grid(h2):
            raise ValueError("grid mismatch")
        return h2.values
    if isinstance(h2, DensityField):
        if not h1.same_grid(h2):
            raise ValueError("grid mismatch")
        return np.broadcast_to(h2.values[:, None], h1.shape)
    return np.full(h1.shape, float(h2))


def _integrate_dm(field: PhaseField, values: np.ndarray) -> float:
    return float(field.xgrid.spacing * np.sum(values @ field.vgrid.weights))


def relative_phi_entropy(h1: PhaseField, h2=1.0, beta: float = 0.0) -> float:
    """Bregman integral of phi_beta: H(h1|h2) = int phi(h1) - phi(h2) - phi'(h2)(h1 - h2) dm."""
    b = _as_array(h1, h2)
    if np.any(b <= 0):
        raise ValueError("reference field h2 must be positive")
    a = h1.values
    if np.any(a < 0):
        raise ValueError("h1 must be nonnegative")
    density = phi(beta, a) - phi(beta, b) - phi_prime(beta, b) * (a - b)
    return _integrate_dm(h1, density)


@dataclass
class CKReport:
    entropy: float
    distance_sq: float
    lower_bound: float
    upper_bound: float
    lower_ok: bool
    upper_ok: bool
    slack: float


def ck_bounds_check(
    h1: PhaseField, h2, lam: float, Lam: float, beta: float, tol: float = 1e-12
) -> CKReport:
    """Two-sided comparison (1 - b/2) Lam^-b ||h1-h2||^2 <= H <= (1 - b/2) lam^-b ||h1-h2||^2.

    ``slack`` is the smaller of the two margins, relative to the larger of
    H and the squared distance (zero when both vanish).
    """
    b = _as_array(h1, h2)
    a = h1.values
    if np.any(a < 0) or np.any(b < 0) or a.max() > Lam or b.max() > Lam:
        raise ValueError("fields must lie in [0, Lam]")
    if not lam > 0 or a.min() < lam or b.min() < lam:
        raise ValueError("upper bound requires both fields >= lam > 0")
    H = relative_phi_entropy(h1, h2, beta)
    d2 = _integrate_dm(h1, (a - b) ** 2)
    c = 1.0 - 0.5 * beta
    lower, upper = c * Lam**-beta * d2, c * lam**-beta * d2
    scale = max(H, d2, np.finfo(float).tiny)
    m_low, m_up = (H - lower) / scale, (upper - H) / scale
    return CKReport(H, d2, lower, upper, m_low >= -tol, m_up >= -tol, float(min(m_low, m_up)))


def ou_face_weights(vgrid) -> np.ndarray:
    """mu(v_{j+1/2}) / S / dv^2 on the n_v - 1 interior faces, S = sum_j mu(v_j)."""
    v = vgrid.nodes
    vm = 0.5 * (v[1:] + v[:-1])
    mu = vgrid.mu
    return np.exp(-0.5 * vm**2) / np.sqrt(2.0 * np.pi) / mu.sum() / vgrid.spacing**2


def collision_coefficient(mean: np.ndarray, beta: float, epsilon: float, floor: float = DENSITY_FLOOR) -> np.ndarray:
    """a(x) = <h>^beta / eps^2 with <h>^beta = exp(beta log max(<h>, floor)); beta = 0 gives 1."""
    if beta == 0.0:
        return np.full(np.shape(mean), 1.0 / epsilon**2)
    m = np.asarray(mean, dtype=float)
    power = np.where(m > 0, np.exp(beta * np.log(np.maximum(m, floor))), 0.0)
    return power / epsilon**2


def entropy_dissipation(h: PhaseField, epsilon: float, beta: float, floor: float = DENSITY_FLOOR) -> float:
    """Rate of change of H_beta(h|1) under the discrete collision operator.

    Face form: -sum_i dx a_i sum_{faces} W_{j+1/2} (h_{j+1} - h_j)(phi'(h_{j+1}) - phi'(h_j)),
    with a_i = <h>^beta(x_i) / eps^2 and W the weights of the conservative
    velocity stencil. Each face term is a product of increments of h and of the
    increasing function phi', so the result is nonpositive.
    """
    if h.rep != "h":
        raise ValueError("entropy_dissipation expects an h-representation field")
    vals = np.maximum(h.values, floor) if beta > 0 else h.values
    dh = np.diff(h.values, axis=1)
    dp = np.diff(phi_prime(beta, vals, floor), axis=1)
    W = ou_face_weights(h.vgrid)
    mean = h.values @ h.vgrid.weights
    a = collision_coefficient(mean, beta, epsilon, floor)
    per_column = (dh * dp) @ W
    return float(-h.xgrid.spacing * np.sum(a * per_column))


def spectral_derivative(values: np.ndarray, order: int = 1) -> np.ndarray:
    """Derivative of a periodic sample on [0, 1) by Fourier multiplication."""
    n = values.size
    k = np.fft.fftfreq(n, d=1.0 / n)
    mult = (2j * np.pi * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0  # Nyquist mode has no well-defined odd derivative
    return np.fft.ifft(mult * np.fft.fft(values)).real


def poisson_solve_torus(source: DensityField, tol: float = 1e-10) -> DensityField:
    """Zero-mean solution of -u'' = s on the unit torus by spectral inversion."""
    s = source.values
    scale = max(1.0, float(np.max(np.abs(s))))
    if abs(s.mean()) > tol * scale:
        raise ValueError(f"Poisson source must have zero mean, got mean {s.mean():.3e}")
    n = s.size
    k = np.fft.fftfreq(n, d=1.0 / n)
    sh = np.fft.fft(s)
    uh = np.zeros_like(sh)
    nz = k != 0
    uh[nz] = sh[nz] / (2.0 * np.pi * k[nz]) ** 2
    u = np.fft.ifft(uh).real
    if logger.isEnabledFor(logging.DEBUG):
        dx = source.xgrid.spacing
        norm = lambda f: float(np.sqrt(dx * np.sum(f**2)))
        logger.debug(
            "poisson: |u'| + |u''| = %.3e, |s| = %.3e",
            norm(spectral_derivative(u, 1)) + norm(spectral_derivative(u, 2)), norm(s),
        )
    return DensityField(u, source.xgrid)


def cross_term(h: PhaseField, u: DensityField, use_split: bool = True) -> float:
    """(v d_x u, h_perp) in L^2(dm); with use_split=False, (v d_x u, h) directly."""
    du = spectral_derivative(u.values, 1)
    target = macro_micro_split(h)[1] if use_split else h
    flux = target.values @ (h.vgrid.weights * h.vgrid.nodes)
    return float(h.xgrid.spacing * np.sum(du * flux))


def modified_entropy(h: PhaseField, epsilon: float, delta: float = 0.1, lam: float = 1.0) -> tuple[float, float]:
    """E = ||h - M0||^2 + delta eps lam (v d_x u, h_perp) with -u'' = <h> - M0.

    Returns (E, cross_term).
    """
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    M0 = total_mass(h)
    mean, _ = macro_micro_split(h)
    u = poisson_solve_torus(DensityField(mean.values - M0, h.xgrid))
    ct = cross_term(h, u)
    E = lp_norm_dm(h, M0, 2) ** 2 + delta * epsilon * lam * ct
    return float(E), ct


def lambda_envelope(times: Sequence[float], min_mean: Sequence[float], beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Running minimum of (min_x <h>)^beta and the integral of (lam + lam').

    Returns (lam_t, integral_t) where integral_t = int_0^t lam ds + lam_t - lam_0
    with the time integral done by the trapezoid rule.
    """
    t = np.asarray(times, dtype=float)
    m = np.asarray(min_mean, dtype=float)
    if beta == 0.0:
        powered = np.ones_like(m)
    else:
        powered = np.where(m > 0, np.maximum(m, 0.0) ** beta, 0.0)
    lam = np.minimum.accumulate(powered)
    area = np.concatenate([[0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * np.diff(t))])
    return lam, area + lam - lam[0]


@dataclass
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    n_points: int


def fit_decay_rate(
    t: Sequence[float], values: Sequence[float], window: tuple[float, float] | None = None, mode: str = "exp"
) -> DecayFit:
    """Least-squares slope of log(value) against t (mode 'exp') or log t (mode 'power')."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    if t.size < 3:
        raise ValueError(f"need at least 3 points in the fit window, got {t.size}")
    if np.any(y <= 0):
        raise ValueError("values must be positive")
    if mode == "exp":
        X = t
    elif mode == "power":
        if np.any(t <= 0):
            raise ValueError("power-law fit needs positive abscissae")
        X = np.log(t)
    else:
        raise ValueError(f"unknown fit mode {mode!r}")
    Y = np.log(y)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    sst = float(np.sum((Y - Y.mean()) ** 2))
    sse = float(np.sum(resid**2))
    r2 = 1.0 if sst <= 1e-30 * max(1.0, float(np.sum(Y**2))) else 1.0 - sse / sst
    if sst <= 1e-30 * max(1.0, float(np.sum(Y**2))):
        slope = 0.0 if abs(slope) < 1e-12 else slope
    return DecayFit(float(slope), float(intercept), float(r2), int(t.size))


@dataclass
class EntropyReport:
    time: float
    H_beta_vs_rho: float
    H_beta_vs_1: float
    dissipation: float
    E_eps: float
    cross_term: float
    l2_dm: float
    lambda_t: float

    def as_row(self) -> dict:
        return asdict(self)


def entropy_report(
    h: PhaseField, epsilon: float, beta: float, rho: DensityField | None = None,
    delta: float = 0.1, lambda_t: float = 1.0,
) -> EntropyReport:
    M0 = total_mass(h)
    clipped = h if h.values.min() >= 0 else PhaseField(np.maximum(h.values, 0.0), "h", h.xgrid, h.vgrid, h.time)
    H_rho = relative_phi_entropy(clipped, rho, beta) if rho is not None else float("nan")
    E, ct = modified_entropy(h, epsilon, delta, lambda_t)
    return EntropyReport(
        time=h.time,
        H_beta_vs_rho=H_rho,
        H_beta_vs_1=relative_phi_entropy(clipped, 1.0, beta),
        dissipation=entropy_dissipation(clipped, epsilon, beta),
        E_eps=E,
        cross_term=ct,
        l2_dm=lp_norm_dm(h, M0, 2),
        lambda_t=lambda_t,
    )
