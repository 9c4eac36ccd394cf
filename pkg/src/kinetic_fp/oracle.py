"""Exact solutions of the Kolmogorov equation d_t f + v d_x f = d_vv f.

The fundamental solution on R x R is

    Gamma(t, x, v) = (sqrt(3) / (2 pi t^2)) exp(-3 (x - t v / 2)^2 / t^3 - v^2 / (4 t))

for t > 0 and 0 otherwise. Periodizing in x gives the Green function G on the
unit torus. Initial data are propagated by the group convolution

    f(t, x, v) = sum_{xi, eta} G(t, x - xi - t eta, v - eta) f_in(xi, eta) dxi deta,

which is the quadrature of the exact representation on the phase grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import PhaseField

__all__ = [
    "GreenParams",
    "gamma",
    "periodic_green",
    "green_tail_bound",
    "default_image_terms",
    "oracle_solve",
    "duhamel_source",
    "MIN_TIME",
]

MIN_TIME = 1e-6
_IMAGE_TOL = 1e-14


def gamma(t, x, v, dim: int = 1):
    """Fundamental solution. For dim > 1 the last axis of x and v holds components."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if dim == 1:
        sx = (x - 0.5 * t * v) ** 2
        sv = v**2
    else:
        sx = np.sum((x - 0.5 * t[..., None] * v) ** 2, axis=-1)
        sv = np.sum(v**2, axis=-1)
    pos = t > 0
    tt = np.where(pos, t, 1.0)
    val = (np.sqrt(3.0) / (2.0 * np.pi * tt**2)) ** dim * np.exp(-3.0 * sx / tt**3 - sv / (4.0 * tt))
    out = np.where(pos, val, 0.0)
    return float(out) if out.ndim == 0 else out


def default_image_terms(t: float, tol: float = _IMAGE_TOL) -> int:
    """Smallest K such that images beyond |n| = K, measured from the nearest
    image to the Gaussian centre, have relative peak below ``tol``."""
    # Beyond the nearest image the offset is at least K + 1/2 - 1/2 = K.
    return max(1, math.ceil(math.sqrt(t**3 * math.log(1.0 / tol) / 3.0) + 0.5))


def green_tail_bound(t: float, n_terms: int) -> float:
    """Upper bound on the relative size of the omitted image terms."""
    s = n_terms - 0.5
    # Sum of exp(-3 (s + k)^2 / t^3) over k >= 0, two sides, dominated by a geometric series.
    q = math.exp(-3.0 * (2.0 * s + 1.0) / t**3)
    return 2.0 * math.exp(-3.0 * s * s / t**3) / (1.0 - q) if q < 1.0 else math.inf


@dataclass(frozen=True)
class GreenParams:
    n_terms: int | None = None  # None selects default_image_terms(t)

    def __post_init__(self) -> None:
        if self.n_terms is not None and self.n_terms < 1:
            raise ValueError(f"n_terms must be at least 1, got {self.n_terms}")

    def terms(self, t: float) -> int:
        return self.n_terms if self.n_terms is not None else default_image_terms(t)


def periodic_green(t: float, x, v, params: GreenParams = GreenParams()):
    """Image sum G(t, x, v) = sum_n Gamma(t, x + n, v), truncated to |n - n*| <= n_terms
    around the image n* nearest the Gaussian centre x = t v / 2."""
    if not t > 0:
        raise ValueError(f"periodic Green function requires t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    x, v = np.broadcast_arrays(x, v)
    K = params.terms(t)
    centre = np.round(0.5 * t * v - x)
    out = np.zeros(x.shape)
    for n in range(-K, K + 1):
        out = out + gamma(t, x + centre + n, v)
    return float(out) if out.ndim == 0 else out


def _kernel(t: float, vnodes: np.ndarray, n_x: int, params: GreenParams) -> np.ndarray:
    """K[j, k, m] = G(t, m dx - t eta_k, v_j - eta_k) on the grid."""
    xm = np.arange(n_x) / n_x
    V = vnodes[:, None] - vnodes[None, :]  # v_j - eta_k
    X = xm[None, None, :] - t * vnodes[None, :, None]
    return periodic_green(t, X, np.broadcast_to(V[:, :, None], (vnodes.size, vnodes.size, n_x)), params)


def oracle_solve(
    f_in: PhaseField,
    t: float,
    params: GreenParams = GreenParams(),
    method: str = "fft",
) -> PhaseField:
    """Propagate f-representation data by the periodic Green function.

    Both methods evaluate the same quadrature sum. ``direct`` forms it term by
    term; ``fft`` uses that for fixed (v_j, eta_k) the sum over xi is a
    circular convolution in x.
    """
    if not t >= MIN_TIME:
        raise ValueError(f"oracle time must be at least {MIN_TIME}, got {t}")
    if f_in.rep != "f":
        raise ValueError("oracle_solve expects an f-representation field")
    n_x = f_in.xgrid.n
    dx, dv = f_in.xgrid.spacing, f_in.vgrid.spacing
    K = _kernel(t, f_in.vgrid.nodes, n_x, params)  # (n_v, n_v, n_x)
    F = f_in.values  # (n_x, n_v)
    if method == "fft":
        Kh = np.fft.fft(K, axis=-1)
        Fh = np.fft.fft(F, axis=0)
        out = np.fft.ifft(np.einsum("jkm,mk->mj", Kh, Fh), axis=0).real
    elif method == "direct":
        idx = (np.arange(n_x)[:, None] - np.arange(n_x)[None, :]) % n_x  # i - l
        out = np.empty_like(F)
        for j in range(f_in.vgrid.n):
            # out[i, j] = sum_{l,k} K[j, k, i - l] F[l, k]
            out[:, j] = np.einsum("kil,lk->i", K[j][:, idx], F)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PhaseField(out * dx * dv, "f", f_in.xgrid, f_in.vgrid, f_in.time + t)


def _propagate_fourier(F: np.ndarray, s: float, xgrid, vgrid) -> np.ndarray:
    """Exact x-integration of the kernel mode by mode, quadrature in velocity.

    For x-Fourier mode k the propagator over time s is the velocity kernel
    (4 pi s)^(-1/2) exp(-(v - eta)^2 / (4 s)) times
    exp(-2 pi i k (s eta + s (v - eta) / 2) - (2 pi k)^2 s^3 / 12).
    """
    n_x = xgrid.n
    k = np.fft.fftfreq(n_x, d=1.0 / n_x)
    v = vgrid.nodes
    Fh = np.fft.fft(F, axis=0)  # (n_x, n_v) in (k, eta)
    Vd = v[:, None] - v[None, :]  # v_j - eta_l
    base = np.exp(-(Vd**2) / (4.0 * s)) / np.sqrt(4.0 * np.pi * s) * vgrid.spacing
    out = np.empty_like(Fh)
    for i, kk in enumerate(k):
        phase = np.exp(-2j * np.pi * kk * (s * v[None, :] + 0.5 * s * Vd) - (2.0 * np.pi * kk) ** 2 * s**3 / 12.0)
        out[i] = (base * phase) @ Fh[i]
    return np.fft.ifft(out, axis=0).real


def duhamel_source(
    source: Callable[[float], np.ndarray],
    t: float,
    template: PhaseField,
    n_quad: int = 24,
    sliver: float | None = None,
) -> PhaseField:
    """Solution at time t of the Kolmogorov equation with zero data and source s.

    ``source(tau)`` returns the (n_x, n_v) array of s(tau, x_i, v_j). The time
    integral uses Gauss-Legendre nodes on [0, t - sliver]; on the final sliver
    the kernel is narrower than the velocity grid and is replaced by the
    identity (midpoint rule), an O(sliver^2) approximation.
    """
    if not t > 0:
        raise ValueError(f"Duhamel time must be positive, got {t}")
    xgrid, vgrid = template.xgrid, template.vgrid
    if sliver is None:
        sliver = min(t, vgrid.spacing**2)
    sliver = min(max(sliver, 0.0), t)
    out = np.zeros((xgrid.n, vgrid.n))
    a = t - sliver
    if a > 0:
        nodes, weights = np.polynomial.legendre.leggauss(n_quad)
        taus = 0.5 * a * (nodes + 1.0)
        for tau, w in zip(taus, 0.5 * a * weights):
            out += w * _propagate_fourier(np.asarray(source(tau), dtype=float), t - tau, xgrid, vgrid)
    if sliver > 0:
        out += sliver * np.asarray(source(t - 0.5 * sliver), dtype=float)
    return PhaseField(out, "f", xgrid, vgrid, template.time + t)
