"""Kinetic (Galilean) geometry on R x T^d x R^d.

Points are triples z = (t, x, v). The group law is the Galilean composition

    (t0, x0, v0) o (t, x, v) = (t0 + t, x0 + x + t v0, v0 + v),

the dilations are S_r(t, x, v) = (r^2 t, r^3 x, r v), and the homogeneous
quasi-norm is max(|t|^(1/2), |x|^(1/3), |v|). Position components may be
flagged periodic, in which case they live on the unit circle [0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "KineticPoint",
    "Cylinder",
    "galilean_compose",
    "galilean_inverse",
    "kinetic_scale",
    "kinetic_norm",
    "torus_representative",
    "holder_seminorm_estimate",
]


def torus_representative(x: np.ndarray) -> np.ndarray:
    """Representative of x modulo 1 with minimal absolute value, in [-1/2, 1/2)."""
    return x - np.floor(np.asarray(x, dtype=float) + 0.5)


@dataclass(frozen=True)
class KineticPoint:
    """A point (t, x, v) of kinetic phase space-time.

    ``periodic`` flags position components that live on the unit torus. Those
    components are stored reduced to [0, 1).
    """

    t: float
    x: np.ndarray
    v: np.ndarray
    periodic: tuple = field(default=())

    def __post_init__(self) -> None:
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        v = np.atleast_1d(np.asarray(self.v, dtype=float)).copy()
        if x.ndim != 1 or v.ndim != 1 or x.shape != v.shape:
            raise ValueError(f"x and v must be vectors of equal length, got {x.shape} and {v.shape}")
        periodic = tuple(bool(p) for p in self.periodic) if self.periodic else (False,) * x.size
        if len(periodic) != x.size:
            raise ValueError("periodic flags must match the spatial dimension")
        mask = np.array(periodic, dtype=bool)
        if mask.any():
            x[mask] = np.mod(x[mask], 1.0)
            x[mask] = np.where(x[mask] >= 1.0, 0.0, x[mask])
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "periodic", periodic)

    @property
    def dim(self) -> int:
        return self.x.size

    @classmethod
    def origin(cls, dim: int = 1, periodic: Sequence[bool] = ()) -> "KineticPoint":
        return cls(0.0, np.zeros(dim), np.zeros(dim), tuple(periodic))

    def as_tuple(self) -> tuple:
        return (self.t, self.x.copy(), self.v.copy())

    def displacement_x(self) -> np.ndarray:
        """Position with periodic components replaced by their minimal representative."""
        x = self.x.copy()
        mask = np.array(self.periodic, dtype=bool)
        x[mask] = torus_representative(x[mask])
        return x

    def allclose(self, other: "KineticPoint", atol: float = 1e-12) -> bool:
        """Componentwise comparison; periodic positions are compared on the circle."""
        if self.dim != other.dim:
            return False
        dx = self.x - other.x
        mask = np.array(self.periodic, dtype=bool) | np.array(other.periodic, dtype=bool)
        dx[mask] = torus_representative(dx[mask])
        return (
            abs(self.t - other.t) <= atol
            and bool(np.all(np.abs(dx) <= atol))
            and bool(np.all(np.abs(self.v - other.v) <= atol))
        )


def _check_dims(a: KineticPoint, b: KineticPoint) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def _merge_periodic(a: KineticPoint, b: KineticPoint) -> tuple:
    return tuple(p or q for p, q in zip(a.periodic, b.periodic))


def galilean_compose(z0: KineticPoint, z: KineticPoint) -> KineticPoint:
    """Group law (t0 + t, x0 + x + t v0, v0 + v)."""
    _check_dims(z0, z)
    return KineticPoint(
        z0.t + z.t,
        z0.x + z.x + z.t * z0.v,
        z0.v + z.v,
        _merge_periodic(z0, z),
    )


def galilean_inverse(z: KineticPoint) -> KineticPoint:
    """Inverse element (-t, -x + t v, -v)."""
    return KineticPoint(-z.t, -z.x + z.t * z.v, -z.v, z.periodic)


def kinetic_scale(r: float, z: KineticPoint) -> KineticPoint:
    """Kinetic dilation S_r(t, x, v) = (r^2 t, r^3 x, r v)."""
    if not r > 0:
        raise ValueError(f"scaling factor must be positive, got {r}")
    if any(z.periodic):
        raise ValueError("kinetic scaling is not defined on periodic positions")
    return KineticPoint(r * r * z.t, r**3 * z.x, r * z.v, z.periodic)


def kinetic_norm(z: KineticPoint) -> float:
    """Quasi-norm max(|t|^(1/2), max_i |x_i|^(1/3), |v|).

    Periodic components use the minimal representative of x modulo 1.
    """
    x = z.displacement_x()
    xs = float(np.max(np.abs(x))) if x.size else 0.0
    return max(abs(z.t) ** 0.5, xs ** (1.0 / 3.0), float(np.linalg.norm(z.v)))


@dataclass(frozen=True)
class Cylinder:
    """Kinetic cylinder Q_r(z0) = {t0 - r^2 < t <= t0, |x - x0 - (t - t0) v0| < r^3, |v - v0| < r}."""

    center: KineticPoint
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"cylinder radius must be positive, got {self.radius}")

    def contains(self, z: KineticPoint) -> bool:
        """Membership via the three defining inequalities."""
        _check_dims(self.center, z)
        z0, r = self.center, self.radius
        dt = z.t - z0.t
        dx = z.x - z0.x - dt * z0.v
        mask = np.array(_merge_periodic(z0, z), dtype=bool)
        dx[mask] = torus_representative(dx[mask])
        return bool(
            (-r * r < dt <= 0.0)
            and np.max(np.abs(dx)) < r**3
            and np.linalg.norm(z.v - z0.v) < r
        )

    def contains_via_unit(self, z: KineticPoint) -> bool:
        """Membership via S_{1/r}(z0^{-1} o z) in Q_1(0)."""
        _check_dims(self.center, z)
        w = galilean_compose(galilean_inverse(self.center), z)
        flat = KineticPoint(w.t, w.displacement_x(), w.v)
        w1 = kinetic_scale(1.0 / self.radius, flat)
        unit = Cylinder(KineticPoint.origin(w1.dim), 1.0)
        return unit.contains(w1)


def holder_seminorm_estimate(
    samples: Iterable[tuple[KineticPoint, float]],
    alpha: float,
    max_displacement: float | None = None,
) -> float:
    """Sampled lower bound on the kinetic Hoelder seminorm of order ``alpha``.

    For every ordered pair of samples (z0, z1) the displacement z = z0^{-1} o z1
    is formed and |f(z1) - f(z0)| / ||z||^alpha is evaluated. The maximum is
    returned. If ``max_displacement`` is given, only pairs with ||z|| at most
    that value enter (local seminorm at that scale).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    pts = list(samples)
    if len(pts) < 2:
        raise ValueError("at least two samples are required")
    dim = pts[0][0].dim
    if any(p.dim != dim for p, _ in pts):
        raise ValueError("dimension mismatch among samples")
    t = np.array([p.t for p, _ in pts])
    x = np.array([p.x for p, _ in pts])
    v = np.array([p.v for p, _ in pts])
    f = np.array([val for _, val in pts], dtype=float)
    periodic = np.array(pts[0][0].periodic, dtype=bool)

    best = 0.0
    # One row block at a time keeps memory at O(n) per row.
    for i in range(len(pts)):
        dt = t - t[i]
        dx = x - x[i] - dt[:, None] * v[i]
        if periodic.any():
            dx[:, periodic] = torus_representative(dx[:, periodic])
        dv = v - v[i]
        norm = np.maximum.reduce(
            [np.abs(dt) ** 0.5, np.max(np.abs(dx), axis=1) ** (1.0 / 3.0), np.linalg.norm(dv, axis=1)]
        )
        ok = norm > 0
        if max_displacement is not None:
            ok &= norm <= max_displacement
        if ok.any():
            ratio = np.abs(f[ok] - f[i]) / norm[ok] ** alpha
            best = max(best, float(ratio.max()))
    return best
