"""Phase-space grids, the discrete Gaussian measure, and fields on T x R.

The velocity grid is uniform on [-V, V] with Gaussian weights renormalized to
unit sum, so that sums against the weights approximate integrals dmu. Fields
carry a representation tag:

    f = mu h        (physical density)
    g = mu^(1/2) h  (symmetrized unknown)
    h = f / mu      (the unknown in which the equation is solved)

where mu(v) = (2 pi)^(-1/2) exp(-v^2 / 2).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "VelocityGrid",
    "TorusGrid",
    "PhaseField",
    "DensityField",
    "gaussian",
    "build_velocity_grid",
    "build_torus_grid",
    "velocity_moment",
    "lp_norm_dm",
    "lp_norm_dx",
    "macro_micro_split",
    "total_mass",
    "save_binary",
    "load_binary",
    "save_csv",
    "load_csv",
]

REPRESENTATIONS = ("f", "g", "h")


def gaussian(v: np.ndarray) -> np.ndarray:
    """Standard Gaussian density mu(v) in one velocity dimension."""
    return np.exp(-0.5 * np.asarray(v, dtype=float) ** 2) / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class VelocityGrid:
    nodes: np.ndarray
    weights: np.ndarray
    cutoff: float
    spacing: float
    dim: int = 1

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def mu(self) -> np.ndarray:
        return gaussian(self.nodes)

    def same_as(self, other: "VelocityGrid") -> bool:
        return self.n == other.n and self.cutoff == other.cutoff


@dataclass(frozen=True)
class TorusGrid:
    n: int

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def same_as(self, other: "TorusGrid") -> bool:
        return self.n == other.n


def build_velocity_grid(V: float = 8.0, n_v: int = 129) -> VelocityGrid:
    """Uniform grid on [-V, V] with renormalized Gaussian weights."""
    if not V > 0:
        raise ValueError(f"velocity cutoff must be positive, got {V}")
    if int(n_v) != n_v or n_v < 2:
        raise ValueError(f"n_v must be an integer >= 2, got {n_v}")
    n_v = int(n_v)
    nodes = np.linspace(-V, V, n_v)
    nodes = 0.5 * (nodes - nodes[::-1])  # exact mirror symmetry
    w = gaussian(nodes)
    w = w / w.sum()
    for arr in (nodes, w):
        arr.setflags(write=False)
    return VelocityGrid(nodes=nodes, weights=w, cutoff=float(V), spacing=2.0 * V / (n_v - 1))


def build_torus_grid(n_x: int) -> TorusGrid:
    if int(n_x) != n_x or n_x < 1:
        raise ValueError(f"n_x must be a positive integer, got {n_x}")
    return TorusGrid(int(n_x))


@dataclass
class DensityField:
    """A function of x on the periodic grid."""

    values: np.ndarray
    xgrid: TorusGrid

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.xgrid.n,):
            raise ValueError(f"density shape {self.values.shape} does not match n_x={self.xgrid.n}")

    def integral(self) -> float:
        return float(np.sum(self.values) * self.xgrid.spacing)

    def mean(self) -> float:
        return float(np.mean(self.values))


@dataclass
class PhaseField:
    """A function of (x_i, v_j) stored as an (n_x, n_v) array."""

    values: np.ndarray
    rep: str
    xgrid: TorusGrid
    vgrid: VelocityGrid
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.rep not in REPRESENTATIONS:
            raise ValueError(f"unknown representation tag {self.rep!r}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.xgrid.n, self.vgrid.n):
            raise ValueError(
                f"field shape {self.values.shape} does not match grid ({self.xgrid.n}, {self.vgrid.n})"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def copy(self) -> "PhaseField":
        return PhaseField(self.values.copy(), self.rep, self.xgrid, self.vgrid, self.time)

    def _power(self) -> float:
        # exponent p with field = mu^p h
        return {"f": 1.0, "g": 0.5, "h": 0.0}[self.rep]

    def convert(self, rep: str) -> "PhaseField":
        if rep not in REPRESENTATIONS:
            raise ValueError(f"unknown representation tag {rep!r}")
        if rep == self.rep:
            return self.copy()
        p = {"f": 1.0, "g": 0.5, "h": 0.0}[rep] - self._power()
        # Work in log space so that the ratio is formed once per node.
        factor = np.exp(p * (-0.5 * self.vgrid.nodes**2 - 0.5 * np.log(2.0 * np.pi)))
        return PhaseField(self.values * factor[None, :], rep, self.xgrid, self.vgrid, self.time)

    def to_h(self) -> "PhaseField":
        return self.convert("h")

    def to_f(self) -> "PhaseField":
        return self.convert("f")

    def to_g(self) -> "PhaseField":
        return self.convert("g")

    def same_grid(self, other: "PhaseField | DensityField") -> bool:
        if isinstance(other, DensityField):
            return self.xgrid.same_as(other.xgrid)
        return self.xgrid.same_as(other.xgrid) and self.vgrid.same_as(other.vgrid)

    @classmethod
    def from_function(cls, func, xgrid: TorusGrid, vgrid: VelocityGrid, rep: str = "h") -> "PhaseField":
        X, Vv = np.meshgrid(xgrid.nodes, vgrid.nodes, indexing="ij")
        vals = np.broadcast_to(np.asarray(func(X, Vv), dtype=float), X.shape).copy()
        return cls(vals, rep, xgrid, vgrid)


def _require_h(h: PhaseField) -> None:
    if h.rep != "h":
        raise ValueError(f"expected an h-representation field, got {h.rep!r}")


def velocity_moment(h: PhaseField, order: int, x_index: int | None = None) -> np.ndarray | float:
    """Sum_j w_j v_j^order h(x_i, v_j), for every x_i or a single column."""
    _require_h(h)
    if order not in (0, 1, 2):
        raise ValueError(f"moment order must be 0, 1 or 2, got {order}")
    kernel = h.vgrid.weights * h.vgrid.nodes**order
    if x_index is not None:
        return float(h.values[x_index] @ kernel)
    return h.values @ kernel


def _difference(h1: PhaseField, h2) -> np.ndarray:
    if isinstance(h2, PhaseField):
        if not h1.same_grid(h2):
            raise ValueError("grid mismatch")
        if h2.rep != h1.rep:
            raise ValueError("representation mismatch")
        return h1.values - h2.values
    if isinstance(h2, DensityField):
        if not h1.same_grid(h2):
            raise ValueError("grid mismatch")
        return h1.values - h2.values[:, None]
    return h1.values - float(h2)


def lp_norm_dm(h1: PhaseField, h2=0.0, p: int = 2) -> float:
    """(Sum_i dx Sum_j w_j |h1 - h2|^p)^(1/p).

    ``h2`` may be a PhaseField, a DensityField (constant in v) or a scalar.
    """
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    diff = np.abs(_difference(h1, h2)) ** p
    return float((h1.xgrid.spacing * np.sum(diff @ h1.vgrid.weights)) ** (1.0 / p))


def lp_norm_dx(rho: DensityField, other=0.0, p: int = 2) -> float:
    """(Sum_i dx |rho - other|^p)^(1/p) on the torus."""
    vals = rho.values - (other.values if isinstance(other, DensityField) else float(other))
    return float((rho.xgrid.spacing * np.sum(np.abs(vals) ** p)) ** (1.0 / p))


def macro_micro_split(h: PhaseField) -> tuple[DensityField, PhaseField]:
    """Return (<h>, h - <h>)."""
    _require_h(h)
    mean = velocity_moment(h, 0)
    perp = PhaseField(h.values - mean[:, None], "h", h.xgrid, h.vgrid, h.time)
    return DensityField(mean, h.xgrid), perp


def total_mass(h: PhaseField) -> float:
    """M = Sum_i dx Sum_j w_j h (h-representation); equals the integral of f."""
    hh = h if h.rep == "h" else h.to_h()
    return float(h.xgrid.spacing * np.sum(hh.values @ hh.vgrid.weights))


# --------------------------------------------------------------------------
# Snapshot serialization

_MAGIC = b"KFPF"
_VERSION = 1
# magic, version, n_x, n_v, V, time, rep tag, config hash (64 hex chars)
_HEADER = struct.Struct("<4sHqqdd1s64s")


def save_binary(field: PhaseField, path: str | Path, config_hash: str = "") -> None:
    """Write a field as a fixed header followed by little-endian float64 values."""
    tag = config_hash.encode("ascii")[:64].ljust(64, b"\0")
    header = _HEADER.pack(
        _MAGIC, _VERSION, field.xgrid.n, field.vgrid.n, field.vgrid.cutoff, field.time,
        field.rep.encode("ascii"), tag,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def load_binary(path: str | Path) -> PhaseField:
    data = Path(path).read_bytes()
    magic, version, n_x, n_v, V, time, rep, _ = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a snapshot file")
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if vals.size != n_x * n_v:
        raise ValueError(f"{path}: truncated snapshot")
    return PhaseField(
        vals.reshape(n_x, n_v).astype(float), rep.decode("ascii"),
        build_torus_grid(n_x), build_velocity_grid(V, n_v), time,
    )


def read_binary_hash(path: str | Path) -> str:
    data = Path(path).read_bytes()[: _HEADER.size]
    return _HEADER.unpack(data)[-1].rstrip(b"\0").decode("ascii")


def save_csv(field: PhaseField, path: str | Path, config_hash: str = "") -> None:
    """Text snapshot: one header line, then one row of n_v values per x node."""
    with open(path, "w") as fh:
        fh.write(
            f"# n_x={field.xgrid.n} n_v={field.vgrid.n} V={field.vgrid.cutoff!r} "
            f"rep={field.rep} time={field.time!r} config_hash={config_hash}\n"
        )
        for row in field.values:
            fh.write(",".join(repr(float(a)) for a in row) + "\n")


def load_csv(path: str | Path) -> PhaseField:
    with open(path) as fh:
        header = fh.readline()
        meta = dict(item.split("=", 1) for item in header.lstrip("#").split())
        vals = np.loadtxt(fh, delimiter=",", ndmin=2)
    n_x, n_v = int(meta["n_x"]), int(meta["n_v"])
    return PhaseField(
        vals.reshape(n_x, n_v), meta["rep"], build_torus_grid(n_x),
        build_velocity_grid(float(meta["V"]), n_v), float(meta["time"]),
    )
