import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinetic_fp.fast_diffusion import (
    FdConfig,
    _face_coefficients,
    _solve_cyclic,
    fd_simulate,
    fd_step,
    flux_laplacian,
    write_density_csv,
    write_fd_csv,
)
from kinetic_fp.grid import DensityField, build_torus_grid


def _rho(values):
    values = np.asarray(values, dtype=float)
    return DensityField(values, build_torus_grid(values.size))


@given(st.integers(3, 40), st.integers(0, 1000))
def test_cyclic_solver_matches_dense_solve(n, seed):
    rng = np.random.default_rng(seed)
    lower, upper = -rng.random(n), -rng.random(n)
    diag = 1.0 + np.abs(lower) + np.abs(upper) + rng.random(n)
    rhs = rng.normal(size=n)
    A = np.diag(diag)
    for i in range(n):
        A[i, (i - 1) % n] += lower[i]
        A[i, (i + 1) % n] += upper[i]
    np.testing.assert_allclose(_solve_cyclic(lower, diag, upper, rhs), np.linalg.solve(A, rhs), atol=1e-12)


def test_flux_laplacian_on_a_fourier_mode():
    n = 32
    x = np.arange(n) / n
    dx = 1 / n
    out = flux_laplacian(np.sin(2 * np.pi * x), np.ones(n), dx)
    symbol = -4 / dx**2 * math.sin(math.pi * dx) ** 2
    np.testing.assert_allclose(out, symbol * np.sin(2 * np.pi * x), atol=1e-10)


def test_heat_step_matches_discrete_symbol():
    # beta = 0: one backward-Euler step divides mode k by 1 + dt (4 / dx^2) sin^2(pi k dx)
    n, dt = 64, 1e-3
    x = np.arange(n) / n
    out = fd_step(_rho(1 + 0.5 * np.cos(2 * np.pi * 3 * x)), dt, 0.0).values
    factor = 1 / (1 + dt * 4 * n**2 * math.sin(math.pi * 3 / n) ** 2)
    np.testing.assert_allclose(out, 1 + 0.5 * factor * np.cos(2 * np.pi * 3 * x), atol=1e-13)


def test_heat_equation_mode_decay():
    n = 256
    x = np.arange(n) / n
    tr = fd_simulate(FdConfig(beta=0.0, dt=1e-4, n_x=n, t_final=0.05), _rho(1 + 0.5 * np.cos(2 * np.pi * x)))
    amp = 2 * abs(np.fft.rfft(tr.snapshots[-1].values)[1]) / n
    assert amp == pytest.approx(0.5 * math.exp(-4 * math.pi**2 * 0.05), rel=0.02)


@given(st.sampled_from([0.0, 0.25, 0.5, 1.0]), st.floats(1e-5, 1e-1), st.integers(0, 1000))
def test_step_conserves_mass_and_positivity(beta, dt, seed):
    rng = np.random.default_rng(seed)
    rho = _rho(0.05 + rng.random(32))
    out = fd_step(rho, dt, beta)
    assert out.integral() == pytest.approx(rho.integral(), rel=1e-12)
    assert out.values.min() > 0
    assert out.values.min() >= rho.values.min() - 1e-12
    assert out.values.max() <= rho.values.max() + 1e-12


@given(st.sampled_from([0.0, 0.5]), st.integers(0, 1000))
def test_comparison_on_ordered_pairs(beta, seed):
    rng = np.random.default_rng(seed)
    lo = 0.5 + rng.random(32)
    hi = lo + rng.random(32) * (rng.random(32) < 0.5)  # touches on about half the nodes
    a, b = _rho(lo), _rho(hi)
    for _ in range(20):
        a, b = fd_step(a, 1e-4, beta), fd_step(b, 1e-4, beta)
        assert np.all(b.values - a.values >= -1e-13)


def test_nonlinear_solver_converges_in_time():
    n = 64
    x = np.arange(n) / n
    rho = _rho(1 + 0.5 * np.sin(2 * np.pi * x))
    run = lambda dt: fd_simulate(FdConfig(beta=0.5, dt=dt, n_x=n, t_final=0.02), rho).snapshots[-1].values
    ref, a, b = run(1e-5), run(4e-4), run(2e-4)
    ratio = np.abs(a - ref).max() / np.abs(b - ref).max()
    assert 1.7 < ratio < 2.3  # first order


def test_constant_state_is_stationary():
    out = fd_step(_rho(np.full(16, 2.0)), 0.1, 0.5)
    np.testing.assert_allclose(out.values, 2.0, rtol=1e-14)


def test_face_coefficients_and_floor_warning():
    rho = np.array([1.0, 4.0, 1.0, 4.0])
    face = _face_coefficients(rho, 0.5, 1e-8)
    # harmonic mean of 1 and 1/2
    np.testing.assert_allclose(face, 2 * 1 * 0.5 / 1.5)
    with pytest.warns(RuntimeWarning):
        _face_coefficients(np.array([1e-12, 1.0, 1.0]), 0.5, 1e-8)


def test_validation():
    with pytest.raises(ValueError):
        FdConfig(beta=2.0)
    with pytest.raises(ValueError):
        FdConfig(dt=0.0)
    with pytest.raises(ValueError):
        FdConfig(lag="newton")
    with pytest.raises(KeyError):
        FdConfig.from_dict({"beta": 0.0, "bogus": 1})
    with pytest.raises(ValueError):
        fd_step(_rho([1.0, 0.0, 1.0]), 0.1, 0.5)
    with pytest.raises(ValueError):
        fd_simulate(FdConfig(n_x=8), _rho(np.ones(4)))


def test_small_grids():
    for n in (1, 2):
        out = fd_step(_rho(np.linspace(1, 2, n)), 0.01, 0.5)
        assert out.integral() == pytest.approx(np.linspace(1, 2, n).mean())


def test_output_times_and_csv(tmp_path):
    n = 16
    x = np.arange(n) / n
    tr = fd_simulate(FdConfig(beta=0.5, dt=1e-3, n_x=n, t_final=0.02, snapshot_stride=0),
                     _rho(1 + 0.5 * np.sin(2 * np.pi * x)), output_times=[0.005])
    assert [round(t, 12) for t in tr.times] == [0.0, 0.005, 0.02]
    assert tr.at(0.0049).values is tr.snapshots[1].values
    write_fd_csv(tr, tmp_path / "fd.csv", "h1")
    lines = (tmp_path / "fd.csv").read_text().splitlines()
    assert lines[0] == "# config_hash=h1" and len(lines) == 2 + 21
    write_density_csv(tr.snapshots[-1], tmp_path / "rho.csv", 0.02, "h1")
    assert "config_hash=h1" in (tmp_path / "rho.csv").read_text().splitlines()[0]
