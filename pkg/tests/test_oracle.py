import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from kinetic_fp.grid import gaussian
from kinetic_fp.oracle import (
    GreenParams,
    _propagate_fourier,
    default_image_terms,
    duhamel_source,
    gamma,
    green_tail_bound,
    oracle_solve,
    periodic_green,
)

from conftest import make_field


@given(st.floats(0.05, 2.0), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_gamma_solves_kolmogorov_equation(t, a, b):
    # points within a few spreads of the Gaussian centre
    v = b * math.sqrt(2 * t)
    x = 0.5 * t * v + a * t**1.5 / math.sqrt(6)
    # central differences of the closed form: d_t G + v d_x G - d_vv G = 0,
    # with steps matched to the kinetic scales t, t^(3/2), t^(1/2)
    ht, hx, hv = 1e-4 * t, 1e-4 * t**1.5, 1e-3 * t**0.5
    g = lambda tt, xx, vv: gamma(tt, xx, vv)
    dt = (g(t + ht, x, v) - g(t - ht, x, v)) / (2 * ht)
    dx = (g(t, x + hx, v) - g(t, x - hx, v)) / (2 * hx)
    dvv = (g(t, x, v + hv) - 2 * g(t, x, v) + g(t, x, v - hv)) / hv**2
    scale = max(abs(dt), abs(v * dx), abs(dvv))
    assert abs(dt + v * dx - dvv) <= 1e-4 * scale


def test_gamma_with_the_other_shear_sign_is_not_a_solution():
    # guards the sign of the t v / 2 shift
    t, x, v, h = 0.5, 0.1, 1.3, 1e-4
    g = lambda tt, xx, vv: math.sqrt(3) / (2 * math.pi * tt**2) * math.exp(-3 * (xx + tt * vv / 2) ** 2 / tt**3 - vv**2 / (4 * tt))
    dt = (g(t + h, x, v) - g(t - h, x, v)) / (2 * h)
    dx = (g(t, x + h, v) - g(t, x - h, v)) / (2 * h)
    dvv = (g(t, x, v + h) - 2 * g(t, x, v) + g(t, x, v - h)) / h**2
    assert abs(dt + v * dx - dvv) > 1e-2 * abs(dvv)


@pytest.mark.parametrize("t", [0.1, 0.25, 1.0, 3.0])
def test_gamma_unit_mass_by_adaptive_quadrature(t):
    # scipy dblquad on the whole plane, independent of the grid code
    sx, sv = t**1.5, math.sqrt(2 * t)
    val, _ = integrate.dblquad(lambda v, x: gamma(t, x, v), -12 * sx, 12 * sx, -12 * sv, 12 * sv, epsabs=1e-12)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_gamma_vanishes_for_nonpositive_time():
    assert gamma(0.0, 0.1, 0.2) == 0.0
    assert gamma(-1.0, 0.0, 0.0) == 0.0
    two = gamma(0.5, np.array([0.1, 0.2]), np.array([0.3, -0.4]), dim=2)
    one = gamma(0.5, 0.1, 0.3) * gamma(0.5, 0.2, -0.4)
    assert two == pytest.approx(one, rel=1e-13)


@given(st.floats(0.01, 4.0), st.floats(0.0, 1.0), st.floats(-6, 6))
def test_image_truncation_is_converged(t, x, v):
    default = periodic_green(t, x, v)
    wide = periodic_green(t, x, v, GreenParams(n_terms=default_image_terms(t) + 6))
    peak = math.sqrt(3) / (2 * math.pi * t**2) * math.exp(-v**2 / (4 * t))
    assert abs(default - wide) <= 1e-13 * max(peak, 1e-300) + 1e-300


def test_green_tail_bound_decreases():
    assert green_tail_bound(1.0, 3) < green_tail_bound(1.0, 2) < 1
    with pytest.raises(ValueError):
        GreenParams(n_terms=0)
    with pytest.raises(ValueError):
        periodic_green(0.0, 0.0, 0.0)


def test_fft_and_direct_evaluations_agree():
    f = make_field(lambda x, v: (1 + 0.4 * np.cos(2 * np.pi * x) + 0.2 * np.sin(4 * np.pi * x) * v) * gaussian(v),
                   n_x=12, n_v=33, rep="f")
    a = oracle_solve(f, 0.3, method="fft").values
    b = oracle_solve(f, 0.3, method="direct").values
    np.testing.assert_allclose(a, b, atol=1e-15 * np.abs(a).max(), rtol=0)


def test_oracle_matches_heat_kernel_for_x_independent_data():
    # x-independent data: f solves the heat equation f_t = f_vv; a Gaussian of
    # variance s2 becomes a Gaussian of variance s2 + 2t.
    s2, t = 0.5, 0.4
    f = make_field(lambda x, v: np.exp(-v**2 / (2 * s2)) / np.sqrt(2 * np.pi * s2) + 0 * x, n_x=32, n_v=257, rep="f")
    out = oracle_solve(f, t)
    v = f.vgrid.nodes
    exact = np.exp(-v**2 / (2 * (s2 + 2 * t))) / np.sqrt(2 * np.pi * (s2 + 2 * t))
    np.testing.assert_allclose(out.values, np.broadcast_to(exact, out.shape), atol=1e-10)
    assert out.time == pytest.approx(t)


def test_oracle_agrees_with_fourier_propagation():
    # image-sum quadrature in x versus exact per-mode integration in x
    f = make_field(lambda x, v: (1 + 0.5 * np.cos(2 * np.pi * x) + 0.3 * np.sin(2 * np.pi * x) * np.tanh(v)) * gaussian(v),
                   n_x=32, n_v=129, rep="f")
    t = 0.25
    a = oracle_solve(f, t).values
    b = _propagate_fourier(f.values, t, f.xgrid, f.vgrid)
    assert np.abs(a - b).max() <= 2e-3 * np.abs(a).max()


def test_oracle_conserves_mass_and_rejects_bad_input():
    f = make_field(lambda x, v: (1 + 0.5 * np.cos(2 * np.pi * x)) * gaussian(v), n_x=16, n_v=65, rep="f")
    out = oracle_solve(f, 0.5)
    mass = lambda g: g.values.sum() * g.xgrid.spacing * g.vgrid.spacing
    # the exact flow spreads the v-variance to 1 + 2t; the part beyond |v| = 8
    # (about erfc(4) = 1.5e-8) leaves the grid
    assert mass(out) == pytest.approx(mass(f) * (1 - math.erfc(4.0)), rel=1e-8)
    with pytest.raises(ValueError):
        oracle_solve(f, 0.0)
    with pytest.raises(ValueError):
        oracle_solve(f.to_h(), 0.5)
    with pytest.raises(ValueError):
        oracle_solve(f, 0.5, method="nope")


def _duhamel_error(n_v, s2=1.0, t=0.3):
    # s(v) = N(0, s2): f(t, v) = int_0^t N(0, s2 + 2 (t - tau))(v) dtau, by scipy quad
    tmpl = make_field(lambda x, v: 0 * x * v, n_x=4, n_v=n_v, rep="f")
    src = np.broadcast_to(np.exp(-tmpl.vgrid.nodes**2 / (2 * s2)) / np.sqrt(2 * np.pi * s2), tmpl.shape)
    out = duhamel_source(lambda tau: src, t, tmpl)
    worst = 0.0
    for v, val in zip(tmpl.vgrid.nodes, out.values[0]):
        if abs(v) > 4:
            continue
        ref, _ = integrate.quad(lambda s: np.exp(-v**2 / (2 * (s2 + 2 * s))) / np.sqrt(2 * np.pi * (s2 + 2 * s)), 0, t)
        worst = max(worst, abs(val / ref - 1))
    return worst


def test_duhamel_constant_source_against_quad():
    coarse, fine = _duhamel_error(129), _duhamel_error(257)
    assert fine <= 2e-4
    # the final-sliver approximation is O(dv^4)
    assert coarse / fine >= 12


def test_duhamel_rejects_nonpositive_time():
    tmpl = make_field(lambda x, v: 0 * x * v, n_x=4, n_v=17, rep="f")
    with pytest.raises(ValueError):
        duhamel_source(lambda tau: tmpl.values, 0.0, tmpl)
