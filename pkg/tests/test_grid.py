import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from kinetic_fp.grid import (
    DensityField,
    PhaseField,
    build_torus_grid,
    build_velocity_grid,
    gaussian,
    load_binary,
    load_csv,
    lp_norm_dm,
    lp_norm_dx,
    macro_micro_split,
    read_binary_hash,
    save_binary,
    save_csv,
    total_mass,
    velocity_moment,
)

from conftest import make_field


def test_velocity_grid_layout():
    vg = build_velocity_grid(8.0, 129)
    assert vg.n == 129 and vg.spacing == 0.125
    assert vg.nodes[0] == -8.0 and vg.nodes[-1] == 8.0
    np.testing.assert_array_equal(vg.nodes, -vg.nodes[::-1])
    assert vg.weights.sum() == pytest.approx(1.0, abs=1e-15)
    even = build_velocity_grid(8.0, 128)
    np.testing.assert_array_equal(even.nodes, -even.nodes[::-1])


def test_velocity_grid_rejects_bad_input():
    for bad in (1, 2.5):
        with pytest.raises(ValueError):
            build_velocity_grid(8.0, bad)
    with pytest.raises(ValueError):
        build_velocity_grid(0.0, 17)
    with pytest.raises(ValueError):
        build_torus_grid(0)


@pytest.mark.parametrize("order,exact", [(0, 1.0), (1, 0.0), (2, 1.0)])
def test_gaussian_moments_against_quadrature(order, exact):
    # independent check: scipy quad of v^k mu(v) on the real line
    ref, _ = integrate.quad(lambda v: v**order * gaussian(np.array(v)), -np.inf, np.inf)
    assert ref == pytest.approx(exact, abs=1e-12)
    h = make_field(lambda x, v: 1.0 + 0 * v, n_x=4, n_v=129)
    m = velocity_moment(h, order)
    np.testing.assert_allclose(m, exact, atol=1e-12)


@given(st.sampled_from(["f", "g", "h"]), st.sampled_from(["f", "g", "h"]))
def test_representation_round_trip(a, b):
    fld = make_field(lambda x, v: 1 + 0.5 * np.cos(2 * np.pi * x) * np.tanh(v), rep=a)
    back = fld.convert(b).convert(a)
    np.testing.assert_allclose(back.values, fld.values, rtol=1e-12)


def test_representation_factors_by_hand():
    h = make_field(lambda x, v: 1.0 + 0 * v, n_x=2, n_v=5, V=2.0)
    v = h.vgrid.nodes
    mu = np.exp(-v**2 / 2) / math.sqrt(2 * math.pi)
    np.testing.assert_allclose(h.to_f().values[0], mu, rtol=1e-14)
    np.testing.assert_allclose(h.to_g().values[0], np.sqrt(mu), rtol=1e-14)
    with pytest.raises(ValueError):
        h.convert("q")


def test_shape_validation():
    xg, vg = build_torus_grid(4), build_velocity_grid(8.0, 9)
    with pytest.raises(ValueError):
        PhaseField(np.zeros((4, 8)), "h", xg, vg)
    with pytest.raises(ValueError):
        DensityField(np.zeros(3), xg)


def test_norms_and_split():
    h = make_field(lambda x, v: 2 + np.cos(2 * np.pi * x) + 0.5 * v, n_x=32, n_v=129)
    mean, perp = macro_micro_split(h)
    np.testing.assert_allclose(mean.values, 2 + np.cos(2 * np.pi * h.xgrid.nodes), atol=1e-12)
    np.testing.assert_allclose(perp.values @ h.vgrid.weights, 0.0, atol=1e-13)
    assert total_mass(h) == pytest.approx(2.0, abs=1e-12)
    # ||h - 2||^2 = int cos^2 dx + 0.25 int v^2 dmu = 0.5 + 0.25
    assert lp_norm_dm(h, 2.0) ** 2 == pytest.approx(0.75, rel=1e-10)
    assert lp_norm_dm(h, mean) ** 2 == pytest.approx(0.25, rel=1e-10)
    assert lp_norm_dx(mean, 2.0) ** 2 == pytest.approx(0.5, rel=1e-12)
    assert lp_norm_dm(h, h) == 0.0
    with pytest.raises(ValueError):
        lp_norm_dm(h, 0.0, p=3)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_norm_triangle_inequality(a, b):
    h1 = make_field(lambda x, v: a * np.sin(2 * np.pi * x) + v)
    h2 = make_field(lambda x, v: b * np.cos(2 * np.pi * x) * v)
    assert lp_norm_dm(h1, -h2.values.mean()) >= 0
    s = PhaseField(h1.values + h2.values, "h", h1.xgrid, h1.vgrid)
    assert lp_norm_dm(s) <= lp_norm_dm(h1) + lp_norm_dm(h2) + 1e-12


def test_mass_of_f_matches_h():
    h = make_field(lambda x, v: 1 + 0.3 * np.sin(2 * np.pi * x) * v)
    assert total_mass(h.to_f()) == pytest.approx(total_mass(h), rel=1e-14)


def test_binary_and_csv_round_trip(tmp_path):
    h = make_field(lambda x, v: 1 + 0.3 * np.sin(2 * np.pi * x) * np.tanh(v))
    h.time = 0.125
    digest = "ab" * 32
    save_binary(h, tmp_path / "a.kfp", digest)
    back = load_binary(tmp_path / "a.kfp")
    np.testing.assert_array_equal(back.values, h.values)
    assert back.time == 0.125 and back.rep == "h" and back.same_grid(h)
    assert read_binary_hash(tmp_path / "a.kfp") == digest
    save_csv(h, tmp_path / "a.csv", digest)
    back = load_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(back.values, h.values)
    assert digest in (tmp_path / "a.csv").read_text().splitlines()[0]


def test_binary_rejects_garbage(tmp_path):
    (tmp_path / "bad.kfp").write_bytes(b"\0" * 200)
    with pytest.raises(ValueError):
        load_binary(tmp_path / "bad.kfp")
