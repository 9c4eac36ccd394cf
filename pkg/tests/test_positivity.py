import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from kinetic_fp.geometry import KineticPoint
from kinetic_fp.grid import PhaseField
from kinetic_fp.positivity import (
    BarrierParams,
    HarnackChainParams,
    barrier_ordering_check,
    barrier_subsolution_check,
    chain_feasibility_check,
    gaussian_tail_fit,
    harnack_chain,
    in_barrier_region,
    in_conclusion_region,
    initial_layer_check,
    lower_barrier_value,
    minorant_holds,
    upper_barrier_value,
    write_report,
)

from conftest import make_field


def test_barrier_constants_by_hand():
    p = BarrierParams(delta=0.5, tau=1.0, r=0.5, v0=0.0, c0=0.01)
    # <tau/r>^2 = 5, <v0>^2 = 1
    assert p.C0 == pytest.approx(0.5 * 5 / 0.08)
    assert p.horizon == pytest.approx(0.002)
    q = BarrierParams(delta=0.5, tau=0.5, r=0.5, v0=1.0, c0=0.1, T=0.01)
    assert q.C0 == pytest.approx(0.5 * 2 * 2 / 0.8)
    assert q.horizon == 0.01
    for bad in ({"delta": 0.0}, {"tau": 1.5}, {"r": -1.0}, {"c0": 0.0}):
        with pytest.raises(ValueError):
            BarrierParams(**bad)


def test_lower_barrier_values_by_hand():
    p = BarrierParams(delta=0.5, x0=0.5, v0=1.0, c0=0.1)
    assert lower_barrier_value(p, (0.0, 0.5, 1.0)) == pytest.approx(0.25)
    # along the characteristic through the centre only the time slope acts
    t = 0.01
    assert lower_barrier_value(p, KineticPoint(t, 0.5 + t * 1.0, 1.0)) == pytest.approx(-p.C0 * t + 0.25)
    # on the edge of the barrier region the spatial part vanishes
    assert lower_barrier_value(p, (0.0, 0.5 + p.r, 1.0)) == pytest.approx(0.0)


def test_regions_by_hand_and_periodic_wrap():
    p = BarrierParams(delta=0.5, r=0.5, tau=1.0, x0=0.9, v0=0.0, c0=0.01)
    assert in_conclusion_region(p, (0.001, 0.9, 0.0))
    assert in_conclusion_region(p, (0.001, 0.1, 0.0))  # distance 0.2 across the wrap
    assert not in_conclusion_region(p, (0.001, 0.5, 0.0))
    assert not in_conclusion_region(p, (0.01, 0.9, 0.0))  # past the horizon
    assert in_barrier_region(p, (0.5, 0.9, 0.4))
    assert not in_barrier_region(p, (0.5, 0.9, 0.6))


@given(st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.01, 2.0))
def test_lower_barrier_is_a_subsolution(s, a, b, coef):
    # continuous residual d_t B + v d_x B - coef (B_vv - v B_v) <= 0 in the barrier
    # region up to the horizon, for collision coefficients up to 2
    p = BarrierParams(delta=0.5, tau=1.0, r=0.5, x0=0.5, v0=0.0, c0=0.01)
    t = s * p.horizon
    dv = b * p.r / p.tau
    dx = a * p.r
    assume(dx**2 + p.tau**2 * dv**2 < p.r**2)
    v = p.v0 + dv
    x = p.x0 + dx + t * v
    hv, ht = 1e-4, 1e-7
    B = lambda tt, xx, vv: lower_barrier_value(p, (tt, xx, vv))
    Bt = (B(t + ht, x, v) - B(max(t - ht, 0), x, v)) / (ht + min(ht, t))
    Bx = (B(t, x + hv, v) - B(t, x - hv, v)) / (2 * hv)
    Bv = (B(t, x, v + hv) - B(t, x, v - hv)) / (2 * hv)
    Bvv = (B(t, x, v + hv) - 2 * B(t, x, v) + B(t, x, v - hv)) / hv**2
    assert Bt + v * Bx - coef * (Bvv - v * Bv) <= 1e-6


def _snap(values, t, template):
    return PhaseField(np.full(template.shape, values) if np.isscalar(values) else values, "h",
                      template.xgrid, template.vgrid, t)


def test_barrier_checks_on_synthetic_snapshots():
    p = BarrierParams(delta=0.5, r=0.5, tau=1.0, x0=0.5, v0=0.0, c0=0.01)
    tmpl = make_field(lambda x, v: 0 * v, n_x=32, n_v=65)
    good = [_snap(1.0, 0.0, tmpl), _snap(1.0, 0.001, tmpl)]
    rep = barrier_subsolution_check(p, good)
    assert rep.passed and rep.worst_margin == pytest.approx(1 - 0.5 / 8) and rep.n_snapshots == 2
    assert barrier_ordering_check(p, good).passed
    bad = [_snap(0.0, 0.001, tmpl)]
    assert not barrier_subsolution_check(p, bad).passed
    assert not barrier_ordering_check(p, bad).passed
    late = barrier_subsolution_check(p, [_snap(1.0, 0.5, tmpl)])
    assert not late.passed and late.n_points == 0 and late.notes


def test_upper_barrier_window_and_value():
    p = BarrierParams(delta=0.5, Lambda=2.0, epsilon=1.0, R=1.0, x1=0.5, v1=0.0)
    assert p.upper_window == pytest.approx(0.0625)
    assert upper_barrier_value(p, (0.0, 0.5, 0.0)) == 0.0
    assert upper_barrier_value(p, (0.01, 0.5, 0.0)) == pytest.approx(p.C1 * 0.01)
    assert upper_barrier_value(p, (0.0, 0.6, 0.2)) == pytest.approx(p.C2 * (0.01 + 0.04))
    with pytest.raises(ValueError):
        upper_barrier_value(p, (0.1, 0.5, 0.0))


def test_initial_layer_trivially_holds_without_evolution():
    p = BarrierParams(delta=0.5)
    h = make_field(lambda x, v: 1 + 0.2 * np.cos(2 * np.pi * x) * np.tanh(v), n_x=16, n_v=33)
    snaps = [_snap(h.values, t, h) for t in (0.0, 0.01, 0.05, 0.2)]
    rep = initial_layer_check(p, h, snaps)
    assert rep.passed and rep.times == [0.0, 0.01, 0.05]


def test_harnack_chain_by_hand():
    p = HarnackChainParams.from_recipe(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, tau1=0.5, r_max=1.0)
    assert (p.N, p.r, p.tau2) == (2, 1.0, 0.5)
    chain = harnack_chain(p)
    np.testing.assert_allclose([z.t for z in chain], [0.0, 0.5, 1.0])
    np.testing.assert_allclose([z.v[0] for z in chain], [0.0, 0.5, 1.0])
    np.testing.assert_allclose([z.x[0] for z in chain], [-0.75, -0.5, 0.0])
    rep = chain_feasibility_check(p)
    np.testing.assert_allclose(rep.closed_form_departure, [0.25, 0.75])
    assert rep.checks["departures_match_closed_form"] and rep.checks["endpoint_exact"]
    assert not rep.checks["departure_within_R_over_8"]  # (t - t1)|v - v0| = 1 > 1/8


@given(st.floats(-2, 2), st.floats(0.01, 3), st.floats(0.05, 1), st.floats(0.2, 0.95), st.floats(0.1, 0.5), st.floats(0.1, 1.0))
def test_recipe_chains_are_exact(v0, dv, t, tau1, r_max, frac):
    v = v0 + dv
    t1 = t - frac * t
    p = HarnackChainParams.from_recipe(t1, t, 0.3, v, 0.0, v0, tau1, r_max)
    rep = chain_feasibility_check(p)
    for key in ("time_matches", "velocity_matches", "v1_is_v0", "endpoint_exact",
                "links_follow_group_law", "departures_match_closed_form", "departure_bound"):
        assert rep.checks[key], key


def test_chain_parameter_validation():
    with pytest.raises(ValueError):
        HarnackChainParams(0, 1, 0, 1, 0, 0, r=1.0, tau1=1.5, tau2=0.1, N=1)
    with pytest.raises(ValueError):
        HarnackChainParams(0, 1, 0, 1, 0, 0, r=1.0, tau1=0.5, tau2=0.1, N=0)
    with pytest.raises(ValueError):
        HarnackChainParams.from_recipe(1.0, 1.0, 0, 1, 0, 0, 0.5, 0.5)
    with pytest.raises(ValueError):
        harnack_chain(HarnackChainParams(0, 1, 0, 0, 0, 0, r=1.0, tau1=0.5, tau2=0.0, N=1))


def test_tail_fit_recovers_a_gaussian():
    h = make_field(lambda x, v: 2.0 * np.exp(-0.3 * v**2) * (1 + 0.5 * np.cos(2 * np.pi * x) ** 2), n_x=8, n_v=65)
    eta1, eta2 = gaussian_tail_fit(h)
    assert eta1 == pytest.approx(2.0, rel=1e-10) and eta2 == pytest.approx(0.3, rel=1e-10)
    assert minorant_holds(h, eta1, eta2)
    assert not minorant_holds(h, eta1 * 1.01, eta2)
    e1, e2 = gaussian_tail_fit(h, x_policy=0)
    assert e1 == pytest.approx(3.0, rel=1e-10)


@given(st.integers(0, 10**6))
def test_tail_fit_is_a_hard_minorant(seed):
    rng = np.random.default_rng(seed)
    h = make_field(lambda x, v: np.exp(-rng.random() * v**2 + rng.normal(size=x.shape)), n_x=6, n_v=33)
    eta1, eta2 = gaussian_tail_fit(h)
    assert eta1 > 0 and 0 <= eta2 < math.inf
    assert minorant_holds(h, eta1 * (1 - 1e-12), eta2)


def test_tail_fit_rejects_vacuum():
    h = make_field(lambda x, v: (np.abs(v) < 1).astype(float), n_x=4, n_v=17)
    with pytest.raises(ValueError):
        gaussian_tail_fit(h)
    with pytest.raises(ValueError):
        gaussian_tail_fit(h.to_f())


def test_write_report_handles_numpy_and_inf(tmp_path):
    write_report({"b": np.float64(1.5), "a": [np.int64(2), np.bool_(True)], "c": math.inf}, tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data == {"a": [2, True], "b": 1.5, "c": "inf"}
