import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from awrascle import spectral as sp
from awrascle.diagnostics import (
    CSV_COLUMNS,
    RelativeEnergyReport,
    energy_balance_residual,
    energy_inequality_residual,
    gronwall_check,
    jensen_gap,
    record,
    relative_energy,
    relative_energy_direct,
    total_energy,
)
from awrascle.initial import make_initial
from awrascle.model import DomainError, Params
from awrascle.solver import State, run
from conftest import trig_field

P = 32


def _params(**kw):
    base = dict(gamma=2.0, grid_points=P, dt=1e-3, t_end=0.02, n_modes=5)
    base.update(kw)
    return Params(**base)


def _const(rho=1.0, w=(0.0, 0.0), points=P):
    shape = (points, points)
    return State(0.0, np.full(shape, rho), np.stack([np.full(shape, c) for c in w]), 2.0)


def _modes(rng, count=4, kmax=2):
    return [(rng.integers(-kmax, kmax + 1, size=2), rng.normal(), rng.uniform(0, 2 * np.pi)) for _ in range(count)]


def _eval(modes, X, Y, scale):
    val = sum(c * np.cos(2 * np.pi * (k[0] * X + k[1] * Y) + ph) for k, c, ph in modes)
    grad = [
        sum(-c * 2 * np.pi * k[a] * np.sin(2 * np.pi * (k[0] * X + k[1] * Y) + ph) for k, c, ph in modes)
        for a in range(2)
    ]
    return scale * val, [scale * g for g in grad]


def _random_pair(rng, points=P, amp=0.3):
    rho = trig_field(rng, points, kmax=2, mean=1.0, amplitude=amp)
    rb = trig_field(rng, points, kmax=2, mean=1.2, amplitude=amp)
    w = np.stack([trig_field(rng, points, kmax=2, amplitude=0.5) for _ in range(2)])
    wb = np.stack([trig_field(rng, points, kmax=2, amplitude=0.5) for _ in range(2)])
    return State(0.0, rho, w, 2.0), State(0.0, rb, wb, 2.0)


# ----------------------------------------------------------------------------
# record


def test_record_on_constants():
    for gamma in (1.0, 2.0, 3.5):
        p = _params(gamma=gamma)
        r = record(State(0.0, np.ones((P, P)), np.zeros((2, P, P)), gamma), p)
        assert r.mass == 1.0
        assert r.momentum_energy == 0.0
        assert r.internal_energy == pytest.approx(1 / (gamma + 1), rel=1e-15)
    r = record(_const(w=(1.0, 0.0)), _params())
    assert r.momentum_energy == 1.0
    assert r.lp_moment(4.0) == 1.0
    with pytest.raises(KeyError):
        r.lp_moment(3.0)
    assert r.header()[: len(CSV_COLUMNS)] == list(CSV_COLUMNS)
    assert r.header()[-2:] == ["lp_moment_p2", "lp_moment_p4"]
    assert len(r.row()) == len(r.header())


def test_record_matches_direct_quadrature(rng):
    x = np.arange(64) / 64
    X, Y = np.meshgrid(x, x, indexing="ij")
    rho, grho = _eval(_modes(rng), X, Y, 0.05)
    rho = rho + 1.0
    w0, gw0 = _eval(_modes(rng), X, Y, 0.2)
    w1, gw1 = _eval(_modes(rng), X, Y, 0.2)
    gamma = 2.0
    p = Params(gamma=gamma, grid_points=64, dt=1, t_end=1)
    r = record(State(0.0, rho, np.stack([w0, w1]), gamma), p)
    # chain rule with the analytic density gradient
    dq = np.sqrt(rho) * gamma * rho ** (gamma - 1)
    gq = [dq * g for g in grho]
    cells = rho.size
    assert r.mass == pytest.approx(rho.sum() / cells, rel=1e-12)
    assert r.momentum_energy == pytest.approx(np.sum(rho * (w0**2 + w1**2)) / cells, rel=1e-12)
    assert r.internal_energy == pytest.approx(np.sum(rho**3 / 3) / cells, rel=1e-12)
    assert r.q_dissipation == pytest.approx(np.sum(gq[0] ** 2 + gq[1] ** 2) / cells, rel=1e-12)
    assert r.cross_term == pytest.approx(np.sum(np.sqrt(rho) * (w0 * gq[0] + w1 * gq[1])) / cells, rel=1e-12, abs=1e-14)
    grad_w = sum(np.sum(g**2) for g in gw0 + gw1) / cells
    assert r.grad_w_norm == pytest.approx(grad_w, rel=1e-12)
    assert r.lp_moment(4.0) == pytest.approx(np.sum(rho * (w0**2 + w1**2) ** 2) / cells, rel=1e-12)
    assert (r.min_rho, r.max_rho) == (rho.min(), rho.max())


def test_record_flags_nonfinite():
    big = State(0.0, np.full((8, 8), 1e200), np.zeros((2, 8, 8)), 2.0)
    assert record(big, Params(gamma=2.0, grid_points=8, dt=1, t_end=1)).flagged


def test_total_energy():
    s = _const(rho=2.0, w=(1.0, 1.0))
    assert total_energy(s) == pytest.approx(0.5 * 2 * 2 + 8 / 3)


# ----------------------------------------------------------------------------
# energy identities


def _constant_records(count=5):
    p = _params(delta=0.1)
    s = _const(w=(0.3, 0.1))
    return [record(s.at(t=0.1 * k), p) for k in range(count)], p


def test_residuals_vanish_on_constant_state():
    recs, p = _constant_records()
    np.testing.assert_array_equal(energy_balance_residual(recs, p), 0.0)
    np.testing.assert_array_equal(energy_inequality_residual(recs, p), 0.0)
    np.testing.assert_array_equal(energy_inequality_residual(recs, p, rule="trapezoid"), 0.0)


def test_residual_input_checks():
    recs, p = _constant_records()
    with pytest.raises(ValueError, match="at least 2"):
        energy_balance_residual(recs[:1], p)
    with pytest.raises(ValueError, match="time-ordered"):
        energy_inequality_residual(recs[::-1], p)
    with pytest.raises(ValueError, match="rule"):
        energy_inequality_residual(recs, p, rule="simpson")


def _blob_records(dt, **kw):
    p = _params(dt=dt, t_end=0.02, **kw)
    s = make_initial("gaussian_blob", p, background=0.5, amplitude=0.5, width=0.12, w_amplitude=kw.pop("w", 0.3))
    return run(s, p, [record]).records[0], p


def test_inviscid_balance_residual_is_second_order():
    per = []
    for dt in (2e-3, 1e-3):
        recs, p = _blob_records(dt, epsilon=0.01)
        per.append(energy_balance_residual(recs, p)[-1])
    # the per-step decrement is the jump term integral rho |w^{n+1} - w^n|^2 = O(dt^2),
    # measured past the initial layer
    assert per[0] < 0 and per[1] < 0
    assert 3.5 <= per[0] / per[1] <= 4.8


def test_diffusion_run_satisfies_inequality_strictly():
    p = _params(dt=1e-3, t_end=0.02)
    s = make_initial("gaussian_blob", p, background=0.5, amplitude=0.5, width=0.12)
    recs = run(s, p, [record]).records[0]
    assert all(r.cross_term == 0 for r in recs)
    res = energy_inequality_residual(recs, p)
    assert np.all(res[1:] < 0)


def test_trapezoid_excess_is_exact():
    recs, p = _blob_records(1e-3, delta=0.05)
    right = energy_inequality_residual(recs, p)
    trap = energy_inequality_residual(recs, p, rule="trapezoid")
    qc = np.array([r.q_dissipation - r.cross_term for r in recs])
    np.testing.assert_allclose(trap - right, 0.5e-3 * (qc[0] - qc), atol=1e-15)


# ----------------------------------------------------------------------------
# relative energy


def test_relative_energy_of_identical_states():
    s, _ = _random_pair(np.random.default_rng(0))
    rep = relative_energy(s, s, _params())
    assert rep.rel_energy == 0.0
    assert rep.q_rel_dissipation == 0.0
    assert all(t == 0.0 for t in rep.remainder_terms)


def test_relative_energy_constant_offset():
    rep = relative_energy(_const(w=(1.0, 0.0)), _const(), _params())
    assert rep.rel_energy == 0.5
    assert rep.kinetic == 0.5 and rep.bregman == 0.0
    assert rep.remainder_terms[0] == 0.0
    assert math.isnan(rep.gronwall_ratio)
    assert rep.with_ratio(0.25).gronwall_ratio == 2.0


def test_reference_bound_is_enforced():
    s, ref = _random_pair(np.random.default_rng(1))
    low = np.array(ref.rho)
    low[3, 4] = 1e-12
    with pytest.raises(DomainError, match=r"\(3, 4\)"):
        relative_energy(s, ref.at(rho=low), _params())
    with pytest.raises(DomainError):
        relative_energy(s, ref, _params(), rho_bound=10.0)
    with pytest.raises(ValueError, match="incompatible"):
        relative_energy(s, _const(points=16), _params())


@given(st.integers(0, 2**32 - 1), st.floats(1.0, 3.0))
def test_relative_energy_nonnegative(seed, gamma):
    s, ref = _random_pair(np.random.default_rng(seed), points=16, amp=0.9)
    rep = relative_energy(s, ref, _params(gamma=gamma, grid_points=16))
    assert rep.rel_energy >= 0
    assert rep.q_rel_dissipation >= 0


def test_remainder_matches_direct_route(rng):
    for gamma in (1.0, 2.0, 2.5):
        p = _params(gamma=gamma, grid_points=64)
        s, ref = _random_pair(rng, points=64)
        rep = relative_energy(s, ref, p)
        direct = relative_energy_direct(s, ref, p)
        assert rep.remainder == pytest.approx(direct, rel=1e-10)


def test_t1_bound(rng):
    for _ in range(10):
        s, ref = _random_pair(rng)
        rep = relative_energy(s, ref, _params())
        G = np.stack([sp.grad(c) for c in ref.w])
        sup = np.sqrt(np.sum(G**2, axis=(0, 1))).max()
        assert abs(rep.remainder_terms[0]) <= sup * np.mean(s.rho * np.sum((s.w - ref.w) ** 2, axis=0)) + 1e-15


def test_sqrt_taylor_remainder_bound(rng):
    rho = rng.uniform(0, 4, size=10_000)
    rb = rng.uniform(0.2, 4, size=10_000)
    lhs = np.abs(np.sqrt(rho) - np.sqrt(rb) - (rho - rb) / (2 * np.sqrt(rb)))
    assert np.all(lhs <= (rho - rb) ** 2 / (2 * rb.min() ** 1.5) + 1e-15)


def test_swap_asymmetry():
    rng = np.random.default_rng(7)
    s, ref = _random_pair(rng)
    p = _params()
    same_rho = ref.at(rho=s.rho)
    # equal densities: only the kinetic term is present and it is symmetric
    assert relative_energy(s, same_rho, p).rel_energy == pytest.approx(relative_energy(same_rho, s, p).rel_energy, rel=1e-14)
    fwd = relative_energy(s, ref.at(w=s.w), p)
    back = relative_energy(ref.at(w=s.w), s, p)
    assert fwd.kinetic == back.kinetic == 0.0
    # the Bregman part of a cubic energy is not symmetric
    assert abs(fwd.bregman - back.bregman) > 1e-3 * fwd.bregman


# ----------------------------------------------------------------------------
# Gronwall


def _reports(t, e):
    return [RelativeEnergyReport(float(a), float(b), 0.0, (0.0,) * 7) for a, b in zip(t, e)]


def test_gronwall_exact_exponential():
    t = np.linspace(0, 1, 21)
    res = gronwall_check(_reports(t, 1e-3 * np.exp(-2.0 * t)), ref_norms=(1.0, 2.0))
    assert res.mode == "envelope"
    assert res.rate == pytest.approx(-2.0, rel=1e-12)
    assert res.min_rate == pytest.approx(-2.0, rel=1e-12)
    assert res.passed
    assert res.ref_norms == (1.0, 2.0)


def test_gronwall_detects_violation():
    t = np.linspace(0, 1, 21)
    e = np.exp(-2.0 * t)
    e[5] *= 10
    res = gronwall_check(_reports(t, e), margin=0.1)
    assert not res.passed
    assert res.min_rate > res.rate + 0.1


def test_gronwall_coincidence_mode():
    t = np.linspace(0, 1, 5)
    assert gronwall_check(_reports(t, np.zeros(5))).passed
    res = gronwall_check(_reports(t, [0, 0, 1e-9, 0, 0]))
    assert res.mode == "coincidence" and not res.passed
    with pytest.raises(ValueError):
        gronwall_check([])


# ----------------------------------------------------------------------------
# Jensen gap


def test_jensen_examples():
    f = np.random.default_rng(2).uniform(0, 3, size=(16, 16))
    gap, agg = jensen_gap([f, f, f], 1.7)
    assert np.abs(gap).max() <= 1e-14 and abs(agg) <= 1e-14
    gap, agg = jensen_gap([np.zeros((4, 4)), np.full((4, 4), 2.0)], 2.0)
    np.testing.assert_array_equal(gap, 1.0)
    assert agg == 1.0


def test_jensen_errors():
    with pytest.raises(ValueError, match="alpha"):
        jensen_gap([np.ones(4)], 1.0)
    with pytest.raises(ValueError, match="empty"):
        jensen_gap([], 2.0)
    with pytest.raises(ValueError, match="grid"):
        jensen_gap([np.ones(4), np.ones(5)], 2.0)
    with pytest.raises(DomainError):
        jensen_gap([np.ones(4), -np.ones(4)], 2.0)


@given(st.integers(0, 2**32 - 1), st.floats(1.01, 4.0), st.integers(1, 6))
def test_jensen_nonnegative(seed, alpha, members):
    rng = np.random.default_rng(seed)
    gap, agg = jensen_gap(rng.uniform(0, 5, size=(members, 8, 8)), alpha)
    assert np.all(gap >= 0) and agg >= 0


def test_jensen_gap_shrinks_under_refinement():
    # band-limited approximations of one smooth profile; consecutive levels agree better as they refine
    fine = 128
    x = np.arange(fine) / fine
    X, Y = np.meshgrid(x, x, indexing="ij")
    profile = 1.0 + 0.5 * np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / (2 * 0.1**2))
    levels = [sp.truncate(profile, n) for n in (2, 4, 8, 16)]
    aggs = [jensen_gap([a, b], 2.0)[1] for a, b in zip(levels, levels[1:])]
    assert all(b < a for a, b in zip(aggs, aggs[1:]))
