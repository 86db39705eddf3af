import math

import numpy as np
import pytest
import scipy.integrate as si
import scipy.special as sps
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from critdecay import evolution as ev
from critdecay.exceptions import AssumptionViolation, PreconditionError, ResolutionError
from critdecay.potentials import build_potential

ZERO = build_potential({"kind": "zero"})
ISQ = build_potential({"kind": "inverse_square", "a": 0.5})
DIPOLE = build_potential({"kind": "dipole", "p": 1.0})
GAUSS = lambda r: np.exp(-r ** 2 / 2)
Y0 = 1 / math.sqrt(4 * math.pi)


def gaussian_flow(t, r):
    """Independent oracle: exp(-r^2/2) under the free Schrödinger flow on R^3."""
    a = 1 + 2j * t
    return a ** -1.5 * np.exp(-r ** 2 / (2 * a))


def channel_flow(t, r, nu, lam=0.5):
    a = 1 + 2j * t
    return a ** -(nu + 1) * r ** (nu - lam) * np.exp(-r ** 2 / (2 * a))


@pytest.fixture(scope="module")
def free_trace():
    return ev.evolve_schrodinger(ZERO, GAUSS, T=10.0, dt=0.1)


@pytest.fixture(scope="module")
def free_wave():
    return ev.evolve_wave(ZERO, GAUSS, T=10.0, dt=0.1)


# ---------------------------------------------------------------------------
# Admissible exponents
# ---------------------------------------------------------------------------

def test_admissible_pairs():
    assert ev.admissible_pair("schrodinger", 3, 2).q == 6.0
    assert ev.admissible_pair("schrodinger", 3, math.inf).q == 2.0
    w = ev.admissible_pair("wave", 3, 4)
    assert (w.q, w.sigma_gap) == (4.0, 0.0)
    assert ev.admissible_pair("wave", 4, 4).q == 3.0


@given(p=st.floats(2.0, 1e6))
def test_schrodinger_scaling_relation(p):
    q = ev.admissible_pair("schrodinger", 3, p)
    assert_allclose(2 / q.p + 3 / q.q, 1.5, rtol=1e-12)


@pytest.mark.parametrize("args", [("schrodinger", 3, 1.5), ("wave", 3, 2.0),
                                  ("heat", 3, 4.0), ("schrodinger", 2, 4.0)])
def test_admissible_pair_rejects(args):
    with pytest.raises(PreconditionError):
        ev.admissible_pair(*args)


def test_query_rejects_non_admissible():
    with pytest.raises(PreconditionError):
        ev.StrichartzQuery(2, 4, "schrodinger")


# ---------------------------------------------------------------------------
# Schrödinger
# ---------------------------------------------------------------------------

def test_free_gaussian_matches_closed_form(free_trace):
    r = free_trace.grid.nodes
    for m in (0, 25, 100):
        u = free_trace.synthesize(m)[:, 0]
        assert np.max(np.abs(u - gaussian_flow(free_trace.times[m], r))) < 1e-6


def test_free_gaussian_helper_matches_oracle():
    r = np.linspace(0, 5, 11)
    assert_allclose(ev.free_gaussian_solution(0.7, r), gaussian_flow(0.7, r), rtol=1e-15)


def test_spectral_mass_conservation(free_trace):
    m = free_trace.mass
    assert np.max(np.abs(m - m[0])) / m[0] <= 1e-10
    assert_allclose(m[0], math.pi ** 0.75, rtol=1e-8)
    assert_allclose(free_trace.physical_mass(), m, rtol=1e-6)


def test_channel_gaussian_inverse_square_closed_form():
    data = ev.channel_gaussian(ISQ)
    nu = data.nus[0]
    assert_allclose(nu, math.sqrt(0.75))
    tr = ev.evolve_schrodinger(ISQ, data, T=2.0, dt=0.1)
    r = tr.grid.nodes
    for m in (10, 20):
        assert np.max(np.abs(tr.states[0, m] - channel_flow(tr.times[m], r, nu))) < 1e-6


def test_dipole_ground_channel_closed_form():
    data = ev.channel_gaussian(DIPOLE)
    tr = ev.evolve_schrodinger(DIPOLE, data, T=2.0, dt=0.1)
    nu = data.nus[0]
    assert nu < 0.5
    err = np.max(np.abs(tr.states[0, -1] - channel_flow(2.0, tr.grid.nodes, nu)))
    assert err < 1e-4


def test_crank_nicolson_against_closed_form_and_spectral():
    # L^2 differences; pointwise, the stiff modes at r < 1e-4 lag the flow
    # without carrying measurable mass.
    data = ev.channel_gaussian(ISQ)
    nu = data.nus[0]
    cn = ev.evolve_schrodinger(ISQ, data, T=1.0, dt=0.1, method="crank_nicolson")
    sp = ev.evolve_schrodinger(ISQ, data, T=1.0, dt=0.1)
    r, w = cn.grid.nodes, cn.grid.weights
    l2 = lambda v: math.sqrt(float(w @ np.abs(v) ** 2))
    assert l2(cn.states[0, -1] - channel_flow(1.0, r, nu)) <= 1e-3
    # compare on the (coarser) spectral grid, interpolating the fine CN solution
    xs, x = np.log(sp.grid.nodes), np.log(r)
    u = cn.states[0, -1]
    cn_on_sp = np.interp(xs, x, u.real) + 1j * np.interp(xs, x, u.imag)
    diff = math.sqrt(float(sp.grid.weights @ np.abs(cn_on_sp - sp.states[0, -1]) ** 2))
    assert diff <= 1e-3
    assert np.max(np.abs(cn.states[0, -1] - channel_flow(1.0, r, nu))[r > 1e-3]) <= 1e-4
    assert np.max(np.abs(cn.mass - cn.mass[0])) / cn.mass[0] <= 1e-6


def test_crank_nicolson_radial_profile():
    V = build_potential({"kind": "radial", "profile": {"family": "exp_inverse_square",
                                                        "c": 0.3, "scale": 1.0}})
    with pytest.raises(PreconditionError):
        ev.evolve_schrodinger(V, GAUSS, T=0.4, dt=0.1)
    tr = ev.evolve_schrodinger(V, GAUSS, T=0.4, dt=0.1, method="crank_nicolson")
    assert np.max(np.abs(tr.mass - tr.mass[0])) / tr.mass[0] <= 1e-6


def test_multichannel_orthogonality():
    # A radial Gaussian split over dipole channels is not band-limited in the
    # channel orders, so only the grid stepper applies.
    with pytest.raises(ResolutionError):
        ev.evolve_schrodinger(DIPOLE, GAUSS, T=0.2, dt=0.1)
    tr = ev.evolve_schrodinger(DIPOLE, GAUSS, T=0.2, dt=0.1, method="crank_nicolson")
    assert tr.states.shape[0] > 3
    # t = 0: the channel expansion reproduces the radial data at every angle,
    # up to spline resampling and the dropped channels
    u0 = tr.synthesize(0)
    r = tr.grid.nodes
    inner = r < 5
    assert_allclose(u0[inner], np.repeat(GAUSS(r[inner])[:, None], u0.shape[1], 1), atol=1e-8)
    for m in range(tr.times.size):
        U = tr.synthesize(m)
        total = tr.grid.weights @ (np.abs(U) ** 2) @ tr.data.angular_weights
        channels = np.sum(np.abs(tr.states[:, m]) ** 2 @ tr.grid.weights)
        assert abs(total - channels) <= 1e-12 * channels


def test_zero_data_stays_zero():
    tr = ev.evolve_schrodinger(ZERO, lambda r: 0 * r, T=1.0, dt=0.1)
    assert not np.any(tr.states)
    w = ev.evolve_wave(ZERO, lambda r: 0 * r, lambda r: 0 * r, T=1.0, dt=0.1)
    assert not np.any(w.states)
    assert ev.smoothing_norm(w).value == 0.0


# ---------------------------------------------------------------------------
# Smoothing and Strichartz norms
# ---------------------------------------------------------------------------

def test_kato_ratio_closed_form(free_trace):
    # ||u/r||^2 = 2 pi^(3/2) / (1 + 4 t^2), ||f||^2 = pi^(3/2): ratio^2 = arctan(2T)
    sm = ev.smoothing_norm(free_trace)
    assert_allclose(sm.ratio, math.sqrt(math.atan(20.0)), rtol=1e-5)
    assert sm.passed and sm.bound == pytest.approx(4 / math.sqrt(2 * math.pi))
    assert np.all(np.diff(sm.cumulative) >= 0)


@pytest.mark.parametrize("a", [-0.1, 0.5, 3.0])
def test_kato_ratio_channel_closed_form(a):
    # ||u/r||^2 = Gamma(nu) / (2 |1 + 2it|^2), ||f||^2 = Gamma(nu + 1) / 2:
    # ratio^2 = arctan(2T) / (2 nu)
    V = build_potential({"kind": "inverse_square", "a": a})
    data = ev.channel_gaussian(V)
    sm = ev.smoothing_norm(ev.evolve_schrodinger(V, data, T=10.0, dt=0.1))
    assert_allclose(sm.ratio ** 2, math.atan(20.0) / (2 * data.nus[0]), rtol=1e-5)


def test_hardy_trace_closed_form(free_trace):
    t = free_trace.times
    assert_allclose(free_trace.hardy_sq(), 2 * math.pi ** 1.5 / (1 + 4 * t ** 2), rtol=1e-5)


def test_strichartz_energy_pair_equals_data_norm(free_trace):
    res = ev.strichartz_norm(free_trace, ev.admissible_pair("schrodinger", 3, math.inf))
    assert_allclose(res.value, math.pi ** 0.75, rtol=1e-6)
    assert_allclose(res.ratio, 1.0, rtol=1e-6)


def test_strichartz_endpoint_closed_form(free_trace):
    # ||u(t)||_6^2 = (pi/3)^(1/2) / (1 + 4 t^2)
    res = ev.strichartz_norm(free_trace, ev.admissible_pair("schrodinger", 3, 2))
    assert_allclose(res.value ** 2, math.sqrt(math.pi / 3) * math.atan(20.0) / 2, rtol=1e-5)
    assert not res.sup_flag


def test_strichartz_equation_mismatch(free_trace):
    q = ev.admissible_pair("wave", 3, 4)
    with pytest.raises(PreconditionError):
        ev.strichartz_norm(free_trace, q)


@settings(max_examples=4)
@given(s=st.floats(0.5, 2.0))
def test_strichartz_scale_invariance(s):
    q = ev.admissible_pair("schrodinger", 3, 2)
    base = ev.strichartz_norm(ev.evolve_schrodinger(ISQ, ev.channel_gaussian(ISQ), T=4.0, dt=0.1), q)
    sc = ev.strichartz_norm(ev.evolve_schrodinger(ISQ, ev.channel_gaussian(ISQ, width=s),
                                                  T=4.0 * s * s, dt=0.1 * s * s), q)
    assert_allclose(sc.ratio, base.ratio, rtol=1e-6)


# ---------------------------------------------------------------------------
# Wave
# ---------------------------------------------------------------------------

def test_wave_matches_dalembert(free_wave):
    r = free_wave.grid.nodes
    for m in (30, 100):
        t = free_wave.times[m]
        ref = ((r + t) * GAUSS(r + t) + (r - t) * GAUSS(np.abs(r - t))) / (2 * r)
        assert np.max(np.abs(free_wave.synthesize(m)[:, 0] - ref)) < 1e-4
    assert_allclose(ev.free_wave_solution(3.0, r, GAUSS),
                    ((r + 3) * GAUSS(r + 3) + (r - 3) * GAUSS(np.abs(r - 3))) / (2 * r))


def test_wave_energy_conservation(free_wave):
    e = free_wave.energy
    assert np.max(np.abs(e - e[0])) / e[0] <= 1e-8
    # E = ||grad f||^2 = 3 pi^(3/2) / 2 for the Gaussian (angular normalization 4 pi)
    assert_allclose(e[0], 1.5 * math.pi ** 1.5, rtol=1e-7)


def test_wave_inverse_square_against_quadrature():
    data = ev.channel_gaussian(ISQ)
    nu = data.nus[0]
    tr = ev.evolve_wave(ISQ, data, T=4.0, dt=0.1)
    r = tr.grid.nodes
    for m in (20, 40):
        t = tr.times[m]
        for r0 in (0.3, 1.0, 3.5):
            i = int(np.argmin(np.abs(r - r0)))
            ri = float(r[i])
            val = si.quad(lambda p: p ** (nu + 1) * sps.jv(nu, ri * p) * math.cos(t * p)
                          * math.exp(-p * p / 2), 0, 12, limit=400, epsabs=1e-13)[0]
            assert abs(tr.states[0, m, i].real - ri ** -0.5 * val) < 1e-6


def test_leapfrog_energy_and_accuracy():
    tr = ev.evolve_wave(ZERO, GAUSS, T=4.0, dt=0.1, method="leapfrog")
    e = tr.energy
    assert np.max(np.abs(e - e[0])) / e[0] <= 1e-5
    r = tr.grid.nodes
    t = 4.0
    ref = ((r + t) * GAUSS(r + t) + (r - t) * GAUSS(np.abs(r - t))) / (2 * r)
    assert np.max(np.abs(tr.synthesize(tr.times.size - 1)[:, 0] - ref)) < 1e-3


def test_wave_spectral_rejects_radial_profile():
    V = build_potential({"kind": "radial", "profile": {"family": "gaussian", "c": 0.5}})
    with pytest.raises(PreconditionError):
        ev.evolve_wave(V, GAUSS, T=1.0, dt=0.1)


def test_wave_multiplier_needs_spectral_trace():
    tr = ev.evolve_wave(ZERO, GAUSS, T=0.2, dt=0.1, method="leapfrog")
    with pytest.raises(PreconditionError):
        tr.with_multiplier(0.5)


def test_wave_strichartz_finite(free_wave):
    res = ev.strichartz_norm(free_wave, ev.admissible_pair("wave", 3, 4))
    assert np.isfinite(res.value) and res.value > 0
    assert res.data_norm > 0


# ---------------------------------------------------------------------------
# Validation and output
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("T, dt", [(1.0, 0.3), (0.3, 0.1), (0.0, 0.1), (1.0, -0.1)])
def test_time_grid_validation(T, dt):
    with pytest.raises(PreconditionError):
        ev.evolve_schrodinger(ZERO, GAUSS, T=T, dt=dt)


def test_data_for_other_potential_rejected():
    with pytest.raises(PreconditionError):
        ev.evolve_schrodinger(DIPOLE, ev.channel_gaussian(ISQ), T=0.2, dt=0.1)


def test_inadmissible_potential_rejected():
    V = build_potential({"kind": "inverse_square", "a": -0.3})
    with pytest.raises((AssumptionViolation, PreconditionError)):
        ev.evolve_schrodinger(V, GAUSS, T=0.2, dt=0.1)


def test_unknown_method():
    with pytest.raises(PreconditionError):
        ev.evolve_schrodinger(ZERO, GAUSS, T=0.2, dt=0.1, method="euler")


def test_csv_output(free_trace):
    lines = free_trace.to_csv().splitlines()
    assert lines[0] == "t,mass,energy,hardy_sq"
    assert len(lines) == free_trace.times.size + 1
