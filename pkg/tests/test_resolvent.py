import math

import numpy as np
import pytest
import scipy.integrate as si
import sympy as sp
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from critdecay import resolvent as rs
from critdecay.exceptions import AssumptionViolation, PreconditionError
from critdecay.potentials import build_potential
from critdecay.radial import RadialFunction, make_log_grid, make_uniform_grid


# ---------------------------------------------------------------------------
# Channel solve
# ---------------------------------------------------------------------------

def _manufactured_error(N: int, z: complex) -> float:
    # u = r e^{-r} on the l = 1 channel (nu = 3/2) of R^3: A_nu u = (4 - r) e^{-r}
    g = make_log_grid(1e-6, 60.0, N, 3)
    r = g.nodes
    f = RadialFunction(g, (4.0 - r + z * z * r) * np.exp(-r))
    u = rs.solve_helmholtz_channel(rs.ResolventQuery(z, 1.5, f))
    return float(np.max(np.abs(u.values - r * np.exp(-r))))


@pytest.mark.parametrize("z", [1.0, 0.3 + 2.0j])
def test_manufactured_solution_second_order(z):
    e1, e2 = _manufactured_error(4096, z), _manufactured_error(8192, z)
    assert e2 < 1e-6
    assert 3.0 < e1 / e2 < 5.0


def test_banded_solve_matches_dense_lu():
    g = make_log_grid(1e-3, 1e3, 512, 3)
    f = RadialFunction.from_callable(g, lambda r: np.exp(-(r - 1) ** 2))
    q = rs.ResolventQuery(0.5 + 1.5j, 2.5, f)
    ab, F = rs.helmholtz_channel_system(q)
    phi = np.linalg.solve(rs.banded_to_dense(ab), F)
    u = rs.solve_helmholtz_channel(q)
    assert_allclose(u.values, phi * g.nodes ** -g.lam, rtol=1e-10, atol=1e-14)


def _yukawa_solution(z: complex, r: float) -> complex:
    """(-Laplace + z^2)^-1 exp(-s^2) at radius r in R^3 by the free Green's function."""
    f = lambda s: math.exp(-s * s)

    def quad(fn, a, b):
        re = si.quad(lambda s: fn(s).real, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        im = si.quad(lambda s: fn(s).imag, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        return re + 1j * im

    inner = quad(lambda s: complex(np.sinh(z * s) * s * f(s) * np.exp(-z * r)), 0.0, r)
    outer = quad(lambda s: complex(np.exp(-z * s) * s * f(s) * np.sinh(z * r)), r, 12.0)
    return (inner + outer) / (z * r)


@pytest.mark.parametrize("z", [1.0, 0.2 + 1.0j])
def test_free_channel_matches_green_function(z):
    g = make_log_grid(1e-4, 1e2, 8192, 3)
    f = RadialFunction.from_callable(g, lambda r: np.exp(-r * r))
    u = rs.solve_helmholtz_channel(rs.ResolventQuery(z, 0.5, f))
    for r0 in (0.05, 0.5, 1.0, 3.0):
        i = int(np.argmin(np.abs(g.nodes - r0)))
        ref = _yukawa_solution(complex(z), float(g.nodes[i]))
        assert abs(u.values[i] - ref) <= 1e-5 * abs(ref)


@given(s=st.floats(0.5, 2.0), phase=st.floats(0.0, 1.4))
def test_ratio_dilation_invariance(s, phase):
    # (f(r/s), z/s) gives the same weighted ratio as (f, z): degree -2 homogeneity
    g = make_log_grid(1e-4, 1e4, 4096, 3)
    z = 2.0 * np.exp(1j * phase)
    V = build_potential({"kind": "inverse_square", "a": 0.5})
    a = rs.weighted_resolvent_ratio(V, z, [rs.FSample(1, RadialFunction.from_callable(
        g, lambda r: np.exp(-(r - 1) ** 2 / 0.5)))])
    b = rs.weighted_resolvent_ratio(V, z / s, [rs.FSample(1, RadialFunction.from_callable(
        g, lambda r: np.exp(-(r / s - 1) ** 2 / 0.5)))])
    assert_allclose(a, b, rtol=1e-6)


def test_zero_data_gives_zero():
    g = make_log_grid(1e-3, 1e3, 256, 3)
    u = rs.solve_helmholtz_channel(rs.ResolventQuery(1.0, 0.5, RadialFunction(g, np.zeros(g.size))))
    assert not np.any(u.values)


@pytest.mark.parametrize("z", [0.0, -1.0, 1j, complex("nan")])
def test_query_rejects_bad_spectral_parameter(z):
    g = make_log_grid(1e-3, 1e3, 256, 3)
    with pytest.raises(PreconditionError):
        rs.ResolventQuery(z, 0.5, RadialFunction(g, np.ones(g.size)))


def test_query_rejects_uniform_grid():
    g = make_uniform_grid(10.0, 64, 3)
    with pytest.raises(PreconditionError):
        rs.ResolventQuery(1.0, 0.5, RadialFunction(g, np.ones(g.size)))


# ---------------------------------------------------------------------------
# Channels and scans
# ---------------------------------------------------------------------------

def test_channel_orders_inverse_square():
    V = build_potential({"kind": "inverse_square", "a": 0.5})
    l = np.arange(4)
    assert_allclose(rs.channel_orders(V, 4), np.sqrt((0.5 + l) ** 2 + 0.5))


def test_channel_orders_radial_are_free():
    V = build_potential({"kind": "radial", "profile": {"family": "gaussian", "c": 1.0}})
    assert_allclose(rs.channel_orders(V, 3), [0.5, 1.5, 2.5])


def test_channel_orders_dipole_ascending_and_below_free():
    nus = rs.channel_orders(build_potential({"kind": "dipole", "p": 1.0}), 5)
    assert np.all(np.diff(nus) > 0)
    assert nus[0] < 0.5


def test_scan_small_free():
    g = make_log_grid(1e-3, 1e3, 2048, 3)
    samples = rs.default_f_samples(g, channels=2)
    rep = rs.resolvent_scan(build_potential({"kind": "zero"}),
                            z_set=[1.0, 0.01 + 1.0j, 10.0], f_samples=samples)
    assert rep.passed and rep.sup_ratio <= 2.0 * 1.05
    assert rep.truncation_sensitivity < 1e-3
    d = rep.to_dict()
    assert d["bound"] == pytest.approx(2.0, rel=1e-9)
    assert len(d["entries"]) == 3 * len(samples)
    assert rep.to_csv().splitlines()[0] == "re_z,im_z,nu,ratio"


def test_scan_rejects_inadmissible_potential():
    with pytest.raises(AssumptionViolation):
        rs.resolvent_scan(build_potential({"kind": "inverse_square", "a": -0.3}), z_set=[1.0])


def test_scan_rejects_left_half_plane():
    with pytest.raises(PreconditionError):
        rs.resolvent_scan(build_potential({"kind": "zero"}), z_set=[-1.0])


def test_default_z_set_approaches_imaginary_axis():
    zs = rs.default_z_set()
    assert len(zs) == 24
    assert min(z.real / abs(z) for z in zs) == pytest.approx(0.01)


WIDE_GRID = make_log_grid(1e-8, 1e8, 16384, 3)


@pytest.mark.parametrize("a, w", [(0.0, 2.0), (0.5, 3.0), (3.0, 2.0)])
def test_small_z_ratio_matches_mellin_symbol(a, w):
    # r f = r^(-3/2) exp(-(log r)^2 / (2 w^2)); as z -> 0 the ratio is
    # || G^(y) / (nu^2 + y^2) || / || G^ ||, a Gaussian in y of width 1/w.
    V = build_potential({"kind": "inverse_square", "a": a})
    nu = float(rs.channel_orders(V, 1)[0])
    r = WIDE_GRID.nodes
    f = RadialFunction(WIDE_GRID, r ** -2.5 * np.exp(-np.log(r) ** 2 / (2 * w * w)))
    num = si.quad(lambda y: math.exp(-w * w * y * y) / (nu * nu + y * y) ** 2, -np.inf, np.inf)[0]
    oracle = math.sqrt(num * w / math.sqrt(math.pi))
    ratio = rs.weighted_resolvent_ratio(V, 1e-7, [rs.FSample(0, f)])
    assert_allclose(ratio, oracle, rtol=1e-4)
    # the supremum 1 / nu^2 is approached, beyond 1 / (2 delta^2) = 1 / (2 nu^2)
    assert 1 / (2 * nu ** 2) < ratio < 1 / nu ** 2


# ---------------------------------------------------------------------------
# psi identity and the weighted Hardy inequality
# ---------------------------------------------------------------------------

def _lattice():
    sig = np.geomspace(1e-3, 10.0, 40)
    rr = np.geomspace(1e-3, 30.0, 25)
    return [(s, r) for s in sig for r in rr]


def test_psi_lhs_closed_form_sympy():
    s, r = sp.symbols("sigma r", positive=True)
    psi = sp.exp(-s * r) * sp.sqrt(1 + 2 * s * r)
    d1, d2 = sp.diff(psi, r), sp.diff(psi, r, 2)
    lhs = d1 ** 2 / 4 + psi * d2 / 2 - psi * d1 / (2 * r)
    exact = s ** 3 * r * (2 + 3 * s * r) * sp.exp(-2 * s * r) / (1 + 2 * s * r)
    assert sp.simplify(lhs - exact) == 0
    f = sp.lambdify((s, r), lhs)
    for sv, rv in [(0.3, 2.0), (1.0, 1.0), (4.0, 0.1)]:
        assert_allclose(rs.psi_identity_lhs(sv, rv), float(f(sv, rv)), rtol=1e-13)


def test_psi_exact_identity_on_lattice():
    pts = _lattice()
    assert len(pts) == 1000
    for s, r in pts:
        rhs = float(rs.psi_identity_exact(s, r))
        assert rs.psi_identity_residual(s, r, rhs="exact") <= 1e-12 * (1 + abs(rhs))


def test_psi_stated_rhs_is_three_quarters_derivative_squared():
    # Documented discrepancy: the asserted closed form equals (3/4) psi'^2.
    for s, r in _lattice()[::37]:
        _, d1, _ = rs._psi_derivatives(s, r)
        assert_allclose(rs.psi_identity_rhs(s, r), 0.75 * d1 ** 2, rtol=1e-12)
    assert rs.psi_identity_residual(1.0, 1.0, rhs="stated") > 1e-2


def test_psi_lhs_non_negative():
    for s, r in _lattice():
        assert rs.psi_identity_lhs(s, r) >= -1e-15


def test_psi_residual_preconditions():
    with pytest.raises(PreconditionError):
        rs.psi_identity_residual(-1.0, 1.0)
    with pytest.raises(PreconditionError):
        rs.psi_identity_residual(1.0, 0.0)
    with pytest.raises(PreconditionError):
        rs.psi_identity_residual(1.0, 1.0, rhs="other")


HARDY_GRID = make_log_grid(1e-10, 80.0, 4096, 3)


@given(sigma=st.floats(0.0, 20.0), b=st.floats(0.1, 5.0), k=st.integers(1, 3))
def test_weighted_hardy_inequality(sigma, b, k):
    f = RadialFunction.from_callable(HARDY_GRID, lambda r: r ** k * np.exp(-b * r))
    lhs, rhs = rs.weighted_hardy_check(rs.PsiSpec.multiplier(sigma), f)
    assert lhs <= rhs * (1 + 1e-9)


def test_weighted_hardy_preconditions():
    f = RadialFunction.from_callable(HARDY_GRID, lambda r: np.exp(-r))
    with pytest.raises(PreconditionError):
        rs.weighted_hardy_check(rs.PsiSpec.constant(), f)
    g = RadialFunction.from_callable(HARDY_GRID, lambda r: r * np.exp(-r))
    growing = rs.PsiSpec(lambda r: 1 + r, lambda r: np.ones_like(r))
    with pytest.raises(PreconditionError):
        rs.weighted_hardy_check(growing, g)
    negative = rs.PsiSpec(lambda r: -np.ones_like(r), lambda r: np.zeros_like(r))
    with pytest.raises(PreconditionError):
        rs.weighted_hardy_check(negative, g)
