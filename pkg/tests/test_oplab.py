import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from critdecay import oplab
from critdecay.exceptions import PreconditionError
from critdecay.radial import make_log_grid


@pytest.fixture(scope="module")
def small_pair():
    return oplab.random_pair(48, seed=3, spread=30.0)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def test_pair_rejects_bad_input():
    with pytest.raises(PreconditionError):
        oplab.DiscreteOperatorPair.from_square(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))
    with pytest.raises(PreconditionError):
        oplab.DiscreteOperatorPair.from_square(np.diag([1.0, -1.0]), np.ones(2))
    with pytest.raises(PreconditionError):
        oplab.DiscreteOperatorPair.from_square(np.eye(2), np.array([1.0, 0.0]))
    with pytest.raises(PreconditionError):
        oplab.DiscreteOperatorPair.from_square(np.eye(2), np.ones(3))


def test_lambda_squares_back(small_pair):
    L = small_pair.Lambda
    assert_allclose(L @ L, small_pair.Lambda2, atol=1e-9 * np.abs(small_pair.Lambda2).max())


# ---------------------------------------------------------------------------
# Q_alpha
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("alpha, s", [(1.0, 0.01), (0.5, 0.1), (2.0, 1e-3)])
def test_q_alpha_matches_matrix_function_oracle(small_pair, alpha, s):
    # Oracle: (s Lambda^2)^(alpha/2) expm(-s Lambda^2) with scipy's matrix functions
    A = small_pair.Lambda2
    ref_op = np.real(sla.fractional_matrix_power(s * A, alpha / 2.0)) @ sla.expm(-s * A)
    g = np.random.default_rng(0).standard_normal(A.shape[0])
    assert_allclose(oplab.q_alpha_apply(small_pair, alpha, s, g), ref_op @ g,
                    atol=1e-9 * np.linalg.norm(g))


@given(m=st.floats(0.1, 100.0), alpha=st.floats(0.0, 3.0), s=st.floats(1e-4, 10.0))
def test_q_alpha_on_eigenvector(m, alpha, s):
    P = oplab.DiscreteOperatorPair.from_square(np.diag([m * m, 1.0]), np.ones(2))
    out = oplab.q_alpha_apply(P, alpha, s, np.array([1.0, 0.0]))
    assert_allclose(out[0], (math.sqrt(s) * m) ** alpha * math.exp(-s * m * m), rtol=1e-12)
    assert out[1] == 0.0


def test_q_zero_small_time_is_identity(small_pair):
    g = np.random.default_rng(1).standard_normal(small_pair.size)
    assert_allclose(oplab.q_alpha_apply(small_pair, 0.0, 1e-14, g), g, atol=1e-9)


def test_q_one_uniform_bound(small_pair):
    worst, sup = oplab.q_alpha_uniform_bound(small_pair, 1.0)
    assert_allclose(sup, (2 * math.e) ** -0.5, rtol=1e-15)
    assert worst <= sup * (1 + 1e-12)
    assert worst >= 0.999 * sup          # the maximizing times are in the grid


@given(alpha=st.floats(0.1, 6.0))
def test_q_alpha_sup_is_maximum(alpha):
    x = np.linspace(0, 6, 60001)
    assert oplab.q_alpha_sup(alpha) >= np.max(x ** alpha * np.exp(-x * x)) - 1e-14


def test_q_alpha_preconditions(small_pair):
    with pytest.raises(PreconditionError):
        oplab.q_alpha_apply(small_pair, -1.0, 1.0, np.ones(small_pair.size))
    with pytest.raises(PreconditionError):
        oplab.q_alpha_apply(small_pair, 1.0, 0.0, np.ones(small_pair.size))
    with pytest.raises(PreconditionError):
        oplab.q_alpha_apply(small_pair, 1.0, 1.0, np.ones(3))


# ---------------------------------------------------------------------------
# Integral identities
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("alpha, factor", [(1.0, 0.5), (2.0, 0.25), (0.5, 2 ** -0.5 * math.gamma(0.5))])
def test_square_function_identity(small_pair, alpha, factor):
    g = np.random.default_rng(2).standard_normal(small_pair.size)
    res = oplab.q_integral_identity(small_pair, alpha, g)
    assert_allclose(res.rhs, factor * g @ g, rtol=1e-14)
    assert res.relative_error <= 1e-8


@given(m=st.floats(1e-3, 1e3))
def test_square_function_independent_of_eigenvalue(m):
    P = oplab.DiscreteOperatorPair.from_square(np.diag([m * m]), np.ones(1))
    res = oplab.q_integral_identity(P, 1.0, np.ones(1))
    assert_allclose(res.lhs, 0.5, rtol=1e-9)


@pytest.mark.parametrize("alpha, gamma", [(2.0, 1.0), (1.0, 0.5)])
def test_reconstruction_identity_gives_identity(small_pair, alpha, gamma):
    g = np.random.default_rng(4).standard_normal(small_pair.size)
    res = oplab.q_reconstruction_identity(small_pair, alpha, gamma, g)
    assert_allclose(res.rhs, g, atol=1e-10)
    assert res.relative_error <= 1e-8


def test_reconstruction_inverse_square_against_dense_solve(small_pair):
    g = np.random.default_rng(5).standard_normal(small_pair.size)
    res = oplab.q_reconstruction_identity(small_pair, 0.0, 1.0, g)
    ref = np.linalg.solve(small_pair.Lambda2, g)
    assert_allclose(res.lhs, ref, rtol=1e-8, atol=1e-8 * np.linalg.norm(ref))


def test_identities_on_channel_pair():
    P = oplab.channel_pair(nu=1.5)
    g = np.exp(-np.log(P.omega) ** 2 / 8)
    assert oplab.q_integral_identity(P, 1.0, g).relative_error <= 1e-8
    assert oplab.q_reconstruction_identity(P, 1.0, 0.75, g).relative_error <= 1e-8


def test_identity_preconditions(small_pair):
    g = np.ones(small_pair.size)
    with pytest.raises(PreconditionError):
        oplab.q_integral_identity(small_pair, 0.0, g)
    with pytest.raises(PreconditionError):
        oplab.q_reconstruction_identity(small_pair, 1.0, 0.0, g)


# ---------------------------------------------------------------------------
# Commutator hypothesis
# ---------------------------------------------------------------------------

def test_commutator_with_identity_vanishes(small_pair):
    P = oplab.DiscreteOperatorPair.from_square(small_pair.Lambda2, np.ones(small_pair.size))
    c, rep = oplab.commutator_hypothesis_check(P)
    assert c < 1e-10 and rep.bracket_norm < 1e-10


def test_commutator_refinement_stable():
    cs, brackets = [], []
    for N in (512, 1024):
        g = make_log_grid(1e-3, 1e3, N, 3)
        c, rep = oplab.commutator_hypothesis_check(oplab.channel_pair(g, 0.5), grid=g)
        cs.append(c)
        brackets.append(rep.bracket_norm)
        assert rep.probe_max <= c * (1 + 1e-10)
        assert rep.stencil_residual < 1e-2
    assert abs(cs[1] - cs[0]) / cs[0] < 0.05
    assert abs(brackets[1] - brackets[0]) / brackets[0] < 0.05
    assert np.isfinite(brackets).all()


# ---------------------------------------------------------------------------
# C_1
# ---------------------------------------------------------------------------

def test_c1_analytic_values():
    c = oplab.c1_operator_check(1.5, make_log_grid(1e-3, 1e3, 128, 3))
    assert_allclose(c.analytic_norm, 1.8)
    big = oplab.c1_operator_check(50.0, make_log_grid(1e-3, 1e3, 128, 3))
    assert_allclose(big.analytic_norm, 1.0, atol=1e-3)


def test_c1_flags_small_orders():
    c = oplab.c1_operator_check(0.8, make_log_grid(1e-3, 1e3, 128, 3))
    assert c.unbounded_risk and math.isinf(c.analytic_norm) and math.isnan(c.relative_error)
    assert np.isfinite(c.numeric_norm)


def test_c1_rejects_nonfinite():
    with pytest.raises(PreconditionError):
        oplab.c1_operator_check(float("nan"))
