"""Matrix laboratory for the abstract operator identities behind the smoothing
estimates.

A :class:`DiscreteOperatorPair` holds a symmetric positive definite ``Lambda^2``
(its eigendecomposition gives ``Lambda`` and every spectral function of it)
and a positive diagonal ``Omega``.  On it we evaluate

* the heat family ``Q_alpha(s) = (s^(1/2) Lambda)^alpha exp(-s Lambda^2)``;
* the square-function identity
  ``int_0^inf ||Q_alpha(s) g||^2 ds/s = 2^-alpha Gamma(alpha) ||g||^2``;
* the reconstruction identity
  ``Gamma(gamma)^-1 int_0^inf s^(gamma - alpha/2) Q_alpha(s) g ds/s = Lambda^(alpha - 2 gamma) g``;
* the commutator hypothesis ``||[Omega, Lambda^2] f|| <= c ||Lambda f||`` and
  the size of ``[Lambda, Omega]``;
* the norm of ``C_1 = Omega A_nu^(-1/2) Omega^-1 A_nu^(1/2)`` on a channel,
  whose Mellin symbol has modulus at most ``nu^2 / (nu^2 - 1)``.

The ``s`` integrals are computed by the trapezoidal rule in ``t = log s``,
which converges geometrically for these analytic, doubly exponentially
decaying integrands; the step is halved until two levels agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.special import gamma as gamma_fn

from .exceptions import ConvergenceError, PreconditionError
from .radial import (RadialGrid, channel_eigendecomposition, channel_operator_tridiagonal,
                     fractional_power_matrix, make_c1_grid, make_log_grid)

__all__ = [
    "DiscreteOperatorPair",
    "QuadratureResult",
    "CommutatorReport",
    "C1Check",
    "random_pair",
    "channel_pair",
    "q_alpha_apply",
    "q_alpha_norm",
    "q_alpha_sup",
    "q_alpha_uniform_bound",
    "q_integral_identity",
    "q_reconstruction_identity",
    "commutator_hypothesis_check",
    "c1_operator_check",
]

TRUNCATION = 1e-16
QUAD_RTOL = 1e-13
MAX_HALVINGS = 8


@dataclass(frozen=True, eq=False)
class DiscreteOperatorPair:
    """``Lambda = (Lambda^2)^(1/2)`` through its eigendecomposition, and ``Omega``.

    Attributes
    ----------
    Lambda2 : ndarray, shape (N, N)
        Symmetric positive definite matrix ``Lambda^2``.
    omega : ndarray, shape (N,)
        Positive diagonal of ``Omega``.
    m : ndarray
        Eigenvalues of ``Lambda`` (ascending).
    U : ndarray
        Orthonormal eigenvectors.
    """

    Lambda2: np.ndarray
    omega: np.ndarray
    m: np.ndarray
    U: np.ndarray
    label: str = ""

    @classmethod
    def from_square(cls, Lambda2: np.ndarray, omega: np.ndarray, label: str = "",
                    eig: Optional[tuple[np.ndarray, np.ndarray]] = None) -> "DiscreteOperatorPair":
        """Build from ``Lambda^2`` (dense, symmetric) and the diagonal of ``Omega``."""
        A = np.asarray(Lambda2, dtype=float)
        om = np.asarray(omega, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or om.shape != (A.shape[0],):
            raise PreconditionError("Lambda^2 must be square and match Omega")
        scale = np.abs(A).max()
        if np.abs(A - A.T).max() > 1e-10 * scale:
            raise PreconditionError("Lambda^2 must be symmetric")
        if np.any(om <= 0):
            raise PreconditionError("Omega must be positive")
        if eig is None:
            try:
                w, U = np.linalg.eigh(A)
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(f"eigendecomposition failed: {exc}") from exc
        else:
            w, U = eig
        if np.any(w <= 0):
            raise PreconditionError("Lambda^2 must be positive definite")
        return cls(A, om, np.sqrt(w), U, label)

    @property
    def size(self) -> int:
        return self.m.size

    @property
    def Lambda(self) -> np.ndarray:
        return (self.U * self.m) @ self.U.T

    def spectral(self, fn) -> np.ndarray:
        """Dense ``fn(Lambda)``."""
        return (self.U * fn(self.m)) @ self.U.T

    def coefficients(self, g) -> np.ndarray:
        g = np.asarray(g)
        if g.shape[0] != self.size:
            raise PreconditionError("vector length does not match the operator size")
        return self.U.T @ g


def random_pair(N: int = 256, seed: int = 0, spread: float = 1e3) -> DiscreteOperatorPair:
    """Random positive definite ``Lambda^2`` with eigenvalues log-uniform in
    ``[1, spread^2]`` and a random positive diagonal ``Omega``."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((N, N)))
    ev = np.exp(rng.uniform(0.0, 2.0 * math.log(spread), N))
    A = (Q * ev) @ Q.T
    A = 0.5 * (A + A.T)
    om = np.exp(rng.uniform(-1.0, 1.0, N))
    return DiscreteOperatorPair.from_square(A, om, f"random(N={N}, seed={seed})")


def channel_pair(grid: Optional[RadialGrid] = None, nu: float = 0.5) -> DiscreteOperatorPair:
    """``Lambda^2 = A_nu`` (finite differences, unitary ``psi`` coordinates) and ``Omega = r``.

    For ``V = r^-2 q`` the channel of order ``nu`` is the free channel
    operator with that order, so this covers inverse-square and dipole
    channels as well.
    """
    g = make_log_grid(1e-3, 1e3, 512, 3) if grid is None else grid
    d, e = channel_operator_tridiagonal(g, nu)
    A = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    return DiscreteOperatorPair.from_square(A, g.nodes, f"channel(nu={nu}, N={g.size})",
                                            eig=channel_eigendecomposition(g, nu))


# ---------------------------------------------------------------------------
# The heat family
# ---------------------------------------------------------------------------

def _q_symbol(x: np.ndarray, alpha: float) -> np.ndarray:
    """``x^alpha exp(-x^2)`` with ``0^0 = 1``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(x == 0, 1.0 if alpha == 0 else 0.0, x ** alpha)
    return p * np.exp(-x * x)


def q_alpha_apply(pair: DiscreteOperatorPair, alpha: float, s: float, g) -> np.ndarray:
    """``Q_alpha(s) g = (s^(1/2) Lambda)^alpha exp(-s Lambda^2) g``.

    Examples
    --------
    >>> P = DiscreteOperatorPair.from_square(np.diag([4.0]), np.ones(1))
    >>> bool(q_alpha_apply(P, 1.0, 0.25, np.ones(1))[0] == np.exp(-1.0))
    True
    """
    if alpha < 0:
        raise PreconditionError("alpha must be >= 0")
    if not s > 0:
        raise PreconditionError("s must be positive")
    c = pair.coefficients(g)
    return pair.U @ (_q_symbol(math.sqrt(s) * pair.m, alpha) * c)


def q_alpha_norm(pair: DiscreteOperatorPair, alpha: float, s: float) -> float:
    """Operator norm ``||Q_alpha(s)||`` (largest |symbol| over the spectrum)."""
    if alpha < 0 or not s > 0:
        raise PreconditionError("need alpha >= 0 and s > 0")
    return float(np.max(np.abs(_q_symbol(math.sqrt(s) * pair.m, alpha))))


def q_alpha_sup(alpha: float) -> float:
    """``sup_{x >= 0} x^alpha e^(-x^2) = (alpha / 2)^(alpha/2) e^(-alpha/2)``."""
    if alpha < 0:
        raise PreconditionError("alpha must be >= 0")
    if alpha == 0:
        return 1.0
    return (alpha / 2.0) ** (alpha / 2.0) * math.exp(-alpha / 2.0)


def q_alpha_uniform_bound(pair: DiscreteOperatorPair, alpha: float,
                          s_grid: Optional[np.ndarray] = None) -> tuple[float, float]:
    """``(max_s ||Q_alpha(s)||, sup_x x^alpha e^(-x^2))`` over an ``s`` grid.

    The default grid is log-spaced over the spectrum and also contains the
    maximizing points ``s = alpha / (2 m_k^2)`` (or ``s -> 0`` for ``alpha = 0``).
    """
    m = pair.m
    if s_grid is None:
        lo, hi = math.log(1e-2 / m.max() ** 2), math.log(1e2 / m.min() ** 2)
        s_grid = np.exp(np.linspace(lo, hi, 401))
        extra = (np.array([1e-300]) if alpha == 0 else alpha / (2.0 * m ** 2))
        s_grid = np.concatenate([s_grid, extra])
    best = max(q_alpha_norm(pair, alpha, float(s)) for s in np.asarray(s_grid))
    return best, q_alpha_sup(alpha)


# ---------------------------------------------------------------------------
# s-integrals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureResult:
    lhs: object
    rhs: object
    relative_error: float
    nodes: int
    t_range: tuple[float, float]


def _t_window(m: np.ndarray, low_rate: float, high_rate: float) -> tuple[float, float]:
    """Range in ``t = log s`` outside which every spectral integrand is below
    ``TRUNCATION`` times its peak.

    Near ``s -> 0`` the integrands behave like ``(s m^2)^low_rate``; for large
    ``s`` they decay like ``exp(-high_rate s m^2)`` times a power.
    """
    if low_rate <= 0:
        raise PreconditionError("integrand does not decay as s -> 0")
    logT = -math.log(TRUNCATION)
    t_lo = -2.0 * math.log(m.max()) - logT / low_rate - 2.0
    # exp(-high_rate x) x^p < TRUNCATION for x beyond ~ (logT + p log x) / high_rate
    x_hi = (logT + 10.0) / high_rate
    for _ in range(20):
        x_hi = (logT + low_rate * math.log(max(x_hi, 1.0)) + 10.0) / high_rate
    t_hi = math.log(x_hi) - 2.0 * math.log(m.min())
    return t_lo, t_hi


def _trapezoid_log(kernel, t_lo: float, t_hi: float, h0: float = 0.25):
    """Trapezoid in ``t`` of ``kernel(exp(t))`` (an array per node), step-halving.

    Returns the integral and the final number of nodes.
    """
    n = max(int(math.ceil((t_hi - t_lo) / h0)), 8)
    prev = None
    for _ in range(MAX_HALVINGS):
        t = np.linspace(t_lo, t_hi, n + 1)
        h = t[1] - t[0]
        vals = kernel(np.exp(t))
        w = np.full(t.size, h)
        w[0] = w[-1] = 0.5 * h
        cur = np.tensordot(w, vals, axes=(0, 0))
        if prev is not None:
            scale = np.max(np.abs(cur))
            if scale == 0 or np.max(np.abs(cur - prev)) <= QUAD_RTOL * scale:
                return cur, t.size
        prev = cur
        n *= 2
    raise ConvergenceError("log-quadrature did not converge; eigenvalue spread too extreme")


def q_integral_identity(pair: DiscreteOperatorPair, alpha: float, g) -> QuadratureResult:
    """``int_0^inf ||Q_alpha(s) g||^2 ds/s`` against ``2^-alpha Gamma(alpha) ||g||^2``.

    ``||Q_alpha(s) g||^2`` is evaluated through the orthonormal eigenbasis as
    ``sum_k (s m_k^2)^alpha exp(-2 s m_k^2) |g_k|^2``.
    """
    if not alpha > 0:
        raise PreconditionError("alpha must be positive")
    c2 = np.abs(pair.coefficients(g)) ** 2
    m2 = pair.m ** 2

    def kern(s):
        x = np.outer(s, m2)
        return (x ** alpha * np.exp(-2.0 * x)) @ c2

    t_lo, t_hi = _t_window(pair.m, alpha, 2.0)
    lhs, nodes = _trapezoid_log(kern, t_lo, t_hi)
    lhs = float(lhs)
    rhs = float(2.0 ** -alpha * gamma_fn(alpha) * np.sum(np.abs(np.asarray(g)) ** 2))
    return QuadratureResult(lhs, rhs, abs(lhs - rhs) / abs(rhs) if rhs else abs(lhs),
                            nodes, (t_lo, t_hi))


def q_reconstruction_identity(pair: DiscreteOperatorPair, alpha: float, gamma: float,
                              g) -> QuadratureResult:
    """``Gamma(gamma)^-1 int s^(gamma - alpha/2) Q_alpha(s) g ds/s`` against ``Lambda^(alpha - 2 gamma) g``.

    The integral is formed as a vector (quadrature in ``s`` of the spectral
    multipliers, then synthesis); the right-hand side is the spectral power.
    """
    if not (alpha >= 0 and gamma > 0):
        raise PreconditionError("need alpha >= 0 and gamma > 0")
    c = pair.coefficients(g)
    m = pair.m
    m2 = m ** 2

    def kern(s):
        # s^(gamma - alpha/2) (s^(1/2) m)^alpha e^(-s m^2) = s^gamma m^alpha e^(-s m^2)
        x = np.outer(s, m2)
        return np.exp(gamma * np.log(s))[:, None] * m ** alpha * np.exp(-x)

    t_lo, t_hi = _t_window(m, gamma, 1.0)
    mult, nodes = _trapezoid_log(kern, t_lo, t_hi)
    lhs = pair.U @ (mult * c) / gamma_fn(gamma)
    rhs = pair.U @ (m ** (alpha - 2.0 * gamma) * c)
    nr = np.linalg.norm(rhs)
    return QuadratureResult(lhs, rhs, float(np.linalg.norm(lhs - rhs) / nr) if nr else 0.0,
                            nodes, (t_lo, t_hi))


# ---------------------------------------------------------------------------
# Commutators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommutatorReport:
    """Commutator diagnostics of a pair.

    ``c_estimate`` is ``||[Omega, Lambda^2] Lambda^-1||_2`` (the smallest
    admissible ``c`` on the grid); ``probe_max`` the largest ratio attained by
    the probe vectors; ``bracket_norm`` the spectral norm of ``[Lambda, Omega]``.
    """

    c_estimate: float
    probe_max: float
    bracket_norm: float
    probes: int
    size: int
    stencil_residual: float = math.nan

    def to_dict(self) -> dict:
        return {"c_estimate": self.c_estimate, "probe_max": self.probe_max,
                "bracket_norm": self.bracket_norm, "probes": self.probes,
                "size": self.size, "stencil_residual": self.stencil_residual}


def commutator_hypothesis_check(pair: DiscreteOperatorPair, probes: int = 32, seed: int = 0,
                                grid: Optional[RadialGrid] = None) -> tuple[float, CommutatorReport]:
    """Estimate the smallest ``c`` with ``||[Omega, Lambda^2] f|| <= c ||Lambda f||``.

    Parameters
    ----------
    pair : DiscreteOperatorPair
    probes : int
        Number of random probe vectors (their best ratio is reported as a
        lower bound next to the exact grid value).
    seed : int
        Seed of the probe generator.
    grid : RadialGrid, optional
        When the pair is a channel discretization on this log grid, the
        commutator is also compared with the stencil of ``-2 d_r + 1/r``
        (the action of ``[Lambda^2, Omega]`` in ``psi = r^(n/2) u``
        coordinates) on a smooth probe; the relative difference is recorded.
    """
    A, om = pair.Lambda2, pair.omega
    C = om[:, None] * A - A * om[None, :]
    Lm1 = pair.spectral(lambda x: 1.0 / x)
    c = float(np.linalg.norm(C @ Lm1, 2))
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(probes):
        f = rng.standard_normal(pair.size)
        best = max(best, float(np.linalg.norm(C @ f) / np.linalg.norm(pair.m * pair.coefficients(f))))
    bracket = float(np.linalg.norm(pair.Lambda * om[None, :] - om[:, None] * pair.Lambda, 2))
    stencil = math.nan
    if grid is not None:
        s = np.log(grid.nodes)
        mid = 0.5 * (s[0] + s[-1])
        wid = (s[-1] - s[0]) / 12.0
        psi = np.exp(-((s - mid) / wid) ** 2)
        dpsi = -2.0 * (s - mid) / wid ** 2 * psi / grid.nodes
        exact = -2.0 * dpsi + psi / grid.nodes
        got = -(C @ psi)          # [Lambda^2, Omega] = -[Omega, Lambda^2]
        inner = slice(1, -1)
        stencil = float(np.linalg.norm((got - exact)[inner] * grid.nodes[inner])
                        / np.linalg.norm(exact[inner] * grid.nodes[inner]))
    return c, CommutatorReport(c, best, bracket, probes, pair.size, stencil)


# ---------------------------------------------------------------------------
# C_1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class C1Check:
    nu: float
    analytic_norm: float
    numeric_norm: float
    relative_error: float
    unbounded_risk: bool
    grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"nu": self.nu, "analytic_norm": self.analytic_norm,
                "numeric_norm": self.numeric_norm, "relative_error": self.relative_error,
                "unbounded_risk": self.unbounded_risk, "grid": self.grid}


def c1_operator_check(nu: float, grid: Optional[RadialGrid] = None) -> C1Check:
    """Spectral norm of ``Omega A_nu^(-1/2) Omega^-1 A_nu^(1/2)`` versus ``nu^2 / (nu^2 - 1)``.

    The fractional powers are those of the finite-difference channel
    operator (the ``"operator"`` route of
    :func:`~critdecay.radial.fractional_power_apply`) on ``grid``, by default
    :func:`~critdecay.radial.make_c1_grid` with ``N = 1024``.  For
    ``nu <= 1`` the symbol is unbounded; the numeric norm is still reported
    with ``unbounded_risk = True``.

    Examples
    --------
    >>> c = c1_operator_check(2.0)
    >>> round(c.analytic_norm, 6), c.relative_error < 0.02
    (1.333333, True)
    """
    if not (math.isfinite(nu) and nu >= 0):
        raise PreconditionError("nu must be finite and non-negative")
    g = make_c1_grid(1024) if grid is None else grid
    r = g.nodes
    Amh = fractional_power_matrix(g, nu, -1.0)
    Ah = fractional_power_matrix(g, nu, 1.0)
    M = (r[:, None] * Amh / r[None, :]) @ Ah
    numeric = float(np.linalg.norm(M, 2))
    risk = nu <= 1.0
    analytic = math.inf if risk else nu ** 2 / (nu ** 2 - 1.0)
    rel = math.nan if risk else abs(numeric - analytic) / analytic
    return C1Check(float(nu), analytic, numeric, rel, risk, g.describe())
