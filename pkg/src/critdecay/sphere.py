"""Spectral solver for ``-Laplace_sphere + q(omega)`` on the unit sphere ``S^(n-1)``.

Zonal potentials (functions of ``x = omega_n = cos(theta)`` only) commute with
rotations fixing the pole, so the Galerkin matrix splits into sectors
``k = 0, 1, ..., lmax``.  In sector ``k`` the harmonics of degree ``l >= k``
restricted to the polar variable are

    (1 - x^2)^(k/2) C_(l-k)^(lam+k)(x),       lam = (n - 2) / 2,

orthonormal (after normalisation) for the weight ``(1 - x^2)^(lam-1/2)``
inherited from the surface measure, and each sector matrix appears with the
multiplicity of degree-``k`` harmonics on ``S^(n-2)``.  On ``S^2`` a fully
general ``q(theta, phi)`` is also supported through real spherical
harmonics and a Gauss-Legendre x trapezoid product rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.special as sps

from .exceptions import AssumptionViolation, PreconditionError

__all__ = [
    "AngularPotential",
    "SectorBlock",
    "SphereOperator",
    "ChannelSpectrum",
    "LowestEigenvalue",
    "sphere_area",
    "sector_multiplicity",
    "harmonic_dimension",
    "gegenbauer_orthonormal",
    "gegenbauer_recurrence",
    "zonal_linear_tridiagonal",
    "assemble",
    "lowest_eigenvalue",
    "channel_spectrum",
    "zonal_quadrature",
]

DEFAULT_LMAX = 40


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------

def sphere_area(n: int) -> float:
    """Surface area ``|S^(n-1)| = 2 pi^(n/2) / Gamma(n/2)``."""
    return float(2.0 * np.pi ** (n / 2.0) / sps.gamma(n / 2.0))


def harmonic_dimension(l: int, n: int) -> int:
    """Dimension of degree-``l`` spherical harmonics on ``S^(n-1)``."""
    if l < 0:
        return 0
    if n == 1:
        return 1 if l == 0 else 0
    return comb(l + n - 1, n - 1) - (comb(l + n - 3, n - 1) if l >= 2 else 0)


def sector_multiplicity(k: int, n: int) -> int:
    """Number of copies of the sector-``k`` block (harmonics of degree k on S^(n-2))."""
    return harmonic_dimension(k, n - 1)


def gegenbauer_recurrence(alpha: float, jmax: int) -> tuple[np.ndarray, float]:
    """Off-diagonals ``b_j`` and squared norm ``mu_0`` of orthonormal Gegenbauer polynomials.

    For the weight ``(1 - x^2)^(alpha - 1/2)`` the monic recurrence is
    ``p_(j+1) = x p_j - beta_j p_(j-1)`` with
    ``beta_j = j (j + 2 alpha - 1) / (4 (j + alpha)(j + alpha - 1))``; the
    orthonormal family satisfies ``x q_j = b_(j+1) q_(j+1) + b_j q_(j-1)`` with
    ``b_j = sqrt(beta_j)``.

    Returns
    -------
    b : ndarray
        ``b[j]`` for ``j = 1..jmax`` stored at index ``j - 1``.
    mu0 : float
        ``int_{-1}^{1} (1 - x^2)^(alpha - 1/2) dx``.
    """
    j = np.arange(1, jmax + 1, dtype=float)
    beta = j * (j + 2 * alpha - 1) / (4 * (j + alpha) * (j + alpha - 1))
    mu0 = np.sqrt(np.pi) * np.exp(sps.gammaln(alpha + 0.5) - sps.gammaln(alpha + 1.0))
    return np.sqrt(beta), float(mu0)


def gegenbauer_orthonormal(jmax: int, alpha: float, x: np.ndarray) -> np.ndarray:
    """Values ``q_j(x)`` (rows ``j = 0..jmax``) of orthonormal Gegenbauer polynomials."""
    x = np.asarray(x, dtype=float)
    b, mu0 = gegenbauer_recurrence(alpha, jmax)
    out = np.empty((jmax + 1,) + x.shape)
    out[0] = 1.0 / np.sqrt(mu0)
    if jmax >= 1:
        out[1] = x * out[0] / b[0]
    for j in range(1, jmax):
        out[j + 1] = (x * out[j] - b[j - 1] * out[j - 1]) / b[j]
    return out


def zonal_linear_tridiagonal(p: float, alpha: float, jmax: int) -> np.ndarray:
    """Off-diagonal of the Galerkin matrix of ``q = p x`` in one sector (closed form)."""
    b, _ = gegenbauer_recurrence(alpha, jmax)
    return p * b


def zonal_quadrature(n: int, npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``x`` and weights for ``int_{S^(n-1)} F(omega_n) d sigma``.

    Gauss-Gegenbauer for the weight ``(1 - x^2)^((n-3)/2)`` times
    ``|S^(n-2)|``.
    """
    lam = (n - 2) / 2.0
    x, w = sps.roots_gegenbauer(npts, lam) if lam != 0.5 else sps.roots_legendre(npts)
    return x, w * sphere_area(n - 1)


# ---------------------------------------------------------------------------
# Angular potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AngularPotential:
    """Angular factor ``q(omega)`` of a homogeneous potential ``r^-2 q(omega)``.

    Attributes
    ----------
    kind : {"constant", "zonal", "general"}
    value : float
        The constant for ``kind="constant"``.
    func : callable
        ``q(x)`` for zonal, ``q(x, phi)`` for general (``x = cos(theta)``, S^2 only).
    linear_coefficient : float or None
        Set when ``q = p x`` exactly, enabling the closed-form tridiagonal path.
    label : str
    """

    kind: str
    value: float = 0.0
    func: Optional[Callable] = field(default=None, compare=False)
    linear_coefficient: Optional[float] = None
    label: str = ""

    @classmethod
    def constant(cls, a: float) -> "AngularPotential":
        return cls("constant", float(a), None, None, f"constant({a})")

    @classmethod
    def zonal(cls, fn: Callable[[np.ndarray], np.ndarray], label: str = "zonal") -> "AngularPotential":
        return cls("zonal", 0.0, fn, None, label)

    @classmethod
    def linear(cls, p: float) -> "AngularPotential":
        """``q = p x``: the angular factor of a point dipole along the pole."""
        p = float(p)
        return cls("zonal", 0.0, lambda x, _p=p: _p * np.asarray(x), p, f"dipole({p})")

    @classmethod
    def general(cls, fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                label: str = "general") -> "AngularPotential":
        return cls("general", 0.0, fn, None, label)

    def evaluate(self, x: np.ndarray, phi: Optional[np.ndarray] = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full(x.shape, self.value)
        if self.kind == "zonal":
            return np.asarray(self.func(x), dtype=float) * np.ones_like(x)
        if phi is None:
            raise PreconditionError("general angular potential needs phi")
        return np.asarray(self.func(x, phi), dtype=float)


# ---------------------------------------------------------------------------
# Operator assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectorBlock:
    """One invariant block of the sphere operator.

    ``k`` is the sector index (``None`` for the full, non-zonal S^2 basis),
    ``degrees`` the harmonic degree of each basis function and
    ``multiplicity`` the number of identical copies of the block.
    """

    k: Optional[int]
    multiplicity: int
    matrix: np.ndarray
    degrees: np.ndarray


@dataclass(frozen=True)
class SphereOperator:
    """Galerkin matrix of ``-Laplace_sphere + q`` up to degree ``lmax``.

    ``matrix`` stores the block-diagonal reduced matrix with one copy of each
    sector block; multiplicities are kept alongside in ``blocks``.
    """

    n: int
    q: AngularPotential
    lmax: int
    blocks: tuple[SectorBlock, ...]

    @property
    def lam(self) -> float:
        return (self.n - 2) / 2.0

    @property
    def matrix(self) -> np.ndarray:
        return sla.block_diag(*[b.matrix for b in self.blocks])

    def expanded_matrix(self) -> np.ndarray:
        """Full Galerkin matrix with every block copy, ordered by harmonic degree.

        Only sensible for small ``lmax``: its size is the full dimension of
        harmonics up to degree ``lmax``.
        """
        mats, degs = [], []
        for b in self.blocks:
            for _ in range(b.multiplicity):
                mats.append(b.matrix)
                degs.append(b.degrees)
        full = sla.block_diag(*mats)
        order = np.argsort(np.concatenate(degs), kind="stable")
        return full[np.ix_(order, order)]

    def block(self, k: int) -> SectorBlock:
        for b in self.blocks:
            if b.k == k:
                return b
        raise KeyError(k)


def _sector_block(n: int, q: AngularPotential, lmax: int, k: int, nq: int) -> SectorBlock:
    lam = (n - 2) / 2.0
    alpha = lam + k
    jmax = lmax - k
    degrees = np.arange(k, lmax + 1)
    lap = degrees * (degrees + n - 2.0)
    if q.kind == "constant":
        mat = np.diag(lap + q.value)
    elif q.linear_coefficient is not None:
        off = zonal_linear_tridiagonal(q.linear_coefficient, alpha, jmax)
        mat = np.diag(lap.astype(float)) + np.diag(off, 1) + np.diag(off, -1)
    else:
        if alpha == 0.5:
            x, w = sps.roots_legendre(nq)
        else:
            x, w = sps.roots_gegenbauer(nq, alpha)
        basis = gegenbauer_orthonormal(jmax, alpha, x)
        qv = q.evaluate(x)
        if not np.all(np.isfinite(qv)):
            raise PreconditionError("angular potential is not finite at quadrature nodes")
        mat = (basis * (w * qv)) @ basis.T
        mat = 0.5 * (mat + mat.T) + np.diag(lap)
    return SectorBlock(k, sector_multiplicity(k, n), mat, degrees)


def _real_sh_table(lmax: int, theta: np.ndarray, phi: np.ndarray) -> tuple[np.ndarray, list]:
    rows, labels = [], []
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            y = sps.sph_harm_y(l, abs(m), theta, phi)
            if m > 0:
                rows.append(np.sqrt(2.0) * y.real)
            elif m < 0:
                rows.append(np.sqrt(2.0) * y.imag)
            else:
                rows.append(y.real)
            labels.append((l, m))
    return np.array(rows), labels


def _general_block_s2(q: AngularPotential, lmax: int) -> SectorBlock:
    nx = 2 * lmax + 2
    nphi = 4 * lmax + 4
    x, wx = sps.roots_legendre(nx)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    X, P = np.meshgrid(x, phi, indexing="ij")
    theta = np.arccos(X).ravel()
    wq = (wx[:, None] * np.full(nphi, 2 * np.pi / nphi)[None, :]).ravel()
    Y, labels = _real_sh_table(lmax, theta, P.ravel())
    qv = q.evaluate(X.ravel(), P.ravel())
    if not np.all(np.isfinite(qv)):
        raise PreconditionError("angular potential is not finite at quadrature nodes")
    mat = (Y * (wq * qv)) @ Y.T
    degrees = np.array([l for l, _ in labels])
    mat = 0.5 * (mat + mat.T) + np.diag(degrees * (degrees + 1.0))
    return SectorBlock(None, 1, mat, degrees)


def assemble(q: AngularPotential | float, n: int, lmax: int = DEFAULT_LMAX,
             sectors: Optional[Sequence[int]] = None) -> SphereOperator:
    """Galerkin matrix of ``-Laplace_sphere + q`` in spherical harmonics of degree <= lmax.

    Parameters
    ----------
    q : AngularPotential or float
        Angular potential; a float is read as a constant.
    n : int
        Dimension of the ambient space (sphere ``S^(n-1)``), ``n >= 3``.
    lmax : int
        Maximal harmonic degree, at least 8 (smaller values are allowed
        only with an explicit ``sectors`` selection for tests).
    sectors : sequence of int, optional
        Restrict a zonal assembly to these sectors (default: all).

    Returns
    -------
    SphereOperator

    Examples
    --------
    >>> op = assemble(0.0, 3, 2, sectors=None)
    >>> sorted(np.round(np.linalg.eigvalsh(op.matrix), 12).tolist())[:4]
    [0.0, 2.0, 2.0, 6.0]
    """
    if not isinstance(q, AngularPotential):
        q = AngularPotential.constant(float(q))
    if n < 3:
        raise PreconditionError("sphere operators are defined here for n >= 3")
    if lmax < 0:
        raise PreconditionError("lmax must be non-negative")
    if q.kind == "general":
        if n != 3:
            raise PreconditionError("general (non-zonal) angular potentials need n = 3")
        return SphereOperator(n, q, lmax, (_general_block_s2(q, lmax),))
    ks = range(lmax + 1) if sectors is None else sorted(set(int(k) for k in sectors))
    nq = 2 * lmax + 1
    blocks = tuple(_sector_block(n, q, lmax, k, nq) for k in ks if 0 <= k <= lmax)
    return SphereOperator(n, q, lmax, blocks)


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

def _block_min(b: SectorBlock) -> float:
    m = b.matrix
    if m.shape[0] == 1:
        return float(m[0, 0])
    off = np.diag(m, 1)
    if np.allclose(m, np.diag(np.diag(m)) + np.diag(off, 1) + np.diag(off, -1), atol=0, rtol=0):
        # Tridiagonal: bisection works with squared off-diagonals, which makes
        # the result exactly even in the sign of a linear potential.
        return float(sla.eigvalsh_tridiagonal(np.diag(m).copy(), off.copy(), select="i",
                                              select_range=(0, 0), lapack_driver="stebz")[0])
    return float(sla.eigh(m, eigvals_only=True, subset_by_index=[0, 0])[0])


@dataclass(frozen=True)
class LowestEigenvalue:
    value: float
    convergence_estimate: float
    converged: bool
    lmax: int


def lowest_eigenvalue(op: SphereOperator, tol: float = 1e-8) -> LowestEigenvalue:
    """Smallest eigenvalue with a convergence estimate from a half-size solve.

    The estimate is ``|mu(lmax) - mu(lmax // 2)|``; by the variational
    principle on nested subspaces the half-size value is an upper bound.
    """
    value = min(_block_min(b) for b in op.blocks)
    half = max(op.lmax // 2, 1)
    if op.q.kind == "constant" or op.lmax == 0:
        est = 0.0
    else:
        sectors = None if op.q.kind == "general" else [b.k for b in op.blocks if b.k <= half]
        op_half = assemble(op.q, op.n, half, sectors=sectors)
        est = abs(min(_block_min(b) for b in op_half.blocks) - value)
    return LowestEigenvalue(value, est, est <= tol, op.lmax)


@dataclass(frozen=True)
class ChannelSpectrum:
    """Sphere eigenvalues ``mu_k`` and Bessel orders ``nu_k = sqrt(mu_k + lam^2)``."""

    mu: np.ndarray
    nu: np.ndarray
    multiplicities: np.ndarray
    sectors: np.ndarray
    lam: float

    def __len__(self) -> int:
        return self.mu.size


def channel_spectrum(op: SphereOperator, max_channels: Optional[int] = None) -> ChannelSpectrum:
    """Channel decomposition of the sphere operator.

    Parameters
    ----------
    op : SphereOperator
    max_channels : int, optional
        Keep only the lowest distinct channels.

    Raises
    ------
    AssumptionViolation
        If ``mu_0 + lam^2 <= 0`` (some channel has no real Bessel order).
    """
    lam = op.lam
    mus, mults, secs = [], [], []
    for b in op.blocks:
        if op.q.kind == "constant":
            ev = np.diag(b.matrix).copy()
        else:
            ev = sla.eigh(b.matrix, eigvals_only=True)
        mus.append(ev)
        mults.append(np.full(ev.size, b.multiplicity))
        secs.append(np.full(ev.size, -1 if b.k is None else b.k))
    mu = np.concatenate(mus)
    order = np.argsort(mu, kind="stable")
    mu, mult, sec = mu[order], np.concatenate(mults)[order], np.concatenate(secs)[order]
    if mu[0] + lam ** 2 <= 0:
        raise AssumptionViolation(
            f"lowest sphere eigenvalue {mu[0]:.6g} gives mu + lam^2 = {mu[0] + lam**2:.3g} <= 0")
    if max_channels is not None:
        mu, mult, sec = mu[:max_channels], mult[:max_channels], sec[:max_channels]
    return ChannelSpectrum(mu, np.sqrt(mu + lam ** 2), mult, sec, lam)
