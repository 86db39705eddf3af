"""Point-dipole potential ``p . x / |x|^3`` on ``R^3``: admissibility and the
critical moment.

With the dipole along the pole the angular factor is ``q = p cos(theta)``.
The potential satisfies the positivity assumption exactly when the ground
eigenvalue ``mu0(p)`` of ``-Laplace_sphere + p cos(theta)`` on ``S^2`` exceeds
``-1/4``.  The ground state is zonal, so ``mu0`` is the lowest eigenvalue of
the ``m = 0`` Legendre block, which is tridiagonal with off-diagonal
``p (l + 1) / sqrt((2l + 1)(2l + 3))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import sphere
from .exceptions import ConvergenceError, PreconditionError

__all__ = [
    "DipoleResult",
    "CriticalDipole",
    "legendre_dipole_block",
    "dipole_mu0",
    "mu0_curve",
    "critical_dipole_moment",
    "full_sector_mu0",
    "GOLDEN_P0",
]

#: Critical dipole moment from a dense ``eigvalsh`` of the lmax = 80 block
#: and Brent root-finding (``xtol = 1e-15``); recomputed in the test-suite.
GOLDEN_P0 = 1.2786297544000

CRITICAL_LEVEL = -0.25


def legendre_dipole_block(p: float, lmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal ``l(l+1)`` and off-diagonal of the ``m = 0`` block, degrees ``0..lmax``."""
    l = np.arange(lmax + 1, dtype=float)
    k = np.arange(lmax, dtype=float)
    return l * (l + 1), p * (k + 1) / np.sqrt((2 * k + 1) * (2 * k + 3))


def _mu0(p: float, lmax: int) -> float:
    d, e = legendre_dipole_block(p, lmax)
    # Bisection (stebz) depends on e only through e**2: exactly even in p.
    return float(sla.eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 0),
                                          lapack_driver="stebz")[0])


@dataclass(frozen=True)
class DipoleResult:
    p: float
    mu0: float
    admissible: bool
    lmax_used: int
    convergence: float

    def to_dict(self) -> dict:
        return {"p": self.p, "mu0": self.mu0, "admissible": self.admissible,
                "lmax_used": self.lmax_used, "convergence": self.convergence}


def dipole_mu0(p: float, lmax: int = 40, tol: float = 1e-8) -> DipoleResult:
    """Ground eigenvalue of ``-Laplace_sphere + p cos(theta)`` on ``S^2``.

    Parameters
    ----------
    p : float
        Dipole strength; negative values are accepted for symmetry checks
        (the spectrum is even in ``p``).
    lmax : int
        Truncation degree, at least 8.
    tol : float
        Convergence tolerance on ``|mu0(lmax) - mu0(lmax // 2)|``.

    Raises
    ------
    ConvergenceError
        If the half-size solve differs by more than ``tol``.

    Examples
    --------
    >>> dipole_mu0(0.0).mu0
    0.0
    """
    if lmax < 8:
        raise PreconditionError("lmax must be at least 8")
    if not np.isfinite(p):
        raise PreconditionError("p must be finite")
    mu = _mu0(p, lmax)
    gap = abs(mu - _mu0(p, lmax // 2))
    if gap > tol:
        raise ConvergenceError(f"mu0 not converged at lmax={lmax}: gap {gap:.3g}")
    return DipoleResult(float(p), mu, mu > CRITICAL_LEVEL, lmax, gap)


def mu0_curve(ps, lmax: int = 40) -> list[DipoleResult]:
    """``dipole_mu0`` over a sequence of strengths."""
    return [dipole_mu0(float(p), lmax) for p in ps]


@dataclass(frozen=True)
class CriticalDipole:
    p0: float
    bracket: tuple[float, float]
    tol: float
    lmax: int
    iterations: int
    convergence: float
    mu0_below: float
    mu0_above: float

    def to_dict(self) -> dict:
        return {"p0": self.p0, "bracket": list(self.bracket), "tol": self.tol,
                "lmax": self.lmax, "iterations": self.iterations,
                "convergence": self.convergence,
                "mu0_at_lower": self.mu0_below, "mu0_at_upper": self.mu0_above}


def critical_dipole_moment(tol: float = 1e-3, lmax: int = 40,
                           bracket: tuple[float, float] = (1.0, 2.0)) -> CriticalDipole:
    """Largest ``p`` with ``mu0(p) >= -1/4``, by bisection on ``bracket``.

    ``mu0`` is non-increasing in ``p >= 0`` so the admissible set is an
    interval ``[0, p0]``.  The returned ``p0`` is the midpoint of the final
    bracket of width ``<= tol``.

    Raises
    ------
    PreconditionError
        If ``tol < 1e-10``.
    ConvergenceError
        If the initial bracket does not straddle the critical level.
    """
    if tol < 1e-10:
        raise PreconditionError("tol must be at least 1e-10")
    lo, hi = map(float, bracket)
    f = lambda p: _mu0(p, lmax) - CRITICAL_LEVEL
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):
        raise ConvergenceError(f"bracket [{lo}, {hi}] does not straddle mu0 = -1/4")
    it = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm > 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        it += 1
    p0 = 0.5 * (lo + hi)
    conv = abs(_mu0(p0, lmax) - _mu0(p0, lmax // 2))
    return CriticalDipole(p0, (lo, hi), tol, lmax, it, conv,
                          flo + CRITICAL_LEVEL, fhi + CRITICAL_LEVEL)


def full_sector_mu0(p: float, lmax: int = 20) -> float:
    """Ground eigenvalue over *all* harmonics (every ``m``) via the general S^2 assembly.

    Used to confirm that the minimiser lies in the zonal sector.
    """
    q = sphere.AngularPotential.general(lambda x, phi, _p=float(p): _p * np.asarray(x),
                                        label=f"dipole-general({p})")
    op = sphere.assemble(q, 3, lmax)
    return float(np.linalg.eigvalsh(op.matrix)[0])
