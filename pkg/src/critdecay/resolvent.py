"""Weighted resolvent estimates for ``P = -Laplace + V`` on one channel at a time.

For ``mu = -z^2`` with ``Re z > 0`` the resolvent ``u = (P - mu)^-1 f`` solves

    -u'' - (n-1)/r u' + (nu^2 - lam^2)/r^2 u + V_rad(r) u + z^2 u = f

on the channel with Bessel order ``nu``.  In ``s = log r`` and
``phi = r^lam u`` this becomes the Sturm-Liouville problem

    -phi_ss + (nu^2 + r^2 z^2 + r^2 V_rad) phi = r^(2+lam) f,

which is discretized by second-order central differences on a uniform
``s`` mesh.  Outside the mesh the solution is continued by the decaying
homogeneous solution (``I_nu(z r)`` towards the origin, ``K_nu(z r)`` towards
infinity), which closes the system through one ghost node at each end.

The measured quantity is ``||Omega^-1 u|| / ||Omega f||`` with
``Omega = |x|``; the multiplier argument bounds it by ``1 / (2 delta^2)``.
The module also evaluates the two ingredients of that argument: the
pointwise identity satisfied by ``psi(r) = exp(-sigma r) sqrt(1 + 2 sigma r)``
and the weighted Hardy inequality
``int psi^2 |f|^2 r^-2 dr <= 4 int psi^2 |f'|^2 dr``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.special as sp

from . import sphere
from .exceptions import (AssumptionViolation, ConvergenceError, PreconditionError,
                         ResolutionError)
from .potentials import Potential, assumption_report
from .radial import (RadialFunction, RadialGrid, make_log_grid, radial_derivative)

__all__ = [
    "ResolventQuery",
    "FSample",
    "ResolventEntry",
    "ResolventReport",
    "PsiSpec",
    "WeightedHardy",
    "helmholtz_channel_system",
    "banded_to_dense",
    "solve_helmholtz_channel",
    "channel_orders",
    "default_z_set",
    "default_f_samples",
    "default_resolvent_grid",
    "weighted_resolvent_ratio",
    "resolvent_scan",
    "psi_identity_lhs",
    "psi_identity_rhs",
    "psi_identity_exact",
    "psi_identity_residual",
    "weighted_hardy_check",
]

RESIDUAL_TOL = 1e-8
DEFAULT_TOL = 0.05
#: Relative slack when testing that the exterior continuation decays.
BOUNDARY_SLACK = 1e-12


# ---------------------------------------------------------------------------
# Queries and the channel solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResolventQuery:
    """Spectral parameter ``z`` (``mu = -z^2``), Bessel order ``nu`` and data ``f``."""

    z: complex
    nu: float
    rhs: RadialFunction

    def __post_init__(self):
        z = complex(self.z)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise PreconditionError("z must be finite")
        if z.real <= 0:
            raise PreconditionError(f"Re z must be positive, got z = {z}")
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise PreconditionError(f"channel order must be real and >= 0, got {self.nu}")
        if self.rhs.grid.kind != "log":
            raise PreconditionError("the Helmholtz solver needs a logarithmic grid")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "nu", float(self.nu))


def _inner_ratio(nu: float, z: complex, r_ghost: float, r0: float) -> complex:
    """``I_nu(z r_ghost) / I_nu(z r0)`` using exponentially scaled Bessel functions."""
    a, b = z * r_ghost, z * r0
    return sp.ive(nu, a) / sp.ive(nu, b) * np.exp(z.real * (r_ghost - r0))


def _outer_ratio(nu: float, z: complex, r_ghost: float, r0: float) -> complex:
    """``K_nu(z r_ghost) / K_nu(z r0)`` using exponentially scaled Bessel functions."""
    a, b = z * r_ghost, z * r0
    return sp.kve(nu, a) / sp.kve(nu, b) * np.exp(-z * (r_ghost - r0))


def _end_order(nu: float, r: float, V_radial: Optional[Callable]) -> float:
    if V_radial is None:
        return nu
    eff = nu * nu + r * r * float(V_radial(np.array([r]))[0])
    if eff < 0:
        raise AssumptionViolation("effective channel order is imaginary at a grid end")
    return math.sqrt(eff)


def helmholtz_channel_system(query: ResolventQuery,
                             V_radial: Optional[Callable[[np.ndarray], np.ndarray]] = None
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Banded matrix ``(1, 1)`` layout and right-hand side of the ``phi`` system.

    Returns
    -------
    ab : ndarray, shape (3, N)
        Matrix in :func:`scipy.linalg.solve_banded` layout.
    F : ndarray, shape (N,)
        ``r^(2+lam) f``.
    """
    g = query.rhs.grid
    r = g.nodes
    h = g.log_step
    z, nu = query.z, query.nu
    lam = g.lam
    q = nu * nu + (z * z) * r * r
    if V_radial is not None:
        q = q + r * r * np.asarray(V_radial(r), dtype=float)
    N = r.size
    ab = np.zeros((3, N), dtype=complex)
    off = -1.0 / h ** 2
    ab[0, 1:] = off
    ab[2, :-1] = off
    ab[1] = 2.0 / h ** 2 + q
    rho_in = _inner_ratio(_end_order(nu, r[0], V_radial), z, r[0] * math.exp(-h), r[0])
    rho_out = _outer_ratio(_end_order(nu, r[-1], V_radial), z, r[-1] * math.exp(h), r[-1])
    if not (np.isfinite(rho_in) and np.isfinite(rho_out)):
        raise ResolutionError("Bessel continuation could not be evaluated at the grid ends")
    # Towards infinity the continuation must be the decaying branch K_nu; the
    # regular branch I_nu may oscillate in modulus near the imaginary axis.
    if abs(rho_out) > 1 + BOUNDARY_SLACK:
        raise ResolutionError(f"exterior continuation is not decaying (|rho_out| = {abs(rho_out):.3g})")
    ab[1, 0] += off * rho_in
    ab[1, -1] += off * rho_out
    F = r ** (2.0 + lam) * np.asarray(query.rhs.values)
    return ab, F.astype(complex)


def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    """Expand a ``(1, 1)`` banded matrix into a dense array."""
    N = ab.shape[1]
    A = np.diag(ab[1]).astype(ab.dtype)
    A[np.arange(N - 1), np.arange(1, N)] = ab[0, 1:]
    A[np.arange(1, N), np.arange(N - 1)] = ab[2, :-1]
    return A


def _banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


def solve_helmholtz_channel(query: ResolventQuery,
                            V_radial: Optional[Callable[[np.ndarray], np.ndarray]] = None
                            ) -> RadialFunction:
    """Solve ``(A_nu + V_rad + z^2) u = f`` with decaying behaviour at both ends.

    Parameters
    ----------
    query : ResolventQuery
        ``z`` with ``Re z > 0``, Bessel order ``nu`` (for homogeneous
        potentials the angular part is already folded into ``nu``) and the
        data ``f`` on a logarithmic grid.
    V_radial : callable, optional
        Radial potential ``V(r)`` added to the channel (``radial`` kind only).

    Returns
    -------
    RadialFunction
        ``u`` on the grid of ``f``, tagged with ``channel = nu``.

    Raises
    ------
    ResolutionError
        If the exterior continuation is not the decaying branch.
    ConvergenceError
        If the relative residual of the discrete solve exceeds ``1e-8``.

    Examples
    --------
    >>> g = make_log_grid(1e-3, 1e3, 512, 3)
    >>> zero = RadialFunction(g, np.zeros(g.size))
    >>> float(np.abs(solve_helmholtz_channel(ResolventQuery(1.0, 0.5, zero)).values).max())
    0.0
    """
    ab, F = helmholtz_channel_system(query, V_radial)
    g = query.rhs.grid
    if not np.any(F):
        return RadialFunction(g, np.zeros(g.size, dtype=complex), query.nu)
    try:
        phi = sla.solve_banded((1, 1), ab, F, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"banded Helmholtz solve failed: {exc}") from exc
    res = np.linalg.norm(_banded_matvec(ab, phi) - F) / np.linalg.norm(F)
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise ConvergenceError(f"Helmholtz residual {res:.3g} exceeds {RESIDUAL_TOL}")
    return RadialFunction(g, phi * g.nodes ** (-g.lam), query.nu)


# ---------------------------------------------------------------------------
# Probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FSample:
    """Resolvent data: a radial profile placed on the ``channel``-th channel.

    Channels are indexed by ascending distinct Bessel order of the potential.
    """

    channel: int
    profile: RadialFunction
    label: str = ""


def default_resolvent_grid(N: int = 4096, n: int = 3) -> RadialGrid:
    """Log grid on ``[1e-3, 1e3]`` used for resolvent scans."""
    return make_log_grid(1e-3, 1e3, N, n)


def default_z_set() -> list[complex]:
    """24 spectral parameters: ``|z| = 10^k`` (``k = -2..3``) times four phases.

    The phases ``0, 0.75, 1.3, arccos(0.01)`` approach the imaginary axis,
    i.e. ``mu = -z^2`` approaches the positive spectrum with
    ``Re z >= 1e-2 |z|``.
    """
    phases = (0.0, 0.75, 1.3, math.acos(0.01))
    return [complex(m * np.exp(1j * ph)) for m in 10.0 ** np.arange(-2, 4) for ph in phases]


def default_f_samples(grid: Optional[RadialGrid] = None, channels: int = 7,
                      centers: Sequence[float] = (0.1, 1.0, 10.0)) -> list[FSample]:
    """Gaussian bumps ``exp(-(r - r0)^2 / (2 (r0/2)^2))`` on the lowest channels."""
    g = default_resolvent_grid() if grid is None else grid
    out = []
    for k in range(channels):
        for r0 in centers:
            w = r0 / 2.0
            prof = RadialFunction.from_callable(
                g, lambda r, _r0=r0, _w=w: np.exp(-(r - _r0) ** 2 / (2 * _w * _w)))
            out.append(FSample(k, prof, f"bump(r0={r0:g}, l={k})"))
    return out


def channel_orders(V: Potential, count: int, lmax: int = 24) -> np.ndarray:
    """Lowest ``count`` distinct Bessel orders ``nu_k`` of the channels of ``V``.

    Radial potentials keep the free orders ``lam + l``; homogeneous ones use
    the eigenvalues of ``-Laplace_sphere + q``.
    """
    if count < 1:
        raise PreconditionError("need at least one channel")
    lam = V.lam
    if not V.is_homogeneous:
        return lam + np.arange(count, dtype=float)
    q = V.angular_part()
    if q.kind == "constant":
        l = np.arange(count, dtype=float)
        return np.sqrt(l * (l + V.n - 2.0) + q.value + lam ** 2)
    op = sphere.assemble(q, V.n, max(lmax, count + 8))
    spec = sphere.channel_spectrum(op)
    distinct = []
    for v in spec.nu:
        if not distinct or v - distinct[-1] > 1e-10 * max(1.0, v):
            distinct.append(float(v))
    if len(distinct) < count:
        raise PreconditionError("not enough channels at this truncation")
    return np.array(distinct[:count])


def _radial_part(V: Potential) -> Optional[Callable]:
    return None if V.is_homogeneous else V.profile


def _ratio(u: RadialFunction, f: RadialFunction) -> float:
    g = f.grid
    w, r = g.weights, g.nodes
    num = np.sum(w * np.abs(u.values) ** 2 / r ** 2)
    den = np.sum(w * np.abs(f.values) ** 2 * r ** 2)
    if den == 0:
        raise PreconditionError("f sample vanishes identically")
    return float(np.sqrt(num / den))


def _check_sample_decay(f: RadialFunction, tol: float = 1e-4) -> None:
    v = np.abs(np.asarray(f.values)) * f.grid.nodes ** (1.0 + f.grid.n / 2.0)
    peak = v.max()
    if peak > 0 and max(v[0], v[-1]) > tol * peak:
        raise PreconditionError("f sample does not decay at the grid ends")


def _admissible_delta_sq(V: Potential) -> float:
    rep = assumption_report(V)
    if not rep.passed:
        raise AssumptionViolation(f"potential {V.describe()} fails the spectral assumptions")
    return rep.delta_sq


def weighted_resolvent_ratio(V: Potential, z: complex, f_samples: Sequence[FSample],
                             check_assumptions: bool = True) -> float:
    """``max ||Omega^-1 R(-z^2) f|| / ||Omega f||`` over the samples.

    Every sample lives on a single channel, so the ratio is a lower bound
    for the operator norm of ``Omega^-1 R(mu) Omega^-1``.

    Raises
    ------
    AssumptionViolation
        If ``V`` fails the spectral assumptions (skippable for diagnostics).
    """
    if not f_samples:
        raise PreconditionError("no f samples")
    if check_assumptions:
        _admissible_delta_sq(V)
    nus = channel_orders(V, max(s.channel for s in f_samples) + 1)
    Vr = _radial_part(V)
    best = 0.0
    for s in f_samples:
        _check_sample_decay(s.profile)
        u = solve_helmholtz_channel(ResolventQuery(z, nus[s.channel], s.profile), Vr)
        best = max(best, _ratio(u, s.profile))
    return best


# ---------------------------------------------------------------------------
# Scan and report
# ---------------------------------------------------------------------------

class ResolventEntry(NamedTuple):
    z: complex
    nu: float
    channel: int
    sample: str
    ratio: float
    ratio_truncated: float


def _truncate(f: RadialFunction, rmax: float) -> RadialFunction:
    g = f.grid
    keep = g.nodes <= rmax * (1 + 1e-12)
    sub = make_log_grid(g.rmin, float(g.nodes[keep][-1]), int(keep.sum()), g.n)
    return RadialFunction(sub, np.asarray(f.values)[keep], f.channel)


@dataclass
class ResolventReport:
    """All scanned ratios and the verdict against ``1 / (2 delta^2)``."""

    entries: list
    sup_ratio: float
    bound: float
    delta_sq: float
    passed: bool
    tol: float
    grid: dict
    truncation_sensitivity: float = math.nan
    potential: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        """``sup_ratio / bound``; at most ``1 + tol`` when the bound holds."""
        return self.sup_ratio / self.bound if self.bound > 0 else math.inf

    @property
    def argmax(self) -> ResolventEntry:
        return max(self.entries, key=lambda e: e.ratio)

    def to_dict(self) -> dict:
        a = self.argmax
        return {
            "potential": self.potential,
            "sup_ratio": self.sup_ratio,
            "bound": self.bound,
            "delta_sq": self.delta_sq,
            "margin": self.margin,
            "passed": self.passed,
            "tol": self.tol,
            "grid": self.grid,
            "truncation_sensitivity": self.truncation_sensitivity,
            "argmax": {"z": [a.z.real, a.z.imag], "nu": a.nu, "sample": a.sample},
            "entries": [{"z": [e.z.real, e.z.imag], "nu": e.nu, "channel": e.channel,
                         "sample": e.sample, "ratio": e.ratio,
                         "ratio_truncated": e.ratio_truncated} for e in self.entries],
        }

    def to_csv(self) -> str:
        """Rows ``re_z, im_z, nu, ratio`` for plotting."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re_z", "im_z", "nu", "ratio"])
        for e in self.entries:
            w.writerow([repr(e.z.real), repr(e.z.imag), repr(e.nu), repr(e.ratio)])
        return buf.getvalue()


def resolvent_scan(V: Potential, z_set: Optional[Sequence[complex]] = None,
                   f_samples: Optional[Sequence[FSample]] = None,
                   grid: Optional[RadialGrid] = None, tol: float = DEFAULT_TOL,
                   truncation_check: bool = True) -> ResolventReport:
    """Scan ``||Omega^-1 R(-z^2) f|| / ||Omega f||`` and compare with ``1/(2 delta^2)``.

    Parameters
    ----------
    V : Potential
        Admissible potential; ``delta^2`` is the smaller of the two
        positivity constants.
    z_set : sequence of complex, optional
        Defaults to :func:`default_z_set`.
    f_samples : sequence of FSample, optional
        Defaults to :func:`default_f_samples` on ``grid``.
    grid : RadialGrid, optional
        Log grid; defaults to :func:`default_resolvent_grid` in dimension
        ``V.n``.  Ignored when samples are given (their grid is used).
    tol : float
        Relative slack in ``passed``.
    truncation_check : bool
        Re-solve every entry on the sub-grid ``r <= rmax / 2`` and record the
        largest relative change of the ratio.

    Returns
    -------
    ResolventReport
    """
    zs = list(default_z_set() if z_set is None else z_set)
    if not zs:
        raise PreconditionError("empty z set")
    for z in zs:
        if complex(z).real <= 0:
            raise PreconditionError(f"z = {z} has Re z <= 0")
    if f_samples is None:
        g = default_resolvent_grid(n=V.n) if grid is None else grid
        f_samples = default_f_samples(g)
    f_samples = list(f_samples)
    if not f_samples:
        raise PreconditionError("no f samples")
    g = f_samples[0].profile.grid
    if g.n != V.n:
        raise PreconditionError("sample grid dimension differs from the potential's")
    d2 = _admissible_delta_sq(V)
    nus = channel_orders(V, max(s.channel for s in f_samples) + 1)
    Vr = _radial_part(V)
    half = g.rmax / 2.0
    truncated = {id(s): _truncate(s.profile, half) for s in f_samples} if truncation_check else {}
    entries = []
    sens = 0.0
    for s in f_samples:
        _check_sample_decay(s.profile)
        nu = float(nus[s.channel])
        for z in zs:
            u = solve_helmholtz_channel(ResolventQuery(z, nu, s.profile), Vr)
            rat = _ratio(u, s.profile)
            rt = math.nan
            if truncation_check:
                ft = truncated[id(s)]
                rt = _ratio(solve_helmholtz_channel(ResolventQuery(z, nu, ft), Vr), ft)
                if rat > 0:
                    sens = max(sens, abs(rt - rat) / rat)
            entries.append(ResolventEntry(complex(z), nu, s.channel, s.label, rat, rt))
    sup = max(e.ratio for e in entries)
    bound = 1.0 / (2.0 * d2)
    return ResolventReport(entries, sup, bound, d2, bool(sup <= bound * (1 + tol)), tol,
                           g.describe(), sens if truncation_check else math.nan,
                           V.describe())


# ---------------------------------------------------------------------------
# Multiplier ingredients
# ---------------------------------------------------------------------------

def _psi_derivatives(sigma: float, r):
    r = np.asarray(r, dtype=float)
    t = 1.0 + 2.0 * sigma * r
    e = np.exp(-sigma * r)
    psi = e * np.sqrt(t)
    d1 = -2.0 * sigma ** 2 * r * e / np.sqrt(t)
    # d/dr of  -2 sigma^2 r e^{-sigma r} t^{-1/2}
    d2 = -2.0 * sigma ** 2 * e * t ** -1.5 * (t - sigma * r * t - sigma * r)
    return psi, d1, d2


def psi_identity_lhs(sigma: float, r) -> np.ndarray:
    """``psi'^2 / 4 + psi psi'' / 2 - psi psi' / (2 r)`` for ``psi = e^(-sigma r) (1 + 2 sigma r)^(1/2)``."""
    psi, d1, d2 = _psi_derivatives(sigma, r)
    return 0.25 * d1 ** 2 + 0.5 * psi * d2 - psi * d1 / (2.0 * np.asarray(r, dtype=float))


def psi_identity_rhs(sigma: float, r) -> np.ndarray:
    """The closed form ``3 sigma^4 r^2 e^(-2 sigma r) / (1 + 2 sigma r)`` asserted for the LHS.

    It coincides with ``(3/4) psi'^2``, not with :func:`psi_identity_lhs`;
    see :func:`psi_identity_exact` for the value of the left-hand side.
    """
    r = np.asarray(r, dtype=float)
    return 3.0 * sigma ** 4 * r ** 2 * np.exp(-2.0 * sigma * r) / (1.0 + 2.0 * sigma * r)


def psi_identity_exact(sigma: float, r) -> np.ndarray:
    """Closed form of the left-hand side: ``sigma^3 r (2 + 3 sigma r) e^(-2 sigma r) / (1 + 2 sigma r)``.

    It is non-negative, which is the property the multiplier argument needs.
    """
    r = np.asarray(r, dtype=float)
    return (sigma ** 3 * r * (2.0 + 3.0 * sigma * r) * np.exp(-2.0 * sigma * r)
            / (1.0 + 2.0 * sigma * r))


def psi_identity_residual(sigma: float, r: float, rhs: str = "stated") -> float:
    """``|LHS - RHS|`` of the ``psi`` identity at one point.

    Parameters
    ----------
    sigma : float
        ``Re z >= 0``.
    r : float
        Radius ``> 0``.
    rhs : {"stated", "exact"}
        Compare with :func:`psi_identity_rhs` (the asserted closed form) or
        with :func:`psi_identity_exact`.

    Examples
    --------
    >>> psi_identity_residual(0.0, 2.0)
    0.0
    >>> psi_identity_residual(1.0, 1.0, rhs="exact") < 1e-15
    True
    """
    if sigma < 0 or not math.isfinite(sigma):
        raise PreconditionError("sigma must be finite and >= 0")
    if not (r > 0 and math.isfinite(r)):
        raise PreconditionError("r must be positive and finite")
    if rhs == "stated":
        R = psi_identity_rhs(sigma, r)
    elif rhs == "exact":
        R = psi_identity_exact(sigma, r)
    else:
        raise PreconditionError(f"unknown rhs {rhs!r}")
    return float(abs(psi_identity_lhs(sigma, r) - R))


@dataclass(frozen=True)
class PsiSpec:
    """A weight ``psi`` with its derivative, both callables of ``r``."""

    psi: Callable[[np.ndarray], np.ndarray]
    dpsi: Callable[[np.ndarray], np.ndarray]
    label: str = "psi"

    @classmethod
    def constant(cls, c: float = 1.0) -> "PsiSpec":
        return cls(lambda r: np.full_like(np.asarray(r, dtype=float), c),
                   lambda r: np.zeros_like(np.asarray(r, dtype=float)), f"const({c})")

    @classmethod
    def multiplier(cls, sigma: float) -> "PsiSpec":
        """``psi = e^(-sigma r) (1 + 2 sigma r)^(1/2)``."""
        return cls(lambda r: _psi_derivatives(sigma, r)[0],
                   lambda r: _psi_derivatives(sigma, r)[1], f"multiplier({sigma})")


class WeightedHardy(NamedTuple):
    lhs: float
    rhs: float


def weighted_hardy_check(psi_spec: PsiSpec, f: RadialFunction,
                         origin_tol: float = 1e-8) -> WeightedHardy:
    """``(int psi^2 |f|^2 r^-2 dr, 4 int psi^2 |f'|^2 dr)`` on the grid of ``f``.

    Preconditions (checked, raising :class:`PreconditionError`): ``f``
    vanishes at the origin (first node below ``origin_tol * max|f|``),
    ``psi >= 0`` and ``psi' <= 0`` on every node.

    Examples
    --------
    >>> g = make_log_grid(1e-10, 60.0, 8192, 3)
    >>> f = RadialFunction.from_callable(g, lambda r: r * np.exp(-r))
    >>> lhs, rhs = weighted_hardy_check(PsiSpec.constant(), f)
    >>> round(lhs, 8), round(rhs, 8)
    (0.5, 1.0)
    """
    v = np.asarray(f.values)
    g = f.grid
    r = g.nodes
    peak = np.abs(v).max()
    if peak == 0:
        return WeightedHardy(0.0, 0.0)
    if abs(v[0]) > origin_tol * peak:
        raise PreconditionError("f does not vanish at the origin")
    psi = np.asarray(psi_spec.psi(r), dtype=float)
    dpsi = np.asarray(psi_spec.dpsi(r), dtype=float)
    if np.any(psi < 0):
        raise PreconditionError("psi must be non-negative")
    if np.any(dpsi > 0):
        raise PreconditionError("psi must be non-increasing")
    w = g.line_weights
    df = radial_derivative(f)
    lhs = float(np.sum(w * psi ** 2 * np.abs(v) ** 2 / r ** 2))
    rhs = float(4.0 * np.sum(w * psi ** 2 * np.abs(df) ** 2))
    return WeightedHardy(lhs, rhs)
