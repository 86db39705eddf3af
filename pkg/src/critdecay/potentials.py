"""Candidate potentials, the derived potential ``V~ = -d_r(r V)`` and the
spectral assumptions with their constants.

Assumptions checked (``lam = (n-2)/2``):

* (A1) ``gamma_pm^2 = sup |x|^2 V_pm(x) < inf``;
* (A2) ``-Laplace_sphere + r^2 V(r .) + lam^2 >= delta^2 > 0`` on every sphere;
* (A3) the same positivity with ``V~`` in place of ``V``.

They yield the form bounds ``c1 ||grad u||^2 <= Q(u) <= c2 ||grad u||^2`` with
``c1 = delta^2 / (delta^2 + gamma_-^2)`` and ``c2 = 1 + gamma_+^2 / lam^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import sphere
from .exceptions import PreconditionError
from .radial import RadialGrid, radial_derivative, RadialFunction

__all__ = [
    "Dimension",
    "RadialProfile",
    "Potential",
    "A1Result",
    "PositivityResult",
    "AssumptionReport",
    "FormValues",
    "build_potential",
    "tilde_potential",
    "check_A1",
    "check_positivity",
    "assumption_report",
    "default_radii",
    "quadratic_form",
    "POSITIVITY_MARGIN",
    "OVERFLOW_GUARD",
]

POSITIVITY_MARGIN = 1e-10
OVERFLOW_GUARD = 1e300
KINDS = ("zero", "inverse_square", "radial", "homogeneous_angular", "dipole")


@dataclass(frozen=True)
class Dimension:
    """Spatial dimension ``n >= 3`` with ``lam = (n - 2) / 2``."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise PreconditionError(f"dimension must be an integer >= 3, got {self.n}")

    @property
    def lam(self) -> float:
        return (self.n - 2) / 2.0


# ---------------------------------------------------------------------------
# Radial profiles
# ---------------------------------------------------------------------------

def _fd_derivative(fn: Callable, r: np.ndarray) -> np.ndarray:
    h = r * 1e-5
    return (fn(r - 2 * h) - 8 * fn(r - h) + 8 * fn(r + h) - fn(r + 2 * h)) / (12 * h)


@dataclass(frozen=True)
class RadialProfile:
    """Scalar radial potential profile ``V(r)``.

    Registered families have closed-form ``V~`` and closed-form limits of
    ``r^2 V`` at ``0`` and ``infinity``:

    ``power``               ``c r^-e``
    ``exp_inverse_square``  ``c exp(-r/ell) r^-2``
    ``gaussian``            ``c exp(-r^2/ell^2)``

    Any other callable is accepted as family ``custom``; its ``V~`` uses the
    five-point stencil with step ``h = 1e-5 r``.
    """

    family: str
    c: float = 1.0
    exponent: float = 2.0
    scale: float = 1.0
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    tilde_of: bool = False

    def __post_init__(self):
        for v in (self.c, self.exponent, self.scale):
            if not math.isfinite(v):
                raise PreconditionError("profile parameters must be finite")
        if self.scale <= 0:
            raise PreconditionError("profile scale must be positive")
        if self.family == "custom" and self.func is None:
            raise PreconditionError("custom profile needs a callable")
        if self.family not in ("power", "exp_inverse_square", "gaussian", "custom"):
            raise PreconditionError(f"unknown radial family {self.family!r}")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        c, e, ell = self.c, self.exponent, self.scale
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            if self.family == "custom":
                base = (lambda t: np.asarray(self.func(t), dtype=float))
                return -_fd_derivative(lambda t: t * base(t), r) if self.tilde_of else base(r)
            if self.family == "power":
                v = c * r ** (-e)
                return (e - 1.0) * v if self.tilde_of else v
            if self.family == "exp_inverse_square":
                v = c * np.exp(-r / ell) / r ** 2
                return v * (1.0 + r / ell) if self.tilde_of else v
            g = c * np.exp(-(r / ell) ** 2)
            return -(1.0 - 2.0 * (r / ell) ** 2) * g if self.tilde_of else g

    def tilde(self) -> "RadialProfile":
        if self.tilde_of:
            raise PreconditionError("second derivative potential is not supported")
        return RadialProfile(self.family, self.c, self.exponent, self.scale, self.func, True)

    def r2_limits(self) -> tuple[float, float]:
        """Limits of ``r^2 V(r)`` as ``r -> 0+`` and ``r -> infinity`` (nan if unknown)."""
        c, e = self.c, self.exponent
        if self.family == "power":
            k = (e - 1.0) * c if self.tilde_of else c
            if e == 2.0:
                return k, k
            inf = math.copysign(math.inf, k) if k != 0 else 0.0
            return (0.0, inf) if e < 2 else (inf, 0.0)
        if self.family == "exp_inverse_square":
            return c, 0.0
        if self.family == "gaussian":
            return 0.0, 0.0
        return math.nan, math.nan

    def describe(self) -> dict:
        d = {"family": self.family, "c": self.c}
        if self.family == "power":
            d["exponent"] = self.exponent
        elif self.family != "custom":
            d["scale"] = self.scale
        if self.tilde_of:
            d["tilde"] = True
        return d


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """A candidate potential on ``R^n``.

    Homogeneous kinds (``zero``, ``inverse_square``, ``homogeneous_angular``,
    ``dipole``) have the form ``r^-2 q(omega)``; ``radial`` carries a
    profile ``V(r)``.
    """

    kind: str
    dimension: Dimension
    a: float = 0.0
    p: float = 0.0
    profile: Optional[RadialProfile] = None
    angular: Optional[sphere.AngularPotential] = None

    @property
    def n(self) -> int:
        return self.dimension.n

    @property
    def lam(self) -> float:
        return self.dimension.lam

    @property
    def is_homogeneous(self) -> bool:
        return self.kind != "radial"

    @property
    def admissible_flag(self) -> bool:
        """Quick admissibility of inverse-square strengths, ``a > -lam^2``."""
        if self.kind == "inverse_square":
            return self.a > -self.lam ** 2
        return True

    def angular_part(self) -> sphere.AngularPotential:
        """The factor ``q`` in ``V = r^-2 q(omega)`` (homogeneous kinds only)."""
        if self.kind == "zero":
            return sphere.AngularPotential.constant(0.0)
        if self.kind == "inverse_square":
            return sphere.AngularPotential.constant(self.a)
        if self.kind == "dipole":
            return sphere.AngularPotential.linear(self.p)
        if self.kind == "homogeneous_angular":
            return self.angular
        raise PreconditionError("radial potentials have no homogeneous angular part")

    def evaluate(self, r, x=None, phi=None) -> np.ndarray:
        """``V`` at radius ``r`` and polar cosine ``x`` (and azimuth ``phi`` if general)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "radial":
            return self.profile(r)
        q = self.angular_part()
        xv = np.zeros_like(r) if x is None else np.asarray(x, dtype=float)
        return q.evaluate(xv, phi) / r ** 2

    def describe(self) -> dict:
        d = {"kind": self.kind, "n": self.n}
        if self.kind == "inverse_square":
            d["a"] = self.a
        if self.kind == "dipole":
            d["p"] = self.p
        if self.kind == "radial":
            d["profile"] = self.profile.describe()
        if self.kind == "homogeneous_angular":
            d["angular"] = self.angular.label
        return d


def _finite(name: str, v) -> float:
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise PreconditionError(f"{name} must be a real number") from None
    if not math.isfinite(f):
        raise PreconditionError(f"{name} must be finite")
    return f


def build_potential(spec: Mapping) -> Potential:
    """Validate a potential description and attach its dimension.

    Parameters
    ----------
    spec : mapping
        ``kind`` in {zero, inverse_square, radial, homogeneous_angular,
        dipole}, ``n`` (default 3) and the kind's parameters: ``a``
        (inverse_square), ``p`` (dipole), ``profile`` = {family, c,
        exponent | scale} (radial) or ``q_poly`` = coefficients of a
        polynomial in ``x = cos(theta)`` (homogeneous_angular).  A ready
        :class:`~critdecay.sphere.AngularPotential` may be passed as ``q``.

    Examples
    --------
    >>> build_potential({"kind": "zero", "n": 3}).lam
    0.5
    """
    kind = spec.get("kind")
    if kind not in KINDS:
        raise PreconditionError(f"unknown potential kind {kind!r}")
    n = spec.get("n", 3)
    if isinstance(n, float) and n.is_integer():
        n = int(n)
    if not isinstance(n, int) or isinstance(n, bool):
        raise PreconditionError("n must be an integer")
    dim = Dimension(n)
    if kind == "zero":
        return Potential(kind, dim)
    if kind == "inverse_square":
        return Potential(kind, dim, a=_finite("a", spec.get("a", 0.0)))
    if kind == "dipole":
        if n != 3:
            raise PreconditionError("the point dipole is defined on R^3 only")
        p = _finite("p", spec.get("p", 0.0))
        if p < 0:
            raise PreconditionError("dipole moment must be non-negative (orientation along the pole)")
        return Potential(kind, dim, p=p)
    if kind == "radial":
        prof = spec.get("profile")
        if isinstance(prof, RadialProfile):
            return Potential(kind, dim, profile=prof)
        if not isinstance(prof, Mapping):
            raise PreconditionError("radial potential needs a profile table")
        fam = prof.get("family")
        kw = {"c": _finite("c", prof.get("c", 1.0))}
        if fam == "power":
            kw["exponent"] = _finite("exponent", prof.get("exponent", 2.0))
        elif fam in ("exp_inverse_square", "gaussian"):
            kw["scale"] = _finite("scale", prof.get("scale", 1.0))
        elif fam == "custom":
            kw["func"] = prof.get("func")
        return Potential(kind, dim, profile=RadialProfile(fam, **kw))
    # homogeneous_angular
    q = spec.get("q")
    if isinstance(q, sphere.AngularPotential):
        if q.kind == "general" and n != 3:
            raise PreconditionError("non-zonal angular potentials need n = 3")
        return Potential(kind, dim, angular=q)
    coeffs = spec.get("q_poly")
    if coeffs is None:
        raise PreconditionError("homogeneous_angular needs q_poly coefficients")
    cs = tuple(_finite("q_poly", c) for c in coeffs)
    if len(cs) == 0:
        raise PreconditionError("q_poly must not be empty")
    qfun = lambda x, _c=cs: np.polynomial.polynomial.polyval(np.asarray(x), _c)
    if len(cs) <= 2 and (len(cs) < 2 or cs[0] == 0.0):
        ang = (sphere.AngularPotential.linear(cs[1]) if len(cs) == 2
               else sphere.AngularPotential.constant(cs[0]))
    else:
        ang = sphere.AngularPotential.zonal(qfun, f"poly{list(cs)}")
    return Potential(kind, dim, angular=ang)


def tilde_potential(V: Potential) -> Potential:
    """``V~ = -d_r(r V)``.

    Homogeneous potentials of degree ``-2`` are fixed points (the same
    object is returned); radial profiles use the closed forms registered
    with their family or a five-point stencil.
    """
    if V.is_homogeneous:
        return V
    return Potential("radial", V.dimension, profile=V.profile.tilde())


def default_radii() -> np.ndarray:
    """Geometric radii sample: 61 points on ``[1e-3, 1e3]``."""
    return np.geomspace(1e-3, 1e3, 61)


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------

class A1Result(NamedTuple):
    gamma_plus_sq: float
    gamma_minus_sq: float


def _pos(x: float) -> float:
    return float(x) if x > 0 else 0.0


def _zonal_extrema(q: sphere.AngularPotential, npts: int) -> tuple[float, float]:
    x, _ = sphere.zonal_quadrature(3, npts)
    x = np.concatenate([[-1.0], x, [1.0]])
    vals = q.evaluate(x)
    out = []
    for sign in (1.0, -1.0):
        i = int(np.argmax(sign * vals))
        lo, hi = x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]
        best = sign * vals[i]
        if hi > lo:
            res = minimize_scalar(lambda t: -sign * float(q.evaluate(np.array([t]))[0]),
                                  bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-13})
            best = max(best, -res.fun)
        out.append(sign * best)
    return out[0], out[1]


def _general_extrema(q: sphere.AngularPotential, npts: int) -> tuple[float, float]:
    x, _ = sphere.zonal_quadrature(3, npts)
    x = np.concatenate([[-1.0], x, [1.0]])
    phi = np.linspace(0, 2 * np.pi, 2 * npts, endpoint=False)
    X, P = np.meshgrid(x, phi, indexing="ij")
    vals = q.evaluate(X, P)
    out = []
    for sign in (1.0, -1.0):
        i, j = np.unravel_index(int(np.argmax(sign * vals)), vals.shape)
        f = lambda t: -sign * float(q.evaluate(np.array([np.clip(t[0], -1, 1)]), np.array([t[1]]))[0])
        res = minimize(f, x0=[X[i, j], P[i, j]], method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14})
        out.append(sign * max(sign * vals[i, j], -res.fun))
    return out[0], out[1]


def _radial_extrema(fn: Callable[[np.ndarray], np.ndarray], radii: np.ndarray,
                    limits: tuple[float, float]) -> tuple[float, float]:
    """Sup and inf of ``fn`` over sampled radii, refined locally, plus known limits."""
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.asarray(fn(radii), dtype=float)
    if np.any(~np.isfinite(vals)) or np.any(np.abs(vals) > OVERFLOW_GUARD):
        bad = vals[~np.isfinite(vals) | (np.abs(vals) > OVERFLOW_GUARD)]
        sup = math.inf if np.any(bad > 0) or np.any(np.isnan(bad)) else np.nanmax(vals)
        inf = -math.inf if np.any(bad < 0) or np.any(np.isnan(bad)) else np.nanmin(vals)
        return float(sup), float(inf)
    out = []
    s = np.log(radii)
    for sign in (1.0, -1.0):
        i = int(np.argmax(sign * vals))
        best = sign * vals[i]
        lo, hi = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
        if hi > lo:
            res = minimize_scalar(lambda t: -sign * float(fn(np.array([np.exp(t)]))[0]),
                                  bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            if np.isfinite(res.fun):
                best = max(best, -res.fun)
        for lim in limits:
            if not math.isnan(lim):
                best = max(best, sign * lim)
        out.append(sign * best)
    return float(out[0]), float(out[1])


def check_A1(V: Potential, radii: Optional[Sequence[float]] = None,
             lmax: int = sphere.DEFAULT_LMAX) -> A1Result:
    """Return ``(gamma_+^2, gamma_-^2)``, the suprema of ``r^2 V_+`` and ``r^2 V_-``.

    Homogeneous kinds are evaluated on the sphere alone: exactly for
    constants and the dipole (``sup cos(theta)_pm = 1``), by dense
    quadrature-node sampling plus local refinement otherwise.  Radial
    profiles are sampled at ``radii`` (refined locally and completed by the
    closed-form limits at ``0`` and ``infinity``); a divergent sample or
    limit reports ``inf``.
    """
    if V.kind == "zero":
        return A1Result(0.0, 0.0)
    if V.kind == "inverse_square":
        return A1Result(_pos(V.a), _pos(-V.a))
    if V.kind == "dipole":
        return A1Result(V.p, V.p)
    if V.kind == "homogeneous_angular":
        q = V.angular
        if q.kind == "constant":
            return A1Result(_pos(q.value), _pos(-q.value))
        if q.linear_coefficient is not None:
            p = abs(q.linear_coefficient)
            return A1Result(p, p)
        hi, lo = (_zonal_extrema(q, 2 * lmax + 1) if q.kind == "zonal"
                  else _general_extrema(q, 2 * lmax + 1))
        return A1Result(_pos(hi), _pos(-lo))
    r = default_radii() if radii is None else np.asarray(radii, dtype=float)
    if r.size == 0 or np.any(r <= 0):
        raise PreconditionError("radii must be a non-empty set of positive numbers")
    prof = V.profile
    hi, lo = _radial_extrema(lambda t: t ** 2 * prof(t), r, prof.r2_limits())
    return A1Result(_pos(hi), _pos(-lo))


@dataclass(frozen=True)
class PositivityResult:
    """``delta^2`` with per-radius sphere minima and solver convergence."""

    delta_sq: float
    per_radius: tuple[tuple[float, float], ...]
    lowest_sphere_eigenvalue: float
    convergence_estimate: float


def check_positivity(V: Potential, lmax: int = sphere.DEFAULT_LMAX,
                     radii: Optional[Sequence[float]] = None) -> PositivityResult:
    """``delta^2 = lam^2 + min_r lowest eig(-Laplace_sphere + r^2 V(r .))`` minus a 1e-10 margin.

    For homogeneous potentials a single sphere suffices.  For radial
    profiles the sphere operator is the constant ``r^2 V(r)`` on the
    constant harmonic, so the minimum is taken over sampled radii with
    local refinement and the closed-form limits.
    """
    if lmax < 8:
        raise PreconditionError("lmax must be at least 8")
    lam2 = V.lam ** 2
    if V.is_homogeneous:
        op = sphere.assemble(V.angular_part(), V.n, lmax)
        low = sphere.lowest_eigenvalue(op)
        return PositivityResult(lam2 + low.value - POSITIVITY_MARGIN, ((1.0, low.value),),
                                low.value, low.convergence_estimate)
    r = default_radii() if radii is None else np.asarray(radii, dtype=float)
    if r.size == 0 or np.any(r <= 0):
        raise PreconditionError("radii must be a non-empty set of positive numbers")
    prof = V.profile
    fn = lambda t: t ** 2 * prof(t)
    with np.errstate(over="ignore", invalid="ignore"):
        per = tuple((float(ri), float(vi)) for ri, vi in zip(r, fn(r)))
    _, lo = _radial_extrema(fn, r, prof.r2_limits())
    return PositivityResult(lam2 + lo - POSITIVITY_MARGIN, per, lo, 0.0)


@dataclass(frozen=True)
class AssumptionReport:
    """Aggregated (A1)-(A3) verdict with the form constants."""

    gamma_plus_sq: float
    gamma_minus_sq: float
    delta_sq_A2: float
    delta_sq_A3: float
    c1: float
    c2: float
    passed: bool
    radii_sampled: tuple[float, ...]
    lowest_sphere_eigenvalue: float = math.nan
    convergence_estimate: float = 0.0
    tilde_gamma_plus_sq: float = math.nan
    tilde_gamma_minus_sq: float = math.nan

    @property
    def delta_sq(self) -> float:
        """The smaller of the two positivity constants."""
        return min(self.delta_sq_A2, self.delta_sq_A3)

    def to_dict(self) -> dict:
        return {
            "gamma_plus_sq": self.gamma_plus_sq,
            "gamma_minus_sq": self.gamma_minus_sq,
            "delta_sq_A2": self.delta_sq_A2,
            "delta_sq_A3": self.delta_sq_A3,
            "c1": self.c1,
            "c2": self.c2,
            "passed": self.passed,
            "radii_sampled": list(self.radii_sampled),
            "lowest_sphere_eigenvalue": self.lowest_sphere_eigenvalue,
            "convergence_estimate": self.convergence_estimate,
            "tilde_gamma_plus_sq": self.tilde_gamma_plus_sq,
            "tilde_gamma_minus_sq": self.tilde_gamma_minus_sq,
        }


def assumption_report(V: Potential, lmax: int = sphere.DEFAULT_LMAX,
                      radii: Optional[Sequence[float]] = None) -> AssumptionReport:
    """Check (A1)-(A3) for ``V`` and compute ``c1``, ``c2``.

    Failure is returned as a value (``passed = False``), never raised.
    """
    gp, gm = check_A1(V, radii, lmax)
    pos = check_positivity(V, lmax, radii)
    Vt = tilde_potential(V)
    if Vt is V:
        pos_t, gpt, gmt = pos, gp, gm
    else:
        pos_t = check_positivity(Vt, lmax, radii)
        gpt, gmt = check_A1(Vt, radii, lmax)
    d2, d3 = pos.delta_sq, pos_t.delta_sq
    lam2 = V.lam ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        c1 = d2 / (d2 + gm) if math.isfinite(gm) and d2 + gm != 0 else (0.0 if math.isinf(gm) else math.nan)
        c2 = 1.0 + gp / lam2
    passed = bool(math.isfinite(gp) and d2 > 0 and d3 > 0)
    sampled = (1.0,) if V.is_homogeneous else tuple(float(x) for x in
                                                     (default_radii() if radii is None else radii))
    return AssumptionReport(float(gp), float(gm), float(d2), float(d3), float(c1), float(c2),
                            passed, sampled, pos.lowest_sphere_eigenvalue,
                            pos.convergence_estimate, float(gpt), float(gmt))


# ---------------------------------------------------------------------------
# Quadratic forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FormValues:
    """``||grad u||^2``, ``int V|u|^2``, ``Q(u)`` and ``||Omega^-1 u||^2``."""

    grad_sq: float
    potential_term: float
    Q: float
    hardy_sq: float


def quadratic_form(V: Potential, grid: RadialGrid, coeffs: np.ndarray,
                   dcoeffs: Optional[np.ndarray] = None,
                   block: Optional[sphere.SectorBlock] = None) -> FormValues:
    """Energy ``Q(u) = ||grad u||^2 + int V |u|^2`` of a channel-expanded function.

    ``u(r omega) = sum_j coeffs[j](r) Y_j(omega)`` with ``Y_j`` the orthonormal
    basis of one sphere-operator block (degrees ``block.degrees``).  For
    homogeneous ``V = r^-2 q`` the potential term couples channels through
    the block's Galerkin matrix of ``q``; radial ``V`` acts diagonally.

    Parameters
    ----------
    V : Potential
    grid : RadialGrid
    coeffs : ndarray, shape (K, N)
        Channel profiles on the grid.
    dcoeffs : ndarray, shape (K, N), optional
        Exact radial derivatives; finite differences are used otherwise.
    block : SectorBlock, optional
        Basis description; defaults to the zonal sector ``k = 0`` with
        ``K`` functions.
    """
    c = np.atleast_2d(np.asarray(coeffs))
    K = c.shape[0]
    if block is None:
        lmax = max(K - 1, 0)
        q = V.angular_part() if V.is_homogeneous else sphere.AngularPotential.constant(0.0)
        block = sphere.assemble(q, V.n, lmax, sectors=[0]).block(0)
    if block.matrix.shape[0] != K:
        raise PreconditionError("number of channel profiles must match the block size")
    if dcoeffs is None:
        dc = np.array([radial_derivative(RadialFunction(grid, ci)) for ci in c])
    else:
        dc = np.atleast_2d(np.asarray(dcoeffs))
    w = grid.weights
    r = grid.nodes
    lap = block.degrees * (block.degrees + V.n - 2.0)
    inv2 = np.array([[np.sum(w * ci * np.conj(cj) / r ** 2) for cj in c] for ci in c])
    hardy = float(np.real(np.trace(inv2)))
    grad = float(np.real(np.sum(w * np.abs(dc) ** 2)) + np.real(np.sum(lap * np.diag(inv2))))
    if V.is_homogeneous:
        G = block.matrix - np.diag(lap)
        pot = float(np.real(np.sum(G * inv2.T)))
    else:
        vr = V.profile(r)
        pot = float(np.sum(w * vr * np.sum(np.abs(c) ** 2, axis=0)))
    return FormValues(grad, pot, grad + pot, hardy)
