"""Schrödinger and wave propagation channel by channel, with smoothing and
Strichartz norms.

Axisymmetric data ``f(|x|)`` are split into the channels of the potential:
for ``V = r^-2 q(cos theta)`` the channels are eigenfunctions ``Phi_k`` of
``-Laplace_sphere + q`` in the zonal sector, with Bessel orders
``nu_k = sqrt(mu_k + lam^2)``, and ``f = sum_k c_k f(r) Phi_k``,
``c_k = <1, Phi_k>``.

Three propagators are provided.

``hankel_spectral``
    Exact in time for homogeneous potentials: on channel ``k`` the
    Hankel transform of order ``nu_k`` diagonalizes ``P``, so
    ``u_k(t) = H e^(-i t rho^2) H f_k`` (Schrödinger) and
    ``u_k(t) = H [cos(t rho) f^_k + sin(t rho)/rho g^_k]`` (wave).  The
    ``rho`` mesh is uniform and origin-anchored with a step small enough
    to resolve the phase ``r rho + t rho^2`` (resp. ``r rho + t rho``) up to
    the evaluation radius and final time.
``crank_nicolson``
    Schrödinger on a log grid in ``phi = r^lam u``; handles radial profiles.
``leapfrog``
    Wave equation on a uniform grid in ``v = r^((n-1)/2) u``; handles
    radial profiles.  The staggered discrete energy is conserved exactly.

Norms are computed from the stored channel profiles: ``||Omega^-1 u(t)||``
by radial quadrature (channels are orthogonal), ``L^q_x`` norms by
pointwise synthesis on a Gauss-Gegenbauer angular rule, and time integrals
by composite Simpson on the uniform time samples.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps_
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from . import sphere
from .exceptions import AssumptionViolation, PreconditionError, ResolutionError
from .potentials import Potential, assumption_report
from .radial import (MAX_PHASE_STEP, RadialFunction, RadialGrid, bessel_kernel,
                     make_composite_grid, make_log_grid,
                     make_uniform_grid)

__all__ = [
    "EvolutionConfig",
    "StrichartzQuery",
    "ChannelData",
    "CauchyData",
    "EvolutionTrace",
    "SmoothingResult",
    "StrichartzResult",
    "admissible_pair",
    "axisymmetric_data",
    "channel_gaussian",
    "evolve_schrodinger",
    "evolve_wave",
    "smoothing_norm",
    "strichartz_norm",
    "free_gaussian_solution",
    "free_wave_solution",
]

EQUATIONS = ("schrodinger", "wave")
METHODS = ("hankel_spectral", "crank_nicolson", "leapfrog")


@dataclass(frozen=True)
class EvolutionConfig:
    """Discretization parameters (defaults are tuned for smooth data of unit scale).

    Attributes
    ----------
    input_N : int
        Nodes of the input log grid ``[r_data * input_span^-1, r_data]``.
    input_span : float
        Ratio ``rmax / rmin`` of the input grid.
    tail : float
        Relative spectral mass discarded beyond ``rho_cut`` (and data mass
        beyond ``r_data``).
    oversample : float
        ``drho = pi / (oversample * (R_eval + phase growth))``.
    wave_oversample : float
        The same for the wave equation, whose meshes are small; the extra
        refinement reduces the ``drho^(2 + 2 nu)`` error of the origin
        singularity for non-half-integer orders.
    eval_log_step : float
        Step in ``log r`` of the evaluation grid.
    r_lo_factor : float
        Inner evaluation radius relative to ``r_data``.
    lmax : int
        Zonal truncation used to split data into channels.
    drop_tol : float
        Channels with ``|c_k| < drop_tol * max |c|`` are dropped.
    cn_log_step : float
        Crank-Nicolson step in ``log r``.
    cn_substeps : int
        Crank-Nicolson steps per output sample.
    leapfrog_ppw : float
        Leapfrog grid step ``h = 2 pi / (leapfrog_ppw * rho_cut)``.
    leapfrog_cfl : float
        ``dt_step / h`` for the leapfrog scheme.
    rho_rule : {"trapezoid", "gregory"}
        Weights of the uniform ``rho`` mesh used for synthesis.  The
        integrand ``rho^(n-1) K(r, rho) u^(rho)`` extends oddly/evenly past
        ``rho = 0`` for half-integer orders, where the plain trapezoid rule
        is spectrally accurate; the Gregory end corrections amplify the
        ``r rho`` oscillation at large ``r``.
    """

    input_N: int = 1024
    input_span: float = 1e7
    tail: float = 1e-15
    oversample: float = 2.0
    wave_oversample: float = 8.0
    eval_log_step: float = 0.025
    r_lo_factor: float = 1e-6
    lmax: int = 24
    drop_tol: float = 1e-12
    cn_log_step: float = 0.0025
    cn_substeps: int = 40
    leapfrog_ppw: float = 80.0
    leapfrog_cfl: float = 0.5
    rho_rule: str = "trapezoid"
    row_chunk: int = 256
    time_chunk: int = 128


DEFAULT_CONFIG = EvolutionConfig()


# ---------------------------------------------------------------------------
# Admissible exponents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrichartzQuery:
    """Exponents of a space-time norm ``L^p_t L^q_x`` (with ``sigma`` derivatives for wave)."""

    p: float
    q: float
    equation: str
    n: int = 3
    sigma_gap: float = 0.0

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise PreconditionError(f"unknown equation {self.equation!r}")
        p, q, n = float(self.p), float(self.q), self.n
        if self.equation == "schrodinger":
            lhs = (0.0 if math.isinf(p) else 2.0 / p) + (0.0 if math.isinf(q) else n / q)
            target, ok_p = n / 2.0, p >= 2
            sig = 0.0
        else:
            lhs = (0.0 if math.isinf(p) else 2.0 / p) + (0.0 if math.isinf(q) else (n - 1) / q)
            target, ok_p = (n - 1) / 2.0, p > 2
            sig = (0.0 if math.isinf(p) else 1.0 / p) + (0.0 if math.isinf(q) else n / q) - (n - 1) / 2.0
        if not ok_p or abs(lhs - target) > 1e-12:
            raise PreconditionError(f"({p}, {q}) is not admissible for {self.equation} in n = {n}")
        object.__setattr__(self, "sigma_gap", float(sig))


def admissible_pair(equation: str, n: int, p: float) -> StrichartzQuery:
    """Complete ``p`` to an admissible pair.

    Schrödinger: ``2/p + n/q = n/2`` with ``p >= 2``.  Wave:
    ``2/p + (n-1)/q = (n-1)/2`` with ``p > 2`` and derivative order
    ``sigma = 1/p + n/q - (n-1)/2``.

    Examples
    --------
    >>> admissible_pair("schrodinger", 3, 2).q
    6.0
    >>> w = admissible_pair("wave", 3, 4)
    >>> w.q, w.sigma_gap
    (4.0, 0.0)
    """
    if equation not in EQUATIONS:
        raise PreconditionError(f"unknown equation {equation!r}")
    if n < 3:
        raise PreconditionError("n must be at least 3")
    p = float(p)
    if equation == "schrodinger":
        if not p >= 2:
            raise PreconditionError("Schrödinger pairs need p >= 2")
        rest = n / 2.0 - (0.0 if math.isinf(p) else 2.0 / p)
        q = n / rest
    else:
        if not p > 2:
            raise PreconditionError("wave pairs need p > 2 (the endpoint is excluded)")
        rest = (n - 1) / 2.0 - (0.0 if math.isinf(p) else 2.0 / p)
        q = (n - 1) / rest
    return StrichartzQuery(p, float(q), equation, n)


# ---------------------------------------------------------------------------
# Cauchy data
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChannelData:
    nu: float
    f: RadialFunction
    g: Optional[RadialFunction] = None


@dataclass(frozen=True, eq=False)
class CauchyData:
    """Channel decomposition of axisymmetric Cauchy data.

    Attributes
    ----------
    channels : tuple of ChannelData
        Profiles ``f_k``, ``g_k`` and orders ``nu_k``.
    free_matrix : ndarray, shape (J, K)
        Component of ``Phi_k`` on the free zonal harmonic of degree ``j``.
    angular_nodes, angular_weights : ndarray
        Zonal quadrature on ``S^(n-1)`` (weights include ``|S^(n-2)|``).
    angular_values : ndarray, shape (K, Na)
        ``Phi_k`` at the angular nodes.
    r_data : float
        Radius beyond which the data carry relative mass below ``tail``.
    rho_cut : float
        Frequency beyond which the spectral mass is below ``tail`` (the probe
        limit when ``band_limited`` is false).
    band_limited : bool
        Whether the spectral mass falls below ``tail`` inside the probe
        range; the spectral propagators require it, the grid steppers do not.
    sobolev_norms : dict
        ``L2``, ``H1/2`` (of ``f``) and ``H-1/2`` (of ``g``) in the free
        basis, plus ``H1/2_P``/``H-1/2_P`` computed with the channel orders.
    """

    channels: tuple
    n: int
    free_matrix: np.ndarray
    angular_nodes: np.ndarray
    angular_weights: np.ndarray
    angular_values: np.ndarray
    r_data: float
    rho_cut: float
    sobolev_norms: dict
    potential: dict
    V_radial: Optional[Callable] = None
    homogeneous: bool = True
    band_limited: bool = True

    @property
    def grid(self) -> RadialGrid:
        return self.channels[0].f.grid

    @property
    def nus(self) -> np.ndarray:
        return np.array([c.nu for c in self.channels])

    @property
    def has_velocity(self) -> bool:
        return any(c.g is not None for c in self.channels)


def _support_radius(fns: Sequence[Callable], n: int, tail: float) -> float:
    r = np.geomspace(1e-8, 1e5, 4001)
    dens = np.zeros_like(r)
    for fn in fns:
        with np.errstate(all="ignore"):
            v = np.asarray(fn(r), dtype=complex)
        v = np.where(np.isfinite(v), v, 0.0)
        dens += np.abs(v) ** 2 * r ** n           # mass per unit log r
    peak = dens.max()
    if not peak > 0:
        return 1.0                                 # zero data: nominal unit scale
    keep = np.nonzero(dens > tail ** 2 * peak)[0]
    if keep[-1] == r.size - 1:
        raise PreconditionError("Cauchy data do not decay within r < 1e5")
    return float(r[keep[-1]])


def _channel_split(V: Potential, lmax: int):
    """Orders, overlaps ``c_k = <1, Phi_k>`` and free-basis matrix of the zonal channels."""
    n, lam = V.n, V.lam
    area = sphere.sphere_area(n)
    if V.kind in ("zero", "radial"):
        return np.array([lam]), np.array([math.sqrt(area)]), np.ones((1, 1))
    q = V.angular_part()
    if q.kind == "constant":
        if q.value + lam ** 2 <= 0:
            raise AssumptionViolation("lowest channel has no real Bessel order")
        return np.array([math.sqrt(q.value + lam ** 2)]), np.array([math.sqrt(area)]), np.ones((1, 1))
    if q.kind == "general":
        raise PreconditionError("non-zonal potentials do not preserve axisymmetric data")
    block = sphere.assemble(q, n, lmax, sectors=[0]).block(0)
    mu, vec = sla.eigh(block.matrix)
    if mu[0] + lam ** 2 <= 0:
        raise AssumptionViolation("lowest channel has no real Bessel order")
    vec = vec * np.where(vec[0] < 0, -1.0, 1.0)    # sign convention: <1, Phi_k> >= 0
    return np.sqrt(mu + lam ** 2), math.sqrt(area) * vec[0], vec


def _hankel_fast(nu: float, lam: float, r: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Bessel kernel, through spherical Bessel functions for half-integer orders."""
    l = nu - 0.5
    method = "half_integer" if l >= 0 and abs(l - round(l)) < 1e-14 else "jv"
    return bessel_kernel(nu, lam, r, rho, method)


def _transform(values: np.ndarray, grid: RadialGrid, nu: float, rho: np.ndarray,
               chunk: int = 2048) -> np.ndarray:
    wv = grid.weights * values
    out = np.empty(rho.size, dtype=np.result_type(values, float))
    for i in range(0, rho.size, chunk):
        out[i:i + chunk] = _hankel_fast(nu, grid.lam, grid.nodes, rho[i:i + chunk]) @ wv
    return out


def axisymmetric_data(V: Potential, f: Callable, g: Optional[Callable] = None,
                      grid: Optional[RadialGrid] = None,
                      config: EvolutionConfig = DEFAULT_CONFIG,
                      channel: Optional[int] = None) -> CauchyData:
    """Split radial Cauchy data ``f(|x|)``, ``g(|x|)`` into the channels of ``V``.

    Parameters
    ----------
    V : Potential
        Zero, inverse-square, zonal homogeneous (e.g. dipole) or radial.
    f, g : callable
        Radial profiles; ``g`` only for the wave equation.
    grid : RadialGrid, optional
        Input log grid; by default ``[r_data / input_span, r_data]`` where
        ``r_data`` bounds the data support.
    channel : int, optional
        If given, the data are ``f(r) Phi_k(omega)`` for the ``k``-th zonal
        channel (ascending order) instead of ``f(|x|)``.  Profiles behaving
        like ``r^(nu_k - lam)`` at the origin then have rapidly decaying
        Hankel transforms, whereas a radial ``f`` projected on a channel with
        ``nu_k - lam`` not an even integer has only algebraic decay.

    Data that are not band-limited at the input resolution are returned
    with ``band_limited = False``; the spectral propagators then raise
    ``ResolutionError``.
    """
    if not callable(f) or (g is not None and not callable(g)):
        raise PreconditionError("Cauchy data must be callables of r")
    n = V.n
    fns = [f] + ([g] if g is not None else [])
    r_data = _support_radius(fns, n, config.tail)
    if grid is None:
        grid = make_log_grid(r_data / config.input_span, r_data, config.input_N, n)
    if grid.n != n or grid.kind != "log":
        raise PreconditionError("input grid must be a log grid in the potential's dimension")
    nus, c, free = _channel_split(V, config.lmax)
    if channel is not None:
        if not 0 <= channel < nus.size:
            raise PreconditionError(f"channel {channel} out of range (0..{nus.size - 1})")
        keep = np.zeros(nus.size, bool)
        keep[channel] = True
        c = np.ones(nus.size)
    else:
        keep = np.abs(c) >= config.drop_tol * np.abs(c).max()
    nus, c, free = nus[keep], c[keep], free[:, keep]
    fv = np.asarray(f(grid.nodes), dtype=complex)
    gv = None if g is None else np.asarray(g(grid.nodes), dtype=complex)
    if not np.all(np.isfinite(fv)) or (gv is not None and not np.all(np.isfinite(gv))):
        raise PreconditionError("Cauchy data are not finite on the grid")
    if not np.any(fv.imag):
        fv = fv.real
    if gv is not None and not np.any(gv.imag):
        gv = gv.real
    chans = tuple(ChannelData(float(nu), RadialFunction(grid, ck * fv, float(nu)),
                              None if gv is None else RadialFunction(grid, ck * gv, float(nu)))
                  for nu, ck in zip(nus, c))
    # angular synthesis
    lmax_eff = free.shape[0] - 1
    na = 2 * max(lmax_eff, 1) + 1
    x, w = sphere.zonal_quadrature(n, na)
    basis = sphere.gegenbauer_orthonormal(lmax_eff, V.lam, x) / math.sqrt(sphere.sphere_area(n - 1))
    ang = free.T @ basis
    # spectral probe: band limit and Sobolev norms
    sup = np.abs(fv) * grid.weights > 1e-14 * np.max(np.abs(fv) * grid.weights)
    spacing = np.max(grid.spacing[sup]) if np.any(sup) else grid.spacing.max()
    rho_try = 0.95 * MAX_PHASE_STEP / spacing
    drho = math.pi / (2.0 * r_data)
    probe = make_uniform_grid(rho_try, max(256, int(math.ceil(rho_try / drho))), n)
    rho = probe.nodes
    dens = np.zeros(rho.size)
    norms = {"L2": 0.0, "H1/2": 0.0, "H-1/2": 0.0, "H1/2_P": 0.0, "H-1/2_P": 0.0}
    for ch in chans:
        fh = _transform(np.asarray(ch.f.values), grid, ch.nu, rho)
        dens += probe.weights * np.abs(fh) ** 2 * (1.0 + rho)
        norms["L2"] += float(np.sum(grid.weights * np.abs(ch.f.values) ** 2))
        norms["H1/2_P"] += float(np.sum(probe.weights * rho * np.abs(fh) ** 2))
        if ch.g is not None:
            gh = _transform(np.asarray(ch.g.values), grid, ch.nu, rho)
            dens += probe.weights * np.abs(gh) ** 2 * (1.0 + 1.0 / rho)
            norms["H-1/2_P"] += float(np.sum(probe.weights * np.abs(gh) ** 2 / rho))
    # free basis: recombine channel profiles into free zonal degrees
    lam = V.lam
    for j in range(free.shape[0]):
        coef = free[j]
        Fj = sum(cj * np.asarray(ch.f.values) for cj, ch in zip(coef, chans))
        if np.max(np.abs(Fj)) > 1e-13 * np.max(np.abs(fv)) * math.sqrt(sphere.sphere_area(n)):
            fh = _transform(Fj, grid, lam + j, rho)
            norms["H1/2"] += float(np.sum(probe.weights * rho * np.abs(fh) ** 2))
        if gv is not None:
            Gj = sum(cj * np.asarray(ch.g.values) for cj, ch in zip(coef, chans))
            if np.max(np.abs(Gj)) > 1e-13 * np.max(np.abs(gv)) * math.sqrt(sphere.sphere_area(n)):
                gh = _transform(Gj, grid, lam + j, rho)
                norms["H-1/2"] += float(np.sum(probe.weights * np.abs(gh) ** 2 / rho))
    norms = {k: math.sqrt(v) for k, v in norms.items()}
    tail = np.cumsum(dens[::-1])[::-1]
    if not tail[0] > 0:
        rho_cut = 1.0                              # zero data
    else:
        above = np.nonzero(tail > config.tail * tail[0])[0]
        rho_cut = float(rho[min(above[-1] + 1, rho.size - 1)])
    band_limited = rho_cut <= 0.9 * rho_try
    if not band_limited:
        rho_cut = float(rho_try)
    return CauchyData(chans, n, free, x, w, ang, r_data, rho_cut, norms, V.describe(),
                      None if V.is_homogeneous else V.profile, V.is_homogeneous,
                      band_limited)


def channel_gaussian(V: Potential, width: float = 1.0, channel: int = 0,
                     velocity: bool = False,
                     config: EvolutionConfig = DEFAULT_CONFIG) -> CauchyData:
    """Gaussian adapted to channel ``k``: ``f = (r/w)^(nu_k - lam) exp(-r^2 / (2 w^2)) Phi_k``.

    Its Hankel transform of order ``nu_k`` is again of this form, and the
    free-channel Schrödinger flow is explicit:
    ``u(t) = (1 + 2it/w^2)^-(nu_k + 1) (r/w)^(nu_k - lam) exp(-r^2 / (2 w^2 (1 + 2it/w^2)))``.
    For ``V = 0`` and ``k = 0`` it is the plain Gaussian.  With ``velocity``
    the wave velocity ``g`` is set to the same profile.
    """
    if not width > 0:
        raise PreconditionError("width must be positive")
    nus = _channel_split(V, config.lmax)[0]
    if not 0 <= channel < nus.size:
        raise PreconditionError(f"channel {channel} out of range (0..{nus.size - 1})")
    e = float(nus[channel]) - V.lam
    prof = lambda r: (np.asarray(r, dtype=float) / width) ** e * np.exp(-np.asarray(r, dtype=float) ** 2 / (2 * width ** 2))
    return axisymmetric_data(V, prof, prof if velocity else None, config=config, channel=channel)


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EvolutionTrace:
    """Sampled solution ``u(t_m, r_i)`` per channel.

    Attributes
    ----------
    equation, method : str
    times : ndarray
        Uniform samples ``0 = t_0 < ... < t_M = T`` with ``M`` even.
    grid : RadialGrid
        Evaluation grid.
    states : ndarray, shape (K, M + 1, N)
        Channel profiles ``u_k(t_m, r_i)``.
    mass : ndarray
        Conserved L^2 norm of the propagated state (spectral side for the
        spectral method, discrete inner product for Crank-Nicolson).
    energy : ndarray or None
        Conserved wave energy ``Q(u) + ||d_t u||^2``.
    """

    equation: str
    method: str
    times: np.ndarray
    grid: RadialGrid
    states: np.ndarray
    data: CauchyData
    mass: np.ndarray
    energy: Optional[np.ndarray] = None
    delta_sq: float = math.nan
    info: dict = field(default_factory=dict)
    _spectral: Optional[dict] = field(default=None, repr=False)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def nus(self) -> np.ndarray:
        return self.data.nus

    def channel_hardy_sq(self) -> np.ndarray:
        """``||Omega^-1 u_k(t)||^2`` per channel and time, shape (K, M + 1).

        The contribution of ``(0, rmin)`` is added assuming ``u_k ~ r^(nu_k - lam)``.
        """
        g = self.grid
        r, w = g.nodes, g.weights
        dens = np.abs(self.states) ** 2
        vals = np.einsum("kti,i->kt", dens, w / r ** 2)
        lam = g.lam
        for k, nu in enumerate(self.nus):
            expo = 2.0 * (nu - lam) + g.n - 2.0
            vals[k] += dens[k, :, 0] * r[0] ** (g.n - 2) / expo
        return vals

    def hardy_sq(self) -> np.ndarray:
        """``||Omega^-1 u(t)||^2`` (channels are orthogonal)."""
        return self.channel_hardy_sq().sum(axis=0)

    def physical_mass(self) -> np.ndarray:
        """``||u(t)||_{L^2}`` by quadrature on the evaluation grid."""
        return np.sqrt(np.einsum("kti,i->t", np.abs(self.states) ** 2, self.grid.weights))

    def synthesize(self, t_index: int) -> np.ndarray:
        """``u(t, r_i, x_a)`` on the radial grid times the angular nodes."""
        return np.einsum("ki,ka->ia", self.states[:, t_index], self.data.angular_values)

    def lq_norm(self, q: float, t_index: int) -> float:
        """``||u(t)||_{L^q(R^n)}``; ``q = inf`` returns the grid maximum."""
        U = np.abs(self.synthesize(t_index))
        if math.isinf(q):
            return float(U.max())
        val = self.grid.weights @ (U ** q) @ self.data.angular_weights
        return float(val ** (1.0 / q))

    def with_multiplier(self, sigma: float) -> "EvolutionTrace":
        """Trace of ``P^(sigma/2) u`` (spectral traces only)."""
        if sigma == 0:
            return self
        if self._spectral is None:
            raise PreconditionError("fractional derivatives need a spectral trace")
        sp = self._spectral
        states = _spectral_synthesis(sp, self.data, self.times, self.grid, self.equation,
                                     sigma, sp["config"])
        return EvolutionTrace(self.equation, self.method, self.times, self.grid, states,
                              self.data, self.mass, self.energy, self.delta_sq,
                              dict(self.info, multiplier=sigma), self._spectral)

    def to_csv(self) -> str:
        """Rows ``t, mass, energy, hardy_sq`` (energy empty for Schrödinger)."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "mass", "energy", "hardy_sq"])
        hs = self.hardy_sq()
        for m, t in enumerate(self.times):
            e = "" if self.energy is None else repr(float(self.energy[m]))
            wr.writerow([repr(float(t)), repr(float(self.mass[m])), e, repr(float(hs[m]))])
        return buf.getvalue()


def _time_samples(T: float, dt: float) -> np.ndarray:
    if not (T > 0 and dt > 0) or not math.isfinite(T):
        raise PreconditionError("need T > 0 and dt > 0")
    M = int(round(T / dt))
    if M < 2 or abs(M * dt - T) > 1e-9 * T:
        raise PreconditionError("T must be a multiple of dt with at least two steps")
    if M % 2:
        raise PreconditionError("T / dt must be even (composite Simpson in time)")
    return np.linspace(0.0, T, M + 1)


def _check_potential(V: Potential, data: CauchyData) -> float:
    rep = assumption_report(V)
    if not rep.passed:
        raise AssumptionViolation(f"potential {V.describe()} fails the spectral assumptions")
    if data.potential != V.describe():
        raise PreconditionError("Cauchy data were split for a different potential")
    return rep.delta_sq


def _as_data(V: Potential, f, g, config: EvolutionConfig) -> CauchyData:
    if isinstance(f, CauchyData):
        if g is not None:
            raise PreconditionError("pass g through axisymmetric_data when f is CauchyData")
        return f
    return axisymmetric_data(V, f, g, config=config)


# ---------------------------------------------------------------------------
# Hankel-spectral propagation
# ---------------------------------------------------------------------------

def _spectral_setup(data: CauchyData, T: float, equation: str, config: EvolutionConfig,
                    eval_grid: Optional[RadialGrid]) -> tuple[dict, RadialGrid]:
    if not data.band_limited:
        raise ResolutionError("data are not band-limited at the input resolution; "
                              "refine the input grid or use a grid stepper")
    rc, rd = data.rho_cut, data.r_data
    if equation == "schrodinger":
        R_e = rd + 2.0 * T * rc
        freq_t = 2.0 * T * rc
    else:
        R_e = rd + T + 4.0 * math.pi / rc
        freq_t = T
    if eval_grid is None:
        r_lo = config.r_lo_factor * rd
        if equation == "schrodinger":
            N = int(math.ceil(math.log(R_e / r_lo) / config.eval_log_step)) + 1
            eval_grid = make_log_grid(r_lo, R_e, max(N, 64), data.n)
        else:
            eval_grid = make_composite_grid(r_lo, R_e, 0.5 * math.pi / rc,
                                            config.eval_log_step, data.n)
    R = max(R_e, eval_grid.rmax)
    over = config.oversample if equation == "schrodinger" else config.wave_oversample
    drho = math.pi / (over * (R + freq_t))
    Nrho = max(64, int(math.ceil(rc / drho)))
    rho = make_uniform_grid(rc, Nrho, data.n)
    if config.rho_rule == "trapezoid":
        rho = RadialGrid(rho.nodes, (rc / Nrho) * rho.nodes ** (data.n - 1), data.n, "uniform")
    elif config.rho_rule != "gregory":
        raise PreconditionError(f"unknown rho rule {config.rho_rule!r}")
    fh = np.array([_transform(np.asarray(c.f.values), data.grid, c.nu, rho.nodes)
                   for c in data.channels])
    gh = None
    if data.has_velocity:
        gh = np.array([np.zeros(rho.size) if c.g is None else
                       _transform(np.asarray(c.g.values), data.grid, c.nu, rho.nodes)
                       for c in data.channels])
    return {"rho": rho, "fhat": fh, "ghat": gh, "config": config}, eval_grid


def _coefficients(sp: dict, k: int, t: np.ndarray, equation: str, sigma: float,
                  velocity: bool = False) -> np.ndarray:
    rho = sp["rho"].nodes
    w = sp["rho"].weights * (rho ** sigma if sigma else 1.0)
    fh = sp["fhat"][k]
    tt = t[None, :]
    rr = rho[:, None]
    if equation == "schrodinger":
        return (w * fh)[:, None] * np.exp(-1j * tt * rr ** 2)
    gh = sp["ghat"][k] if sp["ghat"] is not None else np.zeros_like(fh)
    c, s = np.cos(tt * rr), np.sin(tt * rr)
    if velocity:
        return w[:, None] * (-rr * s * fh[:, None] + c * gh[:, None])
    return w[:, None] * (c * fh[:, None] + s / rr * gh[:, None])


def _spectral_synthesis(sp: dict, data: CauchyData, times: np.ndarray, grid: RadialGrid,
                        equation: str, sigma: float, config: EvolutionConfig) -> np.ndarray:
    rho = sp["rho"].nodes
    K = len(data.channels)
    out = np.empty((K, times.size, grid.size), dtype=complex)
    for k, ch in enumerate(data.channels):
        for i0 in range(0, grid.size, config.row_chunk):
            rows = slice(i0, min(i0 + config.row_chunk, grid.size))
            ker = _hankel_fast(ch.nu, grid.lam, rho, grid.nodes[rows])
            for t0 in range(0, times.size, config.time_chunk):
                tsl = slice(t0, min(t0 + config.time_chunk, times.size))
                C = _coefficients(sp, k, times[tsl], equation, sigma)
                if np.iscomplexobj(C):
                    # one contiguous real GEMM (strided .real views bypass BLAS)
                    nc = C.shape[1]
                    prod = ker @ np.concatenate([C.real, C.imag], axis=1)
                    blk = prod[:, :nc] + 1j * prod[:, nc:]
                else:
                    blk = ker @ np.ascontiguousarray(C)
                out[k, tsl, rows] = blk.T
    return out


def _spectral_invariants(sp: dict, times: np.ndarray, equation: str) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Mass (and wave energy) of the propagated spectral state at each time."""
    rho = sp["rho"].nodes
    w = sp["rho"].weights
    K = sp["fhat"].shape[0]
    mass = np.zeros(times.size)
    energy = None if equation == "schrodinger" else np.zeros(times.size)
    for k in range(K):
        for t0 in range(0, times.size, 256):
            t = times[t0:t0 + 256]
            if equation == "schrodinger":
                C = sp["fhat"][k][:, None] * np.exp(-1j * t[None, :] * rho[:, None] ** 2)
                mass[t0:t0 + 256] += w @ np.abs(C) ** 2
            else:
                one = {"rho": sp["rho"], "fhat": sp["fhat"], "ghat": sp["ghat"]}
                U = _coefficients(one, k, t, equation, 0.0) / w[:, None]
                Ut = _coefficients(one, k, t, equation, 0.0, velocity=True) / w[:, None]
                mass[t0:t0 + 256] += w @ np.abs(U) ** 2
                energy[t0:t0 + 256] += w @ (rho[:, None] ** 2 * np.abs(U) ** 2 + np.abs(Ut) ** 2)
    return np.sqrt(mass), energy


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------

def _resample(fv: RadialFunction, r: np.ndarray) -> np.ndarray:
    """Cubic spline in ``log r`` of ``fv`` at ``r``; zero outside its grid."""
    x = np.log(fv.grid.nodes)
    spline = CubicSpline(x, np.asarray(fv.values, dtype=complex))
    xr = np.log(r)
    inside = (xr >= x[0]) & (xr <= x[-1])
    out = np.zeros(r.size, dtype=complex)
    out[inside] = spline(xr[inside])
    return out


def _crank_nicolson(data: CauchyData, T: float, times: np.ndarray,
                    config: EvolutionConfig) -> tuple[RadialGrid, np.ndarray, np.ndarray]:
    n, lam = data.n, (data.n - 2) / 2.0
    r_lo = config.r_lo_factor * data.r_data
    R = data.r_data + 2.0 * T * data.rho_cut * 1.25
    N = int(math.ceil(math.log(R / r_lo) / config.cn_log_step)) + 1
    grid = make_log_grid(r_lo, R, max(N, 64), n)
    r, h = grid.nodes, grid.log_step
    sub = config.cn_substeps
    dt = (times[1] - times[0]) / sub
    Vr = data.V_radial
    K = len(data.channels)
    states = np.empty((K, times.size, r.size), dtype=complex)
    mass = np.zeros(times.size)
    W = r ** 2
    for k, ch in enumerate(data.channels):
        q = ch.nu ** 2 + (0.0 if Vr is None else r ** 2 * np.asarray(Vr(r), dtype=float))
        main = 2.0 / h ** 2 + q
        off = np.full(r.size - 1, -1.0 / h ** 2)
        L = sps_.diags([off, main, off], [-1, 0, 1], format="csc")
        Wm = sps_.diags(W, 0, format="csc")
        Aplus = (Wm + 0.5j * dt * L).tocsc()
        Aminus = (Wm - 0.5j * dt * L).tocsr()
        lu = spla.splu(Aplus)
        u0 = _resample(ch.f, r)
        phi = r ** lam * u0
        states[k, 0] = u0
        for m in range(1, times.size):
            for _ in range(sub):
                phi = lu.solve(Aminus @ phi)
            states[k, m] = phi / r ** lam
        # conserved discrete inner product sum h r^2 |phi|^2 = sum h r^n |u|^2
        mass += h * np.einsum("ti,i->t", np.abs(states[k]) ** 2, r ** n)
    return grid, states, np.sqrt(mass)


def _leapfrog(data: CauchyData, T: float, times: np.ndarray,
              config: EvolutionConfig) -> tuple[RadialGrid, np.ndarray, np.ndarray, np.ndarray]:
    n = data.n
    h = 2.0 * math.pi / (config.leapfrog_ppw * data.rho_cut)
    R = data.r_data + T + 4.0 * math.pi / data.rho_cut
    N = int(math.ceil(R / h))
    grid = make_uniform_grid(N * h, N, n)
    r = grid.nodes
    dts = times[1] - times[0]
    sub = int(math.ceil(dts / (config.leapfrog_cfl * h)))
    dt = dts / sub
    Vr = data.V_radial
    K = len(data.channels)
    states = np.empty((K, times.size, N), dtype=complex)
    mass = np.zeros(times.size)
    energy = np.zeros(times.size)
    pw = r ** ((n - 1) / 2.0)

    for k, ch in enumerate(data.channels):
        pot = (ch.nu ** 2 - 0.25) / r ** 2 + (0.0 if Vr is None else np.asarray(Vr(r), dtype=float))
        d = 2.0 / h ** 2 + pot
        e = -1.0 / h ** 2

        def Lv(v):
            out = d * v
            out[:-1] += e * v[1:]
            out[1:] += e * v[:-1]
            return out

        v0 = pw * _resample(ch.f, r)
        g0 = pw * _resample(ch.g, r) if ch.g is not None else np.zeros_like(v0)
        v_prev = v0.astype(complex)
        v = v_prev + dt * g0 - 0.5 * dt * dt * Lv(v_prev)
        states[k, 0] = v0 / pw
        mass[0] += h * np.sum(np.abs(v0) ** 2)
        # staggered energy E^{1/2}
        energy[0] += h * (np.sum(np.abs((v - v_prev) / dt) ** 2) + np.real(np.vdot(v, Lv(v_prev))))
        step = 1
        for m in range(1, times.size):
            while step < m * sub:
                v_next = 2.0 * v - v_prev - dt * dt * Lv(v)
                v_prev, v = v, v_next
                step += 1
            # v holds the solution at step m*sub; advance once more for E^{+1/2}
            v_next = 2.0 * v - v_prev - dt * dt * Lv(v)
            states[k, m] = v / pw
            mass[m] += h * np.sum(np.abs(v) ** 2)
            energy[m] += h * (np.sum(np.abs((v_next - v) / dt) ** 2) + np.real(np.vdot(v_next, Lv(v))))
            v_prev, v = v, v_next
            step += 1
    return grid, states, np.sqrt(mass), energy


# ---------------------------------------------------------------------------
# Public propagators
# ---------------------------------------------------------------------------

def evolve_schrodinger(V: Potential, f, T: float = 50.0, dt: float = 0.1,
                       method: str = "hankel_spectral", *, eval_grid: Optional[RadialGrid] = None,
                       config: EvolutionConfig = DEFAULT_CONFIG) -> EvolutionTrace:
    """Solve ``i u_t + Laplace u - V u = 0``, ``u(0) = f``, on ``[0, T]``.

    Parameters
    ----------
    V : Potential
        Admissible potential.  ``hankel_spectral`` needs a homogeneous
        one; ``crank_nicolson`` also accepts radial profiles.
    f : callable or CauchyData
        Radial data ``f(|x|)`` or an existing channel split.
    T, dt : float
        Final time and sample spacing (``T / dt`` even).
    method : {"hankel_spectral", "crank_nicolson"}
    eval_grid : RadialGrid, optional
        Where the spectral solution is synthesized.
    """
    if method not in ("hankel_spectral", "crank_nicolson"):
        raise PreconditionError(f"unknown Schrödinger method {method!r}")
    times = _time_samples(T, dt)
    data = _as_data(V, f, None, config)
    d2 = _check_potential(V, data)
    if method == "hankel_spectral":
        if not V.is_homogeneous:
            raise PreconditionError("hankel_spectral needs a homogeneous potential")
        sp, grid = _spectral_setup(data, T, "schrodinger", config, eval_grid)
        states = _spectral_synthesis(sp, data, times, grid, "schrodinger", 0.0, config)
        mass, _ = _spectral_invariants(sp, times, "schrodinger")
        info = {"rho_nodes": sp["rho"].size, "rho_cut": data.rho_cut, "eval": grid.describe()}
        return EvolutionTrace("schrodinger", method, times, grid, states, data, mass, None,
                              d2, info, sp)
    grid, states, mass = _crank_nicolson(data, T, times, config)
    info = {"substeps": config.cn_substeps, "eval": grid.describe()}
    return EvolutionTrace("schrodinger", method, times, grid, states, data, mass, None, d2, info)


def evolve_wave(V: Potential, f, g: Optional[Callable] = None, T: float = 50.0, dt: float = 0.1,
                method: str = "hankel_spectral", *, eval_grid: Optional[RadialGrid] = None,
                config: EvolutionConfig = DEFAULT_CONFIG) -> EvolutionTrace:
    """Solve ``-u_tt + Laplace u - V u = 0``, ``u(0) = f``, ``u_t(0) = g``.

    ``hankel_spectral`` (homogeneous ``V``) is exact in time;
    ``leapfrog`` (any channel-decomposable ``V``) is second order with a
    conserved staggered energy.
    """
    if method not in ("hankel_spectral", "leapfrog"):
        raise PreconditionError(f"unknown wave method {method!r}")
    times = _time_samples(T, dt)
    data = f if isinstance(f, CauchyData) else axisymmetric_data(V, f, g, config=config)
    d2 = _check_potential(V, data)
    if method == "hankel_spectral":
        if not V.is_homogeneous:
            raise PreconditionError("hankel_spectral needs a homogeneous potential")
        sp, grid = _spectral_setup(data, T, "wave", config, eval_grid)
        states = _spectral_synthesis(sp, data, times, grid, "wave", 0.0, config)
        mass, energy = _spectral_invariants(sp, times, "wave")
        info = {"rho_nodes": sp["rho"].size, "rho_cut": data.rho_cut, "eval": grid.describe()}
        return EvolutionTrace("wave", method, times, grid, states, data, mass, energy, d2, info, sp)
    grid, states, mass, energy = _leapfrog(data, T, times, config)
    return EvolutionTrace("wave", method, times, grid, states, data, mass, energy, d2,
                          {"eval": grid.describe()})


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def _simpson_cumulative(y: np.ndarray, dt: float) -> np.ndarray:
    """Composite Simpson integrals over ``[0, t_{2j}]`` for every even index."""
    pairs = dt / 3.0 * (y[:-2:2] + 4.0 * y[1:-1:2] + y[2::2])
    return np.concatenate([[0.0], np.cumsum(pairs)])


@dataclass(frozen=True)
class SmoothingResult:
    """``||Omega^-1 u||_{L^2([0,T] x R^n)}`` and its ratio to the data norm."""

    value: float
    data_norm: float
    ratio: float
    bound: float
    T: float
    tail_estimate: float
    cumulative: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def passed(self) -> bool:
        return bool(self.ratio <= self.bound) if math.isfinite(self.bound) else True

    def to_dict(self) -> dict:
        return {"value": self.value, "data_norm": self.data_norm, "ratio": self.ratio,
                "bound": self.bound, "T": self.T, "tail_estimate": self.tail_estimate,
                "passed": self.passed}


def smoothing_norm(trace: EvolutionTrace, equation: Optional[str] = None) -> SmoothingResult:
    """Kato-Yajima (Schrödinger) or Morawetz (wave) space-time norm of ``|x|^-1 u``.

    Schrödinger ratios use ``||f||_{L^2}`` and the bound
    ``1 / (delta^2 sqrt(2 pi))``; wave ratios use
    ``||f||_{H^1/2} + ||g||_{H^-1/2}`` (free basis) and carry no explicit
    bound.  ``tail_estimate`` extrapolates the ``t^-2`` decay of the
    integrand beyond ``T``.
    """
    eq = trace.equation if equation is None else equation
    if eq != trace.equation:
        raise PreconditionError("equation does not match the trace")
    y = trace.hardy_sq()
    cum = _simpson_cumulative(y, trace.dt)
    val = math.sqrt(max(cum[-1], 0.0))
    sob = trace.data.sobolev_norms
    if eq == "schrodinger":
        dn = sob["L2"]
        bound = 1.0 / (trace.delta_sq * math.sqrt(2.0 * math.pi))
    else:
        dn = sob["H1/2"] + sob["H-1/2"]
        bound = math.inf
    tail = float(trace.T * y[-1])
    ratio = val / dn if dn > 0 else 0.0
    return SmoothingResult(val, dn, ratio, bound, trace.T, tail, np.sqrt(np.maximum(cum, 0.0)))


@dataclass(frozen=True)
class StrichartzResult:
    value: float
    data_norm: float
    ratio: float
    query: StrichartzQuery
    sup_flag: bool
    per_time: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {"p": self.query.p, "q": self.query.q, "equation": self.query.equation,
                "sigma_gap": self.query.sigma_gap, "value": self.value,
                "data_norm": self.data_norm, "ratio": self.ratio, "sup_flag": self.sup_flag}


def strichartz_norm(trace: EvolutionTrace, query: StrichartzQuery) -> StrichartzResult:
    """``||u||_{L^p([0,T]; L^q(R^n))}`` (wave: of ``P^(sigma/2) u``) and its data ratio.

    The spatial norm synthesizes ``u`` on the radial grid times the zonal
    angular rule before taking ``|u|^q``.  ``q = inf`` falls back to the grid
    maximum and sets ``sup_flag``.
    """
    if query.equation != trace.equation:
        raise PreconditionError("query equation does not match the trace")
    if query.n != trace.data.n:
        raise PreconditionError("query dimension does not match the trace")
    tr = trace.with_multiplier(query.sigma_gap) if trace.equation == "wave" else trace
    per = np.array([tr.lq_norm(query.q, m) for m in range(trace.times.size)])
    if math.isinf(query.p):
        val = float(per.max())
    else:
        val = float(_simpson_cumulative(per ** query.p, trace.dt)[-1] ** (1.0 / query.p))
    sob = trace.data.sobolev_norms
    dn = sob["L2"] if trace.equation == "schrodinger" else sob["H1/2"] + sob["H-1/2"]
    return StrichartzResult(val, dn, val / dn if dn > 0 else 0.0, query,
                            math.isinf(query.q), per)


# ---------------------------------------------------------------------------
# Closed-form references
# ---------------------------------------------------------------------------

def free_gaussian_solution(t: float, r, n: int = 3) -> np.ndarray:
    """Free Schrödinger solution with ``u(0) = exp(-r^2 / 2)`` on ``R^n``."""
    a = 1.0 + 2.0j * t
    return a ** (-n / 2.0) * np.exp(-np.asarray(r, dtype=float) ** 2 / (2.0 * a))


def free_wave_solution(t: float, r, F: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Free wave solution on ``R^3`` with ``u(0) = F(|x|)``, ``u_t(0) = 0``.

    ``r u`` solves the 1-d wave equation with odd extension, so
    ``u = [(r + t) F(|r + t|) + (r - t) F(|r - t|)] / (2 r)``.
    """
    r = np.asarray(r, dtype=float)
    a, b = r + t, r - t
    return (a * F(np.abs(a)) + b * F(np.abs(b))) / (2.0 * r)
