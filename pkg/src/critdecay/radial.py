"""Radial discretization, weighted norms, Hankel transforms and Mellin multipliers.

All radial integrals are taken against the measure ``r**(n-1) dr`` of
``R^n`` restricted to one spherical-harmonic channel.  The default mesh is
uniform in ``s = log r``; its quadrature weights are trapezoidal in ``s``
with Gregory end corrections, which keeps the rule positive while making
it exact to high order for the smooth, exponentially varying integrands
that arise on a truncated log grid.

The discrete Hankel transform

    (H_nu f)(rho) = int_0^inf (r rho)^(-lam) J_nu(r rho) f(r) r^(n-1) dr,

with ``lam = (n - 2) / 2``, is evaluated by dense quadrature on the grid.
On the same grid for input and output it is (numerically) an involution,
and ``A_nu^(sigma/2) = H_nu Omega^sigma H_nu`` gives spectral powers of the
channel operator ``A_nu = -d^2/dr^2 - (n-1)/r d/dr + (nu^2 - lam^2)/r^2``.
"""

from __future__ import annotations

import functools
import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.special as sps

from .exceptions import PoleProximityError, PreconditionError, ResolutionError

__all__ = [
    "RadialGrid",
    "RadialFunction",
    "HardyResult",
    "make_log_grid",
    "make_uniform_grid",
    "make_composite_grid",
    "make_c1_grid",
    "gregory_end_weights",
    "radial_derivative",
    "weighted_l2_norm",
    "hardy_ratio",
    "bessel_kernel",
    "hankel_transform",
    "hankel_matrix",
    "fractional_power_apply",
    "channel_operator_tridiagonal",
    "channel_eigendecomposition",
    "fractional_power_matrix",
    "mellin_multiplier",
    "mellin_multiplier_O",
    "mellin_rational_modulus",
    "mellin_sup_scan",
    "MAX_PHASE_STEP",
]

#: Largest admissible phase advance ``spacing * rho_max`` of the Bessel kernel
#: between neighbouring nodes on the support of the data (radians).  Below the
#: Nyquist value ``pi`` the quadrature converges exponentially for analytic data.
MAX_PHASE_STEP = 2.0

#: Default number of Gregory end corrections on each side of a panel.
GREGORY_ORDER = 8


# ---------------------------------------------------------------------------
# Quadrature weights
# ---------------------------------------------------------------------------

def _bernoulli(k: int) -> Fraction:
    b = [Fraction(1)]
    for m in range(1, k + 1):
        b.append(-sum(comb(m + 1, j) * b[j] for j in range(m)) / (m + 1))
    return b[k]


@functools.lru_cache(maxsize=None)
def gregory_end_weights(m: int) -> tuple[float, ...]:
    """Corrected trapezoid weights for the first ``m`` nodes of a panel.

    The corrections ``c_i`` are chosen so that the end error of the
    Euler-Maclaurin expansion vanishes for polynomials of degree ``< m``:
    ``sum_i c_i i**j = B_{j+1}/(j+1)`` for odd ``j`` and ``0`` for even ``j``.
    The linear system is solved in exact rational arithmetic.

    Returns
    -------
    tuple of float
        Weights (in units of the step) for nodes ``0..m-1``; the mirror
        image applies at the far end of the panel.
    """
    if m < 1:
        raise PreconditionError("need at least one end node")
    a = [[Fraction(i) ** j for i in range(m)] + [
        _bernoulli(j + 1) / (j + 1) if j % 2 == 1 else Fraction(0)]
        for j in range(m)]
    # Gauss-Jordan elimination, exact.
    for col in range(m):
        piv = next(r for r in range(col, m) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        p = a[col][col]
        a[col] = [x / p for x in a[col]]
        for r in range(m):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    corr = [a[i][m] for i in range(m)]
    base = [Fraction(1, 2)] + [Fraction(1)] * (m - 1)
    return tuple(float(b + c) for b, c in zip(base, corr))


def _panel_weights(npts: int, h: float, order: int = GREGORY_ORDER) -> np.ndarray:
    if npts < 2:
        raise PreconditionError("a quadrature panel needs at least two nodes")
    m = min(order, npts // 2)
    end = np.asarray(gregory_end_weights(m))
    w = np.full(npts, h)
    w[:m] = h * end
    w[npts - m:] = h * end[::-1]
    return w


# ---------------------------------------------------------------------------
# Grid and function containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Radial mesh with quadrature weights for ``int_0^inf (.) r^(n-1) dr``.

    Attributes
    ----------
    nodes : ndarray
        Ascending positive radii.
    weights : ndarray
        Positive quadrature weights including the ``r**(n-1)`` Jacobian.
    n : int
        Spatial dimension.
    kind : str
        ``"log"`` (uniform in ``log r``), ``"uniform"`` or ``"composite"``.
    log_step : float or None
        Step in ``log r`` for log grids.
    """

    nodes: np.ndarray
    weights: np.ndarray
    n: int
    kind: str = "log"
    log_step: Optional[float] = None
    _fingerprint: str = field(init=False, repr=False, default="")

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise PreconditionError("nodes and weights must be 1-d arrays of equal length")
        if nodes[0] <= 0 or np.any(np.diff(nodes) <= 0):
            raise PreconditionError("nodes must be positive and strictly ascending")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise PreconditionError("quadrature weights must be positive and finite")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        digest = hashlib.sha1(nodes.tobytes() + weights.tobytes()
                              + str(self.n).encode()).hexdigest()
        object.__setattr__(self, "_fingerprint", digest)

    @property
    def rmin(self) -> float:
        return float(self.nodes[0])

    @property
    def rmax(self) -> float:
        return float(self.nodes[-1])

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def lam(self) -> float:
        return (self.n - 2) / 2.0

    @property
    def line_weights(self) -> np.ndarray:
        """Weights for the one-dimensional measure ``dr``."""
        return self.weights / self.nodes ** (self.n - 1)

    @property
    def spacing(self) -> np.ndarray:
        """Local node spacing (centered differences)."""
        return np.gradient(self.nodes)

    @property
    def fingerprint(self) -> str:
        return self._fingerprint

    def integrate(self, values) -> complex | float:
        """Quadrature of ``values`` against ``r**(n-1) dr``."""
        return np.sum(self.weights * np.asarray(values))

    def with_dimension(self, n: int) -> "RadialGrid":
        """Same nodes, weights rescaled to the Jacobian of dimension ``n``."""
        w = self.weights * self.nodes ** (n - self.n)
        return RadialGrid(self.nodes, w, n, self.kind, self.log_step)

    def describe(self) -> dict:
        return {"kind": self.kind, "rmin": self.rmin, "rmax": self.rmax,
                "N": self.size, "n": self.n}


@dataclass(frozen=True, eq=False)
class RadialFunction:
    """Samples of a radial profile (one channel coefficient) on a grid."""

    grid: RadialGrid
    values: np.ndarray
    channel: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.nodes.shape:
            raise PreconditionError("values must align with grid nodes")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("radial function has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: RadialGrid, fn: Callable[[np.ndarray], np.ndarray],
                      channel: Optional[float] = None) -> "RadialFunction":
        return cls(grid, np.asarray(fn(grid.nodes)), channel)

    def norm(self, weight_power: float = 0.0) -> float:
        return weighted_l2_norm(self, weight_power)


# ---------------------------------------------------------------------------
# Grid constructors
# ---------------------------------------------------------------------------

def make_log_grid(rmin: float = 1e-3, rmax: float = 1e3, N: int = 4096,
                  n: int = 3) -> RadialGrid:
    """Logarithmically spaced grid on ``[rmin, rmax]``.

    Parameters
    ----------
    rmin, rmax : float
        Truncation radii, ``0 < rmin < rmax``.
    N : int
        Number of nodes (at least 64).
    n : int
        Spatial dimension; the weights include ``r**(n-1)``.

    Returns
    -------
    RadialGrid
        Nodes ``exp(s_i)`` with ``s_i`` equispaced; weights are
        Gregory-corrected trapezoid weights in ``s`` times ``r**n``.

    Examples
    --------
    >>> g = make_log_grid(1.0, 2.0, 64, 1)
    >>> bool(abs(g.weights.sum() - 1.0) < 1e-10)
    True
    """
    if not (np.isfinite(rmin) and np.isfinite(rmax)):
        raise PreconditionError("grid bounds must be finite")
    if rmin <= 0:
        raise PreconditionError(f"rmin must be positive, got {rmin}")
    if rmax <= rmin:
        raise PreconditionError(f"empty interval [{rmin}, {rmax}]")
    if N < 64:
        raise PreconditionError(f"log grids need N >= 64, got {N}")
    if n < 1:
        raise PreconditionError("dimension must be positive")
    s = np.linspace(np.log(rmin), np.log(rmax), N)
    h = s[1] - s[0]
    r = np.exp(s)
    r[0], r[-1] = rmin, rmax
    w = _panel_weights(N, h) * r ** n
    return RadialGrid(r, w, n, "log", float(h))


def make_uniform_grid(rmax: float, N: int, n: int = 3) -> RadialGrid:
    """Origin-anchored uniform grid ``h, 2h, ..., N h`` with ``h = rmax / N``.

    The weights integrate over ``[0, rmax]``: the Gregory rule is built on
    the ``N + 1`` points including the origin and the origin node is
    dropped, which is exact whenever the integrand (including
    ``r**(n-1)``) vanishes at ``r = 0``.  Used for spectral (``rho``) grids.
    """
    if rmax <= 0 or N < 16:
        raise PreconditionError("uniform grid needs rmax > 0 and N >= 16")
    if n < 2:
        raise PreconditionError("origin-anchored grids need n >= 2")
    h = rmax / N
    nodes = h * np.arange(1, N + 1)
    w = _panel_weights(N + 1, h)[1:] * nodes ** (n - 1)
    return RadialGrid(nodes, w, n, "uniform")


def make_composite_grid(rmin: float, rmax: float, h_far: float, log_step: float,
                        n: int = 3) -> RadialGrid:
    """Log-spaced near the origin, uniform (step ``h_far``) far out.

    The switch radius is ``h_far / log_step`` so the spacing is continuous.
    Each panel carries its own Gregory-corrected weights; the shared node
    receives the sum of both panel contributions.
    """
    if not (0 < rmin < rmax) or h_far <= 0 or log_step <= 0:
        raise PreconditionError("invalid composite grid parameters")
    r_c = h_far / log_step
    if r_c >= rmax:
        return make_log_grid(rmin, rmax, max(64, int(np.ceil(np.log(rmax / rmin) / log_step)) + 1), n)
    if r_c <= rmin:
        nn = int(np.ceil((rmax - rmin) / h_far)) + 1
        nodes = rmin + h_far * np.arange(nn)
        w = _panel_weights(nn, h_far) * nodes ** (n - 1)
        return RadialGrid(nodes, w, n, "composite")
    k = int(np.ceil(np.log(r_c / rmin) / log_step))
    s = np.log(r_c) - log_step * np.arange(k, -1, -1)
    r_log = np.exp(s)
    w_log = _panel_weights(k + 1, log_step) * r_log ** n
    m = int(np.ceil((rmax - r_c) / h_far))
    r_uni = r_c + h_far * np.arange(m + 1)
    w_uni = _panel_weights(m + 1, h_far) * r_uni ** (n - 1)
    nodes = np.concatenate([r_log, r_uni[1:]])
    weights = np.concatenate([w_log[:-1], [w_log[-1] + w_uni[0]], w_uni[1:]])
    return RadialGrid(nodes, weights, n, "composite")


def make_c1_grid(N: int = 1024, n: int = 3, log_step: float = 40.0 / 1023) -> RadialGrid:
    """Log grid centred at ``r = 1`` whose log-range grows with ``N``.

    The step in ``log r`` is fixed, so refining ``N`` enlarges the window
    ``[e^(-L/2), e^(L/2)]`` with ``L = (N - 1) * log_step``; the dilation
    invariant operators of the Mellin analysis then see a longer stretch of
    the half-line as ``N`` grows.
    """
    half = 0.5 * (N - 1) * log_step
    return make_log_grid(float(np.exp(-half)), float(np.exp(half)), N, n)


# ---------------------------------------------------------------------------
# Norms and derivatives
# ---------------------------------------------------------------------------

def radial_derivative(f: RadialFunction) -> np.ndarray:
    """Numerical ``d f / d r``.

    Log grids use fourth-order differences in ``s = log r``; other grids
    fall back to second-order non-uniform differences.
    """
    v = np.asarray(f.values)
    g = f.grid
    if g.kind == "log" and v.size >= 5:
        h = g.log_step
        d = np.empty_like(v, dtype=np.result_type(v, float))
        d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
        d[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
        d[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
        d[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)
        d[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * h)
        return d / g.nodes
    return np.gradient(v, g.nodes, edge_order=2)


def weighted_l2_norm(f: RadialFunction, weight_power: float = 0.0) -> float:
    """Return ``||Omega^s f||`` over the radial measure ``r^(n-1) dr``.

    Parameters
    ----------
    f : RadialFunction
    weight_power : float
        The exponent ``s`` of ``Omega^s = |x|^s``.

    Examples
    --------
    >>> g = make_log_grid(1e-10, 60.0, 4096, 3)
    >>> f = RadialFunction.from_callable(g, lambda r: np.exp(-r))
    >>> round(weighted_l2_norm(f, -1.0), 6)
    0.707107
    """
    v = np.asarray(f.values)
    if not np.all(np.isfinite(v)):
        raise PreconditionError("non-finite input")
    r = f.grid.nodes
    val = np.sum(f.grid.weights * np.abs(v) ** 2 * r ** (2.0 * weight_power))
    return float(np.sqrt(val))


@dataclass(frozen=True)
class HardyResult:
    """Outcome of a Hardy-ratio evaluation."""

    ratio: float
    bound: float
    precondition_ok: bool
    endpoint_decay: float
    passed: bool


def hardy_ratio(u: RadialFunction, n: Optional[int] = None,
                du: Optional[np.ndarray] = None, decay_tol: float = 1e-8) -> HardyResult:
    """Hardy quotient ``||Omega^-1 u||^2 / ||d_r u||^2`` against ``(2/(n-2))^2``.

    Parameters
    ----------
    u : RadialFunction
        Radial profile.
    n : int, optional
        Dimension; defaults to the grid's.
    du : array_like, optional
        Exact radial derivative on the nodes.  When absent a finite
        difference derivative is used.
    decay_tol : float
        Boundary-decay threshold.  Both integrands, written against the
        scale-invariant measure ``d(log r)``, must fall below
        ``decay_tol`` times their maximum at the first and last node;
        otherwise the truncated integrals do not represent the half-line
        quotient and the result is flagged.

    Returns
    -------
    HardyResult
    """
    grid = u.grid if n is None or n == u.grid.n else u.grid.with_dimension(n)
    n = grid.n
    if n <= 2:
        raise PreconditionError("Hardy's inequality in this form needs n >= 3")
    v = np.asarray(u.values)
    d = radial_derivative(RadialFunction(grid, v)) if du is None else np.asarray(du)
    r = grid.nodes
    a = np.abs(v) ** 2 * r ** (n - 2)
    b = np.abs(d) ** 2 * r ** n
    decay = 0.0
    for arr in (a, b):
        peak = np.max(arr)
        if peak > 0:
            decay = max(decay, float(max(arr[0], arr[-1]) / peak))
    num = float(np.sum(grid.weights * np.abs(v) ** 2 / r ** 2))
    den = float(np.sum(grid.weights * np.abs(d) ** 2))
    if den == 0.0:
        raise PreconditionError("zero derivative norm; quotient undefined")
    ratio = num / den
    bound = (2.0 / (n - 2)) ** 2
    ok = decay <= decay_tol
    return HardyResult(ratio, bound, ok, decay, ok and ratio <= bound)


# ---------------------------------------------------------------------------
# Hankel transform
# ---------------------------------------------------------------------------

def bessel_kernel(nu: float, lam: float, r: np.ndarray, rho: np.ndarray,
                  method: str = "jv") -> np.ndarray:
    """Kernel matrix ``K[i, j] = (rho_i r_j)^(-lam) J_nu(rho_i r_j)``.

    ``method="half_integer"`` evaluates ``J_{l+1/2}`` through spherical
    Bessel functions, ``J_{l+1/2}(x) = sqrt(2x/pi) j_l(x)``; it exists as an
    independent cross-check of the general routine.
    """
    x = np.multiply.outer(np.asarray(rho, float), np.asarray(r, float))
    if method == "jv":
        j = sps.jv(nu, x)
    elif method == "half_integer":
        l = nu - 0.5
        if l < 0 or abs(l - round(l)) > 1e-14:
            raise PreconditionError("half_integer method needs nu = l + 1/2")
        j = np.sqrt(2.0 * x / np.pi) * sps.spherical_jn(int(round(l)), x)
    else:
        raise PreconditionError(f"unknown Bessel method {method!r}")
    return x ** (-lam) * j


_KERNEL_CACHE: "OrderedDict[tuple, np.ndarray]" = OrderedDict()
_KERNEL_LOCK = threading.Lock()
_KERNEL_CACHE_SIZE = 6


def hankel_matrix(nu: float, grid: RadialGrid, out_grid: Optional[RadialGrid] = None,
                  method: str = "jv") -> np.ndarray:
    """Cached Bessel kernel between ``grid`` (input) and ``out_grid``."""
    out_grid = grid if out_grid is None else out_grid
    key = (float(nu), method, grid.fingerprint, out_grid.fingerprint, grid.lam)
    with _KERNEL_LOCK:
        k = _KERNEL_CACHE.get(key)
        if k is not None:
            _KERNEL_CACHE.move_to_end(key)
            return k
    k = bessel_kernel(nu, grid.lam, grid.nodes, out_grid.nodes, method)
    k.setflags(write=False)
    with _KERNEL_LOCK:
        _KERNEL_CACHE[key] = k
        while len(_KERNEL_CACHE) > _KERNEL_CACHE_SIZE:
            _KERNEL_CACHE.popitem(last=False)
    return k


def _check_resolution(values: np.ndarray, grid: RadialGrid, rho_max: float) -> None:
    mag = np.abs(values) * grid.weights
    peak = mag.max(initial=0.0)
    if peak == 0.0:
        return
    support = mag > 1e-14 * peak
    step = np.max(grid.spacing[support]) * rho_max
    if step > MAX_PHASE_STEP:
        raise ResolutionError(
            f"node spacing too coarse: spacing*rho_max = {step:.3g} exceeds "
            f"{MAX_PHASE_STEP} on the data support; refine the grid or lower rho_max")


def hankel_transform(f: RadialFunction, nu: float, out_grid: Optional[RadialGrid] = None,
                     method: str = "jv", check: bool = True) -> RadialFunction:
    """Discrete Hankel transform of order ``nu``.

    Parameters
    ----------
    f : RadialFunction
        Input samples.
    nu : float
        Bessel order, ``nu >= 0``.
    out_grid : RadialGrid, optional
        Output (``rho``) grid; the input grid by default, which makes the
        discrete transform an approximate involution.
    method : {"jv", "half_integer"}
        Kernel evaluation route.
    check : bool
        Verify the oscillation resolution before transforming.

    Raises
    ------
    ResolutionError
        When the kernel oscillation is not resolved on the data support.
    """
    if nu < 0:
        raise PreconditionError("Bessel order must be non-negative")
    out_grid = f.grid if out_grid is None else out_grid
    if out_grid.n != f.grid.n:
        raise PreconditionError("input and output grids must share the dimension")
    v = np.asarray(f.values)
    if check:
        _check_resolution(v, f.grid, out_grid.rmax)
    if not np.any(v):
        return RadialFunction(out_grid, np.zeros(out_grid.size, dtype=v.dtype), nu)
    k = hankel_matrix(nu, f.grid, out_grid, method)
    return RadialFunction(out_grid, k @ (f.grid.weights * v), nu)


# ---------------------------------------------------------------------------
# Spectral powers of the channel operator
# ---------------------------------------------------------------------------

def channel_operator_tridiagonal(grid: RadialGrid, nu: float) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric tridiagonal discretization of ``A_nu`` on a log grid.

    In the unitary variable ``psi = r^(n/2) u`` (so that
    ``||u||^2 = int |psi|^2 d(log r)``) the channel operator reads
    ``r^-1 (-d_s^2 + nu^2) r^-1``; second-order differences in ``s`` with
    Dirichlet ends give the returned diagonal and off-diagonal.
    """
    if grid.kind != "log":
        raise PreconditionError("operator route requires a log grid")
    h = grid.log_step
    dinv = 1.0 / grid.nodes
    diag = (2.0 / h ** 2 + nu ** 2) * dinv ** 2
    off = (-1.0 / h ** 2) * dinv[:-1] * dinv[1:]
    return diag, off


_EIG_CACHE: "OrderedDict[tuple, tuple[np.ndarray, np.ndarray]]" = OrderedDict()
_EIG_LOCK = threading.Lock()


def channel_eigendecomposition(grid: RadialGrid, nu: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of :func:`channel_operator_tridiagonal` (cached).

    The matrix is strongly graded (entries scale like ``r^-2``); the
    implicit QL/QR driver ``stev`` is used because it resolves the small
    eigenvalues of such matrices reliably.
    """
    key = (grid.fingerprint, float(nu))
    with _EIG_LOCK:
        hit = _EIG_CACHE.get(key)
        if hit is not None:
            return hit
    d, e = channel_operator_tridiagonal(grid, nu)
    w, v = sla.eigh_tridiagonal(d, e, lapack_driver="stev")
    if np.any(w <= 0):
        raise PreconditionError("discrete channel operator is not positive definite")
    with _EIG_LOCK:
        _EIG_CACHE[key] = (w, v)
        while len(_EIG_CACHE) > 4:
            _EIG_CACHE.popitem(last=False)
    return w, v


def fractional_power_matrix(grid: RadialGrid, nu: float, sigma_power: float) -> np.ndarray:
    """Dense ``A_nu^(sigma/2)`` in the unitary ``psi`` coordinates."""
    w, v = channel_eigendecomposition(grid, nu)
    return (v * w ** (0.5 * sigma_power)) @ v.T


def fractional_power_apply(f: RadialFunction, nu: float, sigma_power: float,
                           method: str = "hankel") -> RadialFunction:
    """Apply ``A_nu^(sigma/2)`` to a channel profile.

    Parameters
    ----------
    f : RadialFunction
    nu : float
        Channel Bessel order.
    sigma_power : float
        The exponent ``sigma``; ``sigma = 2`` is the channel operator itself.
    method : {"hankel", "operator"}
        ``"hankel"`` evaluates ``H_nu Omega^sigma H_nu f`` by dense
        quadrature (the input grid must resolve the kernel, see
        :func:`hankel_transform`).  ``"operator"`` applies the spectral power
        of the finite-difference channel operator on a log grid.
    """
    if sigma_power == 0:
        return RadialFunction(f.grid, np.array(f.values, copy=True), nu)
    if method == "hankel":
        g = hankel_transform(f, nu)
        g = RadialFunction(g.grid, g.values * g.grid.nodes ** sigma_power, nu)
        return hankel_transform(g, nu, check=False)
    if method == "operator":
        r = f.grid.nodes
        psi = r ** (f.grid.n / 2.0) * f.values
        w, v = channel_eigendecomposition(f.grid, nu)
        out = v @ (w ** (0.5 * sigma_power) * (v.T @ psi))
        return RadialFunction(f.grid, out / r ** (f.grid.n / 2.0), nu)
    raise PreconditionError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Mellin multiplier
# ---------------------------------------------------------------------------

def _gamma_args_check(args: list[np.ndarray], tol: float = 1e-8) -> None:
    for a in args:
        a = np.asarray(a)
        near = np.round(a.real)
        bad = (near <= 0) & (np.abs(a - near) < tol)
        if np.any(bad):
            raise PoleProximityError("Gamma argument within 1e-8 of a non-positive integer")


def mellin_multiplier(z, nu: float, lam: float) -> np.ndarray:
    """Mellin symbol ``O(z)`` of ``Omega A^(-1/2) Omega^-1 A^(1/2)`` on a channel.

    ``O(z)`` is the product of Gamma-function ratios obtained by composing
    the Mellin images of ``H_nu`` and of powers of ``Omega``; it is
    evaluated through complex log-Gamma for stability at large ``|Im z|``.
    """
    z = np.asarray(z, dtype=complex)
    a1 = (nu + z - lam + 1) / 2
    a2 = (nu - z + lam + 1) / 2
    a3 = (nu - z + lam) / 2
    a4 = (nu + z - lam) / 2
    a5 = (nu - z + lam + 2) / 2
    a6 = (nu + z - lam + 2) / 2
    _gamma_args_check([a1, a2, a3, a4, a5, a6])
    lg = sps.loggamma
    return np.exp(2 * lg(a1) - 2 * lg(a2) + lg(a3) - lg(a4) + lg(a5) - lg(a6))


def mellin_multiplier_O(y, nu: float, lam: float) -> np.ndarray:
    """``O(lam + 1 + i y)`` on the Plancherel line.

    Parameters
    ----------
    y : float or array_like
    nu : float
        Channel order, must exceed 1.
    lam : float
        ``(n - 2) / 2``.
    """
    if nu <= 1:
        raise PreconditionError("the multiplier is bounded only for nu > 1")
    y = np.asarray(y, dtype=float)
    return mellin_multiplier(lam + 1 + 1j * y, nu, lam)


def mellin_rational_modulus(y, nu: float) -> np.ndarray:
    """``|(nu + i y)^2 / ((nu + i y)^2 - 1)|``, the closed modulus of ``O``."""
    w = (nu + 1j * np.asarray(y, dtype=float)) ** 2
    return np.abs(w / (w - 1))


@dataclass(frozen=True)
class MellinScan:
    nu: float
    y_at_max: float
    sup_modulus: float
    analytic_sup: float
    max_discrepancy: float


def mellin_sup_scan(nu: float, lam: float, ymax: float = 50.0, npts: int = 20001) -> MellinScan:
    """Dense scan of ``|O(lam+1+iy)|`` on ``[-ymax, ymax]`` (odd ``npts`` keeps ``y = 0``)."""
    if npts % 2 == 0:
        npts += 1
    y = np.linspace(-ymax, ymax, npts)
    g = np.abs(mellin_multiplier_O(y, nu, lam))
    rat = mellin_rational_modulus(y, nu)
    i = int(np.argmax(g))
    return MellinScan(nu, float(y[i]), float(g[i]), nu ** 2 / (nu ** 2 - 1),
                      float(np.max(np.abs(g - rat))))
