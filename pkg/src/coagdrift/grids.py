"""Graded semi-infinite grids, profile containers, quadrature and convolution.

Grids are uniform in the transformed variable w = log(1 + (1-v) z), which
follows the natural scale of the algebraically decaying barrier.  Profiles
live on the grid with an algebraic tail model beyond the last node; values
between nodes are interpolated linearly in log-value (exact on the
exponential solution family) and linearly where a sample is zero.

Quadrature conventions:

* moments and the standalone log-integral use the composite trapezoid in w
  with an Euler-Maclaurin endpoint correction (effective order 4); the
  correction is needed to certify F(0) and the moments at the default grid
  resolution;
* the half-range convolution and everything feeding the monotone fixed-point
  iteration use the plain trapezoid with nonnegative weights only, so the
  pointwise comparison arguments of the iteration survive discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DivergentMomentError,
    GridMismatchError,
    ParameterDomainError,
)

__all__ = [
    "Grid",
    "GridFunction",
    "TauFunction",
    "build_grid",
    "moment",
    "half_convolution",
    "half_convolution_at_nodes",
    "full_convolution_quadrature",
    "log_integral",
    "cumulative_log_integral",
]

_trapz = getattr(np, "trapezoid", None) or np.trapz


# ----------------------------------------------------------------------
# grid
# ----------------------------------------------------------------------

@dataclass(eq=False)
class Grid:
    """Strictly increasing nodes z_0 = 0 < ... < z_{N-1} = zmax, graded so
    that log(1 + (1-v) z) is uniform."""

    nodes: np.ndarray
    v: float
    _plan: "_HalfRangePlan | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.size < 2:
            raise ParameterDomainError("grid needs at least two nodes")
        if self.nodes[0] != 0.0 or np.any(np.diff(self.nodes) <= 0.0):
            raise ParameterDomainError("nodes must be strictly increasing from 0")
        if not (0.0 < self.v < 1.0):
            raise ParameterDomainError(f"v must lie in (0, 1), got {self.v}")

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def zmax(self) -> float:
        return float(self.nodes[-1])

    @property
    def w_nodes(self) -> np.ndarray:
        return np.log1p((1.0 - self.v) * self.nodes)

    @property
    def dw(self) -> float:
        return float(np.log1p((1.0 - self.v) * self.zmax) / (self.n - 1))

    def w_of(self, z):
        return np.log1p((1.0 - self.v) * np.asarray(z, dtype=float))

    def sprime(self, z):
        """dz/dw = (1 + (1-v) z)/(1-v)."""
        return (1.0 + (1.0 - self.v) * np.asarray(z, dtype=float)) / (1.0 - self.v)

    def bracket(self, z):
        """Bracketing interval index and both interpolation fractions.

        Returns (idx, lam_z, lam_w) with nodes[idx] <= z <= nodes[idx+1]
        (clipped at the ends), lam_z the linear fraction in z and lam_w the
        linear fraction in w.  The w grid is uniform, so the index is a
        single floor division.
        """
        z = np.asarray(z, dtype=float)
        w = self.w_of(z)
        dw = self.dw
        idx = np.clip((w / dw).astype(np.int64), 0, self.n - 2)
        zl = self.nodes[idx]
        zr = self.nodes[idx + 1]
        lam_z = np.clip((z - zl) / (zr - zl), 0.0, 1.0)
        lam_w = np.clip(w / dw - idx, 0.0, 1.0)
        return idx, lam_z, lam_w

    def half_range_plan(self) -> "_HalfRangePlan":
        if self._plan is None:
            self._plan = _build_half_range_plan(self)
        return self._plan


def build_grid(zmax: float, n: int, v: float) -> Grid:
    """Grid with n nodes uniform in log(1 + (1-v) z), from 0 to zmax."""
    if not np.isfinite(zmax) or zmax <= 0.0:
        raise ParameterDomainError(f"zmax must be positive, got {zmax}")
    if n < 2:
        raise ParameterDomainError(f"need at least 2 nodes, got {n}")
    if not (0.0 < v < 1.0):
        raise ParameterDomainError(f"v must lie in (0, 1), got {v}")
    w = np.linspace(0.0, math.log1p((1.0 - v) * zmax), n)
    nodes = np.expm1(w) / (1.0 - v)
    nodes[0] = 0.0
    nodes[-1] = zmax
    return Grid(nodes=nodes, v=v)


def _same_grid(a: Grid, b: Grid) -> bool:
    return a is b or (a.n == b.n and a.v == b.v and np.array_equal(a.nodes, b.nodes))


# ----------------------------------------------------------------------
# grid functions
# ----------------------------------------------------------------------

@dataclass(eq=False)
class GridFunction:
    """Samples F(z_j) plus an algebraic tail F(z) = F(zmax) (z/zmax)^-p
    for z beyond the grid.

    ``tail_exponent`` may be ``inf`` for profiles that decay faster than any
    power (the exponential family).  Values are not forced nonnegative here:
    the container is also used for signed residual fields; solver paths
    assert positivity where the theory provides it.
    """

    grid: Grid
    values: np.ndarray
    tail_exponent: float = math.inf

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ParameterDomainError(
                f"values shape {self.values.shape} does not match grid size {self.grid.n}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ParameterDomainError("values must be finite")

    def interp_at_brackets(self, idx, lam_z) -> np.ndarray:
        """Interpolate at points described by precomputed brackets.

        Linear in log-value when both bracketing samples are positive,
        linear in the value otherwise.
        """
        va = self.values[idx]
        vb = self.values[idx + 1]
        pos = (va > 0.0) & (vb > 0.0)
        la = np.log(np.where(pos, va, 1.0))
        lb = np.log(np.where(pos, vb, 1.0))
        loglin = np.exp((1.0 - lam_z) * la + lam_z * lb)
        lin = (1.0 - lam_z) * va + lam_z * vb
        return np.where(pos, loglin, lin)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        if np.any(z < 0.0):
            raise ParameterDomainError("evaluation points must be nonnegative")
        out = np.empty_like(z)
        inside = z <= self.grid.zmax
        if np.any(inside):
            idx, lam_z, _ = self.grid.bracket(z[inside])
            out[inside] = self.interp_at_brackets(idx, lam_z)
        if np.any(~inside):
            f_end = self.values[-1]
            if f_end == 0.0:
                out[~inside] = 0.0
            else:
                out[~inside] = f_end * (z[~inside] / self.grid.zmax) ** (-self.tail_exponent)
        return float(out[0]) if scalar else out


@dataclass(eq=False)
class TauFunction:
    """Log-derivative representation tau(z) = -z F'(z)/F(z) of a profile.

    ``slope0`` is the limit of tau(s)/s as s -> 0 (the integrand of the
    log-integral is continued with it), ``limit_inf`` the asserted limit at
    infinity and ``cap`` an optional upper barrier used while solving.
    """

    grid: Grid
    values: np.ndarray
    slope0: float
    limit_inf: float
    cap: float | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ParameterDomainError(
                f"values shape {self.values.shape} does not match grid size {self.grid.n}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ParameterDomainError("tau values must be finite")
        self._cum: dict[bool, np.ndarray] = {}

    def interp(self, z):
        """Linear interpolation of tau in z (tau is smooth and signed-free)."""
        z = np.asarray(z, dtype=float)
        idx, lam_z, _ = self.grid.bracket(np.atleast_1d(z))
        out = (1.0 - lam_z) * self.values[idx] + lam_z * self.values[idx + 1]
        return float(out[0]) if z.ndim == 0 else out

    def integrand_scaled(self) -> np.ndarray:
        """tau(s)/s * ds/dw sampled on the grid, with the s = 0 value
        continued as slope0 * s'(0)."""
        z = self.grid.nodes
        out = np.empty_like(z)
        out[0] = self.slope0 / (1.0 - self.grid.v)
        out[1:] = self.values[1:] * self.grid.sprime(z[1:]) / z[1:]
        return out


# ----------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------

def _derivative_uniform(g: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative on a uniform grid."""
    n = g.size
    d = np.empty_like(g)
    if n < 5:
        return np.gradient(g, h)
    d[2:-2] = (g[:-4] - 8.0 * g[1:-3] + 8.0 * g[3:-1] - g[4:]) / (12.0 * h)
    d[0] = (-25.0 * g[0] + 48.0 * g[1] - 36.0 * g[2] + 16.0 * g[3] - 3.0 * g[4]) / (12.0 * h)
    d[1] = (-3.0 * g[0] - 10.0 * g[1] + 18.0 * g[2] - 6.0 * g[3] + g[4]) / (12.0 * h)
    d[-2] = (3.0 * g[-1] + 10.0 * g[-2] - 18.0 * g[-3] + 6.0 * g[-4] - g[-5]) / (12.0 * h)
    d[-1] = (25.0 * g[-1] - 48.0 * g[-2] + 36.0 * g[-3] - 16.0 * g[-4] + 3.0 * g[-5]) / (12.0 * h)
    return d


def _corrected_trapezoid_w(grid: Grid, g: np.ndarray) -> float:
    """Trapezoid of g(w) over the uniform w grid with Euler-Maclaurin
    endpoint correction (order 4 when at least 5 nodes are available)."""
    dw = grid.dw
    total = dw * (np.sum(g) - 0.5 * (g[0] + g[-1]))
    if grid.n >= 5:
        dg = _derivative_uniform(g, dw)
        total -= dw * dw / 12.0 * (dg[-1] - dg[0])
    return float(total)


def moment(F: GridFunction, k: int) -> float:
    """k-th moment int z^k F(z) dz, grid quadrature plus the closed-form
    tail integral F(zmax) zmax^(k+1) / (p - k - 1).

    Divergence is reported when the stored tail exponent p satisfies
    p <= k + 1 while the last sample is nonzero.
    """
    if k not in (0, 1):
        raise ParameterDomainError(f"moment order must be 0 or 1, got {k}")
    grid = F.grid
    f_end = float(F.values[-1])
    p = F.tail_exponent
    if f_end != 0.0 and not p > k + 1:
        raise DivergentMomentError(
            f"moment of order {k} diverges: tail exponent {p} <= {k + 1}"
        )
    z = grid.nodes
    g = z**k * F.values * grid.sprime(z)
    body = _corrected_trapezoid_w(grid, g)
    if f_end == 0.0 or math.isinf(p):
        tail = 0.0
    else:
        tail = f_end * grid.zmax ** (k + 1) / (p - k - 1)
    return body + tail


# ----------------------------------------------------------------------
# half-range convolution
# ----------------------------------------------------------------------

@dataclass(eq=False)
class _HalfRangePlan:
    """Precomputed quadrature layout for 2 int_0^{z_j/2} A(z_j - y) B(y) dy
    at every node z_j, j >= 1.

    The y sub-grid of segment j is (z_0, ..., z_{k_j - 1}, z_j/2); the flat
    arrays concatenate all segments.  ``y_node_idx`` is -1 at the half
    endpoint, where the B factor needs interpolation.
    """

    starts: np.ndarray
    counts: np.ndarray
    weights: np.ndarray
    y_node_idx: np.ndarray
    x_idx: np.ndarray
    x_lam_z: np.ndarray
    x_lam_w: np.ndarray
    half_points: np.ndarray
    half_idx: np.ndarray
    half_lam_z: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.size


def _build_half_range_plan(grid: Grid) -> _HalfRangePlan:
    z = grid.nodes
    n = grid.n
    half = 0.5 * z[1:]
    ks = np.searchsorted(z, half, side="left")  # nodes strictly below z_j/2
    counts = ks + 1
    starts = np.zeros(n - 1, dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    total = int(starts[-1] + counts[-1])

    weights = np.empty(total)
    y_node_idx = np.full(total, -1, dtype=np.int64)
    x_flat = np.empty(total)
    for j in range(1, n):
        s, k = starts[j - 1], ks[j - 1]
        y = np.concatenate([z[:k], [half[j - 1]]])
        dy = np.diff(y)
        w = np.empty(k + 1)
        w[0] = 0.5 * dy[0]
        w[-1] = 0.5 * dy[-1]
        if k > 1:
            w[1:-1] = 0.5 * (dy[1:] + dy[:-1])
        weights[s : s + k + 1] = w
        y_node_idx[s : s + k] = np.arange(k)
        x_flat[s : s + k + 1] = z[j] - y

    x_idx, x_lam_z, x_lam_w = grid.bracket(x_flat)
    half_idx, half_lam_z, _ = grid.bracket(half)
    return _HalfRangePlan(
        starts=starts,
        counts=counts,
        weights=weights,
        y_node_idx=y_node_idx,
        x_idx=x_idx,
        x_lam_z=x_lam_z,
        x_lam_w=x_lam_w,
        half_points=half,
        half_idx=half_idx,
        half_lam_z=half_lam_z,
    )


def sample_on_plan(plan: _HalfRangePlan, B: GridFunction) -> np.ndarray:
    """Values of B at every y node of the plan (grid samples are exact, the
    half endpoints are interpolated)."""
    out = np.empty(plan.size)
    node = plan.y_node_idx >= 0
    out[node] = B.values[plan.y_node_idx[node]]
    out[~node] = B.interp_at_brackets(plan.half_idx, plan.half_lam_z)
    return out


def half_convolution_at_nodes(F: GridFunction, G: GridFunction) -> np.ndarray:
    """2 int_0^{z_j/2} F(z_j - y) G(y) dy at every grid node, vectorized.

    For F = G this is the full convolution int_0^z F(z-y) F(y) dy by
    symmetry, and it is the form used everywhere a convolution of identical
    arguments occurs.
    """
    if not _same_grid(F.grid, G.grid):
        raise GridMismatchError("half_convolution requires both functions on one grid")
    plan = F.grid.half_range_plan()
    a = F.interp_at_brackets(plan.x_idx, plan.x_lam_z)
    b = sample_on_plan(plan, G)
    contrib = plan.weights * a * b
    out = np.empty(F.grid.n)
    out[0] = 0.0
    out[1:] = 2.0 * np.add.reduceat(contrib, plan.starts)
    return out


def half_convolution(F: GridFunction, G: GridFunction, z: float) -> float:
    """2 int_0^{z/2} F(z - y) G(y) dy at a single point z >= 0."""
    if not _same_grid(F.grid, G.grid):
        raise GridMismatchError("half_convolution requires both functions on one grid")
    if z < 0.0:
        raise ParameterDomainError("z must be nonnegative")
    if z == 0.0:
        return 0.0
    nodes = F.grid.nodes
    half = 0.5 * z
    k = int(np.searchsorted(nodes, half, side="left"))
    y = np.concatenate([nodes[:k], [half]])
    b = np.concatenate([G.values[:k], [G(half)]])
    a = F(z - y)
    return 2.0 * float(_trapz(a * b, y))


def full_convolution_quadrature(F: GridFunction, z: float) -> float:
    """Independent trapezoid of the full-range convolution
    int_0^z F(z-y) F(y) dy, used to cross-check the half-range form."""
    if z < 0.0:
        raise ParameterDomainError("z must be nonnegative")
    if z == 0.0:
        return 0.0
    nodes = F.grid.nodes
    k = int(np.searchsorted(nodes, z, side="left"))
    y = np.concatenate([nodes[:k], [z]])
    b = np.concatenate([F.values[:k], [F(z)]])
    a = F(z - y)
    return float(_trapz(a * b, y))


# ----------------------------------------------------------------------
# log-integral of tau(s)/s
# ----------------------------------------------------------------------

def cumulative_log_integral(tau: TauFunction, corrected: bool = True) -> np.ndarray:
    """Cumulative I(z_j) = int_0^{z_j} tau(s)/s ds on the grid.

    Computed as the uniform trapezoid in w of tau/s * ds/dw; with
    ``corrected`` the Euler-Maclaurin endpoint term is subtracted at every
    prefix, giving pointwise order 4.  The uncorrected variant keeps every
    quadrature weight nonnegative and is the one the monotone fixed-point
    sweep must use.
    """
    cached = tau._cum.get(corrected)
    if cached is not None:
        return cached
    grid = tau.grid
    g = tau.integrand_scaled()
    dw = grid.dw
    out = np.empty(grid.n)
    out[0] = 0.0
    np.cumsum(0.5 * dw * (g[1:] + g[:-1]), out=out[1:])
    if corrected and grid.n >= 5:
        dg = _derivative_uniform(g, dw)
        out -= dw * dw / 12.0 * (dg - dg[0])
    tau._cum[corrected] = out
    return out


def _psi_at(tau: TauFunction, s: float) -> float:
    if s == 0.0:
        return tau.slope0
    return float(tau.interp(s)) / s


def log_integral(tau: TauFunction, z1: float, z2: float) -> float:
    """int_{z1}^{z2} tau(s)/s ds with the s = 0 integrand continued by
    slope0; grid-aligned spans reduce to differences of the cumulative
    table, partial end intervals use the trapezoid with interpolated
    endpoints."""
    if z1 < 0.0 or z2 < z1:
        raise ParameterDomainError(f"need 0 <= z1 <= z2, got z1={z1}, z2={z2}")
    if z2 > tau.grid.zmax * (1.0 + 1e-12):
        raise ParameterDomainError("z2 beyond the grid")
    if z1 == z2:
        return 0.0
    nodes = tau.grid.nodes
    cum = cumulative_log_integral(tau)
    ja = int(np.searchsorted(nodes, z1, side="left"))   # first node >= z1
    jb = int(np.searchsorted(nodes, z2, side="right")) - 1  # last node <= z2
    if jb < ja:
        # both endpoints inside a single grid interval
        return 0.5 * (_psi_at(tau, z1) + _psi_at(tau, z2)) * (z2 - z1)
    total = float(cum[jb] - cum[ja])
    if nodes[ja] > z1:
        total += 0.5 * (_psi_at(tau, z1) + _psi_at(tau, float(nodes[ja]))) * (nodes[ja] - z1)
    if nodes[jb] < z2:
        total += 0.5 * (_psi_at(tau, float(nodes[jb])) + _psi_at(tau, z2)) * (z2 - nodes[jb])
    return total
