"""Probabilistic solution of the heat equation with a separable space-time prior.

The unknown surface ``u(x, t)`` on ``[x_a, x_b] x [t_a, t_b]`` solves
``u_t = kappa * u_xx`` with ``u(x, t_a) = sin(pi x)`` and zero values on both
spatial boundaries.  The prior covariance is a product of a temporal and a
spatial factor, so every spatial point shares the scalar temporal gains of
:mod:`podes.engine`.  The spatial factor is conditioned on a zero value at the
right boundary (the left boundary is pinned by construction).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
from scipy.linalg import solve

from . import engine
from .engine import Grid
from .kernels import KernelSpec, SpatialKernelSpec, qq, qr, rr
from .ode import _seed_tuple, draw_generator

__all__ = [
    "HeatProblem",
    "HeatSurface",
    "SpatialFactors",
    "spatial_factors",
    "heat_kernels",
    "sample_surface",
]


@dataclass(frozen=True)
class HeatProblem:
    """Heat equation with initial profile ``sin(pi x)`` and zero boundary values."""

    kappa: float = 1.0
    x_domain: tuple = (0.0, 1.0)
    t_domain: tuple = (0.0, 0.25)

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError("conductivity must be non-negative")
        if not (self.x_domain[1] > self.x_domain[0] and self.t_domain[1] > self.t_domain[0]):
            raise ValueError("domains must be non-empty intervals")

    def initial(self, x):
        return np.sin(pi * np.asarray(x, float))

    def initial_xx(self, x):
        return -pi**2 * np.sin(pi * np.asarray(x, float))

    def exact(self, x, t):
        """Separation-of-variables solution on the unit interval."""
        x, t = np.asarray(x, float), np.asarray(t, float)
        return np.exp(-self.kappa * pi**2 * t) * np.sin(pi * x)

    def with_kappa(self, kappa: float) -> "HeatProblem":
        return HeatProblem(kappa, self.x_domain, self.t_domain)


@dataclass(frozen=True)
class HeatSurface:
    """One sampled surface.

    Attributes
    ----------
    x, t : ndarray
        Spatial and temporal evaluation points.
    u : ndarray, shape (len(t), len(x))
        Sampled surface.
    mean : ndarray, shape (len(t), len(x))
        Posterior mean given this draw's interrogations.
    seed : tuple of int
    """

    x: np.ndarray
    t: np.ndarray
    u: np.ndarray
    mean: np.ndarray
    seed: tuple


@dataclass(frozen=True)
class SpatialFactors:
    """Spatial covariance factors on the interior points, conditioned on ``u(x_b) = 0``.

    Attributes
    ----------
    state : ndarray
        Covariance of the state between interior points.
    curvature_state : ndarray
        Cross-covariance of ``u_xx`` (rows) with ``u`` (columns).
    curvature : ndarray
        Covariance of ``u_xx``.
    """

    x: np.ndarray
    state: np.ndarray
    curvature_state: np.ndarray
    curvature: np.ndarray

    @property
    def transfer(self) -> np.ndarray:
        """Map from a state deviation to the implied ``u_xx`` deviation."""
        return solve(self.state, self.curvature_state.T, assume_a="pos").T


STATE_NUGGET = 1e-8
"""Relative white-noise variance added to the spatial state factor."""


def spatial_factors(ks: SpatialKernelSpec, interior, right_boundary: float,
                    nugget: float = STATE_NUGGET) -> SpatialFactors:
    """Spatial factors on ``interior`` points with both boundary values pinned to zero.

    The doubly integrated kernel fixes the value and slope of the deviation at
    the left boundary.  A flat linear-in-space component is added so that the
    slope is free, and the right boundary value then determines it.  The
    result is the bridge ``S(x) - (x - x_a) / (x_b - x_a) * S(x_b)``, where
    ``S`` is the doubly integrated process.  Curvature is unaffected by the
    linear part.

    Parameters
    ----------
    nugget : float
        White-noise variance added to the state factor, relative to its
        largest diagonal entry.  It regularises the ill-conditioned map from
        state to curvature.
    """
    x = np.asarray(interior, float)
    conv = ks.convolution
    a, b = ks.origin, float(right_boundary)
    ramp = (x - a) / (b - a)
    ss = conv(2, 2, x[:, None], x[None, :])
    ss_b = conv(2, 2, x, b)
    ss_bb = float(conv(2, 2, b, b))
    A = ss - np.outer(ss_b, ramp) - np.outer(ramp, ss_b) + np.outer(ramp, ramp) * ss_bb
    A = 0.5 * (A + A.T)
    A += nugget * float(np.max(np.diag(A))) * np.eye(x.size)
    B = conv(0, 2, x[:, None], x[None, :]) - np.outer(conv(0, 2, x, b), ramp)
    P = conv(0, 0, x[:, None], x[None, :])
    return SpatialFactors(x, A, B, 0.5 * (P + P.T))


def heat_kernels(problem: HeatProblem, t_grid: Grid, z, temporal_ratio: float = 3.0,
                 spatial_fraction: float = 0.4, spatial_precision: float = 1e-6):
    """Default temporal and spatial kernels for a heat solve.

    Temporal: squared exponential with length-scale ``temporal_ratio * h_t``
    and variance ``h_t``.  Spatial: squared exponential with length-scale
    ``spatial_fraction`` of the spatial domain and precision
    ``spatial_precision``.  The default precision puts the pointwise spread of
    draws on the scale of the actual error for the grids used here.  The
    explicit time stepping is only stable when the stiffest curvature mode
    times ``h_t`` stays below about 1.5, which a smooth spatial kernel ensures
    on the grids used here.
    """
    z = np.asarray(z, float)
    kt = engine.policy_kernel("squared_exponential", t_grid, temporal_ratio, 1.0)
    width = float(z[-1] - z[0])
    ks = SpatialKernelSpec(spatial_fraction * width, spatial_precision, float(z[0]))
    return kt, ks


@dataclass
class _HeatPlan:
    temporal: engine.ForwardPlan
    factors: SpatialFactors
    transfer: np.ndarray
    step_factors: list
    final_spatial: np.ndarray


_HEAT_CACHE: dict = {}


def _heat_plan(kt, ks, z, grid, ret_x, ret_t):
    key = (kt.with_precision(1.0), ks, z.tobytes(), grid.key(), ret_x.tobytes(),
           ret_t.tobytes())
    if key in _HEAT_CACHE:
        return _HEAT_CACHE[key]
    temporal = engine.build_plan(kt, grid, return_index=ret_t)
    factors = spatial_factors(ks, z[1:-1], z[-1])
    W = factors.transfer
    explained = W @ factors.curvature_state.T
    explained = 0.5 * (explained + explained.T)
    residual = factors.curvature - explained
    residual = 0.5 * (residual + residual.T)
    qq_ahead = qq(temporal.kernel, grid.s[1:], grid.s[1:])
    steps = [
        engine.psd_factor(explained * temporal.next_var[n] + residual * qq_ahead[n])
        for n in range(grid.n - 1)
    ]
    cols = _interior_columns(z, ret_x)
    final_spatial = engine.psd_factor(factors.state[np.ix_(cols, cols)])
    plan = _HeatPlan(temporal, factors, W, steps, final_spatial)
    if len(_HEAT_CACHE) > 8:
        _HEAT_CACHE.clear()
    _HEAT_CACHE[key] = plan
    return plan


def _validate(problem, kt, ks, z, grid):
    z = np.asarray(z, float)
    if z.ndim != 1 or z.size < 3 or np.any(np.diff(z) <= 0):
        raise ValueError("spatial grid must be increasing with at least three points")
    if abs(z[0] - problem.x_domain[0]) > 1e-12 or abs(z[-1] - problem.x_domain[1]) > 1e-12:
        raise ValueError("spatial grid must include both boundary points")
    if abs(grid.a - problem.t_domain[0]) > 1e-12 or abs(grid.b - problem.t_domain[1]) > 1e-9:
        raise ValueError("temporal grid must span the time domain")
    if abs(ks.origin - z[0]) > 1e-12 or abs(kt.origin - grid.a) > 1e-12:
        raise ValueError("kernel origins must be the left ends of the domains")
    return z


def _return_indices(z, grid, x_eval, t_eval):
    if x_eval is None:
        ret_x = np.arange(z.size)
    else:
        ret_x = Grid(z).index_of(x_eval)
    ret_t = np.arange(grid.n) if t_eval is None else grid.index_of(t_eval)
    return ret_x, ret_t


def sample_surface(problem: HeatProblem, kt: KernelSpec, ks: SpatialKernelSpec, z, grid: Grid,
                   seed, x_eval=None, t_eval=None, method: str = "kronecker") -> HeatSurface:
    """Draw one surface from the probabilistic heat-equation solution.

    Parameters
    ----------
    problem : HeatProblem
    kt : KernelSpec
        Temporal kernel (origin at the initial time).
    ks : SpatialKernelSpec
        Spatial kernel (origin at the left boundary).
    z : array_like
        Spatial grid including both boundary points; curvature is interrogated
        at the interior points.
    grid : Grid
        Temporal grid.
    seed : int or tuple of int
    x_eval, t_eval : array_like, optional
        Grid points of the returned surface (default: all).
    method : {"kronecker", "literal"}
        ``literal`` applies the block updates to full space-time matrices and
        is only meant for tiny grids.
    """
    z = _validate(problem, kt, ks, z, grid)
    ret_x, ret_t = _return_indices(z, grid, x_eval, t_eval)
    rng = draw_generator(seed)
    if method == "kronecker":
        mean, draw = _kronecker(problem, kt, ks, z, grid, rng, ret_x, ret_t)
    elif method == "literal":
        mean, draw = _literal(problem, kt, ks, z, grid, rng, ret_x, ret_t)
    else:
        raise ValueError("method must be 'kronecker' or 'literal'")
    return HeatSurface(z[ret_x].copy(), grid.s[ret_t].copy(), draw, mean, _seed_tuple(seed))


def _interior_columns(z, ret_x):
    """Interior-point indices of the returned spatial columns."""
    inner = (ret_x > 0) & (ret_x < z.size - 1)
    return ret_x[inner] - 1


def _embed(problem, z, grid, ret_x, ret_t, interior_values):
    """Place interior values into a surface with exact boundary and initial values."""
    out = np.zeros((ret_t.size, ret_x.size))
    inner = (ret_x > 0) & (ret_x < z.size - 1)
    out[:, inner] = interior_values[:, ret_x[inner] - 1]
    first = ret_t == 0
    out[first] = problem.initial(z[ret_x])
    out[:, ~inner] = 0.0
    return out


def _kronecker(problem, kt, ks, z, grid, rng, ret_x, ret_t):
    plan = _heat_plan(kt, ks, z, grid, ret_x, ret_t)
    tp = plan.temporal
    x = z[1:-1]
    m0 = problem.initial(x)
    mxx0 = problem.initial_xx(x)
    kappa = problem.kappa
    N, M = grid.n, x.size
    sd = 1.0 / sqrt(kt.precision)
    e = np.zeros((N, M))
    curvature = mxx0
    for n in range(N):
        f = kappa * curvature
        pred = tp.gains[n, :n] @ e[:n] if n else np.zeros(M)
        e[n] = f - pred
        if n + 1 < N:
            state_dev = tp.cross[n + 1, :n + 1] @ e[:n + 1]
            mean_xx = mxx0 + plan.transfer @ state_dev
            curvature = mean_xx + sd * (plan.step_factors[n] @ rng.standard_normal(M))
    mean_int = m0 + tp.cross[tp.return_index] @ e
    cols = _interior_columns(z, ret_x)
    noise = rng.standard_normal((tp.return_index.size, cols.size))
    draw_int = mean_int.copy()
    draw_int[:, cols] += sd * (tp.final_factor @ noise @ plan.final_spatial.T)
    return (_embed(problem, z, grid, ret_x, ret_t, mean_int),
            _embed(problem, z, grid, ret_x, ret_t, draw_int))


def _literal(problem, kt, ks, z, grid, rng, ret_x, ret_t):
    """Full-matrix block updates over every interior space-time point."""
    x = z[1:-1]
    s = grid.s
    M, N = x.size, grid.n
    fac = spatial_factors(ks, x, z[-1])
    A, B, P = fac.state, fac.curvature_state, fac.curvature
    col, row = s[:, None], s[None, :]
    RRt = rr(kt, col, row)
    QRt = qr(kt, col, row)
    QQt = qq(kt, col, row)
    C_xx = np.kron(QQt, P)
    C_t = np.kron(RRt, A)
    C = np.kron(QQt, A)
    X_u = np.kron(QRt, A)        # state rows, derivative columns
    X_xx = np.kron(QRt, B)       # curvature rows, derivative columns
    m0 = problem.initial(x)
    mxx0 = problem.initial_xx(x)
    m = np.tile(m0, N)
    m_t = np.zeros(N * M)
    m_xx = np.tile(mxx0, N)
    f = problem.kappa * mxx0
    for n in range(N):
        idx = slice(n * M, (n + 1) * M)
        G = C_t[idx, idx] * (1.0 if n == 0 else 2.0)
        d = f - m_t[idx]
        k_xx, k_t, k_u = X_xx[:, idx], C_t[:, idx], X_u[:, idx]
        ct_row = C_t[idx, :].copy()
        Gi_d = solve(G, d, assume_a="pos")
        Gi_t = solve(G, ct_row, assume_a="pos")
        m_xx = m_xx + k_xx @ Gi_d
        m_t = m_t + k_t @ Gi_d
        m = m + k_u @ Gi_d
        C_xx = C_xx - k_xx @ solve(G, k_xx.T, assume_a="pos")
        C = C - k_u @ solve(G, k_u.T, assume_a="pos")
        X_xx = X_xx - k_xx @ Gi_t
        X_u = X_u - k_u @ Gi_t
        C_t = C_t - k_t @ Gi_t
        if n + 1 < N:
            nxt = slice((n + 1) * M, (n + 2) * M)
            factor = engine.psd_factor(C_xx[nxt, nxt])
            f = problem.kappa * (m_xx[nxt] + factor @ rng.standard_normal(M))
    surface_mean = m.reshape(N, M)[ret_t]
    cov_t = C.reshape(N, M, N, M)[np.ix_(ret_t, np.arange(M), ret_t, np.arange(M))]
    T = ret_t.size
    cov_flat = cov_t.reshape(T * M, T * M)
    cols = _interior_columns(z, ret_x)
    sel = (np.arange(T)[:, None] * M + cols[None, :]).ravel()
    noise = rng.standard_normal(sel.size)
    draw = surface_mean.copy()
    draw[:, cols] += (engine.psd_factor(cov_flat[np.ix_(sel, sel)]) @ noise).reshape(T, cols.size)
    return (_embed(problem, z, grid, ret_x, ret_t, surface_mean),
            _embed(problem, z, grid, ret_x, ret_t, draw))
