"""Sequential Gaussian-process updating of a solution and its derivative.

Two views of the same computation live here.

:class:`SolverState` with :func:`init_prior`, :func:`assimilate_first`,
:func:`assimilate` and :func:`assimilate_lagged` applies the five rank-one
update equations literally.  It is O(N^2) per update and serves as the
reference implementation.

The gain divisors ``g_n`` never depend on the interrogated values, so neither
do any of the covariances.  The sequential update is therefore Gaussian
conditioning on derivative observations with deterministic noise variances
``g_n - C_t^{n-1}(s_n, s_n)``.  :class:`ForwardPlan` precomputes that
conditioning once per kernel and grid (an LDL^T factor with the pivots chosen
on the fly, the state cross-gains and a factor of the final covariance).  Each
draw then only runs the O(N^2) mean recursion.  :class:`BandedPlan` does the
same in O(N M) for the compactly supported uniform kernel.
"""
from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from math import ceil, sqrt

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular

from .kernels import KernelFamily, KernelSpec, qq, qr, rr

__all__ = [
    "VARIANCE_FLOOR",
    "DEFAULT_LENGTH_RATIO",
    "Grid",
    "policy_kernel",
    "SolverState",
    "init_prior",
    "assimilate_first",
    "assimilate",
    "assimilate_lagged",
    "predict",
    "final_marginal",
    "psd_factor",
    "ForwardPlan",
    "BandedPlan",
    "build_plan",
    "build_banded_plan",
    "PlanRun",
    "run_plan",
    "run_banded_plan",
]

VARIANCE_FLOOR = 1e-14
"""Smallest admissible gain divisor, relative to the prior derivative variance."""

DEFAULT_LENGTH_RATIO = {
    KernelFamily.SQUARED_EXPONENTIAL: 2.0,
    KernelFamily.UNIFORM: 4.0,
}
"""Default ``length_scale / h_max`` per kernel family."""


@dataclass(frozen=True)
class Grid:
    """Strictly increasing interrogation times ``a = s_1 < ... < s_N = b``."""

    s: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("a grid needs at least two points")
        if not np.all(np.isfinite(s)) or np.any(np.diff(s) <= 0):
            raise ValueError("grid points must be finite and strictly increasing")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "Grid":
        return cls(np.linspace(a, b, int(n)))

    @property
    def n(self) -> int:
        return self.s.size

    @property
    def a(self) -> float:
        return float(self.s[0])

    @property
    def b(self) -> float:
        return float(self.s[-1])

    @property
    def h_max(self) -> float:
        return float(np.max(np.diff(self.s)))

    @property
    def h_min(self) -> float:
        return float(np.min(np.diff(self.s)))

    def index_of(self, t) -> np.ndarray:
        """Indices of on-grid times; off-grid times raise ``ValueError``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self.s, t), 0, self.n - 1)
        left = np.clip(idx - 1, 0, self.n - 1)
        pick = np.where(np.abs(self.s[left] - t) < np.abs(self.s[idx] - t), left, idx)
        tol = 1e-9 * max(1.0, abs(self.b - self.a))
        if np.any(np.abs(self.s[pick] - t) > tol):
            raise ValueError("prediction is only available on the discretization grid")
        return pick

    def key(self) -> tuple:
        return (self.n, self.s.tobytes())


def policy_kernel(
    family,
    grid: Grid,
    length_ratio: float | None = None,
    variance_ratio: float = 1.0,
) -> KernelSpec:
    """Kernel with ``length_scale`` and ``1/precision`` proportional to ``h_max``.

    Parameters
    ----------
    family : KernelFamily or str
    grid : Grid
    length_ratio : float, optional
        ``length_scale / h_max``; defaults to :data:`DEFAULT_LENGTH_RATIO`.
    variance_ratio : float
        ``(1 / precision) / h_max``.
    """
    family = KernelFamily.parse(family)
    ratio = DEFAULT_LENGTH_RATIO[family] if length_ratio is None else float(length_ratio)
    h = grid.h_max
    return KernelSpec(family, ratio * h, 1.0 / (variance_ratio * h), grid.a)


def _floored(g: float, reference: float, where: str) -> float:
    floor = VARIANCE_FLOOR * reference
    if not g > floor:
        warnings.warn(
            f"gain divisor {g:.3e} at {where} clamped to floor {floor:.3e}",
            RuntimeWarning,
            stacklevel=3,
        )
        return floor
    return g


# --- literal reference state -------------------------------------------------


@dataclass
class SolverState:
    """GP posterior over a set of bookkeeping times after ``n`` updates.

    The first ``grid.n`` rows are the grid; when a lag is present the next
    ``grid.n`` rows hold the lag points ``s - lag``.  All components share the
    covariance matrices, so ``m`` and ``m_t`` have one column per component.

    Attributes
    ----------
    times : ndarray, shape (R,)
    m, m_t : ndarray, shape (R, P)
        State and derivative means.
    C, C_t : ndarray, shape (R, R)
        State and derivative covariances.
    X : ndarray, shape (R, R)
        ``X[i, j] = int_a^{times_i} C_t(z, times_j) dz``.
    divisors : list of float
        Gain divisors ``g_1, ..., g_n`` used so far.
    """

    grid: Grid
    kernel: KernelSpec
    times: np.ndarray
    m: np.ndarray
    m_t: np.ndarray
    C: np.ndarray
    C_t: np.ndarray
    X: np.ndarray
    n: int = 0
    lag: float | None = None
    lag_inflation: bool = True
    divisors: list = field(default_factory=list)

    @property
    def n_grid(self) -> int:
        return self.grid.n


def init_prior(initial_state, kernel: KernelSpec, grid: Grid, lag: float | None = None,
               lag_inflation: bool = True) -> SolverState:
    """Joint prior over state and derivative with the state pinned at ``a``.

    The prior state mean is the constant ``initial_state`` and the prior
    derivative mean is zero, which satisfies ``m(a) = u(a)`` and
    ``int_a^t m_t = m(t) - m(a)``.
    """
    u0 = np.atleast_1d(np.asarray(getattr(initial_state, "u_init", initial_state), float))
    if abs(kernel.origin - grid.a) > 1e-12 * max(1.0, abs(grid.a)):
        raise ValueError("kernel origin must equal the first grid point")
    times = grid.s if lag is None else np.concatenate([grid.s, grid.s - float(lag)])
    col, row = times[:, None], times[None, :]
    R = times.size
    return SolverState(
        grid=grid,
        kernel=kernel,
        times=times,
        m=np.tile(u0, (R, 1)),
        m_t=np.zeros((R, u0.size)),
        C=qq(kernel, col, row),
        C_t=rr(kernel, col, row),
        X=qr(kernel, col, row),
        lag=None if lag is None else float(lag),
        lag_inflation=lag_inflation,
    )


def _update(st: SolverState, row: int, f, g: float) -> SolverState:
    f = np.atleast_1d(np.asarray(f, float))
    if not np.all(np.isfinite(f)):
        raise FloatingPointError(f"non-finite interrogation at t={st.times[row]!r}: {f!r}")
    ct = st.C_t[:, row].copy()
    x = st.X[:, row].copy()
    innovation = f - st.m_t[row]
    st.m += np.outer(x, innovation) / g
    st.m_t += np.outer(ct, innovation) / g
    st.C -= np.outer(x, x) / g
    st.C_t -= np.outer(ct, ct) / g
    st.X -= np.outer(x, ct) / g
    st.n += 1
    st.divisors.append(g)
    return st


def _divisor(st: SolverState, index: int) -> float:
    c = st.C_t[index, index]
    g = c if index == 0 else 2.0 * c
    if st.lag is not None and st.lag_inflation:
        lag_row = st.n_grid + index
        g += st.C_t[lag_row, lag_row] + 2.0 * st.C_t[index, lag_row]
    return _floored(g, float(rr(st.kernel, 0.0, 0.0)), f"update {index + 1}")


def assimilate_first(st: SolverState, f_1) -> SolverState:
    """Condition on the exact first interrogation ``f_1 = f(a, u(a))``."""
    if st.n != 0:
        raise ValueError("assimilate_first expects a fresh prior")
    return _update(st, 0, f_1, _divisor(st, 0))


def assimilate(st: SolverState, n: int, f_n) -> SolverState:
    """Apply update ``n`` (1-based, ``2 <= n <= N``) with ``g_n = 2 C_t^{n-1}(s_n, s_n)``."""
    if st.lag is not None:
        raise ValueError("state carries a lag; use assimilate_lagged")
    if st.n != n - 1 or not 2 <= n <= st.n_grid:
        raise ValueError(f"update index {n} does not follow state after {st.n} updates")
    return _update(st, n - 1, f_n, _divisor(st, n - 1))


def assimilate_lagged(st: SolverState, n: int, f_n, tau: float) -> SolverState:
    """Update ``n`` (1-based) of the delay solver with the lag-augmented divisor.

    ``g_n = 2 C_t(s_n, s_n) + C_t(s_n - tau, s_n - tau) + 2 C_t(s_n, s_n - tau)``
    (the first update uses ``C_t(s_1, s_1)`` in place of the doubled term).
    The lag rows of the state are updated alongside the grid rows.
    """
    if st.lag is None or abs(st.lag - tau) > 1e-12:
        raise ValueError("state was initialised for a different lag")
    if st.n != n - 1 or not 1 <= n <= st.n_grid:
        raise ValueError(f"update index {n} does not follow state after {st.n} updates")
    return _update(st, n - 1, f_n, _divisor(st, n - 1))


def predict(st: SolverState, t):
    """Marginal state mean and variance at an on-grid time ``t``."""
    i = int(st.grid.index_of(t)[0])
    return st.m[i].copy(), float(max(st.C[i, i], 0.0))


def final_marginal(st: SolverState, t_grid=None):
    """Mean ``(T, P)`` and covariance ``(T, T)`` of the state on ``t_grid``."""
    idx = np.arange(st.n_grid) if t_grid is None else st.grid.index_of(t_grid)
    return st.m[idx].copy(), st.C[np.ix_(idx, idx)].copy()


# --- factorisation helpers ---------------------------------------------------


def psd_factor(cov: np.ndarray, jitters=(1e-12, 1e-10, 1e-8)) -> np.ndarray:
    """Square factor ``F`` with ``F F^T ~= cov`` for a PSD matrix.

    Rows with (numerically) zero variance are pinned: their factor rows are
    exactly zero.  The remaining block is Cholesky-factorised, retrying with
    relative diagonal jitter from ``jitters`` and finally falling back to a
    clipped eigendecomposition.
    """
    cov = np.asarray(cov, float)
    n = cov.shape[0]
    out = np.zeros((n, n))
    if n == 0:
        return out
    diag = np.diag(cov)
    scale = float(max(diag.max(), 0.0))
    if scale == 0.0:
        return out
    live = np.flatnonzero(diag > 1e-13 * scale)
    sub = cov[np.ix_(live, live)]
    sub = 0.5 * (sub + sub.T)
    factor = None
    for jitter in (0.0,) + tuple(jitters):
        try:
            factor = cholesky(sub + jitter * scale * np.eye(live.size), lower=True,
                              check_finite=False)
            break
        except np.linalg.LinAlgError:
            continue
    if factor is None:
        w, V = eigh(sub)
        factor = V * np.sqrt(np.clip(w, 0.0, None))
    if live.size == n:
        return factor
    out[np.ix_(live, live)] = factor
    return out


# --- dense plan ---------------------------------------------------------------


@dataclass
class ForwardPlan:
    """Precomputed conditioning for repeated forward draws at unit precision.

    All covariance-type arrays are for ``precision = 1``; a kernel with
    precision ``alpha`` scales them by ``1 / alpha`` while leaving every mean
    unchanged.

    Attributes
    ----------
    gains : ndarray, shape (N, N)
        Unit lower-triangular ``L`` with ``L[n, k] = C_t^{k}(s_n, s_k) / g_k``
        (0-based, ``k < n``).
    divisors : ndarray, shape (N,)
        ``g_1, ..., g_N``.
    schur : ndarray, shape (N,)
        Derivative variances ``C_t^{n-1}(s_n, s_n)`` just before update ``n``.
    cross : ndarray, shape (N, N)
        ``cross[i, k] = int_a^{s_i} C_t^{k}(z, s_k) dz / g_k``.
    next_var : ndarray, shape (N - 1,)
        ``C^n(s_{n+1}, s_{n+1})``.
    lag_cross, lag_next_var : ndarray or None
        The same two quantities for the lag points ``s - lag``.
    return_index : ndarray
        Grid indices of the returned draw.
    final_factor : ndarray, shape (T, T)
        Factor of ``C^N`` on the return grid.
    """

    kernel: KernelSpec
    grid: Grid
    gains: np.ndarray
    divisors: np.ndarray
    schur: np.ndarray
    cross: np.ndarray
    next_var: np.ndarray
    return_index: np.ndarray
    final_factor: np.ndarray
    final_cov: np.ndarray
    lag: float | None = None
    lag_inflation: bool = True
    lag_cross: np.ndarray | None = None
    lag_next_var: np.ndarray | None = None

    @property
    def prior_derivative_variance(self) -> float:
        return float(rr(self.kernel, 0.0, 0.0))


_PLAN_CACHE: "OrderedDict[tuple, ForwardPlan]" = OrderedDict()
_PLAN_CACHE_SIZE = 6


def _unit(kernel: KernelSpec) -> KernelSpec:
    return kernel.with_precision(1.0)


def build_plan(kernel: KernelSpec, grid: Grid, lag: float | None = None,
               lag_inflation: bool = True, return_index=None, block: int = 96,
               cache: bool = True) -> ForwardPlan:
    """Precompute the dense conditioning for ``kernel`` on ``grid``.

    Cost is O(N^3) once; results are cached on (family, length-scale, origin,
    grid, lag, inflation flag, return grid), ignoring the precision.
    """
    unit = _unit(kernel)
    ret = np.arange(grid.n) if return_index is None else np.asarray(return_index, int)
    key = (unit, grid.key(), lag, bool(lag_inflation), ret.tobytes())
    if cache and key in _PLAN_CACHE:
        _PLAN_CACHE.move_to_end(key)
        return _PLAN_CACHE[key]
    plan = _build_dense(unit, grid, lag, lag_inflation, ret, block)
    if cache:
        _PLAN_CACHE[key] = plan
        while len(_PLAN_CACHE) > _PLAN_CACHE_SIZE:
            _PLAN_CACHE.popitem(last=False)
    return plan


def _build_dense(kernel, grid, lag, lag_inflation, ret, block) -> ForwardPlan:
    s = grid.s
    N = s.size
    rr0 = float(rr(kernel, 0.0, 0.0))
    with_lag = lag is not None
    lag_pts = s - lag if with_lag else None

    L = np.zeros((N, N))
    np.fill_diagonal(L, 1.0)
    g = np.empty(N)
    schur = np.empty(N)
    for b0 in range(0, N, block):
        b1 = min(N, b0 + block)
        rows = s[b0:b1]
        W = rr(kernel, rows[:, None], rows[None, :])
        if with_lag:
            lrows = lag_pts[b0:b1]
            WE = rr(kernel, lrows[:, None], rows[None, :])
            dE = np.full(b1 - b0, rr0)
        if b0:
            head = L[:b0, :b0]
            V = solve_triangular(head, rr(kernel, s[:b0, None], rows[None, :]), lower=True,
                                 unit_diagonal=True, check_finite=False).T
            L[b0:b1, :b0] = V / g[:b0]
            W -= V @ L[b0:b1, :b0].T
            if with_lag:
                VE = solve_triangular(head, rr(kernel, s[:b0, None], lrows[None, :]),
                                      lower=True, unit_diagonal=True, check_finite=False).T
                LE = VE / g[:b0]
                WE -= VE @ L[b0:b1, :b0].T
                dE -= np.einsum("ij,ij->i", VE, LE)
        for j in range(b1 - b0):
            k = b0 + j
            c = W[j, j]
            gk = c if k == 0 else 2.0 * c
            if with_lag and lag_inflation:
                gk += dE[j] + 2.0 * WE[j, j]
            gk = _floored(gk, rr0, f"update {k + 1}")
            schur[k] = c
            g[k] = gk
            col = W[j + 1:, j]
            L[k + 1:b1, k] = col / gk
            W[j + 1:, j + 1:] -= np.outer(col, col) / gk
            if with_lag:
                colE = WE[:, j].copy()
                WE[:, j + 1:] -= np.outer(colE, col) / gk
                dE -= colE**2 / gk

    def cross_gain(points):
        # X^{k-1}(y, s_k) / g_k for every row y and update k
        Q = qr(kernel, points[None, :], s[:, None])
        X = solve_triangular(L, Q, lower=True, unit_diagonal=True, check_finite=False,
                             overwrite_b=True).T
        X /= g
        return X

    def ahead_variance(points, B):
        # C^n(p_{n+1}, p_{n+1}) = qq - sum_{k<=n} B[n+1, k]^2 g_k
        prior = qq(kernel, points[1:], points[1:])
        lower = np.tril(B[1:, :] ** 2 * g, k=0)
        return prior - lower.sum(axis=1)

    cross = cross_gain(s)
    next_var = np.maximum(ahead_variance(s, cross), 0.0)
    lag_cross = lag_next_var = None
    if with_lag:
        lag_cross = cross_gain(lag_pts)
        lag_next_var = np.maximum(ahead_variance(lag_pts, lag_cross), 0.0)

    Bt = cross[ret]
    final_cov = qq(kernel, s[ret][:, None], s[ret][None, :]) - (Bt * g) @ Bt.T
    final_cov = 0.5 * (final_cov + final_cov.T)
    return ForwardPlan(
        kernel=kernel, grid=grid, gains=L, divisors=g, schur=schur, cross=cross,
        next_var=next_var, return_index=ret, final_factor=psd_factor(final_cov),
        final_cov=final_cov, lag=lag, lag_inflation=bool(lag_inflation),
        lag_cross=lag_cross, lag_next_var=lag_next_var,
    )


@dataclass
class PlanRun:
    """Result of one pass through a plan.

    Attributes
    ----------
    interrogations : ndarray, shape (N, P)
        ``f_1, ..., f_N``.
    innovations : ndarray, shape (N, P)
        ``f_n - m_t^{n-1}(s_n)``.
    ahead_mean, ahead_sample : ndarray, shape (N - 1, P)
        Step-ahead predictive means and the sampled states at ``s_2..s_N``.
    final_mean, draw : ndarray, shape (T, P)
        Final posterior mean and one draw on the return grid.
    """

    interrogations: np.ndarray
    innovations: np.ndarray
    ahead_mean: np.ndarray
    ahead_sample: np.ndarray
    final_mean: np.ndarray
    draw: np.ndarray
    lag_sample: np.ndarray | None = None


def run_plan(plan: ForwardPlan, precision: float, initial_state, derivative, rng,
             initial_function=None, divergence_bound: float = 1e8) -> PlanRun:
    """Draw one trajectory through a dense plan.

    Parameters
    ----------
    plan : ForwardPlan
    precision : float
        Prior precision ``alpha`` of the kernel.
    initial_state : array_like, shape (P,)
        Exact state at the left boundary; also the constant prior mean.
    derivative : callable
        ``derivative(t, u)`` or, for a lagged plan, ``derivative(t, u, u_lag)``.
    rng : numpy.random.Generator
    initial_function : callable, optional
        ``phi(t, rng)`` giving the state before ``a`` (lagged plans only).
    divergence_bound : float
        Abort if any sampled state exceeds this in absolute value.
    """
    s = plan.grid.s
    N = s.size
    u0 = np.atleast_1d(np.asarray(initial_state, float))
    P = u0.size
    sd_scale = 1.0 / sqrt(precision)
    L, B = plan.gains, plan.cross
    with_lag = plan.lag is not None
    if with_lag and initial_function is None:
        raise ValueError("a lagged plan needs an initial function")
    a = plan.grid.a

    e = np.zeros((N, P))
    fs = np.empty((N, P))
    ahead_mean = np.empty((N - 1, P))
    ahead = np.empty((N - 1, P))
    lag_vals = np.empty((N, P)) if with_lag else None
    u = u0
    u_lag = None
    if with_lag:
        u_lag = _initial_value(initial_function, s[0] - plan.lag, rng, P)
        lag_vals[0] = u_lag
    for n in range(N):
        pred = L[n, :n] @ e[:n] if n else np.zeros(P)
        f = derivative(s[n], u, u_lag) if with_lag else derivative(s[n], u)
        f = np.asarray(f, float).reshape(P)
        if not np.all(np.isfinite(f)):
            raise FloatingPointError(f"non-finite derivative at t={s[n]!r}, u={u!r}")
        fs[n] = f
        e[n] = f - pred
        if n + 1 < N:
            mean = u0 + B[n + 1, :n + 1] @ e[:n + 1]
            ahead_mean[n] = mean
            u = mean + sqrt(plan.next_var[n]) * sd_scale * rng.standard_normal(P)
            if np.any(np.abs(u) > divergence_bound):
                raise FloatingPointError(
                    f"sampled state left the divergence bound at t={s[n + 1]!r}: {u!r}")
            ahead[n] = u
            if with_lag:
                # Drawn every step so each step owns the same variates whatever the lag.
                lag_noise = rng.standard_normal(P)
                t_lag = s[n + 1] - plan.lag
                if t_lag < a:
                    u_lag = _initial_value(initial_function, t_lag, rng, P)
                else:
                    lag_mean = u0 + plan.lag_cross[n + 1, :n + 1] @ e[:n + 1]
                    u_lag = lag_mean + sqrt(plan.lag_next_var[n]) * sd_scale * lag_noise
                lag_vals[n + 1] = u_lag
    final_mean = u0 + B[plan.return_index] @ e
    noise = rng.standard_normal((plan.return_index.size, P))
    draw = final_mean + sd_scale * (plan.final_factor @ noise)
    return PlanRun(fs, e, ahead_mean, ahead, final_mean, draw, lag_vals)


def _initial_value(phi, t, rng, P):
    value = np.asarray(phi(t, rng), float).reshape(-1)
    if value.size == 1 and P > 1:
        value = np.full(P, value[0])
    return value


# --- banded plan (uniform kernel) --------------------------------------------


@dataclass
class BandedPlan:
    """O(N M) conditioning for the uniform kernel.

    With a support of ``2 * length_scale`` the derivative covariance between
    points further apart than the support vanishes.  The LDL^T factor is then
    banded, and the state cross-gain of an update saturates at a constant
    ``cross_inf`` for every state more than one support ahead of it.  Both
    facts keep the step-ahead recursion exact with O(M) work per step.

    Attributes
    ----------
    bandwidth : int
        ``M = ceil(2 * length_scale / h_min)``.
    band : ndarray, shape (N, M)
        ``band[n, j] = L[n, n - 1 - j]``.
    divisors, schur : ndarray, shape (N,)
    ahead : ndarray, shape (N, M + 1)
        ``ahead[k, d] = cross[k + d, k]`` (state ``d`` steps ahead of update ``k``).
    cross_inf : ndarray, shape (N,)
        Saturated cross-gain of update ``k``.
    next_var : ndarray, shape (N - 1,)
    """

    kernel: KernelSpec
    grid: Grid
    bandwidth: int
    band: np.ndarray
    divisors: np.ndarray
    schur: np.ndarray
    ahead: np.ndarray
    cross_inf: np.ndarray
    next_var: np.ndarray
    brownian: dict = field(repr=False, default_factory=dict)


def build_banded_plan(kernel: KernelSpec, grid: Grid) -> BandedPlan:
    """Banded conditioning for the uniform kernel in O(N M^2)."""
    if kernel.family is not KernelFamily.UNIFORM:
        raise ValueError("the banded path requires the compactly supported uniform kernel")
    k = _unit(kernel)
    s = grid.s
    N = s.size
    support = k.support
    M = max(1, int(ceil(support / grid.h_min - 1e-12)))
    rr0 = float(rr(k, 0.0, 0.0))
    a = grid.a

    band = np.zeros((N, M))          # band[n, j] = L[n, n-1-j]
    g = np.empty(N)
    schur = np.empty(N)
    for n in range(N):
        lo = max(0, n - M)
        w = n - lo
        if w:
            cols = np.arange(lo, n)
            # unit-lower block of L restricted to the window
            block = np.eye(w)
            for r, kk in enumerate(cols):
                back = kk - cols[:r]
                inside = back <= M
                block[r, :r][inside] = band[kk, back[inside] - 1]
            rhs = rr(k, s[n], s[cols])
            v = solve_triangular(block, rhs, lower=True, unit_diagonal=True, check_finite=False)
            c = rr0 - np.dot(v, v / g[cols])
            band[n, :w] = (v / g[cols])[::-1]
        else:
            c = rr0
        gn = c if n == 0 else 2.0 * c
        g[n] = _floored(gn, rr0, f"update {n + 1}")
        schur[n] = c

    # cross-gains: X[i, k] = qr(s_i, s_k) - sum_j X[i, j] L[k, j]  (unscaled by g)
    xa = np.zeros((N, M + 1))        # xa[k, d] = X[k + d, k]
    x_inf = np.empty(N)
    q_inf = (k.primitive(1, support) + k.primitive(1, s - a))
    for kk in range(N):
        lo = max(0, kk - M)
        js = np.arange(lo, kk)
        lk = band[kk, (kk - js) - 1] if js.size else np.zeros(0)
        d = np.arange(M + 1)
        rows = kk + d
        valid = rows < N
        qvals = np.full(M + 1, q_inf[kk])
        qvals[valid] = k.primitive(1, s[rows[valid]] - s[kk]) + k.primitive(1, s[kk] - a)
        if js.size:
            offs = rows[:, None] - js[None, :]              # (M+1, w) steps ahead of j
            near = (offs <= M) & valid[:, None]
            Xij = np.where(near, xa[js[None, :], np.minimum(offs, M)], x_inf[js][None, :])
            xa[kk] = qvals - Xij @ lk
            x_inf[kk] = q_inf[kk] - x_inf[js] @ lk
        else:
            xa[kk] = qvals
            x_inf[kk] = q_inf[kk]
        xa[kk, ~valid] = x_inf[kk]
    ahead = xa / g[:, None]
    cross_inf = x_inf / g

    # step-ahead variances with running sums over saturated updates
    qq_diag = qq(k, s, s)
    next_var = np.empty(N - 1)
    far = 0.0
    for n in range(N - 1):
        i = n + 1
        old = i - M - 1
        if old >= 0:
            far += cross_inf[old] ** 2 * g[old]
        ks = np.arange(max(0, i - M), i)
        near = np.sum(ahead[ks, i - ks] ** 2 * g[ks])
        next_var[n] = max(qq_diag[i] - near - far, 0.0)
    return BandedPlan(k, grid, M, band, g, schur, ahead, cross_inf, next_var,
                      brownian=_brownian_layout(k, s))


def _brownian_layout(kernel, s):
    """Sorted evaluation points for the joint (Brownian motion, integral) sample."""
    lam = kernel.length_scale
    a = kernel.origin
    pts = np.concatenate([s - lam, s + lam, [a - lam, a + lam]])
    order = np.argsort(pts, kind="stable")
    sorted_pts = pts[order]
    where = np.empty_like(order)
    where[order] = np.arange(order.size)
    return {"steps": np.diff(sorted_pts, prepend=sorted_pts[0]), "where": where,
            "n": s.size}


def _band_gain_dot(plan: BandedPlan, n: int, e: np.ndarray) -> np.ndarray:
    w = min(n, plan.bandwidth)
    if w == 0:
        return np.zeros(e.shape[1])
    return plan.band[n, :w] @ e[n - 1::-1][:w]


def run_banded_plan(plan: BandedPlan, precision: float, initial_state, derivative, rng,
                    divergence_bound: float = 1e8) -> PlanRun:
    """Draw one trajectory in O(N M) using a :class:`BandedPlan`.

    The random stream for the step-ahead samples matches :func:`run_plan`.
    The final draw uses Matheron's rule with an exact O(N) prior sample, so
    it has the same distribution as the dense path but different noise.
    """
    s = plan.grid.s
    N = s.size
    M = plan.bandwidth
    u0 = np.atleast_1d(np.asarray(initial_state, float))
    P = u0.size
    sd_scale = 1.0 / sqrt(precision)
    e = np.zeros((N, P))
    fs = np.empty((N, P))
    ahead_mean = np.empty((N - 1, P))
    ahead = np.empty((N - 1, P))
    far = np.zeros(P)
    u = u0
    for n in range(N):
        pred = _band_gain_dot(plan, n, e)
        f = np.asarray(derivative(s[n], u), float).reshape(P)
        if not np.all(np.isfinite(f)):
            raise FloatingPointError(f"non-finite derivative at t={s[n]!r}, u={u!r}")
        fs[n] = f
        e[n] = f - pred
        if n + 1 < N:
            i = n + 1
            old = i - M - 1
            if old >= 0:
                far += plan.cross_inf[old] * e[old]
            lo = max(0, i - M)
            ks = np.arange(lo, i)
            mean = u0 + far + plan.ahead[ks, i - ks] @ e[lo:i]
            ahead_mean[n] = mean
            u = mean + sqrt(plan.next_var[n]) * sd_scale * rng.standard_normal(P)
            if np.any(np.abs(u) > divergence_bound):
                raise FloatingPointError(
                    f"sampled state left the divergence bound at t={s[i]!r}: {u!r}")
            ahead[n] = u
    final_mean = u0 + _smoothed_state(plan, e / plan.divisors[:, None])
    residual = _matheron_residual(
        plan,
        rng.standard_normal((2 * N + 2, P)),
        rng.standard_normal((2 * N + 2, P)),
        rng.standard_normal((N, P)),
    )
    return PlanRun(fs, e, ahead_mean, ahead, final_mean, final_mean + sd_scale * residual)


def _back_substitute(plan: BandedPlan, v: np.ndarray) -> np.ndarray:
    """Solve ``L^T w = v`` with the banded unit-lower ``L``."""
    N, M = plan.band.shape
    w = np.array(v, float, copy=True)
    for k in range(N - 2, -1, -1):
        hi = min(N, k + M + 1)
        rows = np.arange(k + 1, hi)
        w[k] -= plan.band[rows, rows - k - 1] @ w[rows]
    return w


def _forward_substitute(plan: BandedPlan, v: np.ndarray) -> np.ndarray:
    """Solve ``L w = v`` with the banded unit-lower ``L``."""
    N = plan.band.shape[0]
    w = np.array(v, float, copy=True)
    for n in range(1, N):
        w[n] -= _band_gain_dot(plan, n, w)
    return w


def _smoothed_state(plan: BandedPlan, weights: np.ndarray) -> np.ndarray:
    """``QR(s, s) L^{-T} weights`` evaluated in O(N M) with prefix sums."""
    k = plan.kernel
    s = plan.grid.s
    N, M = plan.band.shape
    a = plan.grid.a
    w = _back_substitute(plan, weights)
    sat = k.primitive(1, k.support)
    offset = (k.primitive(1, s - a)[:, None] * w).sum(axis=0)
    csum = np.vstack([np.zeros((1, w.shape[1])), np.cumsum(w, axis=0)])
    total = csum[-1]
    idx = np.arange(N)
    lo = np.maximum(idx - M, 0)
    hi = np.minimum(idx + M + 1, N)
    out = sat * csum[lo] - sat * (total - csum[hi])
    d = np.arange(-M, M + 1)
    cols = idx[:, None] + d[None, :]
    valid = (cols >= 0) & (cols < N)
    colc = np.clip(cols, 0, N - 1)
    K1 = np.where(valid, k.primitive(1, s[:, None] - s[colc]), 0.0)
    out += np.einsum("ij,ijp->ip", K1, w[colc])
    return out + offset


def _matheron_residual(plan: BandedPlan, xi_w, xi_j, xi_eta) -> np.ndarray:
    """Zero-mean posterior state sample at unit precision, linear in the noise.

    Parameters
    ----------
    xi_w, xi_j : ndarray, shape (2N + 2, P)
        Standard normals driving Brownian increments and their integrals.
    xi_eta : ndarray, shape (N, P)
        Standard normals for the interrogation noise.
    """
    lay = plan.brownian
    N = lay["n"]
    steps = lay["steps"]
    root = np.sqrt(steps)[:, None]
    dW = root * xi_w
    W = np.cumsum(dW, axis=0)
    W_prev = W - dW
    dJ = W_prev * steps[:, None] + (steps ** 1.5)[:, None] * (xi_w / 2 + xi_j / sqrt(12.0))
    J = np.cumsum(dJ, axis=0)
    Ws = W[lay["where"]]
    Js = J[lay["where"]]
    minus, plus = slice(0, N), slice(N, 2 * N)
    deriv = Ws[plus] - Ws[minus]
    state = Js[plus] - Js[2 * N + 1] - Js[minus] + Js[2 * N]
    gamma = plan.divisors - plan.schur
    observed = deriv + np.sqrt(np.maximum(gamma, 0.0))[:, None] * xi_eta
    z = _forward_substitute(plan, observed) / plan.divisors[:, None]
    return state - _smoothed_state(plan, z)
