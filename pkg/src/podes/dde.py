"""Forward sampling for delay initial function problems with a single lag."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import engine
from .engine import Grid
from .kernels import KernelSpec
from .ode import TrajectoryDraw, _seed_tuple, draw_generator

__all__ = ["DifpProblem", "sample_trajectory_dde"]


@dataclass(frozen=True)
class DifpProblem:
    """Delay problem ``u_t = rhs(t, u(t), u(t - lag), theta)`` on ``[a, b]``.

    Attributes
    ----------
    rhs : callable
        ``rhs(t, u, u_lag, theta)``.
    a, b : float
    lag : float
        Non-negative delay.
    phi : callable
        ``phi(t, rng, theta)`` returning the state for ``t <= a``.  It may be
        random; ``rng`` is the draw's generator.
    theta : ndarray
    u_init : ndarray, optional
        Exact state at ``a``.  When omitted it is ``phi(a, rng, theta)``.
    """

    rhs: Callable
    a: float
    b: float
    lag: float
    phi: Callable
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u_init: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.lag) or self.lag < 0:
            raise ValueError("lag must be finite and non-negative")
        if not self.b > self.a:
            raise ValueError("domain must satisfy a < b")
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, float)))
        if self.u_init is not None:
            object.__setattr__(self, "u_init", np.atleast_1d(np.asarray(self.u_init, float)))

    def history(self, t, rng) -> np.ndarray:
        value = np.atleast_1d(np.asarray(self.phi(t, rng, self.theta), float))
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"initial function returned non-finite values at t={t!r}")
        return value

    def derivative(self, t, u, u_lag):
        return np.asarray(self.rhs(t, u, u_lag, self.theta), float)


def sample_trajectory_dde(problem: DifpProblem, kernel: KernelSpec, grid: Grid, seed,
                          method: str = "dense", t_eval=None, lag_inflation: bool = True,
                          divergence_bound: float = 1e8) -> TrajectoryDraw:
    """Draw one trajectory of a delay problem.

    At each step the lagged state comes from the initial function while
    ``s - lag < a`` and from the current GP marginal at ``s - lag`` otherwise.
    Every step draws its lag variates either way, so a fixed stream of
    normals maps to the same steps whatever the lag.

    Parameters
    ----------
    problem : DifpProblem
    kernel : KernelSpec
    grid : Grid
    seed : int or tuple of int
    method : {"dense", "literal"}
    t_eval : array_like, optional
        On-grid times of the returned draw.
    lag_inflation : bool
        Add the lag covariance terms to each gain divisor.
    """
    if abs(grid.a - problem.a) > 1e-12 * max(1.0, abs(problem.a)) or \
            abs(grid.b - problem.b) > 1e-9 * max(1.0, abs(problem.b)):
        raise ValueError("grid must span the problem domain")
    if method not in ("dense", "literal"):
        raise ValueError("method must be 'dense' or 'literal'")
    rng = draw_generator(seed)
    ret = np.arange(grid.n) if t_eval is None else grid.index_of(t_eval)
    u0 = problem.u_init if problem.u_init is not None else problem.history(problem.a, rng)
    phi = problem.history
    if method == "dense":
        plan = engine.build_plan(kernel, grid, lag=problem.lag, lag_inflation=lag_inflation,
                                 return_index=ret)
        run = engine.run_plan(plan, kernel.precision, u0, problem.derivative, rng,
                              initial_function=phi, divergence_bound=divergence_bound)
        fs, mean, draw = run.interrogations, run.final_mean, run.draw
    else:
        fs, mean, draw = _literal_run(problem, kernel, grid, rng, u0, ret, lag_inflation,
                                      divergence_bound)
    draw = np.array(draw)
    draw[ret == 0] = u0
    return TrajectoryDraw(grid.s[ret].copy(), draw, fs, mean, _seed_tuple(seed))


def _literal_run(problem, kernel, grid, rng, u0, ret, lag_inflation, divergence_bound):
    tau = problem.lag
    st = engine.init_prior(u0, kernel, grid, lag=tau, lag_inflation=lag_inflation)
    P = u0.size
    fs = np.empty((grid.n, P))
    u = u0
    u_lag = problem.history(grid.a - tau, rng)
    for n in range(1, grid.n + 1):
        f = problem.derivative(grid.s[n - 1], u, u_lag)
        if not np.all(np.isfinite(f)):
            raise FloatingPointError(f"non-finite derivative at t={grid.s[n - 1]!r}, u={u!r}")
        fs[n - 1] = f
        engine.assimilate_lagged(st, n, f, tau)
        if n < grid.n:
            mean, var = engine.predict(st, grid.s[n])
            u = mean + np.sqrt(var) * rng.standard_normal(P)
            if np.any(np.abs(u) > divergence_bound):
                raise FloatingPointError(
                    f"sampled state left the divergence bound at t={grid.s[n]!r}: {u!r}")
            lag_noise = rng.standard_normal(P)
            t_lag = grid.s[n] - tau
            if t_lag < grid.a:
                u_lag = problem.history(t_lag, rng)
            else:
                row = grid.n + n
                var_lag = max(st.C[row, row], 0.0)
                u_lag = st.m[row] + np.sqrt(var_lag) * lag_noise
    mean, cov = engine.final_marginal(st, grid.s[ret])
    draw = mean + engine.psd_factor(cov) @ rng.standard_normal((ret.size, P))
    return fs, mean, draw
