"""Forward sampling of probabilistic solutions to ODE initial value problems."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import engine
from .diagnostics import EnsembleSummary, RateFit, fit_rate, summarize
from .engine import Grid
from .kernels import KernelFamily, KernelSpec

__all__ = [
    "IvpProblem",
    "TrajectoryDraw",
    "draw_generator",
    "sample_trajectory",
    "sample_ensemble",
    "ConvergenceTable",
    "convergence_study",
]

METHODS = ("auto", "literal", "dense", "banded")


@dataclass(frozen=True)
class IvpProblem:
    """First-order initial value problem ``u_t = rhs(t, u, theta)``, ``u(a) = u_init``.

    Higher-order equations must be rewritten as first-order systems before
    they reach the solver.
    """

    rhs: Callable
    a: float
    b: float
    u_init: np.ndarray
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        u0 = np.atleast_1d(np.asarray(self.u_init, float))
        if u0.ndim != 1 or u0.size < 1 or not np.all(np.isfinite(u0)):
            raise ValueError("initial state must be a finite vector")
        if not self.b > self.a:
            raise ValueError("domain must satisfy a < b")
        object.__setattr__(self, "u_init", u0)
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, float)))

    @property
    def dim(self) -> int:
        return self.u_init.size

    def derivative(self, t, u):
        return np.asarray(self.rhs(t, u, self.theta), float)

    def with_theta(self, theta) -> "IvpProblem":
        return IvpProblem(self.rhs, self.a, self.b, self.u_init, theta)

    def with_initial_state(self, u_init) -> "IvpProblem":
        return IvpProblem(self.rhs, self.a, self.b, u_init, self.theta)


@dataclass(frozen=True)
class TrajectoryDraw:
    """One realisation of the probabilistic solution.

    Attributes
    ----------
    t_grid : ndarray, shape (T,)
    u : ndarray, shape (T, P)
        Sampled state on ``t_grid``.
    f_seq : ndarray, shape (N, P)
        Interrogations ``f_1, ..., f_N``.
    mean : ndarray, shape (T, P)
        Posterior mean on ``t_grid`` given this draw's interrogations.
    seed : tuple of int
    """

    t_grid: np.ndarray
    u: np.ndarray
    f_seq: np.ndarray
    mean: np.ndarray
    seed: tuple


def draw_generator(seed) -> np.random.Generator:
    """Counter-based generator for a seed given as an int or a tuple of ints.

    Objects that already provide ``standard_normal`` (a generator or a
    noise tape) are returned unchanged.
    """
    if hasattr(seed, "standard_normal"):
        return seed
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _seed_tuple(seed) -> tuple:
    if hasattr(seed, "standard_normal"):
        return ()
    return tuple(int(x) for x in seed) if isinstance(seed, (tuple, list)) else (int(seed),)


def _check(problem, kernel: KernelSpec, grid: Grid):
    if abs(grid.a - problem.a) > 1e-12 * max(1.0, abs(problem.a)) or \
            abs(grid.b - problem.b) > 1e-9 * max(1.0, abs(problem.b)):
        raise ValueError("grid must span the problem domain")
    if abs(kernel.origin - grid.a) > 1e-12 * max(1.0, abs(grid.a)):
        raise ValueError("kernel origin must equal the left end of the domain")


def _resolve_method(method: str, kernel: KernelSpec) -> str:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method == "auto":
        return "banded" if kernel.family is KernelFamily.UNIFORM else "dense"
    return method


def _literal_run(problem, kernel, grid, rng, ret, divergence_bound):
    st = engine.init_prior(problem.u_init, kernel, grid)
    P = problem.dim
    fs = np.empty((grid.n, P))
    u = problem.u_init
    for n in range(1, grid.n + 1):
        f = problem.derivative(grid.s[n - 1], u)
        if not np.all(np.isfinite(f)):
            raise FloatingPointError(f"non-finite derivative at t={grid.s[n - 1]!r}, u={u!r}")
        fs[n - 1] = f
        if n == 1:
            engine.assimilate_first(st, f)
        else:
            engine.assimilate(st, n, f)
        if n < grid.n:
            mean, var = engine.predict(st, grid.s[n])
            u = mean + np.sqrt(var) * rng.standard_normal(P)
            if np.any(np.abs(u) > divergence_bound):
                raise FloatingPointError(
                    f"sampled state left the divergence bound at t={grid.s[n]!r}: {u!r}")
    mean, cov = engine.final_marginal(st, grid.s[ret])
    draw = mean + engine.psd_factor(cov) @ rng.standard_normal((ret.size, P))
    return fs, mean, draw


def sample_trajectory(problem: IvpProblem, kernel: KernelSpec, grid: Grid, seed,
                      method: str = "auto", t_eval=None,
                      divergence_bound: float = 1e8) -> TrajectoryDraw:
    """Draw one trajectory from the probabilistic solution of an IVP.

    Parameters
    ----------
    problem : IvpProblem
    kernel : KernelSpec
        Its origin must be the left end of the domain.
    grid : Grid
        Interrogation grid spanning ``[a, b]``.
    seed : int or tuple of int
    method : {"auto", "literal", "dense", "banded"}
        ``literal`` applies the rank-one updates directly; ``dense`` and
        ``banded`` use precomputed plans and give identical step-ahead
        samples.  ``auto`` picks ``banded`` for the uniform kernel.
    t_eval : array_like, optional
        On-grid times of the returned draw (default: the whole grid).
    divergence_bound : float
        Abort when any sampled state exceeds this in absolute value.

    Raises
    ------
    FloatingPointError
        On a non-finite derivative or a diverging sample.
    """
    _check(problem, kernel, grid)
    method = _resolve_method(method, kernel)
    ret = np.arange(grid.n) if t_eval is None else grid.index_of(t_eval)
    rng = draw_generator(seed)
    if method == "literal":
        fs, mean, draw = _literal_run(problem, kernel, grid, rng, ret, divergence_bound)
    elif method == "dense":
        plan = engine.build_plan(kernel, grid, return_index=ret)
        run = engine.run_plan(plan, kernel.precision, problem.u_init, problem.derivative, rng,
                              divergence_bound=divergence_bound)
        fs, mean, draw = run.interrogations, run.final_mean, run.draw
    else:
        plan = _banded_plan(kernel, grid)
        run = engine.run_banded_plan(plan, kernel.precision, problem.u_init,
                                     problem.derivative, rng,
                                     divergence_bound=divergence_bound)
        fs, mean, draw = run.interrogations, run.final_mean[ret], run.draw[ret]
    draw = np.array(draw)
    draw[ret == 0] = problem.u_init
    return TrajectoryDraw(grid.s[ret].copy(), draw, fs, mean, _seed_tuple(seed))


_BANDED_CACHE: dict = {}


def _banded_plan(kernel, grid):
    key = (kernel.with_precision(1.0), grid.key())
    if key not in _BANDED_CACHE:
        _BANDED_CACHE.clear()
        _BANDED_CACHE[key] = engine.build_banded_plan(kernel, grid)
    return _BANDED_CACHE[key]


def sample_ensemble(problem: IvpProblem, kernel: KernelSpec, grid: Grid, n_draws: int,
                    base_seed: int, method: str = "auto", t_eval=None,
                    divergence_bound: float = 1e8):
    """Independent draws with seeds ``(base_seed, i)`` and their summary.

    Returns
    -------
    draws : list of TrajectoryDraw
    summary : EnsembleSummary
    """
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    draws = [
        sample_trajectory(problem, kernel, grid, (base_seed, i), method=method, t_eval=t_eval,
                          divergence_bound=divergence_bound)
        for i in range(n_draws)
    ]
    summary = summarize(draws[0].t_grid, np.stack([d.u for d in draws]))
    return draws, summary


@dataclass(frozen=True)
class ConvergenceTable:
    """Monte Carlo error of the probabilistic solution on a sequence of grids."""

    n: np.ndarray
    h: np.ndarray
    mean_abs_error: np.ndarray
    fit: RateFit

    @property
    def slope(self) -> float:
        return self.fit.slope


def convergence_study(problem: IvpProblem, exact: Callable, grid_sizes: Sequence[int],
                      n_draws: int = 50, base_seed: int = 0, family="squared_exponential",
                      length_ratio: float = 4.0, variance_ratio: float = 1.0,
                      component: int = 0, method: str = "auto") -> ConvergenceTable:
    """Mean absolute error of draws against an exact solution as the grid is refined.

    For each size ``N`` the kernel is rebuilt with ``length_scale`` and
    ``1 / precision`` proportional to the step.  The error is averaged over
    draws and over the grid, for one state component.

    Parameters
    ----------
    exact : callable
        ``exact(t)`` returning the exact value of ``component`` at times ``t``.
    grid_sizes : sequence of int
        At least three sizes.
    """
    sizes = [int(n) for n in grid_sizes]
    if len(sizes) < 3:
        raise ValueError("a convergence study needs at least three grid sizes")
    hs, errs = [], []
    for n in sizes:
        grid = Grid.uniform(problem.a, problem.b, n)
        kernel = engine.policy_kernel(family, grid, length_ratio, variance_ratio)
        truth = np.asarray(exact(grid.s), float)
        total = 0.0
        for i in range(n_draws):
            d = sample_trajectory(problem, kernel, grid, (base_seed, n, i), method=method)
            total += np.mean(np.abs(d.u[:, component] - truth))
        hs.append(grid.h_max)
        errs.append(total / n_draws)
    hs, errs = np.array(hs), np.array(errs)
    return ConvergenceTable(np.array(sizes), hs, errs, fit_rate(hs, errs))
