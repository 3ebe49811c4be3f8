"""Catalogue of test problems with exact-solution oracles and data generators."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from math import log, pi, sqrt
from typing import Callable

import numpy as np
from scipy import stats

from .dde import DifpProblem
from .ode import IvpProblem
from .pde import HeatProblem

__all__ = [
    "NamedProblem",
    "get",
    "ids",
    "sinusoid_exact",
    "linear_dde_exact",
    "epo_pulse",
    "jakstat_rhs",
    "jakstat_observe",
    "JAKSTAT_TRUTH",
    "Dataset",
    "simulate_data",
    "ftcs_baseline",
    "check_residual",
]


@dataclass(frozen=True)
class NamedProblem:
    """A registered problem.

    Attributes
    ----------
    id : str
    kind : {"ivp", "difp", "mbvp", "pde"}
    problem : object
        Solver-ready problem definition.
    exact : callable or None
        Exact solution; ``exact(t)`` returns shape ``(T, P)`` (``exact(x, t)``
        for the heat equation).
    default_config : dict
        Grid and kernel settings used in the reference experiments.
    """

    id: str
    kind: str
    problem: object
    exact: Callable | None = None
    default_config: dict = field(default_factory=dict)


# --- sinusoid -------------------------------------------------------------------


def _sinusoid_rhs(t, u, theta):
    return np.array([u[1], np.sin(theta[0] * t) - u[0]])


def sinusoid_exact(t, theta: float = 2.0) -> np.ndarray:
    """State and derivative of ``u_tt = sin(theta t) - u``, ``u(0) = -1``, ``u_t(0) = 0``."""
    t = np.atleast_1d(np.asarray(t, float))
    d = theta**2 - 1.0
    u = (-theta**2 * np.cos(t) + theta * np.sin(t) - np.sin(theta * t) + np.cos(t)) / d
    v = (theta**2 * np.sin(t) + theta * np.cos(t) - theta * np.cos(theta * t) - np.sin(t)) / d
    return np.stack([u, v], axis=-1)


# --- Lorenz ---------------------------------------------------------------------


def _lorenz_rhs(t, u, theta):
    sigma, r, b = theta
    return np.array([
        -sigma * (u[0] + u[1]),
        -r * u[0] - u[1] - u[0] * u[2],
        u[0] * u[1] - b * u[2],
    ])


# --- Lane-Emden -----------------------------------------------------------------

LANE_EMDEN_RIGHT_VALUE = sqrt(3.0) / 2.0
LANE_EMDEN_LEFT_SLOPE = -288.0 / 2197.0


def _lane_emden_rhs(t, u, theta):
    return np.array([u[1], -2.0 * u[1] / t - u[0] ** 5])


# --- linear delay equation ----------------------------------------------------


def linear_dde_exact(t, lag: float = 1.0) -> np.ndarray:
    """Method-of-steps solution of ``u_t = -u(t - lag)`` with ``u = 1`` before zero.

    On each interval ``[k lag, (k+1) lag]`` the solution is the partial sum
    ``sum_{j <= k+1} (-1)^j (t - (j-1) lag)^j / j!`` of a polynomial series.
    """
    t = np.atleast_1d(np.asarray(t, float))
    out = np.ones_like(t)
    j = 1
    fact = 1.0
    while True:
        start = (j - 1) * lag
        active = t > start
        if not np.any(active):
            break
        fact *= j
        out = out + np.where(active, (-1.0) ** j * np.clip(t - start, 0, None) ** j / fact, 0.0)
        j += 1
    return out[:, None]


# --- JAK-STAT-shaped synthetic problem -----------------------------------------


def epo_pulse(t):
    """Synthetic receptor-activation forcing: a smooth pulse peaking at ``t = 4``."""
    t = np.clip(np.asarray(t, float), 0.0, None)
    return (t / 4.0) * np.exp(1.0 - t / 4.0)


def jakstat_rhs(t, u, u_lag, theta):
    """Four-state delay system driven by :func:`epo_pulse`.

    ``theta = [k1, k2, k3, k4, k5, k6, tau, u1_0]``; the observation scales
    ``k5, k6``, the delay and the initial state enter elsewhere.
    """
    k1, k2, k3, k4 = theta[:4]
    e = epo_pulse(t)
    return np.array([
        -k1 * u[0] * e + 2.0 * k4 * u_lag[3],
        k1 * u[0] * e - k2 * u[1] ** 2,
        -k3 * u[2] + 0.5 * k2 * u[1] ** 2,
        k3 * u[2] - k4 * u_lag[3],
    ])


def jakstat_observe(u, theta) -> np.ndarray:
    """Map states ``(T, 4)`` to the four observed channels ``(T, 4)``."""
    u = np.atleast_2d(u)
    k5, k6 = theta[4], theta[5]
    total = u[:, 1] + u[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(total != 0, u[:, 2] / total, 0.0)
    return np.stack([
        k5 * (u[:, 1] + 2.0 * u[:, 2]),
        k6 * (u[:, 0] + u[:, 1] + 2.0 * u[:, 2]),
        u[:, 0],
        ratio,
    ], axis=1)


def _prior_medians() -> dict:
    return {
        "k": log(2.0),
        "tau": float(stats.chi2.median(6)),
        "length_scale": float(stats.chi2.median(1)),
        "precision": float(np.exp(10.0) - 100.0),
    }


_MED = _prior_medians()
JAKSTAT_TRUTH = {
    "theta": np.array([_MED["k"]] * 3 + [0.1] + [_MED["k"]] * 2 + [_MED["tau"], 3.0]),
    "length_scale": _MED["length_scale"],
    "precision": _MED["precision"],
}
"""Generating values: prior medians everywhere except the delayed return rate.

The delayed return rate is ``k4 = 0.1`` rather than the median: the delayed
loop ``u4' = -k4 u4(t - tau)`` oscillates with growing amplitude once
``k4 * tau`` exceeds pi / 2.  The initial state ``u1(0) = 3`` sets the scale;
its prior is centred on the first observation of the third channel.
"""


def jakstat_problem(theta) -> DifpProblem:
    theta = np.asarray(theta, float)
    u1_0 = float(theta[7])

    def phi(t, rng, th):
        return np.array([th[7], 0.0, 0.0, 0.0])

    return DifpProblem(jakstat_rhs, 0.0, 60.0, float(theta[6]), phi, theta,
                       u_init=np.array([u1_0, 0.0, 0.0, 0.0]))


# --- heat -----------------------------------------------------------------------


def _heat_exact(x, t, kappa=1.0):
    return np.exp(-kappa * pi**2 * np.asarray(t, float)) * np.sin(pi * np.asarray(x, float))


# --- residual check -------------------------------------------------------------


def _derivative(fn, t, h):
    """Fourth-order central difference."""
    return (-fn(t + 2 * h) + 8 * fn(t + h) - 8 * fn(t - h) + fn(t - 2 * h)) / (12 * h)


def check_residual(named: NamedProblem, n_probe: int = 201, tol: float = 1e-8) -> float:
    """Largest residual of the differential relation along the exact solution.

    Raises
    ------
    ValueError
        When the residual exceeds ``tol``.
    """
    if named.exact is None:
        return 0.0
    h = 1e-3
    p = named.problem
    if named.kind == "ivp":
        t = np.linspace(p.a + 3 * h, p.b - 3 * h, n_probe)
        du = _derivative(named.exact, t, h)
        u = named.exact(t)
        f = np.stack([p.derivative(ti, ui) for ti, ui in zip(t, u)])
        scale = max(1.0, float(np.abs(f).max()))
        res = float(np.abs(du - f).max()) / scale
    elif named.kind == "difp":
        t = np.linspace(p.a + 3 * h, p.b - 3 * h, n_probe)
        knots = np.arange(0.0, p.b + p.lag, p.lag) if p.lag > 0 else np.array([0.0])
        t = t[np.min(np.abs(t[:, None] - knots[None, :]), axis=1) > 4 * h]
        du = _derivative(named.exact, t, h)
        u = named.exact(t)
        ul = named.exact(t - p.lag)
        f = np.stack([p.derivative(ti, ui, li) for ti, ui, li in zip(t, u, ul)])
        res = float(np.abs(du - f).max())
    elif named.kind == "pde":
        x = np.linspace(0.05, 0.95, 19)
        t = np.linspace(0.01, 0.24, 24)
        X, T = np.meshgrid(x, t)
        ut = _derivative(lambda s: named.exact(X, s), T, h)
        uxx = (-named.exact(X + 2 * h, T) + 16 * named.exact(X + h, T) - 30 * named.exact(X, T)
               + 16 * named.exact(X - h, T) - named.exact(X - 2 * h, T)) / (12 * h * h)
        res = float(np.abs(ut - p.kappa * uxx).max()) / (pi**2)
    else:
        return 0.0
    if not res < tol:
        raise ValueError(f"exact solution of {named.id!r} fails its residual check: {res:.2e}")
    return res


# --- registry -------------------------------------------------------------------


def _build() -> dict:
    reg = {}

    def add(named):
        check_residual(named)
        reg[named.id] = named

    add(NamedProblem(
        "sinusoid_ivp", "ivp",
        IvpProblem(_sinusoid_rhs, 0.0, 10.0, [-1.0, 0.0], [2.0]),
        exact=lambda t: sinusoid_exact(t, 2.0),
        default_config={"n": [50, 100, 200], "family": "squared_exponential",
                        "length_ratio": 2.0, "variance_ratio": 1.0, "draws": 100},
    ))
    add(NamedProblem(
        "lorenz63", "ivp",
        IvpProblem(_lorenz_rhs, 0.0, 20.0, [-12.0, -5.0, 38.0], [10.0, 28.0, 8.0 / 3.0]),
        default_config={"n": [5001], "family": "squared_exponential", "length_ratio": 2.0,
                        "precision": 5001.0, "draws": 1000},
    ))
    add(NamedProblem(
        "lane_emden", "mbvp",
        IvpProblem(_lane_emden_rhs, 0.5, 1.0, [1.5, LANE_EMDEN_LEFT_SLOPE]),
        default_config={"n": [100], "family": "squared_exponential", "length_ratio": 2.0,
                        "precision": 1.0, "right_value": LANE_EMDEN_RIGHT_VALUE,
                        "left_slope": LANE_EMDEN_LEFT_SLOPE, "prior_mean": 1.5,
                        "prior_sd": 2.0 * abs(LANE_EMDEN_RIGHT_VALUE - LANE_EMDEN_LEFT_SLOPE)},
    ))
    add(NamedProblem(
        "heat", "pde", HeatProblem(1.0),
        exact=lambda x, t: _heat_exact(x, t, 1.0),
        default_config={"nx": 15, "nt": 50, "draws": 50},
    ))
    add(NamedProblem(
        "linear_dde", "difp",
        DifpProblem(lambda t, u, ul, th: -ul, 0.0, 4.0, 1.0,
                    lambda t, rng, th: np.array([1.0])),
        exact=lambda t: linear_dde_exact(t, 1.0),
        default_config={"n": [201], "family": "uniform"},
    ))
    add(NamedProblem(
        "jakstat_synthetic", "difp", jakstat_problem(JAKSTAT_TRUTH["theta"]),
        default_config={"n": [500], "family": "uniform",
                        "length_scale": JAKSTAT_TRUTH["length_scale"],
                        "precision": JAKSTAT_TRUTH["precision"], "n_obs": 16},
    ))
    return reg


_REGISTRY = _build()


def ids() -> list[str]:
    return sorted(_REGISTRY)


def get(problem_id: str) -> NamedProblem:
    """Look up a registered problem by id."""
    try:
        return _REGISTRY[problem_id]
    except KeyError:
        raise KeyError(f"unknown problem {problem_id!r}; known: {', '.join(ids())}") from None


# --- data -----------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Noisy observations ``y = G(u) + noise`` with per-row noise SDs."""

    channel: np.ndarray
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    sd: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["channel", "x", "t", "y", "sd"])
        for row in zip(self.channel, self.x, self.t, self.y, self.sd):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def simulate_data(truth: Callable, locations, noise_sd, seed, domain=None,
                  channels=None) -> Dataset:
    """Evaluate ``truth`` at the locations and add independent Gaussian noise.

    Parameters
    ----------
    truth : callable
        ``truth(x, t)`` returning one value per location (the observation
        operator applied to the reference solution).  With ``channels`` given
        it is called as ``truth(channel, x, t)``.
    locations : array_like, shape (L, 2)
        ``(x, t)`` pairs; ``x`` is ignored for purely temporal problems.
    noise_sd : float or array_like
        Per-location noise SDs; zero gives noiseless data.
    seed : int
    domain : ((x_lo, x_hi), (t_lo, t_hi)), optional
        Locations outside raise ``ValueError``.
    channels : array_like of int, optional
    """
    loc = np.atleast_2d(np.asarray(locations, float))
    x, t = loc[:, 0], loc[:, 1]
    if domain is not None:
        (x0, x1), (t0, t1) = domain
        tol = 1e-12
        if np.any((x < x0 - tol) | (x > x1 + tol) | (t < t0 - tol) | (t > t1 + tol)):
            raise ValueError("observation locations fall outside the problem domain")
    ch = np.zeros(x.size, int) if channels is None else np.asarray(channels, int)
    clean = np.asarray(truth(x, t) if channels is None else truth(ch, x, t), float)
    sd = np.broadcast_to(np.asarray(noise_sd, float), clean.shape).copy()
    if np.any(sd < 0):
        raise ValueError("noise SDs must be non-negative")
    rng = np.random.default_rng(seed)
    y = clean + sd * rng.standard_normal(clean.shape)
    return Dataset(ch, x, t, y, sd)


def ftcs_baseline(problem: HeatProblem, z, t_grid) -> np.ndarray:
    """Forward-in-time, centred-in-space finite differences for the heat equation.

    Returns the surface with shape ``(len(t_grid), len(z))``.  Warns when the
    stability ratio ``kappa dt / dx^2`` exceeds 1/2.
    """
    z = np.asarray(z, float)
    t = np.asarray(getattr(t_grid, "s", t_grid), float)
    dx = np.diff(z)
    dt = np.diff(t)
    if not (np.allclose(dx, dx[0]) and np.allclose(dt, dt[0])):
        raise ValueError("FTCS needs uniform grids")
    ratio = problem.kappa * dt[0] / dx[0] ** 2
    if ratio > 0.5:
        warnings.warn(f"FTCS stability ratio {ratio:.3f} exceeds 1/2", RuntimeWarning,
                      stacklevel=2)
    out = np.empty((t.size, z.size))
    u = problem.initial(z)
    u[0] = u[-1] = 0.0
    out[0] = u
    for n in range(1, t.size):
        nxt = u.copy()
        nxt[1:-1] = u[1:-1] + ratio * (u[2:] - 2.0 * u[1:-1] + u[:-2])
        nxt[0] = nxt[-1] = 0.0
        u = nxt
        out[n] = u
    return out
