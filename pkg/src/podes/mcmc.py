"""Metropolis-Hastings and parallel tempering for inverse problems with forward-model draws.

Every proposal triggers a fresh draw from the probabilistic forward solver.
The likelihood is evaluated on that draw, and an accepted proposal carries its
draw along.  The marginal over solver draws is never computed; the chain
targets the joint posterior of parameters and solution draws.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import engine
from .engine import Grid
from .kernels import KernelSpec
from .ode import IvpProblem, draw_generator

__all__ = [
    "Parameter",
    "InverseSpec",
    "ChainRecord",
    "ChainResult",
    "PtConfig",
    "PtResult",
    "gaussian_log_likelihood",
    "mh_inverse",
    "pt_wrap",
    "mh_mbvp",
    "mbvp_spec",
    "dde_inverse",
    "heat_spec",
    "jakstat_spec",
    "jakstat_dataset",
    "jakstat_truth_values",
    "NoiseTape",
]

log = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.25
ADAPT_EVERY = 50
ADAPT_MIN_HISTORY = 200


@dataclass(frozen=True)
class Parameter:
    """An unknown with its prior and random-walk proposal.

    Attributes
    ----------
    name : str
    prior : scipy frozen distribution
        Anything with ``logpdf`` and ``median``.
    positive : bool
        Propose on the log scale (the Jacobian enters the ratio).
    scale : float
        Initial proposal SD (on the log scale for positive parameters).
    initial : float, optional
        Starting value; the prior median by default.
    """

    name: str
    prior: object
    positive: bool = False
    scale: float = 0.1
    initial: float | None = None

    def start(self) -> float:
        return float(self.prior.median() if self.initial is None else self.initial)


@dataclass(frozen=True)
class InverseSpec:
    """An inverse problem ready for sampling.

    Attributes
    ----------
    parameters : tuple of Parameter
    log_likelihood : callable
        ``log_likelihood(values, seed)`` with ``values`` a name-to-float dict
        and ``seed`` a tuple of ints for the forward draw.  It may raise
        ``FloatingPointError`` or ``numpy.linalg.LinAlgError`` to signal a
        failed forward solve, which counts as a rejection.
    blocks : tuple of tuple of str, optional
        Parameter groups updated in turn, each with its own forward draw.
        One block with every parameter by default.
    noise_step : float, optional
        When omitted every proposal draws fresh solver noise.  When given,
        the chain carries the standard-normal variates behind its current
        forward draw: parameter blocks keep them fixed, and an extra noise
        block moves them by a preconditioned Crank-Nicolson step
        ``rho * noise + noise_step * fresh`` with ``rho = sqrt(1 - noise_step**2)``.
        Both schemes target the same joint posterior of parameters and
        draws; the correlated one mixes far better when solver uncertainty
        dominates the data noise.
    noise_moves : int
        Noise-block updates per iteration in the correlated scheme.
    """

    parameters: tuple
    log_likelihood: Callable
    blocks: tuple | None = None
    noise_step: float | None = None
    noise_moves: int = 1

    def __post_init__(self):
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        blocks = self.blocks or (tuple(names),)
        flat = [n for b in blocks for n in b]
        if sorted(flat) != sorted(names):
            raise ValueError("blocks must partition the parameters")
        if self.noise_step is not None and not 0 < self.noise_step <= 1:
            raise ValueError("noise_step must lie in (0, 1]")
        if self.noise_moves < 1:
            raise ValueError("noise_moves must be at least 1")
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "blocks", tuple(tuple(b) for b in blocks))

    @property
    def names(self) -> tuple:
        return tuple(p.name for p in self.parameters)


@dataclass(frozen=True)
class ChainRecord:
    """State of one chain after one iteration.

    ``draw_seed`` regenerates the forward draw behind ``log_likelihood``:
    a seed tuple, or the standard-normal variates themselves for chains
    with correlated solver noise.
    """

    iteration: int
    chain: int
    temperature: float
    theta: np.ndarray
    log_likelihood: float
    log_prior: float
    accepted: bool
    draw_seed: object


class NoiseTape:
    """Standard-normal variates served in order, extended on demand.

    Forward solvers only call ``standard_normal``, so a tape can stand in for
    a generator and fixes the noise behind a draw.
    """

    def __init__(self, values, extension: np.random.Generator):
        self._values = np.asarray(values, float).ravel()
        self._pos = 0
        self._extension = extension

    def standard_normal(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        short = self._pos + n - self._values.size
        if short > 0:
            self._values = np.concatenate([self._values,
                                           self._extension.standard_normal(short)])
        out = self._values[self._pos:self._pos + n]
        self._pos += n
        return float(out[0]) if size is None else out.reshape(size)

    @property
    def used(self) -> np.ndarray:
        return self._values[:self._pos].copy()


@dataclass
class ChainResult:
    """Post-burn-in records plus bookkeeping."""

    names: tuple
    records: list
    block_acceptance: dict
    proposal_scales: dict
    failures: int = 0

    def samples(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return self.samples()[:, self.names.index(name)]


@dataclass(frozen=True)
class PtConfig:
    """Temperature ladder and swap probability for parallel tempering."""

    gamma: tuple
    xi: float = 0.2

    def __post_init__(self):
        g = np.asarray(self.gamma, float)
        if g.ndim != 1 or g.size < 1:
            raise ValueError("ladder must be a non-empty sequence")
        if np.any(np.diff(g) < 0) or g[-1] != 1.0 or g[0] <= 0:
            raise ValueError("ladder must be ascending in (0, 1] and end at exactly 1")
        if not 0 <= self.xi <= 1:
            raise ValueError("swap probability must lie in [0, 1]")
        object.__setattr__(self, "gamma", tuple(float(x) for x in g))

    @classmethod
    def uniform(cls, chains: int, low: float = 0.5, xi: float = 0.2) -> "PtConfig":
        if chains == 1:
            return cls((1.0,), xi)
        return cls(tuple(np.linspace(low, 1.0, chains)), xi)

    @property
    def chains(self) -> int:
        return len(self.gamma)


@dataclass
class PtResult:
    """Cold-chain samples and swap statistics per adjacent pair."""

    cold: ChainResult
    swap_attempts: np.ndarray
    swap_accepts: np.ndarray

    @property
    def swap_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.swap_attempts > 0, self.swap_accepts / self.swap_attempts,
                            np.nan)


def gaussian_log_likelihood(y, predicted, sd) -> float:
    """Independent Gaussian log-likelihood; infinite SDs carry no information."""
    y, predicted, sd = (np.asarray(v, float) for v in (y, predicted, sd))
    sd = np.broadcast_to(sd, y.shape)
    informative = np.isfinite(sd)
    if not np.all(np.isfinite(predicted[informative])):
        return -np.inf
    r = (y[informative] - predicted[informative]) / sd[informative]
    return float(-0.5 * np.sum(r * r) - np.sum(np.log(sd[informative]))
                 - 0.5 * informative.sum() * np.log(2 * np.pi))


# --- core sampler ---------------------------------------------------------------


class _Chain:
    """One tempered chain with its own random stream."""

    def __init__(self, spec: InverseSpec, temperature: float, index: int, seed: int):
        self.spec = spec
        self.temperature = temperature
        self.index = index
        self.seed = seed
        self.rng = draw_generator((seed, index))
        self.params = {p.name: p for p in spec.parameters}
        self.values = {p.name: p.start() for p in spec.parameters}
        self.correlated = spec.noise_step is not None
        keys = spec.blocks + (("noise",),) if self.correlated else spec.blocks
        self.scales = {b: 1.0 for b in keys}
        if self.correlated:
            self.scales[("noise",)] = spec.noise_step
        self.window = {b: [0, 0] for b in keys}
        self.history = {b: [] for b in spec.blocks}
        self.shapes = {b: np.diag([self.params[n].scale for n in b]) for b in spec.blocks}
        self.covariance_adapted = {}
        self.totals = {b: [0, 0] for b in keys}
        self.failures = 0
        self.log_prior = self._log_prior(self.values)
        self.draw_seed = (seed, index, 0, 0)
        if self.correlated:
            self.draw_seed = np.zeros(0)
        self.log_lik = self._evaluate(self.values, self.draw_seed, (seed, index, 0, 0))
        if not np.isfinite(self.log_prior) or not np.isfinite(self.log_lik):
            raise ValueError("starting point has zero posterior density")
        self.draw_seed = self.pending
        self.accepted = False

    def _log_prior(self, values) -> float:
        return float(sum(self.params[n].prior.logpdf(v) for n, v in values.items()))

    def _evaluate(self, values, draw, stream) -> float:
        """Log-likelihood of ``values``; sets ``self.pending`` to the draw used."""
        source = NoiseTape(draw, draw_generator(stream)) if self.correlated else stream
        try:
            ll = float(self.spec.log_likelihood(dict(values), source))
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            self.failures += 1
            log.debug("forward solve failed at %s: %s", values, exc)
            return -np.inf
        self.pending = source.used if self.correlated else stream
        return ll if not np.isnan(ll) else -np.inf

    def _decide(self, block, log_ratio, ll, adapt) -> bool:
        accept = bool(np.isfinite(ll) and np.log(self.rng.random()) < log_ratio)
        self.window[block][0] += accept
        self.window[block][1] += 1
        if not adapt:
            self.totals[block][0] += accept
            self.totals[block][1] += 1
        return accept

    def step(self, iteration: int, adapt: bool):
        accepted_any = False
        for b_index, block in enumerate(self.spec.blocks):
            proposal = dict(self.values)
            log_q = 0.0
            steps = self.scales[block] * (self.shapes[block] @ self.rng.standard_normal(len(block)))
            for name, step in zip(block, steps):
                p = self.params[name]
                if p.positive:
                    if proposal[name] <= 0:
                        raise ValueError(f"positive parameter {name} left its support")
                    new = proposal[name] * np.exp(step)
                    log_q += np.log(new) - np.log(proposal[name])
                    proposal[name] = new
                else:
                    proposal[name] = proposal[name] + step
            lp = self._log_prior(proposal)
            stream = (self.seed, self.index, iteration + 1, b_index)
            ll = self._evaluate(proposal, self.draw_seed, stream) if np.isfinite(lp) else -np.inf
            log_ratio = self.temperature * (ll - self.log_lik) + (lp - self.log_prior) + log_q
            if self._decide(block, log_ratio, ll, adapt):
                self.values, self.log_lik, self.log_prior = proposal, ll, lp
                self.draw_seed = self.pending
                accepted_any = True
        for move in range(self.spec.noise_moves if self.correlated else 0):
            block = ("noise",)
            step = self.scales[block]
            current = self.draw_seed
            moved = (np.sqrt(1.0 - step * step) * current
                     + step * self.rng.standard_normal(current.size))
            stream = (self.seed, self.index, iteration + 1, len(self.spec.blocks) + move)
            ll = self._evaluate(self.values, moved, stream)
            if self._decide(block, self.temperature * (ll - self.log_lik), ll, adapt):
                self.log_lik = ll
                self.draw_seed = self.pending
                accepted_any = True
        if adapt:
            for block in self.spec.blocks:
                self.history[block].append(self._transformed(block))
        if adapt and (iteration + 1) % ADAPT_EVERY == 0:
            self._adapt_shapes()
            for block, (acc, n) in self.window.items():
                rate = acc / max(n, 1)
                self.scales[block] *= float(np.exp(2.0 * (rate - TARGET_ACCEPTANCE)))
                if block == ("noise",):
                    self.scales[block] = min(self.scales[block], 1.0)
                self.window[block] = [0, 0]
        self.accepted = accepted_any

    def _transformed(self, block) -> np.ndarray:
        return np.array([np.log(self.values[n]) if self.params[n].positive else self.values[n]
                         for n in block])

    def _adapt_shapes(self):
        """Match multi-parameter proposals to the burn-in covariance of their block."""
        for block, history in self.history.items():
            d = len(block)
            if d < 2 or len(history) < ADAPT_MIN_HISTORY:
                continue
            recent = np.array(history[len(history) // 2:])
            cov = np.cov(recent, rowvar=False)
            floor = 1e-4 * np.array([self.params[n].scale for n in block]) ** 2
            cov = cov + np.diag(floor)
            try:
                shape = np.linalg.cholesky(cov) * (2.38 / np.sqrt(d))
            except np.linalg.LinAlgError:
                continue
            if not np.array_equal(self.shapes[block], shape):
                if not self.covariance_adapted.get(block):
                    self.scales[block] = 1.0
                    self.covariance_adapted[block] = True
                self.shapes[block] = shape

    def record(self, iteration: int) -> ChainRecord:
        return ChainRecord(iteration, self.index, self.temperature,
                           np.array([self.values[n] for n in self.spec.names]),
                           self.log_lik, self.log_prior, self.accepted, self.draw_seed)

    def result_fields(self):
        acceptance = {"+".join(b): (a / n if n else float("nan"))
                      for b, (a, n) in self.totals.items()}
        scales = {"+".join(b): v for b, v in self.scales.items()}
        return acceptance, scales


def mh_inverse(spec: InverseSpec, L: int, seed: int, burn_in: int = 0,
               temperature: float = 1.0) -> ChainResult:
    """Blocked random-walk Metropolis-Hastings with forward-draw refresh.

    Parameters
    ----------
    spec : InverseSpec
    L : int
        Number of post-burn-in records.
    seed : int
    burn_in : int
        Iterations discarded; proposal scales adapt toward 25% acceptance
        during burn-in only.  Blocks of several parameters also learn their
        proposal covariance (on the proposal scale) from the second half of
        the burn-in samples seen so far.
    temperature : float
        Likelihood exponent.
    """
    chain = _Chain(spec, temperature, 0, seed)
    records = []
    for it in range(burn_in + L):
        chain.step(it, adapt=it < burn_in)
        if it >= burn_in:
            records.append(chain.record(it))
    acceptance, scales = chain.result_fields()
    return ChainResult(spec.names, records, acceptance, scales, chain.failures)


def pt_wrap(spec: InverseSpec, cfg: PtConfig, L: int, seed: int,
            burn_in: int = 0) -> PtResult:
    """Parallel tempering over ``cfg.chains`` tempered copies of ``spec``.

    Each iteration first attempts, with probability ``xi``, to swap the full
    states of a uniformly chosen adjacent pair, then advances every chain by
    one tempered Metropolis-Hastings step.  Only the ``gamma = 1`` chain is
    returned.
    """
    chains = [_Chain(spec, g, i, seed) for i, g in enumerate(cfg.gamma)]
    swap_rng = draw_generator((seed, 1_000_003))
    C = cfg.chains
    attempts = np.zeros(max(C - 1, 0), int)
    accepts = np.zeros(max(C - 1, 0), int)
    records = []
    state_keys = ("values", "log_lik", "log_prior", "draw_seed")
    for it in range(burn_in + L):
        if C > 1 and swap_rng.random() < cfg.xi:
            i = int(swap_rng.integers(C - 1))
            a, b = chains[i], chains[i + 1]
            log_ratio = (a.temperature - b.temperature) * (b.log_lik - a.log_lik)
            ok = bool(np.log(swap_rng.random()) < log_ratio)
            if it >= burn_in:
                attempts[i] += 1
                accepts[i] += ok
            if ok:
                for key in state_keys:
                    va, vb = getattr(a, key), getattr(b, key)
                    setattr(a, key, vb)
                    setattr(b, key, va)
        for ch in chains:
            ch.step(it, adapt=it < burn_in)
        if it >= burn_in:
            records.append(chains[-1].record(it))
    cold = chains[-1]
    acceptance, scales = cold.result_fields()
    result = ChainResult(spec.names, records, acceptance, scales,
                         sum(c.failures for c in chains))
    return PtResult(result, attempts, accepts)


# --- mixed boundary value problems --------------------------------------------


def mbvp_spec(problem: IvpProblem, kernel: KernelSpec, grid: Grid, right_value: float,
              left_slope: float, prior_mean: float, prior_sd: float,
              proposal_scale: float = 0.5) -> InverseSpec:
    """Target for a two-state problem with known ``v(a)`` and ``u(b)``.

    The unknown ``u(a)`` has a Gaussian prior.  The likelihood of the
    boundary value is ``N(u(b) | m(b), C(b, b))``, taken from the forward
    solve started at the proposed ``u(a)``.
    """
    plan = engine.build_plan(kernel, grid, return_index=[grid.n - 1])
    variance = float(plan.final_cov[0, 0]) / kernel.precision

    def log_likelihood(values, seed):
        u0 = np.array([values["u_a"], left_slope])
        run = engine.run_plan(plan, kernel.precision, u0, problem.derivative,
                              draw_generator(seed))
        mean = run.final_mean[0, 0]
        return float(stats.norm.logpdf(right_value, mean, np.sqrt(variance)))

    prior = stats.norm(prior_mean, prior_sd)
    return InverseSpec((Parameter("u_a", prior, False, proposal_scale),), log_likelihood)


def mh_mbvp(problem: IvpProblem, kernel: KernelSpec, grid: Grid, right_value: float,
            left_slope: float, prior_mean: float, prior_sd: float, L: int, seed: int,
            burn_in: int = 0, pt: PtConfig | None = None):
    """Sample ``u(a)`` for a mixed boundary value problem, optionally with tempering."""
    spec = mbvp_spec(problem, kernel, grid, right_value, left_slope, prior_mean, prior_sd)
    if pt is None:
        return mh_inverse(spec, L, seed, burn_in)
    return pt_wrap(spec, pt, L, seed, burn_in)


# --- delay inverse problems -----------------------------------------------------


def dde_inverse(spec: InverseSpec, L: int, seed: int, burn_in: int = 0,
                pt: PtConfig | None = None):
    """Two-block sampler for delay problems: model block, then solver block."""
    if len(spec.blocks) != 2:
        raise ValueError("delay inverse expects a model block and a hyperparameter block")
    if pt is None:
        return mh_inverse(spec, L, seed, burn_in)
    return pt_wrap(spec, pt, L, seed, burn_in)


def jakstat_dataset(seed: int = 11, fine_factor: int = 4, n: int = 500, n_obs: int = 16,
                    relative_sd: float = 0.05):
    """Synthetic observations of the four-channel delay system.

    Data come from one forward draw on a grid ``fine_factor`` times finer than
    the inference grid, at the generating values.  Observation times are grid
    points of the inference grid: 16 per channel, with the ratio channel
    starting after the initial time.  Noise SDs are ``relative_sd`` times the
    range of each noiseless channel.

    Returns
    -------
    Dataset
    """
    from .dde import sample_trajectory_dde
    from .zoo import JAKSTAT_TRUTH, Dataset, jakstat_observe, jakstat_problem

    coarse = Grid.uniform(0.0, 60.0, n)
    fine = Grid.uniform(0.0, 60.0, fine_factor * (n - 1) + 1)
    theta = JAKSTAT_TRUTH["theta"]
    kernel = KernelSpec("uniform", JAKSTAT_TRUTH["length_scale"], JAKSTAT_TRUTH["precision"],
                        0.0)
    draw = sample_trajectory_dde(jakstat_problem(theta), kernel, fine, (seed, 0))
    times = _observation_times(coarse, n_obs)
    channels, ts, ys = [], [], []
    for ch, t_ch in enumerate(times):
        idx = fine.index_of(t_ch)
        g = jakstat_observe(draw.u[idx], theta)[:, ch]
        channels.append(np.full(t_ch.size, ch))
        ts.append(t_ch)
        ys.append(g)
    channel = np.concatenate(channels)
    t = np.concatenate(ts)
    clean = np.concatenate(ys)
    sd = np.empty_like(clean)
    for ch in range(4):
        m = channel == ch
        sd[m] = relative_sd * max(np.ptp(clean[m]), 1e-12)
    rng = np.random.default_rng(seed)
    y = clean + sd * rng.standard_normal(clean.size)
    return Dataset(channel, np.zeros_like(t), t, y, sd)


def jakstat_truth_values() -> dict:
    """Generating values keyed by the parameter names of :func:`jakstat_spec`."""
    from .zoo import JAKSTAT_TRUTH

    theta = JAKSTAT_TRUTH["theta"]
    values = {f"k{i + 1}": float(theta[i]) for i in range(6)}
    values.update(tau=float(theta[6]), u1_0=float(theta[7]),
                  precision=float(JAKSTAT_TRUTH["precision"]),
                  length_scale=float(JAKSTAT_TRUTH["length_scale"]))
    return values


def _observation_times(coarse: Grid, n_obs: int):
    def snap(values):
        return coarse.s[np.abs(coarse.s[:, None] - values).argmin(0)]
    early = snap(np.linspace(0.0, 60.0, n_obs))
    late = snap(np.linspace(4.0, 60.0, n_obs))
    return [early, early, early, late]


def jakstat_spec(data, n: int = 500, free_scale: float = 0.05,
                 initial: dict | None = None, noise_step: float | None = 0.1,
                 noise_moves: int = 1) -> InverseSpec:
    """Two-block inverse problem for the four-channel delay system.

    Blocks: ``(k1..k6, tau, u1_0)`` then ``(precision, length_scale)``; the
    solver hyperparameters are shared by all state components.

    Parameters
    ----------
    initial : dict, optional
        Starting values by name; prior medians otherwise.  The medians put
        the delayed loop in its unstable regime, so generate-and-recover runs
        start from the generating values.
    noise_step, noise_moves : float or None, int
        Correlated solver-noise updates (see ``InverseSpec``).
    """
    from .dde import sample_trajectory_dde
    from .zoo import jakstat_observe, jakstat_problem

    grid = Grid.uniform(0.0, 60.0, n)
    obs_t = np.unique(data.t)
    obs_index = {float(t): i for i, t in enumerate(obs_t)}
    rows = np.array([obs_index[float(t)] for t in data.t])
    y3_0 = data.y[(data.channel == 2) & (data.t == data.t.min())]
    prior_u1 = stats.norm(float(y3_0[0]) if y3_0.size else 0.0, 40.0)

    class _ShiftedLogNormal:
        """Law of ``alpha`` when ``alpha + 100`` is log-normal(10, 1)."""

        def __init__(self):
            self.base = stats.lognorm(s=1.0, scale=np.exp(10.0))

        def logpdf(self, x):
            return self.base.logpdf(x + 100.0)

        def median(self):
            return float(self.base.median() - 100.0)

    rate = stats.expon()
    params = tuple(Parameter(f"k{i}", rate, True, free_scale) for i in range(1, 7)) + (
        Parameter("tau", stats.chi2(6), True, free_scale),
        Parameter("u1_0", prior_u1, False, 0.05, initial=float(y3_0[0]) if y3_0.size else None),
        Parameter("precision", _ShiftedLogNormal(), True, 0.5),
        Parameter("length_scale", stats.chi2(1), True, 0.2),
    )
    if initial:
        unknown = set(initial) - {p.name for p in params}
        if unknown:
            raise KeyError(f"unknown parameters: {sorted(unknown)}")
        params = tuple(replace(p, initial=float(initial[p.name])) if p.name in initial else p
                       for p in params)
    model_block = tuple(p.name for p in params[:8])
    solver_block = ("precision", "length_scale")

    def log_likelihood(values, seed):
        theta = np.array([values[f"k{i}"] for i in range(1, 7)]
                         + [values["tau"], values["u1_0"]])
        kernel = KernelSpec("uniform", values["length_scale"], values["precision"], 0.0)
        draw = sample_trajectory_dde(jakstat_problem(theta), kernel, grid, seed, t_eval=obs_t)
        g = jakstat_observe(draw.u, theta)
        predicted = g[rows, data.channel]
        return gaussian_log_likelihood(data.y, predicted, data.sd)

    return InverseSpec(params, log_likelihood, (model_block, solver_block),
                       noise_step=noise_step, noise_moves=noise_moves)


# --- heat inverse problem -------------------------------------------------------


def heat_spec(data, nx: int, nt: int, solver: str = "podes",
              kappa_prior=None, proposal_scale: float = 0.05,
              noise_step: float | None = 0.1, noise_moves: int = 10) -> InverseSpec:
    """Conductivity inference from noisy surface values.

    Parameters
    ----------
    data : Dataset
        Observations on grid points of the ``nx`` by ``nt`` solver grid.
    solver : {"podes", "ftcs"}
        Probabilistic forward draws or deterministic finite differences.
    kappa_prior : scipy frozen distribution, optional
        Log-normal with median 1 and log-scale SD 1 by default.
    noise_step : float or None
        Crank-Nicolson step for the solver noise (see ``InverseSpec``);
        ignored for the deterministic solver.
    noise_moves : int
        Noise updates per iteration for the probabilistic solver.
    """
    from .pde import HeatProblem, heat_kernels, sample_surface
    from .zoo import ftcs_baseline

    base = HeatProblem(1.0)
    z = np.linspace(*base.x_domain, nx)
    grid = Grid.uniform(*base.t_domain, nt)
    ix = Grid(z).index_of(data.x)
    it = grid.index_of(data.t)
    kt, ks = heat_kernels(base, grid, z)
    prior = kappa_prior or stats.lognorm(s=1.0, scale=1.0)
    if solver not in ("podes", "ftcs"):
        raise ValueError("solver must be 'podes' or 'ftcs'")

    def log_likelihood(values, seed):
        problem = base.with_kappa(values["kappa"])
        if solver == "podes":
            surface = sample_surface(problem, kt, ks, z, grid, seed).u
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                surface = ftcs_baseline(problem, z, grid)
        return gaussian_log_likelihood(data.y, surface[it, ix], data.sd)

    step = noise_step if solver == "podes" else None
    return InverseSpec((Parameter("kappa", prior, True, proposal_scale),), log_likelihood,
                       noise_step=step, noise_moves=noise_moves)
