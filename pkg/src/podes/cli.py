"""Command-line experiment runner.

Each subcommand reads an optional JSON config, applies flag overrides, runs
one experiment and writes CSV and JSON files atomically.  Every output file
gets a ``<name>.manifest.json`` sidecar with the config hash, the seed and
the code version.  The same config and seed reproduce every data file byte
for byte; only ``bench-scaling`` reports wall-clock times.

Environment
-----------
PODES_THREADS
    Maximum worker threads for ensemble draws (default 1).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["RunConfig", "ConfigError", "main", "run"]


class ConfigError(Exception):
    """Raised with every violated field of a configuration."""

    def __init__(self, errors: list):
        super().__init__("; ".join(f"{f}: {m}" for f, m in errors))
        self.errors = errors


_IVP_DEFAULTS = {"problem": "sinusoid_ivp", "n": None, "draws": None, "family": None,
                 "length_ratio": None, "variance_ratio": 1.0, "precision": None,
                 "length_scale": None, "method": "auto", "save_draws": False}

DEFAULTS = {
    "solve-ivp": dict(_IVP_DEFAULTS),
    "solve-dde": dict(_IVP_DEFAULTS, problem="linear_dde", method="dense", draws=20),
    "solve-pde": {"grid": "15x50", "kappa": 1.0, "draws": 50, "temporal_ratio": 3.0,
                  "spatial_fraction": 0.4, "spatial_precision": 1e-6},
    "solve-mbvp": {"n": 100, "L": 10000, "burn_in": 2000, "chains": 4, "ladder_low": 0.5,
                   "xi": 0.2},
    "infer-heat": {"grid": "8x25", "solver": "podes", "L": 5000, "burn_in": 1000,
                   "data_seed": 7, "noise_sd": 0.005},
    "infer-dde": {"n": 500, "L": 4000, "burn_in": 2000, "data_seed": 11},
    "convergence": {"problem": "sinusoid_ivp", "n": [50, 100, 200, 400], "draws": 50,
                    "family": "squared_exponential", "length_ratio": 4.0,
                    "variance_ratio": 1.0, "method": "auto"},
    "bench-scaling": {"n": [500, 1000, 2000], "repeats": 3, "length_ratio": 4.0},
}

HELP = {
    "solve-ivp": "Ensembles of an initial value problem. Writes <problem>_N<n>_summary.csv "
                 "(t, mean_u<j>, sd_u<j>, lower_u<j>, upper_u<j>), optionally "
                 "<problem>_N<n>_draws.csv (draw, t, u<j>), and <problem>_summary.json.",
    "solve-dde": "Ensembles of a delay problem; same files as solve-ivp.",
    "solve-pde": "Heat-equation ensemble. Writes heat_<nx>x<nt>_summary.csv "
                 "(x, t, mean, sd, exact) and heat_<nx>x<nt>_summary.json.",
    "solve-mbvp": "Lane-Emden boundary problem by parallel tempering. Writes "
                  "mbvp_chain.csv (iteration, chain, temperature, u_a, log_lik, accepted) "
                  "and mbvp_summary.json.",
    "infer-heat": "Conductivity posterior. Writes heat_data.csv (channel, x, t, y, sd), "
                  "heat_<solver>_chain.csv and heat_<solver>_summary.json.",
    "infer-dde": "Generate-and-recover for the four-channel delay system. Writes "
                 "dde_data.csv, dde_chain.csv and dde_summary.json.",
    "convergence": "Error against the exact solution over grid sizes. Writes "
                   "convergence_<problem>.csv (n, h, mean_abs_error) and "
                   "convergence_<problem>.json.",
    "bench-scaling": "Wall-clock of the banded uniform-kernel sampler. Writes bench_scaling.json.",
}


@dataclass
class RunConfig:
    """A validated experiment configuration."""

    experiment: str
    seed: int
    out: Path
    params: dict = field(default_factory=dict)

    def canonical(self) -> str:
        return json.dumps({"experiment": self.experiment, "seed": self.seed,
                           "params": self.params}, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


# --- parsing and validation -----------------------------------------------------


def _int_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _grid(text) -> tuple:
    parts = str(text).lower().split("x")
    if len(parts) != 2:
        raise ValueError("expected <spatial>x<temporal>, e.g. 8x25")
    return int(parts[0]), int(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="podes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    S = argparse.SUPPRESS
    for name in DEFAULTS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name],
                           argument_default=S)
        p.add_argument("--config", help="JSON file with any of the options below")
        p.add_argument("--seed", type=int, help="mandatory master seed")
        p.add_argument("--out", help="output directory (default: podes-out)")
        keys = DEFAULTS[name]
        if "problem" in keys:
            p.add_argument("--problem")
        if "n" in keys:
            p.add_argument("--n", help="grid size, or comma-separated sizes")
        for key in ("draws", "L", "burn_in", "chains", "repeats", "data_seed"):
            if key in keys:
                p.add_argument("--" + key.replace("_", "-"), dest=key, type=int)
        for key in ("length_ratio", "variance_ratio", "precision", "length_scale", "kappa",
                    "temporal_ratio", "spatial_fraction", "spatial_precision", "ladder_low",
                    "xi", "noise_sd"):
            if key in keys:
                p.add_argument("--" + key.replace("_", "-"), dest=key, type=float)
        for key in ("family", "method", "grid", "solver"):
            if key in keys:
                p.add_argument("--" + key, dest=key)
        if "save_draws" in keys:
            p.add_argument("--save-draws", dest="save_draws", action="store_true")
    return parser


def resolve(experiment: str, file_config: dict, flags: dict) -> RunConfig:
    """Overlay the config file and then the flags on the defaults; validate every field."""
    from . import zoo

    errors = []
    merged = dict(DEFAULTS[experiment])
    for source in (file_config, flags):
        for key, value in source.items():
            if key in ("seed", "out", "experiment"):
                continue
            if key not in merged:
                errors.append((key, "unknown option for " + experiment))
            else:
                merged[key] = value
    seed = flags.get("seed", file_config.get("seed"))
    if seed is None:
        errors.append(("seed", "a seed is required"))
    else:
        try:
            seed = int(seed)
            if seed < 0:
                errors.append(("seed", "must be non-negative"))
        except (TypeError, ValueError):
            errors.append(("seed", "must be an integer"))
    out = Path(flags.get("out", file_config.get("out", "podes-out")))

    if "problem" in merged:
        try:
            named = zoo.get(merged["problem"])
            kind = {"solve-ivp": ("ivp", "mbvp"), "solve-dde": ("difp",),
                    "convergence": ("ivp",)}[experiment]
            if named.kind not in kind:
                errors.append(("problem", f"{named.id} is a {named.kind} problem"))
            else:
                for key, value in named.default_config.items():
                    if key in merged and merged[key] is None:
                        merged[key] = value
                if experiment == "convergence" and named.exact is None:
                    errors.append(("problem", f"{named.id} has no exact solution"))
        except KeyError:
            errors.append(("problem", f"unknown problem id {merged['problem']!r}"))
    if "n" in merged and merged["n"] is not None:
        try:
            sizes = _int_list(merged["n"])
            if not sizes or min(sizes) < 2:
                errors.append(("n", "grid sizes must be at least 2"))
            merged["n"] = sizes if experiment not in ("solve-mbvp", "infer-dde") else sizes[0]
            if experiment == "convergence" and len(sizes) < 3:
                errors.append(("n", "a convergence study needs at least three sizes"))
        except ValueError:
            errors.append(("n", "expected integers separated by commas"))
    if "grid" in merged:
        try:
            nx, nt = _grid(merged["grid"])
            if nx < 3 or nt < 2:
                errors.append(("grid", "need at least 3 spatial and 2 temporal points"))
        except ValueError as exc:
            errors.append(("grid", str(exc)))
    for key, low in (("draws", 1), ("L", 1), ("chains", 1), ("repeats", 1), ("burn_in", 0),
                     ("data_seed", 0)):
        if key in merged and merged[key] is not None:
            try:
                if int(merged[key]) != float(merged[key]) or int(merged[key]) < low:
                    errors.append((key, f"must be an integer of at least {low}"))
            except (TypeError, ValueError):
                errors.append((key, "must be an integer"))
    for key in ("length_ratio", "variance_ratio", "precision", "length_scale", "kappa",
                "temporal_ratio", "spatial_fraction", "spatial_precision", "noise_sd"):
        if merged.get(key) is not None:
            try:
                if not float(merged[key]) >= 0 or not np.isfinite(float(merged[key])):
                    errors.append((key, "must be a finite non-negative number"))
            except (TypeError, ValueError):
                errors.append((key, "must be a number"))
    if "solver" in merged and merged["solver"] not in ("podes", "ftcs"):
        errors.append(("solver", "must be 'podes' or 'ftcs'"))
    for key, (low, high, closed_low) in {"xi": (0, 1, True), "ladder_low": (0, 1, False)}.items():
        if key in merged:
            try:
                v = float(merged[key])
                ok = (low <= v if closed_low else low < v) and v <= high
            except (TypeError, ValueError):
                ok = False
            if not ok:
                errors.append((key, f"must lie in {'[' if closed_low else '('}{low}, {high}]"))
    if "family" in merged and merged["family"] not in (None, "squared_exponential",
                                                         "uniform"):
        errors.append(("family", "must be 'squared_exponential' or 'uniform'"))
    if "method" in merged and merged["method"] not in ("auto", "literal", "dense", "banded"):
        errors.append(("method", "must be auto, literal, dense or banded"))
    if errors:
        raise ConfigError(errors)
    return RunConfig(experiment, seed, out, merged)


# --- output -----------------------------------------------------------------------


def code_version() -> str:
    """Package version plus ``git describe`` when run from a checkout."""
    try:
        from importlib.metadata import version

        base = version("artifact")
    except Exception:
        base = "0+unknown"
    try:
        described = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5)
        if described.returncode == 0 and described.stdout.strip():
            return f"{base}+g{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name + ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Writer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.version = code_version()
        self.files = []

    def _emit(self, name: str, text: str):
        path = self.cfg.out / name
        _atomic_write(path, text)
        manifest = {
            "file": name,
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
            "experiment": self.cfg.experiment,
            "config": json.loads(self.cfg.canonical()),
            "config_hash": self.cfg.config_hash,
            "seed": self.cfg.seed,
            "version": self.version,
        }
        _atomic_write(path.with_name(name + ".manifest.json"),
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        self.files.append(str(path))

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
        self._emit(name, buf.getvalue())

    def json(self, name: str, payload: dict):
        self._emit(name, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("PODES_THREADS", "1")))
    except ValueError:
        return 1


def _parallel_map(fn, items):
    items = list(items)
    if not items:
        return []
    first = fn(items[0])  # warms the plan caches before any concurrency
    workers = _workers()
    if workers == 1 or len(items) == 1:
        return [first] + [fn(i) for i in items[1:]]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return [first] + list(pool.map(fn, items[1:]))


# --- experiments --------------------------------------------------------------------


def _kernel(p: dict, grid):
    from .engine import policy_kernel

    kernel = policy_kernel(p["family"] or "squared_exponential", grid, p["length_ratio"],
                           p["variance_ratio"])
    if p.get("length_scale") is not None:
        kernel = type(kernel)(kernel.family, float(p["length_scale"]), kernel.precision,
                              kernel.origin)
    if p.get("precision") is not None:
        kernel = kernel.with_precision(float(p["precision"]))
    return kernel


def _ensemble_files(w: _Writer, label: str, n: int, t, draws, save: bool):
    from .diagnostics import summarize

    values = np.stack(draws)
    s = summarize(t, values)
    P = values.shape[2]
    header = ["t"] + [f"{stat}_u{j}" for stat in ("mean", "sd", "lower", "upper")
                      for j in range(P)]
    rows = (np.concatenate([[t[i]], s.mean[i], s.sd[i], s.lower[i], s.upper[i]])
            for i in range(t.size))
    w.csv(f"{label}_N{n}_summary.csv", header, rows)
    if save:
        rows = ([d, t[i], *values[d, i]] for d in range(values.shape[0])
                for i in range(t.size))
        w.csv(f"{label}_N{n}_draws.csv", ["draw", "t"] + [f"u{j}" for j in range(P)], rows)
    return s


def _solve_ivp(cfg: RunConfig, w: _Writer) -> dict:
    from . import zoo
    from .engine import Grid
    from .ode import sample_trajectory

    p = cfg.params
    named = zoo.get(p["problem"])
    problem = named.problem
    out = {"problem": named.id, "grids": []}
    for n in p["n"]:
        grid = Grid.uniform(problem.a, problem.b, n)
        kernel = _kernel(p, grid)
        draws = _parallel_map(
            lambda i: sample_trajectory(problem, kernel, grid, (cfg.seed, n, i),
                                        method=p["method"]).u,
            range(int(p["draws"])))
        s = _ensemble_files(w, named.id, n, grid.s, draws, p["save_draws"])
        entry = {"n": n, "draws": int(p["draws"]), "length_scale": kernel.length_scale,
                 "precision": kernel.precision, "max_sd": s.sd.max(axis=0)}
        if named.exact is not None:
            exact = np.asarray(named.exact(grid.s), float).reshape(grid.n, -1)
            entry["mean_abs_error"] = np.mean(np.abs(np.stack(draws)[..., :exact.shape[1]]
                                                     - exact))
        out["grids"].append(entry)
    w.json(f"{named.id}_summary.json", out)
    return out


def _solve_dde(cfg: RunConfig, w: _Writer) -> dict:
    from . import zoo
    from .dde import sample_trajectory_dde
    from .engine import Grid

    p = dict(cfg.params)
    if p["method"] == "auto":
        p["method"] = "dense"
    named = zoo.get(p["problem"])
    problem = named.problem
    out = {"problem": named.id, "grids": []}
    for n in p["n"]:
        grid = Grid.uniform(problem.a, problem.b, n)
        kernel = _kernel(dict(p, length_ratio=p["length_ratio"] or 4.0), grid)
        draws = _parallel_map(
            lambda i: sample_trajectory_dde(problem, kernel, grid, (cfg.seed, n, i),
                                            method=p["method"]).u,
            range(int(p["draws"])))
        s = _ensemble_files(w, named.id, n, grid.s, draws, p["save_draws"])
        entry = {"n": n, "draws": int(p["draws"]), "max_sd": s.sd.max(axis=0)}
        if named.exact is not None:
            exact = np.asarray(named.exact(grid.s), float).reshape(grid.n, -1)
            entry["mean_abs_error"] = np.mean(np.abs(np.stack(draws) - exact))
        out["grids"].append(entry)
    w.json(f"{named.id}_summary.json", out)
    return out


def _solve_pde(cfg: RunConfig, w: _Writer) -> dict:
    from .engine import Grid
    from .pde import HeatProblem, heat_kernels, sample_surface

    p = cfg.params
    nx, nt = _grid(p["grid"])
    problem = HeatProblem(float(p["kappa"]))
    z = np.linspace(*problem.x_domain, nx)
    grid = Grid.uniform(*problem.t_domain, nt)
    kt, ks = heat_kernels(problem, grid, z, p["temporal_ratio"], p["spatial_fraction"],
                          p["spatial_precision"])
    draws = np.stack(_parallel_map(
        lambda i: sample_surface(problem, kt, ks, z, grid, (cfg.seed, i)).u,
        range(int(p["draws"]))))
    mean, sd = draws.mean(0), draws.std(0, ddof=1) if len(draws) > 1 else np.zeros(draws.shape[1:])
    exact = problem.exact(z[None, :], grid.s[:, None])
    rows = ([z[j], grid.s[i], mean[i, j], sd[i, j], exact[i, j]]
            for i in range(nt) for j in range(nx))
    label = f"heat_{nx}x{nt}"
    w.csv(f"{label}_summary.csv", ["x", "t", "mean", "sd", "exact"], rows)
    inner = (slice(1, None), slice(1, -1))
    out = {"grid": [nx, nt], "kappa": problem.kappa, "draws": int(p["draws"]),
           "coverage_2sd": float(np.mean(np.abs(exact - mean)[inner] <= 2 * sd[inner])),
           "median_sd": float(np.median(sd[inner])),
           "max_abs_error_of_mean": float(np.abs(exact - mean).max())}
    w.json(f"{label}_summary.json", out)
    return out


def _chain_rows(result):
    for r in result.records:
        yield [r.iteration, r.chain, r.temperature, *r.theta, r.log_likelihood, r.accepted]


def _chain_header(names):
    return ["iteration", "chain", "temperature", *names, "log_lik", "accepted"]


def _solve_mbvp(cfg: RunConfig, w: _Writer) -> dict:
    from . import zoo
    from .diagnostics import count_modes
    from .engine import Grid, policy_kernel
    from .mcmc import PtConfig, mh_mbvp

    p = cfg.params
    named = zoo.get("lane_emden")
    d = named.default_config
    problem = named.problem
    grid = Grid.uniform(problem.a, problem.b, int(p["n"]))
    kernel = policy_kernel(d["family"], grid, d["length_ratio"]).with_precision(d["precision"])
    pt = PtConfig.uniform(int(p["chains"]), float(p["ladder_low"]), float(p["xi"]))
    res = mh_mbvp(problem, kernel, grid, d["right_value"], d["left_slope"], d["prior_mean"],
                  d["prior_sd"], int(p["L"]), cfg.seed, int(p["burn_in"]), pt)
    w.csv("mbvp_chain.csv", _chain_header(res.cold.names), _chain_rows(res.cold))
    x = res.cold.column("u_a")
    # Too few samples for a density estimate leaves the mode fields empty.
    modes = count_modes(x) if x.size >= 200 else None
    out = {"modes": modes and modes.count,
           "mode_locations": None if modes is None else modes.locations,
           "swap_rates": res.swap_rates, "swap_attempts": res.swap_attempts,
           "acceptance": res.cold.block_acceptance, "ladder": pt.gamma,
           "failures": res.cold.failures}
    w.json("mbvp_summary.json", out)
    return out


def _heat_data(nx, nt, noise_sd, data_seed):
    from .pde import HeatProblem
    from .zoo import simulate_data

    problem = HeatProblem(1.0)
    xs = np.linspace(*problem.x_domain, nx)
    ts = np.linspace(*problem.t_domain, nt)
    X, T = np.meshgrid(xs, ts)
    return simulate_data(problem.exact, np.c_[X.ravel(), T.ravel()], noise_sd, data_seed)


def _infer_heat(cfg: RunConfig, w: _Writer) -> dict:
    from .diagnostics import credible_interval
    from .mcmc import heat_spec, mh_inverse

    p = cfg.params
    nx, nt = _grid(p["grid"])
    data = _heat_data(nx, nt, float(p["noise_sd"]), int(p["data_seed"]))
    w._emit("heat_data.csv", data.to_csv())
    res = mh_inverse(heat_spec(data, nx, nt, p["solver"]), int(p["L"]), cfg.seed,
                     int(p["burn_in"]))
    w.csv(f"heat_{p['solver']}_chain.csv", _chain_header(res.names), _chain_rows(res))
    kappa = res.column("kappa")
    lo, hi = credible_interval(kappa, 0.95)
    out = {"solver": p["solver"], "grid": [nx, nt], "median": float(np.median(kappa)),
           "interval_95": [lo, hi], "contains_truth": bool(lo <= 1.0 <= hi),
           "acceptance": res.block_acceptance, "failures": res.failures}
    w.json(f"heat_{p['solver']}_summary.json", out)
    return out


def _infer_dde(cfg: RunConfig, w: _Writer) -> dict:
    from .diagnostics import credible_interval, geweke
    from .mcmc import dde_inverse, jakstat_dataset, jakstat_spec, jakstat_truth_values

    p = cfg.params
    data = jakstat_dataset(seed=int(p["data_seed"]), n=int(p["n"]))
    w._emit("dde_data.csv", data.to_csv())
    truth = jakstat_truth_values()
    res = dde_inverse(jakstat_spec(data, int(p["n"]), initial=truth), int(p["L"]), cfg.seed,
                      int(p["burn_in"]))
    w.csv("dde_chain.csv", _chain_header(res.names), _chain_rows(res))
    params = {}
    for name in res.names:
        x = res.column(name)
        lo, hi = credible_interval(x, 0.95)
        params[name] = {"truth": truth[name], "median": float(np.median(x)),
                        "interval_95": [lo, hi],
                        "geweke_z": geweke(x) if x.size >= 100 else None}
    out = {"parameters": params, "acceptance": res.block_acceptance,
           "failures": res.failures,
           "tau_recovered": bool(params["tau"]["interval_95"][0] <= truth["tau"]
                                 <= params["tau"]["interval_95"][1])}
    w.json("dde_summary.json", out)
    return out


def _convergence(cfg: RunConfig, w: _Writer) -> dict:
    from . import zoo
    from .ode import convergence_study

    p = cfg.params
    named = zoo.get(p["problem"])
    table = convergence_study(named.problem, lambda t: named.exact(t)[:, 0], p["n"],
                              int(p["draws"]), cfg.seed, p["family"], p["length_ratio"],
                              p["variance_ratio"], 0, p["method"])
    w.csv(f"convergence_{named.id}.csv", ["n", "h", "mean_abs_error"],
          zip(table.n, table.h, table.mean_abs_error))
    out = {"problem": named.id, "slope": table.fit.slope, "stderr": table.fit.stderr,
           "intercept": table.fit.intercept}
    w.json(f"convergence_{named.id}.json", out)
    return out


def bench_scaling(sizes, repeats: int = 3, length_ratio: float = 4.0, seed: int = 0) -> dict:
    """Best-of-``repeats`` wall-clock of banded plan plus draw on the sinusoid problem."""
    from . import engine, zoo
    from .ode import draw_generator

    problem = zoo.get("sinusoid_ivp").problem
    times = []
    for n in sizes:
        grid = engine.Grid.uniform(problem.a, problem.b, n)
        kernel = engine.policy_kernel("uniform", grid, length_ratio)
        best = np.inf
        for r in range(repeats):
            start = time.perf_counter()
            plan = engine.build_banded_plan(kernel, grid)
            engine.run_banded_plan(plan, kernel.precision, problem.u_init, problem.derivative,
                                   draw_generator((seed, n, r)))
            best = min(best, time.perf_counter() - start)
        times.append(best)
    ratios = [times[i + 1] / times[i] for i in range(len(times) - 1)]
    return {"n": list(sizes), "seconds": times, "ratios": ratios}


def _bench(cfg: RunConfig, w: _Writer) -> dict:
    p = cfg.params
    out = bench_scaling(p["n"], int(p["repeats"]), float(p["length_ratio"]), cfg.seed)
    w.json("bench_scaling.json", out)
    return out


RUNNERS = {
    "solve-ivp": _solve_ivp,
    "solve-dde": _solve_dde,
    "solve-pde": _solve_pde,
    "solve-mbvp": _solve_mbvp,
    "infer-heat": _infer_heat,
    "infer-dde": _infer_dde,
    "convergence": _convergence,
    "bench-scaling": _bench,
}


def run(cfg: RunConfig) -> tuple[dict, list]:
    """Execute a validated config; returns the summary and the written paths."""
    w = _Writer(cfg)
    summary = RUNNERS[cfg.experiment](cfg, w)
    return summary, w.files


def _error(errors, code: int) -> int:
    report = {"status": "error",
              "errors": [{"field": f, "message": m} for f, m in errors]}
    print(json.dumps(report, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    experiment = args.pop("experiment")
    file_config = {}
    config_path = args.pop("config", None)
    if config_path is not None:
        try:
            file_config = json.loads(Path(config_path).read_text())
            if not isinstance(file_config, dict):
                raise ValueError("top level must be an object")
        except (OSError, ValueError) as exc:
            return _error([("config", str(exc))], 2)
    try:
        cfg = resolve(experiment, file_config, args)
    except ConfigError as exc:
        return _error(exc.errors, 2)
    try:
        summary, files = run(cfg)
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        return _error([(None, f"{type(exc).__name__}: {exc}")], 1)
    print(json.dumps({"status": "ok", "files": files}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
