"""Post-processing: rate fits, ensemble summaries, Geweke scores and mode counts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.linalg import solve_toeplitz
from scipy.signal import find_peaks

__all__ = [
    "EnsembleSummary",
    "summarize",
    "RateFit",
    "fit_rate",
    "geweke",
    "ModeCount",
    "count_modes",
    "credible_interval",
]


@dataclass(frozen=True)
class EnsembleSummary:
    """Pointwise statistics of an ensemble of trajectories.

    Attributes
    ----------
    grid : ndarray, shape (T,)
    mean, sd, lower, upper : ndarray, shape (T, P)
        Pointwise mean and standard deviation, plus central 95% quantiles.
    n_draws : int
    """

    grid: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_draws: int


def summarize(grid, values, level: float = 0.95) -> EnsembleSummary:
    """Summarise an array of draws with shape ``(n_draws, T, P)``."""
    values = np.asarray(values, float)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.shape[0] < 1:
        raise ValueError("need at least one draw")
    tail = 0.5 * (1.0 - level)
    lower, upper = np.quantile(values, [tail, 1.0 - tail], axis=0)
    sd = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1:])
    return EnsembleSummary(np.asarray(grid, float), values.mean(axis=0), sd, lower, upper,
                           values.shape[0])


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit ``log(error) = intercept + slope * log(h)``."""

    slope: float
    stderr: float
    intercept: float


def fit_rate(h, error) -> RateFit:
    """Fit the log-log slope of ``error`` against step size ``h``.

    Raises
    ------
    ValueError
        With fewer than three rows or non-positive values, or when every ``h`` is equal.
    """
    h = np.asarray(h, float)
    error = np.asarray(error, float)
    if h.shape != error.shape or h.size < 3:
        raise ValueError("fit_rate needs at least three (h, error) rows")
    if np.any(h <= 0) or np.any(error <= 0) or not np.all(np.isfinite(error)):
        raise ValueError("step sizes and errors must be positive and finite")
    if np.ptp(np.log(h)) == 0:
        raise ValueError("step sizes must not all be equal")
    res = stats.linregress(np.log(h), np.log(error))
    return RateFit(float(res.slope), float(res.stderr), float(res.intercept))


def _spectral_variance_at_zero(x: np.ndarray) -> float:
    """Variance of the mean times ``n``, from an autoregressive fit.

    The order is chosen by AIC among Yule-Walker fits up to ``10 log10(n)``
    lags; the spectral density at zero of the chosen fit is returned.
    """
    n = x.size
    x = x - x.mean()
    max_order = int(min(n - 1, np.floor(10.0 * np.log10(n))))
    acov = np.array([np.dot(x[: n - j], x[j:]) / n for j in range(max_order + 1)])
    if acov[0] <= 0:
        return 0.0
    best_aic, best = n * np.log(acov[0]), acov[0]
    for order in range(1, max_order + 1):
        coef = solve_toeplitz(acov[:order], acov[1:order + 1])
        innovation = acov[0] - np.dot(coef, acov[1:order + 1])
        if innovation <= 0:
            break
        aic = n * np.log(innovation) + 2.0 * order
        if aic < best_aic:
            best_aic, best = aic, innovation / (1.0 - coef.sum()) ** 2
    return float(best)


def geweke(chain, first: float = 0.1, last: float = 0.5) -> float:
    """Geweke equality-of-means z-score between the start and end of a chain.

    A constant chain returns 0.
    """
    x = np.asarray(chain, float).ravel()
    if x.size < 100:
        raise ValueError("Geweke diagnostic needs at least 100 samples")
    if not (0 < first < 1 and 0 < last < 1 and first + last <= 1):
        raise ValueError("segment fractions must be positive and not overlap")
    a = x[: int(first * x.size)]
    b = x[x.size - int(last * x.size):]
    var = _spectral_variance_at_zero(a) / a.size + _spectral_variance_at_zero(b) / b.size
    if not var > 0:
        return 0.0
    return float((a.mean() - b.mean()) / np.sqrt(var))


@dataclass(frozen=True)
class ModeCount:
    """Number of prominent density peaks and their locations."""

    count: int
    locations: np.ndarray
    bandwidth: float


def count_modes(samples, bandwidth: float | None = None, grid_size: int = 512,
                height_fraction: float = 0.1, trough_fraction: float = 0.8) -> ModeCount:
    """Count prominent modes of a Gaussian kernel density estimate.

    A peak counts if its height exceeds ``height_fraction`` of the global
    maximum.  Neighbouring peaks are merged unless the lowest density between
    them falls below ``trough_fraction`` of the smaller peak.

    Parameters
    ----------
    samples : array_like
        At least 200 scalar samples.
    bandwidth : float, optional
        Kernel standard deviation; Silverman's rule when omitted.
    """
    x = np.asarray(samples, float).ravel()
    if x.size < 200:
        raise ValueError("mode counting needs at least 200 samples")
    sd = x.std(ddof=1)
    if bandwidth is None:
        iqr = np.subtract(*np.percentile(x, [75, 25]))
        spread = min(sd, iqr / 1.34) if iqr > 0 else sd
        bandwidth = 0.9 * spread * x.size ** (-0.2)
    if not bandwidth > 0:
        return ModeCount(1, np.array([x.mean()]), 0.0)
    lo, hi = x.min() - 3 * bandwidth, x.max() + 3 * bandwidth
    grid = np.linspace(lo, hi, grid_size)
    density = stats.norm.pdf((grid[:, None] - x[None, :]) / bandwidth).sum(axis=1)
    padded = np.concatenate([[0.0], density, [0.0]])
    peaks, _ = find_peaks(padded)
    peaks = peaks - 1
    peaks = [p for p in peaks if density[p] >= height_fraction * density.max()]
    kept: list[int] = []
    for p in peaks:
        if kept:
            q = kept[-1]
            trough = density[q:p + 1].min()
            if trough >= trough_fraction * min(density[p], density[q]):
                if density[p] > density[q]:
                    kept[-1] = p
                continue
        kept.append(p)
    return ModeCount(len(kept), grid[kept], float(bandwidth))


def credible_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Central ``level`` interval of scalar samples."""
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(np.asarray(samples, float), [tail, 1.0 - tail])
    return float(lo), float(hi)
