"""Posterior post-processing: growth rates, first-growth-day timing,
abundance summaries and model-comparison error.

Everything here is a pure transform over stored draws.  The per-capita
growth rate on day t follows from dividing consecutive abundances under the
process model; its multiplicative noise term is log-normal with median one,
so the conditional median has the closed form used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CovariateSeries
from .mcmc import PosteriorDraws


@dataclass
class GrowthSeries:
    """Across-draw summaries of the median growth rate for days 2..N.

    All entries exceed -1: the growth factor 1+g is a ratio of positive
    abundances.
    """

    day_index: np.ndarray
    median: np.ndarray
    mean: np.ndarray
    q25: np.ndarray
    q75: np.ndarray

    def __post_init__(self):
        for name in ("median", "mean", "q25", "q75"):
            arr = getattr(self, name)
            if arr.shape != self.median.shape:
                raise ValueError("summary arrays must share one shape")
            if np.any(arr <= -1.0):
                raise ValueError(f"growth {name} must exceed -1")
        if self.day_index.shape != (self.median.shape[1],):
            raise ValueError("day_index must cover days 2..N")


@dataclass
class PhenometricPosterior:
    """Per-draw first-positive-growth days for each species and year window.

    ``rows`` holds (year_label, species, draw_index, psi) tuples with psi
    reported 1-based within its window, or None when growth never turns
    positive in the window.
    """

    rows: list = field(default_factory=list)
    windows: list = field(default_factory=list)

    def __post_init__(self):
        spans = {label: t_b - t_a + 1 for (label, t_a, t_b) in self.windows}
        for (label, _species, _draw, psi) in self.rows:
            if psi is not None and not 1 <= psi <= spans[label]:
                raise ValueError(f"psi {psi} outside the {label!r} window")

    def median_psi(self, year: str, species: int = 1) -> float:
        vals = [r[3] for r in self.rows
                if r[0] == year and r[1] == species and r[3] is not None]
        if not vals:
            raise RuntimeError(f"no finite first-growth-day draws for {year!r}")
        return float(np.median(vals))


def growth_rate_median(alpha_j: float, beta_j: np.ndarray,
                       covariates: CovariateSeries, lambda_prev: float,
                       day: int) -> float:
    """Median per-capita growth rate on study day ``day`` (1-based, >= 2).

    exp(beta_j (x(t) - alpha_j x(t-1))) * lambda_prev^(alpha_j - 1) - 1; the
    log-normal noise factor has median one and drops out.  Always > -1.
    """
    if not 2 <= day <= covariates.n_days:
        raise IndexError(f"day must be in [2, {covariates.n_days}], got {day}")
    if not lambda_prev > 0:
        raise ValueError("lambda_prev must be strictly positive")
    beta_j = np.asarray(beta_j, dtype=float)
    x_now = covariates.values[day - 1]
    x_prev = covariates.values[day - 2]
    return float(
        np.exp(beta_j @ (x_now - alpha_j * x_prev)) * lambda_prev ** (alpha_j - 1.0) - 1.0
    )


def growth_curve(alpha_j: float, beta_j: np.ndarray, loglambda_j: np.ndarray,
                 covariates: CovariateSeries) -> np.ndarray:
    """Median growth rate for days 2..N of one draw (length N-1)."""
    n = loglambda_j.shape[0]
    x = covariates.values[:n]
    beta_j = np.asarray(beta_j, dtype=float)
    lin = x[1:] @ beta_j - alpha_j * (x[:-1] @ beta_j)
    return np.exp(lin + (alpha_j - 1.0) * loglambda_j[:-1]) - 1.0


def phenometric_psi(alpha_j: float, beta_j: np.ndarray, loglambda_j: np.ndarray,
                    covariates: CovariateSeries, window: tuple[int, int]) -> int | None:
    """First study day in ``window`` with positive median growth, else None.

    ``window`` is an inclusive (start, end) pair of 1-based study days; day 1
    has no growth rate, so an inclusive start of 1 begins scanning at day 2.
    """
    t_a, t_b = int(window[0]), int(window[1])
    n = loglambda_j.shape[0]
    if not 1 <= t_a <= t_b <= n:
        raise IndexError(f"window must satisfy 1 <= start <= end <= {n}")
    g = growth_curve(alpha_j, beta_j, loglambda_j, covariates)
    lo = max(t_a, 2)
    seg = g[lo - 2: t_b - 1]        # g[k] belongs to day k + 2
    pos = np.flatnonzero(seg > 0.0)
    if pos.size == 0:
        return None
    return int(lo + pos[0])


def year_windows(covariates: CovariateSeries, block_days: int = 365) -> list[tuple[str, int, int]]:
    """(label, start_day, end_day) study-day windows, one per calendar year.

    Years come from the optional ISO date column when present, otherwise from
    consecutive ``block_days``-day blocks.
    """
    n = covariates.n_days
    out = []
    if covariates.dates is not None:
        years = np.array([int(d[:4]) for d in covariates.dates])
        for y in np.unique(years):
            idx = np.flatnonzero(years == y)
            out.append((str(y), int(idx[0] + 1), int(idx[-1] + 1)))
    else:
        start = 1
        block = 1
        while start <= n:
            end = min(start + block_days - 1, n)
            out.append((f"year{block}", start, end))
            start = end + 1
            block += 1
    return out


def psi_posterior(draws: PosteriorDraws, covariates: CovariateSeries,
                  windows: list[tuple[str, int, int]] | None = None,
                  plug: str = "draw") -> PhenometricPosterior:
    """Per-draw first-growth-day for every species and year window.

    With ``plug="draw"`` each draw's own latent path conditions the growth
    rate; ``plug="median"`` conditions every draw on the pointwise
    posterior-median path instead, which is robust to day-level path noise
    near the seasonal floor.
    """
    if plug not in ("draw", "median"):
        raise ValueError("plug must be 'draw' or 'median'")
    if windows is None:
        windows = year_windows(covariates)
    rows = []
    m = draws.loglambda.shape[0]
    stride = draws.config.state_stride
    median_path = None
    if plug == "median":
        median_path = np.quantile(draws.loglambda, 0.5, axis=0, method="linear")
    for (label, t_a, t_b) in windows:
        for s in range(draws.beta.shape[1]):
            for k in range(m):
                pk = k * stride  # matching parameter draw for this snapshot
                path = draws.loglambda[k, s] if plug == "draw" else median_path[s]
                psi = phenometric_psi(
                    float(draws.alpha[pk, s]), draws.beta[pk, s],
                    path, covariates, (t_a, t_b),
                )
                rows.append((label, s + 1, k, None if psi is None else psi - t_a + 1))
    return PhenometricPosterior(rows=rows, windows=list(windows))


def baseline_first_increase(obs_days: np.ndarray, total_counts: np.ndarray,
                            window: tuple[int, int]) -> int | None:
    """Summary-statistic timing baseline: first observed day in the window
    whose count strictly exceeds the previous observed day's count."""
    t_a, t_b = window
    for i in range(1, obs_days.size):
        day = int(obs_days[i]) + 1
        if t_a <= day <= t_b and total_counts[i] > total_counts[i - 1]:
            return day
    return None


def rmse_abundance(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Root-mean-squared error on the abundance scale."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((estimate - truth) ** 2)))


def posterior_mean_abundance(draws: PosteriorDraws) -> np.ndarray:
    """Posterior mean of abundance per species per day (J x N)."""
    if draws.loglambda.shape[0] == 0:
        raise RuntimeError("no stored draws")
    return np.exp(draws.loglambda).mean(axis=0)


def summarize_series(loglambda_draws: np.ndarray, levels=(0.5, 0.95)):
    """Pointwise posterior summaries of abundance from latent-path draws.

    Returns a dict with ``mean``, ``median`` and, per requested level, a
    (lo, hi) pair of (J, N) arrays.  Quantiles interpolate linearly between
    order statistics.  The median is the preferred point summary because the
    exponentiated path is right-skewed.
    """
    draws = np.asarray(loglambda_draws, dtype=float)
    if draws.ndim != 3:
        raise ValueError("draws must be (n_draws, J, N)")
    if draws.shape[0] == 0:
        raise RuntimeError("no draws to summarize")
    lam = np.exp(draws)
    out = {
        "mean": lam.mean(axis=0),
        "median": np.quantile(lam, 0.5, axis=0, method="linear"),
    }
    for level in levels:
        lo = (1.0 - level) / 2.0
        out[level] = (
            np.quantile(lam, lo, axis=0, method="linear"),
            np.quantile(lam, 1.0 - lo, axis=0, method="linear"),
        )
    return out


def theta1_preferential_test(draws: PosteriorDraws, level: float = 0.95):
    """Equal-tailed credible interval for theta1 and P(theta1 > 0).

    theta1 measures how strongly high-abundance days attract observation;
    an interval clear of zero flags an informative observation schedule.
    """
    if draws.theta is None:
        raise RuntimeError("theta draws require the preferential variant")
    t1 = draws.theta[:, 1]
    lo = (1.0 - level) / 2.0
    interval = (
        float(np.quantile(t1, lo, method="linear")),
        float(np.quantile(t1, 1.0 - lo, method="linear")),
    )
    return interval, float(np.mean(t1 > 0.0))


def growth_summary(draws: PosteriorDraws, covariates: CovariateSeries) -> GrowthSeries:
    """Across-draw summaries of the median growth rate for days 2..N,
    matched to the stored latent snapshots."""
    m, j, n = draws.loglambda.shape
    if m == 0:
        raise RuntimeError("no stored draws")
    stride = draws.config.state_stride
    g = np.empty((m, j, n - 1))
    for k in range(m):
        pk = k * stride
        for s in range(j):
            g[k, s] = growth_curve(float(draws.alpha[pk, s]), draws.beta[pk, s],
                                   draws.loglambda[k, s], covariates)
    return GrowthSeries(
        day_index=draws.day_index[1:].copy(),
        median=np.quantile(g, 0.5, axis=0, method="linear"),
        mean=g.mean(axis=0),
        q25=np.quantile(g, 0.25, axis=0, method="linear"),
        q75=np.quantile(g, 0.75, axis=0, method="linear"),
    )
