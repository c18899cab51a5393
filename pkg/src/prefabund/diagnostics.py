"""Chain quality summaries: split potential scale reduction and effective
sample size, computed per scalar parameter across chains."""

from __future__ import annotations

import numpy as np


def _split(chains: np.ndarray) -> np.ndarray:
    """Split each chain in half; drops one draw per chain when odd."""
    m, n = chains.shape
    half = n // 2
    if half < 1:
        return chains
    return np.vstack([chains[:, :half], chains[:, n - half:]])


def split_rhat(chains: np.ndarray) -> float:
    """Gelman-Rubin statistic on half-chains.

    ``chains`` is (n_chains, n_draws).  Returns NaN when there is too little
    data and 1.0 for a numerically constant quantity.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    x = _split(chains)
    m, n = x.shape
    if n < 2 or m < 2:
        return float("nan")
    means = x.mean(axis=1)
    w = x.var(axis=1, ddof=1).mean()
    b = n * means.var(ddof=1)
    if w <= 1e-300:
        return 1.0 if b <= 1e-300 else float("inf")
    var_hat = (n - 1) / n * w + b / n
    return float(np.sqrt(var_hat / w))


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n].real / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(chains: np.ndarray) -> float:
    """ESS across chains via averaged autocorrelations with Geyer's initial
    positive-sequence truncation."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    if np.ptp(chains) <= 1e-300:
        return float(m * n)
    rho = np.mean([_autocorr(c) for c in chains], axis=0)
    # sum consecutive pairs until one goes non-positive
    tau = 1.0
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        t += 2
    ess = m * n / tau
    return float(min(ess, m * n))


def summarize(chain_values: dict[str, np.ndarray]) -> dict[str, tuple[float, float]]:
    """Per-parameter (ess, rhat) from a name -> (n_chains, n_draws) mapping."""
    return {
        name: (effective_sample_size(v), split_rhat(v))
        for name, v in chain_values.items()
    }
