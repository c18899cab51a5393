"""Covariate construction: thermal accumulation and backward moving averages.

Raw daily environment series (typically mean temperature) are turned into the
model's design matrix in two steps: a growing-degree-day transform and a
strictly backward box-kernel average that accounts for lag between
environmental conditions and the population response.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CovariateSeries


@dataclass
class RawEnvironmentSeries:
    """Daily raw environment columns on consecutive calendar days.

    ``values`` is N x L with one column per raw variable; ``day_index`` must
    increase in unit steps (daily data, no gaps).
    """

    day_index: np.ndarray
    values: np.ndarray
    names: list[str] = field(default_factory=list)
    dates: list[str] | None = None

    def __post_init__(self):
        self.day_index = np.asarray(self.day_index, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2:
            raise ValueError("values must be N x L")
        if self.day_index.shape != (self.values.shape[0],):
            raise ValueError("day_index length must match values rows")
        d = np.diff(self.day_index)
        if self.day_index.size > 1 and not np.all(d == 1):
            raise ValueError("day_index must increase in unit steps")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("environment values must be finite")
        if not self.names:
            self.names = [f"x{i + 1}" for i in range(self.values.shape[1])]
        if len(self.names) != self.values.shape[1]:
            raise ValueError("names length must match number of columns")
        if self.dates is not None and len(self.dates) != self.values.shape[0]:
            raise ValueError("dates length must match number of rows")

    @property
    def n_days(self) -> int:
        return self.values.shape[0]


@dataclass
class KernelSpec:
    """Backward box kernel of ``window_days`` strictly-prior days."""

    window_days: int
    kind: str = "backward_box"

    def __post_init__(self):
        self.window_days = int(self.window_days)
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")
        if self.kind != "backward_box":
            raise ValueError(f"unknown kernel kind {self.kind!r}")


def growing_degree_days(tmean_c, base_c: float = 10.0, cutoff_c: float = 30.0):
    """Daily thermal accumulation max(0, min(tmean, cutoff) - base).

    Scalar in, scalar out; arrays broadcast elementwise.
    """
    if not base_c < cutoff_c:
        raise ValueError("base temperature must be below cutoff temperature")
    t = np.asarray(tmean_c, dtype=float)
    gdd = np.maximum(0.0, np.minimum(t, cutoff_c) - base_c)
    return float(gdd) if np.ndim(tmean_c) == 0 else gdd


def convolve_backward_box(raw: RawEnvironmentSeries, spec: KernelSpec,
                          column: int = 0) -> np.ndarray:
    """Average of the ``window_days`` most recent strictly-prior days.

    Output at day t is the mean of the raw values on days t-phi .. t-1; day t
    itself is excluded so the covariate is causally lagged.  Days without a
    full history shrink the window to whatever strictly-prior days exist, and
    day 1 falls back to its own raw value.  Callers should treat the first
    ``window_days`` outputs as warm-up.
    """
    x = raw.values[:, column]
    n = x.shape[0]
    phi = spec.window_days
    if phi >= n:
        raise ValueError(f"window of {phi} days does not fit a {n}-day series")
    cs = np.concatenate(([0.0], np.cumsum(x)))
    out = np.empty(n)
    out[0] = x[0]
    # shrunken window for days with fewer than phi prior days
    head = np.arange(1, min(phi, n))
    out[head] = cs[head] / head
    full = np.arange(phi, n)
    out[full] = (cs[full] - cs[full - phi]) / phi
    return out


def convolve_backward_box_naive(raw: RawEnvironmentSeries, spec: KernelSpec,
                                column: int = 0) -> np.ndarray:
    """O(N * phi) reference summation with the same edge policy."""
    x = raw.values[:, column]
    n = x.shape[0]
    phi = spec.window_days
    if phi >= n:
        raise ValueError(f"window of {phi} days does not fit a {n}-day series")
    out = np.empty(n)
    out[0] = x[0]
    for d in range(1, n):
        lo = max(0, d - phi)
        out[d] = x[lo:d].mean()
    return out


def build_design(raw: RawEnvironmentSeries, specs: list[KernelSpec],
                 include_intercept: bool = True) -> CovariateSeries:
    """Assemble the design matrix: intercept plus one smoothed column per spec.

    With ``include_intercept=False`` the first raw column must already be the
    constant 1 (a box average leaves it unchanged).  The largest window is
    recorded as warm-up metadata.
    """
    if len(specs) != raw.values.shape[1]:
        raise ValueError(
            f"need one kernel spec per raw column, got {len(specs)} specs "
            f"for {raw.values.shape[1]} columns"
        )
    cols = [convolve_backward_box(raw, spec, column=i) for i, spec in enumerate(specs)]
    names = list(raw.names)
    if include_intercept:
        cols.insert(0, np.ones(raw.n_days))
        names.insert(0, "intercept")
    elif cols and not np.allclose(raw.values[:, 0], 1.0):
        raise ValueError("without include_intercept the first raw column must be constant 1")
    if not cols:
        cols = [np.ones(raw.n_days)]
        names = ["intercept"]
    warmup = max((s.window_days for s in specs), default=0)
    return CovariateSeries(
        values=np.column_stack(cols),
        day_index=raw.day_index.copy(),
        names=names,
        warmup_days=warmup,
        dates=list(raw.dates) if raw.dates is not None else None,
    )


def gdd_design(temperature: RawEnvironmentSeries, window_days: int = 14,
               base_c: float = 10.0, cutoff_c: float = 30.0) -> CovariateSeries:
    """Intercept + smoothed growing-degree-days from a daily temperature series."""
    gdd = growing_degree_days(temperature.values[:, 0], base_c=base_c, cutoff_c=cutoff_c)
    raw = RawEnvironmentSeries(
        day_index=temperature.day_index,
        values=gdd,
        names=["gdd"],
        dates=temperature.dates,
    )
    return build_design(raw, [KernelSpec(window_days=window_days)])
