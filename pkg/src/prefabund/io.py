"""CSV interchange and dataset directories.

All writers are atomic (write-temp-then-rename) and timestamp-free so a rerun
with the same inputs is byte-identical.  All readers validate against the
documented schemas and raise :class:`ValidationError` naming the offending
row or column.

Schemas
-------
environment      day[,date],tmean_c[,extra...]
covariates       day[,date],intercept,<name>...
observations     day,species,count[,effort][,trap_fraction,duration_days]
truth            day,log_lambda_1..J
counts_full      day,species,count
tau              day,tau
draws_params     iter,chain,alpha_j...,beta_j_l...,sigma2[,theta0,theta1,lambda_tilde]
draws_loglambda  iter,chain,day,species,value
"""

from __future__ import annotations

import configparser
import csv
import io as _io
import os
import tempfile

import numpy as np

from .core import CovariateSeries, ObservationSet
from .covariates import RawEnvironmentSeries
from .mcmc import McmcConfig, PosteriorDraws
from .simulate import SimulationTruth


class ValidationError(ValueError):
    """Malformed input file, config or CLI argument."""


def _fmt(x) -> str:
    """Shortest round-trip decimal form; stable across runs."""
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_rows(path: str):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path}: empty file")
    return [r[0].split(",") if len(r) == 1 and "," not in r[0] else r for r in rows]


def _parse_float(value: str, path: str, row: int, col: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ValidationError(f"{path}: row {row}, column {col!r}: {value!r} is not a number") from None
    if not np.isfinite(out):
        raise ValidationError(f"{path}: row {row}, column {col!r}: value must be finite")
    return out


def _parse_int(value: str, path: str, row: int, col: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"{path}: row {row}, column {col!r}: {value!r} is not an integer") from None


# ---------------------------------------------------------------------------
# environment and covariates
# ---------------------------------------------------------------------------

def load_environment(path: str) -> RawEnvironmentSeries:
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "day":
        raise ValidationError(f"{path}: first column must be 'day'")
    has_date = len(header) > 1 and header[1] == "date"
    first_val = 2 if has_date else 1
    names = header[first_val:]
    if not names:
        raise ValidationError(f"{path}: no value columns found")
    days, dates, vals = [], [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {i}: expected {len(header)} fields, got {len(row)}")
        days.append(_parse_int(row[0], path, i, "day"))
        if has_date:
            dates.append(row[1].strip())
        vals.append([_parse_float(row[k], path, i, header[k]) for k in range(first_val, len(header))])
    try:
        return RawEnvironmentSeries(
            day_index=np.array(days, dtype=int),
            values=np.array(vals, dtype=float),
            names=names,
            dates=dates if has_date else None,
        )
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_environment(env: RawEnvironmentSeries, path: str) -> None:
    header = ["day"] + (["date"] if env.dates is not None else []) + list(env.names)
    lines = [",".join(header)]
    for i in range(env.n_days):
        row = [str(int(env.day_index[i]))]
        if env.dates is not None:
            row.append(env.dates[i])
        row.extend(_fmt(v) for v in env.values[i])
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_covariates(path: str) -> CovariateSeries:
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "day":
        raise ValidationError(f"{path}: first column must be 'day'")
    has_date = len(header) > 1 and header[1] == "date"
    first_val = 2 if has_date else 1
    names = header[first_val:]
    if not names or names[0] != "intercept":
        raise ValidationError(f"{path}: first covariate column must be 'intercept'")
    days, dates, vals = [], [], []
    seen = set()
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {i}: expected {len(header)} fields, got {len(row)}")
        day = _parse_int(row[0], path, i, "day")
        if day in seen:
            raise ValidationError(f"{path}: row {i}: duplicate day {day}")
        seen.add(day)
        days.append(day)
        if has_date:
            dates.append(row[1].strip())
        vals.append([_parse_float(row[k], path, i, header[k]) for k in range(first_val, len(header))])
    day_index = np.array(days, dtype=int)
    if day_index.size > 1 and np.any(np.diff(day_index) <= 0):
        raise ValidationError(f"{path}: day column must be strictly increasing")
    try:
        return CovariateSeries(
            values=np.array(vals, dtype=float),
            day_index=day_index,
            names=names,
            dates=dates if has_date else None,
        )
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_covariates(cov: CovariateSeries, path: str) -> None:
    header = ["day"] + (["date"] if cov.dates is not None else []) + list(cov.names)
    lines = [",".join(header)]
    for i in range(cov.n_days):
        row = [str(int(cov.day_index[i]))]
        if cov.dates is not None:
            row.append(cov.dates[i])
        row.extend(_fmt(v) for v in cov.values[i])
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------

_OBS_HEADERS = (
    ["day", "species", "count"],
    ["day", "species", "count", "effort"],
    ["day", "species", "count", "trap_fraction", "duration_days"],
    ["day", "species", "count", "effort", "trap_fraction", "duration_days"],
)


def load_observations(path: str, day_index: np.ndarray,
                      drop_zero_days: bool = False) -> ObservationSet:
    """Read a long-format counts file against a known study calendar.

    ``day_index`` (from the covariates) defines the study days; every file
    day must appear there.  Missing effort columns default to 1.  With
    ``drop_zero_days`` set, observed days whose total count across species is
    zero are removed from the observation set (their tau flips to 0); this is
    always an explicit opt-in.
    """
    day_index = np.asarray(day_index, dtype=int)
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if header not in [list(h) for h in _OBS_HEADERS]:
        raise ValidationError(
            f"{path}: header must be one of "
            + " | ".join(",".join(h) for h in _OBS_HEADERS)
            + f"; got {','.join(header)}"
        )
    has_effort = "effort" in header
    has_parts = "trap_fraction" in header
    pos_of = {name: k for k, name in enumerate(header)}
    day_pos = {int(d): i for i, d in enumerate(day_index)}

    records = {}
    species_ids = set()
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {i}: expected {len(header)} fields, got {len(row)}")
        day = _parse_int(row[0], path, i, "day")
        if day not in day_pos:
            raise ValidationError(f"{path}: row {i}: day {day} is outside the covariate range")
        sp = _parse_int(row[1], path, i, "species")
        if sp < 1:
            raise ValidationError(f"{path}: row {i}: species ids must be >= 1")
        count_raw = _parse_float(row[2], path, i, "count")
        if count_raw != int(count_raw):
            raise ValidationError(f"{path}: row {i}, column 'count': {row[2]!r} is not an integer")
        count = int(count_raw)
        if count < 0:
            raise ValidationError(f"{path}: row {i}: counts must be non-negative")
        key = (day, sp)
        if key in records:
            raise ValidationError(f"{path}: row {i}: duplicate entry for day {day}, species {sp}")
        eff = tf = dd = None
        if has_effort:
            eff = _parse_float(row[pos_of["effort"]], path, i, "effort")
        if has_parts:
            tf = _parse_float(row[pos_of["trap_fraction"]], path, i, "trap_fraction")
            dd = _parse_float(row[pos_of["duration_days"]], path, i, "duration_days")
            if tf <= 0 or dd <= 0:
                raise ValidationError(f"{path}: row {i}: trap_fraction and duration_days must be positive")
            if eff is None:
                eff = tf * dd
            elif abs(eff - tf * dd) > 1e-12:
                raise ValidationError(
                    f"{path}: row {i}: effort {eff} does not equal trap_fraction * duration_days"
                )
        if eff is None:
            eff = 1.0
        if eff <= 0:
            raise ValidationError(f"{path}: row {i}: effort must be strictly positive")
        records[key] = (count, eff, tf, dd)
        species_ids.add(sp)

    if not records:
        raise ValidationError(f"{path}: no observation rows")
    n_species = max(species_ids)
    if species_ids != set(range(1, n_species + 1)):
        raise ValidationError(f"{path}: species ids must be contiguous 1..J, got {sorted(species_ids)}")
    obs_days = sorted({day for day, _ in records})
    counts = np.zeros((n_species, len(obs_days)), dtype=np.int64)
    effort = np.ones(len(obs_days))
    tfs = np.ones(len(obs_days))
    dds = np.ones(len(obs_days))
    for k, day in enumerate(obs_days):
        day_effort = None
        for sp in range(1, n_species + 1):
            if (day, sp) not in records:
                raise ValidationError(f"{path}: day {day} is missing a row for species {sp}")
            count, eff, tf, dd = records[(day, sp)]
            counts[sp - 1, k] = count
            if day_effort is None:
                day_effort = (eff, tf, dd)
            elif abs(day_effort[0] - eff) > 1e-12:
                raise ValidationError(f"{path}: day {day}: species disagree on effort")
        effort[k] = day_effort[0]
        if day_effort[1] is not None:
            tfs[k] = day_effort[1]
            dds[k] = day_effort[2]

    keep = np.ones(len(obs_days), dtype=bool)
    if drop_zero_days:
        keep = counts.sum(axis=0) > 0
    positions = np.array([day_pos[d] for d in obs_days], dtype=int)[keep]
    tau = np.zeros(day_index.size, dtype=int)
    tau[positions] = 1
    return ObservationSet(
        tau=tau,
        observed_days=positions,
        counts=counts[:, keep],
        effort=effort[keep],
        trap_fraction=tfs[keep] if has_parts else None,
        duration_days=dds[keep] if has_parts else None,
        day_index=day_index.copy(),
    )


def write_observations(obs: ObservationSet, path: str) -> None:
    if obs.day_index is None:
        raise ValueError("observation set needs day_index for CSV output")
    lines = ["day,species,count,effort"]
    for k, pos in enumerate(obs.observed_days):
        day = int(obs.day_index[pos])
        for sp in range(obs.n_species):
            lines.append(f"{day},{sp + 1},{int(obs.counts[sp, k])},{_fmt(obs.effort[k])}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# simulated datasets
# ---------------------------------------------------------------------------

def write_dataset(truth: SimulationTruth, covariates: CovariateSeries, outdir: str) -> None:
    """Write one simulated dataset directory: ground truth, full counts,
    thinned observations, the indicator vector, covariates and a meta file."""
    os.makedirs(outdir, exist_ok=True)
    j, n = truth.state.log_lambda.shape
    di = covariates.day_index

    lines = ["day," + ",".join(f"log_lambda_{s + 1}" for s in range(j))]
    for i in range(n):
        lines.append(f"{int(di[i])}," + ",".join(_fmt(truth.state.log_lambda[s, i]) for s in range(j)))
    atomic_write_text(os.path.join(outdir, "truth.csv"), "\n".join(lines) + "\n")

    lines = ["day,species,count"]
    for i in range(n):
        for s in range(j):
            lines.append(f"{int(di[i])},{s + 1},{int(truth.full_counts[s, i])}")
    atomic_write_text(os.path.join(outdir, "counts_full.csv"), "\n".join(lines) + "\n")

    write_observations(truth.observations, os.path.join(outdir, "observations.csv"))

    lines = ["day,tau"]
    for i in range(n):
        lines.append(f"{int(di[i])},{int(truth.observations.tau[i])}")
    atomic_write_text(os.path.join(outdir, "tau.csv"), "\n".join(lines) + "\n")

    write_covariates(covariates, os.path.join(outdir, "covariates.csv"))

    cfg = configparser.ConfigParser()
    cfg["dataset"] = {
        "seed": str(truth.seed),
        "n_days": str(n),
        "n_species": str(j),
        "n_observed": str(truth.observations.n_observed),
        "mechanism": type(truth.mechanism).__name__ if truth.mechanism else "none",
        "mechanism_fields": repr(vars(truth.mechanism)) if truth.mechanism else "",
    }
    cfg["params"] = {
        "alpha": ",".join(_fmt(a) for a in truth.params.alpha),
        "beta": ";".join(",".join(_fmt(b) for b in row) for row in truth.params.beta),
        "sigma2": _fmt(truth.params.sigma2),
    }
    _write_ini(cfg, os.path.join(outdir, "meta"))


def load_truth(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Return (day_index, log_lambda J x N) from a truth CSV."""
    rows = _read_rows(path)
    header = rows[0]
    if header[0] != "day" or not all(h.startswith("log_lambda_") for h in header[1:]):
        raise ValidationError(f"{path}: expected header day,log_lambda_1,...")
    days, vals = [], []
    for i, row in enumerate(rows[1:], start=2):
        days.append(_parse_int(row[0], path, i, "day"))
        vals.append([_parse_float(v, path, i, header[k + 1]) for k, v in enumerate(row[1:])])
    return np.array(days, dtype=int), np.array(vals, dtype=float).T


def _write_ini(cfg: configparser.ConfigParser, path: str) -> None:
    buf = _io.StringIO()
    cfg.write(buf)
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# posterior draws
# ---------------------------------------------------------------------------

def _param_columns(j: int, p: int, preferential: bool) -> list[str]:
    cols = [f"alpha_{s + 1}" for s in range(j)]
    cols += [f"beta_{s + 1}_{l + 1}" for s in range(j) for l in range(p)]
    cols += ["sigma2"]
    if preferential:
        cols += ["theta0", "theta1", "lambda_tilde"]
    return cols


def write_draws(draws: PosteriorDraws, outdir: str) -> None:
    os.makedirs(outdir, exist_ok=True)
    m, j, p = draws.beta.shape
    pref = draws.preferential
    cols = _param_columns(j, p, pref)
    lines = ["iter,chain," + ",".join(cols)]
    for k in range(m):
        vals = [str(int(draws.iteration[k])), str(int(draws.chain[k]))]
        vals += [_fmt(draws.alpha[k, s]) for s in range(j)]
        vals += [_fmt(draws.beta[k, s, l]) for s in range(j) for l in range(p)]
        vals.append(_fmt(draws.sigma2[k]))
        if pref:
            vals += [_fmt(draws.theta[k, 0]), _fmt(draws.theta[k, 1]),
                     _fmt(draws.lambda_tilde[k])]
        lines.append(",".join(vals))
    atomic_write_text(os.path.join(outdir, "draws_params.csv"), "\n".join(lines) + "\n")

    di = draws.day_index
    parts = ["iter,chain,day,species,value"]
    for k in range(draws.loglambda.shape[0]):
        it = int(draws.loglambda_iteration[k])
        ch = int(draws.loglambda_chain[k])
        for s in range(j):
            row = draws.loglambda[k, s]
            parts.extend(
                f"{it},{ch},{int(di[i])},{s + 1},{_fmt(row[i])}" for i in range(di.size)
            )
    atomic_write_text(os.path.join(outdir, "draws_loglambda.csv"), "\n".join(parts) + "\n")

    lines = ["block,rate"]
    for name in sorted(draws.acceptance):
        lines.append(f"{name},{_fmt(draws.acceptance[name])}")
    atomic_write_text(os.path.join(outdir, "acceptance.csv"), "\n".join(lines) + "\n")

    lines = ["param,ess,rhat"]
    for name in sorted(draws.diagnostics):
        ess, rhat = draws.diagnostics[name]
        lines.append(f"{name},{_fmt(ess)},{_fmt(rhat)}")
    atomic_write_text(os.path.join(outdir, "diagnostics.csv"), "\n".join(lines) + "\n")

    cfg = configparser.ConfigParser()
    cfg["fit"] = {
        "variant": draws.variant,
        "n_iterations": str(draws.config.n_iterations),
        "burn_in": str(draws.config.burn_in),
        "thin": str(draws.config.thin),
        "n_chains": str(draws.config.n_chains),
        "seed": str(draws.config.seed),
        "state_stride": str(draws.config.state_stride),
    }
    _write_ini(cfg, os.path.join(outdir, "fit_meta"))


def load_draws(outdir: str) -> PosteriorDraws:
    """Rebuild draws from a fit directory (the columns needed for derivation).

    Hierarchy draws and augmentation variables are not persisted; the loaded
    object carries placeholders for them.
    """
    meta = configparser.ConfigParser()
    meta_path = os.path.join(outdir, "fit_meta")
    if not meta.read(meta_path):
        raise ValidationError(f"missing fit_meta in {outdir}")
    fit = meta["fit"]
    config = McmcConfig(
        n_iterations=fit.getint("n_iterations"),
        burn_in=fit.getint("burn_in"),
        thin=fit.getint("thin"),
        model_variant=fit.get("variant"),
        seed=fit.getint("seed"),
        n_chains=fit.getint("n_chains"),
        state_stride=fit.getint("state_stride"),
    )
    pref = config.model_variant == "preferential"

    p_path = os.path.join(outdir, "draws_params.csv")
    rows = _read_rows(p_path)
    header = rows[0]
    j = sum(1 for h in header if h.startswith("alpha_"))
    p = sum(1 for h in header if h.startswith("beta_1_"))
    expected = ["iter", "chain"] + _param_columns(j, p, pref)
    if header != expected:
        raise ValidationError(f"{p_path}: unexpected columns {header}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if data.size == 0:
        raise ValidationError(f"{p_path}: no draws")
    col = {name: i for i, name in enumerate(header)}
    m = data.shape[0]
    alpha = data[:, [col[f"alpha_{s + 1}"] for s in range(j)]]
    beta = np.stack(
        [data[:, [col[f"beta_{s + 1}_{l + 1}"] for l in range(p)]] for s in range(j)],
        axis=1,
    )
    theta = None
    lam_tilde = None
    if pref:
        theta = data[:, [col["theta0"], col["theta1"]]]
        lam_tilde = data[:, col["lambda_tilde"]]

    s_path = os.path.join(outdir, "draws_loglambda.csv")
    rows = _read_rows(s_path)
    if rows[0] != ["iter", "chain", "day", "species", "value"]:
        raise ValidationError(f"{s_path}: unexpected columns {rows[0]}")
    sdata = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    days = np.unique(sdata[:, 2].astype(int))
    day_order = {d: i for i, d in enumerate(days)}
    keys = list(dict.fromkeys((int(a), int(b)) for a, b in sdata[:, :2]))
    key_order = {ki: i for i, ki in enumerate(keys)}
    ms = len(keys)
    state = np.empty((ms, j, days.size))
    for r in sdata:
        k = key_order[(int(r[0]), int(r[1]))]
        state[k, int(r[3]) - 1, day_order[int(r[2])]] = r[4]
    it_state = np.array([ki[0] for ki in keys], dtype=int)
    ch_state = np.array([ki[1] for ki in keys], dtype=int)

    acc = {}
    for r in _read_rows(os.path.join(outdir, "acceptance.csv"))[1:]:
        acc[r[0]] = float(r[1])
    diag = {}
    for r in _read_rows(os.path.join(outdir, "diagnostics.csv"))[1:]:
        diag[r[0]] = (float(r[1]), float(r[2]))

    return PosteriorDraws(
        variant=config.model_variant,
        iteration=data[:, col["iter"]].astype(int),
        chain=data[:, col["chain"]].astype(int),
        alpha=alpha,
        beta=beta,
        sigma2=data[:, col["sigma2"]],
        mu_beta=np.zeros((m, p)),
        sigma_beta=np.broadcast_to(np.eye(p), (m, p, p)).copy(),
        theta=theta,
        lambda_tilde=lam_tilde,
        z=None,
        loglambda=state,
        loglambda_iteration=it_state,
        loglambda_chain=ch_state,
        acceptance=acc,
        diagnostics=diag,
        config=config,
        day_index=days,
    )


# ---------------------------------------------------------------------------
# derived outputs
# ---------------------------------------------------------------------------

def write_growth(day_index, median, mean, q25, q75, path: str) -> None:
    j = median.shape[0]
    lines = ["day,species,median,mean,q25,q75"]
    for s in range(j):
        for i in range(median.shape[1]):
            lines.append(
                f"{int(day_index[i + 1])},{s + 1},{_fmt(median[s, i])},"
                f"{_fmt(mean[s, i])},{_fmt(q25[s, i])},{_fmt(q75[s, i])}"
            )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_psi(rows, path: str) -> None:
    lines = ["year,species,draw,psi"]
    for (year, species, draw, psi) in rows:
        lines.append(f"{year},{species},{draw},{'' if psi is None else psi}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary(day_index, summary, path: str) -> None:
    mean = summary["mean"]
    med = summary["median"]
    lo50, hi50 = summary[0.5]
    lo95, hi95 = summary[0.95]
    lines = ["day,species,mean,median,q25,q75,q2_5,q97_5"]
    for s in range(mean.shape[0]):
        for i in range(mean.shape[1]):
            lines.append(
                f"{int(day_index[i])},{s + 1},{_fmt(mean[s, i])},{_fmt(med[s, i])},"
                f"{_fmt(lo50[s, i])},{_fmt(hi50[s, i])},{_fmt(lo95[s, i])},{_fmt(hi95[s, i])}"
            )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_rmse(variant: str, rmse: float, path: str) -> None:
    atomic_write_text(path, "model_variant,rmse\n" + f"{variant},{_fmt(rmse)}\n")
