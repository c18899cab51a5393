"""Command-line surface: simulate, fit, derive, compare, covariates.

Exit codes: 0 success, 1 validation problem, 2 numerical abort inside a
chain, 3 completed fit with a convergence warning (some split R-hat > 1.1;
outputs are still written).  Every command is deterministic given its config
and seed, and every run writes a ``resolved_config`` file recording the
effective settings.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np

from . import derived, io, mcmc, simulate
from .covariates import KernelSpec, RawEnvironmentSeries, build_design, gdd_design, growing_degree_days
from .io import ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_CONVERGENCE = 3

RHAT_LIMIT = 1.1


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage problems are validation failures
        raise ValidationError(message)


def _load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path:
        if not os.path.exists(path):
            raise ValidationError(f"config file not found: {path}")
        cfg.read(path)
    return cfg


def _cfg_get(cfg, section, key, cast, fallback):
    if cfg.has_option(section, key):
        raw = cfg.get(section, key)
        try:
            if cast is bool:
                return cfg.getboolean(section, key)
            return cast(raw)
        except ValueError:
            raise ValidationError(f"config [{section}] {key} = {raw!r} is not a valid {cast.__name__}") from None
    return fallback


def _resolve(cli_value, cfg, section, key, cast, default):
    """Priority: explicit CLI flag > config file entry > default."""
    if cli_value is not None:
        return cli_value
    return _cfg_get(cfg, section, key, cast, default)


def _write_resolved(values: dict, section: str, outdir: str) -> None:
    cfg = configparser.ConfigParser()
    cfg[section] = {k: str(v) for k, v in values.items()}
    io._write_ini(cfg, os.path.join(outdir, "resolved_config"))


# ---------------------------------------------------------------------------
# covariates
# ---------------------------------------------------------------------------

def cmd_covariates(args) -> int:
    cfg = _load_config(args.config)
    base = _resolve(args.gdd_base, cfg, "covariates", "gdd_base", float, 10.0)
    cutoff = _resolve(args.gdd_cutoff, cfg, "covariates", "gdd_cutoff", float, 30.0)
    windows_raw = _resolve(args.windows, cfg, "covariates", "windows", str, "14")
    windows = [int(w) for w in str(windows_raw).split(",")]
    if any(w < 1 for w in windows):
        raise ValidationError("smoothing windows must be >= 1")

    if args.env:
        env = io.load_environment(args.env)
        synthetic = False
    else:
        n_days = _resolve(args.synthetic_days, cfg, "covariates", "synthetic_days", int, 1096)
        env = simulate.synthetic_temperature(n_days=n_days, seed=args.seed or 0)
        synthetic = True
    if env.names[0] != "tmean_c":
        raise ValidationError("environment file must carry a 'tmean_c' first value column")

    gdd = growing_degree_days(env.values[:, 0], base_c=base, cutoff_c=cutoff)
    cols = np.column_stack([gdd] + [env.values[:, k] for k in range(1, env.values.shape[1])])
    names = ["gdd"] + list(env.names[1:])
    if len(windows) == 1:
        windows = windows * len(names)
    if len(windows) != len(names):
        raise ValidationError(f"need one window per covariate ({len(names)}), got {len(windows)}")
    raw = RawEnvironmentSeries(day_index=env.day_index, values=cols, names=names, dates=env.dates)
    cov = build_design(raw, [KernelSpec(window_days=w) for w in windows])
    io.write_covariates(cov, args.out)
    _write_resolved(
        {"gdd_base": base, "gdd_cutoff": cutoff, "windows": ",".join(map(str, windows)),
         "synthetic": synthetic, "n_days": cov.n_days, "warmup_days": cov.warmup_days},
        "covariates", os.path.dirname(os.path.abspath(args.out)),
    )
    print(f"wrote {args.out}: {cov.n_days} days, {cov.n_covariates} columns "
          f"(warm-up {cov.warmup_days} days{', synthetic temperature' if synthetic else ''})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _mechanism_from(args, cfg):
    name = _resolve(args.mechanism, cfg, "simulate", "mechanism", str, "random")
    if name == "random":
        prob = _resolve(args.mech_prob, cfg, "simulate", "mech_prob", float, 0.3)
        return simulate.RandomSampling(prob=prob)
    if name == "switch":
        prob = _resolve(args.mech_prob, cfg, "simulate", "mech_prob", float, 0.3)
        thr = _resolve(args.mech_threshold, cfg, "simulate", "mech_threshold", float, 15.0)
        return simulate.PreferentialSwitchSampling(threshold=thr, prob=prob)
    if name == "logistic":
        icpt = _resolve(args.mech_intercept, cfg, "simulate", "mech_intercept", float, -10.0)
        slope = _resolve(args.mech_slope, cfg, "simulate", "mech_slope", float, 0.4)
        return simulate.LogisticSampling(intercept=icpt, slope=slope)
    raise ValidationError(f"unknown mechanism {name!r} (expected random|switch|logistic)")


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    seed = _resolve(args.seed, cfg, "simulate", "seed", int, 0)

    if args.covariates:
        cov = io.load_covariates(args.covariates)
    else:
        if args.temperature:
            env = io.load_environment(args.temperature)
        else:
            n_days = _resolve(None, cfg, "simulate", "synthetic_days", int, 1096)
            env = simulate.synthetic_temperature(n_days=n_days, seed=seed)
        cov = gdd_design(env, window_days=14)

    preset = _resolve(args.preset, cfg, "simulate", "preset", str, simulate.PRESET_NAME)
    if preset != simulate.PRESET_NAME:
        raise ValidationError(f"unknown preset {preset!r}")
    params = simulate.preset_params(n_covariates=cov.n_covariates)
    alpha = _resolve(args.alpha, cfg, "simulate", "alpha", float, None)
    sigma2 = _resolve(args.sigma2, cfg, "simulate", "sigma2", float, None)
    beta_raw = _resolve(args.beta, cfg, "simulate", "beta", str, None)
    if alpha is not None:
        params.alpha[:] = alpha
    if sigma2 is not None:
        params.sigma2 = sigma2
    if beta_raw is not None:
        vals = [float(v) for v in str(beta_raw).split(",")]
        if len(vals) != cov.n_covariates:
            raise ValidationError(f"--beta needs {cov.n_covariates} comma-separated values")
        params.beta[0] = vals

    mech = _mechanism_from(args, cfg)
    truth = simulate.simulate_dataset(params, cov, mech, seed=seed)
    io.write_dataset(truth, cov, args.out)
    _write_resolved(
        {"seed": seed, "preset": preset, "mechanism": type(mech).__name__,
         "alpha": ",".join(io._fmt(a) for a in params.alpha),
         "beta": ",".join(io._fmt(b) for b in params.beta[0]),
         "sigma2": io._fmt(params.sigma2)},
        "simulate", args.out,
    )
    n_obs = truth.observations.n_observed
    mean_count = float(truth.observations.counts.mean()) if n_obs else float("nan")
    print(f"dataset {args.out}: N={cov.n_days} days, n={n_obs} observed, "
          f"mean observed count {mean_count:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

_VARIANTS = {"pref": mcmc.PREFERENTIAL, "nonpref": mcmc.NON_PREFERENTIAL}


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    variant_key = _resolve(args.variant, cfg, "fit", "variant", str, "pref")
    if variant_key not in _VARIANTS:
        raise ValidationError(f"--variant must be pref or nonpref, got {variant_key!r}")
    config = mcmc.McmcConfig(
        n_iterations=_resolve(args.iterations, cfg, "fit", "iterations", int, 50_000),
        burn_in=_resolve(args.burn_in, cfg, "fit", "burn_in", int, 20_000),
        thin=_resolve(args.thin, cfg, "fit", "thin", int, 10),
        model_variant=_VARIANTS[variant_key],
        proposal_sd_loglambda=_resolve(args.proposal_sd_loglambda, cfg, "fit",
                                       "proposal_sd_loglambda", float, 0.5),
        proposal_sd_lambda_tilde=_resolve(args.proposal_sd_lambda_tilde, cfg, "fit",
                                          "proposal_sd_lambda_tilde", float, 0.5),
        adapt=_resolve(None if args.no_adapt is None else not args.no_adapt,
                       cfg, "fit", "adapt", bool, True),
        seed=_resolve(args.seed, cfg, "fit", "seed", int, 0),
        n_chains=_resolve(args.chains, cfg, "fit", "chains", int, 1),
        truncate_alpha=_resolve(None, cfg, "fit", "truncate_alpha", bool, True),
        state_stride=_resolve(args.state_stride, cfg, "fit", "state_stride", int, 1),
    )
    cov = io.load_covariates(args.covariates)
    obs = io.load_observations(args.observations, cov.day_index,
                               drop_zero_days=args.drop_zero_days)
    draws = mcmc.run_chain(obs, cov, hyper=None, config=config)
    io.write_draws(draws, args.out)
    _write_resolved(
        {"variant": variant_key, "iterations": config.n_iterations,
         "burn_in": config.burn_in, "thin": config.thin, "chains": config.n_chains,
         "seed": config.seed, "adapt": config.adapt,
         "proposal_sd_loglambda": config.proposal_sd_loglambda,
         "proposal_sd_lambda_tilde": config.proposal_sd_lambda_tilde,
         "truncate_alpha": config.truncate_alpha, "state_stride": config.state_stride,
         "drop_zero_days": args.drop_zero_days},
        "fit", args.out,
    )
    worst = max((r for _, r in draws.diagnostics.values() if np.isfinite(r)), default=float("nan"))
    print(f"fit {args.out}: {draws.n_draws} draws, acceptance "
          + ", ".join(f"{k}={v:.3f}" for k, v in sorted(draws.acceptance.items()))
          + f", max split-Rhat {worst:.3f}")
    if np.isfinite(worst) and worst > RHAT_LIMIT:
        print(f"warning: split-Rhat above {RHAT_LIMIT}; treat the posterior with caution",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# derive
# ---------------------------------------------------------------------------

def cmd_derive(args) -> int:
    draws = io.load_draws(args.draws)
    if draws.n_draws == 0:
        raise RuntimeError("draws directory contains no post-burn-in draws")
    cov = io.load_covariates(args.covariates)
    if not np.array_equal(cov.day_index, draws.day_index):
        raise ValidationError("covariates do not cover the same days as the draws")
    os.makedirs(args.out, exist_ok=True)

    growth = derived.growth_summary(draws, cov)
    io.write_growth(cov.day_index, growth.median, growth.mean, growth.q25,
                    growth.q75, os.path.join(args.out, "growth.csv"))

    windows = derived.year_windows(cov)
    psi = derived.psi_posterior(draws, cov, windows, plug=args.psi_plug)
    io.write_psi(psi.rows, os.path.join(args.out, "psi.csv"))

    summary = derived.summarize_series(draws.loglambda)
    io.write_summary(cov.day_index, summary, os.path.join(args.out, "summary.csv"))

    meta = {"variant": draws.variant, "label": args.label or "dataset"}
    if draws.preferential:
        (lo, hi), p_pos = derived.theta1_preferential_test(draws)
        meta.update(theta1_lo=io._fmt(lo), theta1_hi=io._fmt(hi), theta1_p_positive=io._fmt(p_pos))
    if args.truth:
        days, true_ll = io.load_truth(args.truth)
        if not np.array_equal(days, cov.day_index):
            raise ValidationError("truth file does not cover the same days as the draws")
        est = derived.posterior_mean_abundance(draws)
        rmse = derived.rmse_abundance(est.ravel(), np.exp(true_ll).ravel())
        io.write_rmse(draws.variant, rmse, os.path.join(args.out, "rmse.csv"))
        meta["rmse"] = io._fmt(rmse)
    cfgp = configparser.ConfigParser()
    cfgp["derived"] = {k: str(v) for k, v in meta.items()}
    io._write_ini(cfgp, os.path.join(args.out, "derived_meta"))
    print(f"derived outputs in {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def cmd_compare(args) -> int:
    if len(args.dirs) < 2:
        raise ValidationError("compare needs at least two derived-output directories")
    entries = {}
    for d in args.dirs:
        meta = configparser.ConfigParser()
        if not meta.read(os.path.join(d, "derived_meta")):
            raise ValidationError(f"{d}: missing derived_meta (run derive first)")
        sec = meta["derived"]
        label = sec.get("label")
        variant = sec.get("variant")
        if "rmse" not in sec:
            raise ValidationError(f"{d}: no rmse recorded (derive with --truth)")
        key = (label, variant)
        if key in entries:
            raise ValidationError(f"duplicate comparison entry for {label}/{variant}")
        entries[key] = sec
    labels = sorted({label for (label, _) in entries})
    lines = ["mechanism,rmse_non_preferential,rmse_preferential,theta1_lo,theta1_hi,theta1_p_positive"]
    for label in labels:
        non = entries.get((label, mcmc.NON_PREFERENTIAL))
        pref = entries.get((label, mcmc.PREFERENTIAL))
        if non is None or pref is None:
            raise ValidationError(f"label {label!r} needs both a preferential and a non-preferential fit")
        lines.append(",".join([
            label,
            non.get("rmse"),
            pref.get("rmse"),
            pref.get("theta1_lo", ""),
            pref.get("theta1_hi", ""),
            pref.get("theta1_p_positive", ""),
        ]))
    io.atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote comparison table {args.out} ({len(labels)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prefabund", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("covariates", help="build the design matrix from daily temperature")
    p.add_argument("--env", help="environment CSV (day,tmean_c[,extra...])")
    p.add_argument("--synthetic-days", type=int, help="generate a synthetic temperature series instead")
    p.add_argument("--out", required=True, help="output covariate CSV")
    p.add_argument("--windows", help="comma-separated smoothing windows (default 14)")
    p.add_argument("--gdd-base", type=float, dest="gdd_base")
    p.add_argument("--gdd-cutoff", type=float, dest="gdd_cutoff")
    p.add_argument("--seed", type=int, help="seed for the synthetic series")
    p.add_argument("--config")
    p.set_defaults(func=cmd_covariates)

    p = sub.add_parser("simulate", help="simulate a dataset with a sampling mechanism")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--covariates", help="covariate CSV (else built from temperature)")
    p.add_argument("--temperature", help="temperature CSV used to build covariates")
    p.add_argument("--preset", help=f"named parameter preset (only {simulate.PRESET_NAME!r})")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", help="comma-separated trend coefficients")
    p.add_argument("--sigma2", type=float)
    p.add_argument("--mechanism", choices=["random", "switch", "logistic"])
    p.add_argument("--mech-prob", type=float, dest="mech_prob")
    p.add_argument("--mech-threshold", type=float, dest="mech_threshold")
    p.add_argument("--mech-intercept", type=float, dest="mech_intercept")
    p.add_argument("--mech-slope", type=float, dest="mech_slope")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the MCMC sampler on an observation CSV")
    p.add_argument("--observations", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--out", required=True, help="output draws directory")
    p.add_argument("--variant", choices=["pref", "nonpref"])
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--thin", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--proposal-sd-loglambda", type=float, dest="proposal_sd_loglambda")
    p.add_argument("--proposal-sd-lambda-tilde", type=float, dest="proposal_sd_lambda_tilde")
    p.add_argument("--no-adapt", action="store_true", default=None,
                   help="disable proposal adaptation during burn-in")
    p.add_argument("--state-stride", type=int, dest="state_stride")
    p.add_argument("--drop-zero-days", action="store_true",
                   help="remove observed days whose total count is zero")
    p.add_argument("--config")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("derive", help="growth rates, timing and summaries from draws")
    p.add_argument("--draws", required=True, help="fit output directory")
    p.add_argument("--covariates", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="truth CSV; enables rmse.csv")
    p.add_argument("--label", help="dataset label used by compare")
    p.add_argument("--psi-plug", choices=["draw", "median"], default="draw",
                   dest="psi_plug",
                   help="condition first-growth-day on each draw's own path or "
                        "on the posterior-median path")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("compare", help="tabulate RMSE and theta1 across fits")
    p.add_argument("--out", required=True, help="output comparison CSV")
    p.add_argument("dirs", nargs="+", help="derived-output directories")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except mcmc.NumericalAbortError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
