"""
cli.py

funbayes command-line entry point.

Subcommands:
- simulate        replicated simulation study (MASE / MISE tables)
- fit             fit one model on a CSV data set, write model JSON + chain dump
- predict         point forecasts and pointwise prediction intervals
- diagnose        trace / ACF / SIF / Geweke data from a chain dump
- compare-priors  marginal likelihood and forecast scores per prior
- bootstrap       bootstrap RMSFE comparison against functional CV
- surrogate       synthetic spectroscopy table + schema sidecar
- prior-curves    prior densities over squared bandwidth

Every flag defaults from FUNBAYES_<FLAG> when that variable is set.

Exit codes:
- 0 ok, 2 usage, 3 data error, 4 numerical failure
"""

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from config import (
    BATCH_SIZE,
    BURN_IN,
    CJ_DRAWS,
    CV_BUDGET,
    ENV_PREFIX,
    JOBS,
    MISE_GRID,
    N_RECORD,
    PRED_GRID,
    PRIOR,
    PRIOR_PRESETS,
    REPLICATIONS,
    SEED,
    SEMIMETRIC,
    TECATOR_N_TRAIN,
    env_default,
    env_problems,
    env_typed,
    parse_grid,
)
from dataset import load_csv, load_schema, save_schema, split
from errdensity import density_to_csv, error_density_grid
from experiments import (
    SimConfig,
    StudySettings,
    coverage,
    msfe_mafe,
    prior_density_curves,
    run_bootstrap_comparison,
    run_irrelevant_study,
    run_study,
    settings_record,
    tecator_surrogate,
)
from fitting import METHODS, fit_bayes, fit_cv, load_model, predict, save_model
from posterior import PriorSpec, parse_prior
from sampler import McmcConfig, autocorrelation, geweke, inefficiency_factor, load_chain, marginal_likelihood, save_chain
from semimetric import SemiMetricSpec, parse_semimetric
from utils import DataError, FunBayesError, UsageError, build_manifest, read_csv, write_csv, write_json

GEWEKE_FLAG = 3.0


# -----------------------
# Flag parsing helpers
# -----------------------
def _grid(text: str):
    try:
        return parse_grid(text)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _prior(text: str) -> PriorSpec:
    try:
        return parse_prior(text)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _semimetric(text: str) -> SemiMetricSpec:
    try:
        return parse_semimetric(text)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _mcmc(args: argparse.Namespace) -> McmcConfig:
    try:
        return McmcConfig(burn_in=args.burnin, n_record=args.iters, seed=args.seed)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"Cannot create output directory {out}: {e}") from e
    return out


def _config(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in ("func", "out")}


# predict reads --model from FUNBAYES_MODEL_FILE; FUNBAYES_MODEL is the simulation model number
ENV_NAMES = {"model": "MODEL_FILE"}


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [
        f"--{n.replace('_', '-')} (or {ENV_PREFIX}{ENV_NAMES.get(n, n.upper())})"
        for n in names
        if getattr(args, n) in (None, "")
    ]
    if missing:
        raise UsageError(f"Missing required flag(s): {', '.join(missing)}")


def _load_training(args: argparse.Namespace):
    _require(args, "data", "schema")
    ds = load_csv(args.data, load_schema(args.schema))
    if args.train is None or args.train >= ds.n:
        return ds, ds, None
    train, test = split(ds, args.train)
    return ds, train, test


# -----------------------
# simulate
# -----------------------
def cmd_simulate(args: argparse.Namespace) -> int:
    if args.irrelevant and args.method == "cv":
        raise UsageError("--irrelevant summarises posterior medians and needs a Bayesian --method")
    if args.irrelevant and (args.model != 1 or args.no_discrete):
        raise UsageError("--irrelevant runs on Model 1 with its discrete regressor")
    try:
        cfg = SimConfig(
            n=args.n,
            model=args.model,
            error_law=args.error,
            n_replications=args.reps,
            seed=args.seed,
            include_discrete=not args.no_discrete,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e
    settings = StudySettings(
        method=args.method,
        prior=_prior(args.prior),
        mcmc=_mcmc(args),
        semimetric=_semimetric(args.semimetric),
        cv_budget=args.cv_budget,
        density_grid=_grid(args.mise_grid),
    )
    out = _out_dir(args.out)
    manifest = build_manifest(_config(args))
    print(f"[INFO] Simulation model={cfg.model} n={cfg.n} error={cfg.error_law} method={settings.method} reps={cfg.n_replications}")

    started = time.time()
    if args.irrelevant:
        table = run_irrelevant_study(cfg, settings, jobs=args.jobs)
        write_csv(table, out / "irrelevant.csv", manifest)
        for row in table.itertuples():
            print(f"[OK] parameter={row.parameter} median={row.median:.4f} p10={row.p10:.4f} p90={row.p90:.4f}")
    else:
        table, agg = run_study(cfg, settings, jobs=args.jobs)
        if table.empty:
            print("[ERROR] Every replication failed")
            return 4
        write_csv(table, out / "replications.csv", manifest)
        write_csv(pd.DataFrame([agg]), out / "aggregate.csv", manifest)
        line = f"[OK] mase={agg['mase']:.4f} ({agg['mase_sd']:.4f})"
        if "mise" in agg:
            line += f" mise={agg['mise']:.4f} ({agg['mise_sd']:.4f})"
        print(line)

    write_json({"config": settings_record(cfg, settings), "seconds": time.time() - started}, out / "run.json", manifest)
    print(f"Simulation complete. out={out}")
    return 0


# -----------------------
# fit
# -----------------------
def _fit_method(args: argparse.Namespace) -> str:
    if args.localized and args.method not in (None, "bayes-local"):
        raise UsageError(f"--localized conflicts with --method {args.method}")
    if args.localized:
        return "bayes-local"
    return args.method or "bayes-global"


def cmd_fit(args: argparse.Namespace) -> int:
    method = _fit_method(args)
    _require(args, "out")
    lo, hi, count = _grid(args.grid)
    _, train, _ = _load_training(args)
    semimetric = _semimetric(args.semimetric)
    print(f"[INFO] Fitting method={method} n_train={train.n} p={train.p} q={train.q} semimetric={semimetric.label}")

    if method == "cv":
        model = fit_cv(train, semimetric, budget=args.cv_budget, seed=args.seed)
    else:
        model = fit_bayes(train, semimetric, _prior(args.prior), method == "bayes-local", _mcmc(args))

    manifest = build_manifest(_config(args))
    out = Path(args.out)
    source = {"data": str(Path(args.data).resolve()), "schema": str(Path(args.schema).resolve()), "n_train": train.n}
    if model.chain is not None:
        chain_path = out.with_suffix(".chain.csv")
        save_chain(model.chain, chain_path, manifest, model.layout)
        source["chain"] = str(chain_path)
        print(f"[OK] accept={model.chain.acceptance_rate:.3f} burn_in_accept={model.chain.burn_in_accept_rate:.3f} step={model.chain.step_size:.4f}")
        for name, row in model.summary.iterrows():
            print(f"[OK] {name} mean={row['mean']:.4f} ci=[{row['ci_low']:.4f}, {row['ci_high']:.4f}] sif={row['sif']:.2f}")
    save_model(model, out, manifest, source)
    u = np.linspace(lo, hi, count)
    density = error_density_grid(model.residuals, model.bandwidths.b, model.bandwidths.tau, u)
    density_to_csv(u, density, out.with_suffix(".density.csv"), manifest)
    if args.distances:
        model.ctx.distances.to_csv(out.with_suffix(".distances.csv"), manifest)
    print(f"Fit complete. model={out}")
    return 0


# -----------------------
# predict
# -----------------------
def cmd_predict(args: argparse.Namespace) -> int:
    _require(args, "model", "data", "out")
    if not 0.0 < args.interval < 1.0:
        raise UsageError(f"--interval must lie strictly between 0 and 1, got {args.interval}")
    model, raw = load_model(args.model)
    source = raw["source"]
    schema = load_schema(args.schema or source["schema"])
    ds = load_csv(args.data, schema, require_response=False)
    targets = ds
    if Path(args.data).resolve() == Path(source["data"]) and source.get("n_train", ds.n) < ds.n:
        targets = split(ds, source["n_train"])[1]
    if targets.p != model.ctx.dataset.p or targets.kinds != model.ctx.kinds:
        raise DataError(
            f"Data does not match the model: p={targets.p} kinds={[k.label for k in targets.kinds]}, "
            f"model p={model.ctx.dataset.p} kinds={[k.label for k in model.ctx.kinds]}"
        )

    pred = predict(model, targets, interval=args.interval, grid=_grid(args.grid))
    write_csv(pred, Path(args.out), build_manifest(_config(args)))
    print(f"[OK] forecasts={len(pred)} out={args.out}")
    if "y" in pred:
        scores = msfe_mafe(pred["y"], pred["point"])
        cov = coverage(pred["y"], pred["lower"], pred["upper"])
        print(f"[OK] msfe={scores['msfe']:.4f} mafe={scores['mafe']:.4f} coverage={cov:.3f}")
    return 0


# -----------------------
# diagnose
# -----------------------
def _chain_columns(df: pd.DataFrame) -> List[str]:
    ucols = [c for c in df.columns if c.startswith("u_")]
    natural = [c[2:] for c in ucols if c[2:] in df.columns]
    if natural:
        return natural
    if ucols:
        return ucols
    return [c for c in df.columns if c not in ("accepted", "log_post")]


def cmd_diagnose(args: argparse.Namespace) -> int:
    _require(args, "chain")
    try:
        df = read_csv(args.chain)
    except FileNotFoundError as e:
        raise DataError(f"Chain file not found: {args.chain}") from e
    cols = _chain_columns(df)
    if not cols:
        raise DataError(f"No parameter columns in {args.chain}")
    x = df[cols].to_numpy(dtype=float)

    try:
        z = geweke(x)
    except ValueError as e:
        raise DataError(str(e)) from e
    sif = inefficiency_factor(x, args.batch_size)
    acf = pd.DataFrame({"lag": np.arange(args.max_lag + 1)})
    for j, col in enumerate(cols):
        acf[col] = autocorrelation(x[:, j], args.max_lag)
    report = pd.DataFrame({"parameter": cols, "mean": x.mean(axis=0), "sd": x.std(axis=0, ddof=1), "sif": sif, "geweke_z": z})

    accept = float(df["accepted"].mean()) if "accepted" in df else float("nan")
    if any(c.startswith("u_") for c in df.columns):
        chain = load_chain(args.chain)
        accept = chain.acceptance_rate
        print(f"[INFO] u-space draws={chain.draws.shape[0]} final_step_size={chain.step_size:.4f}")
    for row in report.itertuples():
        tag = "[WARN]" if abs(row.geweke_z) > GEWEKE_FLAG else "[OK]"
        print(f"{tag} {row.parameter} mean={row.mean:.4f} sif={row.sif:.2f} geweke_z={row.geweke_z:.2f}")
    print(f"[OK] acceptance_rate={accept:.3f} draws={len(df)}")

    if args.out:
        out = _out_dir(args.out)
        manifest = build_manifest(_config(args))
        trace = df[cols].copy()
        trace.insert(0, "iteration", np.arange(len(df)))
        write_csv(trace, out / "trace.csv", manifest)
        write_csv(acf, out / "acf.csv", manifest)
        report["acceptance_rate"] = accept
        write_csv(report, out / "diagnostics.csv", manifest)
        print(f"Diagnose complete. out={out}")
    return 0


# -----------------------
# compare-priors
# -----------------------
def cmd_compare_priors(args: argparse.Namespace) -> int:
    _require(args, "out")
    ds, train, test = _load_training(args)
    semimetric = _semimetric(args.semimetric)
    priors = [_prior(p) for p in args.priors.split(",") if p.strip()]
    mcmc = _mcmc(args)
    pred_grid = _grid(args.grid)
    rows = []
    failed = 0
    for prior in priors:
        try:
            model = fit_bayes(train, semimetric, prior, args.localized, mcmc)
            log_ml = marginal_likelihood(model.ctx, prior, args.localized, model.chain, args.cj_draws, seed=args.seed)
            pred = predict(model, test, grid=pred_grid) if test is not None else None
        except FunBayesError as e:
            failed += 1
            print(f"[ERROR] prior={prior.label}: {e}")
            continue
        row: Dict[str, Any] = {"prior": prior.label, "log_ml": log_ml, "acceptance_rate": model.chain.acceptance_rate}
        if pred is not None:
            row.update(msfe_mafe(test.y, pred["point"]))
            row["coverage"] = coverage(test.y, pred["lower"], pred["upper"])
        row.update(model.bandwidths.as_dict())
        rows.append(row)
        print(f"[OK] prior={prior.label} log_ml={log_ml:.2f} msfe={row.get('msfe', float('nan')):.4f}")

    write_csv(pd.DataFrame(rows), Path(args.out), build_manifest(_config(args)))
    print(f"Prior comparison complete. ok={len(rows)} failed={failed}")
    return 0 if rows else 4


# -----------------------
# bootstrap / surrogate / prior-curves
# -----------------------
def cmd_bootstrap(args: argparse.Namespace) -> int:
    _require(args, "data", "schema", "out")
    if args.method == "cv":
        raise UsageError("--method for bootstrap must be Bayesian; CV is always the comparison")
    ds = load_csv(args.data, load_schema(args.schema))
    if not 3 <= args.train < ds.n:
        raise UsageError(f"--train must satisfy 3 <= train < {ds.n}")
    settings = StudySettings(
        method=args.method,
        prior=_prior(args.prior),
        mcmc=_mcmc(args),
        semimetric=_semimetric(args.semimetric),
        cv_budget=args.cv_budget,
        pred_grid=_grid(args.grid),
    )
    table = run_bootstrap_comparison(ds, args.reps, args.train, settings, seed=args.seed, jobs=args.jobs)
    manifest = build_manifest(_config(args))
    out = _out_dir(args.out)
    write_csv(table, out / "bootstrap.csv", manifest)
    if not table.empty:
        agg = table.groupby("method")[["rmsfe", "msfe", "mafe", "coverage"]].mean().reset_index()
        write_csv(agg, out / "bootstrap_summary.csv", manifest)
        for row in agg.itertuples():
            print(f"[OK] method={row.method} mean_rmsfe={row.rmsfe:.4f}")
    return 0


def cmd_surrogate(args: argparse.Namespace) -> int:
    _require(args, "out")
    df, schema = tecator_surrogate(args.seed)
    out = Path(args.out)
    write_csv(df, out, build_manifest(_config(args)))
    schema_path = out.with_suffix(".schema.json")
    save_schema(schema, schema_path)
    print(f"[OK] rows={len(df)} data={out} schema={schema_path}")
    return 0


def cmd_prior_curves(args: argparse.Namespace) -> int:
    _require(args, "out")
    lo, hi, count = _grid(args.grid)
    if lo <= 0:
        raise UsageError("--grid for prior curves must be on positive squared bandwidths")
    priors = [_prior(p) for p in args.priors.split(",") if p.strip()]
    table = prior_density_curves(priors, np.linspace(lo, hi, count))
    write_csv(table, Path(args.out), build_manifest(_config(args)))
    print(f"[OK] priors={len(priors)} points={count} out={args.out}")
    return 0


# -----------------------
# Parser
# -----------------------
def _add_mcmc_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prior", default=PRIOR)
    p.add_argument("--burnin", type=int, default=BURN_IN)
    p.add_argument("--iters", type=int, default=N_RECORD)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=SEED)
    p.add_argument("--semimetric", default=SEMIMETRIC)
    p.add_argument("--cv-budget", type=int, default=CV_BUDGET)


def _add_data_flags(p: argparse.ArgumentParser, train_default: Optional[int] = None) -> None:
    p.add_argument("--data", default=env_default("data"))
    p.add_argument("--schema", default=env_default("schema"))
    train = env_typed("train", None, int)
    p.add_argument("--train", type=int, default=train if train is not None else train_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funbayes", description="Bayesian bandwidths for functional regression with mixed regressors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="replicated simulation study")
    p.add_argument("--model", type=int, choices=(1, 2), default=env_typed("model", "1", int))
    p.add_argument("--n", type=int, default=env_typed("n", "50", int))
    p.add_argument("--error", choices=("trimodal", "claw"), default=env_default("error", "trimodal"))
    p.add_argument("--reps", type=int, default=REPLICATIONS)
    p.add_argument("--method", choices=METHODS, default=env_default("method", "bayes-local"))
    p.add_argument("--mise-grid", default=MISE_GRID)
    p.add_argument("--jobs", type=int, default=JOBS)
    p.add_argument("--no-discrete", action="store_true")
    p.add_argument("--irrelevant", action="store_true")
    p.add_argument("--out", default=env_default("out", "results"))
    _add_common(p)
    _add_mcmc_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model")
    _add_data_flags(p)
    p.add_argument("--method", choices=METHODS, default=env_default("method"))
    p.add_argument("--localized", action="store_true")
    p.add_argument("--grid", default=PRED_GRID)
    p.add_argument("--distances", action="store_true")
    p.add_argument("--out", default=env_default("out"))
    _add_common(p)
    _add_mcmc_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="forecasts with prediction intervals")
    p.add_argument("--model", default=env_default("model_file"))
    p.add_argument("--data", default=env_default("data"))
    p.add_argument("--schema", default=None)
    p.add_argument("--interval", type=float, default=env_typed("interval", "0.95", float))
    p.add_argument("--grid", default=PRED_GRID)
    p.add_argument("--out", default=env_default("out"))
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("diagnose", help="chain diagnostics")
    p.add_argument("--chain", default=env_default("chain"))
    p.add_argument("--max-lag", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=BATCH_SIZE)
    p.add_argument("--out", default=env_default("out"))
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("compare-priors", help="marginal likelihood per prior")
    _add_data_flags(p, train_default=TECATOR_N_TRAIN)
    p.add_argument("--priors", default=env_default("priors", ",".join(PRIOR_PRESETS)))
    p.add_argument("--localized", action="store_true")
    p.add_argument("--cj-draws", type=int, default=CJ_DRAWS)
    p.add_argument("--grid", default=PRED_GRID)
    p.add_argument("--out", default=env_default("out"))
    _add_common(p)
    p.add_argument("--burnin", type=int, default=BURN_IN)
    p.add_argument("--iters", type=int, default=N_RECORD)
    p.set_defaults(func=cmd_compare_priors)

    p = sub.add_parser("bootstrap", help="bootstrap RMSFE against functional CV")
    _add_data_flags(p, train_default=TECATOR_N_TRAIN)
    p.add_argument("--reps", type=int, default=REPLICATIONS)
    p.add_argument("--method", choices=METHODS, default=env_default("method", "bayes-local"))
    p.add_argument("--jobs", type=int, default=JOBS)
    p.add_argument("--grid", default=PRED_GRID)
    p.add_argument("--out", default=env_default("out", "results"))
    _add_common(p)
    _add_mcmc_flags(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("surrogate", help="synthetic spectroscopy table")
    p.add_argument("--seed", type=int, default=SEED)
    p.add_argument("--out", default=env_default("out"))
    p.set_defaults(func=cmd_surrogate)

    p = sub.add_parser("prior-curves", help="prior densities over squared bandwidth")
    p.add_argument("--priors", default=env_default("priors", ",".join(PRIOR_PRESETS)))
    p.add_argument("--grid", default=env_default("grid", "0.001:2:500"))
    p.add_argument("--out", default=env_default("out"))
    p.set_defaults(func=cmd_prior_curves)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        problems = env_problems()
        if problems:
            raise UsageError(f"Malformed environment: {'; '.join(problems)}")
        return args.func(args)
    except FunBayesError as e:
        print(f"[ERROR] {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
