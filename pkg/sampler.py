"""
sampler.py

Adaptive block random-walk Metropolis over the unconstrained bandwidth vector,
plus chain diagnostics and the Chib-Jeliazkov marginal likelihood.

- One joint block: u' = u + sigma * xi, xi ~ N(0, I)
- During burn-in only, Robbins-Monro scale adaptation:
      log sigma <- log sigma + i^(-adapt_decay) * (alpha_i - target_accept)
- sigma is frozen for the recorded iterations, so the recorded chain is a
  plain Metropolis chain and its proposal density is known to the
  marginal likelihood estimator.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import norm

from config import (
    ADAPT_DECAY,
    BATCH_SIZE,
    BURN_IN,
    INIT_RETRIES,
    INITIAL_STEP,
    N_RECORD,
    SEED,
    TARGET_ACCEPT,
)
from posterior import ParamLayout, Posterior, PriorSpec
from regression import FitContext
from utils import NumericalError, read_csv, read_json, rng_for, write_csv, write_json

LogTarget = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = BURN_IN
    n_record: int = N_RECORD
    seed: int = SEED
    target_accept: float = TARGET_ACCEPT
    adapt_decay: float = ADAPT_DECAY
    initial_step: float = INITIAL_STEP
    init: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.burn_in < 100:
            raise ValueError(f"burn_in must be at least 100, got {self.burn_in}")
        if self.n_record < 1000:
            raise ValueError(f"n_record must be at least 1000, got {self.n_record}")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")


@dataclass
class Chain:
    draws: np.ndarray          # (n_record, dim) in u-space
    accepted: np.ndarray       # (n_record,) bool
    log_post: np.ndarray       # (n_record,)
    step_size: float
    names: List[str] = field(default_factory=list)
    burn_in_accept_rate: float = float("nan")

    @property
    def dim(self) -> int:
        return self.draws.shape[1]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))


def _find_start(log_target: LogTarget, init: np.ndarray, rng: np.random.Generator) -> tuple:
    u = np.asarray(init, dtype=float)
    lp = log_target(u)
    tries = 0
    while not np.isfinite(lp):
        if tries >= INIT_RETRIES:
            raise NumericalError(f"Sampler initialisation failed: log-posterior not finite after {INIT_RETRIES} jittered retries")
        u = np.asarray(init, dtype=float) + rng.standard_normal(u.size)
        lp = log_target(u)
        tries += 1
    return u, lp


def random_walk_metropolis(
    log_target: LogTarget,
    init: np.ndarray,
    cfg: McmcConfig,
    names: Optional[Sequence[str]] = None,
) -> Chain:
    rng = rng_for(cfg.seed)
    u, lp = _find_start(log_target, init, rng)
    d = u.size

    draws = np.empty((cfg.n_record, d))
    accepted = np.zeros(cfg.n_record, dtype=bool)
    log_post = np.empty(cfg.n_record)
    log_sigma = np.log(cfg.initial_step)
    burn_accepts = 0

    for it in range(cfg.burn_in + cfg.n_record):
        prop = u + np.exp(log_sigma) * rng.standard_normal(d)
        lp_prop = log_target(prop)
        alpha = float(np.exp(min(0.0, lp_prop - lp))) if np.isfinite(lp_prop) else 0.0
        accept = rng.random() < alpha
        if accept:
            u, lp = prop, lp_prop

        if it < cfg.burn_in:
            log_sigma += (it + 1) ** (-cfg.adapt_decay) * (alpha - cfg.target_accept)
            burn_accepts += int(accept)
        else:
            k = it - cfg.burn_in
            draws[k] = u
            accepted[k] = accept
            log_post[k] = lp

    return Chain(
        draws=draws,
        accepted=accepted,
        log_post=log_post,
        step_size=float(np.exp(log_sigma)),
        names=list(names) if names is not None else [f"u{j + 1}" for j in range(d)],
        burn_in_accept_rate=burn_accepts / cfg.burn_in,
    )


def run_chain(ctx: FitContext, spec: PriorSpec, localized: bool, cfg: McmcConfig) -> Chain:
    posterior = Posterior(ctx, spec, localized)
    init = cfg.init if cfg.init is not None else posterior.layout.default_init()
    return random_walk_metropolis(posterior, init, cfg, names=posterior.layout.names)


# -----------------------
# Diagnostics
# -----------------------
def batch_means(x: np.ndarray, batch_size: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    nb = x.shape[0] // batch_size
    return x[: nb * batch_size].reshape(nb, batch_size, *x.shape[1:]).mean(axis=1)


def inefficiency_factor(x: np.ndarray, batch_size: int = BATCH_SIZE) -> np.ndarray:
    """
    batch_size * Var(batch means) / Var(draws); 1 for i.i.d. draws.
    """
    bm = batch_means(x, batch_size)
    with np.errstate(divide="ignore", invalid="ignore"):
        return batch_size * np.var(bm, axis=0, ddof=1) / np.var(x, axis=0, ddof=1)


def summarize(
    chain: Chain,
    layout: Optional[ParamLayout] = None,
    batch_size: int = BATCH_SIZE,
) -> pd.DataFrame:
    """
    Ergodic mean, 95% credible interval, total SE, batch-mean SE and SIF per
    parameter, on the natural scale when a layout is given.
    """
    x = layout.natural(chain.draws) if layout is not None else chain.draws
    n = x.shape[0]
    bm = batch_means(x, batch_size)
    sif = inefficiency_factor(x, batch_size)
    sd = np.std(x, axis=0, ddof=1)
    return pd.DataFrame(
        {
            "mean": x.mean(axis=0),
            "median": np.median(x, axis=0),
            "ci_low": np.quantile(x, 0.025, axis=0),
            "ci_high": np.quantile(x, 0.975, axis=0),
            "total_se": sd / np.sqrt(n) * np.sqrt(sif),
            "batch_se": np.std(bm, axis=0, ddof=1) / np.sqrt(bm.shape[0]),
            "sif": sif,
        },
        index=pd.Index(chain.names, name="parameter"),
    )


def geweke(draws: np.ndarray, frac_a: float = 0.1, frac_b: float = 0.5, n_batches: int = 20) -> np.ndarray:
    """
    z = (mean of first frac_a - mean of last frac_b) / sqrt(SE_a^2 + SE_b^2),
    SEs from n_batches batch means per segment.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    na, nb = int(frac_a * n), int(frac_b * n)
    if min(na, nb) < 2 * n_batches:
        raise ValueError(f"Geweke segments need at least {2 * n_batches} draws, got {min(na, nb)}")

    def mean_and_se(seg: np.ndarray):
        bm = batch_means(seg, seg.shape[0] // n_batches)[:n_batches]
        return seg.mean(axis=0), np.std(bm, axis=0, ddof=1) / np.sqrt(n_batches)

    ma, sa = mean_and_se(x[:na])
    mb, sb = mean_and_se(x[n - nb:])
    with np.errstate(divide="ignore", invalid="ignore"):
        return (ma - mb) / np.sqrt(sa ** 2 + sb ** 2)


def autocorrelation(x: np.ndarray, max_lag: int = 50) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    denom = np.dot(xc, xc)
    if denom == 0:
        return np.r_[1.0, np.zeros(max_lag)]
    lags = range(min(max_lag, x.size - 1) + 1)
    return np.array([np.dot(xc[: x.size - k], xc[k:]) / denom for k in lags])


# -----------------------
# Marginal likelihood
# -----------------------
def chib_jeliazkov(log_target: LogTarget, chain: Chain, n_proposal_draws: int, seed: int = 0) -> float:
    """
    log m(y) = log p(y | u*) + log pi(u*) - log pi_hat(u* | y) with u* the
    posterior mean; log_target returns the first two terms together.
    """
    if n_proposal_draws < 1000:
        raise ValueError(f"n_proposal_draws must be at least 1000, got {n_proposal_draws}")
    sigma = chain.step_size
    u_star = chain.draws.mean(axis=0)
    lp_star = log_target(u_star)
    if not np.isfinite(lp_star):
        raise NumericalError("Log-posterior is not finite at the posterior mean")

    log_q = norm.logpdf(u_star[None, :] - chain.draws, scale=sigma).sum(axis=1)
    log_alpha_in = np.minimum(0.0, lp_star - chain.log_post)
    log_num = logsumexp(log_alpha_in + log_q) - np.log(chain.draws.shape[0])

    rng = rng_for(seed, 1)
    props = u_star[None, :] + sigma * rng.standard_normal((n_proposal_draws, chain.dim))
    lp_props = np.array([log_target(p) for p in props])
    with np.errstate(invalid="ignore"):
        log_alpha_out = np.where(np.isfinite(lp_props), np.minimum(0.0, lp_props - lp_star), -np.inf)
    log_den = logsumexp(log_alpha_out) - np.log(n_proposal_draws)
    if not np.isfinite(log_den):
        raise NumericalError(
            f"Marginal likelihood denominator underflow: 0 of {n_proposal_draws} proposals from u* accepted "
            f"(sigma={sigma:.4g}, log_post(u*)={lp_star:.4g})"
        )
    return float(lp_star - (log_num - log_den))


def marginal_likelihood(
    ctx: FitContext,
    spec: PriorSpec,
    localized: bool,
    chain: Chain,
    n_proposal_draws: int,
    seed: int = 0,
) -> float:
    return chib_jeliazkov(Posterior(ctx, spec, localized), chain, n_proposal_draws, seed)


# -----------------------
# Chain dump
# -----------------------
def chain_to_frame(chain: Chain, layout: Optional[ParamLayout] = None) -> pd.DataFrame:
    data: Dict[str, np.ndarray] = {}
    for j, name in enumerate(chain.names):
        data[f"u_{name}"] = chain.draws[:, j]
    if layout is not None:
        natural = layout.natural(chain.draws)
        for j, name in enumerate(chain.names):
            data[name] = natural[:, j]
    data["accepted"] = chain.accepted.astype(int)
    data["log_post"] = chain.log_post
    return pd.DataFrame(data)


def save_chain(chain: Chain, path: Path, manifest: dict, layout: Optional[ParamLayout] = None) -> None:
    """
    CSV of recorded draws plus a JSON summary block next to it.
    """
    path = Path(path)
    write_csv(chain_to_frame(chain, layout), path, manifest)
    summary = summarize(chain, layout)
    geweke_z = geweke(layout.natural(chain.draws) if layout is not None else chain.draws)
    write_json(
        {
            "summary": summary.reset_index().to_dict(orient="records"),
            "geweke_z": dict(zip(chain.names, geweke_z)),
            "acceptance_rate": chain.acceptance_rate,
            "burn_in_accept_rate": chain.burn_in_accept_rate,
            "final_step_size": chain.step_size,
        },
        path.with_suffix(".json"),
        manifest,
    )


def load_chain(path: Path) -> Chain:
    path = Path(path)
    df = read_csv(path)
    ucols = [c for c in df.columns if c.startswith("u_")]
    names = [c[2:] for c in ucols]
    step = float("nan")
    side = path.with_suffix(".json")
    if side.exists():
        step = float(read_json(side).get("final_step_size", float("nan")))
    return Chain(
        draws=df[ucols].to_numpy(dtype=float),
        accepted=df["accepted"].to_numpy().astype(bool) if "accepted" in df else np.ones(len(df), dtype=bool),
        log_post=df["log_post"].to_numpy(dtype=float) if "log_post" in df else np.full(len(df), np.nan),
        step_size=step,
        names=names,
    )
