"""
fitting.py

One model fit end to end: build the fit context, choose bandwidths (Bayesian
sampler or functional cross validation), keep the LOO residuals, predict with
intervals, and persist the result as JSON.

Model JSON keeps references to the training data (path, schema, n_train)
rather than copies; load_model rebuilds the semi-metric fit from them.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from config import CV_BUDGET, SEED
from dataset import Dataset, load_csv, load_schema, split
from errdensity import error_cdf_inverse
from kernels import BandwidthParams
from posterior import ParamLayout, PriorSpec, parse_prior
from regression import FitContext, cv_minimize, nw_fitted, nw_predict, residuals
from sampler import Chain, McmcConfig, run_chain, summarize
from semimetric import SemiMetricSpec, parse_semimetric
from utils import UsageError, read_json, write_json

METHODS = ("bayes-local", "bayes-global", "cv")


@dataclass
class FittedModel:
    method: str
    ctx: FitContext
    bandwidths: BandwidthParams
    residuals: np.ndarray
    prior: Optional[PriorSpec] = None
    chain: Optional[Chain] = None
    summary: Optional[pd.DataFrame] = None

    @property
    def localized(self) -> bool:
        return self.method == "bayes-local"

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout(self.ctx.dataset.p, self.ctx.kinds, self.localized)

    def fitted(self) -> np.ndarray:
        return nw_fitted(self.ctx, self.bandwidths)


def normal_reference_bandwidth(res: np.ndarray) -> float:
    sd = float(np.std(res, ddof=1))
    return 1.06 * (sd if sd > 0 else 1.0) * res.size ** (-0.2)


def fit_bayes(
    train: Dataset,
    semimetric: SemiMetricSpec,
    prior: PriorSpec,
    localized: bool,
    mcmc: McmcConfig,
    ctx: Optional[FitContext] = None,
) -> FittedModel:
    ctx = ctx or FitContext.build(train, semimetric)
    chain = run_chain(ctx, prior, localized, mcmc)
    layout = ParamLayout(train.p, train.kinds, localized)
    summary = summarize(chain, layout)
    bw = layout.from_natural(summary["mean"].to_numpy())
    return FittedModel(
        method="bayes-local" if localized else "bayes-global",
        ctx=ctx,
        bandwidths=bw,
        residuals=residuals(ctx, bw),
        prior=prior,
        chain=chain,
        summary=summary,
    )


def fit_cv(
    train: Dataset,
    semimetric: SemiMetricSpec,
    budget: int = CV_BUDGET,
    seed: int = SEED,
    ctx: Optional[FitContext] = None,
) -> FittedModel:
    """
    CV has no residual bandwidth; a normal-reference b is attached so CV
    fits can still produce intervals and density estimates.
    """
    ctx = ctx or FitContext.build(train, semimetric)
    bw = cv_minimize(ctx, budget=budget, seed=seed)
    res = residuals(ctx, bw)
    bw = bw.with_residual(normal_reference_bandwidth(res), 0.0)
    return FittedModel(method="cv", ctx=ctx, bandwidths=bw, residuals=res)


def fit_model(
    method: str,
    train: Dataset,
    semimetric: SemiMetricSpec,
    prior: Optional[PriorSpec] = None,
    mcmc: Optional[McmcConfig] = None,
    cv_budget: int = CV_BUDGET,
    seed: int = SEED,
) -> FittedModel:
    if method not in METHODS:
        raise UsageError(f"Unknown method {method!r}; expected one of {METHODS}")
    if method == "cv":
        return fit_cv(train, semimetric, budget=cv_budget, seed=seed)
    return fit_bayes(train, semimetric, prior or PriorSpec(), method == "bayes-local", mcmc or McmcConfig(seed=seed))


def predict(
    model: FittedModel,
    targets: Dataset,
    interval: float = 0.95,
    grid: Tuple[float, float, int] = (-10.0, 10.0, 1001),
) -> pd.DataFrame:
    """
    Point forecast plus a pointwise interval from the full-sample error CDF.
    """
    if not 0.0 < interval < 1.0:
        raise UsageError(f"Interval level must lie strictly between 0 and 1, got {interval}")
    point = nw_predict(model.ctx, model.bandwidths, targets)
    lo, hi, count = grid
    alpha = (1.0 - interval) / 2.0
    try:
        q_lo, q_hi = error_cdf_inverse(
            model.residuals,
            model.bandwidths.b,
            model.bandwidths.tau,
            [alpha, 1.0 - alpha],
            lo=lo,
            hi=hi,
            n_grid=count,
        )
    except ValueError as e:
        raise UsageError(f"Bad prediction grid: {e}") from e
    out = pd.DataFrame({"point": point, "lower": point + q_lo, "upper": point + q_hi})
    if np.all(np.isfinite(targets.y)):
        out["y"] = targets.y
    return out


# -----------------------
# Persistence
# -----------------------
def save_model(model: FittedModel, path: Path, manifest: Dict[str, Any], source: Dict[str, Any]) -> None:
    record: Dict[str, Any] = {
        "method": model.method,
        "semimetric": model.ctx.spec.label,
        "prior": model.prior.label if model.prior else None,
        "bandwidths": model.bandwidths.as_dict(),
        "residuals": model.residuals,
        "source": source,
    }
    if model.summary is not None:
        record["summary"] = model.summary.reset_index().to_dict(orient="records")
    if model.chain is not None:
        record["acceptance_rate"] = model.chain.acceptance_rate
        record["final_step_size"] = model.chain.step_size
    write_json(record, path, manifest)


def load_model(path: Path) -> Tuple[FittedModel, Dict[str, Any]]:
    raw = read_json(path)
    source = raw["source"]
    schema = load_schema(source["schema"])
    ds = load_csv(source["data"], schema)
    n_train = source.get("n_train")
    train = split(ds, n_train)[0] if n_train and n_train < ds.n else ds
    ctx = FitContext.build(train, parse_semimetric(raw["semimetric"]))
    model = FittedModel(
        method=raw["method"],
        ctx=ctx,
        bandwidths=BandwidthParams.from_dict(raw["bandwidths"]),
        residuals=np.asarray(raw["residuals"], dtype=float),
        prior=parse_prior(raw["prior"]) if raw.get("prior") else None,
    )
    return model, raw
