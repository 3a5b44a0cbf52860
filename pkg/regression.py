"""
regression.py

Functional Nadaraya-Watson estimator with the generalised product kernel,
its leave-one-out variant, residuals, and the functional cross validation
bandwidth selector used as the baseline.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit
from scipy.stats import qmc

from config import CV_MIN_BUDGET, CV_STARTS
from dataset import Dataset, DiscreteKind, MixedObservation
from kernels import (
    BandwidthParams,
    continuous_differences,
    discrete_differences,
    log_weight_matrix,
)
from semimetric import (
    DistanceMatrix,
    SemiMetricFit,
    SemiMetricSpec,
    cross_distances,
    fit_semimetric,
    pairwise,
)
from utils import DataError, DegenerateWeights, NumericalError

MIN_TRAIN = 3


def check_training(ds: Dataset) -> None:
    if ds.n < MIN_TRAIN:
        raise DataError(f"Training data needs at least {MIN_TRAIN} observations, got {ds.n}")
    if not np.all(np.isfinite(ds.y)):
        row = int(np.flatnonzero(~np.isfinite(ds.y))[0])
        raise DataError(f"Training response is missing at row {row}")


@dataclass(frozen=True)
class FitContext:
    dataset: Dataset
    distances: DistanceMatrix
    spec: SemiMetricSpec
    fit: SemiMetricFit
    cdiff: np.ndarray
    ddiff: np.ndarray

    def __post_init__(self):
        check_training(self.dataset)
        if self.distances.n != self.dataset.n:
            raise ValueError(f"Distance matrix is {self.distances.n}x{self.distances.n} for {self.dataset.n} observations")

    @property
    def kinds(self) -> Tuple[DiscreteKind, ...]:
        return self.dataset.kinds

    @property
    def n(self) -> int:
        return self.dataset.n

    @classmethod
    def build(cls, ds: Dataset, spec: Optional[SemiMetricSpec] = None) -> "FitContext":
        spec = spec or SemiMetricSpec()
        check_training(ds)
        fit = fit_semimetric(spec, ds)
        return cls(
            dataset=ds,
            distances=pairwise(spec, fit, ds),
            spec=spec,
            fit=fit,
            cdiff=continuous_differences(ds.xc, ds.xc),
            ddiff=discrete_differences(ds.xd, ds.xd),
        )


def _weighted_mean(logw: np.ndarray, y: np.ndarray, offset: int = 0) -> np.ndarray:
    top = logw.max(axis=1)
    bad = ~np.isfinite(top)
    if bad.any():
        raise DegenerateWeights(int(np.flatnonzero(bad)[0]) + offset)
    w = np.exp(logw - top[:, None])
    return (w @ y) / w.sum(axis=1)


def nw_estimate(ctx: FitContext, bw: BandwidthParams, target: MixedObservation, dists_to_train: Sequence[float]) -> float:
    ds = ctx.dataset
    dist = np.asarray(dists_to_train, dtype=float).reshape(1, ds.n)
    xc = np.asarray(target.xc, dtype=float).reshape(1, ds.p)
    xd = np.asarray(target.xd, dtype=np.int64).reshape(1, ds.q)
    logw = log_weight_matrix(dist, continuous_differences(xc, ds.xc), discrete_differences(xd, ds.xd), ctx.kinds, bw)
    return float(_weighted_mean(logw, ds.y)[0])


def nw_predict(ctx: FitContext, bw: BandwidthParams, targets: Dataset) -> np.ndarray:
    """
    Out-of-sample estimates; distances come from the frozen training fit.
    """
    ds = ctx.dataset
    dist = cross_distances(ctx.fit, targets, ds)
    logw = log_weight_matrix(
        dist,
        continuous_differences(targets.xc, ds.xc),
        discrete_differences(targets.xd, ds.xd),
        ctx.kinds,
        bw,
    )
    return _weighted_mean(logw, ds.y)


def _train_log_weights(ctx: FitContext, bw: BandwidthParams) -> np.ndarray:
    return log_weight_matrix(ctx.distances.entries, ctx.cdiff, ctx.ddiff, ctx.kinds, bw)


def nw_fitted(ctx: FitContext, bw: BandwidthParams) -> np.ndarray:
    """In-sample estimates at the training points (self included)."""
    return _weighted_mean(_train_log_weights(ctx, bw), ctx.dataset.y)


def nw_loo_fitted(ctx: FitContext, bw: BandwidthParams) -> np.ndarray:
    logw = _train_log_weights(ctx, bw)
    np.fill_diagonal(logw, -np.inf)
    return _weighted_mean(logw, ctx.dataset.y)


def residuals(ctx: FitContext, bw: BandwidthParams) -> np.ndarray:
    return ctx.dataset.y - nw_loo_fitted(ctx, bw)


def cv_objective(ctx: FitContext, bw: BandwidthParams) -> float:
    try:
        res = residuals(ctx, bw)
    except DegenerateWeights:
        return float("inf")
    return float(np.sum(res ** 2))


# -----------------------
# Functional cross validation
# -----------------------
@dataclass(frozen=True)
class CvBounds:
    delta: Tuple[float, float]
    h: Tuple[Tuple[float, float], ...]

    @classmethod
    def from_context(cls, ctx: FitContext) -> "CvBounds":
        d = ctx.distances.entries[np.triu_indices(ctx.n, k=1)]
        d = d[d > 0]
        dmax = float(d.max()) if d.size else 1.0
        dlo = float(np.quantile(d, 0.05)) if d.size else 1e-3
        h = []
        for j in range(ctx.dataset.p):
            sd = float(np.std(ctx.dataset.xc[:, j], ddof=1)) or 1.0
            h.append((0.05 * sd, 5.0 * sd))
        return cls(delta=(dlo, dmax), h=tuple(h))


class _CvParams:
    """(log delta, log h, logit(lambda / bound)) <-> BandwidthParams"""

    def __init__(self, p: int, kinds: Sequence[DiscreteKind]):
        self.p = p
        self.bounds = np.array([k.bound for k in kinds], dtype=float)

    @property
    def dim(self) -> int:
        return 1 + self.p + self.bounds.size

    def decode(self, x: np.ndarray) -> BandwidthParams:
        lam = np.clip(self.bounds * expit(x[1 + self.p:]), 0.0, self.bounds)
        return BandwidthParams(delta=float(np.exp(x[0])), h=tuple(np.exp(x[1:1 + self.p])), lam=tuple(lam))

    def encode_box(self, bounds: CvBounds) -> Tuple[np.ndarray, np.ndarray]:
        lo = [np.log(bounds.delta[0])] + [np.log(b[0]) for b in bounds.h] + [logit(0.02)] * self.bounds.size
        hi = [np.log(bounds.delta[1])] + [np.log(b[1]) for b in bounds.h] + [logit(0.98)] * self.bounds.size
        return np.array(lo), np.array(hi)


def cv_minimize(
    ctx: FitContext,
    bounds: Optional[CvBounds] = None,
    budget: int = 400,
    seed: int = 0,
) -> BandwidthParams:
    """
    Nelder-Mead on (log delta, log h, scaled-logit lambda) from CV_STARTS
    quasi-random starts inside the bounds. Returns the best point found.
    """
    if budget < CV_MIN_BUDGET:
        raise ValueError(f"CV budget must be at least {CV_MIN_BUDGET} evaluations, got {budget}")
    bounds = bounds or CvBounds.from_context(ctx)
    params = _CvParams(ctx.dataset.p, ctx.kinds)
    lo, hi = params.encode_box(bounds)

    sampler = qmc.Sobol(d=params.dim, scramble=True, seed=seed)
    starts = qmc.scale(sampler.random(8), lo, hi)[:CV_STARTS]
    per_start = max(budget // CV_STARTS, 10)

    def objective(x: np.ndarray) -> float:
        if not np.all(np.isfinite(x)):
            return float("inf")
        return cv_objective(ctx, params.decode(x))

    best_x, best_val = None, float("inf")
    for x0 in starts:
        if not np.isfinite(objective(x0)):
            continue
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"maxfev": per_start, "xatol": 1e-4, "fatol": 1e-8},
        )
        if res.fun < best_val:
            best_x, best_val = res.x, float(res.fun)

    if best_x is None:
        raise NumericalError("Functional cross validation failed: every start has degenerate weights")
    return params.decode(best_x)
