"""
posterior.py

Priors, kernel likelihood and log-posterior of the bandwidth vector.

The sampler works in an unconstrained space:
    u_delta = log delta^2, u_h = log h^2, u_b = log b^2,
    u_lambda = logit(lambda / bound), u_tau = logit(tau)  (localized only)
log_posterior includes the log-Jacobian of that map.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_expit, logit
from scipy.stats import halfcauchy, invgamma

from dataset import DiscreteKind
from errdensity import log_loo_kde_all
from kernels import BandwidthParams
from regression import FitContext, residuals
from utils import DegenerateWeights

LAMBDA_EPS = 1e-12


@dataclass(frozen=True)
class PriorSpec:
    family: str = "ig"
    alpha: float = 1.0
    beta: float = 0.05
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in ("ig", "cauchy"):
            raise ValueError(f"Unknown prior family {self.family!r}")
        if min(self.alpha, self.beta, self.scale) <= 0:
            raise ValueError("Prior hyperparameters must be positive")

    @property
    def label(self) -> str:
        if self.family == "ig":
            return f"ig:{self.alpha:g}:{self.beta:g}"
        return "cauchy" if self.scale == 1.0 else f"cauchy:{self.scale:g}"

    def log_density(self, x):
        """Log density of a squared bandwidth."""
        if self.family == "ig":
            return invgamma.logpdf(x, self.alpha, scale=self.beta)
        return halfcauchy.logpdf(x, scale=self.scale)


def parse_prior(text: str) -> PriorSpec:
    """
    ig:ALPHA:BETA | cauchy[:SCALE]
    """
    parts = text.strip().lower().split(":")
    if parts[0] == "ig" and len(parts) == 3:
        return PriorSpec("ig", alpha=float(parts[1]), beta=float(parts[2]))
    if parts[0] == "cauchy" and len(parts) <= 2:
        return PriorSpec("cauchy", scale=float(parts[1]) if len(parts) == 2 else 1.0)
    raise ValueError(f"Prior must be ig:ALPHA:BETA or cauchy[:SCALE], got {text!r}")


class ParamLayout:
    """Maps unconstrained vectors u <-> BandwidthParams for one model shape."""

    def __init__(self, p: int, kinds: Sequence[DiscreteKind], localized: bool):
        self.p = p
        self.kinds = tuple(kinds)
        self.q = len(self.kinds)
        self.localized = localized
        self.bounds = np.array([k.bound for k in self.kinds], dtype=float)

    @property
    def dim(self) -> int:
        return 1 + self.p + self.q + 1 + (1 if self.localized else 0)

    @property
    def names(self) -> List[str]:
        names = ["delta"] + [f"h{j + 1}" for j in range(self.p)] + [f"lambda{s + 1}" for s in range(self.q)] + ["b"]
        if self.localized:
            names.append("tau")
        return names

    def _slices(self) -> Tuple[slice, slice, int]:
        h = slice(1, 1 + self.p)
        lam = slice(1 + self.p, 1 + self.p + self.q)
        return h, lam, 1 + self.p + self.q

    def natural(self, u: np.ndarray) -> np.ndarray:
        """Natural-scale values (delta, h, lambda, b, tau) for one vector or rows of draws."""
        u = np.asarray(u, dtype=float)
        h, lam, ib = self._slices()
        out = np.empty_like(u)
        out[..., 0] = np.exp(u[..., 0] / 2.0)
        out[..., h] = np.exp(u[..., h] / 2.0)
        out[..., lam] = np.clip(self.bounds * expit(u[..., lam]), LAMBDA_EPS, self.bounds - LAMBDA_EPS)
        out[..., ib] = np.exp(u[..., ib] / 2.0)
        if self.localized:
            out[..., ib + 1] = expit(u[..., ib + 1])
        return out

    def to_params(self, u: np.ndarray) -> BandwidthParams:
        return self.from_natural(self.natural(u))

    def from_natural(self, x: np.ndarray) -> BandwidthParams:
        x = np.asarray(x, dtype=float)
        h, lam, ib = self._slices()
        return BandwidthParams(
            delta=float(x[0]),
            h=tuple(x[h]),
            lam=tuple(x[lam]),
            b=float(x[ib]),
            tau=float(x[ib + 1]) if self.localized else 0.0,
        )

    def from_params(self, bw: BandwidthParams) -> np.ndarray:
        u = [np.log(bw.delta ** 2)]
        u += [np.log(v ** 2) for v in bw.h]
        lam = np.clip(np.asarray(bw.lam, dtype=float) / self.bounds, LAMBDA_EPS, 1 - LAMBDA_EPS) if self.q else []
        u += list(logit(lam))
        u.append(np.log(bw.b ** 2))
        if self.localized:
            u.append(logit(np.clip(bw.tau, LAMBDA_EPS, 1 - LAMBDA_EPS)))
        return np.array(u, dtype=float)

    def default_init(self) -> np.ndarray:
        bw = BandwidthParams(delta=0.5, h=(0.5,) * self.p, lam=tuple(self.bounds / 2.0), b=0.5, tau=0.5)
        return self.from_params(bw)

    def log_jacobian(self, u: np.ndarray) -> float:
        """
        log |d(delta^2, h^2, lambda, b^2, tau) / du|
        """
        u = np.asarray(u, dtype=float)
        h, lam, ib = self._slices()
        out = u[0] + np.sum(u[h]) + u[ib]
        ul = u[lam]
        out += np.sum(np.log(self.bounds) + log_expit(ul) + log_expit(-ul))
        if self.localized:
            ut = u[ib + 1]
            out += log_expit(ut) + log_expit(-ut)
        return float(out)


def log_prior(params: BandwidthParams, spec: PriorSpec, kinds: Sequence[DiscreteKind], localized: bool = False) -> float:
    """
    Independent priors: spec on delta^2, h_j^2, b^2; uniform lambda_s on
    [0, bound_s]; uniform tau on [0, 1].
    """
    sq = [params.delta ** 2] + [v ** 2 for v in params.h] + [params.b ** 2]
    out = float(np.sum(spec.log_density(np.array(sq))))
    out -= float(np.sum(np.log([k.bound for k in kinds]))) if kinds else 0.0
    # tau ~ U[0, 1] has log density 0
    return out


def log_kernel_likelihood(ctx: FitContext, params: BandwidthParams, localized: bool = False) -> float:
    if params.b is None:
        raise ValueError("Kernel likelihood needs a residual bandwidth b")
    try:
        res = residuals(ctx, params)
    except DegenerateWeights:
        return float("-inf")
    tau = params.tau if localized else 0.0
    return float(np.sum(log_loo_kde_all(res, params.b, tau)))


class Posterior:
    """Unnormalised log-posterior over u for one data set / prior / mode."""

    def __init__(self, ctx: FitContext, spec: PriorSpec, localized: bool):
        self.ctx = ctx
        self.spec = spec
        self.localized = localized
        self.layout = ParamLayout(ctx.dataset.p, ctx.kinds, localized)

    def parts(self, u: np.ndarray) -> Tuple[float, float, float]:
        """(log likelihood, log prior, log Jacobian) at u."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.layout.dim,) or not np.all(np.isfinite(u)):
            raise ValueError(f"u must be a finite vector of length {self.layout.dim}")
        params = self.layout.to_params(u)
        return (
            log_kernel_likelihood(self.ctx, params, self.localized),
            log_prior(params, self.spec, self.ctx.kinds, self.localized),
            self.layout.log_jacobian(u),
        )

    def __call__(self, u: np.ndarray) -> float:
        ll, lp, lj = self.parts(u)
        if not np.isfinite(ll):
            return float("-inf")
        return ll + lp + lj


def log_posterior(ctx: FitContext, u: np.ndarray, spec: PriorSpec, localized: bool = False) -> float:
    return Posterior(ctx, spec, localized)(u)
