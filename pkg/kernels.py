"""
kernels.py

Gaussian functional/continuous kernels, Aitchison-Aitken (unordered) and
Li-Racine (ordered) discrete kernels, and the generalised product weight.

Scalar functions follow the textbook formulas; log_weight_matrix evaluates the
same product for whole blocks of observations in the log domain.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from dataset import DiscreteKind, MixedObservation


@dataclass(frozen=True)
class BandwidthParams:
    delta: float
    h: Tuple[float, ...] = field(default_factory=tuple)
    lam: Tuple[float, ...] = field(default_factory=tuple)
    b: Optional[float] = None
    tau: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(float(v) for v in self.h))
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")
        if any(not (np.isfinite(v) and v > 0) for v in self.h):
            raise ValueError(f"h must be positive and finite, got {self.h}")
        if self.b is not None and not (np.isfinite(self.b) and self.b > 0):
            raise ValueError(f"b must be positive and finite, got {self.b}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")

    def check(self, p: int, kinds: Sequence[DiscreteKind]) -> None:
        if len(self.h) != p:
            raise ValueError(f"Expected {p} continuous bandwidths, got {len(self.h)}")
        if len(self.lam) != len(kinds):
            raise ValueError(f"Expected {len(kinds)} discrete bandwidths, got {len(self.lam)}")
        for s, (lam, kind) in enumerate(zip(self.lam, kinds)):
            if not 0.0 <= lam <= kind.bound:
                raise ValueError(f"lambda[{s}]={lam} outside [0, {kind.bound}]")

    def with_residual(self, b: float, tau: float = 0.0) -> "BandwidthParams":
        return replace(self, b=b, tau=tau)

    def as_dict(self) -> dict:
        out = {"delta": self.delta}
        out.update({f"h{j + 1}": v for j, v in enumerate(self.h)})
        out.update({f"lambda{s + 1}": v for s, v in enumerate(self.lam)})
        if self.b is not None:
            out["b"] = self.b
            out["tau"] = self.tau
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "BandwidthParams":
        h = [raw[k] for k in sorted((k for k in raw if k.startswith("h")), key=lambda k: int(k[1:]))]
        lam = [raw[k] for k in sorted((k for k in raw if k.startswith("lambda")), key=lambda k: int(k[6:]))]
        return cls(delta=raw["delta"], h=tuple(h), lam=tuple(lam), b=raw.get("b"), tau=raw.get("tau", 0.0))


def functional_kernel(d, delta: float):
    return norm.pdf(np.asarray(d) / delta) / delta


def continuous_kernel(diff: Sequence[float], h: Sequence[float]) -> float:
    diff = np.asarray(diff, dtype=float)
    h = np.asarray(h, dtype=float)
    if diff.size == 0:
        return 1.0
    return float(np.prod(norm.pdf(diff / h) / h))


def aitchison_aitken(xi: int, x: int, lam: float) -> float:
    return 1.0 - lam if xi == x else lam


def li_racine(xi: int, x: int, lam: float) -> float:
    if xi == x:
        return 1.0
    return lam ** abs(xi - x)


def discrete_kernel(kind: DiscreteKind, xi: int, x: int, lam: float) -> float:
    if kind.ordered:
        return li_racine(xi, x, lam)
    return aitchison_aitken(xi, x, lam)


def product_weight(
    d: float,
    obs: MixedObservation,
    target: MixedObservation,
    kinds: Sequence[DiscreteKind],
    bw: BandwidthParams,
) -> float:
    """
    W = K_delta(d) * prod_j K_hj(xc_ij - xc_j) * prod_s L_lambda_s(xd_is, xd_s)
    """
    w = float(functional_kernel(d, bw.delta))
    w *= continuous_kernel(np.subtract(obs.xc, target.xc), bw.h)
    for kind, xi, x, lam in zip(kinds, obs.xd, target.xd, bw.lam):
        w *= discrete_kernel(kind, xi, x, lam)
    return w


# -----------------------
# Vectorised log weights
# -----------------------
def continuous_differences(xc_targets: np.ndarray, xc_train: np.ndarray) -> np.ndarray:
    """(p, m, n) array of xc_train[j] - xc_target[i] per regressor."""
    return np.transpose(xc_train[None, :, :] - xc_targets[:, None, :], (2, 0, 1))


def discrete_differences(xd_targets: np.ndarray, xd_train: np.ndarray) -> np.ndarray:
    """(q, m, n) array of |xd_train - xd_target| per regressor."""
    return np.transpose(np.abs(xd_train[None, :, :] - xd_targets[:, None, :]), (2, 0, 1))


def log_weight_matrix(
    dist: np.ndarray,
    cdiff: np.ndarray,
    ddiff: np.ndarray,
    kinds: Sequence[DiscreteKind],
    bw: BandwidthParams,
) -> np.ndarray:
    """
    log W for every (target, train) pair. Zero weights come out as -inf.
    """
    logw = norm.logpdf(dist / bw.delta) - np.log(bw.delta)
    for j, h in enumerate(bw.h):
        logw = logw + (norm.logpdf(cdiff[j] / h) - np.log(h))
    with np.errstate(divide="ignore"):
        for s, (kind, lam) in enumerate(zip(kinds, bw.lam)):
            dd = ddiff[s]
            if kind.ordered:
                term = np.where(dd == 0, 0.0, dd * np.log(lam) if lam > 0 else -np.inf)
            else:
                term = np.where(dd == 0, np.log1p(-lam), np.log(lam))
            logw = logw + term
    return logw
