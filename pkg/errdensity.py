"""
errdensity.py

Kernel-form error density built from regression residuals.

Residual j carries bandwidth b_j = b * (1 + tau * |e_j|); tau = 0 is the
global-bandwidth estimator. Leave-one-out versions feed the kernel likelihood,
full-sample versions feed prediction intervals and MISE.
"""

from pathlib import Path
from typing import Any, Dict, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import norm

from utils import DataError, write_csv


def residual_bandwidths(residuals: np.ndarray, b: float, tau: float) -> np.ndarray:
    return b * (1.0 + tau * np.abs(residuals))


def localized_loo_kde(residuals: Sequence[float], i: int, b: float, tau: float) -> float:
    e = np.asarray(residuals, dtype=float)
    n = e.size
    if n < 3:
        raise ValueError(f"Leave-one-out KDE needs at least 3 residuals, got {n}")
    others = np.delete(np.arange(n), i)
    bj = residual_bandwidths(e[others], b, tau)
    return float(np.sum(norm.pdf((e[i] - e[others]) / bj) / bj) / (n - 1))


def loo_kde(residuals: Sequence[float], i: int, b: float) -> float:
    return localized_loo_kde(residuals, i, b, 0.0)


def log_loo_kde_all(residuals: np.ndarray, b: float, tau: float = 0.0) -> np.ndarray:
    """
    log f_{-i}(e_i) for every i, evaluated with logsumexp so tiny b gives
    a very negative value rather than log(0).
    """
    e = np.asarray(residuals, dtype=float)
    n = e.size
    bj = residual_bandwidths(e, b, tau)
    terms = norm.logpdf((e[:, None] - e[None, :]) / bj[None, :]) - np.log(bj)[None, :]
    np.fill_diagonal(terms, -np.inf)
    return logsumexp(terms, axis=1) - np.log(n - 1)


def error_density_grid(residuals: Sequence[float], b: float, tau: float, grid: Sequence[float]) -> np.ndarray:
    e = np.asarray(residuals, dtype=float)
    u = np.asarray(grid, dtype=float)
    if u.size == 0:
        raise ValueError("Density grid is empty")
    bj = residual_bandwidths(e, b, tau)
    return np.mean(norm.pdf((u[:, None] - e[None, :]) / bj[None, :]) / bj[None, :], axis=1)


def error_cdf(residuals: Sequence[float], b: float, tau: float, grid: Sequence[float]) -> np.ndarray:
    e = np.asarray(residuals, dtype=float)
    u = np.asarray(grid, dtype=float)
    bj = residual_bandwidths(e, b, tau)
    return np.mean(norm.cdf((u[:, None] - e[None, :]) / bj[None, :]), axis=1)


def error_cdf_inverse(
    residuals: Sequence[float],
    b: float,
    tau: float,
    probs: Sequence[float],
    lo: float = -10.0,
    hi: float = 10.0,
    n_grid: int = 1001,
) -> np.ndarray:
    """
    Grid point whose CDF value is closest to each requested probability
    (ties go to the lower point).
    """
    if not lo < hi:
        raise ValueError(f"Need lo < hi, got [{lo}, {hi}]")
    if n_grid < 101:
        raise ValueError(f"n_grid must be at least 101, got {n_grid}")
    probs = np.asarray(probs, dtype=float)
    if np.any((probs <= 0) | (probs >= 1)):
        raise ValueError("Probabilities must lie strictly inside (0, 1)")

    grid = np.linspace(lo, hi, n_grid)
    cdf = error_cdf(residuals, b, tau, grid)
    if probs.min() < cdf[0] or probs.max() > cdf[-1]:
        raise DataError(
            f"Quantile range [{lo}, {hi}] too narrow: CDF spans [{cdf[0]:.4g}, {cdf[-1]:.4g}], "
            f"requested {probs.min():.4g}..{probs.max():.4g}"
        )
    idx = np.argmin(np.abs(cdf[None, :] - probs[:, None]), axis=1)
    return grid[idx]


def density_to_csv(grid: Sequence[float], values: Sequence[float], path: Path, manifest: Dict[str, Any], column: str = "density") -> None:
    write_csv(pd.DataFrame({"x": np.asarray(grid), column: np.asarray(values)}), path, manifest)
