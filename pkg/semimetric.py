"""
semimetric.py

Distances among curves sharing one grid.

- Deriv(m): L2 distance between m-th derivatives of cubic B-spline least-squares
  fits. The Gram matrix of basis derivatives is integrated by Gauss-Legendre
  quadrature on every knot span.
- Fpca(K): Euclidean distance between the first K functional principal
  component scores (trapezoid-weighted inner product).

Both fits map curve values linearly into a space where the semi-metric is
plain Euclidean distance, so pairwise matrices come from scipy's pdist/cdist.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline
from scipy.spatial.distance import cdist, pdist, squareform

from config import GAUSS_NODES_PER_SPAN, N_BASIS
from dataset import Curve, Dataset
from utils import DataError, write_csv

SPLINE_DEGREE = 3


@dataclass(frozen=True)
class SemiMetricSpec:
    kind: str = "deriv"
    order: int = 2
    n_basis: Optional[int] = None
    n_components: int = 3

    def __post_init__(self):
        if self.kind not in ("deriv", "fpca"):
            raise ValueError(f"Unknown semi-metric {self.kind!r}")
        if self.kind == "deriv":
            if self.order not in (0, 1, 2):
                raise ValueError(f"Derivative order must be 0, 1 or 2, got {self.order}")
            if self.n_basis is not None and self.n_basis < self.order + 4:
                raise ValueError(f"n_basis must be >= order + 4, got {self.n_basis}")
        elif self.n_components < 1:
            raise ValueError("n_components must be positive")

    def basis_size(self, grid_length: int) -> int:
        if self.n_basis is not None:
            return self.n_basis
        if N_BASIS:
            return N_BASIS
        return min(20, grid_length // 2)

    @property
    def label(self) -> str:
        if self.kind == "fpca":
            return f"fpca:{self.n_components}"
        return f"deriv:{self.order}" + (f":{self.n_basis}" if self.n_basis else "")


def parse_semimetric(text: str) -> SemiMetricSpec:
    """
    deriv:ORDER[:N_BASIS] | fpca:N_COMPONENTS
    """
    parts = text.strip().lower().split(":")
    if parts[0] == "deriv":
        order = int(parts[1]) if len(parts) > 1 else 2
        n_basis = int(parts[2]) if len(parts) > 2 else None
        return SemiMetricSpec("deriv", order=order, n_basis=n_basis)
    if parts[0] == "fpca" and len(parts) == 2:
        return SemiMetricSpec("fpca", n_components=int(parts[1]))
    raise ValueError(f"Semi-metric must be deriv:ORDER[:N_BASIS] or fpca:K, got {text!r}")


@dataclass(frozen=True)
class BasisFit:
    grid: np.ndarray
    knots: np.ndarray
    order: int
    design: np.ndarray      # (G, K) basis values at grid points
    projector: np.ndarray   # (K, G) least-squares map values -> coefficients
    gram: np.ndarray        # (K, K) integral of products of order-th derivatives
    root: np.ndarray        # (K, r) with root @ root.T == gram

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) @ self.projector.T

    def embed(self, values: np.ndarray) -> np.ndarray:
        return self.coefficients(values) @ self.root


@dataclass(frozen=True)
class FpcaFit:
    grid: np.ndarray
    mean: np.ndarray
    eigenfunctions: np.ndarray   # (K, G), orthonormal under the weighted inner product
    eigenvalues: np.ndarray      # all eigenvalues, descending
    weights: np.ndarray          # trapezoid weights

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        k = self.eigenfunctions.shape[0]
        if total <= 0:
            return np.zeros(k)
        return self.eigenvalues[:k] / total

    def scores(self, values: np.ndarray) -> np.ndarray:
        centred = np.asarray(values, dtype=float) - self.mean
        return (centred * self.weights) @ self.eigenfunctions.T

    def embed(self, values: np.ndarray) -> np.ndarray:
        return self.scores(values)


SemiMetricFit = Union[BasisFit, FpcaFit]


def _knot_vector(lo: float, hi: float, n_basis: int) -> np.ndarray:
    interior = np.linspace(lo, hi, n_basis - SPLINE_DEGREE + 1)[1:-1]
    return np.concatenate([[lo] * (SPLINE_DEGREE + 1), interior, [hi] * (SPLINE_DEGREE + 1)])


def _psd_root(gram: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(gram)
    # polynomials below the derivative order span the null space
    vals = np.where(vals > vals.max() * 1e-12, vals, 0.0)
    keep = vals > 0
    return vecs[:, keep] * np.sqrt(vals[keep])


def fit_spline_basis(grid: np.ndarray, n_basis: int, order: int = 2) -> BasisFit:
    grid = np.asarray(grid, dtype=float)
    if n_basis < SPLINE_DEGREE + 1:
        raise ValueError(f"Cubic B-splines need n_basis >= 4, got {n_basis}")
    if grid.size < n_basis:
        raise DataError(f"Grid of {grid.size} points cannot support {n_basis} basis functions")

    knots = _knot_vector(grid[0], grid[-1], n_basis)
    basis = BSpline(knots, np.eye(n_basis), SPLINE_DEGREE)
    design = basis(grid)
    if np.linalg.matrix_rank(design) < n_basis:
        raise DataError(f"Rank-deficient spline design: {n_basis} basis functions on {grid.size} grid points")
    projector = np.linalg.pinv(design)

    nodes, weights = leggauss(GAUSS_NODES_PER_SPAN)
    breaks = np.unique(knots)
    left, right = breaks[:-1], breaks[1:]
    half = (right - left) / 2.0
    x = (left[:, None] + half[:, None] * (nodes[None, :] + 1.0)).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    deriv = basis.derivative(order) if order > 0 else basis
    vals = deriv(x)
    gram = vals.T @ (w[:, None] * vals)
    gram = (gram + gram.T) / 2.0

    return BasisFit(
        grid=grid,
        knots=knots,
        order=order,
        design=design,
        projector=projector,
        gram=gram,
        root=_psd_root(gram),
    )


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    dx = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += dx / 2.0
    w[1:] += dx / 2.0
    return w


def fit_fpca(train: Dataset, n_components: int) -> FpcaFit:
    n, g = train.curves.shape
    if n < 2:
        raise DataError("FPCA needs at least 2 curves")
    if not 1 <= n_components <= min(n - 1, g):
        raise DataError(f"n_components must be in 1..{min(n - 1, g)}, got {n_components}")

    w = trapezoid_weights(train.grid)
    sw = np.sqrt(w)
    mean = train.curves.mean(axis=0)
    centred = train.curves - mean
    # symmetric form of the weighted covariance operator
    cov = (centred * sw).T @ (centred * sw) / n
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    eigenfunctions = (vecs[:, :n_components] / sw[:, None]).T
    return FpcaFit(grid=train.grid, mean=mean, eigenfunctions=eigenfunctions, eigenvalues=vals, weights=w)


def fit_semimetric(spec: SemiMetricSpec, train: Dataset) -> SemiMetricFit:
    if spec.kind == "fpca":
        return fit_fpca(train, spec.n_components)
    return fit_spline_basis(train.grid, spec.basis_size(train.grid.size), spec.order)


def _check_grid(fit: SemiMetricFit, grid: np.ndarray) -> None:
    if not np.array_equal(fit.grid, grid):
        raise DataError("Curve grid does not match the semi-metric fit grid")


def distance(spec: SemiMetricSpec, fit: SemiMetricFit, a: Curve, b: Curve) -> float:
    _check_grid(fit, a.grid)
    _check_grid(fit, b.grid)
    ea, eb = fit.embed(np.vstack([a.values, b.values]))
    return float(np.sqrt(np.sum((ea - eb) ** 2)))


@dataclass(frozen=True)
class DistanceMatrix:
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_csv(self, path: Path, manifest: Dict[str, Any]) -> None:
        write_csv(pd.DataFrame(self.entries, columns=[str(j) for j in range(self.n)]), path, manifest)


def pairwise(spec: SemiMetricSpec, fit: SemiMetricFit, ds: Dataset) -> DistanceMatrix:
    _check_grid(fit, ds.grid)
    emb = fit.embed(ds.curves)
    if emb.shape[1] == 0:
        return DistanceMatrix(np.zeros((ds.n, ds.n)))
    # pdist fills the upper triangle once; squareform mirrors it
    return DistanceMatrix(squareform(pdist(emb)))


def cross_distances(fit: SemiMetricFit, targets: Dataset, train: Dataset) -> np.ndarray:
    """
    (n_targets, n_train) distances using the frozen train fit.
    """
    _check_grid(fit, targets.grid)
    _check_grid(fit, train.grid)
    et, er = fit.embed(targets.curves), fit.embed(train.curves)
    if et.shape[1] == 0:
        return np.zeros((targets.n, train.n))
    return cdist(et, er)
