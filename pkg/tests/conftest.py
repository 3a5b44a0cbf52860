import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from dataset import Dataset, DiscreteKind  # noqa: E402
from sampler import McmcConfig  # noqa: E402


@pytest.fixture
def grid20():
    return np.linspace(0.0, 1.0, 20)


@pytest.fixture
def identical3(grid20):
    """Three identical curves and regressors, y = (1, 2, 3)."""
    curve = np.sin(2 * np.pi * grid20)
    return Dataset(
        grid=grid20,
        curves=np.tile(curve, (3, 1)),
        xc=np.zeros((3, 1)),
        xd=np.zeros((3, 1), dtype=np.int64),
        y=np.array([1.0, 2.0, 3.0]),
        kinds=(DiscreteKind.unordered(2),),
    )


@pytest.fixture
def mixed10(grid20):
    """n=10, p=1, q=2 (unordered:3, ordered:4) with curvature that varies by row."""
    rng = np.random.default_rng(42)
    s = rng.uniform(0.5, 2.0, 10)
    curves = s[:, None] * grid20[None, :] ** 2 + rng.normal(0, 0.05, (10, 1)) * np.cos(3 * grid20)[None, :]
    xd = np.column_stack([rng.integers(0, 3, 10), rng.integers(0, 4, 10)])
    return Dataset(
        grid=grid20,
        curves=curves,
        xc=rng.normal(size=(10, 1)),
        xd=xd,
        y=s + rng.normal(0, 0.1, 10),
        kinds=(DiscreteKind.unordered(3), DiscreteKind(ordered=True, levels=4)),
    )


@pytest.fixture
def fast_mcmc():
    return McmcConfig(burn_in=200, n_record=1000, seed=11)
