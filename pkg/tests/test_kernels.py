import math

import numpy as np
import pytest

from dataset import Curve, DiscreteKind, MixedObservation
from kernels import (
    BandwidthParams,
    aitchison_aitken,
    continuous_differences,
    continuous_kernel,
    discrete_differences,
    discrete_kernel,
    functional_kernel,
    li_racine,
    log_weight_matrix,
    product_weight,
)

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)
PHI1 = math.exp(-0.5) / math.sqrt(2.0 * math.pi)


def test_functional_kernel_values():
    assert functional_kernel(0.0, 1.0) == pytest.approx(PHI0, abs=1e-12)
    assert functional_kernel(1.0, 1.0) == pytest.approx(PHI1, abs=1e-12)


@pytest.mark.parametrize("c", [0.5, 2.0, 7.0])
def test_functional_kernel_scaling(c):
    assert functional_kernel(c * 0.8, c * 1.3) == pytest.approx(functional_kernel(0.8, 1.3) / c, rel=1e-12)


def test_continuous_kernel():
    assert continuous_kernel([], []) == 1.0
    assert continuous_kernel([0.0, 0.0], [1.0, 2.0]) == pytest.approx(PHI0 * PHI0 / 2.0, abs=1e-12)
    assert continuous_kernel([1.0], [1.0]) == pytest.approx(PHI1, abs=1e-12)


def test_aitchison_aitken():
    assert aitchison_aitken(1, 1, 0.0) == 1.0
    assert aitchison_aitken(0, 1, 0.0) == 0.0
    assert aitchison_aitken(2, 2, 0.3) == pytest.approx(0.7)
    assert aitchison_aitken(0, 1, 0.5) == aitchison_aitken(1, 1, 0.5) == 0.5


def test_li_racine():
    assert li_racine(3, 3, 0.0) == 1.0
    assert li_racine(0, 2, 0.5) == pytest.approx(0.25)
    assert all(li_racine(a, b, 1.0) == 1.0 for a in range(4) for b in range(4))


def test_discrete_kernel_dispatch():
    assert discrete_kernel(DiscreteKind.unordered(3), 0, 2, 0.3) == pytest.approx(0.3)
    assert discrete_kernel(DiscreteKind(ordered=True, levels=3), 0, 2, 0.3) == pytest.approx(0.09)


def test_bandwidth_params_validation_and_dict():
    with pytest.raises(ValueError):
        BandwidthParams(delta=0.0)
    with pytest.raises(ValueError):
        BandwidthParams(delta=1.0, h=(-1.0,))
    with pytest.raises(ValueError):
        BandwidthParams(delta=1.0, b=1.0, tau=1.5)
    bw = BandwidthParams(delta=1.0, h=(0.5, 2.0), lam=(0.1,), b=0.3, tau=0.2)
    assert BandwidthParams.from_dict(bw.as_dict()) == bw
    with pytest.raises(ValueError):
        bw.check(2, (DiscreteKind(ordered=True, levels=2), DiscreteKind.unordered(2)))
    with pytest.raises(ValueError):
        BandwidthParams(delta=1.0, lam=(0.7,)).check(0, (DiscreteKind.unordered(2),))


def _obs(values, xc, xd):
    grid = np.linspace(0, 1, 4)
    return MixedObservation(Curve(grid, np.asarray(values, dtype=float)), tuple(xc), tuple(xd))


def test_product_weight_all_matched():
    kinds = (DiscreteKind.unordered(2), DiscreteKind(ordered=True, levels=3))
    bw = BandwidthParams(delta=1.0, h=(1.0, 1.0), lam=(0.3, 0.3))
    o = _obs(np.zeros(4), (0.5, 1.0), (1, 2))
    assert product_weight(0.0, o, o, kinds, bw) == pytest.approx(PHI0 ** 3 * 0.7, rel=1e-12)


def test_product_weight_reduces_to_functional_kernel():
    bw = BandwidthParams(delta=0.7)
    o = _obs(np.zeros(4), (), ())
    assert product_weight(0.4, o, o, (), bw) == pytest.approx(functional_kernel(0.4, 0.7), rel=1e-15)


def test_log_weight_matrix_matches_scalar_product():
    rng = np.random.default_rng(3)
    kinds = (DiscreteKind.unordered(3), DiscreteKind(ordered=True, levels=4))
    bw = BandwidthParams(delta=0.8, h=(0.6,), lam=(0.2, 0.4))
    xc = rng.normal(size=(5, 1))
    xd = np.column_stack([rng.integers(0, 3, 5), rng.integers(0, 4, 5)])
    dist = rng.uniform(0, 2, size=(5, 5))
    logw = log_weight_matrix(dist, continuous_differences(xc, xc), discrete_differences(xd, xd), kinds, bw)
    for i in range(5):
        target = _obs(np.zeros(4), xc[i], xd[i])
        for j in range(5):
            obs = _obs(np.zeros(4), xc[j], xd[j])
            expected = functional_kernel(dist[i, j], bw.delta)
            expected *= continuous_kernel(xc[j] - xc[i], bw.h)
            for s, kind in enumerate(kinds):
                expected *= discrete_kernel(kind, int(xd[j, s]), int(xd[i, s]), bw.lam[s])
            assert product_weight(dist[i, j], obs, target, kinds, bw) == pytest.approx(expected, rel=1e-12)
            assert math.exp(logw[i, j]) == pytest.approx(expected, rel=1e-12)


def test_log_weight_matrix_zero_lambda_gives_minus_inf():
    kinds = (DiscreteKind.unordered(2), DiscreteKind(ordered=True, levels=3))
    xd = np.array([[0, 0], [1, 0], [0, 2]])
    dist = np.zeros((3, 3))
    empty = np.zeros((0, 3, 3))
    for lam in [(0.0, 0.5), (0.2, 0.0)]:
        logw = log_weight_matrix(dist, empty, discrete_differences(xd, xd), kinds, BandwidthParams(delta=1.0, lam=lam))
        assert np.all(np.isfinite(np.diag(logw)))
    logw = log_weight_matrix(dist, empty, discrete_differences(xd, xd), kinds, BandwidthParams(delta=1.0, lam=(0.0, 0.5)))
    assert logw[0, 1] == -np.inf
    logw = log_weight_matrix(dist, empty, discrete_differences(xd, xd), kinds, BandwidthParams(delta=1.0, lam=(0.2, 0.0)))
    assert logw[0, 2] == -np.inf
    assert np.isfinite(logw[0, 1])
