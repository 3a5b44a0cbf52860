import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import logit

from dataset import Dataset, DiscreteKind
from errdensity import localized_loo_kde
from kernels import BandwidthParams
from posterior import (
    ParamLayout,
    Posterior,
    PriorSpec,
    log_kernel_likelihood,
    log_posterior,
    log_prior,
    parse_prior,
)
from regression import FitContext, residuals

KINDS = (DiscreteKind.unordered(3), DiscreteKind(ordered=True, levels=4))


def test_parse_prior():
    assert parse_prior("ig:1:0.05") == PriorSpec("ig", alpha=1.0, beta=0.05)
    assert parse_prior("cauchy") == PriorSpec("cauchy")
    assert parse_prior("cauchy:2").scale == 2.0
    assert parse_prior("ig:5:0.25").label == "ig:5:0.25"
    with pytest.raises(ValueError):
        parse_prior("gamma:1:1")


def test_inverse_gamma_density_value():
    assert PriorSpec().log_density(0.05) == pytest.approx(math.log(20.0) - 1.0, abs=1e-12)


def test_inverse_gamma_mode():
    spec = PriorSpec()
    assert spec.log_density(0.025) > spec.log_density(0.05)
    assert spec.log_density(0.025) > spec.log_density(0.01)


def test_half_cauchy_density():
    spec = PriorSpec("cauchy")
    assert spec.log_density(0.0) == pytest.approx(math.log(2.0 / math.pi), abs=1e-12)
    assert spec.log_density(1.0) == pytest.approx(math.log(1.0 / math.pi), abs=1e-12)


def test_uniform_lambda_prior_term():
    spec = PriorSpec()
    kinds = (DiscreteKind.unordered(2),)
    a = BandwidthParams(delta=0.3, lam=(0.1,), b=0.2)
    b = BandwidthParams(delta=0.3, lam=(0.4,), b=0.2)
    assert log_prior(a, spec, kinds) == pytest.approx(log_prior(b, spec, kinds), abs=1e-14)
    expected = spec.log_density(0.09) + spec.log_density(0.04) + math.log(2.0)
    assert log_prior(a, spec, kinds) == pytest.approx(expected, abs=1e-12)


def test_layout_names_and_round_trip():
    layout = ParamLayout(1, KINDS, localized=True)
    assert layout.names == ["delta", "h1", "lambda1", "lambda2", "b", "tau"]
    assert layout.dim == 6
    bw = BandwidthParams(delta=0.4, h=(1.3,), lam=(0.2, 0.7), b=0.5, tau=0.25)
    back = layout.to_params(layout.from_params(bw))
    for key, value in bw.as_dict().items():
        assert back.as_dict()[key] == pytest.approx(value, rel=1e-12)


def test_natural_handles_rows_of_draws():
    layout = ParamLayout(1, KINDS, localized=False)
    u = np.random.default_rng(0).normal(size=(7, layout.dim))
    nat = layout.natural(u)
    assert nat.shape == (7, 5)
    np.testing.assert_allclose(nat[3], layout.natural(u[3]))
    assert np.all(nat[:, 2] <= 0.5) and np.all(nat[:, 3] <= 1.0)


def test_log_jacobian_matches_finite_differences():
    layout = ParamLayout(1, KINDS, localized=True)
    u = np.array([0.3, -0.8, 0.4, -1.1, 0.2, 0.7])

    def forward(v):
        x = layout.natural(v)
        # Jacobian is taken for (delta^2, h^2, lambda, b^2, tau)
        return np.array([x[0] ** 2, x[1] ** 2, x[2], x[3], x[4] ** 2, x[5]])

    eps = 1e-6
    jac = np.empty((6, 6))
    for k in range(6):
        step = np.zeros(6)
        step[k] = eps
        jac[:, k] = (forward(u + step) - forward(u - step)) / (2 * eps)
    assert layout.log_jacobian(u) == pytest.approx(math.log(abs(np.linalg.det(jac))), abs=1e-6)


def test_kernel_likelihood_composes_modules(identical3):
    ctx = FitContext.build(identical3)
    bw = BandwidthParams(delta=0.8, h=(1.1,), lam=(0.2,), b=0.6, tau=0.3)
    res = residuals(ctx, bw)
    for localized, tau in ((False, 0.0), (True, 0.3)):
        expected = sum(math.log(localized_loo_kde(res, i, 0.6, tau)) for i in range(3))
        assert log_kernel_likelihood(ctx, bw, localized) == pytest.approx(expected, rel=1e-12)


def test_kernel_likelihood_location_invariant(mixed10):
    bw = BandwidthParams(delta=0.8, h=(1.1,), lam=(0.2, 0.6), b=0.4)
    shifted = Dataset(mixed10.grid, mixed10.curves, mixed10.xc, mixed10.xd, mixed10.y + 17.0, mixed10.kinds)
    a = log_kernel_likelihood(FitContext.build(mixed10), bw)
    b = log_kernel_likelihood(FitContext.build(shifted), bw)
    assert a == pytest.approx(b, rel=1e-9)


def test_kernel_likelihood_falls_for_huge_b(mixed10):
    ctx = FitContext.build(mixed10)
    bw = BandwidthParams(delta=0.8, h=(1.1,), lam=(0.2, 0.6), b=1.0)
    assert log_kernel_likelihood(ctx, bw.with_residual(1e6)) < log_kernel_likelihood(ctx, bw.with_residual(1e5)) < log_kernel_likelihood(ctx, bw)


def test_kernel_likelihood_degenerate_is_minus_inf(identical3):
    ds = Dataset(identical3.grid, identical3.curves, identical3.xc, np.array([[0], [1], [1]]), identical3.y, identical3.kinds)
    bw = BandwidthParams(delta=1.0, h=(1.0,), lam=(0.0,), b=0.5)
    assert log_kernel_likelihood(FitContext.build(ds), bw) == float("-inf")


def test_log_posterior_decomposition(mixed10):
    ctx = FitContext.build(mixed10)
    post = Posterior(ctx, PriorSpec(), localized=True)
    u = np.array([0.1, 0.3, -0.5, 0.8, -1.0, 0.0])
    ll, lp, lj = post.parts(u)
    total = log_posterior(ctx, u, PriorSpec(), localized=True)
    assert total - lj - lp == pytest.approx(ll, rel=1e-12)
    assert ll == pytest.approx(log_kernel_likelihood(ctx, post.layout.to_params(u), True), rel=1e-12)


def test_lambda_only_moves_by_jacobian_when_irrelevant(grid20):
    # one discrete regressor constant across rows: likelihood ignores lambda
    rng = np.random.default_rng(4)
    ds = Dataset(grid20, rng.normal(size=(8, 20)).cumsum(axis=1), np.zeros((8, 0)), np.zeros((8, 1)), rng.normal(size=8), (DiscreteKind.unordered(2),))
    ctx = FitContext.build(ds)
    post = Posterior(ctx, PriorSpec(), localized=False)
    u1 = np.array([0.5, logit(0.2), -0.3])
    u2 = np.array([0.5, logit(0.9), -0.3])
    ll1, lp1, lj1 = post.parts(u1)
    ll2, lp2, lj2 = post.parts(u2)
    assert ll1 == pytest.approx(ll2, rel=1e-12)
    assert post(u1) - post(u2) == pytest.approx((lp1 + lj1) - (lp2 + lj2), abs=1e-9)
    assert lj1 - lj2 == pytest.approx(math.log(0.2 * 0.8) - math.log(0.9 * 0.1), abs=1e-12)


def test_non_finite_u_rejected(mixed10):
    post = Posterior(FitContext.build(mixed10), PriorSpec(), localized=False)
    with pytest.raises(ValueError):
        post(np.array([np.nan, 0.0, 0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        post(np.zeros(3))


def test_default_prior_mass_sits_below_one_half():
    spec = PriorSpec()
    below, _ = quad(lambda x: math.exp(spec.log_density(x)), 0.0, 0.5, points=[0.025])
    above, _ = quad(lambda x: math.exp(spec.log_density(x)), 0.5, np.inf)
    assert below > above
    assert below == pytest.approx(math.exp(-0.1), abs=1e-6)
    assert below + above == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("localized", [False, True])
def test_posterior_finite_on_random_u(mixed10, localized):
    post = Posterior(FitContext.build(mixed10), PriorSpec(), localized=localized)
    rng = np.random.default_rng(8)
    values = [post(u) for u in rng.normal(size=(100, post.layout.dim))]
    assert np.all(np.isfinite(values))
