import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import norm

from covariance import DENSE, CovarianceSpec, PrecisionMatrix, build_covariance, precision
from errors import ConfigError, NumericalError
from harness import random_correlation_spec
from oracle import (
    MARGINAL_LFDR,
    POSTERIOR_NULL,
    StatisticVector,
    bayes_lambda,
    brute_force_posterior,
    build_context,
    log_u,
    marginal_lfdr,
    oracle_statistics,
)


def direct_log_u(x, t, k, p):
    """Term-by-term evaluation of ln U_i from a dense precision matrix."""
    n = len(x)
    s = t @ x
    out = np.empty(n)
    for i in range(n):
        total = -(k * k / 2 * t[i, i] - k * s[i])
        for j in range(n):
            if j != i:
                total += np.log(p * np.exp(-k * k * t[j, i]) + 1 - p)
        out[i] = total
    return out


def scalar_lfdr(x, p, k):
    null = (1 - p) * norm.pdf(x)
    return null / (null + p * norm.pdf(x - k))


def test_identity_has_no_interaction_terms():
    ctx = build_context(precision(CovarianceSpec.identity(5)), 2.5, 0.1)
    assert np.all(ctx.column_logterm_sums == 0.0)


def test_single_coordinate_dense_has_no_interaction_terms():
    ctx = build_context(precision(CovarianceSpec.dense([[1.0]])), 2.5, 0.3)
    assert_allclose(ctx.column_logterm_sums, [0.0], atol=1e-15)


def test_equicorrelated_interaction_terms():
    ctx = build_context(precision(CovarianceSpec.equicorrelated(3, 0.5)), 2.5, 0.1)
    expected = 2 * np.log(0.1 * np.exp(-6.25 * -0.5) + 0.9)
    assert_allclose(ctx.column_logterm_sums, [expected] * 3, rtol=1e-12)


@pytest.mark.parametrize("spec", [
    CovarianceSpec.equicorrelated(6, 0.4),
    CovarianceSpec.equicorrelated(6, -0.15),
    CovarianceSpec.block_diagonal([(2, 0.3), (1, 0.0), (3, 0.7)]),
    random_correlation_spec(7, np.random.default_rng(2)),
], ids=lambda s: s.label)
def test_closed_form_matches_direct_sum(spec):
    k, p = 2.5, 0.2
    x = np.random.default_rng(1).normal(1.0, 1.5, spec.n)
    t = precision(spec)
    assert_allclose(log_u(x, build_context(t, k, p)), direct_log_u(x, t.to_dense(), k, p), rtol=1e-10, atol=1e-10)


def test_dense_identity_matches_structured_identity():
    x = np.random.default_rng(4).standard_normal(12)
    structured = oracle_statistics(x, build_context(precision(CovarianceSpec.identity(12)), 2.5, 0.1))
    dense = oracle_statistics(x, build_context(precision(CovarianceSpec.dense(np.eye(12))), 2.5, 0.1))
    assert_allclose(dense.values, structured.values, rtol=1e-14)


def test_log_u_identity_at_midpoint_is_zero():
    ctx = build_context(precision(CovarianceSpec.identity(1)), 2.5, 0.5)
    assert_allclose(log_u(np.array([1.25]), ctx), [0.0], atol=1e-15)


def test_log_u_identity_reduces_to_likelihood_ratio():
    x = np.linspace(-3, 5, 9)
    ctx = build_context(precision(CovarianceSpec.identity(9)), 2.5, 0.1)
    assert_allclose(log_u(x, ctx), -3.125 + 2.5 * x, rtol=1e-14, atol=1e-14)


def test_single_coordinate_half():
    ctx = build_context(precision(CovarianceSpec.identity(1)), 2.5, 0.5)
    T = oracle_statistics(np.array([1.25]), ctx)
    assert T.scale == POSTERIOR_NULL
    assert T.values[0] == pytest.approx(0.5, abs=1e-15)


def test_statistic_limits():
    ctx = build_context(precision(CovarianceSpec.identity(2)), 2.5, 0.1)
    T = oracle_statistics(np.array([50.0, -50.0]), ctx).values
    assert T[0] < 1e-10
    assert T[1] == pytest.approx(1.0, abs=1e-15)


def test_identity_equals_scalar_lfdr():
    x = np.array([0.0, 1.0, 2.5, 4.0])
    ctx = build_context(precision(CovarianceSpec.identity(4)), 2.5, 0.1)
    assert_allclose(oracle_statistics(x, ctx).values, scalar_lfdr(x, 0.1, 2.5), rtol=0, atol=1e-12)


def test_independence_reduction_large_n():
    x = np.random.default_rng(8).normal(0.5, 2.0, 100)
    for p in (0.01, 0.1, 0.5):
        ctx = build_context(precision(CovarianceSpec.identity(100)), 2.5, p)
        T = oracle_statistics(x, ctx).values
        assert np.max(np.abs(T - scalar_lfdr(x, p, 2.5))) <= 1e-12
        assert np.max(np.abs(T - marginal_lfdr(x, p, 2.5).values)) <= 1e-12


def test_statistic_decreases_with_evidence():
    ctx = build_context(precision(CovarianceSpec.identity(50)), 2.5, 0.1)
    T = oracle_statistics(np.linspace(-4, 8, 50), ctx).values
    assert np.all(np.diff(T) < 0)


def test_statistic_vector_checks():
    with pytest.raises(NumericalError):
        StatisticVector(np.array([0.2, np.nan]), POSTERIOR_NULL)
    with pytest.raises(NumericalError):
        StatisticVector(np.array([1.2]), POSTERIOR_NULL)
    with pytest.raises(ValueError):
        StatisticVector(np.array([0.2]), "z_score")
    assert len(StatisticVector(np.array([0.0, 1.0]), MARGINAL_LFDR)) == 2


def test_stress_grid_stays_finite():
    rng = np.random.default_rng(13)
    raw = rng.uniform(-1e3, 1e3, (30, 30))
    t = PrecisionMatrix(30, DENSE, t=0.5 * (raw + raw.T))
    for k in (-10.0, -0.5, 0.5, 10.0):
        for p in (1e-6, 0.5, 1 - 1e-6):
            ctx = build_context(t, k, p)
            for x in (np.full(30, 50.0), np.full(30, -50.0), rng.uniform(-50, 50, 30)):
                values = oracle_statistics(x, ctx).values
                assert np.all(np.isfinite(values))
                assert np.all((values >= 0) & (values <= 1))


def test_context_rejects_bad_prior():
    t = precision(CovarianceSpec.identity(3))
    with pytest.raises(ConfigError):
        build_context(t, 2.5, 0.0)
    with pytest.raises(ConfigError):
        build_context(t, 0.0, 0.1)


def test_log_u_shape_check():
    ctx = build_context(precision(CovarianceSpec.identity(3)), 2.5, 0.1)
    with pytest.raises(ValueError):
        log_u(np.zeros(4), ctx)


def test_bayes_lambda():
    assert_allclose(bayes_lambda(np.array([0.5, 0.8, 1e-12])), [1.0, 4.0, 1e-12], rtol=1e-9)
    with pytest.raises(ValueError):
        bayes_lambda(np.array([0.5, 1.0]))
    with pytest.raises(ValueError):
        bayes_lambda(np.array([0.0]))


def test_marginal_lfdr_midpoint():
    assert marginal_lfdr(np.array([1.25]), 0.5, 2.5).values[0] == pytest.approx(0.5, abs=1e-15)


def test_brute_force_single_coordinate():
    x, p, k = np.array([0.7]), 0.3, 2.5
    assert_allclose(brute_force_posterior(x, np.eye(1), k, p).values, scalar_lfdr(x, p, k), rtol=1e-12)


def test_brute_force_vanishing_prior():
    x = np.array([0.3, 2.0, 3.0])
    values = brute_force_posterior(x, build_covariance(CovarianceSpec.equicorrelated(3, 0.4)), 2.5, 1e-9).values
    assert_allclose(values, np.ones(3), atol=1e-4)


def test_brute_force_limit():
    with pytest.raises(ConfigError):
        brute_force_posterior(np.zeros(21), np.eye(21), 2.5, 0.1)


@pytest.mark.parametrize("seed", range(200))
def test_closed_form_exact_under_independence(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 11))
    p = float(rng.choice([0.05, 0.3, 0.7]))
    k = float(rng.choice([-1.5, 2.5]))
    theta = (rng.random(n) < p).astype(int)
    x = k * theta + rng.standard_normal(n)

    closed = oracle_statistics(x, build_context(precision(CovarianceSpec.identity(n)), k, p)).values
    exact = brute_force_posterior(x, np.eye(n), k, p).values
    assert np.max(np.abs(closed - exact) / exact) <= 1e-10


def test_closed_form_exact_for_diagonal_blocks():
    spec = CovarianceSpec.block_diagonal([(1, 0.0), (1, 0.0), (1, 0.0)])
    x = np.array([0.4, 2.2, -1.0])
    closed = oracle_statistics(x, build_context(precision(spec), 2.5, 0.2)).values
    assert_allclose(closed, brute_force_posterior(x, np.eye(3), 2.5, 0.2).values, rtol=1e-10)


def test_closed_form_is_approximate_under_correlation():
    # the product term averages over the other states with prior weights,
    # while the exact posterior reweights them by x
    spec = CovarianceSpec.equicorrelated(2, 0.5)
    x = np.array([0.0, 4.0])
    closed = oracle_statistics(x, build_context(precision(spec), 2.5, 0.3)).values
    exact = brute_force_posterior(x, build_covariance(spec), 2.5, 0.3).values
    assert np.max(np.abs(closed - exact) / exact) > 0.5
