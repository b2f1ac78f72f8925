import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from hdtrafo import lasso
from hdtrafo.exceptions import LassoInputError
from hdtrafo.lasso import LassoConfig, LassoDesign, WeightedLasso, default_lambda

# Phi^{-1}(0.975), frozen from statistics.NormalDist().inv_cdf
Z975 = 1.959963984540054


def kkt_tol(X, y, tol=1e-9):
    # the solver certifies in gradient units scaled by the data
    ysd = max(1.0, np.std(y))
    xsd = max(1.0, np.sqrt((np.var(X, axis=0)).max()))
    return 2 * tol * ysd * xsd


def random_instance(rng, n, p, s=5):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: min(s, p)] = rng.uniform(0.5, 2.0, min(s, p)) * rng.choice([-1, 1], min(s, p))
    y = 0.7 + X @ beta + rng.standard_normal(n)
    return X, y


def test_default_lambda_examples():
    assert default_lambda(100, 1, LassoConfig(c_mult=1.1, gamma=0.05)) == pytest.approx(2 * 1.1 * 10 * Z975, rel=1e-12)
    assert default_lambda(100, 1, LassoConfig(c_mult=1.1, gamma=0.05)) == pytest.approx(43.119, abs=5e-4)
    assert default_lambda(4, 1, LassoConfig(c_mult=0.5, gamma=1.0)) == 0.0
    lams = [default_lambda(200, p) for p in (10, 50, 200, 1000)]
    assert all(a < b for a, b in zip(lams, lams[1:]))
    assert lams[0] > 0


def test_config_validation():
    with pytest.raises(ValueError):
        LassoConfig(tol=0)
    with pytest.raises(ValueError):
        LassoConfig(max_iter=0)
    with pytest.raises(ValueError):
        LassoConfig(loading_iters=0)
    with pytest.raises(ValueError):
        LassoConfig(lambda_override=-1.0)
    with pytest.raises(NotImplementedError):
        LassoConfig(penalize_intercept=True)


def test_zero_column_gives_zero_beta_and_mean_intercept():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(30)
    X = np.zeros((30, 1))
    f = lasso.fit(X, y)
    assert f.beta.tolist() == [0.0]
    assert f.intercept == pytest.approx(y.mean(), abs=1e-15)
    assert np.all(lasso.kkt_residuals(f, X, y) == 0)
    assert np.all(f.loadings > 0)


def test_lambda_zero_matches_normal_equations():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((50, 2))
    y = 1.5 + X @ np.array([2.0, -1.0]) + rng.standard_normal(50)
    f = lasso.fit(X, y, LassoConfig(lambda_override=0.0))
    A = np.column_stack([np.ones(50), X])
    coef = np.linalg.solve(A.T @ A, A.T @ y)
    np.testing.assert_allclose(f.beta, coef[1:], atol=1e-8)
    assert f.intercept == pytest.approx(coef[0], abs=1e-8)
    assert np.abs(lasso.kkt_residuals(f, X, y)).max() <= 1e-8


def orthonormal_design(rng, n, p):
    Z = rng.standard_normal((n, p))
    Z -= Z.mean(axis=0)
    Q, _ = np.linalg.qr(Z)
    return Q * np.sqrt(n)


def test_orthonormal_design_is_soft_thresholding():
    rng = np.random.default_rng(2)
    n, p = 80, 10
    X = orthonormal_design(rng, n, p)
    y = X @ np.linspace(-1, 1, p) + 0.5 * rng.standard_normal(n)
    lam = 60.0
    f = lasso.fit(X, y, LassoConfig(lambda_override=lam, tol=1e-12), loadings=np.ones(p))
    b_ols = X.T @ (y - y.mean()) / n
    t = lam / (2 * n)
    expected = np.sign(b_ols) * np.maximum(np.abs(b_ols) - t, 0.0)
    np.testing.assert_allclose(f.beta, expected, atol=1e-10)


def test_bad_inputs():
    with pytest.raises(LassoInputError):
        lasso.fit(np.ones((5, 2)), np.array([1.0, 2.0, np.nan, 0.0, 1.0]))
    with pytest.raises(LassoInputError):
        lasso.fit(np.ones((5, 2)), np.ones(4))
    with pytest.raises(LassoInputError):
        LassoDesign(np.array([[1.0, np.inf]]))
    with pytest.raises(LassoInputError):
        lasso.fit(np.ones((5, 2)), np.arange(5.0), loadings=np.array([1.0, 0.0]))


@pytest.mark.parametrize("p", [20, 200])
def test_kkt_on_random_instances(p):
    rng = np.random.default_rng(100 + p)
    for _ in range(10):
        X, y = random_instance(rng, 60, p)
        f = lasso.fit(X, y)
        assert f.converged
        assert lasso.kkt_violation(f, X, y).max() <= kkt_tol(X, y)
        assert len(f.active_set) == np.count_nonzero(f.beta)


def test_large_lambda_gives_exact_zero():
    rng = np.random.default_rng(3)
    X, y = random_instance(rng, 40, 8)
    psi = np.sqrt(((X - X.mean(0)) ** 2 * ((y - y.mean()) ** 2)[:, None]).mean(0))
    lam = np.max(np.abs(2 * (X - X.mean(0)).T @ (y - y.mean())) / psi) * 1.0001
    f = lasso.fit(X, y, LassoConfig(lambda_override=lam))
    assert np.all(f.beta == 0)


def test_objective_non_increasing_across_sweeps():
    rng = np.random.default_rng(4)
    X, y = random_instance(rng, 60, 30)
    f = lasso.fit(X, y, record_objective=True)
    for trace in f.objective_trace:
        trace = np.asarray(trace)
        assert np.all(np.diff(trace) <= 1e-12 * (1 + np.abs(trace[:-1])))


def test_warm_start_reaches_same_objective():
    rng = np.random.default_rng(5)
    X, y = random_instance(rng, 60, 40)
    cfg = LassoConfig(lambda_override=30.0)
    cold = lasso.fit(X, y, cfg, loadings=np.ones(40))
    warm = lasso.fit(X, y, cfg, warm_start=rng.standard_normal(40) * 3, loadings=np.ones(40))
    o_cold = lasso.objective(X, y, cold.beta, cold.intercept, 30.0, np.ones(40))
    o_warm = lasso.objective(X, y, warm.beta, warm.intercept, 30.0, np.ones(40))
    assert abs(o_cold - o_warm) <= 1e-9 * max(1.0, o_cold)


def test_post_lasso_refit_keeps_penalized_solution():
    rng = np.random.default_rng(6)
    X, y = random_instance(rng, 100, 20)
    plain = lasso.fit(X, y, LassoConfig(loading_iters=1))
    post = lasso.fit(X, y, LassoConfig(loading_iters=1, post_lasso=True))
    np.testing.assert_array_equal(post.penalized_solution()[0], plain.beta)
    A = np.column_stack([np.ones(100), X[:, post.active_set]])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    np.testing.assert_allclose(post.beta[post.active_set], coef[1:], atol=1e-9)
    assert post.intercept == pytest.approx(coef[0], abs=1e-9)
    assert lasso.kkt_violation(post, X, y).max() <= kkt_tol(X, y)


def test_design_reuse_matches_direct_fit():
    rng = np.random.default_rng(7)
    X, y = random_instance(rng, 50, 12)
    d = LassoDesign(X)
    a = lasso.fit(X, y)
    b = lasso.fit(None, y, design=d)
    np.testing.assert_array_equal(a.beta, b.beta)


def test_sklearn_wrapper():
    rng = np.random.default_rng(8)
    X, y = random_instance(rng, 80, 10)
    est = WeightedLasso()
    assert clone(est).get_params() == est.get_params()
    est.fit(X, y)
    assert est.predict(X).shape == (80,)
    shrunk = est.score(X, y)
    assert 0 < shrunk < WeightedLasso(post_lasso=True).fit(X, y).score(X, y)
    est.set_params(penalty=0.0).fit(X, y)
    A = np.column_stack([np.ones(80), X])
    np.testing.assert_allclose(est.coef_, np.linalg.lstsq(A, y, rcond=None)[0][1:], atol=1e-8)
    with pytest.raises(ValueError):
        WeightedLasso().fit(X, y[:-1])


@settings(max_examples=40, deadline=None)
@given(st.integers(10, 40), st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_kkt_property(n, p, seed):
    rng = np.random.default_rng(seed)
    X, y = random_instance(rng, n, p)
    f = lasso.fit(X, y)
    if f.converged:
        assert lasso.kkt_violation(f, X, y).max() <= kkt_tol(X, y)
