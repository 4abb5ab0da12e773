import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bigbatch import theory as T
from bigbatch.optimizers import bb_stepsize
from bigbatch.problems import Problem, full_loss, generate_quadratic, make_regression


def test_beta_values():
    assert T.beta(0.5) == 2.0
    assert T.beta(0.9) == pytest.approx(82.0, rel=1e-12)
    assert T.beta(1e-9) == pytest.approx(1.0, abs=1e-8)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            T.beta(bad)


def test_beta_at_least_one_on_grid():
    grid = np.linspace(1e-6, 1 - 1e-6, 2001)
    vals = np.array([T.beta(t) for t in grid])
    assert np.all(vals >= 1 - 1e-12)
    assert np.argmin(vals) == 0


def test_linear_gamma_values():
    p = T.RateParams(mu=1.0, L=1.0, theta=0.5)
    assert T.linear_rate_gamma(p, 0.0) == 1.0
    assert T.linear_rate_gamma(p, 0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        T.linear_rate_gamma(p, 1.0)


@given(mu=st.floats(0.01, 1.0), ratio=st.floats(1.0, 50.0), theta=st.floats(0.01, 0.95))
@settings(max_examples=100, deadline=None)
def test_linear_gamma_range_and_argmin(mu, ratio, theta):
    p = T.RateParams(mu=mu, L=mu * ratio, theta=theta)
    top = 2 / (p.L * p.beta)
    grid = np.linspace(0, top, 2001)[:-1]
    gam = np.array([T.linear_rate_gamma(p, a) for a in grid])
    floor = 1 - p.mu / (p.beta * p.L)
    assert np.all(gam >= floor - 1e-12) and np.all(gam <= 1 + 1e-12)
    best = grid[np.argmin(gam)]
    assert abs(best - T.optimal_alpha(p)) <= top / 2000
    assert T.linear_rate_gamma(p, T.optimal_alpha(p)) == pytest.approx(floor, rel=1e-12)


def test_armijo_gamma():
    p = T.RateParams(mu=1.0, L=1.0, theta=0.5, c=0.5)
    assert T.armijo_rate_gamma(p, 100.0) == pytest.approx(0.75)
    assert T.armijo_rate_gamma(p, 1e-12) == pytest.approx(1.0)
    cs = np.linspace(0.01, 0.5, 50)
    vals = [T.armijo_rate_gamma(T.RateParams(1.0, 3.0, 0.5, c=c), 1.0) for c in cs]
    assert np.all(np.diff(vals) <= 0)


def test_sublinear_bound():
    assert T.sublinear_bound(2.0, 2.0, 1.0, 0) == 8.0
    assert T.sublinear_bound(2.0, 2.0, 1.0, 3) == 2 * T.sublinear_bound(2.0, 2.0, 1.0, 7)
    assert T.sublinear_bound(2.0, 2.0, 1.0, 10**15) < 1e-13


def test_variance_bound_basics():
    assert T.variance_bound(1.5, 0.2, 10) == 2 * T.variance_bound(1.5, 0.2, 20)
    assert T.variance_bound(0.0, 5.0, 3) == 0.0


@given(nu=st.floats(0.01, 10), sigma=st.floats(0, 5), d=st.integers(1, 50),
       K=st.integers(1, 10_000))
def test_variance_bound_dominates_quadratic_model(nu, sigma, d, K):
    exact = d * nu**2 * sigma**2 / K
    assert T.variance_bound(nu, d * sigma**2, K) >= exact


def test_descent_condition_examples():
    g = np.array([1.0, -2.0])
    assert T.descent_condition_holds(g, g) and g @ g > 0
    assert not T.descent_condition_holds(-g, g)


@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6))
def test_descent_condition_implies_positive_inner_product(vals):
    gb, gt = np.array(vals[:3]), np.array(vals[3:])
    if T.descent_condition_holds(gb, gt):
        assert gb @ gt > 0


def test_quad_expected_loss_examples():
    m = T.QuadModel(nu=2.0, sigma=0.3, d=4, K=10)
    assert T.quad_expected_loss(m, 0.0, 1.5) == pytest.approx(0.5 * 2.0 * (1.5 + 4 * 0.09))
    m0 = T.QuadModel(nu=2.0, sigma=0.0, d=4, K=10)
    assert T.quad_expected_loss(m0, 0.5, 3.0) == 0.0


@given(nu=st.floats(0.1, 5), sigma=st.floats(0.01, 1), d=st.integers(1, 20),
       K=st.integers(2, 1000), dist2=st.floats(1e-3, 10))
@settings(max_examples=100, deadline=None)
def test_quad_expected_loss_convex_and_argmin_is_noise_corrected_bb(nu, sigma, d, K, dist2):
    m = T.QuadModel(nu, sigma, d, K)
    grid = np.linspace(0, 2 / nu, 401)
    vals = T.quad_expected_loss(m, grid, dist2)
    assert np.all(np.diff(vals, 2) > 0)
    # E||G_B||^2 = nu^2 dist2 + TrVar / K, TrVar = d nu^2 sigma^2
    gnorm2 = nu**2 * dist2 + m.grad_trace_var / K
    alpha = bb_stepsize(nu, m.grad_trace_var, K, gnorm2)
    assert alpha == pytest.approx(T.quad_optimal_alpha(m, dist2), rel=1e-10)


def test_bb_lower_bound_examples():
    assert T.bb_lower_bound(2.0, 0.0) == 0.5
    assert T.bb_lower_bound(1.0, np.sqrt(0.5)) == pytest.approx(0.5)


def test_hessian_extremes_least_squares():
    prob = Problem("least-squares", make_regression(200, 4, seed=0), lam=0.1)
    mu, L = T.hessian_extremes(prob)
    H = T.least_squares_hessian(prob)
    # Rayleigh quotients of random vectors fall inside [mu, L]
    for v in np.random.default_rng(0).normal(size=(50, 4)):
        q = v @ H @ v / (v @ v)
        assert mu - 1e-12 <= q <= L + 1e-12


def test_reference_minimum_matches_normal_equations():
    prob = Problem("least-squares", make_regression(300, 5, seed=1))
    x, f = T.reference_minimum(prob)
    A, b = prob.dataset.features, prob.dataset.labels
    x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
    np.testing.assert_allclose(x, x_ls, atol=1e-10)
    # value-based backtracking stalls at the float floor of the loss
    assert np.linalg.norm(full_loss(prob, x).gradient) <= 1e-8
    assert f == pytest.approx(full_loss(prob, x_ls).value, rel=1e-14)


def test_batch_gradient_error_matches_quadratic_closed_form():
    prob = generate_quadratic(d=5, n=20_000, nu=2.0, sigma=0.2, seed=0)
    errs = T.batch_gradient_error(prob, np.ones(5), 50, 4000, np.random.default_rng(0))
    assert errs.mean() == pytest.approx(5 * 4 * 0.04 / 50, rel=0.1)
