import numpy as np
import pytest
from scipy.special import expit

from cfslope import DegenerateFitError, fit_logistic, fit_ols


def newton_logistic_oracle(X, y, iters=200):
    """Independent straight Newton solver used as the benchmark."""
    beta = np.zeros(X.shape[1])
    for _ in range(iters):
        p = expit(X @ beta)
        grad = X.T @ (y - p)
        H = X.T @ (X * np.maximum(p * (1 - p), 1e-12)[:, None])
        delta = np.linalg.solve(H, grad)
        beta = beta + delta
        if np.max(np.abs(delta)) < 1e-12:
            break
    return beta


def test_intercept_only_closed_form():
    y = np.array([1.0] * 25 + [0.0] * 75)
    X = np.ones((100, 1))
    beta, diag = fit_logistic(X, y)
    assert diag.converged
    assert abs(beta[0] - np.log(0.25 / 0.75)) < 1e-8  # logit(0.25) = -1.0986...


def test_perfect_separation_warns_and_stays_finite():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(300)
    y = (x > 0).astype(float)
    X = np.column_stack([np.ones(300), x])
    with pytest.warns(RuntimeWarning, match="separation"):
        beta, diag = fit_logistic(X, y)
    assert diag.separation
    p = expit(X @ beta)
    assert np.all(p > 0.0) and np.all(p < 1.0)
    assert np.all(np.isfinite(beta))


def test_logistic_recovery_vs_independent_newton():
    rng = np.random.default_rng(42)
    n = 100_000
    x = rng.standard_normal(n)
    X = np.column_stack([np.ones(n), x])
    true = np.array([1.0, -0.5])
    y = (rng.random(n) < expit(X @ true)).astype(float)
    beta, diag = fit_logistic(X, y)
    oracle = newton_logistic_oracle(X, y)
    assert diag.converged
    assert np.max(np.abs(beta - true)) < 0.02
    assert np.max(np.abs(beta - oracle)) < 1e-7


def test_constant_response_is_degenerate():
    X = np.column_stack([np.ones(50), np.arange(50.0)])
    with pytest.raises(DegenerateFitError, match="constant"):
        fit_logistic(X, np.ones(50))


def test_irls_score_equations_hold(sample_a):
    data = sample_a.dataset
    X = np.column_stack([np.ones(data.n), data.x, data.g ** 2])
    beta, diag = fit_logistic(X, data.d)
    assert diag.converged
    score = X.T @ (data.d - expit(X @ beta))
    assert np.max(np.abs(score)) <= 1e-8 * data.n


def test_ols_exact_line():
    x = np.linspace(-2, 3, 40)
    X = np.column_stack([np.ones(40), x])
    y = 2.0 + 3.0 * x
    beta, diag = fit_ols(X, y)
    assert np.max(np.abs(beta - [2.0, 3.0])) < 1e-10
    assert diag.converged


def test_ols_duplicated_column_named():
    x = np.linspace(0, 1, 30)
    X = np.column_stack([np.ones(30), x, x])
    with pytest.raises(DegenerateFitError, match="x_copy"):
        fit_ols(X, x, column_names=["const", "x", "x_copy"])


def test_ols_matches_pinv_oracle():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((200, 4))
    true = np.array([0.5, -1.0, 2.0, 0.1])
    y = X @ true + 0.1 * rng.standard_normal(200)
    beta, _ = fit_ols(X, y)
    oracle = np.linalg.pinv(X) @ y
    assert np.max(np.abs(beta - oracle)) < 1e-8


def test_ols_residual_orthogonality():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((500, 3))
    y = X @ np.array([1.0, 2.0, -0.5]) + rng.standard_normal(500)
    beta, _ = fit_ols(X, y)
    assert np.max(np.abs(X.T @ (y - X @ beta))) <= 1e-8 * np.linalg.norm(y)
