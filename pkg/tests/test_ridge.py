"""Per-individual ridge regression: moments, penalties, fits, residuals."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from etipanel import (
    DomainError,
    PanelSeries,
    SingularSystem,
    fitted_residuals,
    penalty,
    ridge_fit,
    second_moment,
)
from etipanel.ridge import _penalty_diag


def series(X, y, ident="i"):
    X = np.asarray(X, dtype=float)
    return PanelSeries(ident, np.arange(X.shape[0]), y, X)


def test_second_moment_examples():
    s = series([[1, 0, 0, 0]], [2.0])
    assert_allclose(second_moment(s), np.diag([1.0, 0, 0, 0]))

    s2 = series([[1, 1], [1, -1]], [0.0, 0.0])
    assert_allclose(second_moment(s2), np.eye(2))

    s3 = series([[1, 2], [1, 4]], [0.0, 0.0])
    assert_allclose(second_moment(s3), [[1.0, 3.0], [3.0, 10.0]])


def test_second_moment_unit_corner_and_symmetry():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(9), rng.normal(size=(9, 3))])
    Q = second_moment(series(X, rng.normal(size=9)))
    assert Q[0, 0] == 1.0
    assert_allclose(Q, Q.T, rtol=0, atol=0)
    assert np.min(np.linalg.eigvalsh(Q)) > -1e-12


def test_penalty_modes():
    Q4 = np.diag([1.0, 4.0, 9.0, 0.0])
    assert_allclose(penalty(Q4, "unit"), np.diag([0.0, 1, 1, 1]))
    assert_allclose(penalty(Q4, "scaled", floor=1e-12), np.diag([0.0, 4, 9, 1]))
    Q2 = np.array([[1.0, 3.0], [3.0, 10.0]])
    assert_allclose(penalty(Q2, "scaled"), np.diag([0.0, 10.0]))
    with pytest.raises(DomainError):
        penalty(Q2, "lasso")


def test_exact_ols_through_two_points():
    s = series([[1, 2], [1, 4]], [5.0, 9.0])
    fit = ridge_fit(s, 0.0)
    assert_allclose(fit.beta_hat, [1.0, 2.0], atol=1e-12)
    assert_allclose(fit.W, np.eye(2), atol=1e-12)
    assert_allclose(fitted_residuals(s, fit), [0.0, 0.0], atol=1e-12)


def test_heavy_penalty_shrinks_slope_only():
    s = series([[1, 2], [1, 4]], [5.0, 9.0])
    fit = ridge_fit(s, 1e10, "unit")
    assert abs(fit.beta_hat[1]) < 1e-9
    assert_allclose(fit.beta_hat[0], 7.0, atol=1e-6)  # mean outcome


def test_lam_zero_requires_invertible_moments():
    # constant second regressor: collinear with the intercept
    s = series([[1, 3], [1, 3], [1, 3]], [1.0, 2.0, 3.0])
    with pytest.raises(SingularSystem):
        ridge_fit(s, 0.0)
    # but any positive lam is fine with the fallback penalty
    fit = ridge_fit(s, 1e-6, "scaled")
    assert np.all(np.isfinite(fit.beta_hat))


def test_w_is_identity_at_lam_zero(small_panel):
    for s in small_panel[:10]:
        fit = ridge_fit(s, 0.0)
        assert np.max(np.abs(fit.W - np.eye(s.k))) <= 1e-10


def test_monotone_shrinkage_with_diagonal_moments():
    rng = np.random.default_rng(7)
    for _ in range(20):
        k = 4
        diag = np.concatenate([[1.0], rng.uniform(0.5, 5.0, size=k - 1)])
        cross = rng.normal(size=k)
        prev = None
        for lam in [0.0, 0.01, 0.1, 1.0, 10.0]:
            beta = np.linalg.solve(
                np.diag(diag) + lam * np.diag([0.0, 1, 1, 1]), cross
            )
            if prev is not None:
                assert np.all(np.abs(beta[1:]) <= np.abs(prev[1:]) + 1e-14)
            prev = beta


def test_penalized_system_positive_definite_with_fallback():
    rng = np.random.default_rng(11)
    for _ in range(50):
        k = 5
        # rank-deficient PSD moment matrix with a unit intercept corner
        A = rng.normal(size=(k, 2))
        Q = A @ A.T
        Q[0, :] = 0.0
        Q[:, 0] = 0.0
        Q[0, 0] = 1.0
        for lam in [1e-8, 1e-3, 1.0, 1e4]:
            S = _penalty_diag(Q[None], "scaled", 1e-12)[0]
            M = Q + lam * np.diag(S)
            assert np.min(np.linalg.eigvalsh(M)) > 0


def test_beta_invariant_to_row_order():
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(14), rng.normal(size=(14, 3))])
    y = rng.normal(size=14)
    s1 = series(X, y)
    perm = rng.permutation(14)
    s2 = PanelSeries("i", np.arange(14), y[perm], X[perm])
    for lam in [0.0, 0.01, 1.0]:
        f1, f2 = ridge_fit(s1, lam), ridge_fit(s2, lam)
        assert_allclose(f1.beta_hat, f2.beta_hat, rtol=1e-12, atol=1e-14)


def test_scale_equivariance_at_lam_zero():
    rng = np.random.default_rng(5)
    X = np.column_stack([np.ones(10), rng.normal(size=(10, 2))])
    y = rng.normal(size=10)
    base = ridge_fit(series(X, y), 0.0).beta_hat
    scaled = ridge_fit(series(X, 3.5 * y), 0.0).beta_hat
    assert_allclose(scaled, 3.5 * base, rtol=1e-10)


def test_hand_computed_residuals():
    # three points, OLS slope 1.5, intercept -1/6
    s = series([[1, 0], [1, 1], [1, 2]], [0.0, 1.0, 3.0])
    fit = ridge_fit(s, 0.0)
    assert_allclose(fit.beta_hat, [-1.0 / 6.0, 1.5], atol=1e-12)
    assert_allclose(
        fitted_residuals(s, fit), [1.0 / 6.0, -1.0 / 3.0, 1.0 / 6.0], atol=1e-12
    )


def test_residuals_orthogonal_to_regressors_at_lam_zero(small_panel):
    for s in small_panel[:10]:
        fit = ridge_fit(s, 0.0)
        r = fitted_residuals(s, fit)
        assert np.max(np.abs(s.X.T @ r)) <= 1e-8 * max(1.0, np.abs(s.y).max())


def test_series_validation():
    with pytest.raises(DomainError):
        PanelSeries("i", [0, 0], [1.0, 2.0], [[1, 1], [1, 2]])  # duplicate t
    with pytest.raises(DomainError):
        PanelSeries("i", [0, 1], [1.0, 2.0], [[2, 1], [1, 2]])  # first column not 1
    with pytest.raises(DomainError):
        PanelSeries("i", [0, 1], [np.nan, 2.0], [[1, 1], [1, 2]])
    from etipanel import Spec

    with pytest.raises(DomainError):
        PanelSeries("i", [0], [1.0], [[1.0, 0.0, 0.0]], spec=Spec.A)  # wrong width
    ok = PanelSeries("i", [0], [1.0], [[1.0, 0.0, 0.0, 0.0]], spec=Spec.A)
    assert ok.T == 1 and ok.k == 4


def test_negative_lam_rejected():
    s = series([[1, 2], [1, 4]], [5.0, 9.0])
    with pytest.raises(DomainError):
        ridge_fit(s, -0.1)
