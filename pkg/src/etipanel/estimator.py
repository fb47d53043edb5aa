"""Scikit-learn style front end for the debiased average ridge estimator.

``DebiasedAverageRidge`` follows the usual estimator contract (``fit`` /
``predict`` / ``get_params``) so the panel method composes with pipelines,
cross-validation utilities, and model-selection tooling.  ``X`` holds the
non-constant regressors (the intercept is added internally and never
penalized) and ``groups`` labels the entity each row belongs to; per-entity
ridge fits are averaged and debiased into one coefficient vector.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .budget import THETA_INDEX
from .debias import _debias_arrays, zeta_diagnostic
from .exceptions import DomainError
from .ridge import DEFAULT_PENALTY_FLOOR, PENALTY_MODES, RidgeFit, _fit_batch

__all__ = ["DebiasedAverageRidge"]


def _group_moments(X: np.ndarray, y: np.ndarray, groups: np.ndarray):
    """Per-group second moments and cross moments of intercept-augmented rows."""
    order = np.argsort(groups, kind="stable")
    Xs, ys, gs = X[order], y[order], groups[order]
    _, starts = np.unique(gs, return_index=True)
    ids = [gs[s] for s in starts]
    bounds = list(starts) + [len(gs)]
    k = X.shape[1]
    n = len(ids)
    Q = np.empty((n, k, k))
    cross = np.empty((n, k))
    for i in range(n):
        lo, hi = bounds[i], bounds[i + 1]
        block = Xs[lo:hi]
        G = block.T @ block / (hi - lo)
        Q[i] = (G + G.T) / 2.0
        cross[i] = block.T @ ys[lo:hi] / (hi - lo)
    return ids, Q, cross


class DebiasedAverageRidge(RegressorMixin, BaseEstimator):
    """Average of heterogeneous per-entity coefficients via debiased ridge.

    Each entity gets its own ridge regression with an unpenalized intercept;
    the entity-level coefficient averages are then multiplied by the inverse
    of the averaged shrinkage matrix, which removes the regularization bias
    of the average.  With a single entity (or ``groups=None``) the debiased
    estimate reduces to that entity's OLS solution for any ``lam``.

    Parameters
    ----------
    lam : float, default=0.001
        Ridge penalty level.
    penalty : {"scaled", "unit"}, default="scaled"
        Penalty diagonal: the regressor's own second moment, or ones.
    penalty_floor : float, default=1e-12
        Below this second moment the scaled penalty falls back to 1.
    dof_correction : bool, default=False
        Multiply the covariance by ``n / (n - 1)``.

    Attributes
    ----------
    intercept_ : float
        Debiased average intercept.
    coef_ : ndarray of shape (n_features,)
        Debiased average slopes.
    params_ : ndarray of shape (n_features + 1,)
        Full debiased vector, intercept first.
    naive_params_ : ndarray of shape (n_features + 1,)
        Plain average of per-entity ridge coefficients.
    se_params_ : ndarray of shape (n_features + 1,)
        Standard errors of ``params_``.
    cov_params_ : ndarray
        Covariance of ``params_`` (the asymptotic covariance divided by n).
    w_bar_ : ndarray
        Averaged shrinkage matrix.
    n_groups_ : int
        Number of entities.
    """

    def __init__(
        self,
        lam: float = 1e-3,
        penalty: str = "scaled",
        penalty_floor: float = DEFAULT_PENALTY_FLOOR,
        dof_correction: bool = False,
    ):
        self.lam = lam
        self.penalty = penalty
        self.penalty_floor = penalty_floor
        self.dof_correction = dof_correction

    def fit(self, X, y, groups=None):
        """Fit per-entity ridge regressions and debias their average.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
            Non-constant regressors; an intercept column is added internally.
        y : array-like of shape (n_samples,)
            Outcomes.
        groups : array-like of shape (n_samples,), optional
            Entity label per row.  ``None`` treats all rows as one entity.
        """

        X, y = check_X_y(X, y, y_numeric=True)
        if self.lam < 0:
            raise DomainError("lam must be non-negative")
        if self.penalty not in PENALTY_MODES:
            raise DomainError(f"penalty must be one of {PENALTY_MODES}")
        if groups is None:
            groups = np.zeros(X.shape[0], dtype=int)
        groups = np.asarray(groups)
        if groups.shape != (X.shape[0],):
            raise DomainError("groups must have one label per row")

        Xc = np.column_stack([np.ones(X.shape[0]), X])
        ids, Q, cross = _group_moments(Xc, y, groups)
        beta, W, S = _fit_batch(
            Q, cross, float(self.lam), self.penalty, self.penalty_floor, ids
        )
        report = _debias_arrays(beta, W, float(self.lam), None, self.dof_correction)

        self.n_features_in_ = X.shape[1]
        self.group_ids_ = ids
        self.n_groups_ = len(ids)
        self.params_ = report.beta_tilde
        self.naive_params_ = report.naive_avg
        self.se_params_ = report.std_errors
        self.cov_params_ = report.V_hat / report.n
        self.w_bar_ = report.W_bar
        self.intercept_ = float(report.beta_tilde[0])
        self.coef_ = report.beta_tilde[1:]
        self._beta_i = beta
        self._W_i = W
        self._Q_i = Q
        self._S_i = S
        return self

    def predict(self, X):
        """Predicted outcome at the debiased average coefficients."""
        check_is_fitted(self, "params_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DomainError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return self.intercept_ + X @ self.coef_

    def zeta_scores(self, coord_index: int = THETA_INDEX) -> np.ndarray:
        """Per-entity identification scores for one coefficient position.

        ``coord_index`` counts within the full parameter vector, intercept
        included, so the first feature is index 1.
        """

        check_is_fitted(self, "params_")
        fits = [
            RidgeFit(
                ident=ident,
                lam=float(self.lam),
                Q=self._Q_i[i],
                S=np.diag(self._S_i[i]),
                beta_hat=self._beta_i[i],
                W=self._W_i[i],
            )
            for i, ident in enumerate(self.group_ids_)
        ]
        return zeta_diagnostic(fits, coord_index).zeta
