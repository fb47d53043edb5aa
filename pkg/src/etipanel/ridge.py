"""Per-individual ridge regression on budget-set regressors.

For one individual with regressor rows ``b_t`` and outcomes ``y_t`` the
estimator solves ``(Q + lam * S) beta = (1/T) sum_t b_t y_t`` where
``Q = (1/T) sum_t b_t b_t'`` and ``S`` is a diagonal penalty that never
touches the intercept.  The shrinkage matrix ``W = (Q + lam * S)^{-1} Q``
records how much each coefficient was pulled toward zero and is what the
aggregation step uses to debias averages.

All functions are pure; fitting different individuals concurrently is safe
and is the intended parallelization axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .budget import RegressorRow, Spec
from .exceptions import DomainError, SingularSystem

__all__ = [
    "PanelSeries",
    "RidgeFit",
    "second_moment",
    "penalty",
    "ridge_fit",
    "fitted_residuals",
    "PENALTY_MODES",
]

PENALTY_MODES = ("unit", "scaled")

# Relative singularity tolerance for symmetric solves: the smallest
# eigenvalue must exceed this times the largest diagonal entry.
SOLVE_RTOL = 1e-12

DEFAULT_PENALTY_FLOOR = 1e-12


@dataclass(eq=False)
class PanelSeries:
    """One individual's time-indexed observations.

    Parameters
    ----------
    ident : hashable
        Individual identifier.
    t : array of int
        Time indices (distinct; years since the base period).
    y : array of float
        Log taxable income per period.
    X : array of float, shape (T, k)
        Regressor rows; the first column is the constant 1.
    spec : Spec or None
        When given, ``X`` must have ``spec.dim`` columns.  ``None`` leaves
        the dimension free (useful for small hand-built systems).
    """

    ident: object
    t: np.ndarray
    y: np.ndarray
    X: np.ndarray
    spec: Spec | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=int)
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.t.ndim != 1 or self.y.ndim != 1:
            raise DomainError("t and y must be vectors and X a matrix")
        T = self.t.shape[0]
        if T < 1 or self.y.shape[0] != T or self.X.shape[0] != T:
            raise DomainError("t, y and X must share a positive length")
        if np.unique(self.t).shape[0] != T:
            raise DomainError(f"series {self.ident!r} has duplicate time indices")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X))):
            raise DomainError(f"series {self.ident!r} contains non-finite values")
        if not np.all(self.X[:, 0] == 1.0):
            raise DomainError("first regressor column must be exactly 1")
        if self.spec is not None and self.X.shape[1] != self.spec.dim:
            raise DomainError(
                f"spec {self.spec.value} needs {self.spec.dim} regressors, "
                f"got {self.X.shape[1]}"
            )

    @classmethod
    def from_rows(
        cls, ident, rows: Sequence[tuple[int, float, RegressorRow]]
    ) -> "PanelSeries":
        """Build a series from ``(t, y, RegressorRow)`` triples."""
        if not rows:
            raise DomainError("a series needs at least one row")
        specs = {row.spec for _, _, row in rows}
        if len(specs) != 1:
            raise DomainError("all rows of a series must share the same spec")
        t = np.array([t for t, _, _ in rows], dtype=int)
        y = np.array([y for _, y, _ in rows], dtype=float)
        X = np.vstack([row.values for _, _, row in rows])
        return cls(ident, t, y, X, specs.pop())

    @property
    def T(self) -> int:
        return self.t.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]


@dataclass(eq=False)
class RidgeFit:
    """One individual's ridge solution at a given penalty level ``lam``."""

    ident: object
    lam: float
    Q: np.ndarray
    S: np.ndarray
    beta_hat: np.ndarray
    W: np.ndarray
    spec: Spec | None = None
    T: int = 0

    @property
    def k(self) -> int:
        return self.beta_hat.shape[0]


def second_moment(series: PanelSeries) -> np.ndarray:
    """``(1/T) sum_t b_t b_t'``; symmetric PSD with unit (0, 0) entry."""
    Q = series.X.T @ series.X / series.T
    return (Q + Q.T) / 2.0


def penalty(
    Q: np.ndarray, mode: str = "scaled", floor: float = DEFAULT_PENALTY_FLOOR
) -> np.ndarray:
    """Diagonal ridge penalty with an unpenalized intercept.

    ``"unit"`` penalizes every non-intercept coefficient by 1.  ``"scaled"``
    matches each penalty to the regressor's own second moment ``Q[j, j]``,
    falling back to 1 when that moment is below ``floor`` (a regressor that
    is identically zero for this individual would otherwise leave
    ``Q + lam * S`` singular).
    """

    diag = _penalty_diag(np.asarray(Q, dtype=float)[None, :, :], mode, floor)[0]
    return np.diag(diag)


def _penalty_diag(Q: np.ndarray, mode: str, floor: float) -> np.ndarray:
    """Penalty diagonals for a stacked batch of second-moment matrices."""
    if mode not in PENALTY_MODES:
        raise DomainError(f"unknown penalty mode {mode!r}; expected one of {PENALTY_MODES}")
    n, k = Q.shape[0], Q.shape[1]
    if mode == "unit":
        diag = np.ones((n, k))
    else:
        diag = np.einsum("nkk->nk", Q).copy()
        diag[diag < floor] = 1.0
    diag[:, 0] = 0.0
    return diag


def _solve_spd_batch(A: np.ndarray, ids: Sequence) -> np.ndarray:
    """Inverses of a batch of symmetric matrices under the singularity policy.

    The smallest eigenvalue of each matrix must exceed ``SOLVE_RTOL`` times
    its largest diagonal entry, else :class:`SingularSystem` names the
    offending individuals.
    """

    eigvals, eigvecs = np.linalg.eigh(A)
    scale = np.max(np.einsum("nkk->nk", A), axis=1)
    bad = eigvals[:, 0] <= SOLVE_RTOL * np.maximum(scale, 1e-300)
    if np.any(bad):
        bad_ids = [ids[i] for i in np.nonzero(bad)[0]]
        raise SingularSystem(
            f"singular system for individuals {bad_ids[:5]}"
            + ("..." if len(bad_ids) > 5 else "")
            + "; raise lam or drop them",
            ids=bad_ids,
        )
    return np.einsum("nij,nj,nkj->nik", eigvecs, 1.0 / eigvals, eigvecs)


def _fit_batch(
    Q: np.ndarray,
    cross: np.ndarray,
    lam: float,
    mode: str,
    floor: float,
    ids: Sequence,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched ridge solve: returns ``(beta, W, S_diag)`` stacked over individuals."""
    if lam < 0:
        raise DomainError("lam must be non-negative")
    S_diag = _penalty_diag(Q, mode, floor)
    A = Q.copy()
    idx = np.arange(Q.shape[1])
    A[:, idx, idx] += lam * S_diag
    A_inv = _solve_spd_batch(A, ids)
    beta = np.einsum("nij,nj->ni", A_inv, cross)
    W = A_inv @ Q
    return beta, W, S_diag


def ridge_fit(
    series: PanelSeries,
    lam: float,
    mode: str = "scaled",
    *,
    penalty_floor: float = DEFAULT_PENALTY_FLOOR,
) -> RidgeFit:
    """Fit one individual's ridge regression.

    Solves ``(Q + lam * S) beta = (1/T) sum_t b_t y_t`` and records the
    shrinkage matrix ``W = (Q + lam * S)^{-1} Q``.  At ``lam = 0`` the
    second-moment matrix must be invertible within tolerance, otherwise
    :class:`SingularSystem` is raised.
    """

    Q = second_moment(series)
    cross = series.X.T @ series.y / series.T
    beta, W, S_diag = _fit_batch(
        Q[None, :, :], cross[None, :], float(lam), mode, penalty_floor, [series.ident]
    )
    return RidgeFit(
        ident=series.ident,
        lam=float(lam),
        Q=Q,
        S=np.diag(S_diag[0]),
        beta_hat=beta[0],
        W=W[0],
        spec=series.spec,
        T=series.T,
    )


def fitted_residuals(series: PanelSeries, fit: RidgeFit) -> np.ndarray:
    """Residuals ``y_t - b_t' beta_hat`` of a fit on its own series."""
    return series.y - series.X @ fit.beta_hat


def panel_moments(panel: Sequence[PanelSeries]) -> tuple[list, np.ndarray, np.ndarray]:
    """Stack ``(ids, Q, cross)`` over a panel of series with equal dimension."""
    if not panel:
        raise DomainError("panel is empty")
    k = panel[0].k
    if any(s.k != k for s in panel):
        raise DomainError("all series must share the regressor dimension")
    ids = [s.ident for s in panel]
    Q = np.empty((len(panel), k, k))
    cross = np.empty((len(panel), k))
    for i, s in enumerate(panel):
        G = s.X.T @ s.X / s.T
        Q[i] = (G + G.T) / 2.0
        cross[i] = s.X.T @ s.y / s.T
    return ids, Q, cross
