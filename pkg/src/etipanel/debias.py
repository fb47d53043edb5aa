"""Debiased averaging of per-individual ridge fits.

The average of ridge coefficients is biased toward zero by the penalty;
multiplying it by the inverse of the averaged shrinkage matrix removes
that bias:

    beta_tilde = W_bar^{-1} (1/n) sum_i beta_hat_i,   W_bar = (1/n) sum_i W_i.

The influence-function variance is ``V_hat = (1/n) sum_i psi_i psi_i'``
with ``psi_i = W_bar^{-1} (beta_hat_i - W_i beta_tilde)``, estimating the
asymptotic variance of ``sqrt(n) (beta_tilde - beta_0)``; reported standard
errors are ``sqrt(diag(V_hat) / n)``.

Aggregation is a deterministic fixed-order reduction: identical inputs and
configuration reproduce results bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .budget import Spec, THETA_INDEX
from .exceptions import DomainError, NonInvertibleWbar, SingularSystem
from .ridge import (
    DEFAULT_PENALTY_FLOOR,
    PanelSeries,
    RidgeFit,
    _fit_batch,
    panel_moments,
)

__all__ = [
    "DEFAULT_LAMBDA_GRID",
    "DebiasReport",
    "SweepEntry",
    "ZetaDiagnostic",
    "IncomeEffectInterval",
    "debias",
    "variance_alt_check",
    "sweep",
    "zeta_diagnostic",
    "fixed_effects_oracle",
    "income_effect_interval",
    "first_significant_lambda",
]

# Penalty grid used throughout the reference results.
DEFAULT_LAMBDA_GRID = (
    0.0,
    1e-7,
    1e-6,
    1e-5,
    1e-4,
    1e-3,
    0.01,
    0.1,
    0.2,
    0.3,
    0.4,
    0.5,
    1.0,
    2.0,
    3.0,
)

# Relative tolerance (smallest/largest singular value) below which the
# averaged shrinkage matrix counts as non-invertible.
WBAR_RTOL = 1e-12


@dataclass(eq=False)
class DebiasReport:
    """Averaged estimates at one penalty level.

    ``naive_avg`` is the plain average of per-individual ridge coefficients,
    ``beta_tilde`` the debiased average, ``V_hat`` the influence-function
    covariance of ``sqrt(n) (beta_tilde - beta_0)``, and ``std_errors`` the
    per-coefficient standard errors ``sqrt(diag(V_hat) / n)``.
    """

    lam: float
    n: int
    naive_avg: np.ndarray
    W_bar: np.ndarray
    beta_tilde: np.ndarray
    V_hat: np.ndarray
    std_errors: np.ndarray
    spec: Spec | None = None
    dof_correction: bool = False

    @property
    def k(self) -> int:
        return self.beta_tilde.shape[0]


@dataclass(eq=False)
class SweepEntry:
    """One penalty-grid point of a sweep: a report, or the error that stopped it."""

    lam: float
    report: DebiasReport | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None


@dataclass(eq=False)
class ZetaDiagnostic:
    """Per-individual identification scores at one penalty level.

    ``zeta[i]`` measures how far the row vector that weights individual
    ``i``'s contribution to the target coefficient departs from the plain
    selector; 0 means no regularization distortion, 1 the maximum.
    """

    ids: list
    zeta: np.ndarray
    coord_index: int
    lam: float
    quantiles: np.ndarray  # shape (101, 2): probability, zeta quantile

    def flagged(self, threshold: float = 0.5) -> list:
        """Identifiers whose score exceeds ``threshold`` (weakly identified)."""
        return [i for i, z in zip(self.ids, self.zeta) if z > threshold]


class IncomeEffectInterval(NamedTuple):
    """Confidence interval on the income elasticity and its dY/dR rescaling."""

    elasticity: tuple[float, float]
    income_effect: tuple[float, float]


def _invert_w_bar(W_bar: np.ndarray) -> np.ndarray:
    svals = np.linalg.svd(W_bar, compute_uv=False)
    if svals[-1] <= WBAR_RTOL * svals[0]:
        raise NonInvertibleWbar(
            "averaged shrinkage matrix is singular within tolerance; "
            "lam is too small for this sample"
        )
    return np.linalg.inv(W_bar)


def _stack_fits(fits: Sequence[RidgeFit]) -> tuple[list, np.ndarray, np.ndarray, float, Spec | None]:
    if not fits:
        raise DomainError("no fits to aggregate")
    lam = fits[0].lam
    k = fits[0].k
    spec = fits[0].spec
    if any(f.lam != lam for f in fits):
        raise DomainError("all fits must share lam")
    if any(f.k != k for f in fits):
        raise DomainError("all fits must share the coefficient dimension")
    if any(f.spec != spec for f in fits):
        raise DomainError("all fits must share the spec")
    beta = np.vstack([f.beta_hat for f in fits])
    W = np.stack([f.W for f in fits])
    return [f.ident for f in fits], beta, W, lam, spec


def _debias_arrays(
    beta: np.ndarray,
    W: np.ndarray,
    lam: float,
    spec: Spec | None,
    dof_correction: bool,
) -> DebiasReport:
    n = beta.shape[0]
    naive_avg = beta.mean(axis=0)
    W_bar = W.mean(axis=0)
    W_bar_inv = _invert_w_bar(W_bar)
    beta_tilde = W_bar_inv @ naive_avg
    dev = beta - np.einsum("nij,j->ni", W, beta_tilde)
    psi = dev @ W_bar_inv.T
    V_hat = psi.T @ psi / n
    V_hat = (V_hat + V_hat.T) / 2.0
    if dof_correction and n > 1:
        V_hat = V_hat * (n / (n - 1.0))
    std_errors = np.sqrt(np.diag(V_hat) / n)
    return DebiasReport(
        lam=lam,
        n=n,
        naive_avg=naive_avg,
        W_bar=W_bar,
        beta_tilde=beta_tilde,
        V_hat=V_hat,
        std_errors=std_errors,
        spec=spec,
        dof_correction=dof_correction,
    )


def debias(fits: Sequence[RidgeFit], *, dof_correction: bool = False) -> DebiasReport:
    """Debiased average of per-individual ridge fits sharing one ``lam``.

    Raises :class:`NonInvertibleWbar` when the averaged shrinkage matrix is
    singular within tolerance, which signals that ``lam`` is too small for a
    sample where too many individuals share an unidentified direction.
    """

    _, beta, W, lam, spec = _stack_fits(fits)
    return _debias_arrays(beta, W, lam, spec, dof_correction)


def variance_alt_check(fits: Sequence[RidgeFit], report: DebiasReport) -> float:
    """Largest elementwise gap between the two algebraically equal variance forms.

    Recomputes the covariance as
    ``W_bar^{-1} [(1/n) sum_i d_i d_i'] W_bar^{-1}'`` with
    ``d_i = beta_hat_i - W_i beta_tilde`` and returns
    ``max |V_hat - V_alt|``, which must vanish up to roundoff.
    """

    _, beta, W, _, _ = _stack_fits(fits)
    n = beta.shape[0]
    dev = beta - np.einsum("nij,j->ni", W, report.beta_tilde)
    middle = dev.T @ dev / n
    W_bar_inv = np.linalg.inv(report.W_bar)
    V_alt = W_bar_inv @ middle @ W_bar_inv.T
    if report.dof_correction and n > 1:
        V_alt = V_alt * (n / (n - 1.0))
    return float(np.max(np.abs(report.V_hat - V_alt)))


def sweep(
    panel: Sequence[PanelSeries],
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    spec: Spec | None = None,
    mode: str = "scaled",
    *,
    penalty_floor: float = DEFAULT_PENALTY_FLOOR,
    dof_correction: bool = False,
) -> list[SweepEntry]:
    """Debiased averages over a penalty grid, one entry per grid value.

    Per-individual second moments and cross moments are computed once and
    reused across the grid.  A failure at one grid value (typically
    ``lam = 0`` with singular individuals) is recorded on its entry and the
    sweep continues; individuals are never silently dropped, so the sample
    is identical across grid values.
    """

    grid = [float(l) for l in lambda_grid]
    if not grid:
        raise DomainError("lambda grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("lambda grid must be strictly ascending")
    if spec is not None:
        bad = [s.ident for s in panel if s.spec is not spec]
        if bad:
            raise DomainError(f"series {bad[:5]} do not match spec {spec.value}")
    else:
        specs = {s.spec for s in panel}
        spec = specs.pop() if len(specs) == 1 else None

    ids, Q, cross = panel_moments(panel)
    entries = []
    for lam in grid:
        try:
            beta, W, _ = _fit_batch(Q, cross, lam, mode, penalty_floor, ids)
            report = _debias_arrays(beta, W, lam, spec, dof_correction)
            entries.append(SweepEntry(lam=lam, report=report))
        except (SingularSystem, NonInvertibleWbar) as exc:
            entries.append(SweepEntry(lam=lam, error=f"{type(exc).__name__}: {exc}"))
    return entries


def zeta_diagnostic(
    fits: Sequence[RidgeFit], coord_index: int = THETA_INDEX
) -> ZetaDiagnostic:
    """Identification score per individual at the fits' penalty level.

    For target coordinate ``j`` with selector ``e_j``, the regularized row
    ``ehat_i = e_j' W_bar^{-1} W_i`` weights individual ``i``'s coefficients
    in the debiased average; the score is

        zeta_i = ||ehat_i - e_j|| / sqrt(2 ||ehat_i||^2 + 2),

    which lies in [0, 1] and is 0 exactly when no shrinkage distorts the
    target coordinate for this individual.
    """

    ids, _, W, lam, _ = _stack_fits(fits)
    k = W.shape[1]
    if not 0 <= coord_index < k:
        raise DomainError(f"coord_index {coord_index} out of range for dimension {k}")
    W_bar = W.mean(axis=0)
    _invert_w_bar(W_bar)  # singularity policy check
    e = np.zeros(k)
    e[coord_index] = 1.0
    row = np.linalg.solve(W_bar.T, e)
    ehat = np.einsum("j,njk->nk", row, W)
    dist = np.linalg.norm(ehat - e, axis=1)
    norm2 = np.einsum("nk,nk->n", ehat, ehat)
    zeta = dist / np.sqrt(2.0 * norm2 + 2.0)
    probs = np.linspace(0.0, 1.0, 101)
    quantiles = np.column_stack([probs, np.quantile(zeta, probs)])
    return ZetaDiagnostic(
        ids=ids, zeta=zeta, coord_index=coord_index, lam=lam, quantiles=quantiles
    )


def fixed_effects_oracle(panel: Sequence[PanelSeries]) -> np.ndarray:
    """Classical within (entity-demeaned) OLS slopes over the pooled panel.

    Subtracts individual means from the outcome and every non-constant
    regressor, then solves pooled least squares.  This is the comparison
    target that the debiased average approaches as ``lam`` grows.
    """

    if not panel:
        raise DomainError("panel is empty")
    Xd_parts = []
    yd_parts = []
    for s in panel:
        Xs = s.X[:, 1:]
        Xd_parts.append(Xs - Xs.mean(axis=0))
        yd_parts.append(s.y - s.y.mean())
    Xd = np.vstack(Xd_parts)
    yd = np.concatenate(yd_parts)
    k = Xd.shape[1]
    solution, _, rank, _ = np.linalg.lstsq(Xd, yd, rcond=None)
    if rank < k:
        raise SingularSystem("pooled within variation is rank deficient")
    return solution


def income_effect_interval(
    gamma_hat: float, se: float, y_over_r: float, z: float = 1.96
) -> IncomeEffectInterval:
    """Income-elasticity confidence interval and its dY/dR rescaling.

    The elasticity interval is ``gamma_hat +/- z * se``; multiplying by the
    income-to-virtual-income ratio ``y_over_r`` converts it to the scale of
    the marginal effect of nonlabor income.
    """

    if se < 0:
        raise DomainError("standard error must be non-negative")
    if y_over_r <= 0:
        raise DomainError("income ratio must be positive")
    lo = gamma_hat - z * se
    hi = gamma_hat + z * se
    return IncomeEffectInterval(
        elasticity=(lo, hi), income_effect=(lo * y_over_r, hi * y_over_r)
    )


def first_significant_lambda(
    entries: Sequence[SweepEntry],
    coord_index: int = THETA_INDEX,
    z: float = 1.96,
) -> float | None:
    """Smallest grid ``lam`` whose debiased target coefficient is significant.

    Mirrors the reporting convention of flagging the first grid value
    (ascending) with ``|beta_tilde[coord]| / se[coord] >= z``; returns
    ``None`` when no grid value qualifies.
    """

    for entry in entries:
        if entry.report is None:
            continue
        se = entry.report.std_errors[coord_index]
        if se > 0 and abs(entry.report.beta_tilde[coord_index]) / se >= z:
            return entry.lam
    return None
