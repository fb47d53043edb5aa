"""Convex piecewise-linear budget sets and their regressor representations.

A budget set is the consumption-income frontier induced by a tax schedule.
It is described by segments with strictly decreasing net-of-tax slopes,
strictly increasing kink points, and virtual incomes (the nonlabor income
that would rationalize each segment as a linear budget).  The regressor
builders turn a budget set into the row vector used by the per-individual
panel regressions: intercept, log last-segment slope, log slope difference
to the first segment, a time trend, and (with an income effect) the
corresponding virtual-income terms.

Everything here is a pure value type or pure function; instances are
immutable and safe to share across threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConvexityViolation, DomainError

__all__ = [
    "Spec",
    "THETA_INDEX",
    "GAMMA_INDEX",
    "BudgetSet",
    "TaxSchedule",
    "RegressorRow",
    "budget_from_schedule",
    "regressors_spec_a",
    "regressors_spec_b",
    "validate",
]

# Position of the slope-elasticity coefficient in both specifications, and
# of the income-elasticity coefficient in spec B.
THETA_INDEX = 1
GAMMA_INDEX = 2

# Relative tolerance for the virtual-income continuity recursion.
RECURSION_RTOL = 1e-9


class Spec(enum.Enum):
    """Regressor specification: ``A`` without and ``B`` with an income effect."""

    A = "a"
    B = "b"

    @property
    def dim(self) -> int:
        return 4 if self is Spec.A else 6

    @property
    def coef_names(self) -> tuple[str, ...]:
        """Coefficient names by regressor position."""
        if self is Spec.A:
            return ("a", "theta", "c", "d")
        return ("a", "theta", "gamma", "c", "chat", "d")

    @property
    def report_names(self) -> tuple[str, ...]:
        """Coefficient names in report-column order (elasticities first)."""
        if self is Spec.A:
            return ("theta", "a", "c", "d")
        return ("theta", "gamma", "a", "c", "chat", "d")

    @classmethod
    def from_string(cls, value) -> "Spec":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown spec {value!r}; expected 'a' or 'b'") from None


@dataclass(frozen=True)
class BudgetSet:
    """A convex piecewise-linear budget frontier.

    Parameters
    ----------
    slopes : tuple of float
        Net-of-tax slope of each segment, strictly decreasing, all > 0.
    kinks : tuple of float
        Right kink point of each segment except the last (length ``J - 1``),
        strictly increasing, all > 0.  The last segment is unbounded.
    virtual_incomes : tuple of float
        Virtual income of each segment (length ``J``), satisfying the
        continuity recursion ``R[j+1] = R[j] + (slope[j] - slope[j+1]) * K[j]``.

    Construction only checks shapes; use :func:`validate` for the full
    invariant diagnostics, or :func:`budget_from_schedule` to build a set
    that satisfies them by construction.
    """

    slopes: tuple[float, ...]
    kinks: tuple[float, ...]
    virtual_incomes: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "slopes", tuple(float(s) for s in self.slopes))
        object.__setattr__(self, "kinks", tuple(float(k) for k in self.kinks))
        object.__setattr__(
            self, "virtual_incomes", tuple(float(r) for r in self.virtual_incomes)
        )
        if len(self.slopes) < 1:
            raise DomainError("budget set needs at least one segment")
        if len(self.virtual_incomes) != len(self.slopes):
            raise DomainError("one virtual income per segment required")
        if len(self.kinks) != len(self.slopes) - 1:
            raise DomainError("expected J - 1 interior kinks")

    @property
    def J(self) -> int:
        """Number of segments."""
        return len(self.slopes)

    @property
    def right_kinks(self) -> tuple[float, ...]:
        """Right kink of every segment; the last one is the ``+inf`` sentinel."""
        return self.kinks + (math.inf,)


@dataclass(frozen=True)
class TaxSchedule:
    """Ordered tax brackets plus nonlabor income.

    ``brackets`` is a sequence of ``(threshold, marginal_rate)`` pairs with
    thresholds strictly increasing from 0 and rates in ``[0, 1)``.  Rates
    must be non-decreasing for the implied budget set to be convex.
    """

    brackets: tuple[tuple[float, float], ...]
    nonlabor_income: float

    def __post_init__(self):
        object.__setattr__(
            self,
            "brackets",
            tuple((float(t), float(r)) for t, r in self.brackets),
        )
        object.__setattr__(self, "nonlabor_income", float(self.nonlabor_income))
        if not self.brackets:
            raise DomainError("schedule needs at least one bracket")
        if self.brackets[0][0] != 0.0:
            raise DomainError("first bracket threshold must be 0")
        thresholds = [t for t, _ in self.brackets]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise DomainError("bracket thresholds must be strictly increasing")
        rates = [r for _, r in self.brackets]
        if any(not 0.0 <= r < 1.0 for r in rates):
            raise DomainError("marginal rates must lie in [0, 1)")
        if any(b < a for a, b in zip(rates, rates[1:])):
            raise ConvexityViolation(
                "marginal rates must be non-decreasing for a convex budget set"
            )
        if self.nonlabor_income <= 0.0:
            raise DomainError("nonlabor income must be positive")


@dataclass(frozen=True, eq=False)
class RegressorRow:
    """One time period's regressor vector.

    ``values`` starts with the constant 1 and has length 4 under spec A
    and 6 under spec B; ``t`` is the integer time index (years since the
    individual's base period).
    """

    values: np.ndarray
    spec: Spec
    t: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.shape[0] != self.spec.dim:
            raise DomainError(
                f"spec {self.spec.value} regressor row must have length {self.spec.dim}"
            )
        if values[0] != 1.0:
            raise DomainError("first regressor component must be exactly 1")


def budget_from_schedule(schedule: TaxSchedule) -> BudgetSet:
    """Build the convex budget set implied by a tax schedule.

    Slopes are one minus the marginal rates, kinks are the interior bracket
    thresholds, and virtual incomes follow the continuity recursion
    ``R[j+1] = R[j] + (slope[j] - slope[j+1]) * K[j]`` starting from the
    nonlabor income.  Brackets whose rate equals the previous one produce a
    flat segment and are merged away.
    """

    slopes: list[float] = []
    kinks: list[float] = []
    for threshold, rate in schedule.brackets:
        rho = 1.0 - rate
        if slopes and rho == slopes[-1]:
            continue  # flat segment: the kink vanishes
        if slopes:
            kinks.append(threshold)
        slopes.append(rho)

    virtual_incomes = [schedule.nonlabor_income]
    for j, kink in enumerate(kinks):
        virtual_incomes.append(
            virtual_incomes[j] + (slopes[j] - slopes[j + 1]) * kink
        )

    return BudgetSet(tuple(slopes), tuple(kinks), tuple(virtual_incomes))


def validate(b: BudgetSet, rtol: float = RECURSION_RTOL) -> list[str]:
    """Return the list of violated budget-set invariants (empty = valid).

    Codes: ``"positivity"`` (a slope or the first virtual income is not
    positive), ``"convexity"`` (slopes not strictly decreasing),
    ``"kink_order"`` (kinks not strictly increasing from a positive value),
    ``"recursion"`` (virtual incomes break the continuity recursion beyond
    ``rtol * max(1, R[j])``).
    """

    violations = []
    if any(s <= 0.0 for s in b.slopes) or b.virtual_incomes[0] <= 0.0:
        violations.append("positivity")
    if any(s2 >= s1 for s1, s2 in zip(b.slopes, b.slopes[1:])):
        violations.append("convexity")
    if b.kinks and (
        b.kinks[0] <= 0.0 or any(k2 <= k1 for k1, k2 in zip(b.kinks, b.kinks[1:]))
    ):
        violations.append("kink_order")
    for j, kink in enumerate(b.kinks):
        expected = b.virtual_incomes[j] + (b.slopes[j] - b.slopes[j + 1]) * kink
        if not math.isfinite(expected) or abs(
            b.virtual_incomes[j + 1] - expected
        ) > rtol * max(1.0, abs(b.virtual_incomes[j])):
            violations.append("recursion")
            break
    return violations


def _require_positive_slopes(b: BudgetSet):
    if any(s <= 0.0 for s in b.slopes):
        raise DomainError("all slopes must be positive to take logs")


def regressors_spec_a(b: BudgetSet, t: int) -> RegressorRow:
    """Regressor row without an income effect.

    ``[1, log(slope_J), log(slope_J) - log(slope_1), t]``, matching the
    coefficient vector ``(a, theta, c, d)``.
    """

    _require_positive_slopes(b)
    log_last = math.log(b.slopes[-1])
    log_first = math.log(b.slopes[0])
    values = np.array([1.0, log_last, log_last - log_first, float(t)])
    return RegressorRow(values, Spec.A, int(t))


def regressors_spec_b(b: BudgetSet, t: int) -> RegressorRow:
    """Regressor row with an income effect.

    ``[1, log(slope_J), log(R_J), log(slope_J) - log(slope_1),
    log(R_J) - log(R_1), t]``, matching ``(a, theta, gamma, c, chat, d)``.
    """

    _require_positive_slopes(b)
    if any(r <= 0.0 for r in b.virtual_incomes):
        raise DomainError("all virtual incomes must be positive to take logs")
    log_last = math.log(b.slopes[-1])
    log_first = math.log(b.slopes[0])
    log_r_last = math.log(b.virtual_incomes[-1])
    log_r_first = math.log(b.virtual_incomes[0])
    values = np.array(
        [
            1.0,
            log_last,
            log_r_last,
            log_last - log_first,
            log_r_last - log_r_first,
            float(t),
        ]
    )
    return RegressorRow(values, Spec.B, int(t))


def regressors(b: BudgetSet, t: int, spec: Spec) -> RegressorRow:
    """Dispatch to the spec A or spec B regressor builder."""
    if Spec.from_string(spec) is Spec.A:
        return regressors_spec_a(b, t)
    return regressors_spec_b(b, t)
