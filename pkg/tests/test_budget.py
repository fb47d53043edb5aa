"""Budget-set construction, validation, and regressor builders."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from etipanel import (
    BudgetSet,
    ConvexityViolation,
    DomainError,
    RegressorRow,
    Spec,
    TaxSchedule,
    budget_from_schedule,
    regressors_spec_a,
    regressors_spec_b,
    validate,
)


def test_two_bracket_schedule_builds_expected_budget():
    b = budget_from_schedule(TaxSchedule(((0, 0.20), (10000, 0.40)), 5000))
    assert b.slopes == (0.8, 0.6)
    assert b.kinks == (10000.0,)
    # continuity at the kink: R2 = 5000 + (0.8 - 0.6) * 10000
    assert_allclose(b.virtual_incomes, (5000.0, 7000.0))
    assert validate(b) == []


def test_no_tax_schedule_is_identity():
    b = budget_from_schedule(TaxSchedule(((0, 0.0),), 1.0))
    assert b.J == 1
    assert b.slopes == (1.0,)
    assert b.virtual_incomes == (1.0,)
    assert b.right_kinks == (math.inf,)


def test_decreasing_rates_are_not_convex():
    with pytest.raises(ConvexityViolation):
        TaxSchedule(((0, 0.40), (10000, 0.20)), 5000)


def test_flat_segments_merge():
    b = budget_from_schedule(
        TaxSchedule(((0, 0.2), (8000, 0.2), (20000, 0.5)), 1000)
    )
    assert b.slopes == (0.8, 0.5)
    assert b.kinks == (20000.0,)
    assert validate(b) == []


@pytest.mark.parametrize(
    "brackets, nonlabor",
    [
        (((1.0, 0.1),), 100.0),  # first threshold not zero
        (((0.0, 0.1), (0.0, 0.2)), 100.0),  # thresholds not increasing
        (((0.0, 1.0),), 100.0),  # rate outside [0, 1)
        (((0.0, -0.1),), 100.0),
        (((0.0, 0.1),), 0.0),  # nonlabor income must be positive
    ],
)
def test_schedule_rejects_bad_inputs(brackets, nonlabor):
    with pytest.raises(DomainError):
        TaxSchedule(brackets, nonlabor)


def test_spec_a_rows():
    b = BudgetSet((1.0, 0.5), (3.0,), (1.0, 2.5))
    assert_allclose(
        regressors_spec_a(b, 3).values,
        [1.0, -0.6931471805599453, -0.6931471805599453, 3.0],
    )
    lin = BudgetSet((0.5,), (), (1.0,))
    assert_allclose(regressors_spec_a(lin, 0).values, [1.0, math.log(0.5), 0.0, 0.0])
    b2 = budget_from_schedule(TaxSchedule(((0, 0.2), (10000, 0.4)), 5000))
    row = regressors_spec_a(b2, 1)
    assert_allclose(row.values, [1.0, -0.510826, -0.287682, 1.0], atol=5e-7)


def test_spec_b_rows():
    # R2 = 1 + (1.0 - 0.5) * 2 = 2
    b = BudgetSet((1.0, 0.5), (2.0,), (1.0, 2.0))
    row = regressors_spec_b(b, 4)
    log2 = math.log(2.0)
    assert_allclose(row.values, [1.0, -log2, log2, -log2, log2, 4.0])

    lin = BudgetSet((1.0,), (), (1.0,))
    assert_allclose(regressors_spec_b(lin, 0).values, np.array([1, 0, 0, 0, 0, 0.0]))


def test_spec_a_embeds_in_spec_b():
    rng = np.random.default_rng(0)
    for _ in range(50):
        tau1 = rng.uniform(0.05, 0.3)
        tau2 = tau1 + rng.uniform(0.02, 0.3)
        b = budget_from_schedule(
            TaxSchedule(((0, tau1), (rng.uniform(1e3, 1e5), tau2)), rng.uniform(10, 1e4))
        )
        t = int(rng.integers(0, 20))
        row_a = regressors_spec_a(b, t).values
        row_b = regressors_spec_b(b, t).values
        assert_allclose(row_a, row_b[[0, 1, 3, 5]], rtol=0, atol=0)


def test_linear_budget_difference_regressors_exactly_zero():
    b = BudgetSet((0.73,), (), (123.0,))
    assert regressors_spec_a(b, 5).values[2] == 0.0
    row = regressors_spec_b(b, 5).values
    assert row[3] == 0.0 and row[4] == 0.0


def test_schedule_roundtrip_always_validates():
    rng = np.random.default_rng(42)
    for _ in range(200):
        J = int(rng.integers(1, 6))
        rates = np.sort(rng.uniform(0.0, 0.9, size=J))
        thresholds = np.concatenate([[0.0], np.sort(rng.uniform(1e2, 1e5, size=J - 1))])
        sched = TaxSchedule(
            tuple(zip(thresholds, rates)), float(rng.uniform(1.0, 1e4))
        )
        b = budget_from_schedule(sched)
        assert validate(b) == []
        # recursion invariant holds pairwise
        for j in range(b.J - 1):
            gap = abs(
                b.virtual_incomes[j + 1]
                - b.virtual_incomes[j]
                - (b.slopes[j] - b.slopes[j + 1]) * b.kinks[j]
            )
            assert gap <= 1e-9 * max(1.0, b.virtual_incomes[j])


def test_validate_reports_violations():
    assert "convexity" in validate(BudgetSet((0.5, 0.8), (10.0,), (1.0, -2.0)))
    # broken continuity recursion
    assert "recursion" in validate(BudgetSet((0.8, 0.6), (10.0,), (1.0, 9.0)))
    assert "kink_order" in validate(
        BudgetSet((0.9, 0.8, 0.7), (50.0, 20.0), (1.0, 6.0, 8.0))
    )
    assert "positivity" in validate(BudgetSet((0.8, -0.1), (10.0,), (1.0, 10.0)))
    good = budget_from_schedule(TaxSchedule(((0, 0.1), (100, 0.3)), 50))
    assert validate(good) == []


def test_validate_recursion_tolerance_is_relative():
    b = BudgetSet((0.8, 0.6), (10000.0,), (5000.0, 7000.0 + 1e-7))
    assert validate(b) == []  # 1e-7 within 1e-9 * 5000
    b2 = BudgetSet((0.8, 0.6), (10000.0,), (5000.0, 7000.0 + 1e-4))
    assert "recursion" in validate(b2)


def test_regressors_reject_nonpositive_inputs():
    bad_slope = BudgetSet((0.8, -0.5), (10.0,), (1.0, 14.0))
    with pytest.raises(DomainError):
        regressors_spec_a(bad_slope, 0)
    bad_r = BudgetSet((0.8,), (), (-1.0,))
    with pytest.raises(DomainError):
        regressors_spec_b(bad_r, 0)


def test_regressor_row_validation():
    with pytest.raises(DomainError):
        RegressorRow(np.array([2.0, 0.0, 0.0, 0.0]), Spec.A, 0)
    with pytest.raises(DomainError):
        RegressorRow(np.array([1.0, 0.0, 0.0]), Spec.A, 0)
    assert RegressorRow(np.zeros(6) + [1, 0, 0, 0, 0, 0], Spec.B, 2).t == 2


def test_budget_set_shape_checks():
    with pytest.raises(DomainError):
        BudgetSet((), (), ())
    with pytest.raises(DomainError):
        BudgetSet((0.8, 0.6), (), (1.0, 2.0))
    with pytest.raises(DomainError):
        BudgetSet((0.8,), (), (1.0, 2.0))
