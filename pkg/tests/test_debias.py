"""Debiased averaging, variance formulas, sweeps, and diagnostics."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import average_ols, toy_series
from etipanel import (
    DEFAULT_LAMBDA_GRID,
    DGPConfig,
    DomainError,
    NonInvertibleWbar,
    PanelSeries,
    RidgeFit,
    debias,
    first_significant_lambda,
    fixed_effects_oracle,
    generate_panel,
    income_effect_interval,
    ridge_fit,
    sweep,
    variance_alt_check,
    zeta_diagnostic,
)


def test_single_individual_debias_equals_ols_for_any_lam():
    s = toy_series(seed=2, T=20, k=4)
    ols = np.linalg.lstsq(s.X, s.y, rcond=None)[0]
    for lam in [1e-6, 0.01, 1.0, 100.0]:
        report = debias([ridge_fit(s, lam)])
        assert np.max(np.abs(report.beta_tilde - ols)) <= 1e-10
        assert_allclose(report.V_hat, 0.0, atol=1e-18)


def test_identical_exactly_fit_individuals():
    beta = np.array([2.0, -1.0, 0.5])
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(10), rng.normal(size=(10, 2))])
    panel = [
        PanelSeries(i, np.arange(10), X @ beta, X) for i in range(6)
    ]
    report = debias([ridge_fit(s, 0.3) for s in panel])
    assert_allclose(report.beta_tilde, beta, atol=1e-10)
    assert_allclose(report.V_hat, 0.0, atol=1e-16)
    assert_allclose(report.std_errors, 0.0, atol=1e-9)


def test_lam_zero_matches_average_of_ols_oracle(small_panel):
    report = debias([ridge_fit(s, 0.0) for s in small_panel])
    assert np.max(np.abs(report.beta_tilde - average_ols(small_panel))) <= 1e-8


def test_variance_formulas_agree(small_panel):
    for lam in [0.0, 1e-4, 0.5]:
        fits = [ridge_fit(s, lam) for s in small_panel]
        report = debias(fits)
        scale = max(np.max(np.abs(report.V_hat)), 1.0)
        assert variance_alt_check(fits, report) <= 1e-12 * scale


def test_dof_correction_scales_covariance(small_panel):
    fits = [ridge_fit(s, 0.01) for s in small_panel]
    plain = debias(fits)
    corrected = debias(fits, dof_correction=True)
    n = plain.n
    assert_allclose(corrected.V_hat, plain.V_hat * n / (n - 1), rtol=1e-12)
    assert variance_alt_check(fits, corrected) <= 1e-12


def test_default_grid_is_the_published_one():
    assert DEFAULT_LAMBDA_GRID == (
        0.0, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 0.01, 0.1, 0.2, 0.3, 0.4, 0.5,
        1.0, 2.0, 3.0,
    )


def test_sweep_matches_per_lambda_debias(small_panel):
    entries = sweep(small_panel, (0.0, 1e-3, 0.5))
    assert [e.lam for e in entries] == [0.0, 1e-3, 0.5]
    for entry in entries:
        fits = [ridge_fit(s, entry.lam) for s in small_panel]
        direct = debias(fits)
        assert_allclose(entry.report.beta_tilde, direct.beta_tilde, rtol=0, atol=1e-14)
        assert_allclose(entry.report.std_errors, direct.std_errors, rtol=0, atol=1e-14)


def test_sweep_records_failures_and_continues():
    cfg = DGPConfig(n=20, T=15, n_weak=3, seed=8)
    panel = generate_panel(cfg).series
    entries = sweep(panel, (0.0, 1e-6, 1.0))
    assert entries[0].report is None and "SingularSystem" in entries[0].error
    assert entries[1].ok and entries[2].ok


def test_sweep_grid_validation(small_panel):
    with pytest.raises(DomainError):
        sweep(small_panel, ())
    with pytest.raises(DomainError):
        sweep(small_panel, (0.1, 0.1))
    with pytest.raises(DomainError):
        sweep(small_panel, (1.0, 0.1))


def test_naive_average_shrinks_with_lam(small_panel):
    entries = sweep(small_panel, DEFAULT_LAMBDA_GRID)
    theta_path = [e.report.naive_avg[1] for e in entries]
    assert all(b <= a + 1e-12 for a, b in zip(theta_path, theta_path[1:]))


def test_permutation_invariance(small_panel):
    fits = [ridge_fit(s, 1e-3) for s in small_panel]
    report = debias(fits)
    rng = np.random.default_rng(0)
    shuffled = [fits[i] for i in rng.permutation(len(fits))]
    report2 = debias(shuffled)
    scale = np.abs(report.beta_tilde).max()
    assert np.max(np.abs(report.beta_tilde - report2.beta_tilde)) <= 1e-12 * scale
    assert np.max(np.abs(report.V_hat - report2.V_hat)) <= 1e-12 * max(
        1.0, np.abs(report.V_hat).max()
    )


def test_homogeneous_exact_fit_recovered_at_every_grid_lam():
    beta = np.array([1.0, 0.6, 0.2, 0.015])
    cfg = DGPConfig(
        n=25, T=15, noise_sigma=0.0, theta_log_sd=0.0, alpha_sd=0.0,
        a_sd=0.0, cbar_sd=0.0, a_mean=1.0, theta_mean=0.6,
        cbar_mean=0.2 / 0.6, alpha_mean=0.015 / 1.6, seed=4,
    )
    panel = generate_panel(cfg).series
    entries = sweep(panel, DEFAULT_LAMBDA_GRID)
    for entry in entries:
        assert entry.ok
        assert np.max(np.abs(entry.report.beta_tilde - beta)) <= 1e-8


def test_mixed_fits_rejected(small_panel):
    f0 = ridge_fit(small_panel[0], 0.1)
    f1 = ridge_fit(small_panel[1], 0.2)
    with pytest.raises(DomainError):
        debias([f0, f1])
    with pytest.raises(DomainError):
        debias([])


def test_zeta_zero_at_lam_zero(small_panel):
    fits = [ridge_fit(s, 0.0) for s in small_panel]
    diag = zeta_diagnostic(fits)
    assert np.max(diag.zeta) <= 1e-9
    assert diag.quantiles.shape == (101, 2)
    assert diag.quantiles[0, 0] == 0.0 and diag.quantiles[-1, 0] == 1.0


def _fabricated_fit(ident, W, k=3):
    return RidgeFit(
        ident=ident, lam=0.5, Q=np.eye(k), S=np.diag([0.0] + [1.0] * (k - 1)),
        beta_hat=np.zeros(k), W=W,
    )


def test_zeta_bound_attained_when_row_is_flipped():
    k = 3
    fits = [
        _fabricated_fit(0, -np.eye(k)),
        _fabricated_fit(1, 3.0 * np.eye(k)),
    ]
    diag = zeta_diagnostic(fits, coord_index=1)
    # W_bar = I, so the flipped individual has ehat = -e: zeta = 2 / sqrt(4)
    assert_allclose(diag.zeta[0], 1.0, atol=1e-12)
    assert np.all(diag.zeta <= 1.0)


def test_zeta_in_unit_interval_on_random_fits():
    rng = np.random.default_rng(9)
    for lam in [1e-7, 1e-3, 0.5]:
        panel = [toy_series(i, seed=100 + i, T=8, k=4, sigma=0.5) for i in range(30)]
        fits = [ridge_fit(s, lam) for s in panel]
        z = zeta_diagnostic(fits).zeta
        assert np.all(z >= 0.0) and np.all(z <= 1.0 + 1e-12)


def test_zeta_noninvertible_wbar():
    # every individual shares the same dead regressor direction
    cfg = DGPConfig(n=8, T=15, n_weak=8, seed=2)
    panel = generate_panel(cfg).series
    fits = [ridge_fit(s, 1e-7) for s in panel]
    with pytest.raises(NonInvertibleWbar):
        zeta_diagnostic(fits)
    with pytest.raises(NonInvertibleWbar):
        debias(fits)


def test_fixed_effects_oracle_hand_example():
    # two individuals; pooled demeaned slope = 1.5 / 2.5 = 0.6
    s1 = PanelSeries(1, [0, 1], [0.0, 1.0], [[1, 0], [1, 1]])
    s2 = PanelSeries(2, [0, 1], [1.0, 2.0], [[1, 0], [1, 2]])
    assert_allclose(fixed_effects_oracle([s1, s2]), [0.6])


def test_fixed_effects_oracle_recovers_common_slopes():
    beta = np.array([0.0, 1.2, -0.7, 0.3])
    rng = np.random.default_rng(12)
    panel = []
    for i in range(12):
        X = np.column_stack([np.ones(9), rng.normal(size=(9, 3))])
        y = X @ beta + rng.normal() * 1.0  # individual intercept shift only
        panel.append(PanelSeries(i, np.arange(9), y, X))
    assert_allclose(fixed_effects_oracle(panel), beta[1:], atol=1e-10)


def test_fixed_effects_is_the_large_lam_limit(small_panel):
    fe = fixed_effects_oracle(small_panel)
    report = debias([ridge_fit(s, 1e6, "unit") for s in small_panel])
    assert_allclose(report.beta_tilde[1:], fe, rtol=1e-3)


def test_income_effect_interval_published_arithmetic():
    res = income_effect_interval(0.0074, 0.0355, 5.96, 1.96)
    assert_allclose(np.round(res.elasticity, 4), [-0.0622, 0.0770])
    assert_allclose(np.round(res.income_effect, 3), [-0.371, 0.459])
    degen = income_effect_interval(0.01, 0.0, 5.96)
    assert degen.income_effect == (0.0596, 0.0596)
    with pytest.raises(DomainError):
        income_effect_interval(0.0, -1.0, 5.96)
    with pytest.raises(DomainError):
        income_effect_interval(0.0, 1.0, 0.0)


def _entry(lam, theta, se):
    from etipanel.debias import DebiasReport, SweepEntry

    k = 2
    report = DebiasReport(
        lam=lam, n=10, naive_avg=np.zeros(k), W_bar=np.eye(k),
        beta_tilde=np.array([0.0, theta]), V_hat=np.eye(k),
        std_errors=np.array([0.0, se]),
    )
    return SweepEntry(lam=lam, report=report)


def test_first_significant_lambda_matches_published_narrative():
    # debiased slope elasticities and standard errors, spec without income effect
    table1 = [
        (0.0, 0.2027358, 0.2446697),
        (1e-7, 0.203854, 0.2407696),
        (1e-6, 0.2084525, 0.2187759),
        (1e-5, 0.1630704, 0.1582035),
        (1e-4, 0.1367891, 0.1182584),
        (1e-3, 0.2541288, 0.0931669),
        (0.01, 0.4315851, 0.0818147),
        (0.1, 0.623476, 0.0815514),
    ]
    entries = [_entry(*row) for row in table1]
    assert first_significant_lambda(entries, coord_index=1) == 1e-3

    # with the income effect the estimate turns significant earlier
    table2 = [
        (0.0, 0.787642, 0.415832),
        (1e-7, 0.685251, 0.37199),
        (1e-6, 0.605638, 0.288264),
        (1e-5, 0.486876, 0.205531),
    ]
    entries2 = [_entry(*row) for row in table2]
    assert first_significant_lambda(entries2, coord_index=1) == 1e-6
    assert first_significant_lambda(entries2[:2], coord_index=1) is None
