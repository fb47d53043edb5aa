"""Shared helpers: independent oracles and small panel builders."""

import numpy as np
import pytest

from etipanel import DGPConfig, PanelSeries, generate_panel


def average_ols(panel):
    """Brute-force oracle: average the per-individual least-squares solutions."""
    sols = [np.linalg.lstsq(s.X, s.y, rcond=None)[0] for s in panel]
    return np.vstack(sols).mean(axis=0)


def pooled_ols(panel):
    """Pooled least squares over all rows, ignoring the panel structure."""
    X = np.vstack([s.X for s in panel])
    y = np.concatenate([s.y for s in panel])
    return np.linalg.lstsq(X, y, rcond=None)[0]


def toy_series(ident="i", seed=0, T=12, k=3, beta=None, sigma=0.1):
    """A well-conditioned free-dimension series with known coefficients."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(T), rng.normal(size=(T, k - 1))])
    beta = np.arange(1, k + 1, dtype=float) if beta is None else np.asarray(beta)
    y = X @ beta + sigma * rng.normal(size=T)
    return PanelSeries(ident, np.arange(T), y, X)


@pytest.fixture
def small_panel():
    """Exogenous reduced-mode panel, all individuals invertible at lam = 0."""
    cfg = DGPConfig(n=40, T=15, seed=123)
    return generate_panel(cfg).series
