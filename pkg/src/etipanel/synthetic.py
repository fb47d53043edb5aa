"""Ground-truth data generation for verifying the estimation pipeline.

Two generators are provided.  The reduced generator draws heterogeneous
coefficient vectors and emits outcomes that satisfy the budget-set
regression exactly up to noise, so the average coefficients are known.
The structural generator instead maximizes the isoelastic utility over
each period's budget set, with productivity growth entering both work
effort and its reward, and is used to check that the regression structure
really is what utility maximization implies.

Budget sets may be drawn endogenously: bracket rates depend on the
individual's intercept, so higher-intercept individuals face higher
marginal rates, while the preference shocks stay stationary given the
whole budget-set path.

Generation is pure given (config, seed).  Each individual draws from its
own substream seeded by (seed, index), so generating individuals in
parallel is bit-reproducible under any schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .budget import BudgetSet, Spec, TaxSchedule, budget_from_schedule
from .exceptions import ConfigError, DomainError, GridError
from .ridge import PanelSeries

__all__ = [
    "EtaDistribution",
    "IndividualParams",
    "BudgetDrawSettings",
    "DGPConfig",
    "TruthRecord",
    "SimulatedPanel",
    "XiCheckResult",
    "utility_max_income",
    "endogenous_budget_draw",
    "generate_panel",
    "xi_structure_check",
]

GENERATORS = ("reduced", "structural")
BUDGET_FAMILIES = ("two_bracket", "linear")


@dataclass(frozen=True)
class EtaDistribution:
    """Log-normal preference-shock distribution: ``log eta ~ N(mu, sigma)``.

    The same distribution is used for every period of an individual, which
    is the stationarity that identifies individual-specific parameters.
    """

    mu: float = 0.0
    sigma: float = 0.5

    def __post_init__(self):
        if self.sigma <= 0:
            raise DomainError("eta sigma must be positive")

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return np.exp(rng.normal(self.mu, self.sigma, size))

    @property
    def mean_log(self) -> float:
        return self.mu


@dataclass(frozen=True)
class IndividualParams:
    """One individual's true parameters.

    ``c`` and ``c_hat`` are the kink-adjustment coefficients (elasticity
    times the linearity slope of the nonlinearity correction); they are NaN
    for structural draws, where no linear correction is exact.
    """

    theta: float
    gamma: float
    alpha: float
    a: float
    c: float
    c_hat: float
    eta: EtaDistribution

    def __post_init__(self):
        if not self.theta > 0:
            raise DomainError("theta must be positive")

    @property
    def d(self) -> float:
        """Trend coefficient implied by productivity growth: ``alpha * (theta + 1)``."""
        return self.alpha * (self.theta + 1.0)

    def beta(self, spec: Spec) -> np.ndarray:
        """True coefficient vector in regressor order."""
        if spec is Spec.A:
            return np.array([self.a, self.theta, self.c, self.d])
        return np.array([self.a, self.theta, self.gamma, self.c, self.c_hat, self.d])


@dataclass(frozen=True)
class BudgetDrawSettings:
    """Parameters of the random two-bracket budget family.

    ``strength`` scales how much the top marginal rate responds to the
    individual's intercept (0 = exogenous budgets).  Kinks and nonlabor
    incomes drift upward at ``growth`` per period.
    """

    strength: float = 0.0
    a_center: float = 10.0
    a_scale: float = 0.5
    rate_base: float = 0.10
    rate_range: float = 0.10
    gap_base: float = 0.05
    gap_range: float = 0.15
    kink_center: float = 9.8
    kink_spread: float = 0.8
    nonlabor_center: float = 8.2
    nonlabor_spread: float = 0.6
    growth: float = 1.02


def _two_bracket_params(a, periods, uniforms, s: BudgetDrawSettings):
    """Map uniform draws to (tau1, tau2, kink, nonlabor income), vectorized."""
    u = np.asarray(uniforms, dtype=float)
    tau1 = s.rate_base + s.rate_range * u[..., 0]
    x = np.clip((a - s.a_center) / s.a_scale, -50.0, 50.0)
    shift = 0.25 * s.strength * (1.0 / (1.0 + np.exp(-x)) - 0.5)
    tau2 = np.clip(
        tau1 + s.gap_base + s.gap_range * u[..., 1] + shift, tau1 + 0.01, 0.93
    )
    growth = s.growth ** np.asarray(periods, dtype=float)
    kink = np.exp(s.kink_center + s.kink_spread * (2.0 * u[..., 2] - 1.0)) * growth
    nonlabor = (
        np.exp(s.nonlabor_center + s.nonlabor_spread * (2.0 * u[..., 3] - 1.0)) * growth
    )
    return tau1, tau2, kink, nonlabor


def endogenous_budget_draw(
    individual: IndividualParams,
    period: int,
    rng: np.random.Generator,
    settings: BudgetDrawSettings = BudgetDrawSettings(strength=1.0),
) -> BudgetSet:
    """Draw one period's two-bracket budget set, tilted by the individual.

    The top marginal rate increases with the individual's intercept ``a``
    (progressively taxed high earners), making budget sets correlated with
    preferences.  With ``settings.strength == 0`` the draw is identical in
    distribution to an exogenous one.  Consumes exactly four uniforms from
    ``rng``.
    """

    u = rng.random(4)
    tau1, tau2, kink, nonlabor = _two_bracket_params(
        individual.a, period, u[None, :], settings
    )
    schedule = TaxSchedule(
        ((0.0, float(tau1[0])), (float(kink[0]), float(tau2[0]))), float(nonlabor[0])
    )
    return budget_from_schedule(schedule)


def utility_max_income(b: BudgetSet, theta: float, eta, phi_t: float = 1.0):
    """Taxable income maximizing the isoelastic utility over a convex budget.

    The candidate on segment ``j`` is ``phi_t * (phi_t * rho_j)**theta * eta``;
    the optimum is the candidate interior to its segment, or the kink
    bracketed by the two neighboring candidates.  ``eta`` may be a scalar or
    an array of preference shocks (vectorized over draws); the return type
    matches.
    """

    if theta <= 0:
        raise DomainError("theta must be positive")
    if phi_t <= 0:
        raise DomainError("phi_t must be positive")
    eta_arr = np.asarray(eta, dtype=float)
    if np.any(eta_arr <= 0):
        raise DomainError("eta must be positive")
    rho = np.asarray(b.slopes)
    if np.any(rho <= 0):
        raise DomainError("slopes must be positive")
    kinks = np.asarray(b.right_kinks)
    cand = phi_t * (phi_t * rho) ** theta * eta_arr[..., None]
    # Candidates decrease across segments on a convex set, so clamping each
    # candidate at its segment's right kink and taking the max is the unique
    # global optimum (interior candidate or bracketed kink).
    best = np.max(np.minimum(cand, kinks), axis=-1)
    if np.isscalar(eta) or (isinstance(eta, np.ndarray) and eta.ndim == 0):
        return float(best)
    return best


@dataclass
class DGPConfig:
    """Configuration of the synthetic panel generator.

    ``theta_log_sd`` and ``gamma_log_sd`` are log-scale spreads; the draws
    are log-normal with means exactly ``theta_mean`` and ``gamma_mean``
    (``gamma_mean <= 0`` while ``slutsky`` is on).  ``endogeneity`` scales
    the dependence of top marginal rates on the individual intercept, and
    ``n_weak`` plants that many individuals (the last ones) with a fixed
    linear budget in every period, leaving their elasticity unidentified.
    """

    n: int
    T: int
    spec: Spec = Spec.A
    generator: str = "reduced"
    budget_family: str = "two_bracket"
    endogeneity: float = 0.0
    n_weak: int = 0
    noise_sigma: float = 0.2
    noise_het: float = 0.0
    theta_mean: float = 0.6
    theta_log_sd: float = 0.15
    gamma_mean: float = -0.05
    gamma_log_sd: float = 0.2
    alpha_mean: float = 0.01
    alpha_sd: float = 0.005
    a_mean: float = 10.0
    a_sd: float = 0.5
    cbar_mean: float = 0.3
    cbar_sd: float = 0.1
    eta_sigma: float = 0.5
    slutsky: bool = True
    base_year: int = 1977
    seed: int = 0

    def __post_init__(self):
        self.spec = Spec.from_string(self.spec)
        if self.n < 1 or self.T < 1:
            raise ConfigError("n and T must be at least 1")
        if self.generator not in GENERATORS:
            raise ConfigError(f"generator must be one of {GENERATORS}")
        if self.budget_family not in BUDGET_FAMILIES:
            raise ConfigError(f"budget_family must be one of {BUDGET_FAMILIES}")
        if self.generator == "structural" and self.spec is Spec.B:
            raise ConfigError(
                "structural generation supports spec a only; the utility has "
                "no income effect"
            )
        if not 0 <= self.n_weak <= self.n:
            raise ConfigError("n_weak must lie in [0, n]")
        if self.noise_sigma < 0 or self.noise_het < 0:
            raise ConfigError("noise parameters must be non-negative")
        if self.theta_mean <= 0:
            raise ConfigError("theta_mean must be positive")
        if self.slutsky and self.gamma_mean > 0:
            raise ConfigError("gamma_mean must be <= 0 while slutsky is on")
        if self.endogeneity < 0:
            raise ConfigError("endogeneity must be non-negative")

    def budget_settings(self) -> BudgetDrawSettings:
        return BudgetDrawSettings(
            strength=self.endogeneity,
            a_center=self.a_mean,
            a_scale=max(self.a_sd, 1e-6),
            kink_center=self.a_mean - 0.2,
            nonlabor_center=self.a_mean - 1.8,
        )


@dataclass(eq=False)
class TruthRecord:
    """Per-individual true coefficients plus their population expectation."""

    ids: list
    spec: Spec
    betas: np.ndarray  # (n, k), NaN where no true value exists
    population_mean: np.ndarray

    @property
    def sample_mean(self) -> np.ndarray:
        return self.betas.mean(axis=0)


@dataclass(eq=False)
class SimulatedPanel:
    """Output of :func:`generate_panel`."""

    series: list[PanelSeries]
    truth: TruthRecord
    config: DGPConfig
    budgets: dict | None = None  # (ident, year) -> BudgetSet, when requested


def _draw_params(cfg: DGPConfig, rng: np.random.Generator) -> IndividualParams:
    """Draw one individual's parameters (consumes exactly five normals)."""
    z = rng.standard_normal(5)
    sd = cfg.theta_log_sd
    theta = math.exp(math.log(cfg.theta_mean) - 0.5 * sd * sd + sd * z[0])
    alpha = cfg.alpha_mean + cfg.alpha_sd * z[1]
    a = cfg.a_mean + cfg.a_sd * z[2]
    cbar = cfg.cbar_mean + cfg.cbar_sd * z[3]
    if cfg.slutsky:
        if cfg.gamma_mean == 0.0:
            gamma = 0.0
        else:
            gs = cfg.gamma_log_sd
            gamma = -math.exp(
                math.log(-cfg.gamma_mean) - 0.5 * gs * gs + gs * z[4]
            )
    else:
        gamma = cfg.gamma_mean + cfg.gamma_log_sd * z[4]
    structural = cfg.generator == "structural"
    c = math.nan if structural else theta * cbar
    c_hat = math.nan if structural else gamma * cbar
    return IndividualParams(
        theta=theta,
        gamma=gamma,
        alpha=alpha,
        a=a,
        c=c,
        c_hat=c_hat,
        eta=EtaDistribution(mu=a, sigma=cfg.eta_sigma),
    )


def _population_mean(cfg: DGPConfig) -> np.ndarray:
    """Population expectation of the coefficient vector under the config.

    Component distributions are drawn independently, so products factor.
    """
    structural = cfg.generator == "structural"
    c = math.nan if structural else cfg.theta_mean * cfg.cbar_mean
    d = cfg.alpha_mean * (cfg.theta_mean + 1.0)
    if cfg.spec is Spec.A:
        return np.array([cfg.a_mean, cfg.theta_mean, c, d])
    c_hat = math.nan if structural else cfg.gamma_mean * cfg.cbar_mean
    return np.array([cfg.a_mean, cfg.theta_mean, cfg.gamma_mean, c, c_hat, d])


def _build_rows(cfg, rho_first, rho_last, r_first, r_last, t):
    log_r1 = np.log(rho_first)
    log_rj = np.log(rho_last)
    ones = np.ones_like(log_rj)
    tf = t.astype(float)
    if cfg.spec is Spec.A:
        return np.column_stack([ones, log_rj, log_rj - log_r1, tf])
    log_R1 = np.log(r_first)
    log_RJ = np.log(r_last)
    return np.column_stack(
        [ones, log_rj, log_RJ, log_rj - log_r1, log_RJ - log_R1, tf]
    )


def generate_panel(cfg: DGPConfig, *, with_budgets: bool = False) -> SimulatedPanel:
    """Generate a synthetic panel with a known truth record.

    Reduced mode emits ``y = X beta_i + eps`` with the drawn coefficient
    vectors; structural mode emits the log of the utility-maximizing income
    with per-period shocks from the individual's stationary distribution.
    With ``with_budgets=True`` the drawn budget sets are returned keyed by
    ``(ident, year)`` so they can be serialized alongside the panel.
    """

    settings = cfg.budget_settings()
    t = np.arange(cfg.T)
    series: list[PanelSeries] = []
    betas = np.empty((cfg.n, cfg.spec.dim))
    budgets: dict | None = {} if with_budgets else None

    for i in range(cfg.n):
        rng = np.random.default_rng([cfg.seed, i])
        params = _draw_params(cfg, rng)
        weak = i >= cfg.n - cfg.n_weak

        if weak:
            u = rng.random(2)
            rho = np.full(cfg.T, 0.55 + 0.3 * u[0])
            nonlabor = np.full(
                cfg.T,
                math.exp(
                    settings.nonlabor_center
                    + settings.nonlabor_spread * (2.0 * u[1] - 1.0)
                ),
            )
            rho_first, rho_last = rho, rho
            r_first, r_last = nonlabor, nonlabor
            kink = np.full(cfg.T, math.inf)
        elif cfg.budget_family == "linear":
            u = rng.random((cfg.T, 2))
            rho = 1.0 - (0.1 + 0.4 * u[:, 0])
            nonlabor = np.exp(
                settings.nonlabor_center
                + settings.nonlabor_spread * (2.0 * u[:, 1] - 1.0)
            )
            rho_first, rho_last = rho, rho
            r_first, r_last = nonlabor, nonlabor
            kink = np.full(cfg.T, math.inf)
        else:
            u = rng.random((cfg.T, 4))
            tau1, tau2, kink, nonlabor = _two_bracket_params(params.a, t, u, settings)
            rho_first = 1.0 - tau1
            rho_last = 1.0 - tau2
            r_first = nonlabor
            r_last = nonlabor + (rho_first - rho_last) * kink

        X = _build_rows(cfg, rho_first, rho_last, r_first, r_last, t)

        if cfg.generator == "reduced":
            beta_i = params.beta(cfg.spec)
            eps = rng.standard_normal(cfg.T)
            sigma = cfg.noise_sigma * np.sqrt(
                1.0 + cfg.noise_het * (np.log(rho_last) - np.log(rho_first)) ** 2
            )
            y = X @ beta_i + sigma * eps
        else:
            eta = params.eta.sample(rng, cfg.T)
            phi = np.exp(params.alpha * t)
            cand_first = phi * (phi * rho_first) ** params.theta * eta
            cand_last = phi * (phi * rho_last) ** params.theta * eta
            income = np.maximum(np.minimum(cand_first, kink), cand_last)
            y = np.log(income)
            beta_i = params.beta(cfg.spec)

        betas[i] = beta_i
        series.append(PanelSeries(i, t, y, X, cfg.spec))

        if with_budgets is True:
            for j in range(cfg.T):
                if math.isinf(kink[j]):
                    b = BudgetSet((rho_first[j],), (), (r_first[j],))
                else:
                    b = BudgetSet(
                        (rho_first[j], rho_last[j]),
                        (kink[j],),
                        (r_first[j], r_last[j]),
                    )
                budgets[(i, cfg.base_year + j)] = b

    truth = TruthRecord(
        ids=list(range(cfg.n)),
        spec=cfg.spec,
        betas=betas,
        population_mean=_population_mean(cfg),
    )
    return SimulatedPanel(series=series, truth=truth, config=cfg, budgets=budgets)


@dataclass(eq=False)
class XiCheckResult:
    """Held-out prediction check of the kink-correction structure.

    ``gaps[j]`` is simulated minus predicted mean log income for held-out
    budget ``j``; ``gap_ses[j]`` the Monte Carlo standard error of that gap
    (training and held-out noise combined).  ``grid_v`` and ``xi`` give the
    estimated correction function, anchored to 0 at the grid midpoint.
    """

    gaps: np.ndarray
    gap_ses: np.ndarray
    predicted: np.ndarray
    simulated: np.ndarray
    grid_v: np.ndarray
    xi: np.ndarray
    intercept: float

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.gaps)))


def _interp_coords(grid: np.ndarray, x: float) -> tuple[int, float]:
    """Lower node index and upper weight for linear interpolation at ``x``."""
    if x <= grid[0]:
        return 0, 0.0
    if x >= grid[-1]:
        return len(grid) - 2, 1.0
    hi = int(np.searchsorted(grid, x, side="right"))
    lo = hi - 1
    w = (x - grid[lo]) / (grid[hi] - grid[lo])
    return lo, float(w)


def xi_structure_check(
    theta: float,
    eta_dist: EtaDistribution,
    budgets: Sequence[BudgetSet],
    mc_draws: int = 1_000_000,
    *,
    grid_size: int = 81,
    v_bounds: tuple[float, float] | None = None,
    seed: int = 0,
) -> XiCheckResult:
    """Nonparametric check of the telescoping kink-correction structure.

    For two-segment budgets, the expected log income decomposes as
    ``a + theta * log(rho_2) + xi(v_1) - xi(v_2)`` with
    ``v_j = log(K) - theta * log(rho_j)`` and a correction function ``xi``
    that depends only on the shock distribution.  The check estimates ``xi``
    on a grid (up to an additive constant) from Monte Carlo means of a
    training family that varies the first-segment slope at a fixed second
    segment, then predicts the mean log income of the held-out ``budgets``
    and returns the gaps, which must be within Monte Carlo error.

    ``v_bounds`` optionally pins the interpolation grid; held-out arguments
    outside it raise :class:`GridError`.  By default the grid is built to
    cover all held-out arguments.
    """

    if theta <= 0:
        raise DomainError("theta must be positive")
    if grid_size < 2:
        raise DomainError("grid_size must be at least 2")
    args: list[float] = []
    for b in budgets:
        if b.J == 1:
            continue
        if b.J != 2:
            raise DomainError("held-out budgets must have one or two segments")
        log_kink = math.log(b.kinks[0])
        args.append(log_kink - theta * math.log(b.slopes[0]))
        args.append(log_kink - theta * math.log(b.slopes[1]))

    if v_bounds is not None:
        v_lo, v_hi = float(v_bounds[0]), float(v_bounds[1])
        if v_hi <= v_lo:
            raise DomainError("v_bounds must be an increasing pair")
        outside = [x for x in args if x < v_lo - 1e-12 or x > v_hi + 1e-12]
        if outside:
            raise GridError(
                f"{len(outside)} held-out argument(s) fall outside the grid "
                f"[{v_lo:g}, {v_hi:g}]"
            )
    elif args:
        v_hi = max(args)
        spread = max(v_hi - min(args), 1e-6)
        v_lo = min(args) - 0.05 * spread
    else:
        v_lo = eta_dist.mu - 2.0 * eta_dist.sigma
        v_hi = eta_dist.mu + 2.0 * eta_dist.sigma

    grid = np.linspace(v_lo, v_hi, grid_size)

    # Training family: fixed second segment and kink, first-segment slope
    # swept so that the correction argument lands on each grid node.  The
    # top node has equal slopes, i.e. a linear budget.
    rho2_tr = 0.5
    log_kink_tr = v_hi + theta * math.log(rho2_tr)
    kink_tr = math.exp(log_kink_tr)

    means = np.empty(grid_size)
    ses = np.empty(grid_size)
    for g in range(grid_size):
        if g == grid_size - 1:
            b_tr = BudgetSet((rho2_tr,), (), (1.0,))
        else:
            rho1 = math.exp((log_kink_tr - grid[g]) / theta)
            b_tr = BudgetSet(
                (rho1, rho2_tr),
                (kink_tr,),
                (1.0, 1.0 + (rho1 - rho2_tr) * kink_tr),
            )
        eta = eta_dist.sample(np.random.default_rng([seed, 1, g]), mc_draws)
        log_income = np.log(utility_max_income(b_tr, theta, eta))
        means[g] = log_income.mean()
        ses[g] = log_income.std(ddof=1) / math.sqrt(mc_draws)

    intercept = means[-1] - theta * math.log(rho2_tr)

    n_out = len(budgets)
    gaps = np.empty(n_out)
    gap_ses = np.empty(n_out)
    predicted = np.empty(n_out)
    simulated = np.empty(n_out)
    for j, b in enumerate(budgets):
        coefs = np.zeros(grid_size)
        coefs[-1] += 1.0  # the intercept estimate reuses the top node
        pred = intercept + theta * math.log(b.slopes[-1])
        if b.J == 2:
            log_kink = math.log(b.kinks[0])
            for sign, rho in ((1.0, b.slopes[0]), (-1.0, b.slopes[1])):
                v = log_kink - theta * math.log(rho)
                if v < grid[0] - 1e-12 or v > grid[-1] + 1e-12:
                    raise GridError(
                        f"held-out argument {v:g} outside grid "
                        f"[{grid[0]:g}, {grid[-1]:g}]"
                    )
                lo, w = _interp_coords(grid, v)
                pred += sign * ((1.0 - w) * means[lo] + w * means[lo + 1])
                coefs[lo] += sign * (1.0 - w)
                coefs[lo + 1] += sign * w
        eta = eta_dist.sample(np.random.default_rng([seed, 2, j]), mc_draws)
        log_income = np.log(utility_max_income(b, theta, eta))
        m_hold = log_income.mean()
        se_hold = log_income.std(ddof=1) / math.sqrt(mc_draws)
        predicted[j] = pred
        simulated[j] = m_hold
        gaps[j] = m_hold - pred
        gap_ses[j] = math.sqrt(float(np.sum(coefs**2 * ses**2)) + se_hold**2)

    mid = (grid_size - 1) // 2
    return XiCheckResult(
        gaps=gaps,
        gap_ses=gap_ses,
        predicted=predicted,
        simulated=simulated,
        grid_v=grid,
        xi=means - means[mid],
        intercept=intercept,
    )
