"""Debiased average ridge estimation of heterogeneous taxable-income
elasticities from convex piecewise-linear budget sets.

The package builds budget sets from tax-bracket schedules, converts them
into the regressors of the per-individual log-income regression, fits one
ridge regression per individual, and aggregates the fits into a debiased
average with standard errors, a penalty-grid sweep, and per-individual
identification diagnostics.  A synthetic-data generator with known truth
supports oracle-based verification, and a CLI drives CSV-based batch runs.
"""

from .budget import (
    BudgetSet,
    GAMMA_INDEX,
    RegressorRow,
    Spec,
    TaxSchedule,
    THETA_INDEX,
    budget_from_schedule,
    regressors,
    regressors_spec_a,
    regressors_spec_b,
    validate,
)
from .debias import (
    DEFAULT_LAMBDA_GRID,
    DebiasReport,
    IncomeEffectInterval,
    SweepEntry,
    ZetaDiagnostic,
    debias,
    first_significant_lambda,
    fixed_effects_oracle,
    income_effect_interval,
    sweep,
    variance_alt_check,
    zeta_diagnostic,
)
from .estimator import DebiasedAverageRidge
from .exceptions import (
    ConfigError,
    ConvexityViolation,
    DomainError,
    EtipanelError,
    GridError,
    JoinError,
    NonInvertibleWbar,
    ParseError,
    SingularSystem,
)
from .io import IngestResult, ingest, write_simulated_panel
from .ridge import (
    PanelSeries,
    RidgeFit,
    fitted_residuals,
    penalty,
    ridge_fit,
    second_moment,
)
from .synthetic import (
    BudgetDrawSettings,
    DGPConfig,
    EtaDistribution,
    IndividualParams,
    SimulatedPanel,
    TruthRecord,
    XiCheckResult,
    endogenous_budget_draw,
    generate_panel,
    utility_max_income,
    xi_structure_check,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetSet",
    "TaxSchedule",
    "RegressorRow",
    "Spec",
    "THETA_INDEX",
    "GAMMA_INDEX",
    "budget_from_schedule",
    "regressors",
    "regressors_spec_a",
    "regressors_spec_b",
    "validate",
    "PanelSeries",
    "RidgeFit",
    "second_moment",
    "penalty",
    "ridge_fit",
    "fitted_residuals",
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
    "DebiasedAverageRidge",
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
    "IngestResult",
    "ingest",
    "write_simulated_panel",
    "EtipanelError",
    "ConfigError",
    "DomainError",
    "ConvexityViolation",
    "ParseError",
    "JoinError",
    "SingularSystem",
    "NonInvertibleWbar",
    "GridError",
]
