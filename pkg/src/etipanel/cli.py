"""Batch front door: estimate, simulate, diagnose, and budget subcommands.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
failure.  A ``--config`` file holds ``key = value`` lines (flat TOML/INI
style, ``#`` comments and ``[section]`` headers tolerated) whose keys are
the long option names; explicit command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .budget import Spec, THETA_INDEX
from .debias import DEFAULT_LAMBDA_GRID, first_significant_lambda, sweep, zeta_diagnostic
from .exceptions import (
    ConfigError,
    DomainError,
    GridError,
    JoinError,
    NonInvertibleWbar,
    ParseError,
    SingularSystem,
)
from .io import (
    ingest,
    read_schedule_csv,
    write_budget_csv,
    write_report_csv,
    write_report_json,
    write_simulated_panel,
    write_zeta_individuals_csv,
    write_zeta_quantiles_csv,
)
from .budget import budget_from_schedule
from .ridge import ridge_fit
from .synthetic import DGPConfig, generate_panel

__all__ = ["RunConfig", "run_estimate", "run_diagnose", "run_simulate", "run_budget", "main"]

logger = logging.getLogger(__name__)

DEFAULT_MIN_OBS = 15
DEFAULT_Z = 1.96
DEFAULT_DIAGNOSE_LAMBDA = 1e-7
DEFAULT_ZETA_THRESHOLD = 0.5


@dataclass
class RunConfig:
    """Validated options of an estimation, diagnosis, or simulation run."""

    panel_path: Path | None = None
    budget_path: Path | None = None
    schedule_path: Path | None = None
    spec: Spec = Spec.A
    penalty: str = "scaled"
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    min_obs: int = DEFAULT_MIN_OBS
    z: float = DEFAULT_Z
    out_dir: Path = field(default_factory=lambda: Path("."))
    seed: int = 0

    def __post_init__(self):
        self.spec = Spec.from_string(self.spec)
        grid = sorted(set(float(l) for l in self.lambda_grid))
        if not grid:
            raise ConfigError("lambda grid must not be empty")
        if any(l < 0 for l in grid):
            raise ConfigError("lambda values must be non-negative")
        self.lambda_grid = tuple(grid)
        if self.penalty not in ("unit", "scaled"):
            raise ConfigError("penalty must be 'unit' or 'scaled'")
        if self.min_obs < 1:
            raise ConfigError("min-obs must be at least 1")
        if 0.0 in self.lambda_grid and self.min_obs < self.spec.dim:
            raise ConfigError(
                f"min-obs must be at least {self.spec.dim} (the regressor "
                "dimension) when the grid includes lambda = 0"
            )
        if self.z <= 0:
            raise ConfigError("z must be positive")
        self.out_dir = Path(self.out_dir)


def _ingest(config: RunConfig):
    if config.panel_path is None:
        raise ConfigError("a panel file is required")
    return ingest(
        config.panel_path,
        budget_path=config.budget_path,
        schedule_path=config.schedule_path,
        spec=config.spec,
        min_obs=config.min_obs,
    )


def run_estimate(config: RunConfig) -> dict[str, Path]:
    """Sweep the penalty grid and write the report CSV and JSON."""
    result = _ingest(config)
    if not result.series:
        raise DomainError("no individuals left after the minimum-observation filter")
    entries = sweep(
        result.series, config.lambda_grid, spec=config.spec, mode=config.penalty
    )
    failures = [e for e in entries if not e.ok]
    for entry in failures:
        logger.warning("lambda=%g failed: %s", entry.lam, entry.error)
    if len(failures) == len(entries):
        raise SingularSystem(
            "estimation failed at every grid value; first error: "
            + str(failures[0].error)
        )
    config.out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = config.out_dir / f"report_spec_{config.spec.value}.csv"
    json_path = config.out_dir / f"report_spec_{config.spec.value}.json"
    write_report_csv(csv_path, entries, config.spec, z=config.z)
    write_report_json(
        json_path,
        entries,
        config.spec,
        penalty=config.penalty,
        z=config.z,
        n_dropped=len(result.dropped_ids),
    )
    flagged = first_significant_lambda(entries, THETA_INDEX, config.z)
    if flagged is None:
        logger.info("no grid value reaches |theta|/se >= %g", config.z)
    else:
        logger.info("first significant lambda: %g", flagged)
    return {"csv": csv_path, "json": json_path}


def run_diagnose(
    config: RunConfig,
    lam: float = DEFAULT_DIAGNOSE_LAMBDA,
    threshold: float = DEFAULT_ZETA_THRESHOLD,
) -> dict[str, Path]:
    """Write the identification-score quantile curve and per-individual scores."""
    result = _ingest(config)
    if not result.series:
        raise DomainError("no individuals left after the minimum-observation filter")
    fits = [ridge_fit(s, lam, config.penalty) for s in result.series]
    diag = zeta_diagnostic(fits, THETA_INDEX)
    flagged = diag.flagged(threshold)
    if flagged:
        logger.info(
            "%d individual(s) above zeta threshold %g: weakly identified",
            len(flagged),
            threshold,
        )
    config.out_dir.mkdir(parents=True, exist_ok=True)
    quant_path = config.out_dir / "zeta_quantiles.csv"
    indiv_path = config.out_dir / "zeta_individuals.csv"
    write_zeta_quantiles_csv(quant_path, diag)
    write_zeta_individuals_csv(indiv_path, diag, threshold)
    return {"quantiles": quant_path, "individuals": indiv_path}


def run_simulate(config: RunConfig, dgp: DGPConfig) -> dict[str, Path]:
    """Generate a synthetic panel and write the files :func:`ingest` consumes."""
    panel = generate_panel(dgp, with_budgets=True)
    return write_simulated_panel(config.out_dir, panel)


def run_budget(config: RunConfig, out_file: Path) -> Path:
    """Convert a schedule file into the budget-set file format."""
    if config.schedule_path is None:
        raise ConfigError("budget conversion needs --schedules")
    schedules = read_schedule_csv(config.schedule_path)
    budgets = {}
    for key, sched in schedules.items():
        try:
            budgets[key] = budget_from_schedule(sched)
        except DomainError as exc:
            raise ParseError(
                f"{config.schedule_path}: schedule of id={key[0]} year={key[1]}: {exc}"
            ) from exc
    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    write_budget_csv(out_file, budgets)
    return out_file


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"bad lambda grid {text!r}") from None


def _read_config_file(path) -> dict[str, str]:
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip().strip("'\"")
    return values


def build_parser() -> _Parser:
    parser = _Parser(prog="etipanel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key = value option file")
        p.add_argument("--spec", choices=["a", "b"], default="a")
        p.add_argument("--penalty", choices=["unit", "scaled"], default="scaled")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--min-obs", type=int, default=DEFAULT_MIN_OBS)
        p.add_argument("--z", type=float, default=DEFAULT_Z)
        p.add_argument("--seed", type=int, default=0)

    est = sub.add_parser("estimate", help="sweep the penalty grid and write reports")
    common(est)
    est.add_argument("--panel", type=Path, required=False)
    est.add_argument("--budgets", type=Path)
    est.add_argument("--schedules", type=Path)
    est.add_argument(
        "--lambda-grid",
        type=str,
        default=None,
        help="comma-separated penalty values (default: the reference grid)",
    )

    diag = sub.add_parser("diagnose", help="per-individual identification scores")
    common(diag)
    diag.add_argument("--panel", type=Path, required=False)
    diag.add_argument("--budgets", type=Path)
    diag.add_argument("--schedules", type=Path)
    diag.add_argument("--lam", type=float, default=DEFAULT_DIAGNOSE_LAMBDA)
    diag.add_argument("--zeta-threshold", type=float, default=DEFAULT_ZETA_THRESHOLD)

    sim = sub.add_parser("simulate", help="write a synthetic panel with known truth")
    common(sim)
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--periods", type=int, default=15)
    sim.add_argument("--generator", choices=["reduced", "structural"], default="reduced")
    sim.add_argument("--endogeneity", type=float, default=0.0)
    sim.add_argument("--n-weak", type=int, default=0)
    sim.add_argument("--noise-sigma", type=float, default=0.2)
    sim.add_argument("--theta-mean", type=float, default=0.6)
    sim.add_argument("--base-year", type=int, default=1977)

    bud = sub.add_parser("budget", help="convert a schedule file to budget sets")
    common(bud)
    bud.add_argument("--schedules", type=Path, required=False)
    bud.add_argument("--out-file", type=Path, default=None)

    return parser


def _apply_config_file(parser, argv):
    if "--config" not in argv:
        return argv
    # peek only; argparse applies defaults afterwards
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ConfigError("--config needs a path")
    values = _read_config_file(argv[idx + 1])
    known = {
        action.dest
        for sub_action in parser._subparsers._group_actions
        for sub in sub_action.choices.values()
        for action in sub._actions
    }
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for sub_action in parser._subparsers._group_actions:
        for sub in sub_action.choices.values():
            sub.set_defaults(
                **{k: v for k, v in values.items()
                   if k in {a.dest for a in sub._actions}}
            )
    return argv


def _coerce(args):
    """Re-apply argparse types to values that came from a config file."""
    for key in ("min_obs", "seed", "n", "periods", "n_weak", "base_year"):
        if hasattr(args, key) and isinstance(getattr(args, key), str):
            setattr(args, key, int(getattr(args, key)))
    for key in (
        "z",
        "lam",
        "zeta_threshold",
        "endogeneity",
        "noise_sigma",
        "theta_mean",
    ):
        if hasattr(args, key) and isinstance(getattr(args, key), str):
            setattr(args, key, float(getattr(args, key)))
    for key in ("panel", "budgets", "schedules", "out", "out_file", "config"):
        if hasattr(args, key) and isinstance(getattr(args, key), str):
            setattr(args, key, Path(getattr(args, key)))


def _run_config_from(args) -> RunConfig:
    grid = DEFAULT_LAMBDA_GRID
    if getattr(args, "lambda_grid", None):
        raw = args.lambda_grid
        grid = _parse_grid(raw) if isinstance(raw, str) else raw
    return RunConfig(
        panel_path=getattr(args, "panel", None),
        budget_path=getattr(args, "budgets", None),
        schedule_path=getattr(args, "schedules", None),
        spec=args.spec,
        penalty=args.penalty,
        lambda_grid=grid,
        min_obs=args.min_obs,
        z=args.z,
        out_dir=args.out,
        seed=args.seed,
    )


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        _coerce(args)
        if args.command == "estimate":
            config = _run_config_from(args)
            paths = run_estimate(config)
            print(f"wrote {paths['csv']} and {paths['json']}")
        elif args.command == "diagnose":
            config = _run_config_from(args)
            paths = run_diagnose(config, lam=args.lam, threshold=args.zeta_threshold)
            print(f"wrote {paths['quantiles']} and {paths['individuals']}")
        elif args.command == "simulate":
            config = _run_config_from(args)
            dgp = DGPConfig(
                n=args.n,
                T=args.periods,
                spec=config.spec,
                generator=args.generator,
                endogeneity=args.endogeneity,
                n_weak=args.n_weak,
                noise_sigma=args.noise_sigma,
                theta_mean=args.theta_mean,
                base_year=args.base_year,
                seed=args.seed,
            )
            paths = run_simulate(config, dgp)
            print("wrote " + ", ".join(str(p) for p in paths.values()))
        elif args.command == "budget":
            config = _run_config_from(args)
            out_file = args.out_file or (config.out_dir / "budgets.csv")
            path = run_budget(config, out_file)
            print(f"wrote {path}")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, JoinError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (SingularSystem, NonInvertibleWbar, GridError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entry():
    raise SystemExit(main())
