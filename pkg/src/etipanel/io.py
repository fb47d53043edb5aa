"""CSV wire formats, ingestion, and report serialization.

Formats (all UTF-8 with a header row):

* panel:    ``id,year,income`` — taxable income in levels, logged at ingest.
* budget:   ``id,year,segment_index,slope,right_kink,virtual_income`` —
  one row per segment, ``right_kink`` empty on the last (unbounded) segment.
* schedule: ``id,year,threshold,marginal_rate,nonlabor_income``.
* truth:    ``id`` plus one column per true coefficient.

Numbers are serialized with 17 significant digits so that files round-trip
to the exact in-memory doubles.  All writes are atomic (write to a
temporary file, then rename).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .budget import (
    BudgetSet,
    Spec,
    TaxSchedule,
    budget_from_schedule,
    regressors,
    validate,
)
from .debias import SweepEntry, ZetaDiagnostic, first_significant_lambda
from .exceptions import ConfigError, DomainError, JoinError, ParseError
from .ridge import PanelSeries
from .synthetic import SimulatedPanel, TruthRecord

__all__ = [
    "IngestResult",
    "ingest",
    "read_panel_csv",
    "read_budget_csv",
    "read_schedule_csv",
    "read_truth_csv",
    "read_report_csv",
    "write_panel_csv",
    "write_budget_csv",
    "write_schedule_csv",
    "write_truth_csv",
    "write_report_csv",
    "write_report_json",
    "write_zeta_quantiles_csv",
    "write_zeta_individuals_csv",
    "write_simulated_panel",
]

logger = logging.getLogger(__name__)

PANEL_COLUMNS = ["id", "year", "income"]
BUDGET_COLUMNS = ["id", "year", "segment_index", "slope", "right_kink", "virtual_income"]
SCHEDULE_COLUMNS = ["id", "year", "threshold", "marginal_rate", "nonlabor_income"]


def _fmt(x: float) -> str:
    """17 significant digits: lossless round-trip for doubles."""
    return format(float(x), ".17g")


@contextmanager
def _atomic_open(path):
    """Write-then-rename so readers never observe a partial file."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp.{os.getpid()}")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as handle:
            yield handle
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _id_sort_key(ident):
    s = str(ident)
    try:
        return (0, int(s), "")
    except ValueError:
        return (1, 0, s)


def _check_header(path, fieldnames, expected):
    if fieldnames is None:
        raise ParseError(f"{path}: empty file, expected header {expected}")
    if list(fieldnames) != expected:
        raise ParseError(f"{path}: header {list(fieldnames)} does not match {expected}")


def _parse_float(value, path, line, column, *, positive=False):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ParseError(f"{path}:{line}: bad {column} value {value!r}") from None
    if not math.isfinite(x):
        raise ParseError(f"{path}:{line}: non-finite {column} value {value!r}")
    if positive and x <= 0:
        raise ParseError(f"{path}:{line}: {column} must be positive, got {value!r}")
    return x


def _parse_int(value, path, line, column):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ParseError(f"{path}:{line}: bad {column} value {value!r}") from None


# ---------------------------------------------------------------------------
# readers


def read_panel_csv(path) -> list[tuple[str, int, float]]:
    """Outcome rows ``(id, year, income)`` with incomes validated positive."""
    rows = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        _check_header(path, reader.fieldnames, PANEL_COLUMNS)
        for line, row in enumerate(reader, start=2):
            ident = row["id"]
            year = _parse_int(row["year"], path, line, "year")
            income = _parse_float(row["income"], path, line, "income", positive=True)
            rows.append((ident, year, income))
    return rows


def read_budget_csv(path) -> dict[tuple[str, int], BudgetSet]:
    """Budget sets keyed by ``(id, year)``, validated segment by segment."""
    groups: dict[tuple[str, int], list] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        _check_header(path, reader.fieldnames, BUDGET_COLUMNS)
        for line, row in enumerate(reader, start=2):
            key = (row["id"], _parse_int(row["year"], path, line, "year"))
            index = _parse_int(row["segment_index"], path, line, "segment_index")
            slope = _parse_float(row["slope"], path, line, "slope", positive=True)
            kink_raw = (row["right_kink"] or "").strip()
            kink = (
                None
                if kink_raw == ""
                else _parse_float(kink_raw, path, line, "right_kink", positive=True)
            )
            virtual = _parse_float(
                row["virtual_income"], path, line, "virtual_income", positive=True
            )
            groups.setdefault(key, []).append((index, slope, kink, virtual, line))

    budgets = {}
    for key, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        first_line = rows[0][4]
        if [r[0] for r in rows] != list(range(1, len(rows) + 1)):
            raise ParseError(
                f"{path}:{first_line}: segments of id={key[0]} year={key[1]} "
                "must be indexed 1..J"
            )
        for index, _, kink, _, line in rows:
            last = index == len(rows)
            if last and kink is not None:
                raise ParseError(
                    f"{path}:{line}: last segment must leave right_kink empty"
                )
            if not last and kink is None:
                raise ParseError(f"{path}:{line}: interior segment needs a right_kink")
        b = BudgetSet(
            tuple(r[1] for r in rows),
            tuple(r[2] for r in rows[:-1]),
            tuple(r[3] for r in rows),
        )
        violations = validate(b)
        if violations:
            raise ParseError(
                f"{path}:{first_line}: budget set of id={key[0]} year={key[1]} "
                f"violates {violations}"
            )
        budgets[key] = b
    return budgets


def read_schedule_csv(path) -> dict[tuple[str, int], TaxSchedule]:
    """Tax schedules keyed by ``(id, year)``."""
    groups: dict[tuple[str, int], list] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        _check_header(path, reader.fieldnames, SCHEDULE_COLUMNS)
        for line, row in enumerate(reader, start=2):
            key = (row["id"], _parse_int(row["year"], path, line, "year"))
            threshold = _parse_float(row["threshold"], path, line, "threshold")
            rate = _parse_float(row["marginal_rate"], path, line, "marginal_rate")
            nonlabor = _parse_float(
                row["nonlabor_income"], path, line, "nonlabor_income", positive=True
            )
            groups.setdefault(key, []).append((threshold, rate, nonlabor, line))

    schedules = {}
    for key, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        first_line = rows[0][3]
        nonlabor = rows[0][2]
        if any(r[2] != nonlabor for r in rows):
            raise ParseError(
                f"{path}:{first_line}: nonlabor_income must be constant within "
                f"id={key[0]} year={key[1]}"
            )
        try:
            schedules[key] = TaxSchedule(
                tuple((r[0], r[1]) for r in rows), nonlabor
            )
        except DomainError as exc:
            raise ParseError(
                f"{path}:{first_line}: schedule of id={key[0]} year={key[1]}: {exc}"
            ) from exc
    return schedules


def read_truth_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """``(ids, coefficient names, betas)`` from a truth-record file."""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or reader.fieldnames[0] != "id":
            raise ParseError(f"{path}: truth file must start with an id column")
        names = list(reader.fieldnames[1:])
        ids, rows = [], []
        for line, row in enumerate(reader, start=2):
            ids.append(row["id"])
            rows.append(
                [_parse_float(row[nm], path, line, nm) if row[nm] != "nan"
                 else math.nan for nm in names]
            )
    return ids, names, np.array(rows)


def read_report_csv(path) -> list[dict]:
    """Report rows as dicts of floats (empty cells become NaN)."""
    out = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            parsed = {}
            for key, value in row.items():
                if key == "significant":
                    parsed[key] = value
                elif value is None or value == "":
                    parsed[key] = math.nan
                else:
                    parsed[key] = float(value)
            out.append(parsed)
    return out


# ---------------------------------------------------------------------------
# writers


def write_panel_csv(path, rows: Iterable[tuple[object, int, float]]):
    with _atomic_open(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(PANEL_COLUMNS)
        for ident, year, income in rows:
            writer.writerow([ident, year, _fmt(income)])


def write_budget_csv(path, budgets: dict[tuple[object, int], BudgetSet]):
    with _atomic_open(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(BUDGET_COLUMNS)
        for (ident, year), b in sorted(
            budgets.items(), key=lambda kv: (_id_sort_key(kv[0][0]), kv[0][1])
        ):
            for j in range(b.J):
                kink = "" if j == b.J - 1 else _fmt(b.kinks[j])
                writer.writerow(
                    [
                        ident,
                        year,
                        j + 1,
                        _fmt(b.slopes[j]),
                        kink,
                        _fmt(b.virtual_incomes[j]),
                    ]
                )


def write_schedule_csv(path, schedules: dict[tuple[object, int], TaxSchedule]):
    with _atomic_open(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(SCHEDULE_COLUMNS)
        for (ident, year), sched in sorted(
            schedules.items(), key=lambda kv: (_id_sort_key(kv[0][0]), kv[0][1])
        ):
            for threshold, rate in sched.brackets:
                writer.writerow(
                    [
                        ident,
                        year,
                        _fmt(threshold),
                        _fmt(rate),
                        _fmt(sched.nonlabor_income),
                    ]
                )


def write_truth_csv(path, truth: TruthRecord):
    names = truth.spec.coef_names
    with _atomic_open(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", *names])
        for ident, beta in zip(truth.ids, truth.betas):
            writer.writerow([ident, *(_fmt(x) if math.isfinite(x) else "nan" for x in beta)])


def write_simulated_panel(outdir, panel: SimulatedPanel) -> dict[str, Path]:
    """Write panel, budget, and truth files for a simulated panel."""
    if panel.budgets is None:
        raise ConfigError("simulated panel was generated without budget sets")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    base_year = panel.config.base_year
    rows = []
    for s in panel.series:
        for t, y in zip(s.t, s.y):
            rows.append((s.ident, base_year + int(t), math.exp(float(y))))
    paths = {
        "panel": outdir / "panel.csv",
        "budgets": outdir / "budgets.csv",
        "truth": outdir / "truth.csv",
    }
    write_panel_csv(paths["panel"], rows)
    write_budget_csv(paths["budgets"], panel.budgets)
    write_truth_csv(paths["truth"], panel.truth)
    return paths


def _entry_significant(entry: SweepEntry, theta_pos: int, z: float) -> bool | None:
    if entry.report is None:
        return None
    se = entry.report.std_errors[theta_pos]
    return bool(se > 0 and abs(entry.report.beta_tilde[theta_pos]) / se >= z)


def write_report_csv(path, entries: Sequence[SweepEntry], spec: Spec, z: float = 1.96):
    """One row per grid value: nondebiased, debiased, and SE per coefficient.

    Elasticity columns come first so the header starts with
    ``lambda,nondebiased_theta,debiased_theta,se_theta``.  Rows of failed
    grid values keep their lambda and leave the value cells empty.
    """

    names = spec.report_names
    positions = [spec.coef_names.index(nm) for nm in names]
    header = ["lambda"]
    for nm in names:
        header += [f"nondebiased_{nm}", f"debiased_{nm}", f"se_{nm}"]
    header.append("significant")
    theta_pos = spec.coef_names.index("theta")

    with _atomic_open(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for entry in entries:
            row = [_fmt(entry.lam)]
            if entry.report is None:
                row += [""] * (3 * len(names) + 1)
            else:
                for pos in positions:
                    row += [
                        _fmt(entry.report.naive_avg[pos]),
                        _fmt(entry.report.beta_tilde[pos]),
                        _fmt(entry.report.std_errors[pos]),
                    ]
                row.append(str(_entry_significant(entry, theta_pos, z)).lower())
            writer.writerow(row)


def write_report_json(
    path,
    entries: Sequence[SweepEntry],
    spec: Spec,
    *,
    penalty: str,
    z: float = 1.96,
    n_dropped: int | None = None,
):
    """Full structured report: every matrix of every grid value."""
    theta_pos = spec.coef_names.index("theta")
    payload = {
        "spec": spec.value,
        "coef_names": list(spec.coef_names),
        "penalty": penalty,
        "z": z,
        "n_dropped_individuals": n_dropped,
        "first_significant_lambda": first_significant_lambda(entries, theta_pos, z),
        "entries": [],
    }
    for entry in entries:
        if entry.report is None:
            payload["entries"].append({"lambda": entry.lam, "error": entry.error})
            continue
        r = entry.report
        payload["entries"].append(
            {
                "lambda": entry.lam,
                "error": None,
                "n": r.n,
                "naive_avg": r.naive_avg.tolist(),
                "beta_tilde": r.beta_tilde.tolist(),
                "std_errors": r.std_errors.tolist(),
                "W_bar": r.W_bar.tolist(),
                "V_hat": r.V_hat.tolist(),
                "significant": _entry_significant(entry, theta_pos, z),
            }
        )
    with _atomic_open(path) as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def write_zeta_quantiles_csv(path, diag: ZetaDiagnostic):
    with _atomic_open(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["quantile", "zeta"])
        for p, q in diag.quantiles:
            writer.writerow([_fmt(p), _fmt(q)])


def write_zeta_individuals_csv(path, diag: ZetaDiagnostic, threshold: float = 0.5):
    with _atomic_open(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "zeta", "weakly_identified"])
        order = sorted(range(len(diag.ids)), key=lambda i: _id_sort_key(diag.ids[i]))
        for i in order:
            writer.writerow(
                [
                    diag.ids[i],
                    _fmt(diag.zeta[i]),
                    str(bool(diag.zeta[i] > threshold)).lower(),
                ]
            )


# ---------------------------------------------------------------------------
# ingestion


@dataclass(eq=False)
class IngestResult:
    """Joined panel plus bookkeeping about what was dropped."""

    series: list[PanelSeries]
    dropped_ids: list
    n_outcome_rows: int

    @property
    def n_individuals(self) -> int:
        return len(self.series)


def ingest(
    panel_path,
    budget_path=None,
    schedule_path=None,
    *,
    spec: Spec,
    min_obs: int = 15,
) -> IngestResult:
    """Join outcome rows to budget sets and build per-individual series.

    Budget sets come from a budget file or are built from a schedule file
    (exactly one must be given).  Outcomes without a matching ``(id, year)``
    budget raise :class:`JoinError`; individuals with fewer than ``min_obs``
    observations are dropped with a logged count.  Time indices count years
    since each individual's first observed year.
    """

    spec = Spec.from_string(spec)
    if (budget_path is None) == (schedule_path is None):
        raise ConfigError("provide exactly one of budget_path or schedule_path")
    if budget_path is not None:
        budgets = read_budget_csv(budget_path)
        source = budget_path
    else:
        schedules = read_schedule_csv(schedule_path)
        budgets = {}
        for key, sched in schedules.items():
            try:
                budgets[key] = budget_from_schedule(sched)
            except DomainError as exc:
                raise ParseError(
                    f"{schedule_path}: schedule of id={key[0]} year={key[1]}: {exc}"
                ) from exc
        source = schedule_path

    outcome_rows = read_panel_csv(panel_path)
    by_id: dict[str, dict[int, float]] = {}
    for ident, year, income in outcome_rows:
        periods = by_id.setdefault(ident, {})
        if year in periods:
            raise ParseError(
                f"{panel_path}: duplicate outcome row for id={ident} year={year}"
            )
        periods[year] = income

    series = []
    dropped = []
    for ident in sorted(by_id, key=_id_sort_key):
        periods = by_id[ident]
        if len(periods) < min_obs:
            dropped.append(ident)
            continue
        years = sorted(periods)
        base = years[0]
        rows = []
        for year in years:
            key = (ident, year)
            if key not in budgets:
                raise JoinError(
                    f"outcome for id={ident} year={year} has no budget set in {source}"
                )
            t = year - base
            row = regressors(budgets[key], t, spec)
            rows.append((t, math.log(periods[year]), row))
        t_arr = np.array([r[0] for r in rows], dtype=int)
        y_arr = np.array([r[1] for r in rows])
        X_arr = np.vstack([r[2].values for r in rows])
        series.append(PanelSeries(ident, t_arr, y_arr, X_arr, spec))

    if dropped:
        logger.info(
            "dropped %d individual(s) with fewer than %d observations",
            len(dropped),
            min_obs,
        )
    if series:
        pooled = np.vstack([s.X for s in series])
        logger.info(
            "ingested %d individuals, %d rows; mean log last-segment slope %.4f",
            len(series),
            pooled.shape[0],
            float(pooled[:, 1].mean()),
        )
    return IngestResult(
        series=series, dropped_ids=dropped, n_outcome_rows=len(outcome_rows)
    )
