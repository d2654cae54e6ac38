"""Model evaluation: discrimination, calibration, per-subgroup reports."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .calibration import ece, l2_distance, variance_adjusted_distance
from .data import DiscreteDataset
from .errors import (
    AllTimestepsSkippedError,
    EmptyInputError,
    NoComparablePairsError,
    ZeroReferenceSurvivalError,
)
from .estimators import censoring_km, km_curve, logrank_one_sample
from .losses import dcal_from_survival, integrated_brier, rps_loss
from .model import HazardModel, survival
from .subgroups import SubgroupSpec, membership


def c_index_from_survival(
    S: np.ndarray, times: np.ndarray, events: np.ndarray, tie_credit: float = 0.0
) -> float:
    """Time-dependent concordance.

    A pair (i, j) with t_i < t_j and an event at t_i is concordant when the
    model gives i the larger predicted CDF at t_i. Ties in the predicted
    CDF earn tie_credit (0 by default, 0.5 for half credit).
    """
    S = np.asarray(S, dtype=np.float64)
    times = np.asarray(times, dtype=np.int64)
    events = np.asarray(events, dtype=bool)
    n = S.shape[0]
    comparable = (times[:, None] < times[None, :]) & events[:, None]
    total = int(comparable.sum())
    if total == 0:
        raise NoComparablePairsError("no comparable pairs")
    F_at_ti = 1.0 - S[:, times]          # [j, i] = F(t_i | x_j)
    F_own = np.diag(F_at_ti)             # F(t_i | x_i)
    better = F_own[:, None] > F_at_ti.T  # [i, j]
    tied = F_own[:, None] == F_at_ti.T
    hits = float(np.sum(comparable & better))
    if tie_credit:
        hits += tie_credit * float(np.sum(comparable & tied))
    return hits / total


def c_index(
    model: HazardModel, dataset: DiscreteDataset, tie_credit: float = 0.0
) -> float:
    return c_index_from_survival(
        survival(model, dataset.features), dataset.times, dataset.events, tie_credit
    )


def total_score(c: float, e: float) -> float:
    """Harmonic mean of discrimination c and calibration complement 1 - e."""
    a, b = float(c), 1.0 - float(e)
    if a + b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


@dataclass(frozen=True)
class EvaluationRow:
    name: str
    kind: str
    size: int
    l2: float | None = None
    var_dist: float | None = None
    ece: float | None = None
    dcal: float | None = None
    brier: float | None = None
    rps: float | None = None
    c_index: float | None = None
    logrank_stat: float | None = None
    logrank_passed: bool | None = None
    total: float | None = None
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple[EvaluationRow, ...]
    tau: int
    bins: int
    significance: float

    @property
    def population_row(self) -> EvaluationRow:
        for row in self.rows:
            if row.kind == "full_population":
                return row
        raise LookupError("no population row")


METRIC_COLUMNS = (
    "l2", "var_dist", "ece", "dcal", "brier", "rps",
    "c_index", "logrank_stat", "logrank_passed", "total",
)


def evaluate(
    model: HazardModel,
    dataset: DiscreteDataset,
    subgroup_specs: list[SubgroupSpec],
    bins: int = 10,
    significance: float = 0.05,
    tie_credit: float = 0.0,
) -> EvaluationReport:
    """Score the model on every subgroup of the dataset.

    Degenerate cells (empty subgroup, no valid variance, no comparable
    pairs, zero reference survival) are left unset and named in flags.
    """
    S_all = survival(model, dataset.features)
    rows = []
    for spec in subgroup_specs:
        mask = membership(spec, dataset)
        size = int(mask.sum())
        if size == 0:
            rows.append(EvaluationRow(spec.name, spec.kind, 0, flags=("empty",)))
            continue
        times = dataset.times[mask]
        events = dataset.events[mask]
        S = S_all[mask]
        marginal = S.mean(axis=0)
        km = km_curve(times, events, dataset.tau)
        flags: list[str] = []

        l2 = l2_distance(marginal, km.values)
        try:
            var_dist = variance_adjusted_distance(marginal, km)
        except AllTimestepsSkippedError:
            var_dist = None
            flags.append("no_valid_variance")
        e = ece(marginal, km.values, M=bins)
        dcal = dcal_from_survival(S, times, events, M=bins)
        G = censoring_km(times, events, dataset.tau)
        brier = integrated_brier(S, times, events, G)
        rps = rps_loss(S, times, events).value
        try:
            ci = c_index_from_survival(S, times, events, tie_credit)
        except NoComparablePairsError:
            ci = None
            flags.append("no_comparable_pairs")
        try:
            lr = logrank_one_sample(times, events, marginal, significance)
            lr_stat, lr_passed = lr.statistic, lr.passed
        except (ZeroReferenceSurvivalError, EmptyInputError):
            lr_stat, lr_passed = None, None
            flags.append("logrank_degenerate")
        total = total_score(ci, e) if ci is not None else None

        rows.append(EvaluationRow(
            spec.name, spec.kind, size,
            l2=l2, var_dist=var_dist, ece=e, dcal=dcal, brier=brier, rps=rps,
            c_index=ci, logrank_stat=lr_stat, logrank_passed=lr_passed,
            total=total, flags=tuple(flags),
        ))
    return EvaluationReport(tuple(rows), dataset.tau, bins, significance)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    return format(float(v), ".17g")


def report_to_delimited(report: EvaluationReport) -> str:
    header = ["name", "kind", "size", *METRIC_COLUMNS, "flags"]
    lines = [",".join(header)]
    for r in report.rows:
        cells = [r.name, r.kind, str(r.size)]
        cells += [_cell(getattr(r, col)) for col in METRIC_COLUMNS]
        cells.append(";".join(r.flags))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def report_to_text(report: EvaluationReport) -> str:
    """Aligned human-readable table."""
    def fmt(v, width=9):
        if v is None:
            return "-".rjust(width)
        if isinstance(v, bool):
            return ("yes" if v else "no").rjust(width)
        if isinstance(v, int):
            return str(v).rjust(width)
        return f"{v:.4f}".rjust(width)

    name_w = max(len("subgroup"), *(len(r.name) for r in report.rows))
    cols = ["size", "l2", "var", "ece", "dcal", "brier", "rps", "cidx", "lrank", "pass", "total"]
    out = ["subgroup".ljust(name_w) + "".join(c.rjust(9) for c in cols)]
    for r in report.rows:
        cells = [
            fmt(r.size), fmt(r.l2), fmt(r.var_dist), fmt(r.ece), fmt(r.dcal),
            fmt(r.brier), fmt(r.rps), fmt(r.c_index), fmt(r.logrank_stat),
            fmt(r.logrank_passed), fmt(r.total),
        ]
        line = r.name.ljust(name_w) + "".join(cells)
        if r.flags:
            line += "   [" + ";".join(r.flags) + "]"
        out.append(line)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Paired comparison of aligned runs
# ---------------------------------------------------------------------------

HIGHER_BETTER = {"c_index": True, "total": True, "logrank_passed": True,
                 "ece": False, "l2": False, "var_dist": False, "dcal": False,
                 "brier": False, "rps": False, "logrank_stat": False}


def paired_outcome(
    a: np.ndarray, b: np.ndarray, significance: float, higher_better: bool
) -> str:
    """win/loss/draw for system A against B from seed-aligned metric values."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diffs = a - b
    if np.all(diffs == 0.0):
        return "draw"
    if np.std(diffs) == 0.0:
        p = 0.0
    else:
        p = float(stats.ttest_rel(a, b).pvalue)
    if p > significance:
        return "draw"
    a_better = diffs.mean() > 0 if higher_better else diffs.mean() < 0
    return "win" if a_better else "loss"


@dataclass(frozen=True)
class ComparisonTable:
    system_a: str
    system_b: str
    metric: str
    significance: float
    outcomes: tuple[tuple[str, str], ...]  # (subgroup, win/loss/draw)
    wins: int = field(init=False, default=0)

    def __post_init__(self):
        object.__setattr__(self, "wins", sum(1 for _, o in self.outcomes if o == "win"))

    @property
    def losses(self) -> int:
        return sum(1 for _, o in self.outcomes if o == "loss")

    @property
    def draws(self) -> int:
        return sum(1 for _, o in self.outcomes if o == "draw")

    def summary(self) -> str:
        return f"{self.wins}-{self.losses}-{self.draws}"
