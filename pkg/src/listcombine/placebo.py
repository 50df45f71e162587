"""Placebo tests of the identifying assumptions and related comparisons.

Test I compares item counts of "Yes" answerers across the two lists; under
the design assumptions the difference is exactly one. Test II checks that
direct answers do not depend on the list treatment. Both use unpooled
two-sample variances and two-sided normal p-values.
"""

from __future__ import annotations

import enum
import math
import sys
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .data import CellSummary, Dataset
from .errors import DegenerateCells, InsufficientConfessors, MethodMismatch, OutOfDomain, ZeroPValue
from .estimators import EstimateReport
from .kernels import Probability, chi_square_sf, two_sided_normal_p

P_FLOOR = sys.float_info.min
FLOORED = "p_value_floored"
ZERO_SE = "zero_standard_error"


class PlaceboTest(str, enum.Enum):
    ONE = "TestI"
    TWO = "TestII"
    CROSS_STUDY = "CrossStudy"


@dataclass(frozen=True)
class PlaceboReport:
    test: PlaceboTest
    statistic: float
    std_error: float
    p_value: Probability
    n_used: int
    null_value: float
    cell_sizes: tuple[int, int] = (0, 0)
    flags: tuple[str, ...] = ()
    question: str | None = None
    study: str | None = None
    method: str | None = None

    def rejects(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


def _normal_test(test, statistic, se, null, n_used, cell_sizes) -> PlaceboReport:
    flags = []
    gap = abs(statistic - null)
    if se > 0.0:
        p = two_sided_normal_p(gap / se)
    else:
        flags.append(ZERO_SE)
        p = 1.0 if gap == 0.0 else 0.0
    if p < P_FLOOR:
        p = P_FLOOR
        flags.append(FLOORED)
    if gap == 0.0:
        p = 1.0
    return PlaceboReport(PlaceboTest(test), statistic, se, Probability(p), n_used, null, cell_sizes, tuple(flags))


def placebo_test_one(cells: CellSummary, alpha: float = 0.05) -> PlaceboReport:
    """Test that the list difference among "Yes" answerers equals one.

    ``alpha`` is accepted for interface symmetry; the report carries the
    p-value and :meth:`PlaceboReport.rejects` applies a level.
    """
    t, c = cells.cell(1, 1), cells.cell(0, 1)
    if t.count < 2 or c.count < 2:
        raise InsufficientConfessors(
            f"Placebo Test I needs >= 2 'Yes' respondents per list (have {t.count} treated, {c.count} control)"
        )
    beta = t.mean - c.mean
    se = math.sqrt(t.variance / t.count + c.variance / c.count)
    return _normal_test(PlaceboTest.ONE, beta, se, 1.0, t.count + c.count, (t.count, c.count))


def placebo_test_two(cells: CellSummary, alpha: float = 0.05) -> PlaceboReport:
    """Test that the "Yes" share is the same under both lists."""
    m, rest = cells.arm(1).count, cells.arm(0).count
    if m < 2 or rest < 2:
        raise DegenerateCells("Placebo Test II needs >= 2 respondents in each treatment arm")
    delta = cells.y_arm_mean(1) - cells.y_arm_mean(0)
    se = math.sqrt(cells.y_arm_variance(1) / m + cells.y_arm_variance(0) / rest)
    return _normal_test(PlaceboTest.TWO, delta, se, 0.0, m + rest, (m, rest))


def fisher_combine(p_values: Iterable[float]) -> tuple[float, Probability]:
    """Fisher's method: ``-2 sum log p`` referred to chi-square with 2k df."""
    ps = [float(p) for p in p_values]
    if not ps:
        raise OutOfDomain("need at least one p-value")
    for p in ps:
        if p == 0.0:
            raise ZeroPValue("a p-value of exactly 0 makes Fisher's statistic infinite")
        if not 0.0 < p <= 1.0:
            raise OutOfDomain(f"p-values must lie in (0, 1], got {p!r}")
    stat = -2.0 * math.fsum(math.log(p) for p in ps)
    return stat, chi_square_sf(stat, 2 * len(ps))


@dataclass(frozen=True)
class FisherResult:
    statistic: float
    p_value: Probability
    df: int
    used: tuple[str, ...]
    dropped: tuple[str, ...]


def run_batch(
    summaries: Mapping[str, CellSummary],
    test: PlaceboTest | str = PlaceboTest.ONE,
    alpha: float = 0.05,
) -> tuple[dict[str, PlaceboReport], dict[str, str]]:
    """Run one placebo test on several questions.

    Returns the reports and, separately, the questions that could not be
    tested with the reason, so one thin cell does not sink the batch.
    """
    fn = placebo_test_one if PlaceboTest(test) is PlaceboTest.ONE else placebo_test_two
    reports, failed = {}, {}
    for label, cells in summaries.items():
        try:
            reports[label] = fn(cells, alpha)
        except DegenerateCells as exc:
            failed[label] = str(exc)
    return reports, failed


def fisher_from_reports(reports: Mapping[str, PlaceboReport], dropped: Iterable[str] = ()) -> FisherResult:
    """Joint test over the questions that produced a report."""
    labels = tuple(reports)
    stat, p = fisher_combine(reports[k].p_value for k in labels)
    return FisherResult(stat, p, 2 * len(labels), labels, tuple(dropped))


def cross_study_difference(report_a: EstimateReport, report_b: EstimateReport) -> PlaceboReport:
    """Difference between two independent studies' estimates of the same quantity."""
    if report_a.method != report_b.method:
        raise MethodMismatch(f"cannot difference {report_a.method.value} and {report_b.method.value}")
    if report_a.question is not None and report_b.question is not None and report_a.question != report_b.question:
        raise MethodMismatch(f"question {report_a.question!r} differs from {report_b.question!r}")
    diff = report_a.estimate - report_b.estimate
    se = math.sqrt(report_a.std_error ** 2 + report_b.std_error ** 2)
    rep = _normal_test(PlaceboTest.CROSS_STUDY, diff, se, 0.0, report_a.n_used + report_b.n_used,
                       (report_a.n_used, report_b.n_used))
    study = None
    if report_a.study is not None or report_b.study is not None:
        study = f"{report_a.study} - {report_b.study}"
    return PlaceboReport(rep.test, rep.statistic, rep.std_error, rep.p_value, rep.n_used, rep.null_value,
                         rep.cell_sizes, rep.flags, report_a.question, study, report_a.method.value)


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    grid = np.union1d(a, b)
    fa = np.searchsorted(np.sort(a), grid, side="right") / a.size
    fb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def placebo_test_one_ks(
    dataset: Dataset,
    permutations: int = 2000,
    seed: int = 0,
) -> tuple[float, float]:
    """Distributional version of Test I with a permutation p-value.

    Compares control-list counts of "Yes" answerers with treatment-list counts
    shifted down by one, using the two-sample Kolmogorov-Smirnov distance.
    Labels are permuted within the "Yes" stratum. Returns
    ``(statistic, p_value)``; the p-value uses the ``(1 + hits) / (1 + B)``
    convention so it is never zero.
    """
    yes = [r for r in dataset.records if r.y_direct == 1]
    treated = np.array([r.v_count - 1 for r in yes if r.z_treat == 1], dtype=float)
    control = np.array([r.v_count for r in yes if r.z_treat == 0], dtype=float)
    if treated.size < 2 or control.size < 2:
        raise InsufficientConfessors("need >= 2 'Yes' respondents per list")
    observed = _ks_statistic(treated, control)
    pooled = np.concatenate([treated, control])
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    hits = 0
    for _ in range(permutations):
        perm = rng.permutation(pooled)
        if _ks_statistic(perm[: treated.size], perm[treated.size:]) >= observed - 1e-12:
            hits += 1
    return observed, (1 + hits) / (1 + permutations)


def p_value_from_summary(estimate: float, std_error: float, null: float = 0.0) -> float:
    """Two-sided normal p-value from a printed (estimate, SE) pair."""
    if std_error <= 0:
        raise OutOfDomain("standard error must be positive")
    return two_sided_normal_p((estimate - null) / std_error)
