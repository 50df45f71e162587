"""Prevalence estimators: direct question, standard list, combined list.

Variances here are finite-sample: the combined-estimator variance is the
plug-in asymptotic expression divided by ``n``. Wherever the product of
prevalence and truthful-answer rate appears we plug in the observed "Yes"
share, which equals that product by construction of the estimator and avoids
dividing by a possibly non-positive prevalence estimate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .data import CellSummary
from .dgp import DgpParams, population_moments
from .errors import DegenerateCells, DegenerateParams, InsufficientData, OutOfDomain
from .kernels import std_normal_quantile

# diagnostic flags
OUTSIDE_UNIT = "estimate_outside_unit_interval"
CI_OUTSIDE_UNIT = "ci_outside_unit_interval"
DEGENERATE_CELL = "degenerate_cell"
DIRECT_BOUNDARY = "direct_share_at_boundary"


class Method(str, enum.Enum):
    DIRECT = "Direct"
    STANDARD = "StandardList"
    COMBINED = "CombinedList"


@dataclass(frozen=True)
class EstimateReport:
    method: Method
    estimate: float
    std_error: float
    ci_low: float
    ci_high: float
    n_used: int
    diagnostics: tuple[str, ...] = ()
    alpha: float = 0.05
    question: str | None = None
    study: str | None = None


def wald_ci(estimate: float, std_error: float, alpha: float = 0.05) -> tuple[float, float]:
    """Symmetric normal interval; never truncated to [0, 1]."""
    if not std_error >= 0:
        raise OutOfDomain(f"standard error must be >= 0, got {std_error!r}")
    if not 0.0 < alpha < 1.0:
        raise OutOfDomain(f"alpha must lie in (0, 1), got {alpha!r}")
    half = std_normal_quantile(1.0 - alpha / 2.0) * std_error
    return estimate - half, estimate + half


def _report(method, estimate, se, n, alpha, flags=()) -> EstimateReport:
    lo, hi = wald_ci(estimate, se, alpha)
    flags = list(flags)
    if not 0.0 <= estimate <= 1.0:
        flags.append(OUTSIDE_UNIT)
    if lo < 0.0 or hi > 1.0:
        flags.append(CI_OUTSIDE_UNIT)
    return EstimateReport(Method(method), estimate, se, lo, hi, n, tuple(flags), alpha)


def direct_estimate(cells: CellSummary, alpha: float = 0.05) -> EstimateReport:
    """Share answering "Yes" with the binomial standard error."""
    n = cells.n
    if n < 2:
        raise InsufficientData("direct estimate needs at least two respondents")
    y = cells.y_bar
    flags = [DIRECT_BOUNDARY] if y in (0.0, 1.0) else []
    return _report(Method.DIRECT, y, math.sqrt(y * (1.0 - y) / n), n, alpha, flags)


def standard_list_estimate(cells: CellSummary, alpha: float = 0.05) -> EstimateReport:
    """Difference in mean item counts between treatment and control lists."""
    t, c = cells.arm(1), cells.arm(0)
    if t.count < 2 or c.count < 2:
        raise DegenerateCells("standard list estimate needs >= 2 records in each treatment arm")
    est = t.mean - c.mean
    se = math.sqrt(t.variance / t.count + c.variance / c.count)
    return _report(Method.STANDARD, est, se, cells.n, alpha)


def combined_estimate(cells: CellSummary, alpha: float = 0.05, variance_form: str = "gamma") -> EstimateReport:
    """Direct "Yes" share plus the list-experiment difference among "No" answerers."""
    y = cells.y_bar
    if y == 1.0:
        return _report(Method.COMBINED, 1.0, 0.0, cells.n, alpha, [DEGENERATE_CELL])
    _require_no_cells(cells)
    est = y + (1.0 - y) * (cells.cell(1, 0).mean - cells.cell(0, 0).mean)
    var = _combined_variance(cells, est, variance_form)
    return _report(Method.COMBINED, est, math.sqrt(var), cells.n, alpha)


def combined_variance(cells: CellSummary, variance_form: str = "gamma") -> float:
    """Estimated sampling variance of the combined estimator.

    ``variance_form="gamma"`` is the plug-in formula with the treated share
    ``m / n``::

        (1/n) (1 - est)^2 ybar / (1 - ybar)
            + (1 - ybar) [ s2_10 / m + s2_00 / (n - m) ]

    (``(1/n) s2 / gamma_hat`` is written as ``s2 / m``, the same quantity).
    ``variance_form="cells"`` replaces ``(1 - ybar) s2 / m`` with
    ``(1 - ybar)^2 s2 / n_{z,0}``; the two agree asymptotically.
    """
    y = cells.y_bar
    if y == 1.0:
        return 0.0
    _require_no_cells(cells)
    est = y + (1.0 - y) * (cells.cell(1, 0).mean - cells.cell(0, 0).mean)
    return _combined_variance(cells, est, variance_form)


def _require_no_cells(cells: CellSummary) -> None:
    if cells.cell(1, 0).count < 2 or cells.cell(0, 0).count < 2:
        raise DegenerateCells(
            "combined estimate needs >= 2 'No' respondents in each treatment arm "
            f"(have {cells.cell(1, 0).count} treated, {cells.cell(0, 0).count} control)"
        )


def _combined_variance(cells: CellSummary, est: float, form: str) -> float:
    n, m, y = cells.n, cells.m, cells.y_bar
    c10, c00 = cells.cell(1, 0), cells.cell(0, 0)
    first = (1.0 - est) ** 2 * y / (1.0 - y) / n
    if form == "gamma":
        second = (1.0 - y) * (c10.variance / m + c00.variance / (n - m))
    elif form == "cells":
        second = (1.0 - y) ** 2 * (c10.variance / c10.count + c00.variance / c00.count)
    else:
        raise ValueError(f"unknown variance form {form!r}")
    return first + second


def variance_reduction(se_standard: float, se_combined: float) -> float:
    """Share of the standard-list sampling variance removed by combining."""
    if se_standard == 0:
        raise ZeroDivisionError("standard-list standard error is zero")
    return 1.0 - (se_combined / se_standard) ** 2


def _check_positive(params: DgpParams, mom, cells) -> None:
    if not 0.0 < params.gamma < 1.0:
        raise DegenerateParams("treatment share must lie strictly inside (0, 1)")
    for k in cells:
        if mom[k].mass <= 0.0 or not mom[k].var > 0.0:
            raise DegenerateParams(f"population variance of V in cell {k} is not positive")


def asymptotic_variance_combined(params: DgpParams) -> float:
    """Limit of ``n Var[combined estimate]``.

    With ``q = P(Y = 1)`` and ``D = E[V|1,0] - E[V|0,0]`` the delta method gives
    ``(1 - D)^2 q (1 - q) + (1 - q) [Var(V|1,0)/gamma + Var(V|0,0)/(1-gamma)]``.
    When the design assumptions hold ``1 - D = (1 - mu) / (1 - mu p)`` and
    this is exactly the familiar
    ``(1-mu)^2 mu p / (1 - mu p) + (1 - mu p)[...]``; the general form also
    stays correct when violations are simulated.
    """
    mom = population_moments(params)
    _check_positive(params, mom, [(1, 0), (0, 0)])
    g = params.gamma
    q = mom[(0, 1)].mass
    d = mom[(1, 0)].mean - mom[(0, 0)].mean
    return (1.0 - d) ** 2 * q * (1.0 - q) + (1.0 - q) * (mom[(1, 0)].var / g + mom[(0, 0)].var / (1.0 - g))


def asymptotic_variance_standard(params: DgpParams) -> float:
    """Limit of ``n Var[standard list estimate]``, built cell by cell.

    For each arm the within-cell variances are weighted by ``P(Y = y)`` and
    the between-cell term contributes ``q (1 - q) (E[V|z,0] - E[V|z,1])^2``.
    """
    mom = population_moments(params)
    q = mom[(0, 1)].mass
    needed = [(1, 0), (0, 0)] if q == 0.0 else ([(1, 1), (0, 1)] if q == 1.0 else list(mom))
    _check_positive(params, mom, needed)
    g = params.gamma
    total = 0.0
    for z, share in ((1, g), (0, 1.0 - g)):
        within = math.fsum(mom[(z, y)].mass * mom[(z, y)].var for y in (0, 1) if mom[(z, y)].mass > 0.0)
        between = 0.0
        if 0.0 < q < 1.0:
            between = q * (1.0 - q) * (mom[(z, 0)].mean - mom[(z, 1)].mean) ** 2
        total += (within + between) / share
    return total
