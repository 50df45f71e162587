"""Acceptance checks runnable from the CLI (``selftest``) and from pytest.

Each check takes a ``scale`` in (0, 1] that multiplies replicate counts.
Sample sizes per replicate never shrink. At ``scale=1`` every tolerance and
runtime budget is the nominal one; below that, Monte Carlo bands widen by
``1/sqrt(scale)`` so a reduced run tests the same property at matching
precision, and runtime budgets are not enforced.
"""

from __future__ import annotations

import math
import random
import time
from typing import Callable, NamedTuple

import numpy as np

from .data import Cell, CellSummary
from .dgp import DgpParams, identification_oracle
from .errors import DegenerateCells
from .estimators import (
    asymptotic_variance_combined,
    asymptotic_variance_standard,
    combined_estimate,
    standard_list_estimate,
    variance_reduction,
)
from .placebo import p_value_from_summary
from .simulation import (
    TAG_COVERAGE,
    coverage_experiment,
    efficiency_experiment,
    estimates_experiment,
    power_test_one_cell,
    power_test_two,
    rejection_rate,
)

DEFAULT_SEED = 20240611
BASE = DgpParams(mu=0.3, p_truthful=0.5, gamma=0.5, j_items=4, w_success=0.4)

# rounded survey results used for arithmetic cross-checks
# (question, beta, se, printed p) for the confessor list difference
TEST_ONE_ROWS = (
    ("Nuclear Power", 1.054, 0.095, 0.568),
    ("Public Transportation", 0.790, 0.091, 0.021),
    ("Spanish-speaking", 0.848, 0.279, 0.585),
    ("Muslim Teachers", 1.008, 0.237, 0.973),
    ("CNN", 0.696, 0.143, 0.034),
)
# (question, se standard, se combined, printed % reduction)
REDUCTION_ROWS = (
    ("Nuclear Power", 0.084, 0.049, 66.8),
    ("Public Transportation", 0.072, 0.049, 54.0),
    ("Spanish-speaking", 0.079, 0.074, 14.0),
    ("Muslim Teachers", 0.081, 0.074, 15.4),
    ("CNN", 0.105, 0.070, 55.3),
)
# direct "Yes" share and SE in two independent samples, and the printed difference
DIRECT_NUCLEAR = ((0.656, 0.021), (0.603, 0.022), (0.053, 0.030))


class CriterionResult(NamedTuple):
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float | None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} [{self.number:2d}] {self.name}: {self.detail} ({self.seconds:.2f} s)"


def _reps(n: int, scale: float, floor: int = 10) -> int:
    return max(floor, int(round(n * scale)))


def _band(tol: float, scale: float) -> float:
    return tol / math.sqrt(min(1.0, scale))


def identification(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    worst = 0.0
    count = 0
    for mu in (0.05, 0.25, 0.5, 0.75, 0.95):
        for p in (0.0, 0.25, 0.5, 0.75, 1.0):
            for w in (0.1, 0.4, 0.7):
                worst = max(worst, abs(identification_oracle(BASE.with_(mu=mu, p_truthful=p, w_success=w)) - mu))
                count += 1
    return worst <= 1e-12, f"max |oracle - mu| = {worst:.2e} over {count} points"


def consistency(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    params = BASE.with_(n=10_000)
    reps = _reps(500, scale)
    se = math.sqrt(asymptotic_variance_combined(params) / params.n)
    ests = estimates_experiment(params, reps, seed, threads, tag=TAG_COVERAGE + 100)
    inside = sum(r is not None and abs(r.estimate - params.mu) <= 3 * se for r in ests)
    share = inside / reps
    return share >= 0.99, f"{share:.3f} of {reps} estimates within 3 SE ({se:.4f}) of mu"


def coverage(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    reps = _reps(2000, scale)
    res = coverage_experiment(BASE.with_(n=2000), reps, 0.05, seed, threads)
    half = _band(0.02, scale)
    return abs(res.coverage - 0.95) <= half, f"coverage {res.coverage:.4f} over {reps} replicates (band 0.95 +/- {half:.3f})"


def variance_formula(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    params = BASE.with_(n=10_000)
    reps = _reps(1000, scale)
    ests = [r for r in estimates_experiment(params, reps, seed, threads, tag=TAG_COVERAGE + 200) if r is not None]
    mean_nvar = math.fsum(params.n * r.std_error ** 2 for r in ests) / len(ests)
    target = asymptotic_variance_combined(params)
    rel = abs(mean_nvar / target - 1.0)
    tol = _band(0.05, scale)
    return rel <= tol, f"mean n*Var = {mean_nvar:.4f} vs asymptotic {target:.4f} (rel. diff {rel:.2%}, tol {tol:.0%})"


def efficiency(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    strict = 0
    for mu in np.linspace(0.05, 0.95, 10):
        for p in np.linspace(0.1, 1.0, 10):
            params = BASE.with_(mu=float(mu), p_truthful=float(p))
            strict += asymptotic_variance_standard(params) > asymptotic_variance_combined(params)
    reps = _reps(2000, scale)
    res = efficiency_experiment(BASE.with_(mu=0.5, p_truthful=0.9, n=10_000), reps, seed, threads)
    rel = abs(res.empirical_ratio / res.analytic_ratio - 1.0)
    tol = _band(0.10, scale)
    ok = strict == 100 and rel <= tol
    return ok, (f"strictly smaller at {strict}/100 grid points; empirical ratio {res.empirical_ratio:.3f} "
                f"vs analytic {res.analytic_ratio:.3f} (rel. diff {rel:.1%}, tol {tol:.0%})")


def placebo_calibration(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    reps = _reps(5000, scale)
    rate = rejection_rate(BASE.with_(n=2667, n_yes=400), "one", reps, 0.05, seed, threads)
    tol = _band(0.02, scale)
    return abs(rate - 0.05) <= tol, f"Test I rejection rate {rate:.4f} over {reps} null replicates with 400 'Yes' answers (tol {tol:.3f})"


def power_point(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    reps = _reps(1000, scale)
    cell = power_test_one_cell(800, "false-confessor", 0.20, 0.4, reps, 0.05, seed)
    tol = _band(0.05, scale)
    return abs(cell.power - 0.80) <= tol, f"power {cell.power:.3f} at N_Yes=800, 20% false confessors (tol {tol:.3f})"


def variability_effect(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    reps = _reps(1000, scale)
    lo = power_test_one_cell(800, "false-confessor", 0.20, 0.1, reps, 0.05, seed).power
    hi = power_test_one_cell(800, "false-confessor", 0.20, 0.5, reps, 0.05, seed).power
    return lo - hi >= 0.05, f"power {lo:.3f} at w=0.1 vs {hi:.3f} at w=0.5 (gap {lo - hi:.3f})"


def two_prop_crosscheck(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    reps = _reps(10_000, scale)
    analytic = power_test_two(0.6, 0.5, 500, 500, 0.05)
    simulated = power_test_two(0.6, 0.5, 500, 500, 0.05, "simulated", reps, seed)
    tol = _band(0.03, scale)
    gap = abs(analytic - simulated)
    return gap <= tol, f"analytic {analytic:.4f} vs simulated {simulated:.4f} over {reps} replicates (tol {tol:.3f})"


def printed_arithmetic(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    p_gaps = [abs(p_value_from_summary(b, se, 1.0) - p) for _, b, se, p in TEST_ONE_ROWS]
    r_gaps = [abs(100 * variance_reduction(s, c) - printed) for _, s, c, printed in REDUCTION_ROWS]
    (a, sa), (b, sb), (d, sd) = DIRECT_NUCLEAR
    diff = round(a - b, 3)
    se = round(math.sqrt(sa ** 2 + sb ** 2), 3)
    ok = max(p_gaps) <= 0.005 and max(r_gaps) <= 2.0 and diff == d and se == sd
    return ok, (f"max p gap {max(p_gaps):.4f}; max reduction gap {max(r_gaps):.2f} pp; "
                f"direct difference ({diff:.3f}, {se:.3f})")


def monotonicity_bias(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    params = BASE.with_(n=200_000, share_false_confessors=0.20)
    reps = max(5, int(round(20 * scale)))
    ests = [r.estimate for r in estimates_experiment(params, reps, seed, threads, tag=TAG_COVERAGE + 300)]
    mean = math.fsum(ests) / reps
    mc_se = float(np.std(ests, ddof=1)) / math.sqrt(reps)
    oracle = identification_oracle(params)
    excess = (mean - params.mu) / mc_se
    gap = abs(mean - oracle) / mc_se
    return excess >= 3 and gap <= 3, (f"mean estimate {mean:.4f} (MC SE {mc_se:.5f}) is {excess:.1f} SE above mu "
                                      f"and {gap:.2f} SE from oracle {oracle:.4f}")


def _random_no_confessor_cells(rng: random.Random) -> CellSummary:
    j = rng.randint(1, 6)
    n1, n0 = rng.randint(2, 15), rng.randint(2, 15)
    treated = [rng.randint(0, j + 1) for _ in range(n1)]
    control = [rng.randint(0, j) for _ in range(n0)]
    cells = {
        (1, 0): Cell(n1, sum(treated), sum(v * v for v in treated)),
        (0, 0): Cell(n0, sum(control), sum(v * v for v in control)),
    }
    return CellSummary.from_cells(cells)


def reduction_identity(scale: float, seed: int, threads: int | None) -> tuple[bool, str]:
    rng = random.Random(seed)
    mismatches = 0
    for _ in range(100):
        cells = _random_no_confessor_cells(rng)
        try:
            c = combined_estimate(cells)
        except DegenerateCells:
            mismatches += 1
            continue
        s = standard_list_estimate(cells)
        mismatches += (c.estimate != s.estimate) or (c.std_error != s.std_error)
    return mismatches == 0, f"{100 - mismatches}/100 datasets with no 'Yes' answers agree exactly"


CRITERIA: tuple[tuple[int, str, Callable, float], ...] = (
    (1, "identification", identification, 1.0),
    (2, "consistency", consistency, 30.0),
    (3, "coverage", coverage, 60.0),
    (4, "variance formula", variance_formula, 60.0),
    (5, "efficiency", efficiency, 90.0),
    (6, "Test I null calibration", placebo_calibration, 60.0),
    (7, "Test I power point", power_point, 30.0),
    (8, "baseline variability effect", variability_effect, 60.0),
    (9, "Test II analytic vs simulated", two_prop_crosscheck, 60.0),
    (10, "printed-table arithmetic", printed_arithmetic, 1.0),
    (11, "false-confession bias", monotonicity_bias, 60.0),
    (12, "reduction identity", reduction_identity, 1.0),
)


def run_criterion(number: int, scale: float = 1.0, seed: int = DEFAULT_SEED, threads: int | None = 1) -> CriterionResult:
    for num, name, fn, budget in CRITERIA:
        if num == number:
            t0 = time.perf_counter()
            ok, detail = fn(scale, seed, threads)
            dt = time.perf_counter() - t0
            if scale >= 1.0 and dt > budget:
                ok = False
                detail += f"; exceeded {budget:.0f} s budget"
            return CriterionResult(num, name, bool(ok), detail, dt, budget if scale >= 1.0 else None)
    raise KeyError(number)


def run_all(scale: float = 1.0, seed: int = DEFAULT_SEED, threads: int | None = 1,
            report: Callable[[CriterionResult], None] | None = None) -> list[CriterionResult]:
    out = []
    for num, *_ in CRITERIA:
        res = run_criterion(num, scale, seed, threads)
        if report is not None:
            report(res)
        out.append(res)
    return out
