"""Data generation and Monte Carlo experiments.

Random streams
--------------
Every random quantity comes from a Philox (counter-based) generator keyed by
``SeedSequence(seed, spawn_key=key)``. Keys are derived from *what* is being
simulated (experiment tag and replicate index, or power-cell coordinates),
never from scheduling order, so results are identical for any thread count
and a single grid cell can be re-run on its own.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, TypeVar

import numpy as np

from .data import CellSummary, Dataset, ListDesign, Respondent, summarize_arrays
from .dgp import KINDS, VIOLATIONS, X_OF, Y_OF, DgpParams, kind_w_success
from .errors import DegenerateCells, InvalidGrid, InvalidParams
from .estimators import (
    asymptotic_variance_combined,
    asymptotic_variance_standard,
    combined_estimate,
    standard_list_estimate,
)
from .kernels import Probability, std_normal_quantile, two_prop_power
from .placebo import placebo_test_one, placebo_test_two

T = TypeVar("T")
R = TypeVar("R")

# experiment tags used as the first element of spawn keys
TAG_DATASET = 0
TAG_COVERAGE = 1
TAG_EFFICIENCY = 2
TAG_REJECTION = 3
TAG_TEST_TWO = 4
TAG_POWER_ONE = 5

POWER_BLOCK = 50

SMALL_SAMPLE = "small_sample"
SMALL_SAMPLE_N = 200

_KIND_CODE = {k: i for i, k in enumerate(KINDS)}


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def _workers(threads: int | None) -> int:
    return max(1, threads if threads else (os.cpu_count() or 1))


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = 1) -> list[R]:
    """Order-preserving map, threaded when ``threads`` > 1 (None = all cores)."""
    items = list(items)
    n = _workers(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SimulatedSample:
    """Latent and observed arrays for one generated dataset."""

    kind: np.ndarray
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    z: np.ndarray
    v: np.ndarray

    @property
    def n(self) -> int:
        return int(self.v.size)

    def summary(self) -> CellSummary:
        return summarize_arrays(self.y, self.z, self.v)


def _draw_kinds(params: DgpParams, rng: np.random.Generator) -> np.ndarray:
    mass = params.mass
    if params.n_yes is None:
        probs = np.array([max(0.0, mass[k]) for k in KINDS])
        return rng.choice(len(KINDS), size=params.n, p=probs / probs.sum())
    # conditional mode: the Yes stratum has exactly n_yes members, with the
    # violation shares applied as exact (rounded) counts
    n_yes = params.n_yes
    counts = [round(getattr(params, VIOLATIONS[v]) * n_yes) for v in ("false-confessor", "liar", "design-affected")]
    if sum(counts) > n_yes:
        raise InvalidParams("rounded violation counts exceed n_yes")
    yes = np.concatenate([
        np.full(n_yes - sum(counts), _KIND_CODE["confessor"]),
        np.full(counts[0], _KIND_CODE["false_confessor"]),
        np.full(counts[1], _KIND_CODE["liar"]),
        np.full(counts[2], _KIND_CODE["design_affected"]),
    ])
    q = params.yes_rate
    no_mass = 1.0 - q
    p_withhold = mass["withholder"] / no_mass if no_mass > 0 else 0.0
    no = np.where(rng.random(params.n - n_yes) < p_withhold,
                  _KIND_CODE["withholder"], _KIND_CODE["non_engager"])
    return rng.permutation(np.concatenate([yes, no]).astype(np.int64))


def simulate_arrays(params: DgpParams, rng: np.random.Generator) -> SimulatedSample:
    """Draw one dataset from the population described by ``params``."""
    kind = _draw_kinds(params, rng)
    x = np.array([X_OF[k] for k in KINDS])[kind]
    y = np.array([Y_OF[k] for k in KINDS])[kind]
    w_prob = np.array([kind_w_success(params, k) for k in KINDS])[kind]
    j = params.j_items
    w = rng.binomial(j, w_prob)
    z = (rng.random(kind.size) < params.gamma).astype(np.int64)
    adds_item = np.isin(kind, [_KIND_CODE[k] for k in ("confessor", "withholder", "design_affected")])
    v = w + z * adds_item
    ceiling = kind == _KIND_CODE["design_affected"]
    v = np.where(ceiling, np.minimum(v, j), v)
    return SimulatedSample(kind, x, y, w, z, v)


def generate_dataset(params: DgpParams, seed: int, question_id: str = "sim", alpha: float = 0.05) -> Dataset:
    """Generate a validated :class:`Dataset`; deterministic in ``(params, seed)``."""
    s = simulate_arrays(params, stream(seed, TAG_DATASET))
    records = tuple(
        Respondent(f"r{i:07d}", int(yy), int(zz), int(vv))
        for i, (yy, zz, vv) in enumerate(zip(s.y.tolist(), s.z.tolist(), s.v.tolist()))
    )
    return Dataset(records, ListDesign(params.j_items, alpha), question_id, {})


# ---------------------------------------------------------------------------
# Placebo Test I power (conditional on the number of "Yes" answerers)

@dataclass(frozen=True)
class PowerCell:
    n_yes: int
    violation_type: str
    share: float
    w_success: float
    power: Probability
    replicates: int
    seed: int
    axis: str = "share"

    @property
    def share_or_wsuccess(self) -> float:
        return self.w_success if self.axis == "w_success" else self.share

    @property
    def panel(self) -> str:
        if self.axis == "w_success":
            return f"w-success({self.violation_type}={self.share:.2f})"
        return self.violation_type


@dataclass(frozen=True)
class GridSpec:
    """Axes of a Test I power surface over N_Yes and one other parameter.

    ``axis="share"`` sweeps the share of one violation type at fixed
    ``w_success``; ``axis="w_success"`` sweeps the baseline success
    probability with the violation share held at ``fixed_share``.
    """

    n_yes: tuple[int, ...] = tuple(range(100, 1001, 50))
    violation_type: str = "false-confessor"
    values: tuple[float, ...] = tuple(round(0.01 * i, 2) for i in range(101))
    axis: str = "share"
    w_success: float = 0.4
    fixed_share: float = 0.20
    j_items: int = 4
    gamma: float = 0.5

    def __post_init__(self):
        if not self.n_yes or not self.values:
            raise InvalidGrid("grid axes must be non-empty")
        if any(int(k) != k or k < 4 for k in self.n_yes):
            raise InvalidGrid("n_yes values must be integers >= 4")
        if self.violation_type not in VIOLATIONS:
            raise InvalidGrid(f"unknown violation type {self.violation_type!r}; choose from {sorted(VIOLATIONS)}")
        if self.axis not in ("share", "w_success"):
            raise InvalidGrid("axis must be 'share' or 'w_success'")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise InvalidGrid("grid values must lie in [0, 1]")
        if not 0.0 <= self.w_success <= 1.0 or not 0.0 <= self.fixed_share <= 1.0:
            raise InvalidGrid("w_success and fixed_share must lie in [0, 1]")
        if not 0.0 < self.gamma < 1.0 or self.j_items < 1:
            raise InvalidGrid("need 0 < gamma < 1 and j_items >= 1")

    @classmethod
    def share_sweep(cls, violation_type: str = "false-confessor", step: float = 0.01) -> "GridSpec":
        k = int(round(1 / step))
        return cls(violation_type=violation_type, values=tuple(round(i * step, 6) for i in range(k + 1)))

    @classmethod
    def variability_panel(cls, step: float = 0.01, fixed_share: float = 0.20) -> "GridSpec":
        k = int(round(1 / step))
        return cls(axis="w_success", fixed_share=fixed_share, values=tuple(round(i * step, 6) for i in range(k + 1)))

    def cells(self) -> list[tuple[int, float, float]]:
        out = []
        for n_yes in self.n_yes:
            for v in self.values:
                if self.axis == "share":
                    out.append((int(n_yes), float(v), self.w_success))
                else:
                    out.append((int(n_yes), self.fixed_share, float(v)))
        return out


def _test_one_rejects(v: np.ndarray, z: np.ndarray, crit: float) -> np.ndarray:
    """Row-wise Placebo Test I decisions for replicate matrices ``v``, ``z``.

    Rejecting when ``|beta - 1| / se > z_{1 - alpha/2}`` is the same event as
    the two-sided p-value falling below alpha.
    """
    z = z.astype(np.int64)
    v = v.astype(np.int64)
    n = v.shape[1]
    c1 = z.sum(axis=1)
    c0 = n - c1
    s1 = (v * z).sum(axis=1)
    s0 = v.sum(axis=1) - s1
    q1 = (v * v * z).sum(axis=1)
    q0 = (v * v).sum(axis=1) - q1
    ok = (c1 >= 2) & (c0 >= 2)
    c1s, c0s = np.where(ok, c1, 2), np.where(ok, c0, 2)
    var1 = (c1s * q1 - s1 * s1) / (c1s * (c1s - 1))
    var0 = (c0s * q0 - s0 * s0) / (c0s * (c0s - 1))
    beta = s1 / c1s - s0 / c0s
    gap = np.abs(beta - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        # rows failing ``ok`` may carry meaningless negative variances
        se = np.sqrt(var1 / c1s + var0 / c0s)
        reject = np.where(se > 0, gap > crit * se, gap > 0)
    return ok & reject


def power_test_one_cell(
    n_yes: int,
    violation_type: str,
    share: float,
    w_success: float = 0.4,
    replicates: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    j_items: int = 4,
    gamma: float = 0.5,
    axis: str = "share",
) -> PowerCell:
    """Rejection rate of Placebo Test I among ``n_yes`` "Yes" answerers.

    ``round(share * n_yes)`` of them violate the named assumption; the rest
    are truthful confessors. Baseline counts are Binomial(j_items, w_success)
    and each unit receives the treatment list with probability ``gamma``.
    Only the Yes stratum enters Test I, so only it is simulated.

    Draws come in blocks of ``POWER_BLOCK`` units keyed by
    ``(w_success, gamma, j_items, block)``, so cells that differ only in
    ``n_yes``, share or violation type reuse the same baseline counts and
    assignments (common random numbers). Each cell is still a pure function
    of its coordinates, and the power surface is smooth across the grid.
    """
    if violation_type not in VIOLATIONS:
        raise InvalidGrid(f"unknown violation type {violation_type!r}")
    if replicates < 1:
        raise InvalidGrid("replicates must be >= 1")
    w_blocks, z_blocks = [], []
    for b in range(-(-n_yes // POWER_BLOCK)):
        rng = stream(seed, TAG_POWER_ONE, round(w_success * 1_000_000), round(gamma * 1_000_000), j_items, b)
        w_blocks.append(rng.binomial(j_items, w_success, size=(replicates, POWER_BLOCK)))
        z_blocks.append(rng.random((replicates, POWER_BLOCK)) < gamma)
    w = np.concatenate(w_blocks, axis=1)[:, :n_yes]
    z = np.concatenate(z_blocks, axis=1)[:, :n_yes].astype(np.int64)
    k = round(share * n_yes)
    v = w + z
    if k:
        if violation_type == "design-affected":
            v[:, :k] = np.minimum(w[:, :k] + z[:, :k], j_items)
        else:
            # false confessors and liars both report the baseline count
            v[:, :k] = w[:, :k]
    crit = std_normal_quantile(1.0 - alpha / 2.0)
    power = float(_test_one_rejects(v, z, crit).mean())
    return PowerCell(n_yes, violation_type, share, w_success, Probability(power), replicates, seed, axis)


def power_test_one_grid(
    grid: GridSpec,
    replicates: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    threads: int | None = 1,
) -> list[PowerCell]:
    """Power surface over ``grid``; identical output for any ``threads``."""
    if replicates < 1:
        raise InvalidGrid("replicates must be >= 1")

    def run(cell):
        n_yes, share, w = cell
        return power_test_one_cell(n_yes, grid.violation_type, share, w, replicates, alpha, seed,
                                   grid.j_items, grid.gamma, grid.axis)

    return parallel_map(run, grid.cells(), threads)


# ---------------------------------------------------------------------------
# Placebo Test II power

def _test_two_rejects(k1: np.ndarray, n1: int, k0: np.ndarray, n0: int, crit: float) -> np.ndarray:
    k1 = k1.astype(np.int64)
    k0 = k0.astype(np.int64)
    var1 = k1 * (n1 - k1) / (n1 * (n1 - 1))
    var0 = k0 * (n0 - k0) / (n0 * (n0 - 1))
    delta = k1 / n1 - k0 / n0
    se = np.sqrt(var1 / n1 + var0 / n0)
    gap = np.abs(delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(se > 0, gap > crit * se, gap > 0)


def power_test_two(
    p1: float,
    p0: float,
    n1: int,
    n0: int,
    alpha: float = 0.05,
    mode: str = "analytic",
    replicates: int = 10_000,
    seed: int = 0,
    continuity: bool = False,
    pooled_null: bool = False,
) -> Probability:
    """Power of Placebo Test II against a treatment effect on direct answers.

    ``mode="analytic"`` is the normal approximation of
    :func:`~listcombine.kernels.two_prop_power`. ``mode="simulated"`` draws
    the number of "Yes" answers in each arm (a sum of Bernoulli draws) and
    applies the Test II statistic, with sample variances, to each replicate.
    """
    for name, p in (("p1", p1), ("p0", p0), ("alpha", alpha)):
        if not 0.0 <= p <= 1.0:
            raise InvalidParams(f"{name} must lie in [0, 1]")
    if n1 < 2 or n0 < 2:
        raise InvalidParams("each arm needs at least two respondents")
    if mode == "analytic":
        return two_prop_power(p1, p0, n1, n0, alpha, continuity=continuity, pooled_null=pooled_null)
    if mode != "simulated":
        raise InvalidParams(f"mode must be 'analytic' or 'simulated', got {mode!r}")
    if replicates < 1:
        raise InvalidParams("replicates must be >= 1")
    rng = stream(seed, TAG_TEST_TWO, n1, n0, round(p1 * 1_000_000), round(p0 * 1_000_000))
    k1 = rng.binomial(n1, p1, size=replicates)
    k0 = rng.binomial(n0, p0, size=replicates)
    crit = std_normal_quantile(1.0 - alpha / 2.0)
    return Probability(float(_test_two_rejects(k1, n1, k0, n0, crit).mean()))


# ---------------------------------------------------------------------------
# Estimator experiments

class CoverageResult(NamedTuple):
    coverage: float
    mean_ci_width: float
    replicates_used: int
    replicates_failed: int
    flags: tuple[str, ...]


class EfficiencyResult(NamedTuple):
    empirical_var_combined: float
    empirical_var_standard: float
    analytic_ratio: float

    @property
    def empirical_ratio(self) -> float:
        return self.empirical_var_combined / self.empirical_var_standard


def _replicate_summaries(params: DgpParams, replicates: int, seed: int, tag: int, threads: int | None):
    def one(i: int) -> CellSummary:
        return simulate_arrays(params, stream(seed, tag, i)).summary()

    return parallel_map(one, range(replicates), threads)


def coverage_experiment(
    params: DgpParams,
    replicates: int = 2000,
    alpha: float = 0.05,
    seed: int = 0,
    threads: int | None = 1,
) -> CoverageResult:
    """Share of combined-estimator Wald intervals that contain ``mu``."""
    if params.has_violations:
        raise InvalidParams("coverage is only defined when the design assumptions hold")
    if replicates < 1:
        raise InvalidParams("replicates must be >= 1")
    hits, widths, failed = 0, [], 0
    for cells in _replicate_summaries(params, replicates, seed, TAG_COVERAGE, threads):
        try:
            r = combined_estimate(cells, alpha)
        except DegenerateCells:
            failed += 1
            continue
        hits += r.ci_low <= params.mu <= r.ci_high
        widths.append(r.ci_high - r.ci_low)
    flags = (SMALL_SAMPLE,) if params.n < SMALL_SAMPLE_N else ()
    used = replicates - failed
    if used == 0:
        raise DegenerateCells("every replicate had a degenerate cell")
    return CoverageResult(hits / used, math.fsum(widths) / used, used, failed, flags)


def efficiency_experiment(
    params: DgpParams,
    replicates: int = 2000,
    seed: int = 0,
    threads: int | None = 1,
) -> EfficiencyResult:
    """Monte Carlo variances of both list estimators next to the analytic ratio."""
    if params.has_violations:
        raise InvalidParams("efficiency comparison assumes no violations")
    if replicates < 2:
        raise InvalidParams("need at least two replicates")
    comb, std = [], []
    for cells in _replicate_summaries(params, replicates, seed, TAG_EFFICIENCY, threads):
        try:
            c = combined_estimate(cells).estimate
            s = standard_list_estimate(cells).estimate
        except DegenerateCells:
            continue
        comb.append(c)
        std.append(s)
    if len(comb) < 2:
        raise DegenerateCells("too few usable replicates")
    ratio = asymptotic_variance_combined(params) / asymptotic_variance_standard(params)
    return EfficiencyResult(float(np.var(comb, ddof=1)), float(np.var(std, ddof=1)), ratio)


def estimates_experiment(
    params: DgpParams,
    replicates: int,
    seed: int = 0,
    threads: int | None = 1,
    tag: int = TAG_COVERAGE,
) -> list:
    """Combined-estimator reports for ``replicates`` fresh datasets (None where degenerate)."""
    out = []
    for cells in _replicate_summaries(params, replicates, seed, tag, threads):
        try:
            out.append(combined_estimate(cells))
        except DegenerateCells:
            out.append(None)
    return out


def rejection_rate(
    params: DgpParams,
    test: str = "one",
    replicates: int = 5000,
    alpha: float = 0.05,
    seed: int = 0,
    threads: int | None = 1,
) -> float:
    """Rejection frequency of a placebo test on full simulated datasets."""
    fn = {"one": placebo_test_one, "two": placebo_test_two}[test]
    rejects, used = 0, 0
    for cells in _replicate_summaries(params, replicates, seed, TAG_REJECTION, threads):
        try:
            rejects += fn(cells, alpha).rejects(alpha)
            used += 1
        except DegenerateCells:
            pass
    if not used:
        raise DegenerateCells("no replicate could be tested")
    return rejects / used

