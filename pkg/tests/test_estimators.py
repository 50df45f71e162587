import math
import statistics
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from listcombine.data import Cell, CellSummary, Respondent, summarize_cells
from listcombine.dgp import DgpParams
from listcombine.errors import DegenerateCells, DegenerateParams, InsufficientData, OutOfDomain
from listcombine.estimators import (
    CI_OUTSIDE_UNIT,
    DEGENERATE_CELL,
    DIRECT_BOUNDARY,
    OUTSIDE_UNIT,
    Method,
    asymptotic_variance_combined,
    asymptotic_variance_standard,
    combined_estimate,
    combined_variance,
    direct_estimate,
    standard_list_estimate,
    variance_reduction,
    wald_ci,
)
from listcombine.simulation import estimates_experiment

BASE = DgpParams(mu=0.3, p_truthful=0.5)


def _cells(rows):
    return summarize_cells([Respondent(f"r{i}", y, z, v) for i, (y, z, v) in enumerate(rows)])


def _cell(values):
    return Cell(len(values), sum(values), sum(v * v for v in values))


# small hand-checkable dataset: (y, z, v)
TOY = [
    (1, 1, 3), (1, 1, 4), (1, 0, 2), (1, 0, 1),
    (0, 1, 2), (0, 1, 3), (0, 1, 1), (0, 0, 1), (0, 0, 2), (0, 0, 0),
]


class TestDirect:
    def test_binomial_se(self):
        cells = CellSummary.from_cells({(0, 1): Cell(328, 0, 0), (0, 0): Cell(172, 0, 0)})
        r = direct_estimate(cells)
        assert r.estimate == pytest.approx(0.656)
        assert r.std_error == pytest.approx(0.0212, abs=5e-5)

    def test_second_sample_se(self):
        cells = CellSummary.from_cells({(0, 1): Cell(53, 0, 0), (0, 0): Cell(461, 0, 0)})
        assert direct_estimate(cells).std_error == pytest.approx(0.0134, abs=5e-5)

    def test_zero_share(self):
        r = direct_estimate(CellSummary.from_cells({(0, 0): Cell(10, 5, 5)}))
        assert (r.estimate, r.std_error, r.ci_low, r.ci_high) == (0.0, 0.0, 0.0, 0.0)
        assert DIRECT_BOUNDARY in r.diagnostics

    def test_needs_two(self):
        with pytest.raises(InsufficientData):
            direct_estimate(CellSummary.from_cells({(0, 0): Cell(1, 1, 1)}))


class TestStandard:
    def test_constant_arms(self):
        cells = CellSummary.from_cells({(1, 0): _cell([2, 3]), (0, 0): _cell([1, 2])})
        # treatment mean 2.5, control 1.5
        assert standard_list_estimate(cells).estimate == 1.0

    def test_constant_values_have_zero_se(self):
        cells = CellSummary.from_cells({(1, 0): _cell([3, 3]), (0, 0): _cell([2, 2])})
        r = standard_list_estimate(cells)
        assert (r.estimate, r.std_error) == (1.0, 0.0)

    def test_toy_against_statistics(self):
        t = [v for y, z, v in TOY if z == 1]
        c = [v for y, z, v in TOY if z == 0]
        r = standard_list_estimate(_cells(TOY))
        assert r.estimate == pytest.approx(statistics.mean(t) - statistics.mean(c))
        se = math.sqrt(statistics.variance(t) / len(t) + statistics.variance(c) / len(c))
        assert r.std_error == pytest.approx(se)

    def test_identical_arms(self):
        cells = CellSummary.from_cells({(1, 0): _cell([0, 1, 2]), (0, 0): _cell([2, 1, 0])})
        assert standard_list_estimate(cells).estimate == 0.0

    def test_needs_two_per_arm(self):
        with pytest.raises(DegenerateCells):
            standard_list_estimate(CellSummary.from_cells({(1, 0): _cell([1]), (0, 0): _cell([1, 2])}))

    def test_large_sample_recovers_mu(self):
        params = DgpParams(mu=0.4, p_truthful=0.6, n=100_000)
        from listcombine.simulation import simulate_arrays, stream
        r = standard_list_estimate(simulate_arrays(params, stream(11, 99)).summary())
        assert abs(r.estimate - 0.4) <= 3 * r.std_error


class TestCombined:
    def test_hand_arithmetic(self):
        # Ybar 0.5, V10 mean 2.0, V00 mean 1.6
        cells = CellSummary.from_cells({
            (0, 1): _cell([1] * 4), (1, 1): _cell([2] * 4),
            (1, 0): _cell([1, 2, 3]), (0, 0): _cell([1, 1, 2, 2, 2]),
        })
        assert combined_estimate(cells).estimate == pytest.approx(0.7)

    def test_toy_variance_by_hand(self):
        cells = _cells(TOY)
        v10 = [v for y, z, v in TOY if (z, y) == (1, 0)]
        v00 = [v for y, z, v in TOY if (z, y) == (0, 0)]
        n, m, ybar = 10, 5, 0.4
        est = ybar + (1 - ybar) * (statistics.mean(v10) - statistics.mean(v00))
        var = ((1 - est) ** 2 * ybar / (1 - ybar) / n
               + (1 - ybar) * (statistics.variance(v10) / m + statistics.variance(v00) / (n - m)))
        r = combined_estimate(cells)
        assert r.estimate == pytest.approx(est)
        assert r.std_error == pytest.approx(math.sqrt(var))
        assert combined_variance(cells) == pytest.approx(var)

    def test_cells_form(self):
        cells = _cells(TOY)
        v10 = [v for y, z, v in TOY if (z, y) == (1, 0)]
        v00 = [v for y, z, v in TOY if (z, y) == (0, 0)]
        est = combined_estimate(cells).estimate
        var = ((1 - est) ** 2 * 0.4 / 0.6 / 10
               + 0.36 * (statistics.variance(v10) / 3 + statistics.variance(v00) / 3))
        assert combined_variance(cells, "cells") == pytest.approx(var)

    def test_unknown_form(self):
        with pytest.raises(ValueError):
            combined_variance(_cells(TOY), "other")

    def test_all_yes(self):
        cells = CellSummary.from_cells({(1, 1): _cell([2, 3]), (0, 1): _cell([1, 2])})
        r = combined_estimate(cells)
        assert (r.estimate, r.std_error) == (1.0, 0.0)
        assert DEGENERATE_CELL in r.diagnostics

    def test_thin_no_cell(self):
        with pytest.raises(DegenerateCells):
            combined_estimate(CellSummary.from_cells({(1, 0): _cell([1]), (0, 0): _cell([1, 2]),
                                                      (1, 1): _cell([2, 2])}))

    def test_constant_cells_zero_variance(self):
        cells = CellSummary.from_cells({(1, 0): _cell([2, 2, 2]), (0, 0): _cell([1, 1])})
        assert combined_variance(cells) == 0.0

    def test_not_truncated(self):
        cells = CellSummary.from_cells({(1, 0): _cell([0, 1, 0]), (0, 0): _cell([3, 4, 3])})
        r = combined_estimate(cells)
        assert r.estimate < 0
        assert OUTSIDE_UNIT in r.diagnostics and CI_OUTSIDE_UNIT in r.diagnostics

    @given(st.lists(st.integers(0, 5), min_size=2, max_size=25),
           st.lists(st.integers(0, 4), min_size=2, max_size=25))
    def test_reduction_identity(self, treated, control):
        cells = CellSummary.from_cells({(1, 0): _cell(treated), (0, 0): _cell(control)})
        c, s = combined_estimate(cells), standard_list_estimate(cells)
        assert c.estimate == s.estimate
        assert c.std_error == s.std_error
        assert c.method is Method.COMBINED and s.method is Method.STANDARD

    def test_forms_agree_in_large_samples(self):
        from listcombine.simulation import simulate_arrays, stream
        cells = simulate_arrays(BASE.with_(n=200_000), stream(5, 77)).summary()
        assert combined_variance(cells, "cells") == pytest.approx(combined_variance(cells, "gamma"), rel=0.02)


class TestWaldAndReduction:
    def test_zero_se(self):
        assert wald_ci(0.5, 0.0) == (0.5, 0.5)

    def test_printed_interval(self):
        lo, hi = wald_ci(0.666, 0.049, 0.05)
        assert (round(lo, 3), round(hi, 3)) == (0.570, 0.762)

    def test_lower_bound_below_zero_flagged(self):
        cells = CellSummary.from_cells({(1, 0): _cell([0, 1, 2, 3]), (0, 0): _cell([0, 1, 2, 2])})
        r = combined_estimate(cells)
        assert r.ci_low < 0 and CI_OUTSIDE_UNIT in r.diagnostics
        lo, _ = wald_ci(0.042, 0.074)
        assert lo < 0

    @pytest.mark.parametrize("se,alpha", [(-0.1, 0.05), (0.1, 0.0), (0.1, 1.0)])
    def test_domain(self, se, alpha):
        with pytest.raises(OutOfDomain):
            wald_ci(0.5, se, alpha)

    def test_equal_se(self):
        assert variance_reduction(0.05, 0.05) == 0.0

    def test_rounded_inputs(self):
        assert variance_reduction(0.084, 0.049) == pytest.approx(0.660, abs=5e-4)
        assert variance_reduction(0.073, 0.049) == pytest.approx(0.549, abs=5e-4)

    def test_zero_standard(self):
        with pytest.raises(ZeroDivisionError):
            variance_reduction(0.0, 0.1)


class TestAsymptoticVariance:
    def test_combined_enumeration_value(self):
        assert asymptotic_variance_combined(BASE) == pytest.approx(float(F(30579, 8500)), rel=1e-13)

    def test_standard_enumeration_value(self):
        assert asymptotic_variance_standard(BASE) == pytest.approx(float(F(213, 50)), rel=1e-13)

    @given(st.integers(1, 19), st.integers(1, 20), st.integers(1, 9), st.sampled_from([F(1, 2), F(1, 3), F(3, 4)]),
           st.integers(1, 6))
    def test_against_oracle(self, mu20, p20, w10, gamma, j):
        mu, p, w = F(mu20, 20), F(p20, 20), F(w10, 10)
        params = DgpParams(float(mu), float(p), float(gamma), j, float(w))
        assert asymptotic_variance_combined(params) == pytest.approx(
            float(oracles.asy_var_combined_printed(mu, p, gamma, j, w)), rel=1e-11)
        assert asymptotic_variance_standard(params) == pytest.approx(
            float(oracles.asy_var_standard_total(mu, p, gamma, j, w)), rel=1e-11)

    @given(st.floats(0.01, 0.99), st.floats(0.01, 1.0), st.floats(0.05, 0.95), st.floats(0.1, 0.9))
    def test_combined_strictly_smaller(self, mu, p, w, gamma):
        params = DgpParams(mu, p, gamma, 4, w)
        assert asymptotic_variance_standard(params) > asymptotic_variance_combined(params)

    def test_no_prevalence(self):
        params = BASE.with_(mu=0.0)
        var_w = 4 * 0.4 * 0.6
        assert asymptotic_variance_combined(params) == pytest.approx(var_w / 0.5 + var_w / 0.5)

    def test_no_confessions(self):
        params = BASE.with_(p_truthful=0.0)
        assert asymptotic_variance_standard(params) == pytest.approx(asymptotic_variance_combined(params))

    def test_degenerate(self):
        with pytest.raises(DegenerateParams):
            asymptotic_variance_combined(BASE.with_(w_success=0.0, mu=0.0))
        with pytest.raises(DegenerateParams):
            asymptotic_variance_combined(BASE.with_(gamma=1.0))

    def test_table_regime_band(self):
        params = DgpParams(mu=0.66, p_truthful=0.99)
        reduction = 1 - asymptotic_variance_combined(params) / asymptotic_variance_standard(params)
        assert 0.50 <= reduction <= 0.70


@pytest.mark.slow
class TestSamplingBehaviour:
    def test_root_n_consistency(self):
        errs = []
        for n in (1000, 4000, 16000):
            reps = estimates_experiment(BASE.with_(n=n), 500, seed=3)
            errs.append(np.mean([abs(r.estimate - 0.3) for r in reps]))
        for a, b in zip(errs, errs[1:]):
            assert 0.4 <= b / a <= 0.6

    def test_empirical_variance_matches_asymptotic(self):
        params = BASE.with_(n=10_000)
        ests = [r.estimate for r in estimates_experiment(params, 1000, seed=8)]
        n_var = params.n * np.var(ests, ddof=1)
        # sampling SD of a variance estimate from 1000 draws is about 4.5%
        assert n_var == pytest.approx(asymptotic_variance_combined(params), rel=0.15)

    def test_false_confessors_bias_upward(self):
        params = BASE.with_(n=100_000, share_false_confessors=0.2)
        r = estimates_experiment(params, 1, seed=4)[0]
        assert r.estimate - 0.3 > 3 * r.std_error
