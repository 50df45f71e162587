from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from listcombine.data import CellSummary, Cell
from listcombine.dgp import KINDS, DgpParams, identification_oracle, placebo_one_estimand, population_moments
from listcombine.errors import InvalidGrid, InvalidParams
from listcombine.io import power_csv
from listcombine.kernels import std_normal_quantile
from listcombine.placebo import placebo_test_one, placebo_test_two
from listcombine.simulation import (
    SMALL_SAMPLE,
    GridSpec,
    _test_one_rejects,
    _test_two_rejects,
    coverage_experiment,
    efficiency_experiment,
    generate_dataset,
    power_test_one_cell,
    power_test_one_grid,
    power_test_two,
    simulate_arrays,
    stream,
)

BASE = DgpParams(mu=0.3, p_truthful=0.5)
CRIT = std_normal_quantile(0.975)


def _cells_from_rows(v, z):
    cells = {}
    for arm in (0, 1):
        vals = v[z == arm].astype(int).tolist()
        cells[(arm, 1)] = Cell(len(vals), sum(vals), sum(x * x for x in vals))
    return CellSummary.from_cells(cells)


class TestParams:
    @pytest.mark.parametrize("changes", [
        {"mu": 1.2}, {"j_items": 0}, {"n": 0}, {"share_false_confessors": 0.6, "share_liars": 0.6},
        {"w_shift": 0.7}, {"n_yes": 2000},
    ])
    def test_invalid(self, changes):
        with pytest.raises(InvalidParams):
            BASE.with_(**changes)

    def test_too_many_false_confessors(self):
        with pytest.raises(InvalidParams):
            DgpParams(mu=0.9, p_truthful=1.0, share_false_confessors=1.0)

    def test_masses_sum_to_one(self):
        params = BASE.with_(share_false_confessors=0.1, share_liars=0.2, share_design_affected=0.05)
        assert sum(params.mass.values()) == pytest.approx(1.0)
        assert params.mass["false_confessor"] + params.mass["confessor"] + params.mass["liar"] \
            + params.mass["design_affected"] == pytest.approx(0.15)


class TestPopulationOracle:
    def test_identification_no_violation(self):
        for mu in (0.0, 0.3, 1.0):
            for p in (0.0, 0.5, 1.0):
                assert identification_oracle(BASE.with_(mu=mu, p_truthful=p)) == pytest.approx(mu, abs=1e-12)

    def test_identification_with_false_confessors(self):
        # enumeration gives exactly 33/100
        params = BASE.with_(share_false_confessors=0.2)
        assert float(oracles.identification_value(F(3, 10), F(1, 2), s_fc=F(1, 5))) == 0.33
        assert identification_oracle(params) == pytest.approx(0.33, abs=1e-14)

    def test_all_false_confessors_exceed_mu(self):
        assert identification_oracle(BASE.with_(share_false_confessors=1.0)) > 0.3

    def test_liars_and_ceiling_do_not_move_identification(self):
        for share in ("share_liars", "share_design_affected"):
            assert identification_oracle(BASE.with_(**{share: 0.3})) == pytest.approx(0.3, abs=1e-12)

    def test_placebo_estimands(self):
        assert placebo_one_estimand(BASE) == pytest.approx(1.0)
        assert placebo_one_estimand(BASE.with_(share_false_confessors=0.2)) == pytest.approx(0.8)
        assert placebo_one_estimand(BASE.with_(share_design_affected=0.2)) == pytest.approx(3109 / 3125)

    @given(st.integers(1, 9), st.integers(1, 10), st.integers(0, 4), st.integers(0, 4), st.integers(0, 2),
           st.integers(1, 9))
    def test_cell_moments_match_enumeration(self, mu10, p10, fc10, l10, d10, w10):
        mu, p, w = F(mu10, 10), F(p10, 10), F(w10, 10)
        s_fc, s_l, s_d = F(fc10, 10), F(l10, 10), F(d10, 10)
        try:
            params = DgpParams(float(mu), float(p), 0.5, 4, float(w), float(s_fc), float(s_l), float(s_d))
        except InvalidParams:
            return
        _, cell, _, _, _ = oracles.population(mu, p, F(1, 2), 4, w, s_fc=s_fc, s_l=s_l, s_d=s_d)
        mom = population_moments(params)
        for key, (m, v) in cell.items():
            assert mom[key].mean == pytest.approx(float(m), rel=1e-12, abs=1e-12)
            assert mom[key].var == pytest.approx(float(v), rel=1e-10, abs=1e-12)


class TestGenerate:
    def test_deterministic(self):
        a = generate_dataset(BASE, seed=4)
        b = generate_dataset(BASE, seed=4)
        assert a == b
        assert generate_dataset(BASE, seed=5) != a

    def test_no_prevalence(self):
        s = simulate_arrays(BASE.with_(mu=0.0, n=5000), stream(1, 0))
        assert not s.x.any() and not s.y.any()
        assert np.array_equal(s.v, s.w)

    def test_everyone_confesses(self):
        s = simulate_arrays(BASE.with_(mu=1.0, p_truthful=1.0, n=5000), stream(1, 0))
        assert s.y.all()
        assert np.array_equal(s.v[s.z == 1], s.w[s.z == 1] + 1)

    def test_compliant_observation_rule(self):
        s = simulate_arrays(BASE.with_(n=5000), stream(2, 0))
        assert np.array_equal(s.v, s.w + s.x * s.z)
        assert not (s.y & (1 - s.x)).any()

    def test_violation_mechanics(self):
        params = BASE.with_(n=20_000, share_false_confessors=0.2, share_liars=0.2, share_design_affected=0.2)
        s = simulate_arrays(params, stream(3, 0))
        codes = {k: i for i, k in enumerate(KINDS)}
        fc = s.kind == codes["false_confessor"]
        assert (s.x[fc] == 0).all() and (s.y[fc] == 1).all() and np.array_equal(s.v[fc], s.w[fc])
        liar = s.kind == codes["liar"]
        assert np.array_equal(s.v[liar], s.w[liar])
        d = s.kind == codes["design_affected"]
        assert np.array_equal(s.v[d], np.minimum(s.w[d] + s.z[d], 4))
        assert (s.v <= 4 + s.z).all()

    def test_conditional_mode_exact_counts(self):
        params = BASE.with_(n=3000, n_yes=800, share_false_confessors=0.2)
        s = simulate_arrays(params, stream(4, 0))
        codes = {k: i for i, k in enumerate(KINDS)}
        assert s.y.sum() == 800
        assert (s.kind == codes["false_confessor"]).sum() == 160

    def test_large_sample_marginals(self):
        params = BASE.with_(n=200_000)
        s = simulate_arrays(params, stream(5, 0))
        se_y = np.sqrt(0.15 * 0.85 / params.n)
        assert abs(s.y.mean() - 0.15) <= 4 * se_y
        cells = s.summary()
        diff = cells.arm(1).mean - cells.arm(0).mean
        se = np.sqrt(cells.arm(1).variance / cells.m + cells.arm(0).variance / (params.n - cells.m))
        assert abs(diff - identification_oracle(params)) <= 4 * se

    def test_large_sample_marginals_with_violations(self):
        params = BASE.with_(n=200_000, share_false_confessors=0.2, share_liars=0.1)
        s = simulate_arrays(params, stream(6, 0))
        _, _, arm, ey, _ = oracles.population(F(3, 10), F(1, 2), s_fc=F(1, 5), s_l=F(1, 10))
        assert abs(s.y.mean() - float(ey)) <= 4 * np.sqrt(0.15 * 0.85 / params.n)
        cells = s.summary()
        diff = cells.arm(1).mean - cells.arm(0).mean
        se = np.sqrt(cells.arm(1).variance / cells.m + cells.arm(0).variance / (params.n - cells.m))
        assert abs(diff - float(arm[1][0] - arm[0][0])) <= 4 * se

    def test_estimators_at_large_n(self):
        from listcombine.estimators import combined_estimate
        cells = simulate_arrays(BASE.with_(n=200_000), stream(7, 0)).summary()
        c = combined_estimate(cells)
        t = placebo_test_one(cells)
        assert abs(c.estimate - 0.3) <= 3 * c.std_error
        assert abs(t.statistic - 1.0) <= 3 * t.std_error

    def test_correlated_baseline_keeps_identification(self):
        params = BASE.with_(w_shift=0.3, n=200_000)
        assert identification_oracle(params) == pytest.approx(0.3, abs=1e-12)
        s = simulate_arrays(params, stream(8, 0))
        assert s.w[s.x == 1].mean() > s.w[s.x == 0].mean() + 1.0


class TestVectorisedStatistics:
    @given(st.integers(0, 10_000), st.integers(4, 40), st.floats(0.0, 1.0))
    def test_test_one_matches_scalar(self, seed, n, w):
        rng = np.random.default_rng(seed)
        z = (rng.random((20, n)) < 0.5).astype(np.int64)
        v = rng.binomial(4, w, size=(20, n)) + z * (rng.random((20, n)) < 0.9)
        vec = _test_one_rejects(v, z, CRIT)
        for row in range(20):
            cells = _cells_from_rows(v[row], z[row])
            if min(cells.cell(1, 1).count, cells.cell(0, 1).count) < 2:
                assert not vec[row]
                continue
            r = placebo_test_one(cells)
            if r.std_error > 0 and abs(abs(r.statistic - 1) / r.std_error - CRIT) < 1e-9:
                continue
            assert vec[row] == r.rejects(0.05)

    @given(st.integers(2, 200), st.integers(2, 200), st.data())
    def test_test_two_matches_scalar(self, n1, n0, data):
        k1 = data.draw(st.integers(0, n1))
        k0 = data.draw(st.integers(0, n0))
        cells = CellSummary.from_cells({(1, 1): Cell(k1, 0, 0), (1, 0): Cell(n1 - k1, 0, 0),
                                        (0, 1): Cell(k0, 0, 0), (0, 0): Cell(n0 - k0, 0, 0)})
        r = placebo_test_two(cells)
        vec = _test_two_rejects(np.array([k1]), n1, np.array([k0]), n0, CRIT)[0]
        if r.std_error > 0 and abs(abs(r.statistic) / r.std_error - CRIT) < 1e-9:
            return
        assert vec == r.rejects(0.05)


class TestPowerOne:
    def test_null_share_gives_alpha(self):
        cell = power_test_one_cell(400, "false-confessor", 0.0, replicates=1000, seed=1)
        assert cell.power == pytest.approx(0.05, abs=0.02)

    def test_reproducible(self):
        a = power_test_one_cell(300, "liar", 0.3, replicates=200, seed=9)
        assert power_test_one_cell(300, "liar", 0.3, replicates=200, seed=9) == a

    def test_cell_independent_of_grid(self):
        grid = GridSpec(n_yes=(200, 400), violation_type="liar", values=(0.1, 0.3), w_success=0.4)
        cells = power_test_one_grid(grid, replicates=100, seed=3)
        alone = power_test_one_cell(400, "liar", 0.3, 0.4, 100, 0.05, 3)
        assert cells[-1] == alone

    def test_thread_count_invariant(self):
        grid = GridSpec(n_yes=(100, 300, 500), violation_type="design-affected", values=(0.0, 0.5, 1.0))
        one = power_test_one_grid(grid, replicates=200, seed=5, threads=1)
        four = power_test_one_grid(grid, replicates=200, seed=5, threads=4)
        assert one == four
        assert power_csv(one) == power_csv(four)

    def test_variability_panel(self):
        grid = GridSpec.variability_panel(step=0.5)
        cells = power_test_one_grid(grid, replicates=50, seed=1)
        assert {c.share for c in cells} == {0.2}
        assert {c.w_success for c in cells} == {0.0, 0.5, 1.0}
        assert cells[0].panel == "w-success(false-confessor=0.20)"

    def test_grid_defaults(self):
        grid = GridSpec.share_sweep("liar")
        assert grid.n_yes[0] == 100 and grid.n_yes[-1] == 1000 and len(grid.n_yes) == 19
        assert len(grid.values) == 101 and grid.values[-1] == 1.0

    @pytest.mark.parametrize("kwargs", [
        {"n_yes": ()}, {"n_yes": (2,)}, {"violation_type": "other"}, {"values": (1.5,)}, {"axis": "j"},
        {"gamma": 1.0},
    ])
    def test_invalid_grid(self, kwargs):
        with pytest.raises(InvalidGrid):
            GridSpec(**kwargs)

    def test_invalid_replicates(self):
        with pytest.raises(InvalidGrid):
            power_test_one_grid(GridSpec(n_yes=(100,), values=(0.1,)), replicates=0)

    def test_power_csv_columns(self):
        cells = power_test_one_grid(GridSpec(n_yes=(100,), values=(0.2,)), replicates=20, seed=7)
        text = power_csv(cells).decode().splitlines()
        assert text[0] == "n_yes,violation_type,share_or_wsuccess,replicates,power,seed"
        assert text[1].startswith("100,false-confessor,0.2,20,")
        assert text[1].endswith(",7")

    @pytest.mark.slow
    def test_monotone_in_n_yes(self):
        for vt in ("false-confessor", "liar", "design-affected"):
            grid = GridSpec(violation_type=vt, values=tuple(round(0.1 * i, 1) for i in range(11)))
            cells = power_test_one_grid(grid, replicates=1000, seed=12)
            surface = {(c.n_yes, c.share): c.power for c in cells}
            for share in grid.values:
                powers = [surface[(n, share)] for n in grid.n_yes]
                for a, b in zip(powers, powers[1:]):
                    assert b >= a - 0.03, (vt, share)


class TestPowerTwo:
    def test_equal_proportions(self):
        assert power_test_two(0.5, 0.5, 400, 400, mode="simulated", replicates=4000, seed=1) == \
            pytest.approx(0.05, abs=0.015)

    def test_certain_difference(self):
        assert power_test_two(1.0, 0.0, 100, 100, mode="simulated", replicates=100, seed=1) == 1.0
        assert power_test_two(1.0, 0.0, 100, 100) == 1.0

    def test_modes_agree(self):
        a = power_test_two(0.6, 0.5, 500, 500)
        s = power_test_two(0.6, 0.5, 500, 500, mode="simulated", replicates=10_000, seed=2)
        assert abs(a - s) <= 0.03

    @pytest.mark.parametrize("kwargs", [{"p1": 1.5}, {"n1": 1}, {"mode": "exact"}, {"replicates": 0, "mode": "simulated"}])
    def test_invalid(self, kwargs):
        args = {"p1": 0.5, "p0": 0.4, "n1": 50, "n0": 50}
        args.update(kwargs)
        with pytest.raises(InvalidParams):
            power_test_two(**args)


class TestExperiments:
    def test_extreme_alpha_coverage(self):
        res = coverage_experiment(BASE.with_(n=2000), replicates=2000, alpha=0.5, seed=3)
        assert res.coverage == pytest.approx(0.5, abs=0.03)

    def test_small_sample_flag(self):
        res = coverage_experiment(BASE.with_(n=50), replicates=200, seed=3)
        assert SMALL_SAMPLE in res.flags
        assert res.replicates_used + res.replicates_failed == 200

    def test_coverage_requires_assumptions(self):
        with pytest.raises(InvalidParams):
            coverage_experiment(BASE.with_(share_liars=0.1), replicates=10)

    def test_coverage_thread_invariant(self):
        a = coverage_experiment(BASE.with_(n=500), replicates=60, seed=4, threads=1)
        b = coverage_experiment(BASE.with_(n=500), replicates=60, seed=4, threads=3)
        assert a == b

    def test_no_confessions_ratio_one(self):
        res = efficiency_experiment(BASE.with_(p_truthful=0.0, n=2000), replicates=200, seed=5)
        assert res.empirical_ratio == 1.0
        assert res.analytic_ratio == pytest.approx(1.0)

    def test_efficiency_requires_assumptions(self):
        with pytest.raises(InvalidParams):
            efficiency_experiment(BASE.with_(share_false_confessors=0.1), replicates=10)

    def test_high_confession_regime(self):
        res = efficiency_experiment(DgpParams(0.66, 0.99, n=5000), replicates=600, seed=6)
        assert 0.50 <= 1 - res.analytic_ratio <= 0.70
        assert res.empirical_ratio == pytest.approx(res.analytic_ratio, rel=0.15)
