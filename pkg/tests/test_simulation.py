import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from trialtransport.errors import ConfigError, DegenerateCohort, TooManyFailures
from trialtransport.estimators import ESTIMATORS
from trialtransport.simulation import (
    CSV_COLUMNS,
    ScenarioConfig,
    correct_config,
    expand_grid,
    generate_cohort,
    standard_grid,
    run_factorial,
    run_scenario,
    simulation_csv,
    solve_beta0,
    true_means,
    with_replications,
)

pytestmark = pytest.mark.filterwarnings("ignore::trialtransport.errors.PositivityWarning")


class TestSolveBeta0:
    def test_no_selection(self):
        assert solve_beta0(0.5, (0.0, 0.0, 0.0)) == pytest.approx(0.0, abs=1e-9)
        # without covariate effects the intercept is just the logit
        assert solve_beta0(0.1, (0.0, 0.0, 0.0)) == pytest.approx(math.log(0.1 / 0.9), abs=1e-9)

    @given(beta=st.tuples(*[st.floats(-3, 3)] * 3))
    @settings(max_examples=30, deadline=None)
    def test_symmetry(self, beta):
        assert solve_beta0(0.5, beta) == pytest.approx(0.0, abs=1e-8)

    @given(t1=st.floats(0.01, 0.98), gap=st.floats(0.005, 0.5), b=st.floats(0, 3))
    @settings(max_examples=40, deadline=None)
    def test_monotone(self, t1, gap, b):
        t2 = min(t1 + gap, 0.99)
        assert solve_beta0(t2, (b, 1.0, 1.0)) > solve_beta0(t1, (b, 1.0, 1.0))

    def test_monte_carlo_oracle(self):
        b0 = solve_beta0(0.1, (1.0, 1.0, 1.0))
        rng = np.random.default_rng(7)
        total, total_sq, draws = 0.0, 0.0, 0
        for _ in range(10):
            v = expit(b0 + math.sqrt(3.0) * rng.standard_normal(1_000_000))
            total += v.sum()
            total_sq += np.dot(v, v)
            draws += v.size
        mean = total / draws
        se = math.sqrt((total_sq / draws - mean**2) / draws)
        assert abs(mean - 0.1) < 3 * se

    def test_bad_target(self):
        with pytest.raises(ConfigError):
            solve_beta0(1.0, (1, 1, 1))


class TestScenarioConfig:
    @pytest.mark.parametrize("kwargs", [
        {"n": 100, "target_n_rct": 100}, {"n": 100, "target_n_rct": 0},
        {"n": 100, "target_n_rct": 10, "replications": 0},
        {"n": 100, "target_n_rct": 10, "beta": (1.0, 1.0)},
        {"n": 100, "target_n_rct": 10, "outcome_kind": "count"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ScenarioConfig(**kwargs)

    def test_derived(self):
        sc = ScenarioConfig(n=2000, target_n_rct=1000)
        assert sc.beta1 == 1.0 and sc.theta_diff == 1.0
        assert sc.beta0 == solve_beta0(0.5, (1.0, 1.0, 1.0))


class TestGenerator:
    def test_structure_and_consistency(self):
        c = generate_cohort(ScenarioConfig(n=3000, target_n_rct=800), 4)
        d = c.data
        trial = d.s == 1
        assert np.all(d.a[~trial] == -1) and np.all(np.isnan(d.y[~trial]))
        expected = np.where(d.a == 1, c.y1, c.y0)
        np.testing.assert_array_equal(d.y[trial], expected[trial])

    def test_replicates_are_reproducible_and_distinct(self):
        sc = ScenarioConfig(n=500, target_n_rct=100)
        a, b = generate_cohort(sc, 3).data, generate_cohort(sc, 3).data
        np.testing.assert_array_equal(a.x, b.x)
        assert not np.array_equal(a.x, generate_cohort(sc, 4).data.x)

    def test_covariate_moments(self):
        x = generate_cohort(ScenarioConfig(n=100_000, target_n_rct=10_000), 0).data.x
        n = x.shape[0]
        for j in range(3):
            assert abs(x[:, j].mean()) < 4 / math.sqrt(n)
            # SE of the sample SD of a normal is about 1/sqrt(2n)
            assert abs(x[:, j].std(ddof=1) - 1.0) < 4 / math.sqrt(2 * n)

    def test_trial_size_calibration(self):
        sc = ScenarioConfig(n=2000, target_n_rct=1000)
        sizes = np.array([generate_cohort(sc, r).data.s.sum() for r in range(1000)])
        assert abs(sizes.mean() - 1000) < 3 * sizes.std(ddof=1) / math.sqrt(1000)

    def test_binary_outcomes(self):
        d = generate_cohort(ScenarioConfig(n=500, target_n_rct=200, outcome_kind="binary"), 0).data
        assert set(np.unique(d.y[d.s == 1])) <= {0.0, 1.0}

    def test_degenerate(self):
        sc = ScenarioConfig(n=5, target_n_rct=1e-6, beta=(0.0, 0.0, 0.0))
        with pytest.raises(DegenerateCohort):
            generate_cohort(sc, 0)


class TestTruth:
    def test_effect_matches_quadrature(self):
        sc = ScenarioConfig(n=2000, target_n_rct=1000, theta1=(1.0, 2.0, 1.0, 1.0))
        # E[X1 | S=0] by 2-d Gauss-Hermite over X1 and the rest of the linear predictor
        z, w = np.polynomial.hermite.hermgauss(64)
        z, w = z * math.sqrt(2), w / math.sqrt(math.pi)
        x1, r = np.meshgrid(z, z, indexing="ij")
        ww = np.outer(w, w)
        q = 1 - expit(sc.beta0 + x1 + math.sqrt(2) * r)
        ex1 = (ww * q * x1).sum() / (ww * q).sum()
        truth = true_means(sc, 1_000_000)
        assert truth["effect"] == pytest.approx(1.0 + ex1, abs=5e-3)
        # trial-only estimator targets the S=1 effect; the gap is its exact bias
        p = 1 - q
        bias = (ww * p * x1).sum() / (ww * p).sum() - ex1
        assert bias == pytest.approx(0.6576, abs=1e-3)

    def test_no_selection_truth(self):
        sc = ScenarioConfig(n=2000, target_n_rct=1000, beta=(0.0, 0.0, 0.0))
        assert true_means(sc, 200_000)["effect"] == pytest.approx(1.0, abs=0.01)

    def test_binary_truth_in_range(self):
        t = true_means(ScenarioConfig(n=2000, target_n_rct=500, outcome_kind="binary"), 100_000)
        assert 0 < t["mu0"] < 1 and 0 < t["mu1"] < 1


class TestRunScenario:
    def test_null_scenario_unbiased(self):
        sc = ScenarioConfig(n=1000, target_n_rct=400, beta=(0.0, 1.0, 1.0),
                            theta1=(0.0, 1.0, 1.0, 1.0), replications=200, seed=2)
        summ = run_scenario(sc, truth_draws=100_000)
        assert summ.truth["effect"] == 0.0
        for name, e in summ.estimators.items():
            assert abs(e.bias) <= 3 * e.mc_se_bias, name
            assert e.mc_se_bias == pytest.approx(math.sqrt(e.variance / summ.replicates))

    def test_no_selection_trial_only_unbiased(self):
        sc = ScenarioConfig(n=1000, target_n_rct=400, beta=(0.0, 0.0, 0.0), replications=200, seed=2)
        e = run_scenario(sc, correct_config(estimators=("Trial",)), truth_draws=200_000).estimators["Trial"]
        assert abs(e.bias) <= 3 * math.hypot(e.mc_se_bias, 0.005)

    def test_too_many_degenerate(self):
        sc = ScenarioConfig(n=5, target_n_rct=0.05, beta=(0.0, 0.0, 0.0), replications=20)
        with pytest.raises(TooManyFailures):
            run_scenario(sc, truth_draws=1000)

    def test_workers_do_not_change_results(self):
        sc = ScenarioConfig(n=400, target_n_rct=150, replications=12, seed=8)
        a = run_scenario(sc, truth_draws=10_000, workers=1)
        b = run_scenario(sc, truth_draws=10_000, workers=3)
        assert simulation_csv([a]) == simulation_csv([b])


class TestFactorial:
    def test_standard_grid(self):
        grid = standard_grid()
        assert len(grid) == 36
        assert {(g.n, g.target_n_rct) for g in grid} >= {(2000, 1000.0), (10000, 200.0)}

    def test_expand_grid_skips_impossible(self):
        grid = expand_grid(n=[500, 2000], n_rct=[200, 1000])
        assert [(g.n, g.target_n_rct) for g in grid] == [(500, 200.0), (2000, 200.0), (2000, 1000.0)]

    def test_sub_grid_csv(self):
        grid = expand_grid(n=[600], n_rct=[200], beta1=[1.0, 0.0], theta1_1=[2.0, 1.0],
                           replications=10, seed=4)
        summaries = run_factorial(grid, truth_draws=20_000)
        text = simulation_csv(summaries)
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + 4 * len(ESTIMATORS)
        assert {line.split(",")[4] for line in lines[1:]} == set(ESTIMATORS)
        assert simulation_csv(run_factorial(grid, truth_draws=20_000)) == text

    def test_with_replications(self):
        grid = with_replications(standard_grid()[:2], replications=5, seed=9)
        assert all(g.replications == 5 and g.seed == 9 for g in grid)
