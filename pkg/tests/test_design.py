import numpy as np
import pytest

from trialtransport.data import StudyDataset
from trialtransport.design import (
    Interaction,
    KnotSet,
    MainEffect,
    ModelSpec,
    Spline,
    build_design,
    choose_knots,
    fit_knots,
    parse_term,
    rcs_basis,
)
from trialtransport.errors import ConfigError, MissingValue, TooFewDistinctValues, UnknownColumn


def sorted_quantile(x, q):
    """Type-7 empirical quantile from the order statistics."""
    xs = sorted(x)
    h = (len(xs) - 1) * q
    lo = int(np.floor(h))
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def covariate_data(columns: dict, n=None):
    names = tuple(columns)
    x = np.column_stack([np.asarray(columns[c], dtype=float) for c in names])
    n = x.shape[0]
    s = np.zeros(n, dtype=int)
    s[0] = 1
    return StudyDataset.from_arrays(s, [0] * n, [0.0] * n, x, names, (0,))


class TestChooseKnots:
    def test_three_knots_on_permutation(self, rng):
        x = rng.permutation(np.arange(1, 101))
        ks = choose_knots(x, 3)
        expected = [sorted_quantile(x, q) for q in (0.10, 0.50, 0.90)]
        np.testing.assert_allclose(ks.knots, expected, atol=1e-12)

    def test_too_few_distinct(self):
        with pytest.raises(TooFewDistinctValues):
            choose_knots([1, 1, 1, 2, 2, 3, 3, 3, 3], 5)

    def test_normal_draws_match_sort_oracle(self):
        x = np.random.default_rng(42).standard_normal(1000)
        ks = choose_knots(x, 5)
        expected = [sorted_quantile(x, q) for q in (0.05, 0.275, 0.50, 0.725, 0.95)]
        np.testing.assert_allclose(ks.knots, expected, atol=1e-12)

    def test_bad_k(self):
        with pytest.raises(ConfigError):
            choose_knots(np.arange(20.0), 8)


class TestRcsBasis:
    def test_first_knot_gives_zero_nonlinear_terms(self):
        knots = KnotSet("x", np.array([0.0, 1.0, 2.5, 4.0, 7.0]))
        b = rcs_basis([0.0, -1.0, -10.0], knots)
        assert b.shape == (3, 4)
        np.testing.assert_array_equal(b[:, 1:], 0.0)

    def test_hand_expansion_three_knots(self):
        # knots (0, 1, 2), x = 3:
        # (3-0)^3 - (3-1)^3 (2-0)/(2-1) + (3-2)^3 (1-0)/(2-1) = 27 - 16 + 1 = 12,
        # divided by (2 - 0)^2 = 4
        b = rcs_basis([3.0], np.array([0.0, 1.0, 2.0]))
        np.testing.assert_allclose(b[0], [3.0, 3.0], atol=1e-12)

    def test_linear_beyond_boundary_knots(self):
        knots = np.array([0.0, 1.0, 2.5, 4.0, 7.0])
        h = 1e-2
        for x0 in (-5.0, -1.0, 8.0, 20.0):
            f = rcs_basis([x0 - h, x0, x0 + h], knots)
            second = (f[0] - 2 * f[1] + f[2]) / h**2
            np.testing.assert_allclose(second, 0.0, atol=1e-6)

    def test_curved_inside(self):
        knots = np.array([0.0, 1.0, 2.5, 4.0, 7.0])
        h = 1e-2
        f = rcs_basis([1.5 - h, 1.5, 1.5 + h], knots)
        assert np.abs((f[0] - 2 * f[1] + f[2]) / h**2).max() > 1e-3


class TestParse:
    def test_terms(self):
        assert parse_term("age") == MainEffect("age")
        assert parse_term("age*angina") == Interaction("age", "angina")
        assert parse_term("age:rcs5") == Spline("age", 5)

    @pytest.mark.parametrize("bad", ["age:rcsx", "a*", "", "age:spline3", "age:rcs9"])
    def test_bad_terms(self, bad):
        with pytest.raises(ConfigError):
            parse_term(bad)

    def test_roundtrip_strings(self):
        terms = ["age:rcs5", "angina", "lad_pct", "age*angina"]
        assert ModelSpec.parse(terms).to_strings() == terms


class TestBuildDesign:
    def test_intercept_and_main_effect(self):
        data = covariate_data({"x1": [0.0, 1.0]})
        X = build_design(ModelSpec.parse(["x1"]), data)
        np.testing.assert_array_equal(X, [[1, 0], [1, 1]])

    def test_interaction_is_product(self, rng):
        data = covariate_data({"x1": rng.normal(size=9), "x2": rng.normal(size=9)})
        X = build_design(ModelSpec.parse(["x1", "x2", "x1*x2"]), data)
        np.testing.assert_array_equal(X[:, 3], X[:, 1] * X[:, 2])

    def test_spline_matches_basis(self, rng):
        age = rng.normal(50, 8, size=300)
        data = covariate_data({"age": age, "z": rng.normal(size=300)})
        X = build_design(ModelSpec.parse(["age:rcs5", "z"]), data)
        np.testing.assert_array_equal(X[:, 1:5], rcs_basis(age, choose_knots(age, 5)))
        assert X.shape[1] == ModelSpec.parse(["age:rcs5", "z"]).width == 1 + 4 + 1

    def test_knot_bank_used_verbatim(self, rng):
        age = rng.normal(50, 8, size=100)
        data = covariate_data({"age": age})
        bank = [KnotSet("age", np.array([10.0, 40.0, 50.0, 60.0, 90.0]))]
        X = build_design(ModelSpec.parse(["age:rcs5"]), data, bank)
        np.testing.assert_array_equal(X[:, 1:], rcs_basis(age, bank[0]))

    def test_fit_knots_then_subset_reuses_full_data_knots(self, rng):
        age = rng.normal(50, 8, size=200)
        data = covariate_data({"age": age})
        spec = ModelSpec.parse(["age:rcs4"])
        bank = fit_knots([spec], data)
        sub = data.take(np.arange(50))
        np.testing.assert_array_equal(
            build_design(spec, sub, bank)[:, 1:], rcs_basis(age[:50], choose_knots(age, 4))
        )

    def test_deterministic(self, rng):
        data = covariate_data({"a": rng.normal(size=40), "b": rng.normal(size=40)})
        spec = ModelSpec.parse(["a:rcs3", "b", "a*b"])
        assert build_design(spec, data).tobytes() == build_design(spec, data).tobytes()

    def test_no_intercept(self):
        data = covariate_data({"x1": [2.0, 3.0]})
        X = build_design(ModelSpec.parse(["x1"], intercept=False), data)
        np.testing.assert_array_equal(X, [[2.0], [3.0]])

    def test_unknown_column(self):
        data = covariate_data({"x1": [0.0, 1.0]})
        with pytest.raises(UnknownColumn):
            build_design(ModelSpec.parse(["nope"]), data)

    def test_missing_value(self):
        data = covariate_data({"x1": [0.0, np.nan]})
        with pytest.raises(MissingValue):
            build_design(ModelSpec.parse(["x1"]), data)
