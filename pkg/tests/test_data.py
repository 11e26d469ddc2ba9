"""Tests for trial containers, CSV round-trips, and covariate scaling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ordinalsr.data import (
    ScalingParams,
    TrialDataset,
    apply_scaling,
    compute_utility,
    fit_scaling,
    load_csv,
    load_scaling,
    save_csv,
    save_scaling,
)
from ordinalsr.exceptions import DataError


def _toy(n=6, p=3, k=3, seed=0, with_prop=True, with_opt=True):
    rng = np.random.default_rng(seed)
    return TrialDataset(
        features=rng.normal(size=(n, p)),
        treatment=rng.integers(1, k + 1, size=n),
        outcome=rng.normal(size=n),
        k_arms=k,
        propensity=np.full(n, 1.0 / k) if with_prop else None,
        true_optimal=rng.integers(1, k + 1, size=n) if with_opt else None,
    )


class TestTrialDataset:
    def test_basic_properties(self):
        d = _toy(n=7, p=4)
        assert d.n == 7
        assert d.p == 4
        assert d.feature_names == ("x1", "x2", "x3", "x4")

    def test_arrays_are_readonly(self):
        d = _toy()
        with pytest.raises(ValueError):
            d.features[0, 0] = 99.0
        with pytest.raises(ValueError):
            d.treatment[0] = 2

    def test_treatment_out_of_range_rejected(self):
        with pytest.raises(DataError):
            TrialDataset(
                features=np.zeros((3, 1)),
                treatment=np.array([1, 2, 4]),
                outcome=np.zeros(3),
                k_arms=3,
            )
        with pytest.raises(DataError):
            TrialDataset(
                features=np.zeros((3, 1)),
                treatment=np.array([0, 1, 2]),
                outcome=np.zeros(3),
                k_arms=3,
            )

    def test_nonfinite_rejected(self):
        with pytest.raises(DataError):
            TrialDataset(
                features=np.array([[np.nan]]),
                treatment=np.array([1]),
                outcome=np.zeros(1),
                k_arms=2,
            )
        with pytest.raises(DataError):
            TrialDataset(
                features=np.zeros((1, 1)),
                treatment=np.array([1]),
                outcome=np.array([np.inf]),
                k_arms=2,
            )

    def test_bad_propensity_rejected(self):
        for bad in ([0.0, 0.5, 0.5], [0.5, 0.5, 1.5]):
            with pytest.raises(DataError):
                TrialDataset(
                    features=np.zeros((3, 1)),
                    treatment=np.array([1, 1, 2]),
                    outcome=np.zeros(3),
                    k_arms=2,
                    propensity=np.array(bad),
                )

    def test_effective_propensity_defaults_uniform(self):
        d = _toy(k=3, with_prop=False)
        np.testing.assert_allclose(d.effective_propensity(), 1.0 / 3.0)

    def test_relabel_reversed_is_involution(self):
        d = _toy(k=4)
        back = d.relabel_reversed().relabel_reversed()
        np.testing.assert_array_equal(back.treatment, d.treatment)
        np.testing.assert_array_equal(back.true_optimal, d.true_optimal)

    def test_relabel_reversed_maps_ends(self):
        d = _toy(k=3)
        rev = d.relabel_reversed()
        np.testing.assert_array_equal(rev.treatment, 4 - d.treatment)


class TestCsvRoundTrip:
    def test_round_trip_exact(self, tmp_path):
        d = _toy(n=9, p=2, seed=3)
        path = tmp_path / "trial.csv"
        save_csv(d, path)
        back = load_csv(path)
        np.testing.assert_array_equal(back.features, d.features)
        np.testing.assert_array_equal(back.treatment, d.treatment)
        np.testing.assert_array_equal(back.outcome, d.outcome)
        np.testing.assert_array_equal(back.propensity, d.propensity)
        np.testing.assert_array_equal(back.true_optimal, d.true_optimal)

    def test_round_trip_byte_identical(self, tmp_path):
        d = _toy(n=5, p=2, seed=9)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_csv(d, p1)
        save_csv(load_csv(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_no_numpy_reprs_in_file(self, tmp_path):
        d = _toy(n=4)
        path = tmp_path / "t.csv"
        save_csv(d, path)
        assert "np.float64" not in path.read_text()

    def test_optional_columns_absent(self, tmp_path):
        d = _toy(with_prop=False, with_opt=False)
        path = tmp_path / "t.csv"
        save_csv(d, path)
        back = load_csv(path)
        assert back.propensity is None
        assert back.true_optimal is None

    def test_k_arms_defaults_to_max_label(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("x1,a,y\n0.1,1,2.0\n0.2,3,1.0\n")
        assert load_csv(path).k_arms == 3
        assert load_csv(path, k_arms=5).k_arms == 5

    def test_malformed_rows_raise(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("x1,a,y\n0.1,1\n")
        with pytest.raises(DataError):
            load_csv(path)
        path.write_text("x1,a,y\n0.1,1.5,2.0\n")
        with pytest.raises(DataError):
            load_csv(path)
        path.write_text("x1,y\n0.1,2.0\n")
        with pytest.raises(DataError):
            load_csv(path)
        path.write_text("")
        with pytest.raises(DataError):
            load_csv(path)

    def test_reverse_arms_flag(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("x1,a,y\n0.1,1,2.0\n0.2,3,1.0\n")
        rev = load_csv(path, reverse_arms=True)
        np.testing.assert_array_equal(rev.treatment, [3, 1])


class TestScaling:
    def test_min_max_map_to_unit_interval_ends(self):
        X = np.array([[0.0, -3.0], [2.0, 5.0], [1.0, 1.0]])
        params = fit_scaling(X)
        Z = apply_scaling(params, X)
        np.testing.assert_allclose(Z.min(axis=0), -1.0)
        np.testing.assert_allclose(Z.max(axis=0), 1.0)

    def test_degenerate_column_maps_to_zero(self):
        X = np.array([[1.0, 2.0], [1.0, 4.0]])
        params = fit_scaling(X)
        Z = apply_scaling(params, np.array([[1.0, 3.0], [7.0, 3.0]]))
        np.testing.assert_allclose(Z[:, 0], 0.0)

    def test_out_of_range_not_clipped(self):
        params = ScalingParams(mins=np.array([0.0]), maxs=np.array([1.0]))
        Z = apply_scaling(params, np.array([[2.0]]))
        assert Z[0, 0] == pytest.approx(3.0)

    def test_dimension_mismatch(self):
        params = ScalingParams(mins=np.zeros(2), maxs=np.ones(2))
        with pytest.raises(DataError):
            apply_scaling(params, np.zeros((3, 3)))

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6),
            min_size=2,
            max_size=12,
        )
    )
    def test_affine_map_invertible(self, values):
        X = np.array(values)[:, None]
        params = fit_scaling(X)
        Z = apply_scaling(params, X)
        if params.degenerate[0]:
            np.testing.assert_allclose(Z[:, 0], 0.0)
            return
        span = params.maxs[0] - params.mins[0]
        back = (Z[:, 0] + 1.0) / 2.0 * span + params.mins[0]
        np.testing.assert_allclose(back, X[:, 0], rtol=1e-9, atol=1e-6)

    def test_scaling_file_round_trip(self, tmp_path):
        params = fit_scaling(np.random.default_rng(0).normal(size=(5, 3)))
        path = tmp_path / "scaling.csv"
        save_scaling(params, path)
        back = load_scaling(path)
        np.testing.assert_array_equal(back.mins, params.mins)
        np.testing.assert_array_equal(back.maxs, params.maxs)
        assert "np.float64" not in path.read_text()


class TestUtility:
    def test_linear_tradeoff(self):
        np.testing.assert_allclose(
            compute_utility([3.0, 1.0], [1.0, 2.0], b=0.5), [2.5, 0.0]
        )

    def test_zero_tradeoff_ignores_risk(self):
        np.testing.assert_allclose(compute_utility([3.0], [99.0], b=0.0), [3.0])

    def test_negative_tradeoff_rejected(self):
        with pytest.raises(DataError):
            compute_utility([1.0], [1.0], b=-0.1)
