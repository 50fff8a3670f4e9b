"""File formats: delimited datasets, JSON fits, prediction tables,
simulation dumps, diagnostic grids and score reports all round-trip
exactly."""

import json

import numpy as np
import pandas as pd
import pytest

from chifield.dataio import (
    load_dataset,
    load_fit,
    load_predictions,
    load_scores,
    save_copula_grid,
    save_dataset,
    save_fit,
    save_predictions,
    save_scores,
    save_simulations,
    save_variogram,
)
from chifield.exceptions import DomainError
from chifield.inference import (
    Dataset,
    FitResult,
    ModelSpec,
    VariogramEstimate,
)
from chifield.process import Site


def full_dataset():
    rng = np.random.default_rng(7)
    sites = [
        Site(
            coords=(float(x), float(y)),
            time=float(t),
            covariates=(float(c1), float(c2)),
        )
        for x, y, t, c1, c2 in zip(
            rng.uniform(0, 5, 6),
            rng.uniform(0, 5, 6),
            np.arange(6.0),
            rng.normal(size=6),
            rng.normal(size=6),
        )
    ]
    values = rng.gamma(2.0, 1.0, size=6) + 0.01
    stations = np.array(["a", "a", "b", "b", "c", "c"])
    scale = {"a": 1.5, "b": 2.0, "c": 0.5}
    return Dataset(sites, values, stations=stations, station_scale=scale)


class TestDatasetRoundTrip:
    def test_full_featured(self, tmp_path):
        ds = full_dataset()
        path = tmp_path / "data.csv"
        save_dataset(ds, path)
        back = load_dataset(path)
        np.testing.assert_array_equal(back.coords, ds.coords)
        np.testing.assert_array_equal(back.values, ds.values)
        np.testing.assert_array_equal(back.times, ds.times)
        np.testing.assert_array_equal(back.covariates, ds.covariates)
        np.testing.assert_array_equal(back.stations, ds.stations)
        assert back.station_scale == ds.station_scale

    def test_minimal_one_dimensional(self, tmp_path):
        sites = [Site(coords=(p,)) for p in (0.0, 0.25, 1.0)]
        ds = Dataset(sites, [1.0, 2.0, 3.0])
        path = tmp_path / "data.csv"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.times is None
        assert back.stations is None
        assert back.covariates.shape == (3, 0)
        np.testing.assert_array_equal(back.coords, ds.coords)
        np.testing.assert_array_equal(back.values, ds.values)

    def test_three_dimensional_coordinates(self, tmp_path):
        sites = [Site(coords=(1.0, 2.0, 3.0)), Site(coords=(4.0, 5.0, 6.0))]
        ds = Dataset(sites, [1.0, 2.0])
        path = tmp_path / "data.csv"
        save_dataset(ds, path)
        back = load_dataset(path)
        np.testing.assert_array_equal(back.coords, ds.coords)

    def test_zero_offset_replaces_exact_zeros(self, tmp_path):
        path = tmp_path / "data.csv"
        pd.DataFrame({"x": [0.0, 1.0], "value": [0.0, 2.0]}).to_csv(
            path, index=False
        )
        with pytest.raises(DomainError, match="offset"):
            load_dataset(path)
        back = load_dataset(path, zero_offset=0.01)
        assert back.values[0] == 0.01
        assert back.values[1] == 2.0

    def test_zero_offset_must_be_positive(self, tmp_path):
        path = tmp_path / "data.csv"
        pd.DataFrame({"x": [0.0], "value": [1.0]}).to_csv(path, index=False)
        with pytest.raises(DomainError, match="zero_offset"):
            load_dataset(path, zero_offset=-1.0)

    def test_missing_value_column_rejected(self, tmp_path):
        path = tmp_path / "data.csv"
        pd.DataFrame({"x": [0.0, 1.0]}).to_csv(path, index=False)
        with pytest.raises(DomainError, match="value"):
            load_dataset(path)

    def test_exact_floats_survive(self, tmp_path):
        value = 1.0 / 3.0 + 1e-16
        ds = Dataset([Site(coords=(np.pi,))], [value])
        path = tmp_path / "data.csv"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.values[0] == value
        assert back.coords[0, 0] == np.pi


class TestFitRoundTrip:
    def make_fit(self):
        spec = ModelSpec("weibull", "exponential", n_covariates=1)
        theta = np.array([0.2, -0.1, 2.5, 0.3])
        return FitResult(
            theta_hat=theta,
            theta_names=spec.param_names,
            loglik=-123.456,
            converged=True,
            iterations=88,
            n_evaluations=150,
            n_pairs=420,
            spec=spec,
            std_errors=np.array([0.05, 0.04, 0.3, 0.08]),
            plic=321.5,
            hessian=np.eye(4) * 2.0,
            j_matrix=np.eye(4) * 3.0,
            subsample_info={"block_length": 5.0, "n_blocks": 12},
        )

    def test_everything_survives(self, tmp_path):
        fit = self.make_fit()
        path = tmp_path / "fit.json"
        save_fit(fit, path)
        back = load_fit(path)
        np.testing.assert_array_equal(back.theta_hat, fit.theta_hat)
        assert back.theta_names == fit.theta_names
        np.testing.assert_array_equal(back.std_errors, fit.std_errors)
        assert back.loglik == fit.loglik
        assert back.plic == fit.plic
        assert back.converged is True
        assert back.iterations == fit.iterations
        assert back.n_evaluations == fit.n_evaluations
        assert back.n_pairs == fit.n_pairs
        np.testing.assert_array_equal(back.hessian, fit.hessian)
        np.testing.assert_array_equal(back.j_matrix, fit.j_matrix)
        assert back.subsample_info == fit.subsample_info
        assert back.spec.marginal == "weibull"
        assert back.spec.correlation == "exponential"
        assert back.spec.n_covariates == 1
        assert back.named_estimates() == fit.named_estimates()

    def test_optional_fields_absent(self, tmp_path):
        spec = ModelSpec("loggaussian", "spacetime", phi_st=0.0)
        fit = FitResult(
            theta_hat=np.array([0.1, 0.5, 1.0, 2.0]),
            theta_names=spec.param_names,
            loglik=-5.0,
            converged=False,
            iterations=3,
            n_evaluations=9,
            n_pairs=10,
            spec=spec,
        )
        path = tmp_path / "fit.json"
        save_fit(fit, path)
        back = load_fit(path)
        assert back.std_errors is None
        assert back.plic is None
        assert back.hessian is None
        assert back.converged is False
        assert back.spec.phi_st == 0.0
        assert back.spec.param_names == spec.param_names

    def test_file_is_plain_json(self, tmp_path):
        path = tmp_path / "fit.json"
        save_fit(self.make_fit(), path)
        doc = json.loads(path.read_text())
        assert set(doc) >= {"estimates", "theta_hat", "spec", "plic"}


class TestPredictions:
    def test_round_trip_with_observations(self, tmp_path):
        path = tmp_path / "pred.csv"
        save_predictions(
            path,
            target_ids=["p1", "p2"],
            points=[1.5, 2.5],
            mspes=[0.2, 0.3],
            observed=[1.4, 2.7],
            crps=[0.11, 0.22],
        )
        back = load_predictions(path)
        assert list(back.columns) == [
            "target_id",
            "point",
            "mspe",
            "observed",
            "crps",
        ]
        assert back["point"].tolist() == [1.5, 2.5]
        assert back["crps"].tolist() == [0.11, 0.22]

    def test_optional_columns_omitted(self, tmp_path):
        path = tmp_path / "pred.csv"
        save_predictions(path, ["a"], [1.0], [0.5])
        back = load_predictions(path)
        assert list(back.columns) == ["target_id", "point", "mspe"]

    def test_misaligned_rejected(self, tmp_path):
        with pytest.raises(DomainError, match="aligned"):
            save_predictions(tmp_path / "p.csv", ["a"], [1.0, 2.0], [0.1, 0.2])
        with pytest.raises(DomainError, match="observed"):
            save_predictions(
                tmp_path / "p.csv", ["a"], [1.0], [0.1], observed=[1.0, 2.0]
            )

    def test_load_requires_point_column(self, tmp_path):
        path = tmp_path / "pred.csv"
        pd.DataFrame({"foo": [1]}).to_csv(path, index=False)
        with pytest.raises(DomainError):
            load_predictions(path)


class TestSimulations:
    def test_long_format(self, tmp_path):
        sites = [Site(coords=(0.0, 0.0)), Site(coords=(1.0, 2.0))]
        draws = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        path = tmp_path / "sims.csv"
        save_simulations(path, sites, draws)
        df = pd.read_csv(path)
        assert list(df.columns) == ["site_id", "x", "y", "rep", "value"]
        assert len(df) == 6
        row = df[(df.site_id == 1) & (df.rep == 2)]
        assert row["value"].iloc[0] == 6.0
        assert row["x"].iloc[0] == 1.0

    def test_time_column_present_when_stamped(self, tmp_path):
        sites = [Site(coords=(0.0,), time=3.0), Site(coords=(1.0,), time=4.0)]
        path = tmp_path / "sims.csv"
        save_simulations(path, sites, np.ones((2, 2)))
        df = pd.read_csv(path)
        assert "t" in df.columns
        assert sorted(df["t"].unique().tolist()) == [3.0, 4.0]

    def test_shape_mismatch_rejected(self, tmp_path):
        with pytest.raises(DomainError, match="aligned"):
            save_simulations(
                tmp_path / "s.csv", [Site(coords=(0.0,))], np.ones((2, 3))
            )


class TestDiagnosticsOutputs:
    def test_copula_grid(self, tmp_path):
        z1 = np.array([0.1, 0.2])
        z2 = np.array([0.3, 0.4, 0.5])
        dens = np.arange(6.0).reshape(2, 3)
        path = tmp_path / "grid.csv"
        save_copula_grid(path, z1, z2, dens)
        df = pd.read_csv(path)
        assert len(df) == 6
        row = df[(df.z1 == 0.2) & (df.z2 == 0.5)]
        assert row["density"].iloc[0] == 5.0

    def test_copula_grid_shape_checked(self, tmp_path):
        with pytest.raises(DomainError, match="shape"):
            save_copula_grid(
                tmp_path / "g.csv", [0.1], [0.2], np.ones((2, 2))
            )

    def test_variogram(self, tmp_path):
        est = VariogramEstimate(
            bin_centers=np.array([0.5, 1.5]),
            semivariance=np.array([0.2, 0.8]),
            counts=np.array([10, 4]),
            axis="spatial",
        )
        path = tmp_path / "vario.csv"
        save_variogram(path, est)
        df = pd.read_csv(path)
        assert list(df.columns) == ["lag", "semivariance", "n_pairs"]
        assert df["n_pairs"].tolist() == [10, 4]


class TestScores:
    def test_round_trip(self, tmp_path):
        scores = {
            "weibull": {"rmse": 0.44, "mae": 0.34, "mean_crps": 0.30},
            "naive": {"rmse": 0.66, "mae": 0.51},
        }
        path = tmp_path / "scores.json"
        save_scores(path, scores)
        assert load_scores(path) == scores

    def test_non_finite_rejected(self, tmp_path):
        with pytest.raises(DomainError, match="finite"):
            save_scores(tmp_path / "s.json", {"rmse": float("nan")})
        with pytest.raises(DomainError, match="finite"):
            save_scores(
                tmp_path / "s.json", {"nested": {"bad": float("inf")}}
            )
