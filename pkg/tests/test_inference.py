"""Tests for pair selection, composite-likelihood fitting, sandwich
variance machinery, and the exploratory diagnostics."""

import math
import warnings

import numpy as np
import pytest
from scipy import special as sp
from scipy import stats

from chifield.correlation import Exponential, corr_array, weibull_nu
from chifield.density import (
    loggaussian_pair_log_density_arrays,
    weibull_pair_log_density_arrays,
)
from chifield.exceptions import (
    DomainError,
    NoPairsError,
    RankDeficientError,
    SingularSystemError,
    TooFewBlocksError,
)
from chifield.inference import (
    Dataset,
    ModelSpec,
    WeightSpec,
    default_init,
    empirical_semivariogram,
    fit_ml_chain,
    fit_mwpl,
    harmonic_design,
    harmonic_prefit,
    intercept_correction,
    make_blocks,
    normal_scores,
    numeric_hessian,
    pairwise_loglik,
    plic,
    relative_efficiency,
    select_pairs,
    subsample_variability,
    tail_dependence_diagnostic,
)
from chifield.process import Site, WeibullFieldModel, simulate_weibull


def chain_dataset(
    n=30,
    seed=5,
    kappa=2.0,
    phi=0.3,
    beta=None,
    with_covariate=False,
    span=1.0,
):
    rng = np.random.default_rng(seed)
    pos = np.linspace(0.0, span, n)
    if with_covariate:
        cov = rng.uniform(0.0, 1.0, size=n)
        sites = [Site(coords=(p,), covariates=(v,)) for p, v in zip(pos, cov)]
        beta = beta if beta is not None else (0.0, 0.0)
    else:
        sites = [Site(coords=(p,)) for p in pos]
        beta = beta if beta is not None else (0.0,)
    model = WeibullFieldModel(kappa=kappa, beta=beta, corr=Exponential(phi=phi))
    values = simulate_weibull(model, sites, n_reps=1, seed=seed)[:, 0]
    return Dataset(sites, values), model


def spacetime_dataset(n_stations=4, n_times=12, seed=9):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 1.0, size=(n_stations, 2))
    sites = []
    values = []
    stations = []
    for t in range(n_times):
        for k in range(n_stations):
            sites.append(Site(coords=tuple(coords[k]), time=float(t)))
            values.append(rng.uniform(0.2, 2.0))
            stations.append(f"s{k}")
    return Dataset(sites, values, stations=stations)


class TestDataset:
    def test_accessors(self):
        ds, _ = chain_dataset(n=8, with_covariate=True)
        assert ds.n == 8
        assert ds.coords.shape == (8, 1)
        assert ds.times is None
        assert ds.covariates.shape == (8, 1)

    def test_time_stamps_collected(self):
        ds = spacetime_dataset()
        assert ds.times is not None and ds.times.shape == (48,)
        assert ds.stations.shape == (48,)

    def test_rejects_nonpositive_values(self):
        sites = [Site(coords=(0.0,)), Site(coords=(1.0,))]
        with pytest.raises(DomainError, match="offset"):
            Dataset(sites, [1.0, 0.0])
        with pytest.raises(DomainError):
            Dataset(sites, [1.0, -2.0])

    def test_rejects_mixed_time_presence(self):
        sites = [Site(coords=(0.0,), time=0.0), Site(coords=(1.0,))]
        with pytest.raises(DomainError):
            Dataset(sites, [1.0, 1.0])

    def test_rejects_misaligned_stations(self):
        sites = [Site(coords=(0.0,)), Site(coords=(1.0,))]
        with pytest.raises(DomainError):
            Dataset(sites, [1.0, 1.0], stations=["a"])

    def test_station_scale_positive(self):
        sites = [Site(coords=(0.0,))]
        with pytest.raises(DomainError):
            Dataset(sites, [1.0], station_scale={"a": 0.0})

    def test_with_covariates(self):
        ds, _ = chain_dataset(n=5)
        new = ds.with_covariates(np.arange(10.0).reshape(5, 2))
        assert new.covariates.shape == (5, 2)
        np.testing.assert_array_equal(new.values, ds.values)
        with pytest.raises(DomainError):
            ds.with_covariates(np.ones((4, 1)))


class TestModelSpec:
    def test_param_names_by_family(self):
        assert ModelSpec("weibull", "exponential").param_names == [
            "beta_0",
            "kappa",
            "phi",
        ]
        assert ModelSpec(
            "loggaussian", "matern", n_covariates=2, nu_m=1.5
        ).param_names == ["beta_0", "beta_1", "beta_2", "sigma2", "phi"]
        assert ModelSpec("weibull", "spacetime").param_names == [
            "beta_0",
            "kappa",
            "phi_s",
            "phi_t",
            "phi_st",
        ]
        assert ModelSpec("weibull", "spacetime", phi_st=0.0).param_names == [
            "beta_0",
            "kappa",
            "phi_s",
            "phi_t",
        ]

    def test_transform_roundtrip(self):
        spec = ModelSpec("weibull", "spacetime", n_covariates=1)
        theta = np.array([0.3, -0.2, 2.5, 0.4, 3.0, 0.7])
        np.testing.assert_allclose(
            spec.untransform(spec.transform(theta)), theta, rtol=1e-14
        )

    def test_transform_rejects_infeasible(self):
        spec = ModelSpec("weibull", "exponential")
        with pytest.raises(DomainError):
            spec.transform(np.array([0.0, -1.0, 0.5]))

    def test_build_field_model(self):
        spec = ModelSpec("weibull", "exponential", n_covariates=1)
        model = spec.build_field_model(np.array([0.1, 0.2, 2.0, 0.5]))
        assert isinstance(model, WeibullFieldModel)
        assert model.kappa == 2.0
        assert model.corr == Exponential(phi=0.5)

    def test_fixed_interaction_pinned(self):
        spec = ModelSpec("weibull", "spacetime", phi_st=0.25)
        corr = spec.build_corr(np.array([0.5, 3.0]))
        assert corr.phi_st == 0.25

    def test_validation(self):
        with pytest.raises(DomainError):
            ModelSpec("gamma", "exponential")
        with pytest.raises(DomainError):
            ModelSpec("weibull", "matern")  # nu_m missing
        with pytest.raises(DomainError):
            ModelSpec("weibull", "spacetime", phi_st=1.5)


class TestSelectPairs:
    def test_full_enumeration_order(self):
        ds, _ = chain_dataset(n=6)
        ctx = select_pairs(ds, WeightSpec())
        assert ctx.n_pairs == 15
        np.testing.assert_array_equal(
            np.lexsort((ctx.j, ctx.i)), np.arange(15)
        )
        assert np.all(ctx.i < ctx.j)

    def test_spatial_cutoff_inclusive(self):
        sites = [Site(coords=(float(p),)) for p in range(4)]
        ds = Dataset(sites, [1.0] * 4)
        ctx = select_pairs(ds, WeightSpec(delta_space=1.0))
        assert ctx.n_pairs == 3
        np.testing.assert_allclose(ctx.dist, 1.0)

    def test_temporal_branch_matches_brute_force(self):
        ds = spacetime_dataset(n_stations=5, n_times=9, seed=4)
        weights = WeightSpec(delta_space=0.6, delta_time=2.0)
        ctx = select_pairs(ds, weights)

        i, j = np.triu_indices(ds.n, k=1)
        d = np.abs(ds.coords[i] - ds.coords[j])
        dist = np.sqrt((d**2).sum(axis=1))
        tlag = np.abs(ds.times[i] - ds.times[j])
        keep = (dist <= 0.6) & (tlag <= 2.0)
        order = np.lexsort((j[keep], i[keep]))
        np.testing.assert_array_equal(ctx.i, i[keep][order])
        np.testing.assert_array_equal(ctx.j, j[keep][order])
        np.testing.assert_allclose(ctx.dist, dist[keep][order])
        np.testing.assert_allclose(ctx.tlag, tlag[keep][order])

    def test_spatial_tree_matches_brute_force(self):
        rng = np.random.default_rng(11)
        sites = [Site(coords=tuple(c)) for c in rng.uniform(0, 1, size=(25, 2))]
        ds = Dataset(sites, rng.uniform(0.5, 1.5, size=25))
        ctx = select_pairs(ds, WeightSpec(delta_space=0.3))
        i, j = np.triu_indices(25, k=1)
        dist = np.sqrt(((ds.coords[i] - ds.coords[j]) ** 2).sum(axis=1))
        keep = dist <= 0.3
        order = np.lexsort((j[keep], i[keep]))
        np.testing.assert_array_equal(ctx.i, i[keep][order])
        np.testing.assert_array_equal(ctx.j, j[keep][order])

    def test_no_pairs_raises(self):
        sites = [Site(coords=(0.0,)), Site(coords=(5.0,))]
        ds = Dataset(sites, [1.0, 1.0])
        with pytest.raises(NoPairsError):
            select_pairs(ds, WeightSpec(delta_space=1.0))

    def test_restrict_keeps_inside_pairs(self):
        ds, _ = chain_dataset(n=6)
        ctx = select_pairs(ds, WeightSpec())
        mask = np.zeros(6, dtype=bool)
        mask[[0, 1, 2]] = True
        sub = ctx.restrict(mask)
        assert sub.n_pairs == 3
        assert np.all(sub.i < 3) and np.all(sub.j < 3)

    def test_weight_spec_validation(self):
        with pytest.raises(DomainError):
            WeightSpec(delta_space=-1.0)
        with pytest.raises(DomainError):
            WeightSpec(delta_time=-0.5)


class TestPairwiseLoglik:
    def test_matches_explicit_sum_weibull(self):
        ds, model = chain_dataset(n=12, with_covariate=True, beta=(0.2, -0.1))
        spec = ModelSpec("weibull", "exponential", n_covariates=1)
        theta = np.array([0.2, -0.1, 2.0, 0.3])
        weights = WeightSpec(delta_space=0.4)
        ctx = select_pairs(ds, weights)

        mu = np.exp(0.2 - 0.1 * ds.covariates[:, 0])
        total = 0.0
        for i, j, d in zip(ctx.i, ctx.j, ctx.dist):
            rho = math.exp(-d / 0.3)
            total += float(
                weibull_pair_log_density_arrays(
                    ds.values[i], ds.values[j], mu[i], mu[j], rho, 2.0
                )
            )
        got = pairwise_loglik(theta, ds, weights, spec)
        assert got == pytest.approx(total, rel=1e-12)

    def test_matches_explicit_sum_loggaussian(self):
        ds, _ = chain_dataset(n=10)
        spec = ModelSpec("loggaussian", "exponential")
        theta = np.array([0.1, 0.4, 0.25])
        weights = WeightSpec()
        ctx = select_pairs(ds, weights)
        mu = np.full(ds.n, math.exp(0.1))
        total = 0.0
        for i, j, d in zip(ctx.i, ctx.j, ctx.dist):
            rho = math.exp(-d / 0.25)
            total += float(
                loggaussian_pair_log_density_arrays(
                    ds.values[i], ds.values[j], mu[i], mu[j], rho, 0.4
                )
            )
        assert pairwise_loglik(theta, ds, weights, spec) == pytest.approx(
            total, rel=1e-12
        )

    def test_precomputed_context_equivalent(self):
        ds, _ = chain_dataset(n=15)
        spec = ModelSpec("weibull", "exponential")
        weights = WeightSpec(delta_space=0.5)
        theta = np.array([0.0, 2.0, 0.3])
        ctx = select_pairs(ds, weights)
        assert pairwise_loglik(
            theta, ds, weights, spec, pair_context=ctx
        ) == pairwise_loglik(theta, ds, weights, spec)

    def test_invalid_theta_length(self):
        ds, _ = chain_dataset(n=5)
        spec = ModelSpec("weibull", "exponential")
        with pytest.raises(DomainError):
            pairwise_loglik(np.array([0.0, 2.0]), ds, WeightSpec(), spec)


class TestNumericHessian:
    def test_quadratic_exact(self):
        a_mat = np.array([[2.0, 0.5, 0.0], [0.5, 3.0, -0.7], [0.0, -0.7, 1.5]])
        b_vec = np.array([0.1, -0.2, 0.3])

        def f(x):
            return 0.5 * x @ a_mat @ x + b_vec @ x + 4.0

        h = numeric_hessian(f, np.array([0.3, -1.2, 0.8]))
        np.testing.assert_allclose(h, a_mat, atol=1e-6)

    def test_smooth_nonquadratic(self):
        def f(x):
            return math.exp(x[0]) * math.cos(x[1])

        x0 = np.array([0.4, 0.9])
        h = numeric_hessian(f, x0)
        e, c = math.exp(0.4), math.cos(0.9)
        s = math.sin(0.9)
        expected = np.array([[e * c, -e * s], [-e * s, -e * c]])
        np.testing.assert_allclose(h, expected, atol=5e-6)

    def test_symmetry(self):
        def f(x):
            return float(np.sum(np.sin(x) ** 2) + x[0] * x[1] * x[2])

        h = numeric_hessian(f, np.array([0.1, 0.2, 0.3]))
        np.testing.assert_array_equal(h, h.T)


class TestBlocks:
    def test_time_windows_cover_everything(self):
        ds = spacetime_dataset(n_stations=2, n_times=90)
        blocks, info = make_blocks(ds)
        assert info["axis"] == "time"
        assert info["block_length"] == 10  # ceil(sqrt(90))
        assert info["n_blocks"] >= 10
        union = np.unique(np.concatenate(blocks))
        np.testing.assert_array_equal(union, np.arange(ds.n))

    def test_overlap_half_means_each_record_in_at_most_two(self):
        ds = spacetime_dataset(n_stations=1, n_times=64)
        blocks, _ = make_blocks(ds)
        counts = np.zeros(ds.n)
        for b in blocks:
            counts[b] += 1
        assert counts.max() <= 2

    def test_spatial_blocks_without_times(self):
        ds, _ = chain_dataset(n=40)
        blocks, info = make_blocks(ds)
        assert info["axis"] == "space"
        assert info["block_length"] == 7  # ceil(sqrt(40))
        assert info["n_blocks"] >= 10
        union = np.unique(np.concatenate(blocks))
        np.testing.assert_array_equal(union, np.arange(40))

    def test_too_few_blocks(self):
        ds, _ = chain_dataset(n=9)
        with pytest.raises(TooFewBlocksError):
            make_blocks(ds)

    def test_explicit_block_length(self):
        ds, _ = chain_dataset(n=40)
        blocks, info = make_blocks(ds, block_length=4)
        assert info["block_length"] == 4
        assert all(b.size <= 4 for b in blocks)


class TestSubsampleVariability:
    def test_matches_hand_computed_block_scores(self):
        ds, _ = chain_dataset(n=24, seed=3)
        spec = ModelSpec("weibull", "exponential")
        weights = WeightSpec(delta_space=0.1)
        theta = np.array([0.05, 1.8, 0.25])
        ctx = select_pairs(ds, weights)
        blocks, _ = make_blocks(ds, block_length=2, min_blocks=5)

        h = 1e-4 * (1.0 + np.abs(theta))
        scores = []
        counts = []
        member = np.zeros(ds.n, dtype=bool)
        for b in blocks:
            member[:] = False
            member[b] = True
            bctx = ctx.restrict(member)
            if bctx.n_pairs == 0:
                continue
            g = np.empty(3)
            for k in range(3):
                tp, tm = theta.copy(), theta.copy()
                tp[k] += h[k]
                tm[k] -= h[k]
                g[k] = (
                    pairwise_loglik(tp, ds, weights, spec, pair_context=bctx)
                    - pairwise_loglik(tm, ds, weights, spec, pair_context=bctx)
                ) / (2.0 * h[k])
            scores.append(g)
            counts.append(bctx.n_pairs)
        g_mat = np.asarray(scores)
        centered = g_mat - g_mat.mean(axis=0)
        expected = (
            ctx.n_pairs
            / np.mean(counts)
            * (centered.T @ centered)
            / g_mat.shape[0]
        )
        got = subsample_variability(
            theta, ds, weights, spec, blocks=blocks, pair_context=ctx
        )
        np.testing.assert_allclose(got, expected, rtol=1e-10)

    def test_partition_scaling_equals_block_count(self):
        # Non-overlapping equal blocks that tile the pairs exactly:
        # the rescale factor is then the number of blocks.
        ds, _ = chain_dataset(n=24, seed=8)
        spec = ModelSpec("weibull", "exponential")
        spacing = 1.0 / 23.0
        weights = WeightSpec(delta_space=spacing * 1.001)  # adjacent pairs
        ctx = select_pairs(ds, weights)
        # Blocks of 2 consecutive sites: each holds exactly one pair...
        blocks = [np.array([2 * k, 2 * k + 1]) for k in range(12)]
        got = subsample_variability(
            np.array([0.0, 2.0, 0.3]),
            ds,
            weights,
            spec,
            blocks=blocks,
            pair_context=ctx,
        )
        # ...so J should be (12/1) * covariance of the 12 per-pair scores.
        assert got.shape == (3, 3)
        assert np.all(np.isfinite(got))
        assert got[1, 1] > 0.0

    def test_requires_blocks_with_pairs(self):
        ds, _ = chain_dataset(n=24)
        spec = ModelSpec("weibull", "exponential")
        weights = WeightSpec(delta_space=1.001 / 23.0)
        blocks = [np.array([0]), np.array([5]), np.array([9])]
        with pytest.raises(TooFewBlocksError):
            subsample_variability(
                np.array([0.0, 2.0, 0.3]), ds, weights, spec, blocks=blocks
            )


class TestFitMwpl:
    def test_improves_on_start_and_converges(self):
        ds, model = chain_dataset(n=80, seed=21, kappa=2.0, phi=0.2)
        spec = ModelSpec("weibull", "exponential")
        weights = WeightSpec(delta_space=0.05)
        init = np.array([0.1, 1.5, 0.3])
        fit = fit_mwpl(
            ds, weights, spec, init=init, budget=2000, compute_godambe=False
        )
        assert fit.converged
        assert fit.n_pairs == select_pairs(ds, weights).n_pairs
        assert fit.loglik >= pairwise_loglik(init, ds, weights, spec)
        est = fit.named_estimates()
        assert 0.8 < est["kappa"] < 5.0
        assert est["phi"] > 0.0

    def test_start_point_invariance(self):
        ds, _ = chain_dataset(n=60, seed=33, kappa=3.0, phi=0.25)
        spec = ModelSpec("weibull", "exponential")
        weights = WeightSpec(delta_space=0.1)
        fit_a = fit_mwpl(
            ds,
            weights,
            spec,
            init=np.array([0.0, 2.0, 0.2]),
            budget=4000,
            compute_godambe=False,
        )
        fit_b = fit_mwpl(
            ds,
            weights,
            spec,
            init=np.array([0.3, 4.0, 0.6]),
            budget=4000,
            compute_godambe=False,
        )
        assert fit_a.converged and fit_b.converged
        assert fit_a.loglik == pytest.approx(fit_b.loglik, abs=1e-5)
        np.testing.assert_allclose(fit_a.theta_hat, fit_b.theta_hat, rtol=1e-3)

    def test_godambe_attachments(self):
        ds, _ = chain_dataset(n=60, seed=13, kappa=2.0, phi=0.2)
        spec = ModelSpec("weibull", "exponential")
        weights = WeightSpec(delta_space=0.05)
        fit = fit_mwpl(ds, weights, spec, init=np.array([0.0, 2.0, 0.2]))
        assert fit.converged
        assert fit.std_errors is not None and fit.std_errors.shape == (3,)
        assert np.all(fit.std_errors >= 0.0)
        assert fit.plic is not None and math.isfinite(fit.plic)
        assert fit.hessian.shape == (3, 3)
        assert fit.j_matrix.shape == (3, 3)
        assert fit.subsample_info["n_blocks"] >= 10
        # The criterion recomputes from the stored pieces.
        assert plic(fit, fit.hessian, fit.j_matrix) == pytest.approx(fit.plic)

    def test_sandwich_skipped_when_blocks_unavailable(self):
        ds, _ = chain_dataset(n=12, seed=2)
        spec = ModelSpec("weibull", "exponential")
        weights = WeightSpec(delta_space=0.2)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fit = fit_mwpl(ds, weights, spec, init=np.array([0.0, 2.0, 0.2]))
        assert fit.std_errors is None and fit.plic is None
        assert any("sandwich" in str(w.message) for w in caught)

    def test_coverage_of_sandwich_intervals(self):
        # Repeated fits on fresh simulations: the +/- 1.96 s.e. interval
        # for the shape parameter should cover the truth most of the
        # time, and the reported s.e. should match the spread of the
        # estimates to within a small factor.
        true_kappa, true_phi, n = 2.0, 0.15, 130
        pos = np.linspace(0.0, 1.0, n)
        sites = [Site(coords=(p,)) for p in pos]
        model = WeibullFieldModel(
            kappa=true_kappa, beta=(0.0,), corr=Exponential(phi=true_phi)
        )
        spec = ModelSpec("weibull", "exponential")
        weights = WeightSpec(delta_space=(pos[1] - pos[0]) * 1.001)
        sims = simulate_weibull(model, sites, n_reps=40, seed=2024)
        hits = 0
        used = 0
        kappas = []
        ses = []
        for r in range(40):
            ds = Dataset(sites, sims[:, r])
            fit = fit_mwpl(
                ds,
                weights,
                spec,
                init=np.array([0.0, true_kappa, true_phi]),
                budget=2000,
            )
            if not fit.converged or fit.std_errors is None:
                continue
            used += 1
            k_hat = fit.named_estimates()["kappa"]
            se = fit.std_errors[1]
            kappas.append(k_hat)
            ses.append(se)
            if abs(k_hat - true_kappa) <= 1.96 * se:
                hits += 1
        assert used >= 35
        assert hits / used >= 0.7
        spread = np.std(kappas, ddof=1)
        assert np.median(ses) == pytest.approx(spread, rel=1.5)


class TestFitMlChain:
    def test_requires_weibull_exponential_1d(self):
        ds, _ = chain_dataset(n=12)
        with pytest.raises(DomainError):
            fit_ml_chain(ds, ModelSpec("loggaussian", "exponential"))
        with pytest.raises(DomainError):
            fit_ml_chain(ds, ModelSpec("weibull", "matern", nu_m=0.5))

    def test_requires_sorted_positions(self):
        sites = [Site(coords=(1.0,)), Site(coords=(0.0,))]
        ds = Dataset(sites, [1.0, 1.2])
        with pytest.raises(DomainError):
            fit_ml_chain(ds, ModelSpec("weibull", "exponential"))

    def test_fit_recovers_neighborhood_of_truth(self):
        ds, model = chain_dataset(n=150, seed=77, kappa=3.0, phi=0.2)
        spec = ModelSpec("weibull", "exponential")
        init = np.array([0.0, 3.0, 0.2])
        fit = fit_ml_chain(ds, spec, init=init, budget=2000)
        assert fit.converged
        est = fit.named_estimates()
        assert 1.5 < est["kappa"] < 6.0
        assert 0.05 < est["phi"] < 0.8
        # The optimum cannot be worse than the starting point.
        from chifield.density import markov_chain_log_density

        start_model = spec.build_field_model(init)
        assert fit.loglik >= markov_chain_log_density(
            ds.values, ds.sites, start_model
        )


class TestPlicAndEfficiency:
    def test_plic_formula(self):
        ds, _ = chain_dataset(n=20)
        spec = ModelSpec("weibull", "exponential")
        fit = fit_mwpl(
            ds,
            WeightSpec(delta_space=0.2),
            spec,
            init=np.array([0.0, 2.0, 0.3]),
            budget=1500,
            compute_godambe=False,
        )
        h = np.diag([2.0, 3.0, 4.0])
        j = np.diag([4.0, 3.0, 8.0])
        expected = -2.0 * fit.loglik + 2.0 * (2.0 + 1.0 + 2.0)
        assert plic(fit, h, j) == pytest.approx(expected, rel=1e-13)

    def test_plic_singular_hessian(self):
        ds, _ = chain_dataset(n=20)
        spec = ModelSpec("weibull", "exponential")
        fit = fit_mwpl(
            ds,
            WeightSpec(delta_space=0.2),
            spec,
            init=np.array([0.0, 2.0, 0.3]),
            budget=1500,
            compute_godambe=False,
        )
        with pytest.raises(SingularSystemError):
            plic(fit, np.zeros((3, 3)), np.eye(3))

    def test_relative_efficiency_diagonal(self):
        f_c = np.diag([4.0, 1.0])
        f_f = np.diag([1.0, 1.0])
        assert relative_efficiency(f_c, f_f) == pytest.approx(0.5)

    def test_relative_efficiency_invalid(self):
        with pytest.raises(SingularSystemError):
            relative_efficiency(np.zeros((2, 2)), np.eye(2))
        with pytest.raises(DomainError):
            relative_efficiency(np.eye(2), np.eye(3))


class TestHarmonics:
    def test_design_shape_and_columns(self):
        t = np.arange(8.0)
        x = harmonic_design(t, q=2, period=8.0)
        assert x.shape == (8, 4)
        np.testing.assert_allclose(x[:, 0], np.cos(2 * np.pi * t / 8.0))
        np.testing.assert_allclose(x[:, 3], np.sin(4 * np.pi * t / 8.0))
        assert harmonic_design(t, q=0, period=8.0).shape == (8, 0)

    def test_prefit_recovers_noiseless_coefficients(self):
        t = np.arange(60.0)
        coef = np.array([0.4, 0.3, -0.2, 0.1, 0.05])
        x = harmonic_design(t, q=2, period=30.0)
        design = np.column_stack([np.ones(60), x])
        values = np.exp(design @ coef)
        sites = [Site(coords=(0.0,), time=ti) for ti in t]
        ds = Dataset(sites, values)
        fit = harmonic_prefit(ds, q=2, period=30.0)
        np.testing.assert_allclose(fit.coefficients, coef, atol=1e-10)
        np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-10)

    def test_prefit_rank_deficient(self):
        t = np.array([0.0, 1.0, 2.0] * 4)
        sites = [Site(coords=(0.0,), time=ti) for ti in t]
        ds = Dataset(sites, np.full(12, 1.3))
        with pytest.raises(RankDeficientError):
            harmonic_prefit(ds, q=2, period=3.0)

    def test_prefit_needs_times(self):
        ds, _ = chain_dataset(n=12)
        with pytest.raises(DomainError):
            harmonic_prefit(ds, q=1, period=10.0)

    def test_design_validation(self):
        with pytest.raises(DomainError):
            harmonic_design(np.arange(4.0), q=-1, period=1.0)
        with pytest.raises(DomainError):
            harmonic_design(np.arange(4.0), q=1, period=0.0)


class TestInitHelpers:
    def test_intercept_correction_inverts_log_margin_mean(self):
        # E[log of the standardized field] = log nu - euler_gamma/kappa;
        # feeding that bias back recovers the intercept exactly.
        kappa, beta0 = 2.3, 0.7
        spec = ModelSpec("weibull", "exponential")
        raw = beta0 + math.log(weibull_nu(kappa)) - np.euler_gamma / kappa
        assert intercept_correction(raw, spec, kappa) == pytest.approx(
            beta0, abs=1e-12
        )
        lg_spec = ModelSpec("loggaussian", "exponential")
        assert intercept_correction(0.2 - 0.15, lg_spec, 0.3) == pytest.approx(
            0.2, abs=1e-12
        )

    def test_default_init_near_truth_for_iid_like_data(self):
        # Tiny correlation range: records are nearly independent, so the
        # moment-based start should sit near the generating values.
        ds, _ = chain_dataset(
            n=400, seed=99, kappa=2.0, phi=0.001, beta=(0.5,), span=400.0
        )
        spec = ModelSpec("weibull", "exponential")
        init = default_init(ds, spec)
        names = spec.param_names
        est = dict(zip(names, init))
        assert est["beta_0"] == pytest.approx(0.5, abs=0.15)
        assert 1.2 < est["kappa"] < 3.2
        assert est["phi"] > 0.0

    def test_default_init_covariate_count_mismatch(self):
        ds, _ = chain_dataset(n=20)
        with pytest.raises(DomainError):
            default_init(ds, ModelSpec("weibull", "exponential", n_covariates=2))


class TestNormalScores:
    def test_known_ranks(self):
        got = normal_scores([3.0, 1.0, 2.0])
        expected = stats.norm.ppf((np.array([3.0, 1.0, 2.0]).argsort().argsort() + 0.5) / 3.0)
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_ties_averaged(self):
        got = normal_scores([1.0, 1.0, 2.0])
        assert got[0] == got[1]
        assert got[2] > got[0]

    def test_needs_two_values(self):
        with pytest.raises(DomainError):
            normal_scores([1.0])


class TestSemivariogram:
    def test_spatial_hand_computed(self):
        sites = [Site(coords=(float(p),)) for p in range(3)]
        ds = Dataset(sites, [1.0, 3.0, 5.0])
        est = empirical_semivariogram(ds, axis="spatial", n_bins=2)
        # Pairs: d=1 with halved square differences (2, 2); d=2 with 8.
        np.testing.assert_allclose(est.bin_centers, [1.0, 2.0])
        np.testing.assert_allclose(est.semivariance, [2.0, 8.0])
        np.testing.assert_array_equal(est.counts, [2, 1])

    def test_spatial_uses_equal_time_pairs_only(self):
        sites = [
            Site(coords=(0.0,), time=0.0),
            Site(coords=(1.0,), time=0.0),
            Site(coords=(0.0,), time=1.0),
            Site(coords=(1.0,), time=1.0),
        ]
        ds = Dataset(sites, [1.0, 2.0, 3.0, 6.0])
        est = empirical_semivariogram(ds, axis="spatial", n_bins=1)
        # Two simultaneous pairs: (1, 2) and (3, 6).
        assert est.counts[0] == 2
        np.testing.assert_allclose(est.semivariance, [0.5 * (1.0 + 9.0) / 2.0])

    def test_temporal_same_station_pairs(self):
        ds = spacetime_dataset(n_stations=3, n_times=5)
        est = empirical_semivariogram(ds, axis="temporal", n_bins=4)
        assert est.axis == "temporal"
        # 3 stations x C(5, 2) pairs distributed over the bins.
        assert est.counts.sum() == 3 * 10

    def test_temporal_requires_labels(self):
        ds, _ = chain_dataset(n=10)
        with pytest.raises(DomainError):
            empirical_semivariogram(ds, axis="temporal")

    def test_matches_model_semivariance_when_pooled(self):
        # Pool many independent replicates (tagged by time stamps so the
        # spatial axis pairs within replicates only) and compare with
        # the model curve sigma_w^2 (1 - corr_w(d)).
        from chifield.correlation import Lag, weibull_corr, weibull_sigma2

        kappa, phi, n, reps = 2.0, 0.15, 80, 30
        pos = np.linspace(0.0, 1.0, n)
        base_sites = [Site(coords=(p,)) for p in pos]
        model = WeibullFieldModel(
            kappa=kappa, beta=(0.0,), corr=Exponential(phi=phi)
        )
        sims = simulate_weibull(model, base_sites, n_reps=reps, seed=4242)
        sites = [
            Site(coords=(p,), time=float(r)) for r in range(reps) for p in pos
        ]
        ds = Dataset(sites, sims.T.ravel())
        est = empirical_semivariogram(
            ds, axis="spatial", n_bins=5, max_lag=0.5
        )
        assert np.all(np.diff(est.semivariance) > 0.0)
        corr_model = Exponential(phi=phi)
        expected = np.array(
            [
                weibull_sigma2(kappa)
                * (1.0 - weibull_corr(corr_model, Lag(d), kappa))
                for d in est.bin_centers
            ]
        )
        np.testing.assert_allclose(est.semivariance, expected, rtol=0.2)

    def test_max_lag_filters(self):
        ds, _ = chain_dataset(n=20)
        est = empirical_semivariogram(ds, axis="spatial", n_bins=4, max_lag=0.3)
        assert est.bin_centers.max() <= 0.3

    def test_invalid_axis(self):
        ds, _ = chain_dataset(n=5)
        with pytest.raises(DomainError):
            empirical_semivariogram(ds, axis="diagonal")


class TestTailDependence:
    def test_comonotone_series(self):
        u = np.arange(200.0)
        chi = tail_dependence_diagnostic(u, u, quantiles=[0.8, 0.9])
        np.testing.assert_allclose(chi, 1.0)

    def test_independent_series_low_tail(self):
        rng = np.random.default_rng(7)
        u, v = rng.uniform(size=5000), rng.uniform(size=5000)
        chi = tail_dependence_diagnostic(u, v, quantiles=[0.8])
        assert chi[0] < 0.3

    def test_short_series_warns(self):
        with pytest.warns(RuntimeWarning, match="noisy"):
            tail_dependence_diagnostic(np.arange(10.0), np.arange(10.0))

    def test_invalid_quantiles(self):
        u = np.arange(200.0)
        with pytest.raises(DomainError):
            tail_dependence_diagnostic(u, u, quantiles=[0.0, 0.5])
