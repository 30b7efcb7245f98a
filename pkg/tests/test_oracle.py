import csv

import numpy as np
import pytest

from fdfm.errors import (
    ConfigError,
    DimensionError,
    SingularityError,
    UndefinedEstimateError,
)
from fdfm.oracle import (
    PointMixture,
    export_grid_csv,
    marginal_velocity,
    mc_velocity,
    posterior_mean,
)
from fdfm.schedules import HeteroSchedule

HOM = HeteroSchedule.from_gammas(1.0, 1.0, 0.01)
HET = HeteroSchedule.from_gammas(0.95, 1.05, 0.01)

TWO_POINT = PointMixture(points=np.array([[-1.0], [1.0]]), weights=np.array([0.5, 0.5]), low_dims=1)
TWO_POINT_2D = PointMixture(
    points=np.array([[-1.0, 0.5], [1.0, -0.5]]), weights=np.array([0.3, 0.7]), low_dims=1
)


class TestPosteriorMean:
    def test_single_atom_returns_the_point(self):
        mix = PointMixture(points=np.array([[0.3, -0.7]]), weights=np.array([1.0]), low_dims=1)
        for q in ([0.0, 0.0], [5.0, -5.0]):
            got = posterior_mean(mix, np.array(q), 0.4, HET)
            assert np.allclose(got, [0.3, -0.7], atol=1e-15)

    def test_symmetric_mixture_at_origin(self):
        assert posterior_mean(TWO_POINT, np.array([0.0]), 0.5, HOM)[0] == pytest.approx(0.0, abs=1e-15)

    def test_two_point_log_ratio_value(self):
        # posterior odds exp(2*g*x_t/(1-g)^2) = exp(1.2) at g=t=0.5, x_t=0.3,
        # so the mean is tanh(0.6)
        got = posterior_mean(TWO_POINT, np.array([0.3]), 0.5, HOM)[0]
        assert got == pytest.approx(np.tanh(0.6), abs=1e-12)

    def test_monte_carlo_binned_cross_check(self):
        # brute force: 1e7 path draws, hard window around the query
        q, t = 0.3, 0.5
        g, r = HOM.low.value(t), HOM.low.slope(t)
        rng = np.random.default_rng(77)
        n_tot, x_sum, x2_sum = 0, 0.0, 0.0
        for _ in range(5):
            idx = rng.choice(2, 2 * 10**6, p=TWO_POINT.weights)
            data = TWO_POINT.points[idx, 0]
            eps = rng.standard_normal(2 * 10**6)
            states = g * data + (1 - g) * eps
            mask = np.abs(states - q) < 0.005
            n_tot += int(mask.sum())
            x_sum += float(data[mask].sum())
            x2_sum += float((data[mask] ** 2).sum())
        mc = x_sum / n_tot
        se = np.sqrt(max(x2_sum / n_tot - mc**2, 1e-30) / n_tot)
        closed = posterior_mean(TWO_POINT, np.array([q]), t, HOM)[0]
        assert abs(mc - closed) < 3 * se + 2e-3  # window-width bias allowance

    def test_log_domain_stability_near_one(self):
        got = posterior_mean(TWO_POINT, np.array([0.999]), 0.999, HOM)[0]
        assert got == pytest.approx(1.0, abs=1e-12)
        assert np.isfinite(got)

    def test_batched_queries_match_loop(self):
        rng = np.random.default_rng(1)
        qs = rng.standard_normal((7, 2))
        batched = posterior_mean(TWO_POINT_2D, qs, 0.6, HET)
        for i in range(7):
            single = posterior_mean(TWO_POINT_2D, qs[i], 0.6, HET)
            assert np.allclose(batched[i], single, atol=1e-15)

    def test_singularity_at_one(self):
        with pytest.raises(SingularityError):
            posterior_mean(TWO_POINT, np.array([0.0]), 1.0, HOM)

    def test_validation(self):
        with pytest.raises(ConfigError):
            PointMixture(points=np.array([[1.0]]), weights=np.array([0.9]), low_dims=1)
        with pytest.raises(ConfigError):
            PointMixture(points=np.array([[1.0]]), weights=np.array([1.0]), low_dims=2)
        with pytest.raises(DimensionError):
            posterior_mean(TWO_POINT, np.array([0.0, 0.0]), 0.5, HOM)


class TestMarginalVelocity:
    def test_single_atom_homogeneous_formula(self):
        # v = x0 - (x_t - t*x0)/(1 - t): the recovered-noise form
        mix = PointMixture(points=np.array([[0.7]]), weights=np.array([1.0]), low_dims=1)
        for t in (0.2, 0.5, 0.8):
            for q in (-0.5, 0.0, 1.2):
                v = marginal_velocity(mix, np.array([q]), t, HOM)[0]
                expected = 0.7 - (q - t * 0.7) / (1 - t)
                assert v == pytest.approx(expected, rel=1e-12)

    def test_on_path_matches_conditional_velocity(self):
        # a state generated by (atom, noise) at time t has velocity rate*(atom - noise)
        mix = PointMixture(points=np.array([[0.4, -0.8]]), weights=np.array([1.0]), low_dims=1)
        rng = np.random.default_rng(2)
        eps = rng.standard_normal(2)
        t = 0.35
        g = np.array([HET.low.value(t), HET.high.value(t)])
        r = np.array([HET.low.slope(t), HET.high.slope(t)])
        x_t = g * mix.points[0] + (1 - g) * eps
        v = marginal_velocity(mix, x_t, t, HET)
        assert np.allclose(v, r * (mix.points[0] - eps), rtol=1e-10)

    def test_heterogeneous_bands_use_their_own_schedules(self):
        # coordinate 0 rides the low schedule, coordinate 1 the high one
        mix = PointMixture(points=np.array([[0.5, 0.5]]), weights=np.array([1.0]), low_dims=1)
        q = np.array([0.2, 0.2])
        v = marginal_velocity(mix, q, 0.5, HET)
        for j, band in enumerate((HET.low, HET.high)):
            g, r = band.value(0.5), band.slope(0.5)
            eps_hat = (0.2 - g * 0.5) / (1 - g)
            assert v[j] == pytest.approx(r * (0.5 - eps_hat), rel=1e-12)


class TestMcVelocity:
    def test_single_atom_within_three_stderr(self):
        mix = PointMixture(points=np.array([[0.7]]), weights=np.array([1.0]), low_dims=1)
        closed = marginal_velocity(mix, np.array([0.2]), 0.5, HOM)
        est, se = mc_velocity(mix, np.array([0.2]), 0.5, HOM, 10**5, 0.02, np.random.default_rng(3))
        assert np.all(np.abs(est - closed) <= 3 * se)

    def test_stderr_shrinks_with_draws(self):
        mix = PointMixture(points=np.array([[0.7]]), weights=np.array([1.0]), low_dims=1)
        _, se_small = mc_velocity(mix, np.array([0.2]), 0.5, HOM, 10**4, 0.05, np.random.default_rng(4))
        _, se_big = mc_velocity(mix, np.array([0.2]), 0.5, HOM, 10**6, 0.05, np.random.default_rng(5))
        ratio = float(se_small[0] / se_big[0])
        assert 6.0 < ratio < 16.0  # ~sqrt(100) with sampling slack

    def test_heterogeneous_two_point_agreement(self):
        for i, q in enumerate(([0.0, 0.0], [0.4, -0.2], [-0.5, 0.3])):
            closed = marginal_velocity(TWO_POINT_2D, np.array(q), 0.5, HET)
            est, se = mc_velocity(
                TWO_POINT_2D, np.array(q), 0.5, HET, 4 * 10**5, 0.05, np.random.default_rng([6, i])
            )
            assert np.all(np.abs(est - closed) <= 3 * se)

    def test_far_query_has_no_effective_samples(self):
        with pytest.raises(UndefinedEstimateError):
            mc_velocity(TWO_POINT, np.array([50.0]), 0.5, HOM, 10**4, 0.01, np.random.default_rng(7))

    def test_draw_count_floor(self):
        with pytest.raises(ConfigError):
            mc_velocity(TWO_POINT, np.array([0.0]), 0.5, HOM, 100, 0.05, np.random.default_rng(8))


class TestLearnability:
    def test_tabular_fit_converges_to_oracle(self):
        # per-cell least squares against path-velocity draws approaches the
        # closed-form field; quadrupling samples roughly halves the RMS error
        from fdfm.predictor import tabular_fit, tabular_predict

        t = 0.5
        g, r = HET.low.value(t), HET.low.slope(t)
        edges = np.arange(-1.55, 1.56, 0.1)
        queries = np.linspace(-1.0, 1.0, 21)
        oracle_vals = np.array(
            [marginal_velocity(TWO_POINT, np.array([q]), t, HET)[0] for q in queries]
        )

        def rms(n, seed):
            rng = np.random.default_rng(seed)
            idx = rng.choice(2, n, p=TWO_POINT.weights)
            data = TWO_POINT.points[idx, 0]
            eps = rng.standard_normal(n)
            states = g * data + (1 - g) * eps
            targets = r * (data - eps)
            model = tabular_fit(edges, states, targets)
            fit_vals = tabular_predict(model, queries)[:, 0]
            return float(np.sqrt(np.nanmean((fit_vals - oracle_vals) ** 2)))

        small, big = rms(20_000, 9), rms(80_000, 10)
        assert big <= 0.75 * small

    def test_invariance_triangle_bound(self):
        # fits under different weightings sit within twice their oracle error
        from fdfm.verify import two_point_line_mixture, weighted_tabular_fields

        mix = two_point_line_mixture()
        omegas = (0.0, 0.7)
        _, fields, oracle_vals = weighted_tabular_fields(mix, HET, omegas, 300_000, seed=11)
        d = {om: np.sqrt(np.nanmean((fields[om] - oracle_vals) ** 2)) for om in omegas}
        pair = np.sqrt(np.nanmean((fields[0.0] - fields[0.7]) ** 2))
        assert pair <= 2 * max(d.values())


class TestGridExport:
    def test_csv_structure(self, tmp_path):
        path = tmp_path / "grid.csv"
        n = export_grid_csv(
            path,
            TWO_POINT,
            HOM,
            times=[0.25, 0.5],
            queries=np.array([[-0.5], [0.5]]),
            draws=10**4,
            bandwidth=0.1,
            rng=np.random.default_rng(12),
        )
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "x0", "v0", "source", "s0"]
        assert n == len(rows) - 1 == 2 * 2 * 2  # times x queries x {closed, mc}
        sources = {row[3] for row in rows[1:]}
        assert sources == {"closed", "mc"}
        closed_rows = [row for row in rows[1:] if row[3] == "closed"]
        assert all(float(row[4]) == 0.0 for row in closed_rows)
