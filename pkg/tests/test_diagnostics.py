"""Scale reduction factors, Turnbull NPMLE and goodness-of-fit tables."""

import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from nggmix.diagnostics import (
    MONITORED_SCALARS,
    PsrfResult,
    ScalarTraceSet,
    TurnbullEstimate,
    pp_table,
    psrf,
    psrf_multivariate,
    psrf_univariate,
    qq_table,
    scalar_trace_set,
    turnbull,
)
from nggmix.observations import Observation

from oracles import turnbull_reference


class TestPsrfUnivariate:
    def test_identical_chains_flagged_degenerate(self):
        # identical copies: zero between-chain variance, finite ratio; the
        # value is reported but flagged uninformative
        chain = np.arange(10.0)
        result = psrf_univariate(np.stack([chain, chain, chain]))
        assert result.degenerate
        assert result.point == pytest.approx(math.sqrt(0.9), rel=1e-12)
        assert result.upper == result.point

    def test_constant_separated_chains(self):
        chains = np.stack([np.zeros(10), np.full(10, 5.0)])
        result = psrf_univariate(chains)
        assert result.degenerate
        assert result.point == math.inf

    def test_iid_chains_near_one(self):
        rng = np.random.default_rng(3)
        chains = rng.standard_normal((2, 20_000))
        result = psrf_univariate(chains)
        assert not result.degenerate
        assert 0.99 <= result.point <= 1.05
        assert result.upper >= result.point

    def test_disjoint_means_detected(self):
        rng = np.random.default_rng(4)
        chains = rng.standard_normal((2, 2_000)) + np.array([[-10.0], [10.0]])
        assert psrf_univariate(chains).point > 1.2

    def test_hand_computed_tiny_case(self):
        # m=2, T=3: W=1, B=1.5, V=17/12, moment df 3.5679; worked by hand
        chains = np.array([[1.0, 2.0, 3.0], [2.0, 3.0, 4.0]])
        result = psrf_univariate(chains)
        assert result.point == pytest.approx(1.427203, abs=1e-5)
        assert result.upper == pytest.approx(2.525079, abs=1e-4)

    def test_affine_invariance(self):
        rng = np.random.default_rng(12)
        chains = rng.standard_normal((3, 500))
        base = psrf_univariate(chains)
        scaled = psrf_univariate(chains * 2.0**-3)  # exact in floating point
        assert scaled.point == base.point and scaled.upper == base.upper
        shifted = psrf_univariate(chains + 7.5)
        assert shifted.point == pytest.approx(base.point, rel=1e-10)
        assert shifted.upper == pytest.approx(base.upper, rel=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            psrf_univariate(np.ones((1, 50)))
        with pytest.raises(ValueError):
            psrf_univariate(np.ones((3, 1)))


class TestPsrfMultivariate:
    def test_single_scalar_matches_eigen_formula(self):
        chains = np.array([[1.0, 2.0, 3.0], [2.0, 3.0, 4.0]])
        # sqrt((T-1)/T + (m+1)/m * B/(T W)) with W=1, B/T=0.5
        assert psrf_multivariate(chains).point == pytest.approx(
            math.sqrt(2 / 3 + 1.5 * 0.5), rel=1e-12
        )

    def test_iid_vector_chains_near_one(self):
        rng = np.random.default_rng(9)
        chains = rng.standard_normal((3, 10_000, 2))
        result = psrf_multivariate(chains)
        assert not result.degenerate
        assert 0.99 <= result.point <= 1.05

    def test_separated_vector_chains(self):
        rng = np.random.default_rng(10)
        chains = rng.standard_normal((2, 1_000, 2))
        chains[1] += 8.0
        assert psrf_multivariate(chains).point > 1.5

    def test_degenerate_cases(self):
        chain = np.tile(np.arange(6.0)[:, None], (1, 2))
        identical = psrf_multivariate(np.stack([chain, chain]))
        assert identical.degenerate and identical.point == 1.0
        flat = np.stack([np.zeros((5, 2)), np.ones((5, 2))])
        separated = psrf_multivariate(flat)
        assert separated.degenerate and separated.point == math.inf


class TestPsrfSummary:
    def make_traces(self, common_scale=True):
        rng = np.random.default_rng(77)
        chains = []
        for _ in range(3):
            chains.append(
                SimpleNamespace(
                    n_components=rng.integers(2, 6, size=400).astype(float),
                    latent_u=rng.gamma(2.0, 1.0, size=400),
                    log_likelihood=rng.standard_normal(400) - 200.0,
                    common_scale=rng.lognormal(0.0, 0.1, size=400)
                    if common_scale
                    else None,
                )
            )
        return chains

    def test_summary_over_monitored_scalars(self):
        trace_set = scalar_trace_set(self.make_traces())
        summary = psrf(trace_set)
        assert set(summary.univariate) == set(MONITORED_SCALARS)
        for result in summary.univariate.values():
            assert not result.degenerate
            assert 0.98 <= result.point <= 1.1
        assert not summary.multivariate.degenerate
        assert 0.98 <= summary.multivariate.point <= 1.1

    def test_missing_common_scale_is_allowed(self):
        trace_set = scalar_trace_set(self.make_traces(common_scale=False))
        assert "common_scale" not in trace_set.series
        assert set(psrf(trace_set).univariate) == set(MONITORED_SCALARS) - {
            "common_scale"
        }

    def test_degenerate_scalar_excluded_from_multivariate(self):
        traces = self.make_traces()
        for t in traces:
            t.common_scale = np.ones(400)
        summary = psrf(scalar_trace_set(traces))
        assert summary.univariate["common_scale"].degenerate
        assert not summary.multivariate.degenerate
        assert summary.multivariate.point < 1.1

    def test_mixed_common_scale_rejected(self):
        traces = self.make_traces()
        traces[1].common_scale = None
        with pytest.raises(ValueError):
            scalar_trace_set(traces)

    def test_trace_set_validation(self):
        with pytest.raises(ValueError):
            ScalarTraceSet({"unknown_name": np.ones((2, 5))})
        with pytest.raises(ValueError):
            ScalarTraceSet(
                {"latent_u": np.ones((2, 5)), "log_likelihood": np.ones((2, 6))}
            )
        with pytest.raises(ValueError):
            ScalarTraceSet({})


class TestTurnbull:
    def test_exact_data_reduces_to_empirical_cdf(self):
        obs = [Observation.exact(x) for x in (3.0, 1.0, 2.0, 2.0)]
        estimate = turnbull(obs)
        assert estimate.converged
        assert np.array_equal(estimate.support_points, [1.0, 2.0, 3.0])
        ordered = np.array(sorted(o.value for o in obs))
        grid = np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 9.0])
        empirical = np.searchsorted(ordered, grid, side="right") / len(obs)
        assert np.allclose(estimate.cdf(grid), empirical, atol=1e-12)

    def test_single_interval_observation(self):
        estimate = turnbull([Observation.from_bounds(0.0, 1.0)])
        assert estimate.masses == pytest.approx([1.0])
        assert np.array_equal(estimate.intervals, [[0.0, 1.0]])
        assert estimate.cdf(0.999) == 0.0  # mass sits at the right endpoint
        assert estimate.cdf(1.0) == 1.0

    def test_right_censored_mass_beyond_maximum(self):
        obs = [Observation.exact(x) for x in (1.0, 2.0, 3.0)]
        obs.append(Observation.from_bounds(4.0, None))
        estimate = turnbull(obs)
        assert estimate.converged
        assert estimate.masses == pytest.approx([0.25, 0.25, 0.25, 0.25])
        assert estimate.intervals[-1, 1] == math.inf
        # the unbounded quarter never enters the finite-argument CDF
        assert estimate.cdf(100.0) == pytest.approx(0.75)
        assert np.array_equal(estimate.support_points, [1.0, 2.0, 3.0])

    def test_exact_point_on_interval_boundary(self):
        # (1, 2] does not contain the exact point 1, so the two observations
        # separate and each innermost interval carries half the mass
        obs = [Observation.exact(1.0), Observation.from_bounds(1.0, 2.0)]
        estimate = turnbull(obs)
        assert np.array_equal(estimate.intervals, [[1.0, 1.0], [1.0, 2.0]])
        assert estimate.masses == pytest.approx([0.5, 0.5])

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_matches_reference_em(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.normal(0.0, 1.0, size=25)
        obs, specs = [], []
        for i, x in enumerate(values):
            if i % 3 == 0:
                width = rng.uniform(0.2, 1.0)
                obs.append(Observation.from_bounds(x, x + width))
                specs.append(("interval", x, x + width))
            elif i % 3 == 1:
                obs.append(Observation.from_bounds(None, x))
                specs.append(("interval", -math.inf, x))
            else:
                obs.append(Observation.exact(x))
                specs.append(("exact", x, x))
        estimate = turnbull(obs, tol=1e-12)
        points, masses = turnbull_reference(specs)
        grid = np.linspace(values.min() - 1, values.max() + 2, 400)
        reference_cdf = np.array(
            [masses[points <= g].sum() for g in grid]
        )
        assert np.max(np.abs(estimate.cdf(grid) - reference_cdf)) < 1e-6

    def test_masses_form_probability_vector(self):
        rng = np.random.default_rng(8)
        obs = [Observation.from_bounds(x, x + 0.5) for x in rng.normal(size=30)]
        estimate = turnbull(obs)
        assert estimate.masses.min() >= -1e-12
        assert estimate.masses.sum() == pytest.approx(1.0, abs=1e-9)

    def test_nonconvergence_flag(self):
        obs = [
            Observation.from_bounds(0.0, 2.0),
            Observation.from_bounds(1.0, 3.0),
            Observation.exact(1.5),
        ]
        estimate = turnbull(obs, tol=0.0, max_iterations=1)
        assert not estimate.converged
        assert estimate.iterations == 1

    def test_estimate_validation(self):
        with pytest.raises(ValueError):
            TurnbullEstimate(
                intervals=np.array([[0.0, 1.0]]),
                masses=np.array([0.5]),
                converged=True,
                iterations=1,
            )
        with pytest.raises(ValueError):
            turnbull([])


class TestGofTables:
    def exact_observations(self):
        rng = np.random.default_rng(5)
        return [Observation.exact(x) for x in rng.normal(1.0, 2.0, size=40)]

    def test_pp_diagonal_when_model_is_empirical(self):
        obs = self.exact_observations()
        ordered = np.sort([o.value for o in obs])

        def empirical(x):
            return np.searchsorted(ordered, x, side="right") / ordered.size

        table = pp_table(obs, empirical)
        assert np.allclose(table[:, 0], table[:, 1], atol=1e-15)

    def test_pp_ordinates_non_decreasing(self):
        obs = self.exact_observations()
        table = pp_table(obs, lambda x: stats.norm.cdf(x, 1.0, 2.0))
        assert np.all(np.diff(table[:, 0]) >= 0)
        assert np.all(np.diff(table[:, 1]) >= 0)

    def test_qq_uses_midpoint_plotting_positions(self):
        obs = [Observation.exact(x) for x in (4.0, 1.0, 3.0, 2.0)]
        seen = []

        def quantile(levels):
            seen.append(np.array(levels))
            return stats.norm.ppf(levels)

        table = qq_table(obs, quantile)
        assert np.allclose(seen[0], [1 / 8, 3 / 8, 5 / 8, 7 / 8])
        assert np.array_equal(table[:, 0], [1.0, 2.0, 3.0, 4.0])
        assert np.all(np.diff(table[:, 1]) > 0)

    def test_censored_axis_stays_on_turnbull_support(self):
        obs = [
            Observation.exact(0.0),
            Observation.from_bounds(0.5, 1.5),
            Observation.from_bounds(None, -1.0),
            Observation.from_bounds(2.0, None),
        ]
        support = turnbull(obs).support_points

        def checked_cdf(x):
            assert np.all(np.isin(x, support))
            return stats.norm.cdf(x)

        table = pp_table(obs, checked_cdf)
        assert table.shape == (support.size, 2)
        assert np.all((table[:, 0] >= 0) & (table[:, 0] <= 1))
