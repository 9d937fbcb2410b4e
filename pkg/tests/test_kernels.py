"""Kernel catalogue and censored-likelihood tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from nggmix.kernels import (
    AtomParams,
    KernelSpec,
    atom_params_valid,
    from_natural,
    kernel_cdf,
    kernel_density,
    mixture_cdf,
    mixture_density,
    observation_loglik,
    observation_loglik_matrix,
    to_natural,
)
from nggmix.observations import Observation, prepare_observations

FAMILIES = ["normal", "double_exponential", "gamma", "lognormal", "beta"]

# Representative (mu, sigma) per family, all valid.
ATOMS = {
    "normal": AtomParams(0.3, 1.2),
    "double_exponential": AtomParams(-1.0, 0.7),
    "gamma": AtomParams(2.0, 0.8),
    "lognormal": AtomParams(0.1, 0.5),
    "beta": AtomParams(0.4, 0.15),
}


def scipy_frozen(family: str, atom: AtomParams):
    """Reference distribution built from hand-derived natural parameters."""
    mu, sg = atom.mu, atom.sigma
    if family == "normal":
        return stats.norm(mu, sg)
    if family == "double_exponential":
        return stats.laplace(mu, sg)
    if family == "gamma":
        shape = (mu / sg) ** 2
        rate = mu / sg**2
        return stats.gamma(shape, scale=1.0 / rate)
    if family == "lognormal":
        return stats.lognorm(sg, scale=math.exp(mu))
    conc = mu * (1 - mu) / sg**2 - 1
    return stats.beta(mu * conc, (1 - mu) * conc)


class TestKernelDensity:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_matches_scipy_reference(self, family):
        spec = KernelSpec(family)
        atom = ATOMS[family]
        ref = scipy_frozen(family, atom)
        lo, hi = spec.support
        x = np.linspace(max(lo, -6) + 1e-3, min(hi, 8) - 1e-3, 50)
        np.testing.assert_allclose(
            kernel_density(x, spec, atom), ref.pdf(x), rtol=1e-10
        )
        np.testing.assert_allclose(kernel_cdf(x, spec, atom), ref.cdf(x), rtol=1e-9)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_integrates_to_one(self, family):
        spec = KernelSpec(family)
        atom = ATOMS[family]
        lo, hi = spec.support
        total, _ = integrate.quad(
            lambda x: kernel_density(x, spec, atom),
            max(lo, -40),
            min(hi, 60),
            limit=200,
        )
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_double_exponential_mode_value(self):
        # Height 1/(2 sigma) at the mode; 0.5 for sigma=1.
        spec = KernelSpec("double_exponential")
        assert kernel_density(0.0, spec, AtomParams(0.0, 1.0)) == pytest.approx(0.5)

    @pytest.mark.parametrize("family", ["gamma", "lognormal", "beta"])
    def test_zero_outside_support(self, family):
        spec = KernelSpec(family)
        atom = ATOMS[family]
        assert kernel_density(-0.5, spec, atom) == 0.0
        if family == "beta":
            assert kernel_density(1.5, spec, atom) == 0.0

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            kernel_density(np.nan, KernelSpec("normal"), AtomParams(0.0, 1.0))

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            KernelSpec("triangle")

    @pytest.mark.parametrize("family", FAMILIES)
    def test_cdf_monotone(self, family):
        spec = KernelSpec(family)
        atom = ATOMS[family]
        lo, hi = spec.support
        x = np.linspace(max(lo, -10), min(hi, 10), 200)
        c = kernel_cdf(x, spec, atom)
        assert np.all(np.diff(c) >= -1e-14)
        assert np.all((c >= 0) & (c <= 1))


class TestParameterMaps:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_round_trip_representatives(self, family):
        spec = KernelSpec(family)
        atom = ATOMS[family]
        a, b = to_natural(spec, atom.mu, atom.sigma)
        mu2, sg2 = from_natural(spec, a, b)
        assert mu2 == pytest.approx(atom.mu, rel=1e-12)
        assert sg2 == pytest.approx(atom.sigma, rel=1e-12)

    @given(
        mu=st.floats(0.05, 0.95),
        frac=st.floats(0.05, 0.95),
    )
    @settings(max_examples=50, deadline=None)
    def test_beta_round_trip_property(self, mu, frac):
        spec = KernelSpec("beta")
        sigma = frac * math.sqrt(mu * (1 - mu))
        a, b = to_natural(spec, mu, sigma)
        assert a > 0 and b > 0
        mu2, sg2 = from_natural(spec, a, b)
        assert mu2 == pytest.approx(mu, rel=1e-10)
        assert sg2 == pytest.approx(sigma, rel=1e-10)

    @given(mu=st.floats(0.01, 50.0), sigma=st.floats(0.01, 20.0))
    @settings(max_examples=50, deadline=None)
    def test_gamma_round_trip_property(self, mu, sigma):
        spec = KernelSpec("gamma")
        a, b = to_natural(spec, mu, sigma)
        mu2, sg2 = from_natural(spec, a, b)
        assert mu2 == pytest.approx(mu, rel=1e-10)
        assert sg2 == pytest.approx(sigma, rel=1e-10)

    def test_validity_masks(self):
        assert not atom_params_valid(KernelSpec("gamma"), -1.0, 1.0)
        assert not atom_params_valid(KernelSpec("beta"), 0.5, 0.51)
        assert atom_params_valid(KernelSpec("beta"), 0.5, 0.3)
        assert not atom_params_valid(KernelSpec("normal"), 0.0, 0.0)


class TestObservationLoglik:
    def test_exact_normal(self):
        obs = Observation.exact(0.0)
        ll = observation_loglik(obs, KernelSpec("normal"), AtomParams(0.0, 1.0))
        assert ll == pytest.approx(math.log(1.0 / math.sqrt(2 * math.pi)))

    def test_left_censored_at_median(self):
        obs = Observation("left_censored", right=0.0)
        ll = observation_loglik(obs, KernelSpec("normal"), AtomParams(0.0, 1.0))
        assert ll == pytest.approx(math.log(0.5))

    def test_right_censored(self):
        obs = Observation("right_censored", left=1.0)
        ll = observation_loglik(obs, KernelSpec("normal"), AtomParams(0.0, 1.0))
        assert ll == pytest.approx(math.log(stats.norm.sf(1.0)))

    def test_interval(self):
        obs = Observation("interval", left=-1.0, right=1.0)
        ll = observation_loglik(obs, KernelSpec("normal"), AtomParams(0.0, 1.0))
        want = math.log(stats.norm.cdf(1.0) - stats.norm.cdf(-1.0))
        assert ll == pytest.approx(want)

    def test_far_tail_interval_uses_complementary_branch(self):
        # F(9)-F(8) underflows to 0 in the naive difference; the survival
        # branch keeps ~16 digits.
        obs = Observation("interval", left=8.0, right=9.0)
        ll = observation_loglik(obs, KernelSpec("normal"), AtomParams(0.0, 1.0))
        want = math.log(stats.norm.sf(8.0) - stats.norm.sf(9.0))
        assert ll == pytest.approx(want, rel=1e-10)

    def test_impossible_interval_is_minus_inf_not_error(self):
        obs = Observation("interval", left=2.0, right=3.0)
        ll = observation_loglik(obs, KernelSpec("beta"), ATOMS["beta"])
        assert ll == -math.inf

    def test_exact_outside_support_is_minus_inf(self):
        obs = Observation.exact(-1.0)
        ll = observation_loglik(obs, KernelSpec("gamma"), ATOMS["gamma"])
        assert ll == -math.inf

    @pytest.mark.parametrize("family", FAMILIES)
    def test_matrix_agrees_with_scalar(self, family):
        spec = KernelSpec(family)
        lo, hi = spec.support
        a = 0.25 if family == "beta" else max(lo, -2.0) + 0.6
        b = 0.65 if family == "beta" else a + 0.9
        observations = [
            Observation.exact(0.3 if family == "beta" else a + 0.2),
            Observation("interval", left=a, right=b),
            Observation("left_censored", right=b),
            Observation("right_censored", left=a),
        ]
        atoms = [ATOMS[family], AtomParams(ATOMS[family].mu, ATOMS[family].sigma * 0.8)]
        prep = prepare_observations(observations)
        mat = observation_loglik_matrix(
            prep, spec, np.array([at.mu for at in atoms]), np.array([at.sigma for at in atoms])
        )
        for i, obs in enumerate(observations):
            for j, atom in enumerate(atoms):
                want = observation_loglik(obs, spec, atom)
                if math.isinf(want):
                    assert math.isinf(mat[i, j])
                else:
                    assert mat[i, j] == pytest.approx(want, rel=1e-12)


class TestMixture:
    def test_two_atom_value(self):
        spec = KernelSpec("normal")
        atoms = [AtomParams(-1.0, 0.5), AtomParams(2.0, 1.0)]
        w = [0.3, 0.7]
        x = 0.4
        want = 0.3 * stats.norm.pdf(x, -1.0, 0.5) + 0.7 * stats.norm.pdf(x, 2.0, 1.0)
        assert mixture_density(x, spec, w, atoms) == pytest.approx(want, rel=1e-12)
        want_cdf = 0.3 * stats.norm.cdf(x, -1.0, 0.5) + 0.7 * stats.norm.cdf(x, 2.0, 1.0)
        assert mixture_cdf(x, spec, w, atoms) == pytest.approx(want_cdf, rel=1e-12)

    def test_weight_validation(self):
        spec = KernelSpec("normal")
        atoms = [AtomParams(0.0, 1.0), AtomParams(1.0, 1.0)]
        with pytest.raises(ValueError):
            mixture_density(0.0, spec, [0.5, 0.6], atoms)
        with pytest.raises(ValueError):
            mixture_density(0.0, spec, [0.5], atoms)
        with pytest.raises(ValueError):
            mixture_density(0.0, spec, [-0.1, 1.1], atoms)

    def test_single_atom_equals_kernel(self):
        spec = KernelSpec("lognormal")
        atom = ATOMS["lognormal"]
        x = np.array([0.5, 1.0, 2.5])
        np.testing.assert_allclose(
            mixture_density(x, spec, [1.0], [atom]),
            kernel_density(x, spec, atom),
            rtol=1e-14,
        )


class TestObservation:
    def test_from_bounds_dispatch(self):
        assert Observation.from_bounds(1.0, 1.0).kind == "exact"
        assert Observation.from_bounds(1.0, 2.0).kind == "interval"
        assert Observation.from_bounds(1.0, None).kind == "right_censored"
        assert Observation.from_bounds(None, 2.0).kind == "left_censored"

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            Observation("interval", left=2.0, right=1.0)
        with pytest.raises(ValueError):
            Observation("exact", value=math.nan)
        with pytest.raises(ValueError):
            Observation("left_censored", left=1.0, right=2.0)

    @given(
        left=st.floats(-100, 100, allow_nan=False),
        width=st.floats(0.0, 50.0, allow_nan=False),
    )
    @settings(max_examples=100, deadline=None)
    def test_from_bounds_total(self, left, width):
        right = left + width
        obs = Observation.from_bounds(left, right)
        # Degenerate intervals collapse to exact points; the comparison is
        # on the floats actually stored, so widths below one ulp are exact.
        if right == left:
            assert obs.kind == "exact"
        else:
            assert obs.kind == "interval"
        lo, hi = obs.bounds()
        assert lo <= obs.midpoint <= hi
