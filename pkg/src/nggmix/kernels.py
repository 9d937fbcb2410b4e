"""Mixture kernel catalogue with censoring-aware likelihood evaluation.

Every kernel family is parameterized by a location-like ``mu`` and a
scale-like ``sigma`` so that atoms can be moved by a single random-walk
scheme regardless of family.  The mapping to each family's natural
parameters is a documented bijection:

===================  =====================================================
family               (mu, sigma) -> natural parameters
===================  =====================================================
normal               mean mu, standard deviation sigma
double_exponential   location mu, Laplace scale sigma (density 1/(2 sigma)
                     at the mode)
gamma                mean mu > 0, standard deviation sigma: shape =
                     (mu/sigma)**2, rate = mu/sigma**2
lognormal            log-scale location mu, log-scale sigma (meanlog/sdlog)
beta                 mean mu in (0,1), standard deviation sigma with
                     sigma**2 < mu (1-mu): concentration c =
                     mu (1-mu)/sigma**2 - 1, shapes (mu c, (1-mu) c)
===================  =====================================================

Censored observations contribute interval probabilities instead of
densities: a left-censored point contributes F(right), a right-censored
point 1 - F(left), an interval point F(right) - F(left), evaluated through
the survival function when both endpoints sit in the upper tail.  A
log-likelihood of -inf is a value, not an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .observations import (
    EXACT,
    INTERVAL,
    LEFT_CENSORED,
    RIGHT_CENSORED,
    Observation,
    PreparedData,
    prepare_observations,
)

__all__ = [
    "KernelSpec",
    "AtomParams",
    "kernel_density",
    "kernel_cdf",
    "observation_loglik",
    "observation_loglik_matrix",
    "mixture_density",
    "mixture_cdf",
    "to_natural",
    "from_natural",
    "atom_params_valid",
]

_FAMILIES = ("normal", "double_exponential", "gamma", "lognormal", "beta")

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family choice; all atoms of a mixture share the family."""

    family: str = "normal"

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; choose from {_FAMILIES}"
            )

    @property
    def support(self) -> tuple[float, float]:
        if self.family in ("normal", "double_exponential"):
            return (-math.inf, math.inf)
        if self.family in ("gamma", "lognormal"):
            return (0.0, math.inf)
        return (0.0, 1.0)


@dataclass(frozen=True)
class AtomParams:
    """Location-scale pair of one mixture atom."""

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be positive and finite")


def atom_params_valid(spec: KernelSpec, mu, sigma) -> np.ndarray:
    """Whether (mu, sigma) lie in the family's admissible parameter set."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    ok = np.isfinite(mu) & np.isfinite(sigma) & (sigma > 0)
    if spec.family == "gamma":
        ok &= mu > 0
    elif spec.family == "beta":
        ok &= (mu > 0) & (mu < 1) & (sigma**2 < mu * (1.0 - mu))
    return ok


def to_natural(spec: KernelSpec, mu: float, sigma: float) -> tuple[float, float]:
    """Map (mu, sigma) to the family's natural parameter pair."""
    if not np.all(atom_params_valid(spec, mu, sigma)):
        raise ValueError(f"({mu}, {sigma}) invalid for family {spec.family!r}")
    if spec.family == "gamma":
        return (mu / sigma) ** 2, mu / sigma**2  # shape, rate
    if spec.family == "beta":
        conc = mu * (1.0 - mu) / sigma**2 - 1.0
        return mu * conc, (1.0 - mu) * conc  # shape1, shape2
    return mu, sigma  # location-scale families are their own natural form


def from_natural(spec: KernelSpec, a: float, b: float) -> tuple[float, float]:
    """Inverse of `to_natural`."""
    if spec.family == "gamma":
        if not (a > 0 and b > 0):
            raise ValueError("gamma natural parameters must be positive")
        return a / b, math.sqrt(a) / b
    if spec.family == "beta":
        if not (a > 0 and b > 0):
            raise ValueError("beta natural parameters must be positive")
        conc = a + b
        mean = a / conc
        return mean, math.sqrt(mean * (1.0 - mean) / (conc + 1.0))
    return a, b


def _log_density(family: str, x: np.ndarray, mu: np.ndarray, sigma: np.ndarray):
    """Vectorized log density; -inf outside the support."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family == "normal":
            z = (x - mu) / sigma
            return -0.5 * z * z - np.log(sigma) - 0.5 * _LOG_2PI
        if family == "double_exponential":
            return -np.abs(x - mu) / sigma - np.log(2.0 * sigma)
        if family == "gamma":
            shape = (mu / sigma) ** 2
            rate = mu / sigma**2
            out = (
                shape * np.log(rate)
                - special.gammaln(shape)
                + (shape - 1.0) * np.log(x)
                - rate * x
            )
            return np.where(x > 0, out, -np.inf)
        if family == "lognormal":
            z = (np.log(x) - mu) / sigma
            out = -0.5 * z * z - np.log(sigma) - 0.5 * _LOG_2PI - np.log(x)
            return np.where(x > 0, out, -np.inf)
        # beta
        conc = mu * (1.0 - mu) / sigma**2 - 1.0
        a = mu * conc
        b = (1.0 - mu) * conc
        out = (
            (a - 1.0) * np.log(x)
            + (b - 1.0) * np.log1p(-x)
            - special.betaln(a, b)
        )
        return np.where((x > 0) & (x < 1), out, -np.inf)


def _cdf_sf(family: str, x: np.ndarray, mu: np.ndarray, sigma: np.ndarray):
    """Vectorized (cdf, survival) pair, exact at the support boundaries."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family == "normal":
            z = (x - mu) / sigma
            return special.ndtr(z), special.ndtr(-z)
        if family == "double_exponential":
            z = (x - mu) / sigma
            lower = 0.5 * np.exp(np.minimum(z, 0.0))
            upper = 0.5 * np.exp(np.minimum(-z, 0.0))
            cdf = np.where(z < 0, lower, 1.0 - upper)
            sf = np.where(z < 0, 1.0 - lower, upper)
            return cdf, sf
        if family == "gamma":
            shape = (mu / sigma) ** 2
            rate = mu / sigma**2
            xx = np.maximum(x, 0.0)
            cdf = special.gammainc(shape, rate * xx)
            sf = special.gammaincc(shape, rate * xx)
            cdf = np.where(x <= 0, 0.0, cdf)
            sf = np.where(x <= 0, 1.0, sf)
            return cdf, sf
        if family == "lognormal":
            z = np.where(x > 0, (np.log(np.maximum(x, 1e-320)) - mu) / sigma, -np.inf)
            cdf = np.where(x > 0, special.ndtr(z), 0.0)
            sf = np.where(x > 0, special.ndtr(-z), 1.0)
            return cdf, sf
        # beta
        conc = mu * (1.0 - mu) / sigma**2 - 1.0
        a = mu * conc
        b = (1.0 - mu) * conc
        xx = np.clip(x, 0.0, 1.0)
        cdf = special.betainc(a, b, xx)
        sf = special.betainc(b, a, 1.0 - xx)
        cdf = np.where(x <= 0, 0.0, np.where(x >= 1, 1.0, cdf))
        sf = np.where(x <= 0, 1.0, np.where(x >= 1, 0.0, sf))
        return cdf, sf


def _check_x(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)):
        raise ValueError("x must not contain NaN")
    return arr


def kernel_density(x, spec: KernelSpec, atom: AtomParams):
    """Kernel density k(x | atom); zero outside the support."""
    if not np.all(atom_params_valid(spec, atom.mu, atom.sigma)):
        raise ValueError(f"atom {atom} invalid for family {spec.family!r}")
    arr = _check_x(x)
    out = np.exp(_log_density(spec.family, arr, atom.mu, atom.sigma))
    return float(out) if np.ndim(x) == 0 else out


def kernel_cdf(x, spec: KernelSpec, atom: AtomParams):
    """Kernel distribution function at x."""
    if not np.all(atom_params_valid(spec, atom.mu, atom.sigma)):
        raise ValueError(f"atom {atom} invalid for family {spec.family!r}")
    arr = _check_x(x)
    cdf, _ = _cdf_sf(spec.family, arr, atom.mu, atom.sigma)
    out = np.asarray(cdf, dtype=float)
    return float(out) if np.ndim(x) == 0 else out


def _interval_log_prob(family, lower, upper, mu, sigma):
    """log(F(upper) - F(lower)) with a complementary-tail branch.

    When both endpoints sit above the median the difference of CDFs loses
    precision; the survival-function difference is exact there.
    """
    cdf_lo, sf_lo = _cdf_sf(family, lower, mu, sigma)
    cdf_hi, sf_hi = _cdf_sf(family, upper, mu, sigma)
    prob = np.where(cdf_lo > 0.5, sf_lo - sf_hi, cdf_hi - cdf_lo)
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(prob, 0.0))


def observation_loglik(obs: Observation, spec: KernelSpec, atom: AtomParams) -> float:
    """Log contribution of one observation under one atom.

    Exact points contribute a log density, censored points the log
    probability of their interval.  Returns -inf when the observation is
    impossible under the atom.
    """
    if not np.all(atom_params_valid(spec, atom.mu, atom.sigma)):
        raise ValueError(f"atom {atom} invalid for family {spec.family!r}")
    mu = np.float64(atom.mu)
    sigma = np.float64(atom.sigma)
    with np.errstate(divide="ignore"):
        if obs.kind == "exact":
            return float(_log_density(spec.family, np.float64(obs.value), mu, sigma))
        if obs.kind == "left_censored":
            cdf, _ = _cdf_sf(spec.family, np.float64(obs.right), mu, sigma)
            return float(np.log(cdf))
        if obs.kind == "right_censored":
            _, sf = _cdf_sf(spec.family, np.float64(obs.left), mu, sigma)
            return float(np.log(sf))
        return float(
            _interval_log_prob(
                spec.family, np.float64(obs.left), np.float64(obs.right), mu, sigma
            )
        )


def observation_loglik_matrix(
    data: PreparedData, spec: KernelSpec, mu: np.ndarray, sigma: np.ndarray
) -> np.ndarray:
    """(n, m) matrix of observation log likelihoods against m atoms.

    The sampler's hot path: exact rows get log densities, censored rows get
    interval log probabilities, all broadcast over the atom axis.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))[None, :]
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))[None, :]
    n = len(data)
    m = mu.shape[1]
    out = np.empty((n, m))

    exact = data.exact_mask
    if np.any(exact):
        x = data.values[exact, None]
        out[exact] = _log_density(spec.family, x, mu, sigma)
    cens = ~exact
    if np.any(cens):
        lo = data.lower[cens, None]
        hi = data.upper[cens, None]
        kinds = data.kinds[cens, None]
        cdf_hi, sf_hi = _cdf_sf(spec.family, hi, mu, sigma)
        cdf_lo, sf_lo = _cdf_sf(spec.family, lo, mu, sigma)
        prob = np.where(cdf_lo > 0.5, sf_lo - sf_hi, cdf_hi - cdf_lo)
        prob = np.where(kinds == LEFT_CENSORED, cdf_hi, prob)
        prob = np.where(kinds == RIGHT_CENSORED, sf_lo, prob)
        with np.errstate(divide="ignore"):
            out[cens] = np.log(np.maximum(prob, 0.0))
    return out


def _as_mixture_arrays(weights, atoms):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if len(atoms) != w.size:
        raise ValueError("weights and atoms must have equal length")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be a probability vector (tolerance 1e-12)")
    mu = np.array([a.mu for a in atoms])
    sigma = np.array([a.sigma for a in atoms])
    return w, mu, sigma


def mixture_density(x, spec: KernelSpec, weights, atoms):
    """Density of the finite mixture sum_j w_j k(x | atom_j)."""
    w, mu, sigma = _as_mixture_arrays(weights, atoms)
    arr = np.atleast_1d(_check_x(x))
    dens = np.exp(_log_density(spec.family, arr[:, None], mu[None, :], sigma[None, :]))
    out = dens @ w
    return float(out[0]) if np.ndim(x) == 0 else out


def mixture_cdf(x, spec: KernelSpec, weights, atoms):
    """Distribution function of the finite mixture."""
    w, mu, sigma = _as_mixture_arrays(weights, atoms)
    arr = np.atleast_1d(_check_x(x))
    cdf, _ = _cdf_sf(spec.family, arr[:, None], mu[None, :], sigma[None, :])
    out = cdf @ w
    return float(out[0]) if np.ndim(x) == 0 else out
