"""Posterior summaries computed from mixture traces.

Each kept iteration of a trace is one draw of the random mixture; the
functions here turn the collection of draws into reportable estimates: a
posterior mean density with a pointwise credible band, the predictive
distribution function, quantile estimates with uncertainty (for tail
benchmarks such as a hazard threshold at the fifth percentile), and
per-observation conditional predictive ordinates for model comparison.

All functions accept any trace exposing ``config``, ``weights``,
``atom_mu``, ``atom_sigma`` and ``num_kept`` the way ``ChainTrace`` does.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import AtomParams, mixture_cdf, mixture_density, observation_loglik_matrix
from .observations import Observation, PreparedData, prepare_observations

__all__ = [
    "CpoVector",
    "DensityEstimate",
    "cdf_estimate",
    "cpo",
    "default_grid",
    "density_estimate",
    "predictive_cdf",
    "predictive_quantile",
    "quantile_estimate",
]

QUANTILE_TOL = 1e-8  # bisection tolerance in x for quantile inversion


@dataclass(frozen=True)
class DensityEstimate:
    """Pointwise posterior summary of the random density on a grid.

    ``mean`` is the posterior expectation; ``lower`` and ``upper`` are the
    pointwise empirical quantiles at the requested credible level.  On a
    grid spanning the bulk of the data the mean curve integrates to one up
    to truncation and grid error; a deliberately narrow grid captures
    correspondingly less mass.
    """

    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        for name in ("grid", "mean", "lower", "upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.grid.ndim != 1 or self.grid.size == 0:
            raise ValueError("grid must be a nonempty vector")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        for name in ("mean", "lower", "upper"):
            if getattr(self, name).shape != self.grid.shape:
                raise ValueError(f"{name} must match the grid shape")
        values = np.concatenate([self.mean, self.lower, self.upper])
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ValueError("density values must be finite and nonnegative")
        # narrow credible levels may exclude the pointwise mean, so only the
        # band ordering itself is an invariant
        if np.any(self.lower > self.upper):
            raise ValueError("band must satisfy lower <= upper pointwise")


@dataclass(frozen=True)
class CpoVector:
    """Per-observation conditional predictive ordinates.

    A zero entry marks an observation some iteration assigned zero
    predictive mass (the harmonic mean then degenerates); entries are
    otherwise positive.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("values must be a nonempty vector")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("conditional predictive ordinates must be finite and nonnegative")

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def median(self) -> float:
        return float(np.median(self.values))


def _iteration_rows(trace):
    """Yield (weights, atoms) per kept iteration, weights renormalized."""
    for w, mu, sigma in zip(trace.weights, trace.atom_mu, trace.atom_sigma):
        w = np.asarray(w, dtype=float)
        yield w / w.sum(), [AtomParams(float(m), float(s)) for m, s in zip(mu, sigma)]


def _require_kept(trace) -> int:
    kept = trace.num_kept
    if kept < 1:
        raise ValueError("trace holds no kept iterations")
    return kept


def default_grid(observations: list[Observation], kernel, size: int = 200, padding: float = 0.1):
    """Equispaced evaluation grid spanning the data with proportional padding.

    The padded range is clipped to the open kernel support, nudged strictly
    inside on bounded sides so boundary singularities are never evaluated.
    """
    if size < 2:
        raise ValueError("grid size must be at least 2")
    if padding < 0:
        raise ValueError("padding must be nonnegative")
    data = observations if isinstance(observations, PreparedData) else prepare_observations(list(observations))
    mids = data.midpoints
    lo, hi = float(mids.min()), float(mids.max())
    span = hi - lo if hi > lo else max(abs(hi), 1.0)
    lo -= padding * span
    hi += padding * span
    support_lo, support_hi = kernel.support
    inset = 1e-9 * span
    if math.isfinite(support_lo):
        lo = max(lo, support_lo + inset)
    if math.isfinite(support_hi):
        hi = min(hi, support_hi - inset)
    if not lo < hi:
        raise ValueError("padded data range does not intersect the kernel support")
    return np.linspace(lo, hi, size)


def density_estimate(trace, grid, level: float = 0.95) -> DensityEstimate:
    """Posterior mean density and pointwise credible band on a grid.

    Parameters
    ----------
    trace : ChainTrace
        Kept draws of the random mixture.
    grid : array_like
        Strictly increasing evaluation points.
    level : float
        Credible level of the pointwise band (default 0.95).

    Returns
    -------
    DensityEstimate
    """
    kept = _require_kept(trace)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty vector")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    kernel = trace.config.kernel
    draws = np.empty((kept, grid.size))
    for t, (w, atoms) in enumerate(_iteration_rows(trace)):
        draws[t] = mixture_density(grid, kernel, w, atoms)
    a = 0.5 * (1.0 - level)
    lower, upper = np.quantile(draws, [a, 1.0 - a], axis=0)
    return DensityEstimate(grid=grid, mean=draws.mean(axis=0), lower=lower, upper=upper)


def cdf_estimate(trace, grid) -> np.ndarray:
    """Posterior mean distribution function evaluated on a grid."""
    _require_kept(trace)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty vector")
    return predictive_cdf(trace)(grid)


def predictive_cdf(trace):
    """Posterior mean distribution function as a vectorized callable."""
    kept = _require_kept(trace)
    kernel = trace.config.kernel
    rows = list(_iteration_rows(trace))

    def mean_cdf(x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        total = np.zeros(arr.shape)
        for w, atoms in rows:
            total += mixture_cdf(arr, kernel, w, atoms)
        total /= kept
        return float(total[0]) if np.ndim(x) == 0 else total

    return mean_cdf


def predictive_quantile(trace, grid_size: int = 2001):
    """Inverse of the posterior mean distribution function as a callable.

    The mean CDF is tabulated once on a fine grid covering every atom and
    inverted by monotone interpolation; accuracy is limited by the grid
    resolution, which suits plotting tables.  For a quantile estimate with
    posterior uncertainty use :func:`quantile_estimate`.
    """
    _require_kept(trace)
    lo, hi = _atom_range(trace)
    x = np.linspace(lo, hi, grid_size)
    cdf = predictive_cdf(trace)(x)
    # strictly increasing knots keep the interpolation invertible
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    knots_p, knots_x = cdf[keep], x[keep]

    def quantile(p):
        arr = np.atleast_1d(np.asarray(p, dtype=float))
        if np.any((arr <= 0) | (arr >= 1)):
            raise ValueError("probability levels must lie strictly inside (0, 1)")
        out = np.interp(arr, knots_p, knots_x)
        return float(out[0]) if np.ndim(p) == 0 else out

    return quantile


def _atom_range(trace) -> tuple[float, float]:
    """Interval certain to contain all but negligible mixture mass."""
    support_lo, support_hi = trace.config.kernel.support
    lo = math.inf
    hi = -math.inf
    widest = 0.0
    for mu, sigma in zip(trace.atom_mu, trace.atom_sigma):
        lo = min(lo, float(np.min(mu)))
        hi = max(hi, float(np.max(mu)))
        widest = max(widest, float(np.max(sigma)))
    lo -= 40.0 * widest
    hi += 40.0 * widest
    if math.isfinite(support_lo):
        lo = max(lo, support_lo)
    if math.isfinite(support_hi):
        hi = min(hi, support_hi)
    return lo, hi


def quantile_estimate(trace, p: float, level: float = 0.95) -> tuple[float, float, float]:
    """Posterior point and interval estimate of the ``p`` quantile.

    Each kept iteration's mixture CDF is inverted by bisection to within
    ``QUANTILE_TOL`` in x, giving one draw from the posterior of the
    quantile; the estimate is the median of those draws and the interval
    their central ``level`` quantiles.

    Parameters
    ----------
    trace : ChainTrace
    p : float
        Probability level in (0, 1), e.g. 0.05 for a fifth percentile.
    level : float
        Credibility of the reported interval (default 0.95).

    Returns
    -------
    (point, lower, upper) : tuple of float
    """
    kept = _require_kept(trace)
    if not 0 < p < 1:
        raise ValueError("p must lie strictly inside (0, 1)")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    kernel = trace.config.kernel
    support_lo, support_hi = kernel.support
    draws = np.empty(kept)
    for t, (w, atoms) in enumerate(_iteration_rows(trace)):
        mu = np.array([a.mu for a in atoms])
        sigma = np.array([a.sigma for a in atoms])
        lo = float(mu.min() - 40.0 * sigma.max())
        hi = float(mu.max() + 40.0 * sigma.max())
        if math.isfinite(support_lo):
            lo = max(lo, support_lo)
        if math.isfinite(support_hi):
            hi = min(hi, support_hi)
        # widen until the bracket straddles the level, then bisect
        while mixture_cdf(lo, kernel, w, atoms) >= p and not math.isfinite(support_lo):
            lo -= hi - lo
        while mixture_cdf(hi, kernel, w, atoms) <= p and not math.isfinite(support_hi):
            hi += hi - lo
        while hi - lo > QUANTILE_TOL:
            mid = 0.5 * (lo + hi)
            if mixture_cdf(mid, kernel, w, atoms) < p:
                lo = mid
            else:
                hi = mid
        draws[t] = 0.5 * (lo + hi)
    a = 0.5 * (1.0 - level)
    lower, upper = np.quantile(draws, [a, 1.0 - a])
    return float(np.median(draws)), float(lower), float(upper)


def cpo(trace, observations: list[Observation] | None = None) -> CpoVector:
    """Harmonic-mean conditional predictive ordinate per observation.

    The reciprocal of each iteration's predictive density is averaged and
    inverted, using the predictive rows recorded in the trace; censored
    observations enter through their interval probability exactly as in
    the likelihood.  Passing ``observations`` recomputes the predictive
    rows for that data instead (it must live on the kernel support).

    An observation with zero predictive mass in any iteration gets a zero
    ordinate and a warning, since the harmonic mean degenerates.
    """
    kept = _require_kept(trace)
    if observations is None:
        log_pred = np.asarray(trace.obs_log_density, dtype=float)
    else:
        data = prepare_observations(list(observations))
        kernel = trace.config.kernel
        log_pred = np.empty((kept, len(data)))
        for t, (w, atoms) in enumerate(_iteration_rows(trace)):
            mu = np.array([a.mu for a in atoms])
            sigma = np.array([a.sigma for a in atoms])
            ll = observation_loglik_matrix(data, kernel, mu, sigma)
            rows = ll + np.log(w)[None, :]
            m = rows.max(axis=1, keepdims=True)
            log_pred[t] = (m + np.log(np.exp(rows - m).sum(axis=1, keepdims=True))).ravel()

    values = np.empty(log_pred.shape[1])
    degenerate = 0
    for i in range(log_pred.shape[1]):
        column = log_pred[:, i]
        if np.any(np.isneginf(column)):
            values[i] = 0.0
            degenerate += 1
            continue
        # exactly rounded accumulation makes the estimate independent of
        # iteration order
        m = float(np.max(-column))
        s = math.fsum(math.exp(float(-v) - m) for v in column)
        values[i] = math.exp(math.log(kept) - m - math.log(s))
    if degenerate:
        warnings.warn(
            f"{degenerate} observation(s) had zero predictive mass in some "
            "iteration; their conditional predictive ordinates are zero",
            RuntimeWarning,
            stacklevel=2,
        )
    return CpoVector(values=values)
