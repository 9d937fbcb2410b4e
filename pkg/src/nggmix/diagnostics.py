"""Convergence diagnostics and goodness-of-fit data.

Chains from the mixture sampler vary in dimension from iteration to
iteration, so convergence is monitored through a fixed set of scalar
summaries (number of occupied components, latent tilt, log-likelihood and,
for the semiparametric model, the common scale).  The potential scale
reduction factor compares between- and within-chain variability of those
scalars, with the usual degrees-of-freedom correction on the pooled variance
estimate and a largest-eigenvalue multivariate version.

Goodness of fit is exported as plot tables: percentile-percentile and
quantile-quantile pairs of the fitted CDF against the empirical one, where
"empirical" means the classical step function for exact data and the
Turnbull nonparametric maximum-likelihood estimate when any observation is
censored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .observations import Observation, prepare_observations

__all__ = [
    "MONITORED_SCALARS",
    "ScalarTraceSet",
    "PsrfResult",
    "PsrfSummary",
    "scalar_trace_set",
    "psrf_univariate",
    "psrf_multivariate",
    "psrf",
    "TurnbullEstimate",
    "turnbull",
    "pp_table",
    "qq_table",
]

MONITORED_SCALARS = ("n_components", "latent_u", "log_likelihood", "common_scale")

# Within-chain variances below this are treated as exactly degenerate.
_DEGENERATE_VARIANCE = 1e-300


@dataclass(frozen=True)
class ScalarTraceSet:
    """Monitored scalar series, one row per chain."""

    series: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if not self.series:
            raise ValueError("at least one monitored series is required")
        shape = None
        converted = {}
        for name, values in self.series.items():
            if name not in MONITORED_SCALARS:
                raise ValueError(
                    f"unknown monitored scalar {name!r}; expected one of "
                    f"{MONITORED_SCALARS}"
                )
            values = np.asarray(values, dtype=float)
            if values.ndim != 2:
                raise ValueError(f"series {name!r} must be (chains, iterations)")
            if shape is None:
                shape = values.shape
            elif values.shape != shape:
                raise ValueError("all monitored series must share (chains, iterations)")
            converted[name] = values
        object.__setattr__(self, "series", converted)

    @property
    def num_chains(self) -> int:
        return next(iter(self.series.values())).shape[0]

    @property
    def length(self) -> int:
        return next(iter(self.series.values())).shape[1]


def scalar_trace_set(traces) -> ScalarTraceSet:
    """Collect the monitored scalars from per-chain trace objects.

    Accepts any objects exposing ``n_components``, ``latent_u`` and
    ``log_likelihood`` arrays plus an optional ``common_scale`` (present in
    every chain or in none).
    """
    if len(traces) == 0:
        raise ValueError("at least one chain trace is required")
    series: dict[str, np.ndarray] = {}
    for name in ("n_components", "latent_u", "log_likelihood"):
        series[name] = np.stack([np.asarray(getattr(t, name), float) for t in traces])
    scales = [getattr(t, "common_scale", None) for t in traces]
    present = [s is not None for s in scales]
    if all(present):
        series["common_scale"] = np.stack([np.asarray(s, float) for s in scales])
    elif any(present):
        raise ValueError("common_scale must be present in every chain or in none")
    return ScalarTraceSet(series)


@dataclass(frozen=True)
class PsrfResult:
    """Potential scale reduction: point estimate and upper confidence bound.

    ``degenerate`` marks chains whose within variance vanished; the point
    value is then 1 (identical chains) or inf (separated constant chains)
    rather than NaN.
    """

    point: float
    upper: float
    degenerate: bool = False


@dataclass(frozen=True)
class PsrfSummary:
    univariate: dict[str, PsrfResult]
    multivariate: PsrfResult


def _validate_chains(chains: np.ndarray) -> np.ndarray:
    chains = np.asarray(chains, dtype=float)
    if chains.ndim < 2 or chains.shape[0] < 2:
        raise ValueError("at least two chains are required")
    if chains.shape[1] < 2:
        raise ValueError("chains must contain at least two kept iterations")
    return chains


def psrf_univariate(chains: np.ndarray, confidence: float = 0.95) -> PsrfResult:
    """Gelman-Rubin diagnostic for one scalar across parallel chains.

    ``chains`` is (m, T).  Point estimate includes the
    degrees-of-freedom correction ``(d + 3) / (d + 1)`` with ``d`` estimated
    by method of moments; the upper bound replaces the between/within ratio
    by an F quantile at the requested two-sided confidence.
    """
    chains = _validate_chains(chains)
    m, t = chains.shape
    means = chains.mean(axis=1)
    variances = chains.var(axis=1, ddof=1)
    w = variances.mean()
    b = t * means.var(ddof=1)
    if w <= _DEGENERATE_VARIANCE:
        value = 1.0 if b <= _DEGENERATE_VARIANCE else math.inf
        return PsrfResult(point=value, upper=value, degenerate=True)
    # zero between-chain variance (identical copies) leaves the ratio finite
    # but the diagnostic carries no information, so it is flagged
    degenerate = bool(b <= _DEGENERATE_VARIANCE)

    var_w = variances.var(ddof=1) / m
    var_b = 2.0 * b * b / (m - 1)
    cov_wb = (t / m) * (
        np.cov(variances, means**2, ddof=1)[0, 1]
        - 2.0 * chains.mean() * np.cov(variances, means, ddof=1)[0, 1]
    )
    v = (t - 1) / t * w + (1.0 + 1.0 / m) * b / t
    var_v = (
        (t - 1) ** 2 * var_w
        + (1.0 + 1.0 / m) ** 2 * var_b
        + 2.0 * (t - 1) * (1.0 + 1.0 / m) * cov_wb
    ) / t**2
    ratio_fixed = (t - 1) / t
    ratio_random = (1.0 + 1.0 / m) * b / (t * w)
    if var_v <= 0:
        adjust = 1.0
    else:
        df = 2.0 * v * v / var_v
        adjust = (df + 3.0) / (df + 1.0)
    quantile_p = 0.5 * (1.0 + confidence)
    if var_w <= 0:
        # equal per-chain variances: the F denominator df is infinite
        f_quantile = stats.chi2.ppf(quantile_p, m - 1) / (m - 1)
    else:
        w_df = 2.0 * w * w / var_w
        f_quantile = stats.f.ppf(quantile_p, m - 1, w_df)
    point = math.sqrt(adjust * (ratio_fixed + ratio_random))
    upper = math.sqrt(adjust * (ratio_fixed + f_quantile * ratio_random))
    return PsrfResult(point=point, upper=upper, degenerate=degenerate)


def psrf_multivariate(chains: np.ndarray) -> PsrfResult:
    """Largest-eigenvalue multivariate scale reduction over (m, T, p) chains.

    ``sqrt((T-1)/T + (m+1)/m * lambda_1)`` with ``lambda_1`` the top
    generalized eigenvalue of the between-means covariance against the
    pooled within-chain covariance.
    """
    chains = _validate_chains(chains)
    if chains.ndim == 2:
        chains = chains[:, :, None]
    m, t, p = chains.shape
    means = chains.mean(axis=1)  # (m, p)
    centered = chains - means[:, None, :]
    within = np.einsum("mti,mtj->ij", centered, centered) / (m * (t - 1))
    grand = means.mean(axis=0)
    dm = means - grand
    between_over_t = dm.T @ dm / (m - 1)  # = B / T
    min_within = np.min(np.linalg.eigvalsh(within)) if p > 1 else within[0, 0]
    if min_within <= _DEGENERATE_VARIANCE:
        separated = np.max(np.abs(between_over_t)) > _DEGENERATE_VARIANCE
        value = math.inf if separated else 1.0
        return PsrfResult(point=value, upper=value, degenerate=True)
    top = linalg.eigh(between_over_t, within, eigvals_only=True)[-1]
    point = math.sqrt((t - 1) / t + (m + 1) / m * top)
    degenerate = bool(np.max(np.abs(between_over_t)) <= _DEGENERATE_VARIANCE)
    return PsrfResult(point=point, upper=point, degenerate=degenerate)


def psrf(trace_set: ScalarTraceSet, confidence: float = 0.95) -> PsrfSummary:
    """Univariate diagnostics per monitored scalar plus the multivariate one.

    Scalars that are degenerate across every chain (for example a common
    scale pinned by a point-mass prior) keep their flagged univariate entry
    but are excluded from the multivariate statistic, which would otherwise
    be singular by construction.
    """
    univariate = {
        name: psrf_univariate(values, confidence)
        for name, values in trace_set.series.items()
    }
    active = [
        values
        for name, values in trace_set.series.items()
        if not univariate[name].degenerate
    ]
    if active:
        stacked = np.stack(active, axis=2)
        multivariate = psrf_multivariate(stacked)
    else:
        multivariate = PsrfResult(point=1.0, upper=1.0, degenerate=True)
    return PsrfSummary(univariate=univariate, multivariate=multivariate)


# ---------------------------------------------------------------------------
# Turnbull nonparametric maximum likelihood estimate
# ---------------------------------------------------------------------------

# Lattice encoding of observation bounds: a position (value, 0) is the point
# itself, (value, 1) is "immediately above value".  Censored observations are
# the half-open interval (left, right], exact ones the single point {x}, so
# ties between exact points and interval endpoints resolve toward the exact
# point by construction.


def _observation_lattice(obs: Observation) -> tuple[tuple, tuple]:
    lo, hi = obs.bounds()
    if obs.kind == "exact":
        return (lo, 0), (hi, 0)
    return (lo, 1), (hi, 0)


@dataclass(frozen=True)
class TurnbullEstimate:
    """NPMLE of a CDF under arbitrary censoring.

    Mass ``masses[j]`` sits inside ``(intervals[j, 0], intervals[j, 1]]``
    (a single point when the two endpoints coincide); its position within
    the interval is not identified, and the step CDF places it at the right
    endpoint.  Mass on an unbounded interval never enters the CDF at finite
    arguments.
    """

    intervals: np.ndarray
    masses: np.ndarray
    converged: bool
    iterations: int

    def __post_init__(self) -> None:
        intervals = np.asarray(self.intervals, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "intervals", intervals)
        object.__setattr__(self, "masses", masses)
        if intervals.ndim != 2 or intervals.shape[1] != 2:
            raise ValueError("intervals must be an (m, 2) array")
        if masses.shape != (intervals.shape[0],):
            raise ValueError("one mass per support interval is required")
        if np.any(masses < -1e-12) or abs(masses.sum() - 1.0) > 1e-8:
            raise ValueError("masses must be a probability vector")

    def cdf(self, x) -> np.ndarray:
        """Right-continuous step CDF evaluated at ``x``."""
        x = np.asarray(x, dtype=float)
        ends = self.intervals[:, 1]
        finite = np.isfinite(ends)
        order = np.argsort(ends[finite])
        jumps = ends[finite][order]
        heights = np.concatenate([[0.0], np.cumsum(self.masses[finite][order])])
        return heights[np.searchsorted(jumps, x, side="right")]

    @property
    def support_points(self) -> np.ndarray:
        """Finite right endpoints, where the step CDF jumps."""
        ends = self.intervals[:, 1]
        return np.sort(ends[np.isfinite(ends)])


def turnbull(
    observations: list[Observation],
    tol: float = 1e-8,
    max_iterations: int = 10_000,
) -> TurnbullEstimate:
    """Self-consistency EM for the NPMLE of the CDF under censoring.

    Support is restricted to the innermost intervals of the data (maximal
    intervals whose overlap pattern with every observation is constant);
    masses are iterated to the fixed point of the self-consistency equations
    and the estimate reduces to the empirical CDF when no observation is
    censored.  Stops when the largest mass change drops below ``tol``; if
    ``max_iterations`` arrives first the best iterate is returned with
    ``converged=False``.
    """
    if len(observations) == 0:
        raise ValueError("at least one observation is required")
    bounds = [_observation_lattice(obs) for obs in observations]

    # innermost intervals: scan endpoint events, left before right on ties,
    # keeping the last left seen before each consuming right
    events = sorted(
        [(lo, 0) for lo, _ in bounds] + [(hi, 1) for _, hi in bounds],
        key=lambda item: (item[0], item[1]),
    )
    innermost: list[tuple[tuple, tuple]] = []
    pending = None
    for position, kind in events:
        if kind == 0:
            pending = position
        elif pending is not None:
            innermost.append((pending, position))
            pending = None
    starts = [s for s, _ in innermost]
    ends = [e for _, e in innermost]

    # membership: innermost interval j lies inside observation i
    alpha = np.array(
        [[lo <= s and e <= hi for s, e in zip(starts, ends)] for lo, hi in bounds],
        dtype=float,
    )
    assert alpha.any(axis=1).all(), "every observation covers an innermost interval"

    m = len(innermost)
    masses = np.full(m, 1.0 / m)
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        weighted = alpha * masses
        updated = (weighted / weighted.sum(axis=1, keepdims=True)).mean(axis=0)
        delta = np.abs(updated - masses).max()
        masses = updated
        if delta < tol:
            converged = True
            break

    intervals = np.array(
        [[s[0], e[0]] for s, e in zip(starts, ends)], dtype=float
    )
    return TurnbullEstimate(
        intervals=intervals,
        masses=masses,
        converged=converged,
        iterations=iteration,
    )


# ---------------------------------------------------------------------------
# Goodness-of-fit tables
# ---------------------------------------------------------------------------


def _empirical_axis(observations: list[Observation]) -> tuple[np.ndarray, np.ndarray]:
    """Evaluation points and empirical CDF ordinates for the data.

    Exact-only data use the classical empirical CDF at its jump points;
    censored data use the Turnbull estimate on its own support, never
    beyond.
    """
    data = prepare_observations(observations)
    if not data.has_censoring:
        points = np.unique(data.values)
        ordinates = np.searchsorted(np.sort(data.values), points, side="right")
        return points, ordinates / len(observations)
    estimate = turnbull(observations)
    points = estimate.support_points
    return points, estimate.cdf(points)


def pp_table(observations: list[Observation], model_cdf) -> np.ndarray:
    """Percentile-percentile pairs (empirical, model) for center fit.

    ``model_cdf`` maps an array of values to fitted CDF ordinates, normally
    the posterior mean CDF.
    """
    points, empirical = _empirical_axis(observations)
    model = np.asarray(model_cdf(points), dtype=float)
    return np.column_stack([empirical, model])


def qq_table(observations: list[Observation], model_quantile) -> np.ndarray:
    """Quantile-quantile pairs (empirical, model) for tail fit.

    ``model_quantile`` maps probability levels to fitted quantiles.  Each
    support point of the empirical (or Turnbull) CDF is compared at the
    midpoint of its jump, the usual plotting position; levels therefore stay
    strictly inside (0, 1) and the sample extremes are kept.
    """
    points, empirical = _empirical_axis(observations)
    below = np.concatenate([[0.0], empirical[:-1]])
    levels = 0.5 * (empirical + below)
    model = np.asarray(model_quantile(levels), dtype=float)
    return np.column_stack([points, model])
