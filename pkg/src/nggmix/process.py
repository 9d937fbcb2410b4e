"""Normalized generalized gamma (NGG) process primitives.

The completely random measure underlying the mixture models in this package
has Levy intensity

    nu(dv, dtheta) = exp(-kappa * v) / Gamma(1 - gamma) * v**-(1 + gamma) dv
                     * alpha * P0(dtheta),

with total-mass parameter ``alpha > 0``, exponential tilt ``kappa >= 0`` and
stability index ``gamma in [0, 1)``.  Posterior computations tilt the
intensity further by a latent variable ``u``, so every function here accepts
the combined rate ``kappa + u`` through its ``u`` argument.

Jumps are generated largest-first by inverting the tail-mass function

    N(v) = alpha / Gamma(1 - gamma) * int_v^inf exp(-(kappa + u) x)
           * x**-(1 + gamma) dx

at the arrival times of a unit-rate Poisson process.  Truncation of the
infinite series is controlled by matching moments of the total mass.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "NggParams",
    "JumpSeries",
    "TruncationPolicy",
    "TruncationLevel",
    "levy_tail_mass",
    "invert_tail_mass",
    "sample_unfixed_jumps",
    "total_mass_moment",
    "truncation_moment_index",
    "moment_match_index",
    "truncation_search",
    "truncation_level_for",
]

# Saturation value reported when N(v) overflows near v = 0.
TAIL_MASS_SATURATION = 1e300

_EULER_GAMMA = float(np.euler_gamma)


@dataclass(frozen=True)
class NggParams:
    """Parameters of a normalized generalized gamma process.

    Special cases: ``(alpha, kappa, 0)`` is a Dirichlet process with
    concentration ``alpha`` (up to the scale of ``kappa``), ``(1, kappa, 1/2)``
    a normalized inverse Gaussian process and ``(1, 0, gamma)`` a normalized
    stable process.
    """

    alpha: float = 1.0  # total mass, > 0
    kappa: float = 0.0  # exponential tilt, >= 0
    gamma: float = 0.4  # stability index, in [0, 1)

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be nonnegative and finite, got {self.kappa}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.kappa == 0.0 and self.gamma == 0.0:
            raise ValueError("kappa and gamma cannot both be zero")


@dataclass(frozen=True)
class JumpSeries:
    """A finite, decreasing series of jump sizes from one process draw."""

    jumps: np.ndarray  # strictly decreasing, positive
    saturated: bool = False  # True if any tail-mass evaluation saturated

    def __post_init__(self) -> None:
        jumps = np.asarray(self.jumps, dtype=float)
        object.__setattr__(self, "jumps", jumps)
        if jumps.ndim != 1:
            raise ValueError("jumps must be a one-dimensional array")
        if jumps.size and not np.all(jumps > 0):
            raise ValueError("jumps must be positive")
        if jumps.size > 1 and not np.all(np.diff(jumps) < 0):
            raise ValueError("jumps must be strictly decreasing")

    def __len__(self) -> int:
        return int(self.jumps.size)

    @property
    def total(self) -> float:
        return float(self.jumps.sum())


@dataclass(frozen=True)
class TruncationPolicy:
    """How many jumps to keep when instantiating the unfixed part."""

    target_index: float = 0.01  # moment-match budget
    num_moments: int = 4  # K, moments compared
    max_jumps: int = 2000  # hard cap on the series length
    min_jumps: int = 8  # never truncate below this

    def __post_init__(self) -> None:
        if not (0 < self.target_index < 1):
            raise ValueError("target_index must lie in (0, 1)")
        if self.num_moments < 1:
            raise ValueError("num_moments must be at least 1")
        if self.min_jumps < 1 or self.max_jumps < self.min_jumps:
            raise ValueError("need 1 <= min_jumps <= max_jumps")


@dataclass(frozen=True)
class TruncationLevel:
    """Result of a truncation-level search."""

    level: int
    reached: bool  # False when the budget was unattainable within max_jumps
    index: float  # moment-match index at `level`


def _tail_mass_raw(v: np.ndarray, params: NggParams, u: float) -> np.ndarray:
    """N(v) without saturation handling; may return inf."""
    beta = params.kappa + u
    gamma = params.gamma
    alpha = params.alpha
    if beta == 0.0:
        # Untilted stable process: closed form alpha * v**-gamma / (gamma * Gamma(1-gamma)).
        if gamma == 0.0:
            raise ValueError("tail mass undefined for kappa + u = 0 and gamma = 0")
        return alpha / (gamma * special.gamma(1.0 - gamma)) * np.power(v, -gamma)
    x = beta * v
    if gamma == 0.0:
        return alpha * special.exp1(x)
    # Upper incomplete gamma of negative order via one recurrence step:
    # Gamma(-g, x) = (x**-g * exp(-x) - Gamma(1-g, x)) / g, all terms positive-safe.
    g1 = special.gamma(1.0 - gamma)
    upper = special.gammaincc(1.0 - gamma, x) * g1
    with np.errstate(over="ignore", divide="ignore"):
        num = np.power(x, -gamma) * np.exp(-x) - upper
        return alpha / g1 * np.power(beta, gamma) * num / gamma


def levy_tail_mass(v, params: NggParams, u: float = 0.0):
    """Expected number of jumps exceeding ``v`` under the tilted intensity.

    Parameters
    ----------
    v : float or ndarray
        Positive jump-size threshold(s).
    params : NggParams
        Process parameters.
    u : float, optional
        Nonnegative posterior tilt added to ``kappa``.

    Returns
    -------
    float or ndarray
        N(v), saturated at 1e300 (with a warning) where the exact value
        overflows as ``v -> 0``.
    """
    if u < 0:
        raise ValueError("u must be nonnegative")
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("v must be nonnegative and not NaN")
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = _tail_mass_raw(arr, params, u)
    out = np.asarray(out, dtype=float)
    bad = ~np.isfinite(out) | (out > TAIL_MASS_SATURATION)
    if np.any(bad):
        warnings.warn(
            "levy_tail_mass saturated at 1e300 for very small v",
            RuntimeWarning,
            stacklevel=2,
        )
        out = np.where(bad, TAIL_MASS_SATURATION, out)
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(out)
    return out


def _initial_jump_guess(xi: np.ndarray, params: NggParams, u: float) -> np.ndarray:
    """Starting point for bracketing, from the small-v behaviour of N."""
    beta = params.kappa + u
    gamma = params.gamma
    alpha = params.alpha
    with np.errstate(over="ignore"):
        # overflow saturates to inf and the clip below absorbs it
        if gamma > 0.0:
            # N(v) ~ alpha * v**-gamma / (gamma * Gamma(1 - gamma)) as v -> 0.
            guess = np.power(gamma * special.gamma(1.0 - gamma) * xi / alpha, -1.0 / gamma)
        else:
            # N(v) ~ -alpha * (log(beta v) + euler_gamma) as v -> 0.
            guess = np.exp(-xi / alpha - _EULER_GAMMA) / beta
    return np.clip(guess, 1e-290, 1e280)


def _invert_tail_mass_array(
    xi: np.ndarray, params: NggParams, u: float, rtol: float = 1e-9
) -> np.ndarray:
    """Vectorized solve of N(J) = xi by bracketed bisection in log space."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0) or np.any(~np.isfinite(xi)):
        raise ValueError("targets must be positive and finite")

    def tail(v):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            out = _tail_mass_raw(v, params, u)
        return np.where(np.isfinite(out), out, TAIL_MASS_SATURATION)

    lo = _initial_jump_guess(xi, params, u)
    hi = lo.copy()
    # Expand geometrically until N(lo) >= xi >= N(hi); N is decreasing.
    for _ in range(400):
        need = tail(lo) < xi
        if not np.any(need):
            break
        lo[need] *= 0.125
    else:
        raise RuntimeError(
            f"bracket expansion failed on the low side: lo={lo.min():.3e}"
        )
    for _ in range(400):
        need = tail(hi) > xi
        if not np.any(need):
            break
        hi[need] *= 8.0
    else:
        raise RuntimeError(
            f"bracket expansion failed on the high side: hi={hi.max():.3e}"
        )

    log_lo = np.log(lo)
    log_hi = np.log(hi)
    mid = np.exp(0.5 * (log_lo + log_hi))
    for _ in range(128):
        nm = tail(mid)
        done = np.abs(nm - xi) <= rtol * xi
        width_done = (log_hi - log_lo) <= 4e-16 * np.abs(log_hi)
        if np.all(done | width_done):
            break
        high_side = nm > xi  # mid still too small
        log_lo = np.where(high_side & ~done, np.log(mid), log_lo)
        log_hi = np.where(~high_side & ~done, np.log(mid), log_hi)
        mid = np.where(done, mid, np.exp(0.5 * (log_lo + log_hi)))
    return mid


def invert_tail_mass(xi, params: NggParams, u: float = 0.0, rtol: float = 1e-9):
    """Solve N(J) = xi for the jump size J.

    Uses bracketed bisection in log space from a small-v asymptotic guess;
    the result satisfies ``|N(J) - xi| <= rtol * xi`` whenever that is
    representable in double precision.
    """
    scalar = np.isscalar(xi) or np.ndim(xi) == 0
    out = _invert_tail_mass_array(np.atleast_1d(xi), params, u, rtol=rtol)
    return float(out[0]) if scalar else out


def sample_unfixed_jumps(
    count: int, params: NggParams, u: float, rng: np.random.Generator
) -> JumpSeries:
    """Draw the ``count`` largest jumps of the tilted process.

    The arrival times are partial sums of unit exponentials; inverting the
    tail mass at those times yields jumps in strictly decreasing order.
    """
    if count < 1:
        raise ValueError("count must be positive")
    xi = np.cumsum(rng.standard_exponential(count))
    jumps = _invert_tail_mass_array(xi, params, u)
    # Bisection noise could tie neighbouring values; nudge to keep strict order.
    for k in range(1, jumps.size):
        if jumps[k] >= jumps[k - 1]:
            jumps[k] = np.nextafter(jumps[k - 1], 0.0)
    return JumpSeries(jumps=jumps)


def _cumulants(m: int, params: NggParams, u: float) -> np.ndarray:
    beta = params.kappa + u
    if beta <= 0:
        raise ValueError("total-mass moments require kappa + u > 0")
    gamma = params.gamma
    k = np.arange(1, m + 1, dtype=float)
    return (
        params.alpha
        / special.gamma(1.0 - gamma)
        * special.gamma(k - gamma)
        / beta ** (k - gamma)
    )


def _moments_from_cumulants(cumulants: np.ndarray) -> np.ndarray:
    """Raw moments m_1..m_K from cumulants c_1..c_K."""
    K = cumulants.size
    moments = np.empty(K)
    for n in range(1, K + 1):
        acc = 0.0
        for j in range(1, n + 1):
            prev = moments[n - j - 1] if n - j >= 1 else 1.0
            acc += math.comb(n - 1, j - 1) * cumulants[j - 1] * prev
        moments[n - 1] = acc
    return moments


def total_mass_moment(order: int, params: NggParams, u: float = 0.0) -> float:
    """Exact raw moment of the total mass of the tilted process.

    Cumulants are ``alpha * Gamma(k - gamma) / (Gamma(1 - gamma)
    * (kappa + u)**(k - gamma))``; moments follow from the standard
    cumulant-to-moment recursion.  Orders above 10 are refused.
    """
    if not 1 <= order <= 10:
        raise ValueError("moment order must lie in 1..10")
    return float(_moments_from_cumulants(_cumulants(order, params, u))[order - 1])


def truncation_moment_index(
    level: int, params: NggParams, u: float, num_moments: int = 4
) -> float:
    """Deterministic moment-match error of a ``level``-jump truncation.

    The truncation at the ``level`` largest jumps is surrogated by a fixed
    threshold tau with N(tau) = level.  Jumps below tau form the discarded
    tail; its cumulant deficit has closed form through lower incomplete
    gamma functions, and the index is the largest relative raw-moment
    deficit over orders 1..num_moments.  Decreasing in ``level`` and zero
    in the limit, which makes it usable as a bisection target.
    """
    if level < 1:
        raise ValueError("level must be positive")
    beta = params.kappa + u
    if beta <= 0:
        raise ValueError("moment-based truncation control requires kappa + u > 0")
    tau = invert_tail_mass(float(level), params, u)
    k = np.arange(1, num_moments + 1, dtype=float)
    full = _cumulants(num_moments, params, u)
    kept = full * special.gammaincc(k - params.gamma, beta * tau)
    m_full = _moments_from_cumulants(full)
    m_kept = _moments_from_cumulants(kept)
    return float(np.max((m_full - m_kept) / m_full))


def moment_match_index(
    series: JumpSeries,
    params: NggParams,
    u: float,
    num_moments: int = 4,
    replicates: int = 100,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte Carlo moment-match error of a truncated series.

    Empirical raw moments of the truncated total mass over ``replicates``
    series (the one supplied plus fresh draws at the same length) are
    compared with the exact moments of the full mass; the index is the
    largest relative absolute error over orders 1..num_moments.  The Monte
    Carlo noise floor scales like 1/sqrt(replicates), so small budgets need
    large replicate counts; `truncation_moment_index` is the deterministic
    companion used for truncation control.
    """
    if replicates < 1:
        raise ValueError("replicates must be positive")
    if rng is None:
        rng = np.random.default_rng()
    level = len(series)
    totals = np.empty(replicates)
    totals[0] = series.total
    for r in range(1, replicates):
        totals[r] = sample_unfixed_jumps(level, params, u, rng).total
    k = np.arange(1, num_moments + 1, dtype=float)
    empirical = np.mean(totals[:, None] ** k[None, :], axis=0)
    exact = _moments_from_cumulants(_cumulants(num_moments, params, u))
    return float(np.max(np.abs(empirical - exact) / exact))


_LEVEL_CACHE: dict[tuple, TruncationLevel] = {}
_LEVEL_CACHE_LOCK = threading.Lock()
_BUCKET_RATIO = math.log(1.25)


def truncation_search(
    policy: TruncationPolicy, params: NggParams, u: float
) -> TruncationLevel:
    """Smallest jump count whose moment-match index meets the policy budget.

    Doubling followed by integer bisection on `truncation_moment_index`.
    Results are memoized per (params, policy, u-bucket) with u discretized
    into logarithmic buckets of ratio 1.25, evaluated conservatively at the
    bucket's upper edge.  An unattainable budget returns ``max_jumps`` with
    ``reached=False`` and a warning.
    """
    beta = params.kappa + u
    if beta <= 0:
        raise ValueError("truncation search requires kappa + u > 0")
    bucket = math.ceil(math.log(beta) / _BUCKET_RATIO)
    key = (
        params.alpha,
        params.kappa,
        params.gamma,
        policy.target_index,
        policy.num_moments,
        policy.max_jumps,
        policy.min_jumps,
        bucket,
    )
    with _LEVEL_CACHE_LOCK:
        hit = _LEVEL_CACHE.get(key)
    if hit is not None:
        return hit

    u_eval = math.exp(bucket * _BUCKET_RATIO) - params.kappa
    u_eval = max(u_eval, u)  # never evaluate below the actual tilt

    def index(q: int) -> float:
        return truncation_moment_index(q, params, u_eval, policy.num_moments)

    lo = policy.min_jumps
    if index(lo) <= policy.target_index:
        result = TruncationLevel(lo, True, index(lo))
    else:
        hi = lo
        while hi < policy.max_jumps:
            hi = min(2 * hi, policy.max_jumps)
            if index(hi) <= policy.target_index:
                break
        if index(hi) > policy.target_index:
            warnings.warn(
                f"truncation budget {policy.target_index} unreachable within "
                f"{policy.max_jumps} jumps (index {index(hi):.4g}); using the cap",
                RuntimeWarning,
                stacklevel=2,
            )
            result = TruncationLevel(policy.max_jumps, False, index(hi))
        else:
            # Invariant: index(lo) > target >= index(hi).
            low, high = hi // 2, hi
            while high - low > 1:
                mid = (low + high) // 2
                if index(mid) <= policy.target_index:
                    high = mid
                else:
                    low = mid
            result = TruncationLevel(high, True, index(high))

    with _LEVEL_CACHE_LOCK:
        _LEVEL_CACHE[key] = result
    return result


def truncation_level_for(
    policy: TruncationPolicy, params: NggParams, u: float
) -> int:
    """Jump count to use for the unfixed part at tilt ``u`` (memoized)."""
    return truncation_search(policy, params, u).level
