"""Prior laws of the number of occupied clusters.

A sample of size ``n`` from an infinite mixture occupies a random number of
clusters ``K_n`` even before any data are seen, and the distribution of
``K_n`` is the natural handle for choosing process parameters.  Closed forms
are available at the two corners of the generalized gamma family:

* Dirichlet process with concentration ``alpha``:

      P(K_n = k) = |s(n, k)| * alpha**k / rising(alpha, n),

  where ``|s(n, k)|`` are unsigned Stirling numbers of the first kind and
  ``rising(alpha, n) = alpha (alpha+1) ... (alpha+n-1)``.  The expectation
  collapses to ``sum_i alpha / (alpha + i - 1)``.

* Normalized stable process with index ``gamma``:

      P(K_n = k) = (k-1)! * C(n, k; gamma) / (gamma * (n-1)!),

  where the generalized factorial coefficients obey the triangular recursion
  ``C(n, k; g) = g C(n-1, k-1; g) + (n - 1 - k g) C(n-1, k; g)``.

Both triangles blow through every fixed-width number type long before
``n = 100`` (``|s(100, 50)|`` has more than 100 digits), so the Stirling
recursion runs on exact integers and the stable recursion on
multiple-precision floats.  All terms in both recursions are nonnegative,
hence no cancellation and the final rounding to double is benign.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

__all__ = [
    "ClusterCountPrior",
    "dirichlet_expected_clusters",
    "dirichlet_cluster_pmf",
    "stable_expected_clusters",
    "stable_cluster_pmf",
    "cluster_count_table",
]

# Largest sample size for which the full PMF triangles are computed.  The
# expectation formulas have no such cap.
MAX_PMF_SAMPLE_SIZE = 500

_MP_DPS = 50  # working precision of the stable triangle


@dataclass(frozen=True)
class ClusterCountPrior:
    """Prior distribution of the number of clusters among ``n`` draws."""

    n: int
    pmf: np.ndarray  # P(K_n = k) for k = 1..n
    expectation: float

    def __post_init__(self) -> None:
        pmf = np.asarray(self.pmf, dtype=float)
        object.__setattr__(self, "pmf", pmf)
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if pmf.shape != (self.n,):
            raise ValueError("pmf must have one entry per k = 1..n")
        if np.any(pmf < 0):
            raise ValueError("pmf entries must be nonnegative")
        if abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError("pmf must sum to one")
        if abs(self.expectation - (np.arange(1, self.n + 1) * pmf).sum()) > 1e-9:
            raise ValueError("expectation inconsistent with pmf")


def _validate_n(n: int, cap: int | None) -> int:
    if n != int(n) or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    if cap is not None and n > cap:
        raise ValueError(f"n = {n} exceeds the supported maximum {cap}")
    return n


# ---------------------------------------------------------------------------
# Dirichlet process
# ---------------------------------------------------------------------------

# _STIRLING_ROWS[n][k] = |s(n, k)|, grown on demand under the lock.
_STIRLING_ROWS: list[list[int]] = [[1]]
_STIRLING_LOCK = threading.Lock()


def _stirling_row(n: int) -> list[int]:
    """Unsigned Stirling numbers of the first kind, row ``n`` (k = 0..n)."""
    with _STIRLING_LOCK:
        while len(_STIRLING_ROWS) <= n:
            m = len(_STIRLING_ROWS)
            prev = _STIRLING_ROWS[-1]
            row = [0] * (m + 1)
            for k in range(1, m + 1):
                above = prev[k] if k < m else 0
                row[k] = prev[k - 1] + (m - 1) * above
            _STIRLING_ROWS.append(row)
        return _STIRLING_ROWS[n]


def dirichlet_expected_clusters(n: int, alpha: float) -> float:
    """Prior mean number of clusters among ``n`` draws from a DP(alpha).

    Evaluates ``sum_{i=1}^{n} alpha / (alpha + i - 1)`` in exact rational
    arithmetic before the final rounding.  Grows like ``alpha * log(n)``.
    """
    n = _validate_n(n, cap=None)
    if not (alpha > 0) or not math.isfinite(alpha):
        raise ValueError("alpha must be positive and finite")
    a = Fraction(alpha)
    return float(sum(a / (a + i) for i in range(n)))


def _dirichlet_pmf_exact(n: int, alpha: Fraction) -> list[Fraction]:
    """P(K_n = k) for k = 1..n as exact rationals."""
    row = _stirling_row(n)
    rising = math.prod((alpha + i for i in range(n)), start=Fraction(1))
    return [row[k] * alpha**k / rising for k in range(1, n + 1)]


def dirichlet_cluster_pmf(n: int, alpha: float) -> ClusterCountPrior:
    """Exact prior PMF of the number of clusters under a DP(alpha)."""
    n = _validate_n(n, cap=MAX_PMF_SAMPLE_SIZE)
    if not (alpha > 0) or not math.isfinite(alpha):
        raise ValueError("alpha must be positive and finite")
    pmf = _dirichlet_pmf_exact(n, Fraction(alpha))
    mean = sum(k * p for k, p in zip(range(1, n + 1), pmf))
    return ClusterCountPrior(
        n=n,
        pmf=np.array([float(p) for p in pmf]),
        expectation=float(mean),
    )


# ---------------------------------------------------------------------------
# Normalized stable process
# ---------------------------------------------------------------------------

# The mpmath context is process-global, so all multiple-precision work is
# serialized behind one lock; completed rows are memoized per (n, gamma).
_GFC_LOCK = threading.Lock()
_GFC_CACHE: dict[tuple[int, float], list[mpmath.mpf]] = {}


def _gfc_row(n: int, gamma: float) -> list[mpmath.mpf]:
    """Generalized factorial coefficients C(n, k; gamma) for k = 0..n."""
    key = (n, gamma)
    cached = _GFC_CACHE.get(key)
    if cached is not None:
        return cached
    with mpmath.workdps(_MP_DPS):
        g = mpmath.mpf(gamma)
        row = [mpmath.mpf(1)]
        for m in range(1, n + 1):
            prev = row
            row = [mpmath.mpf(0)] * (m + 1)
            for k in range(1, m + 1):
                above = prev[k] if k < m else mpmath.mpf(0)
                row[k] = g * prev[k - 1] + (m - 1 - k * g) * above
    if len(_GFC_CACHE) >= 64:
        _GFC_CACHE.clear()
    _GFC_CACHE[key] = row
    return row


def stable_cluster_pmf(n: int, gamma: float) -> ClusterCountPrior:
    """Exact prior PMF of the number of clusters under a stable process."""
    n = _validate_n(n, cap=MAX_PMF_SAMPLE_SIZE)
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie strictly inside (0, 1)")
    with _GFC_LOCK:
        row = _gfc_row(n, gamma)
        with mpmath.workdps(_MP_DPS):
            norm = mpmath.mpf(gamma) * mpmath.factorial(n - 1)
            pmf = [mpmath.factorial(k - 1) * row[k] / norm for k in range(1, n + 1)]
            mean = mpmath.fsum(k * p for k, p in zip(range(1, n + 1), pmf))
    return ClusterCountPrior(
        n=n,
        pmf=np.array([float(p) for p in pmf]),
        expectation=float(mean),
    )


def stable_expected_clusters(n: int, gamma: float) -> float:
    """Prior mean number of clusters among ``n`` draws, stable process."""
    return stable_cluster_pmf(n, gamma).expectation


# ---------------------------------------------------------------------------
# Side-by-side table
# ---------------------------------------------------------------------------


def cluster_count_table(n: int, alpha: float, gamma: float) -> np.ndarray:
    """Side-by-side prior PMFs for plotting or CSV export.

    Returns an ``(n, 3)`` array whose rows are
    ``(k, P_dirichlet(K_n = k), P_stable(K_n = k))`` for ``k = 1..n``, with
    the Dirichlet column at concentration ``alpha`` and the stable column at
    index ``gamma``.
    """
    dirichlet = dirichlet_cluster_pmf(n, alpha)
    stable = stable_cluster_pmf(n, gamma)
    return np.column_stack(
        [np.arange(1, n + 1, dtype=float), dirichlet.pmf, stable.pmf]
    )
