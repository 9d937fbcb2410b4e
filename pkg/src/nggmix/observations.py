"""Observation container covering exact and censored data points."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Observation", "ObservationKind", "prepare_observations", "PreparedData"]

# Kind codes shared with the vectorized likelihood paths.
EXACT, LEFT_CENSORED, RIGHT_CENSORED, INTERVAL = 0, 1, 2, 3

ObservationKind = str  # "exact" | "left_censored" | "right_censored" | "interval"

_KIND_CODES = {
    "exact": EXACT,
    "left_censored": LEFT_CENSORED,
    "right_censored": RIGHT_CENSORED,
    "interval": INTERVAL,
}


@dataclass(frozen=True)
class Observation:
    """One data point: an exact value or a censoring interval.

    left/right are the known bounds on the latent value: a left-censored
    point only carries ``right`` (the value is at most that), a
    right-censored point only carries ``left``, and an interval-censored
    point carries both with ``left < right``.  Exact points carry ``value``.
    """

    kind: ObservationKind
    value: float | None = None
    left: float | None = None
    right: float | None = None

    def __post_init__(self) -> None:
        k = self.kind
        if k not in _KIND_CODES:
            raise ValueError(f"unknown observation kind {k!r}")
        if k == "exact":
            if self.value is None or not math.isfinite(self.value):
                raise ValueError("exact observation needs a finite value")
            if self.left is not None or self.right is not None:
                raise ValueError("exact observation must not carry bounds")
        elif k == "left_censored":
            if self.right is None or not math.isfinite(self.right):
                raise ValueError("left-censored observation needs a finite right bound")
            if self.left is not None or self.value is not None:
                raise ValueError("left-censored observation carries only a right bound")
        elif k == "right_censored":
            if self.left is None or not math.isfinite(self.left):
                raise ValueError("right-censored observation needs a finite left bound")
            if self.right is not None or self.value is not None:
                raise ValueError("right-censored observation carries only a left bound")
        else:  # interval
            if self.left is None or self.right is None:
                raise ValueError("interval observation needs both bounds")
            if not (math.isfinite(self.left) and math.isfinite(self.right)):
                raise ValueError("interval bounds must be finite")
            if not self.left < self.right:
                raise ValueError(
                    f"interval needs left < right, got [{self.left}, {self.right}]"
                )
            if self.value is not None:
                raise ValueError("interval observation must not carry a value")

    @staticmethod
    def exact(value: float) -> "Observation":
        return Observation("exact", value=value)

    @staticmethod
    def from_bounds(left: float | None, right: float | None) -> "Observation":
        """Observation from a (left, right) bound pair.

        Both equal -> exact; only left -> right-censored; only right ->
        left-censored; both with left < right -> interval.
        """
        if left is None and right is None:
            raise ValueError("at least one bound is required")
        if left is not None and right is not None:
            if left == right:
                return Observation("exact", value=left)
            return Observation("interval", left=left, right=right)
        if left is not None:
            return Observation("right_censored", left=left)
        return Observation("left_censored", right=right)

    @property
    def midpoint(self) -> float:
        """Location summary used for initialization and plot placement."""
        if self.kind == "exact":
            return float(self.value)
        if self.kind == "interval":
            return 0.5 * (self.left + self.right)
        if self.kind == "left_censored":
            return float(self.right)
        return float(self.left)

    def bounds(self) -> tuple[float, float]:
        """Bounds as floats with infinities filled in for open sides."""
        if self.kind == "exact":
            return float(self.value), float(self.value)
        lo = -math.inf if self.left is None else float(self.left)
        hi = math.inf if self.right is None else float(self.right)
        return lo, hi


@dataclass(frozen=True)
class PreparedData:
    """Array view of an observation list for the vectorized likelihoods."""

    kinds: np.ndarray  # int codes
    values: np.ndarray  # exact values, nan elsewhere
    lower: np.ndarray  # left bound or -inf
    upper: np.ndarray  # right bound or +inf
    midpoints: np.ndarray

    def __len__(self) -> int:
        return int(self.kinds.size)

    @property
    def exact_mask(self) -> np.ndarray:
        return self.kinds == EXACT

    @property
    def has_censoring(self) -> bool:
        return bool(np.any(self.kinds != EXACT))


def prepare_observations(observations: list[Observation]) -> PreparedData:
    n = len(observations)
    if n == 0:
        raise ValueError("empty dataset")
    kinds = np.empty(n, dtype=np.int64)
    values = np.full(n, np.nan)
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    mids = np.empty(n)
    for i, obs in enumerate(observations):
        kinds[i] = _KIND_CODES[obs.kind]
        lo, hi = obs.bounds()
        lower[i] = lo
        upper[i] = hi
        if obs.kind == "exact":
            values[i] = obs.value
        mids[i] = obs.midpoint
    return PreparedData(kinds=kinds, values=values, lower=lower, upper=upper, midpoints=mids)
