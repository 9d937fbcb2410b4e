"""Decision-theoretic summaries of the posterior over partitions.

A mixture trace carries one allocation vector per kept iteration.  The
posterior over partitions is summarized by the posterior similarity matrix
(pairwise co-clustering frequencies) and condensed into a single point
estimate by minimizing a posterior expected loss, either

* Binder loss, whose expectation under the similarity matrix is the exact
  pairwise identity ``sum_{i<j} |1[c_i = c_j] - p_ij|``, or
* variation of information (VI), measured in nats, whose expectation is
  replaced by the standard Jensen lower bound expressed through the
  similarity matrix (an exact but slow trace-averaged mode is available).

The minimizer runs a deterministic greedy search over single-point moves,
block merges and similarity-seeded block splits, starting from the best
partition visited by the chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Partition",
    "SimilarityMatrix",
    "canonicalize_labels",
    "posterior_similarity",
    "expected_binder_loss",
    "vi_distance",
    "vi_lower_bound",
    "expected_vi_loss",
    "minimize_loss",
    "cdf_overlay_table",
]

# Improvements smaller than this are treated as ties and rejected, so the
# greedy loop cannot cycle on floating-point noise.
_IMPROVEMENT_TOL = 1e-12


def canonicalize_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel a partition to 1..K in order of first appearance."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError("labels must be a nonempty one-dimensional array")
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.empty(first.size, dtype=np.int64)
    order[np.argsort(first, kind="stable")] = np.arange(1, first.size + 1)
    return order[inverse]


@dataclass(frozen=True)
class Partition:
    """A partition of n observations with canonical labels 1..K."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if not np.array_equal(labels, canonicalize_labels(labels)):
            raise ValueError("labels must be canonical (1..K, first-occurrence order)")

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "Partition":
        return cls(canonicalize_labels(labels))

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def num_clusters(self) -> int:
        return int(self.labels.max())

    @property
    def block_sizes(self) -> np.ndarray:
        return np.bincount(self.labels)[1:]


@dataclass(frozen=True)
class SimilarityMatrix:
    """Posterior co-clustering probabilities p_ij."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", p)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] == 0:
            raise ValueError("similarity matrix must be square and nonempty")
        if not np.allclose(p, p.T, atol=1e-12, rtol=0):
            raise ValueError("similarity matrix must be symmetric")
        if not np.allclose(np.diag(p), 1.0, atol=1e-12, rtol=0):
            raise ValueError("similarity matrix must have a unit diagonal")
        if p.min() < -1e-12 or p.max() > 1 + 1e-12:
            raise ValueError("co-clustering probabilities must lie in [0, 1]")

    def __len__(self) -> int:
        return int(self.probabilities.shape[0])


def _as_allocation_matrix(allocations: np.ndarray) -> np.ndarray:
    allocations = np.asarray(allocations)
    if allocations.ndim != 2 or allocations.shape[0] == 0 or allocations.shape[1] == 0:
        raise ValueError("allocations must be a nonempty (iterations, n) matrix")
    return allocations


def posterior_similarity(allocations: np.ndarray) -> SimilarityMatrix:
    """Fraction of kept iterations in which each pair shares a cluster.

    ``allocations`` holds one label vector per row; labels need not be
    canonical, only equality within a row matters.
    """
    allocations = _as_allocation_matrix(allocations)
    iterations, n = allocations.shape
    counts = np.zeros((n, n))
    # block over iterations to bound the boolean workspace
    for start in range(0, iterations, 256):
        chunk = allocations[start : start + 256]
        counts += (chunk[:, :, None] == chunk[:, None, :]).sum(axis=0)
    return SimilarityMatrix(counts / iterations)


def expected_binder_loss(partition: Partition, psm: SimilarityMatrix) -> float:
    """Posterior expected Binder loss of a candidate partition.

    The expectation over the posterior collapses to the exact pairwise form
    ``sum_{i<j} |1[c_i = c_j] - p_ij|``.
    """
    labels = partition.labels
    p = psm.probabilities
    if labels.size != p.shape[0]:
        raise ValueError("partition size does not match similarity matrix")
    same = labels[:, None] == labels[None, :]
    dev = np.abs(same - p)
    return float(np.triu(dev, k=1).sum())


def _log_block_counts(labels: np.ndarray) -> np.ndarray:
    """log of the size of each observation's own block."""
    return np.log(np.bincount(labels)[labels])


def vi_distance(first: Partition, second: Partition) -> float:
    """Variation of information between two partitions, in nats.

    Sum of the two Shannon entropies minus twice the mutual information,
    evaluated pointwise so that identical partitions give exactly zero.
    """
    a, b = first.labels, second.labels
    if a.size != b.size:
        raise ValueError("partitions must cover the same observations")
    joint = a * (b.max() + 1) + b
    log_joint = np.log(np.bincount(joint)[joint])
    terms = _log_block_counts(a) + _log_block_counts(b) - 2.0 * log_joint
    return float(terms.mean())


def vi_lower_bound(partition: Partition, psm: SimilarityMatrix) -> float:
    """Jensen lower bound of the posterior expected VI, from the PSM.

    Moving the expectation inside the logarithms replaces the trace average
    by similarity-matrix row sums; the bound is the standard surrogate for
    greedy VI minimization.
    """
    labels = partition.labels
    p = psm.probabilities
    if labels.size != p.shape[0]:
        raise ValueError("partition size does not match similarity matrix")
    same = labels[:, None] == labels[None, :]
    own = same.sum(axis=1)  # block size of each point, includes itself
    row = p.sum(axis=1)  # >= 1 through the unit diagonal
    cross = (same * p).sum(axis=1)  # >= 1 likewise
    return float(np.mean(np.log(own) + np.log(row) - 2.0 * np.log(cross)))


def expected_vi_loss(partition: Partition, allocations: np.ndarray) -> float:
    """Exact posterior expected VI: the average distance to trace partitions."""
    allocations = _as_allocation_matrix(allocations)
    return float(
        np.mean(
            [
                vi_distance(partition, Partition.from_labels(row))
                for row in allocations
            ]
        )
    )


# ---------------------------------------------------------------------------
# Greedy minimization
# ---------------------------------------------------------------------------


def _score_function(loss: str, exact: bool, psm, allocations):
    if loss == "binder":
        return lambda part: expected_binder_loss(part, psm)
    if loss == "vi":
        if exact:
            return lambda part: expected_vi_loss(part, allocations)
        return lambda part: vi_lower_bound(part, psm)
    raise ValueError(f"unknown loss {loss!r}; expected 'binder' or 'vi'")


def _distinct_trace_partitions(allocations: np.ndarray) -> list[np.ndarray]:
    seen: dict[bytes, np.ndarray] = {}
    for row in allocations:
        canon = canonicalize_labels(row)
        seen.setdefault(canon.tobytes(), canon)
    return list(seen.values())


def _move_candidates(labels: np.ndarray) -> list[np.ndarray]:
    """All single-point reassignments, including moves to a fresh block."""
    k = labels.max()
    sizes = np.bincount(labels, minlength=k + 1)
    out = []
    for i in range(labels.size):
        current = labels[i]
        targets = [lab for lab in range(1, k + 1) if lab != current]
        if sizes[current] > 1:
            targets.append(k + 1)  # split i off into a new block
        for target in targets:
            cand = labels.copy()
            cand[i] = target
            out.append(cand)
    return out


def _merge_candidates(labels: np.ndarray) -> list[np.ndarray]:
    k = labels.max()
    out = []
    for a in range(1, k + 1):
        for b in range(a + 1, k + 1):
            cand = labels.copy()
            cand[cand == b] = a
            out.append(cand)
    return out


def _split_candidates(labels: np.ndarray, p: np.ndarray) -> list[np.ndarray]:
    """One similarity-seeded split per block of two or more points.

    The least-similar pair inside a block seeds two halves; every other
    member joins the seed it is more similar to.
    """
    out = []
    for lab in range(1, labels.max() + 1):
        members = np.flatnonzero(labels == lab)
        if members.size < 2:
            continue
        sub = p[np.ix_(members, members)].copy()
        np.fill_diagonal(sub, np.inf)
        i, j = np.unravel_index(np.argmin(sub), sub.shape)
        seed_a, seed_b = members[i], members[j]
        cand = labels.copy()
        to_b = members[p[members, seed_b] > p[members, seed_a]]
        cand[to_b] = labels.max() + 1
        cand[seed_b] = labels.max() + 1
        out.append(cand)
    return out


def minimize_loss(
    allocations: np.ndarray,
    loss: str = "vi",
    exact: bool = False,
    max_iterations: int = 500,
) -> Partition:
    """Greedy search for the partition minimizing the posterior expected loss.

    Starts from the best distinct partition visited by the chain, then
    repeatedly applies the best improving candidate among all single-point
    moves, all pairwise block merges and one similarity-seeded split per
    block, stopping when no candidate improves the score or after
    ``max_iterations`` accepted moves.  Ties are broken by scan order, so the
    result is deterministic given the trace.  With ``exact=True`` the VI
    score is the trace-averaged distance instead of the similarity-matrix
    lower bound (slow; every candidate evaluation touches every iteration).
    """
    allocations = _as_allocation_matrix(allocations)
    psm = posterior_similarity(allocations)
    score = _score_function(loss, exact, psm, allocations)

    best_labels: np.ndarray | None = None
    best_score = np.inf
    for cand in _distinct_trace_partitions(allocations):
        value = score(Partition(cand))
        if value < best_score - _IMPROVEMENT_TOL:
            best_labels, best_score = cand, value

    assert best_labels is not None
    p = psm.probabilities
    for _ in range(max_iterations):
        candidates = (
            _move_candidates(best_labels)
            + _merge_candidates(best_labels)
            + _split_candidates(best_labels, p)
        )
        improved = False
        for cand in candidates:
            canon = canonicalize_labels(cand)
            value = score(Partition(canon))
            if value < best_score - _IMPROVEMENT_TOL:
                best_labels, best_score, improved = canon, value, True
        if not improved:
            break
    return Partition(best_labels)


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def cdf_overlay_table(locations: np.ndarray, partition: Partition) -> np.ndarray:
    """Rows (value, empirical CDF ordinate, cluster label) sorted by value.

    ``locations`` holds one plotting position per observation (the value
    itself when exact, an interval midpoint or the finite bound when
    censored), so the overlay displays the estimated clustering on top of
    the empirical distribution function.
    """
    locations = np.asarray(locations, dtype=float)
    if locations.ndim != 1 or locations.size != len(partition):
        raise ValueError("locations must align with the partition")
    if not np.all(np.isfinite(locations)):
        raise ValueError("plotting locations must be finite")
    order = np.argsort(locations, kind="stable")
    n = locations.size
    return np.column_stack(
        [
            locations[order],
            np.arange(1, n + 1) / n,
            partition.labels[order].astype(float),
        ]
    )
