"""Partition-induced facility location and representative selection.

Two segments are similar only when they share a scene and a sub-scene; the
similarity is then the bilinear form x_i^T Sigma^-1 x_j of their component,
clamped at zero. The facility-location function F(C) = sum_i max_{j in C} S_ij
built on it is monotone submodular, and one segment per occupied component
is the structure of its constrained maximizers. Representatives are the
highest-scoring segment of every component whose score clears a percentile
threshold.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import cho_solve

from .errors import ArgumentError
from .partition import ComponentKey, GaussianComponent, cholesky_with_jitter

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 20
DEFAULT_EPSILON_PERCENTILE = 35.0


class Assignment(Protocol):
    """Anything carrying per-segment scene and component ids."""

    z: NDArray[np.int64]
    s: NDArray[np.int64]


class Partition(Assignment, Protocol):
    emissions: dict[ComponentKey, GaussianComponent]


@dataclass(frozen=True, eq=False)
class SimilarityBlock:
    """Similarities among the members of one (scene, component) pair."""

    key: ComponentKey
    indices: NDArray[np.int64]
    values: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Dense n x n partition-induced similarity."""

    values: NDArray[np.float64]

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class ComponentWinner:
    """Highest-scoring segment of one component."""

    scene: int
    component: int
    index: int
    score: float


@dataclass(frozen=True)
class RepresentativeSet:
    """Selected segments of a positive bag.

    Attributes:
        indices: Selected segment indices, ascending
        winners: Best segment of every occupied component, kept or not
        epsilon_threshold: Score threshold applied to the winners
    """

    indices: tuple[int, ...]
    winners: tuple[ComponentWinner, ...] = field(default=())
    epsilon_threshold: float = 0.0

    @property
    def per_component_winner(self) -> dict[ComponentKey, tuple[int, float]]:
        return {(w.scene, w.component): (w.index, w.score) for w in self.winners}

    def __len__(self) -> int:
        return len(self.indices)

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon_threshold,
            "indices": list(self.indices),
            "winners": [
                {"scene": w.scene, "component": w.component, "index": w.index, "score": w.score}
                for w in self.winners
            ],
        }


def _component_members(assignment: Assignment) -> dict[ComponentKey, NDArray[np.int64]]:
    z = np.asarray(assignment.z)
    s = np.asarray(assignment.s)
    if z.shape != s.shape:
        raise ArgumentError(f"Scene and component vectors differ in length: {z.shape} vs {s.shape}")
    keys = sorted({(int(k), int(t)) for k, t in zip(z, s)})
    return {key: np.flatnonzero((z == key[0]) & (s == key[1])) for key in keys}


def similarity_blocks(
    features: ArrayLike, partition: Partition, emissions: Optional[dict[ComponentKey, GaussianComponent]] = None
) -> list[SimilarityBlock]:
    """Within-component similarity blocks, one per occupied component.

    Only these blocks are ever nonzero, so evaluating F on them costs time
    linear in the number of segments for a bounded component size.

    Args:
        features: n x M features (raw or learned representation)
        partition: Scene/component ids per segment with their emissions
        emissions: Atoms overriding ``partition.emissions``

    Raises:
        ArgumentError: If an occupied pair has no emission
        NumericError: If a covariance stays singular after jitter
    """
    data = np.asarray(features, dtype=np.float64)
    n = np.asarray(partition.z).shape[0]
    if data.ndim != 2 or data.shape[0] != n:
        raise ArgumentError(f"Partition covers {n} segments, features have shape {data.shape}")
    emissions = partition.emissions if emissions is None else emissions
    blocks = []
    for key, members in _component_members(partition).items():
        if key not in emissions:
            raise ArgumentError(f"No emission for occupied scene {key[0]} component {key[1]}")
        chol = cholesky_with_jitter(emissions[key].sigma, key)
        rows = data[members]
        if chol.shape[0] != rows.shape[1]:
            raise ArgumentError(f"Emission of {key} has dimension {chol.shape[0]}, features have {rows.shape[1]}")
        bilinear = rows @ cho_solve((chol, True), rows.T)
        bilinear = 0.5 * (bilinear + bilinear.T)
        blocks.append(SimilarityBlock(key=key, indices=members, values=np.maximum(bilinear, 0.0)))
    return blocks


def build_similarity(
    features: ArrayLike, partition: Partition, emissions: Optional[dict[ComponentKey, GaussianComponent]] = None
) -> SimilarityMatrix:
    """Assemble the dense similarity S_ij = max(0, x_i^T Sigma^-1 x_j) within components, 0 across."""
    n = np.asarray(features).shape[0]
    values = np.zeros((n, n))
    for block in similarity_blocks(features, partition, emissions):
        values[np.ix_(block.indices, block.indices)] = block.values
    return SimilarityMatrix(values=values)


def _as_values(similarity: "SimilarityMatrix | ArrayLike") -> NDArray[np.float64]:
    if isinstance(similarity, SimilarityMatrix):
        return similarity.values
    values = np.asarray(similarity, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ArgumentError(f"Similarity must be a square matrix, got shape {values.shape}")
    return values


def _as_indices(subset: Iterable[int], n: int) -> list[int]:
    indices = sorted({int(i) for i in subset})
    for index in indices:
        if not 0 <= index < n:
            raise ArgumentError(f"Index {index} out of range for {n} segments")
    return indices


def facility_location_value(similarity: "SimilarityMatrix | ArrayLike", subset: Iterable[int]) -> float:
    """F(C) = sum_i max_{j in C} S_ij, with F(empty) = 0."""
    values = _as_values(similarity)
    indices = _as_indices(subset, values.shape[0])
    if not indices:
        return 0.0
    return float(values[:, indices].max(axis=1).sum())


def blockwise_facility_value(blocks: Iterable[SimilarityBlock], subset: Iterable[int]) -> float:
    """F(C) evaluated on component blocks without materializing the dense matrix."""
    chosen = {int(i) for i in subset}
    total = 0.0
    for block in blocks:
        local = [position for position, index in enumerate(block.indices) if int(index) in chosen]
        if local:
            total += float(block.values[:, local].max(axis=1).sum())
    return total


def marginal_gain(similarity: "SimilarityMatrix | ArrayLike", subset: Iterable[int], j: int) -> float:
    """F(C + {j}) - F(C).

    Raises:
        ArgumentError: If j is already in C or out of range
    """
    values = _as_values(similarity)
    indices = _as_indices(subset, values.shape[0])
    _as_indices([j], values.shape[0])
    if j in indices:
        raise ArgumentError(f"Segment {j} is already in the set")
    if not indices:
        return float(values[:, j].sum())
    current = values[:, indices].max(axis=1)
    return float(np.maximum(values[:, j] - current, 0.0).sum())


def greedy_facility_location(similarity: "SimilarityMatrix | ArrayLike", budget: int) -> tuple[list[int], float]:
    """Plain marginal-gain greedy under a cardinality budget.

    Ties go to the lowest index; the loop stops early once no candidate has
    a positive gain.

    Returns:
        Selected indices in pick order and F of the selection
    """
    values = _as_values(similarity)
    n = values.shape[0]
    if budget < 0:
        raise ArgumentError(f"budget must be nonnegative, got {budget}")
    selected: list[int] = []
    current = np.zeros(n)
    for _ in range(min(budget, n)):
        gains = np.maximum(values - current[:, np.newaxis], 0.0).sum(axis=0)
        gains[selected] = -np.inf
        best = int(np.argmax(gains))
        if gains[best] <= 0.0:
            break
        selected.append(best)
        current = np.maximum(current, values[:, best])
    return selected, float(current.sum())


def score_threshold(scores: ArrayLike, percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest score (at least the first)."""
    values = np.sort(np.asarray(scores, dtype=np.float64))
    if values.size == 0:
        raise ArgumentError("Cannot take a percentile of an empty score vector")
    if not 0.0 <= percentile <= 100.0:
        raise ArgumentError(f"Percentile must lie in [0, 100], got {percentile}")
    rank = max(1, math.ceil(percentile / 100.0 * values.size))
    return float(values[rank - 1])


def greedy_representatives(
    partition: Assignment, scores: ArrayLike, epsilon_percentile: float = DEFAULT_EPSILON_PERCENTILE
) -> RepresentativeSet:
    """Pick the best-scoring segment of each component above the epsilon threshold.

    Args:
        partition: Scene/component ids of the positive bag
        scores: Current scorer outputs, one per segment
        epsilon_percentile: Percentile of the bag's scores used as threshold

    Returns:
        RepresentativeSet with at most one index per occupied component

    Raises:
        ArgumentError: If the partition is empty or sizes disagree
    """
    values = np.asarray(scores, dtype=np.float64)
    members = _component_members(partition)
    if not members:
        raise ArgumentError("Cannot select representatives from an empty partition")
    if values.shape != (np.asarray(partition.z).shape[0],):
        raise ArgumentError(f"Expected {np.asarray(partition.z).shape[0]} scores, got {values.shape}")

    epsilon = score_threshold(values, epsilon_percentile)
    winners = []
    for (scene, component), indices in members.items():
        # argmax returns the first maximum, i.e. the lowest segment index
        best = int(indices[np.argmax(values[indices])])
        winners.append(ComponentWinner(scene=scene, component=component, index=best, score=float(values[best])))

    kept = tuple(sorted(w.index for w in winners if w.score >= epsilon))
    logger.debug("Selected %d of %d component winners (epsilon=%.4f)", len(kept), len(winners), epsilon)
    return RepresentativeSet(indices=kept, winners=tuple(winners), epsilon_threshold=epsilon)


def brute_force_max(similarity: "SimilarityMatrix | ArrayLike", kappa_limit: int) -> tuple[tuple[int, ...], float]:
    """Exhaustive maximization of F over subsets of size <= kappa_limit.

    Ties are broken towards the lexicographically smallest subset.

    Raises:
        ArgumentError: If the bag has more than 20 segments
    """
    values = _as_values(similarity)
    n = values.shape[0]
    if n > BRUTE_FORCE_LIMIT:
        raise ArgumentError(f"Brute force is limited to {BRUTE_FORCE_LIMIT} segments, got {n}; use the greedy")
    if kappa_limit < 1:
        raise ArgumentError(f"kappa_limit must be positive, got {kappa_limit}")

    best_subset: tuple[int, ...] = ()
    best_value = 0.0
    for size in range(1, min(kappa_limit, n) + 1):
        for subset in itertools.combinations(range(n), size):
            value = float(values[:, subset].max(axis=1).sum())
            if value > best_value or (value == best_value and subset < best_subset):
                best_subset, best_value = subset, value
    return best_subset, best_value


def diversified_objective(
    mil_loss_value: float, similarity: "SimilarityMatrix | ArrayLike", subset: Iterable[int], lam: float
) -> float:
    """MIL loss minus lambda * F(C); diagnostic only."""
    if lam < 0:
        raise ArgumentError(f"lambda must be nonnegative, got {lam}")
    return mil_loss_value - lam * facility_location_value(similarity, subset)
