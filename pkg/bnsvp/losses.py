"""Multiple-instance ranking losses over segment scores.

All three hinge losses share one shape, [1 - positive term + max(neg)]_+,
and differ only in how the positive term is pooled from the positive bag:
its maximum, the mean of its k highest scores, or the mean over a
representative set.
"""

import logging
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ArgumentError, DegenerateSelectionError
from .submodular import RepresentativeSet

logger = logging.getLogger(__name__)

MARGIN = 1.0


def _scores(values: ArrayLike, name: str) -> NDArray[np.float64]:
    scores = np.asarray(values, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise ArgumentError(f"{name} scores must be nonempty")
    return scores


def _hinge(positive_term: float, negative_max: float) -> float:
    return max(0.0, MARGIN - positive_term + negative_max)


def topk_indices(pos_scores: ArrayLike, k: int) -> NDArray[np.int64]:
    """Indices of the k highest scores, lowest index first among ties."""
    scores = _scores(pos_scores, "Positive")
    if not 1 <= k <= scores.size:
        raise ArgumentError(f"k must lie in [1, {scores.size}], got {k}")
    return np.argsort(-scores, kind="stable")[:k]


def mean_over(scores: NDArray[np.float64], indices: Union[Sequence[int], NDArray[np.int64]]) -> float:
    """Mean of the selected scores, accumulated in the order given."""
    total = 0.0
    for index in indices:
        total += float(scores[index])
    return total / len(indices)


def max_mil_loss(pos_scores: ArrayLike, neg_scores: ArrayLike) -> float:
    """[1 - max(pos) + max(neg)]_+."""
    positive = _scores(pos_scores, "Positive")
    negative = _scores(neg_scores, "Negative")
    return _hinge(float(positive.max()), float(negative.max()))


def topk_mil_loss(pos_scores: ArrayLike, neg_scores: ArrayLike, k: int) -> float:
    """[1 - mean of the k highest positive scores + max(neg)]_+.

    With k = 1 this reduces exactly to ``max_mil_loss``.
    """
    positive = _scores(pos_scores, "Positive")
    negative = _scores(neg_scores, "Negative")
    return _hinge(mean_over(positive, topk_indices(positive, k)), float(negative.max()))


def representative_mil_loss(pos_scores: ArrayLike, rep_set: RepresentativeSet, neg_scores: ArrayLike) -> float:
    """[1 - mean of the representative scores + max(neg)]_+.

    Raises:
        DegenerateSelectionError: If the representative set is empty
        ArgumentError: If an index falls outside the positive bag
    """
    positive = _scores(pos_scores, "Positive")
    negative = _scores(neg_scores, "Negative")
    if len(rep_set.indices) == 0:
        raise DegenerateSelectionError(
            "Representative set is empty; lower the epsilon percentile so at least one component qualifies"
        )
    for index in rep_set.indices:
        if not 0 <= index < positive.size:
            raise ArgumentError(f"Representative index {index} out of range for {positive.size} segments")
    return _hinge(mean_over(positive, rep_set.indices), float(negative.max()))


def smoothness_penalty(scores: ArrayLike) -> float:
    """Temporal smoothness sum_i (f_{i+1} - f_i)^2."""
    values = np.asarray(scores, dtype=np.float64).reshape(-1)
    return float(np.sum(np.diff(values) ** 2))


def sparsity_penalty(scores: ArrayLike) -> float:
    """Sparsity sum_i f_i."""
    return float(np.sum(np.asarray(scores, dtype=np.float64)))
