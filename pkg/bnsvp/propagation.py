"""Graph propagation of segment features.

Two single-layer graph convolutions run side by side over a bag: one on an
RBF feature-similarity graph, one on a temporal-distance graph. Each computes
H = Â X W with the renormalized operator Â = D^-1/2 (A + I) D^-1/2, and the
two outputs are concatenated along the feature axis.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import pdist, squareform

from .errors import ArgumentError

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


class Branch(str, Enum):
    FEATURE_SIMILARITY = "feature_similarity"
    TEMPORAL = "temporal"


def rbf_adjacency(features: ArrayLike, lengthscale: float) -> FloatArray:
    """RBF adjacency A_ij = exp(-||x_i - x_j||^2 / (2 l^2)).

    Args:
        features: n x M matrix
        lengthscale: Kernel lengthscale l, positive

    Returns:
        Symmetric n x n matrix with unit diagonal
    """
    if not lengthscale > 0:
        raise ArgumentError(f"lengthscale must be positive, got {lengthscale}")
    data = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if data.shape[0] == 1:
        return np.ones((1, 1))
    squared = squareform(pdist(data, metric="sqeuclidean"))
    return np.exp(-squared / (2.0 * lengthscale**2))


def temporal_adjacency(n: int) -> FloatArray:
    """Toeplitz adjacency A_ij = exp(-|i - j|)."""
    if n < 1:
        raise ArgumentError(f"n must be positive, got {n}")
    positions = np.arange(n, dtype=np.float64)
    return np.exp(-np.abs(positions[:, np.newaxis] - positions[np.newaxis, :]))


def renormalized_laplacian(adjacency: ArrayLike) -> FloatArray:
    """Renormalization trick D^-1/2 (A + I) D^-1/2 with D the row sums of A + I."""
    matrix = np.asarray(adjacency, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ArgumentError(f"Adjacency must be square, got shape {matrix.shape}")
    if np.any(matrix < 0):
        raise ArgumentError("Adjacency must be nonnegative")
    augmented = matrix + np.eye(matrix.shape[0])
    inv_sqrt = 1.0 / np.sqrt(augmented.sum(axis=1))
    operator = inv_sqrt[:, np.newaxis] * augmented * inv_sqrt[np.newaxis, :]
    return 0.5 * (operator + operator.T)


def propagate(a_hat: ArrayLike, features: ArrayLike, weight: ArrayLike) -> FloatArray:
    """Linear propagation H = Â X W.

    Raises:
        ArgumentError: If the shapes do not conform
    """
    operator = np.asarray(a_hat, dtype=np.float64)
    data = np.asarray(features, dtype=np.float64)
    w = np.asarray(weight, dtype=np.float64)
    if operator.ndim != 2 or data.ndim != 2 or w.ndim != 2:
        raise ArgumentError("propagate expects 2-D Â, X and W")
    if operator.shape[1] != data.shape[0] or data.shape[1] != w.shape[0]:
        raise ArgumentError(f"Cannot propagate shapes Â{operator.shape} X{data.shape} W{w.shape}")
    return operator @ data @ w


def median_lengthscale(features: ArrayLike) -> float:
    """Median pairwise Euclidean distance, or 1.0 when it is zero or undefined."""
    data = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if data.shape[0] < 2:
        return 1.0
    median = float(np.median(pdist(data)))
    return median if median > 0 else 1.0


@dataclass(frozen=True, eq=False)
class PropagationLayer:
    """One graph-convolution branch.

    Attributes:
        weight: M x M' projection W
        branch: Which adjacency the layer propagates over
        lengthscale: RBF lengthscale; ``None`` picks the median heuristic per bag
    """

    weight: FloatArray
    branch: Branch
    lengthscale: Optional[float] = None

    def __post_init__(self) -> None:
        weight = np.array(self.weight, dtype=np.float64)
        if weight.ndim != 2:
            raise ArgumentError(f"Layer weight must be a matrix, got shape {weight.shape}")
        if not np.all(np.isfinite(weight)):
            raise ArgumentError("Layer weight must be finite")
        if self.lengthscale is not None and not self.lengthscale > 0:
            raise ArgumentError(f"lengthscale must be positive, got {self.lengthscale}")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "branch", Branch(self.branch))

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.weight.shape[1])

    def operator(self, features: ArrayLike) -> FloatArray:
        """Â for this branch on one bag."""
        data = np.asarray(features, dtype=np.float64)
        if self.branch is Branch.TEMPORAL:
            return renormalized_laplacian(temporal_adjacency(data.shape[0]))
        lengthscale = self.lengthscale if self.lengthscale is not None else median_lengthscale(data)
        return renormalized_laplacian(rbf_adjacency(data, lengthscale))

    def forward(self, features: ArrayLike) -> FloatArray:
        return propagate(self.operator(features), features, self.weight)

    def with_weight(self, weight: ArrayLike) -> "PropagationLayer":
        return PropagationLayer(weight=np.asarray(weight), branch=self.branch, lengthscale=self.lengthscale)

    def to_dict(self) -> dict[str, Any]:
        return {"branch": self.branch.value, "lengthscale": self.lengthscale, "weight": self.weight.tolist()}

    @classmethod
    def from_dict(cls, document: dict[str, Any]) -> "PropagationLayer":
        return cls(
            weight=np.asarray(document["weight"], dtype=np.float64),
            branch=Branch(document["branch"]),
            lengthscale=document.get("lengthscale"),
        )


@dataclass(frozen=True, eq=False)
class GraphPropagation:
    """Feature and temporal branches whose outputs are concatenated."""

    feature_layer: PropagationLayer
    temporal_layer: PropagationLayer

    def __post_init__(self) -> None:
        if self.feature_layer.branch is not Branch.FEATURE_SIMILARITY:
            raise ArgumentError("feature_layer must use the feature_similarity branch")
        if self.temporal_layer.branch is not Branch.TEMPORAL:
            raise ArgumentError("temporal_layer must use the temporal branch")
        if self.feature_layer.in_dim != self.temporal_layer.in_dim:
            raise ArgumentError(
                f"Branches disagree on input dimension: {self.feature_layer.in_dim} vs {self.temporal_layer.in_dim}"
            )

    @classmethod
    def identity(cls, dim: int, lengthscale: Optional[float] = None) -> "GraphPropagation":
        """Both branches with W = I, so the output has 2 * dim features."""
        return cls(
            feature_layer=PropagationLayer(np.eye(dim), Branch.FEATURE_SIMILARITY, lengthscale),
            temporal_layer=PropagationLayer(np.eye(dim), Branch.TEMPORAL),
        )

    @property
    def in_dim(self) -> int:
        return self.feature_layer.in_dim

    @property
    def out_dim(self) -> int:
        return self.feature_layer.out_dim + self.temporal_layer.out_dim

    def operators(self, features: ArrayLike) -> tuple[FloatArray, FloatArray]:
        return self.feature_layer.operator(features), self.temporal_layer.operator(features)

    def transform(self, features: ArrayLike) -> FloatArray:
        """Concatenate [Â_f X W_f, Â_t X W_t]."""
        data = np.asarray(features, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != self.in_dim:
            raise ArgumentError(f"Propagation expects {self.in_dim} input features, got shape {data.shape}")
        a_feature, a_temporal = self.operators(data)
        return np.hstack(
            [
                propagate(a_feature, data, self.feature_layer.weight),
                propagate(a_temporal, data, self.temporal_layer.weight),
            ]
        )

    def to_dict(self) -> dict[str, Any]:
        return {"feature": self.feature_layer.to_dict(), "temporal": self.temporal_layer.to_dict()}

    @classmethod
    def from_dict(cls, document: dict[str, Any]) -> "GraphPropagation":
        return cls(
            feature_layer=PropagationLayer.from_dict(document["feature"]),
            temporal_layer=PropagationLayer.from_dict(document["temporal"]),
        )
