"""Segment scorer and SGD training over positive/negative bag pairs.

The scorer is a logistic read-out on top of optional graph propagation:
f(x_i) = sigmoid(w . h_i + b). Gradients are derived by hand through the
sigmoid, the pooled hinge and the linear propagation, and can be checked
against central finite differences.

Example:
    model, log = train(load_dataset("train/manifest.json"), TrainConfig(loss_kind=LossKind.BNSVP))
    scores = score_bag(model, bag)
"""

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from .data import Bag, Dataset, PathLike
from .environment import derive_seed
from .errors import ArgumentError, DegenerateSelectionError, FormatError
from .losses import mean_over, smoothness_penalty, sparsity_penalty, topk_indices
from .partition import PartitionConfig, PartitionResult, run_gibbs_many
from .propagation import GraphPropagation
from .submodular import (
    DEFAULT_EPSILON_PERCENTILE,
    RepresentativeSet,
    SimilarityBlock,
    blockwise_facility_value,
    greedy_representatives,
    similarity_blocks,
)

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

LOGIT_CLIP = 36.0
INIT_WEIGHT_STD = 0.01
FD_STEP = 1e-5
FD_FLOOR = 1e-4
KINK_TOLERANCE = 1e-6

# sub-stream ids for derive_seed
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1
_PARTITION_STREAM = 2


class LossKind(str, Enum):
    MAX_MIL = "max"
    TOPK = "topk"
    BNSVP = "bnsvp"

    @classmethod
    def _missing_(cls, value: object) -> Optional["LossKind"]:
        if value == "max_mil":
            return cls.MAX_MIL
        return None


Selection = Union[None, int, RepresentativeSet]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``partition_refresh_every`` of None partitions positive bags once before
    the first epoch and never again.
    """

    loss_kind: LossKind = LossKind.BNSVP
    k: int = 1
    learning_rate: float = 0.001
    l2_coeff: float = 0.001
    epochs: int = 50
    partition_refresh_every: Optional[int] = None
    epsilon_percentile: float = DEFAULT_EPSILON_PERCENTILE
    partition_config: PartitionConfig = field(default_factory=PartitionConfig)
    seed: int = 0
    use_propagation: bool = True
    lengthscale: Optional[float] = None
    smoothness_coeff: float = 0.0
    sparsity_coeff: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        if self.k < 1:
            raise ArgumentError(f"k must be positive, got {self.k}")
        if not self.learning_rate > 0:
            raise ArgumentError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2_coeff < 0 or self.smoothness_coeff < 0 or self.sparsity_coeff < 0:
            raise ArgumentError("Regularization coefficients must be nonnegative")
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be positive, got {self.epochs}")
        if self.partition_refresh_every is not None and self.partition_refresh_every < 1:
            raise ArgumentError(f"partition_refresh_every must be positive, got {self.partition_refresh_every}")
        if not 0.0 <= self.epsilon_percentile <= 100.0:
            raise ArgumentError(f"epsilon_percentile must lie in [0, 100], got {self.epsilon_percentile}")
        if self.lengthscale is not None and not self.lengthscale > 0:
            raise ArgumentError(f"lengthscale must be positive, got {self.lengthscale}")
        if not 0 <= self.seed < 2**64:
            raise ArgumentError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict[str, Any]:
        values = asdict(replace(self, partition_config=PartitionConfig()))
        values["loss_kind"] = self.loss_kind.value
        values["partition_config"] = self.partition_config.to_dict()
        return values


@dataclass(frozen=True, eq=False)
class PreparedBag:
    """A bag's features with its weight-independent graph products Â X cached."""

    features: FloatArray
    feature_graph: Optional[FloatArray] = None
    temporal_graph: Optional[FloatArray] = None

    @property
    def n_segments(self) -> int:
        return int(self.features.shape[0])


BagLike = Union[Bag, PreparedBag, ArrayLike]


@dataclass(frozen=True, eq=False)
class ModelGradient:
    weight: FloatArray
    bias: float
    feature_weight: Optional[FloatArray] = None
    temporal_weight: Optional[FloatArray] = None

    def to_vector(self) -> FloatArray:
        parts = [self.weight.ravel(), np.array([self.bias])]
        if self.feature_weight is not None and self.temporal_weight is not None:
            parts += [self.feature_weight.ravel(), self.temporal_weight.ravel()]
        return np.concatenate(parts)


@dataclass(frozen=True, eq=False)
class ScorerModel:
    """Logistic segment scorer with optional graph propagation.

    Attributes:
        weight: Read-out vector w over the (propagated) feature dimension
        bias: Read-out bias b
        propagation: Feature and temporal graph branches, or None
    """

    weight: FloatArray
    bias: float = 0.0
    propagation: Optional[GraphPropagation] = None

    def __post_init__(self) -> None:
        weight = np.array(self.weight, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(weight)) or not np.isfinite(self.bias):
            raise ArgumentError("Model parameters must be finite")
        if self.propagation is not None and self.propagation.out_dim != weight.size:
            raise ArgumentError(
                f"Read-out has {weight.size} weights, propagation produces {self.propagation.out_dim} features"
            )
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", float(self.bias))

    @classmethod
    def initial(
        cls, dim: int, use_propagation: bool = True, seed: int = 0, lengthscale: Optional[float] = None
    ) -> "ScorerModel":
        """Identity propagation weights, w ~ N(0, 0.01^2), b = 0."""
        propagation = GraphPropagation.identity(dim, lengthscale) if use_propagation else None
        out_dim = propagation.out_dim if propagation is not None else dim
        rng = np.random.default_rng(derive_seed(seed, _INIT_STREAM))
        return cls(weight=rng.normal(0.0, INIT_WEIGHT_STD, size=out_dim), bias=0.0, propagation=propagation)

    @property
    def in_dim(self) -> int:
        return self.propagation.in_dim if self.propagation is not None else int(self.weight.size)

    def prepare(self, bag: BagLike) -> PreparedBag:
        if isinstance(bag, PreparedBag):
            return bag
        features = bag.features if isinstance(bag, Bag) else np.asarray(bag, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.in_dim:
            raise ArgumentError(f"Model expects {self.in_dim} features per segment, got shape {features.shape}")
        if self.propagation is None:
            return PreparedBag(features=features)
        a_feature, a_temporal = self.propagation.operators(features)
        return PreparedBag(features=features, feature_graph=a_feature @ features, temporal_graph=a_temporal @ features)

    def hidden(self, prepared: PreparedBag) -> FloatArray:
        if self.propagation is None:
            return prepared.features
        assert prepared.feature_graph is not None and prepared.temporal_graph is not None
        return np.hstack(
            [
                prepared.feature_graph @ self.propagation.feature_layer.weight,
                prepared.temporal_graph @ self.propagation.temporal_layer.weight,
            ]
        )

    def representation(self, prepared: PreparedBag) -> FloatArray:
        """Features the partitioner sees: raw X, or Â_f X W_f with propagation."""
        if self.propagation is None:
            return prepared.features
        assert prepared.feature_graph is not None
        return prepared.feature_graph @ self.propagation.feature_layer.weight

    def logits(self, prepared: PreparedBag) -> FloatArray:
        return self.hidden(prepared) @ self.weight + self.bias

    def scores(self, prepared: PreparedBag) -> FloatArray:
        return expit(np.clip(self.logits(prepared), -LOGIT_CLIP, LOGIT_CLIP))

    def to_vector(self) -> FloatArray:
        parts = [self.weight, np.array([self.bias])]
        if self.propagation is not None:
            parts += [self.propagation.feature_layer.weight.ravel(), self.propagation.temporal_layer.weight.ravel()]
        return np.concatenate(parts)

    def from_vector(self, vector: ArrayLike) -> "ScorerModel":
        """Model with the same structure and parameters taken from ``vector``."""
        values = np.asarray(vector, dtype=np.float64)
        if values.shape != (self.to_vector().size,):
            raise ArgumentError(f"Expected {self.to_vector().size} parameters, got {values.shape}")
        size = self.weight.size
        weight, bias, rest = values[:size], float(values[size]), values[size + 1 :]
        propagation = self.propagation
        if propagation is not None:
            feature_shape = propagation.feature_layer.weight.shape
            split = feature_shape[0] * feature_shape[1]
            propagation = GraphPropagation(
                feature_layer=propagation.feature_layer.with_weight(rest[:split].reshape(feature_shape)),
                temporal_layer=propagation.temporal_layer.with_weight(
                    rest[split:].reshape(propagation.temporal_layer.weight.shape)
                ),
            )
        return ScorerModel(weight=weight, bias=bias, propagation=propagation)

    def step(self, gradient: ModelGradient, learning_rate: float) -> "ScorerModel":
        return self.from_vector(self.to_vector() - learning_rate * gradient.to_vector())

    def to_dict(self) -> dict[str, Any]:
        return {
            "w": self.weight.tolist(),
            "b": self.bias,
            "propagation": None if self.propagation is None else self.propagation.to_dict(),
        }

    @classmethod
    def from_dict(cls, document: dict[str, Any]) -> "ScorerModel":
        propagation = document.get("propagation")
        return cls(
            weight=np.asarray(document["w"], dtype=np.float64),
            bias=float(document["b"]),
            propagation=None if propagation is None else GraphPropagation.from_dict(propagation),
        )

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: PathLike) -> "ScorerModel":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Model file not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise FormatError(f"Malformed model file {path}: {e}") from e

    def __repr__(self) -> str:
        return f"<ScorerModel dim={self.in_dim} propagation={self.propagation is not None}>"


def score_bag(model: ScorerModel, bag: BagLike) -> FloatArray:
    """Per-segment scores sigmoid(w . h_i + b), strictly inside (0, 1).

    Raises:
        ArgumentError: If the bag's feature dimension does not match the model
    """
    return model.scores(model.prepare(bag))


# ---------------------------------------------------------------------------
# Objective and gradient
# ---------------------------------------------------------------------------


def positive_selection(loss_kind: LossKind, pos_scores: FloatArray, selection: Selection) -> NDArray[np.int64]:
    """Positive-bag indices pooled by the loss, in summation order."""
    loss_kind = LossKind(loss_kind)
    if loss_kind is LossKind.MAX_MIL:
        return np.array([int(np.argmax(pos_scores))])
    if loss_kind is LossKind.TOPK:
        if not isinstance(selection, int) or isinstance(selection, bool):
            raise ArgumentError(f"top-k loss needs an integer k, got {selection!r}")
        return topk_indices(pos_scores, selection)
    if not isinstance(selection, RepresentativeSet):
        raise ArgumentError(f"bnsvp loss needs a RepresentativeSet, got {type(selection).__name__}")
    if len(selection.indices) == 0:
        raise DegenerateSelectionError(
            "Representative set is empty; lower the epsilon percentile so at least one component qualifies"
        )
    indices = np.asarray(selection.indices, dtype=np.int64)
    if indices.min() < 0 or indices.max() >= pos_scores.size:
        raise ArgumentError(f"Representative indices out of range for {pos_scores.size} segments")
    return indices


def _hinge_interior(pos_scores: FloatArray, neg_scores: FloatArray, chosen: NDArray[np.int64]) -> float:
    return 1.0 - mean_over(pos_scores, chosen) + float(neg_scores.max())


def _l2_norm(model: ScorerModel) -> float:
    total = float(model.weight @ model.weight)
    if model.propagation is not None:
        total += float(np.sum(model.propagation.feature_layer.weight**2))
        total += float(np.sum(model.propagation.temporal_layer.weight**2))
    return total


def loss_value(
    model: ScorerModel,
    pos_bag: BagLike,
    neg_bag: BagLike,
    loss_kind: LossKind,
    selection: Selection = None,
    l2_coeff: float = 0.0,
    smoothness_coeff: float = 0.0,
    sparsity_coeff: float = 0.0,
) -> float:
    """Full training objective for one positive/negative pair.

    The pooled hinge plus the optional smoothness and sparsity terms on the
    positive bag and l2 on w and both propagation weights.
    """
    pos, neg = model.prepare(pos_bag), model.prepare(neg_bag)
    pos_scores, neg_scores = model.scores(pos), model.scores(neg)
    chosen = positive_selection(loss_kind, pos_scores, selection)
    value = max(0.0, _hinge_interior(pos_scores, neg_scores, chosen))
    value += smoothness_coeff * smoothness_penalty(pos_scores) + sparsity_coeff * sparsity_penalty(pos_scores)
    return value + l2_coeff * _l2_norm(model)


def _sigmoid_slope(model: ScorerModel, prepared: PreparedBag) -> tuple[FloatArray, FloatArray]:
    logits = model.logits(prepared)
    scores = expit(np.clip(logits, -LOGIT_CLIP, LOGIT_CLIP))
    slope = np.where(np.abs(logits) < LOGIT_CLIP, scores * (1.0 - scores), 0.0)
    return scores, slope


def loss_gradient(
    model: ScorerModel,
    pos_bag: BagLike,
    neg_bag: BagLike,
    loss_kind: LossKind,
    selection: Selection = None,
    l2_coeff: float = 0.0,
    smoothness_coeff: float = 0.0,
    sparsity_coeff: float = 0.0,
) -> ModelGradient:
    """Analytic (sub)gradient of ``loss_value`` over w, b and the propagation weights.

    Max ties go to the lowest index; a hinge sitting exactly at zero
    contributes nothing.

    Args:
        model: Current scorer
        pos_bag: Positive bag (Bag, feature matrix or PreparedBag)
        neg_bag: Negative bag
        loss_kind: Pooling of the positive bag
        selection: k for top-k, the RepresentativeSet for bnsvp, unused for max
        l2_coeff: Weight decay on w and propagation weights
        smoothness_coeff: Temporal smoothness weight on positive scores
        sparsity_coeff: Sparsity weight on positive scores

    Returns:
        ModelGradient with the same structure as the model
    """
    pos, neg = model.prepare(pos_bag), model.prepare(neg_bag)
    pos_scores, pos_slope = _sigmoid_slope(model, pos)
    neg_scores, neg_slope = _sigmoid_slope(model, neg)
    chosen = positive_selection(loss_kind, pos_scores, selection)

    d_pos = np.zeros_like(pos_scores)
    d_neg = np.zeros_like(neg_scores)
    if _hinge_interior(pos_scores, neg_scores, chosen) > 0.0:
        np.add.at(d_pos, chosen, -1.0 / chosen.size)
        d_neg[int(np.argmax(neg_scores))] = 1.0
    if smoothness_coeff and pos_scores.size > 1:
        steps = np.diff(pos_scores)
        d_pos[1:] += 2.0 * smoothness_coeff * steps
        d_pos[:-1] -= 2.0 * smoothness_coeff * steps
    if sparsity_coeff:
        d_pos += sparsity_coeff

    g_pos = d_pos * pos_slope
    g_neg = d_neg * neg_slope
    grad_weight = model.hidden(pos).T @ g_pos + model.hidden(neg).T @ g_neg + 2.0 * l2_coeff * model.weight
    grad_bias = float(g_pos.sum() + g_neg.sum())

    if model.propagation is None:
        return ModelGradient(weight=grad_weight, bias=grad_bias)

    feature_layer, temporal_layer = model.propagation.feature_layer, model.propagation.temporal_layer
    w_feature = model.weight[: feature_layer.out_dim]
    w_temporal = model.weight[feature_layer.out_dim :]
    grad_feature = 2.0 * l2_coeff * feature_layer.weight
    grad_temporal = 2.0 * l2_coeff * temporal_layer.weight
    for prepared, g in ((pos, g_pos), (neg, g_neg)):
        assert prepared.feature_graph is not None and prepared.temporal_graph is not None
        grad_feature = grad_feature + np.outer(prepared.feature_graph.T @ g, w_feature)
        grad_temporal = grad_temporal + np.outer(prepared.temporal_graph.T @ g, w_temporal)
    return ModelGradient(
        weight=grad_weight, bias=grad_bias, feature_weight=grad_feature, temporal_weight=grad_temporal
    )


def is_near_kink(
    model: ScorerModel,
    pos_bag: BagLike,
    neg_bag: BagLike,
    loss_kind: LossKind,
    selection: Selection = None,
    tolerance: float = KINK_TOLERANCE,
) -> bool:
    """True when the hinge, a max tie, a top-k boundary or the logit clip is within ``tolerance``."""
    pos, neg = model.prepare(pos_bag), model.prepare(neg_bag)
    pos_scores, neg_scores = model.scores(pos), model.scores(neg)
    chosen = positive_selection(loss_kind, pos_scores, selection)
    if abs(_hinge_interior(pos_scores, neg_scores, chosen)) < tolerance:
        return True
    ordered_neg = np.sort(neg_scores)[::-1]
    if ordered_neg.size > 1 and ordered_neg[0] - ordered_neg[1] < tolerance:
        return True
    loss_kind = LossKind(loss_kind)
    if loss_kind is not LossKind.BNSVP:
        ordered_pos = np.sort(pos_scores)[::-1]
        boundary = chosen.size
        if boundary < ordered_pos.size and ordered_pos[boundary - 1] - ordered_pos[boundary] < tolerance:
            return True
    logits = np.concatenate([model.logits(pos), model.logits(neg)])
    return bool(np.any(np.abs(np.abs(logits) - LOGIT_CLIP) < tolerance))


def _selection_for(config: TrainConfig, selection: Selection) -> Selection:
    if config.loss_kind is LossKind.TOPK and selection is None:
        return config.k
    return selection


def finite_difference_check(
    model: ScorerModel, pos_bag: BagLike, neg_bag: BagLike, config: TrainConfig, selection: Selection = None
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Every parameter is perturbed by +/- 1e-5 with the selection held fixed.
    The relative error of each coordinate is |a - n| / max(|a|, |n|, 1e-4).
    """
    selection = _selection_for(config, selection)
    pos, neg = model.prepare(pos_bag), model.prepare(neg_bag)
    coefficients = {
        "l2_coeff": config.l2_coeff,
        "smoothness_coeff": config.smoothness_coeff,
        "sparsity_coeff": config.sparsity_coeff,
    }
    analytic = loss_gradient(model, pos, neg, config.loss_kind, selection, **coefficients).to_vector()
    base = model.to_vector()
    numeric = np.empty_like(base)
    for index in range(base.size):
        shifted = base.copy()
        shifted[index] += FD_STEP
        upper = loss_value(model.from_vector(shifted), pos, neg, config.loss_kind, selection, **coefficients)
        shifted[index] -= 2.0 * FD_STEP
        lower = loss_value(model.from_vector(shifted), pos, neg, config.loss_kind, selection, **coefficients)
        numeric[index] = (upper - lower) / (2.0 * FD_STEP)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FD_FLOOR)
    worst = float(np.max(np.abs(analytic - numeric) / scale))
    logger.debug("Finite-difference check over %d parameters: max relative error %.3e", base.size, worst)
    return worst


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainingLog:
    """Per-epoch mean objective and bookkeeping of one training run."""

    epoch_losses: list[float] = field(default_factory=list)
    skipped_steps: int = 0
    refresh_epochs: list[int] = field(default_factory=list)

    def rows(self) -> list[tuple[int, float]]:
        return [(epoch, loss) for epoch, loss in enumerate(self.epoch_losses, start=1)]

    def to_csv(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["epoch,mean_loss"] + [f"{epoch},{loss!r}" for epoch, loss in self.rows()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


@dataclass
class _PartitionState:
    result: PartitionResult
    blocks: list[SimilarityBlock]


class Trainer:
    """SGD over positive/negative bag pairs.

    Each epoch shuffles positive and negative bags with a seeded generator and
    walks max(P, N) pairs, cycling through the shorter list. For the bnsvp loss
    each positive bag carries a partition computed before the first epoch
    (or supplied by the caller) and the representative set is recomputed at
    every step from the current scores.

    Example:
        trainer = Trainer(dataset, TrainConfig(loss_kind="topk", k=3), threads=4)
        model, log = trainer.fit()
    """

    def __init__(
        self,
        dataset: Dataset,
        config: TrainConfig,
        partitions: Optional[dict[str, PartitionResult]] = None,
        threads: int = 1,
    ) -> None:
        self._positives = dataset.positives()
        self._negatives = dataset.negatives()
        if not self._positives or not self._negatives:
            raise ArgumentError(
                f"Training needs positive and negative bags, got {len(self._positives)} / {len(self._negatives)}"
            )
        dim = dataset.dim
        assert dim is not None
        if config.loss_kind is LossKind.TOPK:
            shortest = min(bag.n_segments for bag in self._positives)
            if config.k > shortest:
                raise ArgumentError(f"k={config.k} exceeds the shortest positive bag ({shortest} segments)")

        self._config = config
        self._threads = max(1, threads)
        self._model = ScorerModel.initial(dim, config.use_propagation, config.seed, config.lengthscale)
        self._prepared = {bag.id: self._model.prepare(bag) for bag in (*self._positives, *self._negatives)}
        self._partitions: dict[str, _PartitionState] = {}
        if partitions is not None and config.loss_kind is LossKind.BNSVP:
            missing = [bag.id for bag in self._positives if bag.id not in partitions]
            if missing:
                raise ArgumentError(f"No partition supplied for positive bags: {', '.join(missing)}")
            for bag in self._positives:
                self._partitions[bag.id] = self._partition_state(bag, partitions[bag.id])

        logger.debug("Created %r", self)

    @property
    def config(self) -> TrainConfig:
        return self._config

    @property
    def model(self) -> ScorerModel:
        return self._model

    def _partition_state(self, bag: Bag, result: PartitionResult) -> _PartitionState:
        if result.n_segments != bag.n_segments:
            raise ArgumentError(f"Partition of bag '{bag.id}' covers {result.n_segments} of {bag.n_segments} segments")
        representation = self._model.representation(self._prepared[bag.id])
        return _PartitionState(result=result, blocks=similarity_blocks(representation, result))

    def partition_positives(self, refresh_round: int = 0) -> None:
        """Partition every positive bag on the current representation.

        Bag i of round r is sampled with seed derive_seed(seed, i, r), so the
        outcome does not depend on the thread count.
        """
        config = self._config
        representations = [self._model.representation(self._prepared[bag.id]) for bag in self._positives]
        configs = [
            replace(config.partition_config, seed=derive_seed(config.seed, _PARTITION_STREAM, position, refresh_round))
            for position in range(len(self._positives))
        ]
        results = run_gibbs_many(representations, configs, self._threads)

        for bag, result in zip(self._positives, results):
            self._partitions[bag.id] = self._partition_state(bag, result)
        kappas = [state.result.kappa_count for state in self._partitions.values()]
        logger.info(
            "Partitioned %d positive bags (round %d, mean kappa %.2f)", len(results), refresh_round, np.mean(kappas)
        )

    def _selection(self, bag: Bag, pos_scores: FloatArray) -> Selection:
        kind = self._config.loss_kind
        if kind is LossKind.TOPK:
            return self._config.k
        if kind is LossKind.MAX_MIL:
            return None
        state = self._partitions[bag.id]
        rep_set = greedy_representatives(state.result, pos_scores, self._config.epsilon_percentile)
        if rep_set.indices and logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "Bag '%s': %d representatives, F=%.4f",
                bag.id,
                len(rep_set),
                blockwise_facility_value(state.blocks, rep_set.indices),
            )
        return rep_set

    def _should_refresh(self, epoch: int) -> bool:
        every = self._config.partition_refresh_every
        return every is not None and epoch > 1 and (epoch - 1) % every == 0

    def fit(self) -> tuple[ScorerModel, TrainingLog]:
        """Run all epochs and return the trained model and its log."""
        config = self._config
        log = TrainingLog()
        rng = np.random.default_rng(derive_seed(config.seed, _SHUFFLE_STREAM))
        coefficients = {
            "l2_coeff": config.l2_coeff,
            "smoothness_coeff": config.smoothness_coeff,
            "sparsity_coeff": config.sparsity_coeff,
        }
        if config.loss_kind is LossKind.BNSVP and not self._partitions:
            self.partition_positives(0)

        for epoch in range(1, config.epochs + 1):
            if config.loss_kind is LossKind.BNSVP and self._should_refresh(epoch):
                assert config.partition_refresh_every is not None
                self.partition_positives((epoch - 1) // config.partition_refresh_every)
                log.refresh_epochs.append(epoch)

            pos_order = rng.permutation(len(self._positives))
            neg_order = rng.permutation(len(self._negatives))
            losses = []
            for step in range(max(len(pos_order), len(neg_order))):
                pos_bag = self._positives[pos_order[step % len(pos_order)]]
                neg_bag = self._negatives[neg_order[step % len(neg_order)]]
                pos, neg = self._prepared[pos_bag.id], self._prepared[neg_bag.id]

                selection = self._selection(pos_bag, self._model.scores(pos))
                if isinstance(selection, RepresentativeSet) and not selection.indices:
                    logger.warning("Empty representative set for bag '%s'; skipping step", pos_bag.id)
                    log.skipped_steps += 1
                    continue
                losses.append(loss_value(self._model, pos, neg, config.loss_kind, selection, **coefficients))
                gradient = loss_gradient(self._model, pos, neg, config.loss_kind, selection, **coefficients)
                self._model = self._model.step(gradient, config.learning_rate)

            mean_loss = float(np.mean(losses)) if losses else float("nan")
            log.epoch_losses.append(mean_loss)
            if not losses:
                logger.warning("Epoch %d/%d: every step was skipped; the model is unchanged", epoch, config.epochs)
            logger.info("Epoch %d/%d: mean loss %.6f", epoch, config.epochs, mean_loss)

        return self._model, log

    def __repr__(self) -> str:
        return (
            f"<Trainer loss={self._config.loss_kind.value} positives={len(self._positives)} "
            f"negatives={len(self._negatives)} threads={self._threads}>"
        )


def train(
    dataset: Dataset,
    config: TrainConfig,
    partitions: Optional[dict[str, PartitionResult]] = None,
    threads: int = 1,
) -> tuple[ScorerModel, TrainingLog]:
    """Train a scorer on ``dataset``; deterministic given ``config.seed``."""
    return Trainer(dataset, config, partitions=partitions, threads=threads).fit()
