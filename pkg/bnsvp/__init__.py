"""Bayesian nonparametric submodular video partition.

Weakly supervised anomaly scoring for videos represented as bags of segment
features. Each abnormal bag is partitioned into scenes and sub-scenes by a
sticky HDP-HMM; one representative segment per sub-scene is picked through a
facility-location function and fed to a multiple-instance ranking loss.

Main components:
- data: Bag/Dataset model, manifest and binary feature files
- partition: sticky HDP-HMM Gibbs sampler (``run_gibbs``)
- submodular: similarity, facility location, ``greedy_representatives``
- propagation: graph-convolution feature propagation
- losses / training: MIL losses, scorer model, SGD ``train``
- synth: seeded synthetic scenarios
- metrics: ROC/AUC and reports

Example:
    from bnsvp import LossKind, TrainConfig, load_dataset, train

    dataset = load_dataset("train/manifest.json")
    model, log = train(dataset, TrainConfig(loss_kind=LossKind.BNSVP, epochs=20))
"""

import logging
from typing import Mapping, Optional

__version__ = "0.1.0"

from .data import Bag, Dataset, load_dataset, segment_labels, segment_video, write_dataset
from .environment import DEFAULT_SETTINGS, ExperimentEnvironment, RunRecord, derive_seed
from .errors import (
    ArgumentError,
    BnsvpError,
    DegenerateSelectionError,
    FormatError,
    NumericError,
    ValidationError,
)
from .metrics import RocResult, evaluate_model, mann_whitney_auc, report, roc_auc
from .partition import NIWPrior, PartitionConfig, PartitionResult, SamplerInit, StickyHDPHMMSampler, run_gibbs
from .submodular import RepresentativeSet, build_similarity, facility_location_value, greedy_representatives
from .synth import ScenarioConfig, generate_multimodal, generate_planted, inject_outliers, make_multimodal_bags
from .training import LossKind, ScorerModel, TrainConfig, TrainingLog, score_bag, train

__all__ = [
    # Data
    "Bag",
    "Dataset",
    "load_dataset",
    "write_dataset",
    "segment_video",
    "segment_labels",
    # Partition and selection
    "NIWPrior",
    "PartitionConfig",
    "PartitionResult",
    "SamplerInit",
    "StickyHDPHMMSampler",
    "run_gibbs",
    "RepresentativeSet",
    "build_similarity",
    "facility_location_value",
    "greedy_representatives",
    # Training and evaluation
    "LossKind",
    "ScorerModel",
    "TrainConfig",
    "TrainingLog",
    "score_bag",
    "train",
    "RocResult",
    "roc_auc",
    "mann_whitney_auc",
    "evaluate_model",
    "report",
    # Synthetic data
    "ScenarioConfig",
    "generate_planted",
    "generate_multimodal",
    "inject_outliers",
    "make_multimodal_bags",
    # Environment and errors
    "ExperimentEnvironment",
    "RunRecord",
    "derive_seed",
    "configure",
    "BnsvpError",
    "ArgumentError",
    "ValidationError",
    "FormatError",
    "NumericError",
    "DegenerateSelectionError",
]

logger = logging.getLogger(__name__)


def configure(settings: Optional[Mapping[str, str]] = None) -> dict[str, str]:
    """Resolve ``bnsvp.*`` settings and apply the package log level.

    Configuration settings:
    - bnsvp.log_level: Logging level of the ``bnsvp`` logger (default: INFO)
    - bnsvp.threads: Worker threads for partitioning bags (default: 1)

    Args:
        settings: Partial settings; missing keys take their defaults

    Returns:
        The resolved settings

    Example:
        settings = configure({"bnsvp.log_level": "DEBUG"})
        env = ExperimentEnvironment(settings)
    """
    resolved = dict(settings or {})
    for key, default in DEFAULT_SETTINGS.items():
        resolved.setdefault(key, default)

    log_level = resolved["bnsvp.log_level"].upper()
    logging.getLogger("bnsvp").setLevel(getattr(logging, log_level, logging.INFO))

    logger.debug("bnsvp configured: %s", resolved)
    return resolved
