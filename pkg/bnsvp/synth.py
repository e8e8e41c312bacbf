"""Seeded synthetic bags with planted scenes, outliers and multiple anomaly modes.

Normal segments follow a sticky Markov chain over scenes, each scene emitting
from a few Gaussian sub-scenes. Abnormal bags overwrite one contiguous block
per anomaly mode with draws from that mode's Gaussian, or with the scene's own
features shifted by the mode's mean. Every mean sits on its own orthonormal
direction, so any two means are ``mean_separation`` apart.

The means come from ``library_seed`` and the bags from ``seed``, so a training
and a test set drawn with different ``seed`` values share one distribution.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray

from .data import DEFAULT_SEGMENTS, Bag, Dataset, segment_labels, segment_video
from .environment import derive_seed
from .errors import ArgumentError

logger = logging.getLogger(__name__)

MULTIMODAL_VIDEOS_PER_BAG = 3

_LIBRARY_STREAM = 0
_BAG_STREAM = 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of a planted-scene scenario.

    ``anomaly_fraction`` is the share of a positive bag's segments that are
    abnormal, split evenly across ``anomaly_modes`` contiguous blocks. With
    ``anomaly_overlay`` an anomaly keeps the underlying scene and adds its
    mode's mean instead of replacing the segment.
    """

    n_bags_pos: int = 20
    n_bags_neg: int = 20
    n_segments: int = DEFAULT_SEGMENTS
    dim: int = 8
    n_scenes: int = 3
    components_per_scene: int = 2
    anomaly_modes: int = 1
    anomaly_fraction: float = 0.25
    mean_separation: float = 6.0
    self_transition: float = 0.9
    noise_std: float = 1.0
    anomaly_overlay: bool = False
    seed: int = 0
    library_seed: int = 0
    name: str = "planted"

    def __post_init__(self) -> None:
        if self.n_bags_pos < 0 or self.n_bags_neg < 0:
            raise ArgumentError("Bag counts must be nonnegative")
        for attribute in ("n_segments", "dim", "n_scenes", "components_per_scene", "anomaly_modes"):
            if getattr(self, attribute) < 1:
                raise ArgumentError(f"{attribute} must be positive, got {getattr(self, attribute)}")
        if not 0.0 < self.anomaly_fraction < 1.0:
            raise ArgumentError(f"anomaly_fraction must lie in (0, 1), got {self.anomaly_fraction}")
        if self.mean_separation < 0:
            raise ArgumentError(f"mean_separation must be nonnegative, got {self.mean_separation}")
        if not 0.0 <= self.self_transition <= 1.0:
            raise ArgumentError(f"self_transition must lie in [0, 1], got {self.self_transition}")
        if not self.noise_std > 0:
            raise ArgumentError(f"noise_std must be positive, got {self.noise_std}")
        if self.n_bags_pos > 0:
            self.block_length(self.anomaly_modes)

    def block_length(self, modes: int) -> int:
        """Length of each anomaly block when ``modes`` blocks share the abnormal fraction.

        Raises:
            ArgumentError: If a block would be shorter than one segment
        """
        total = round(self.anomaly_fraction * self.n_segments)
        if total < 1 or total // modes < 1:
            raise ArgumentError(
                f"anomaly_fraction {self.anomaly_fraction} of {self.n_segments} segments "
                f"cannot hold {modes} anomaly block(s)"
            )
        return total // modes

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PlantedSequence:
    """Normal features of one bag with the scene and sub-scene that emitted each segment."""

    features: NDArray[np.float64]
    scenes: NDArray[np.int64]
    components: NDArray[np.int64]


def _directions(count: int, dim: int, rng: np.random.Generator) -> NDArray[np.float64]:
    if count <= dim:
        basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return basis.T[:count]
    logger.warning("%d means in %d dimensions; falling back to random unit directions", count, dim)
    vectors = rng.standard_normal((count, dim))
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


class ScenarioLibrary:
    """Gaussian means and scene dynamics shared by every bag of a scenario.

    Attributes:
        component_means: (n_scenes, components_per_scene, dim) sub-scene means
        anomaly_means: (anomaly_modes, dim) anomaly means
        transition: Scene transition matrix with ``self_transition`` on the diagonal
    """

    def __init__(self, config: ScenarioConfig) -> None:
        self._config = config
        rng = np.random.default_rng(derive_seed(config.library_seed, _LIBRARY_STREAM))
        n_normal = config.n_scenes * config.components_per_scene
        scale = config.mean_separation / np.sqrt(2.0)
        means = scale * _directions(n_normal + config.anomaly_modes, config.dim, rng)
        self.component_means = means[:n_normal].reshape(config.n_scenes, config.components_per_scene, config.dim)
        self.anomaly_means = means[n_normal:]

        if config.n_scenes == 1:
            self.transition = np.ones((1, 1))
        else:
            off = (1.0 - config.self_transition) / (config.n_scenes - 1)
            self.transition = np.full((config.n_scenes, config.n_scenes), off)
            np.fill_diagonal(self.transition, config.self_transition)

    @property
    def config(self) -> ScenarioConfig:
        return self._config

    def __repr__(self) -> str:
        c = self._config
        return f"<ScenarioLibrary scenes={c.n_scenes}x{c.components_per_scene} modes={c.anomaly_modes} dim={c.dim}>"


def planted_sequence(library: ScenarioLibrary, n_segments: int, rng: np.random.Generator) -> PlantedSequence:
    """Draw one normal sequence from the library's sticky scene chain."""
    config = library.config
    scenes = np.empty(n_segments, dtype=np.int64)
    scenes[0] = rng.integers(config.n_scenes)
    for i in range(1, n_segments):
        scenes[i] = rng.choice(config.n_scenes, p=library.transition[scenes[i - 1]])
    components = rng.integers(config.components_per_scene, size=n_segments)
    noise = config.noise_std * rng.standard_normal((n_segments, config.dim))
    features = library.component_means[scenes, components] + noise
    return PlantedSequence(features=features, scenes=scenes, components=components)


def _abnormal_bag(
    library: ScenarioLibrary, bag_id: str, modes: Sequence[int], rng: np.random.Generator
) -> Bag:
    config = library.config
    sequence = planted_sequence(library, config.n_segments, rng)
    features = sequence.features.copy()
    labels = np.zeros(config.n_segments, dtype=np.int64)
    length = config.block_length(len(modes))
    slot = config.n_segments // len(modes)
    for position, mode in enumerate(modes):
        start = position * slot + int(rng.integers(slot - length + 1))
        if config.anomaly_overlay:
            features[start : start + length] += library.anomaly_means[mode]
        else:
            noise = config.noise_std * rng.standard_normal((length, config.dim))
            features[start : start + length] = library.anomaly_means[mode] + noise
        labels[start : start + length] = 1
    return Bag(id=bag_id, features=features, bag_label=1, segment_labels=labels)


def _normal_bag(library: ScenarioLibrary, bag_id: str, rng: np.random.Generator) -> Bag:
    sequence = planted_sequence(library, library.config.n_segments, rng)
    labels = np.zeros(library.config.n_segments, dtype=np.int64)
    return Bag(id=bag_id, features=sequence.features, bag_label=0, segment_labels=labels)


def generate_planted(config: ScenarioConfig) -> Dataset:
    """Planted-scene dataset with ground-truth segment labels.

    Positive bags carry one contiguous anomaly block per mode, each inside
    its own equal-width slot of the bag. Deterministic given the seeds.

    Raises:
        ArgumentError: If the anomaly blocks do not fit
    """
    library = ScenarioLibrary(config)
    rng = np.random.default_rng(derive_seed(config.seed, _BAG_STREAM))
    modes = list(range(config.anomaly_modes))
    bags = [_abnormal_bag(library, f"pos_{i:03d}", modes, rng) for i in range(config.n_bags_pos)]
    bags += [_normal_bag(library, f"neg_{i:03d}", rng) for i in range(config.n_bags_neg)]
    logger.info(
        "Generated planted dataset '%s': %d positive, %d negative bags",
        config.name,
        config.n_bags_pos,
        config.n_bags_neg,
    )
    return Dataset(bags=tuple(bags), name=config.name)


def inject_outliers(dataset: Dataset, count: int, seed: int) -> Dataset:
    """Replace ``count`` abnormal-bag segments with standard Gaussian draws.

    Segments are chosen uniformly without replacement among all segments of
    abnormal bags; labels are left unchanged and normal bags are untouched.

    Raises:
        ArgumentError: If ``count`` exceeds the abnormal segments available
    """
    if count < 0:
        raise ArgumentError(f"count must be nonnegative, got {count}")
    if count == 0:
        return dataset
    slots = [(bag.id, row) for bag in dataset.positives() for row in range(bag.n_segments)]
    if count > len(slots):
        raise ArgumentError(f"Cannot inject {count} outliers into {len(slots)} abnormal segments")

    rng = np.random.default_rng(seed)
    picked = rng.choice(len(slots), size=count, replace=False)
    rows_by_bag: dict[str, list[int]] = {}
    for index in sorted(int(i) for i in picked):
        bag_id, row = slots[index]
        rows_by_bag.setdefault(bag_id, []).append(row)

    bags = []
    for bag in dataset:
        rows = rows_by_bag.get(bag.id)
        if rows is None:
            bags.append(bag)
            continue
        features = bag.features.copy()
        features[rows] = rng.standard_normal((len(rows), bag.dim))
        bags.append(Bag(id=bag.id, features=features, bag_label=bag.bag_label, segment_labels=bag.segment_labels))
    logger.info("Injected %d outliers into %d abnormal bags", count, len(rows_by_bag))
    return dataset.replace_bags(bags)


def _labels_or_constant(bag: Bag) -> NDArray[np.int64]:
    if bag.segment_labels is not None:
        return bag.segment_labels
    return np.full(bag.n_segments, bag.bag_label, dtype=np.int64)


def _concatenate(bag_id: str, videos: Sequence[Bag], label: int, n_segments: int) -> Bag:
    features = segment_video(np.vstack([video.features for video in videos]), n_segments)
    labels = segment_labels(np.concatenate([_labels_or_constant(video) for video in videos]), n_segments)
    return Bag(id=bag_id, features=features, bag_label=label, segment_labels=labels)


def make_multimodal_bags(
    mode_datasets: Sequence[Dataset],
    bags_pos: int,
    bags_neg: int,
    seed: int,
    n_segments: int = DEFAULT_SEGMENTS,
) -> Dataset:
    """Build bags that concatenate three videos each.

    An abnormal bag takes one abnormal video from each of three distinct,
    randomly chosen modes; a normal bag takes three normal videos from the
    pooled normal videos. The concatenation is resegmented to ``n_segments``.

    Args:
        mode_datasets: One dataset per anomaly mode
        bags_pos: Number of abnormal bags
        bags_neg: Number of normal bags
        seed: Seed of the draws
        n_segments: Segments per output bag

    Raises:
        ArgumentError: If fewer than three modes have abnormal videos, or no normal video exists
    """
    eligible = [dataset for dataset in mode_datasets if dataset.positives()]
    if bags_pos > 0 and len(eligible) < MULTIMODAL_VIDEOS_PER_BAG:
        raise ArgumentError(
            f"Multimodal bags need {MULTIMODAL_VIDEOS_PER_BAG} modes with abnormal videos, got {len(eligible)}"
        )
    normals = [bag for dataset in mode_datasets for bag in dataset.negatives()]
    if bags_neg > 0 and not normals:
        raise ArgumentError("Multimodal normal bags need at least one normal video")

    rng = np.random.default_rng(seed)
    bags = []
    for i in range(bags_pos):
        chosen = rng.choice(len(eligible), size=MULTIMODAL_VIDEOS_PER_BAG, replace=False)
        videos = []
        for mode in chosen:
            positives = eligible[int(mode)].positives()
            videos.append(positives[int(rng.integers(len(positives)))])
        bags.append(_concatenate(f"mm_pos_{i:03d}", videos, 1, n_segments))
    reuse = len(normals) < MULTIMODAL_VIDEOS_PER_BAG
    for i in range(bags_neg):
        picks = rng.choice(len(normals), size=MULTIMODAL_VIDEOS_PER_BAG, replace=reuse)
        bags.append(_concatenate(f"mm_neg_{i:03d}", [normals[int(p)] for p in picks], 0, n_segments))
    return Dataset(bags=tuple(bags), name="multimodal")


def generate_multimodal(config: ScenarioConfig, n_modes: int = 3) -> Dataset:
    """Multimodal dataset drawn from one shared library with ``n_modes`` anomaly modes.

    Each mode contributes ``config.n_bags_pos`` single-mode abnormal videos and
    ``config.n_bags_neg`` normal videos; the output holds ``config.n_bags_pos``
    abnormal and ``config.n_bags_neg`` normal three-video bags.
    """
    if n_modes < MULTIMODAL_VIDEOS_PER_BAG:
        raise ArgumentError(f"Multimodal generation needs at least {MULTIMODAL_VIDEOS_PER_BAG} modes, got {n_modes}")
    shared = ScenarioConfig(**{**config.to_dict(), "anomaly_modes": n_modes})
    library = ScenarioLibrary(shared)
    rng = np.random.default_rng(derive_seed(config.seed, _BAG_STREAM))
    mode_datasets = []
    for mode in range(n_modes):
        bags = [_abnormal_bag(library, f"m{mode}_pos_{i:03d}", [mode], rng) for i in range(config.n_bags_pos)]
        bags += [_normal_bag(library, f"m{mode}_neg_{i:03d}", rng) for i in range(config.n_bags_neg)]
        mode_datasets.append(Dataset(bags=tuple(bags), name=f"mode_{mode}"))
    dataset = make_multimodal_bags(
        mode_datasets, config.n_bags_pos, config.n_bags_neg, derive_seed(config.seed, _BAG_STREAM, 1), config.n_segments
    )
    logger.info("Generated multimodal dataset from %d modes: %d bags", n_modes, len(dataset))
    return Dataset(bags=dataset.bags, name=config.name)
