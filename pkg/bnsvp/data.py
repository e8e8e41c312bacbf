"""Bags, datasets and their on-disk formats.

A bag is one video represented as an ordered sequence of segment feature
vectors with a single video-level label. Datasets are described by a JSON
manifest that points at one binary feature file per bag.

Feature file layout (little endian)::

    b"BSVP" | u32 version=1 | u32 n_segments | u32 dim | n_segments*dim f32 row-major
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ArgumentError, FormatError, ValidationError

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"BSVP"
FEATURE_VERSION = 1
MANIFEST_VERSION = 1
DEFAULT_SEGMENTS = 32

_HEADER = struct.Struct("<4sIII")

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class Bag:
    """One video: an n x M feature matrix plus its weak label.

    Attributes:
        id: Unique identifier inside a dataset
        features: Segment features, shape (n, M), stored as float64
        bag_label: 0 for a normal video, 1 for an abnormal one
        segment_labels: Optional per-segment ground truth, used for evaluation only
    """

    id: str
    features: NDArray[np.float64]
    bag_label: int
    segment_labels: Optional[NDArray[np.int64]] = None

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise ValidationError(f"Bag '{self.id}' needs an n x M feature matrix with n, M >= 1, got {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ValidationError(f"Bag '{self.id}' contains non-finite feature values")
        if self.bag_label not in (0, 1):
            raise ValidationError(f"Bag '{self.id}' has label {self.bag_label!r}, expected 0 or 1")
        features.setflags(write=False)
        object.__setattr__(self, "features", features)

        if self.segment_labels is not None:
            labels = np.array(self.segment_labels, dtype=np.int64)
            if labels.shape != (features.shape[0],):
                raise ValidationError(
                    f"Bag '{self.id}' has {labels.size} segment labels for {features.shape[0]} segments"
                )
            if not np.isin(labels, (0, 1)).all():
                raise ValidationError(f"Bag '{self.id}' segment labels must be 0 or 1")
            if self.bag_label == 0 and labels.any():
                raise ValidationError(f"Normal bag '{self.id}' cannot contain abnormal segment labels")
            labels.setflags(write=False)
            object.__setattr__(self, "segment_labels", labels)

    @property
    def n_segments(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def is_abnormal(self) -> bool:
        return self.bag_label == 1


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered, immutable collection of bags sharing one feature dimension."""

    bags: tuple[Bag, ...] = ()
    name: str = "dataset"
    _index: dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        bags = tuple(self.bags)
        object.__setattr__(self, "bags", bags)
        index: dict[str, int] = {}
        for position, bag in enumerate(bags):
            if bag.id in index:
                raise ValidationError(f"Duplicate bag id '{bag.id}' in dataset '{self.name}'")
            index[bag.id] = position
            first = bags[0]
            if bag.dim != first.dim:
                raise ValidationError(
                    f"Feature dimension mismatch: bag '{first.id}' has {first.dim}, bag '{bag.id}' has {bag.dim}"
                )
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_manifest(cls, manifest_path: PathLike) -> "Dataset":
        """Create a Dataset from a manifest file.

        Args:
            manifest_path: Path of the JSON manifest

        Returns:
            Dataset with every referenced bag loaded
        """
        return load_dataset(manifest_path)

    def __len__(self) -> int:
        return len(self.bags)

    def __iter__(self) -> Iterator[Bag]:
        return iter(self.bags)

    def __getitem__(self, bag_id: str) -> Bag:
        return self.bags[self._index[bag_id]]

    @property
    def dim(self) -> Optional[int]:
        """Shared feature dimension, or None for an empty dataset."""
        return self.bags[0].dim if self.bags else None

    def positives(self) -> list[Bag]:
        return [bag for bag in self.bags if bag.is_abnormal]

    def negatives(self) -> list[Bag]:
        return [bag for bag in self.bags if not bag.is_abnormal]

    def replace_bags(self, bags: Sequence[Bag]) -> "Dataset":
        return Dataset(bags=tuple(bags), name=self.name)


def write_feature_file(features: ArrayLike, path: PathLike) -> None:
    """Write a feature matrix in the BSVP binary format.

    Args:
        features: n x M matrix, stored as 32-bit floats
        path: Destination file

    Raises:
        FormatError: If the matrix is empty, not 2-D or not finite
    """
    matrix = np.asarray(features)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise FormatError(f"Feature matrix must be n x M with n, M >= 1, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise FormatError("Feature matrix contains non-finite values")

    payload = np.ascontiguousarray(matrix, dtype="<f4")
    n_segments, dim = payload.shape
    with open(path, "wb") as handle:
        handle.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n_segments, dim))
        handle.write(payload.tobytes(order="C"))
    logger.debug("Wrote %d x %d features to %s", n_segments, dim, path)


def read_feature_file(path: PathLike) -> NDArray[np.float32]:
    """Read a BSVP feature file.

    Args:
        path: Source file

    Returns:
        The n x M float32 matrix stored in the file

    Raises:
        FileNotFoundError: If the file does not exist
        FormatError: On bad magic, version, shape or a truncated payload
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header, expected {_HEADER.size} bytes, got {len(raw)}")

    magic, version, n_segments, dim = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}, expected {FEATURE_VERSION}")
    if n_segments < 1 or dim < 1:
        raise FormatError(f"{path}: invalid shape {n_segments} x {dim}")

    expected = _HEADER.size + 4 * n_segments * dim
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")

    payload = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size, count=n_segments * dim)
    return payload.reshape(n_segments, dim).astype(np.float32)


def _parse_entry(entry: Any, position: int, manifest_path: Path) -> tuple[str, str, int, Optional[list[int]]]:
    if not isinstance(entry, dict):
        raise FormatError(f"{manifest_path}: videos[{position}] must be an object")
    try:
        bag_id = entry["id"]
        feature_file = entry["feature_file"]
        bag_label = entry["bag_label"]
    except KeyError as e:
        raise FormatError(f"{manifest_path}: videos[{position}] is missing field {e}") from e
    if not isinstance(bag_id, str) or not isinstance(feature_file, str):
        raise FormatError(f"{manifest_path}: videos[{position}] 'id' and 'feature_file' must be strings")
    if bag_label not in (0, 1) or isinstance(bag_label, bool):
        raise FormatError(f"{manifest_path}: videos[{position}] 'bag_label' must be 0 or 1")
    labels = entry.get("segment_labels")
    if labels is not None and not isinstance(labels, list):
        raise FormatError(f"{manifest_path}: videos[{position}] 'segment_labels' must be a list")
    return bag_id, feature_file, bag_label, labels


def load_dataset(manifest_path: PathLike) -> Dataset:
    """Load every bag referenced by a manifest.

    Args:
        manifest_path: Path of the JSON manifest; feature files are resolved
            relative to its directory

    Returns:
        Dataset named after the manifest's directory

    Raises:
        FileNotFoundError: If the manifest or a feature file is missing
        FormatError: If the manifest or a feature file is malformed
        ValidationError: If bags disagree on dimension or break bag invariants
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"Manifest not found: {manifest_path}")

    try:
        document = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{manifest_path}: invalid JSON: {e}") from e

    if not isinstance(document, dict) or document.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{manifest_path}: expected a version {MANIFEST_VERSION} manifest object")
    videos = document.get("videos")
    if not isinstance(videos, list):
        raise FormatError(f"{manifest_path}: 'videos' must be a list")

    base = manifest_path.parent
    bags = []
    for position, entry in enumerate(videos):
        bag_id, feature_file, bag_label, labels = _parse_entry(entry, position, manifest_path)
        feature_path = base / feature_file
        if not feature_path.is_file():
            raise FileNotFoundError(f"Feature file not found: {feature_path}")
        features = read_feature_file(feature_path)
        bags.append(
            Bag(
                id=bag_id,
                features=features.astype(np.float64),
                bag_label=bag_label,
                segment_labels=None if labels is None else np.asarray(labels, dtype=np.int64),
            )
        )

    dataset = Dataset(bags=tuple(bags), name=base.name or "dataset")
    logger.info("Loaded dataset '%s' with %d bags from %s", dataset.name, len(dataset), manifest_path)
    return dataset


def write_dataset(dataset: Dataset, directory: PathLike) -> Path:
    """Write a dataset as ``manifest.json`` plus ``features/<id>.bsvp`` files.

    Args:
        dataset: Dataset to write
        directory: Output directory, created if needed

    Returns:
        Path of the written manifest
    """
    directory = Path(directory)
    feature_dir = directory / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)

    videos = []
    for bag in dataset:
        relative = f"features/{bag.id}.bsvp"
        write_feature_file(bag.features, directory / relative)
        entry: dict[str, Any] = {"id": bag.id, "feature_file": relative, "bag_label": bag.bag_label}
        if bag.segment_labels is not None:
            entry["segment_labels"] = [int(label) for label in bag.segment_labels]
        videos.append(entry)

    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps({"version": MANIFEST_VERSION, "videos": videos}, indent=2), encoding="utf-8")
    logger.info("Wrote dataset '%s' (%d bags) to %s", dataset.name, len(dataset), directory)
    return manifest_path


def _segment_groups(n_clips: int, n_segments: int) -> list[NDArray[np.int64]]:
    if n_segments < 1:
        raise ArgumentError(f"n_segments must be positive, got {n_segments}")
    if n_clips < 1:
        raise ArgumentError("At least one clip is required")
    clips = np.arange(n_clips)
    if n_clips >= n_segments:
        return list(np.array_split(clips, n_segments))
    # Short videos: one clip per segment, then repeat the last clip.
    return [clips[[min(k, n_clips - 1)]] for k in range(n_segments)]


def segment_video(clip_features: ArrayLike, n_segments: int = DEFAULT_SEGMENTS) -> NDArray[np.float64]:
    """Average contiguous clip groups into a fixed number of segments.

    Groups differ in size by at most one clip, earlier groups taking the extra
    clip. With fewer clips than segments the last clip is repeated.

    Args:
        clip_features: c x M clip feature matrix
        n_segments: Number of output segments

    Returns:
        n_segments x M matrix of segment features

    Raises:
        ArgumentError: If n_segments is not positive or there are no clips
    """
    clips = np.asarray(clip_features, dtype=np.float64)
    if clips.ndim != 2:
        raise ArgumentError(f"clip_features must be a c x M matrix, got shape {clips.shape}")
    groups = _segment_groups(clips.shape[0], n_segments)
    return np.stack([clips[group].mean(axis=0) for group in groups])


def segment_labels(clip_labels: ArrayLike, n_segments: int = DEFAULT_SEGMENTS) -> NDArray[np.int64]:
    """Regroup clip labels the way ``segment_video`` regroups features.

    A segment is abnormal when any of its clips is abnormal.
    """
    labels = np.asarray(clip_labels, dtype=np.int64)
    groups = _segment_groups(labels.shape[0], n_segments)
    return np.array([int(labels[group].max()) for group in groups], dtype=np.int64)
