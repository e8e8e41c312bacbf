"""Tests for bags, datasets, feature files and segmentation."""

import json

import numpy as np
import pytest

from bnsvp import Bag, Dataset, load_dataset, segment_labels, segment_video, write_dataset
from bnsvp.data import read_feature_file, write_feature_file
from bnsvp.errors import ArgumentError, FormatError, ValidationError


def _write_manifest(directory, videos):
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({"version": 1, "videos": videos}), encoding="utf-8")
    return manifest


@pytest.mark.parametrize(
    "kwargs",
    [
        {"features": np.zeros(4), "bag_label": 0},
        {"features": np.zeros((0, 3)), "bag_label": 0},
        {"features": np.array([[0.0, np.nan]]), "bag_label": 0},
        {"features": np.zeros((2, 3)), "bag_label": 2},
        {"features": np.zeros((2, 3)), "bag_label": 1, "segment_labels": [1]},
        {"features": np.zeros((2, 3)), "bag_label": 0, "segment_labels": [0, 1]},
    ],
    ids=["vector", "no-segments", "nan", "bad-label", "label-length", "normal-with-anomaly"],
)
def test_bag_rejects_invalid_input(kwargs):
    """Bags enforce shape, finiteness and label invariants."""
    with pytest.raises(ValidationError):
        Bag(id="b", **kwargs)


def test_bag_features_are_read_only():
    """A bag's feature matrix cannot be modified after construction."""
    bag = Bag(id="b", features=np.ones((2, 2)), bag_label=0)

    with pytest.raises(ValueError):
        bag.features[0, 0] = 5.0


def test_dataset_dimension_mismatch_names_both_bags():
    """Mixing feature dimensions is a validation error naming the bags involved."""
    first = Bag(id="first", features=np.zeros((2, 8)), bag_label=0)
    second = Bag(id="second", features=np.zeros((2, 16)), bag_label=1)

    with pytest.raises(ValidationError, match="first.*second"):
        Dataset(bags=(first, second))


def test_dataset_rejects_duplicate_ids():
    """Bag ids are unique within a dataset."""
    bag = Bag(id="same", features=np.zeros((2, 2)), bag_label=0)

    with pytest.raises(ValidationError, match="Duplicate"):
        Dataset(bags=(bag, bag))


def test_feature_file_round_trip(tmp_path):
    """A float32 matrix survives write and read unchanged."""
    matrix = np.arange(6, dtype=np.float32).reshape(2, 3) / 7
    path = tmp_path / "x.bsvp"

    write_feature_file(matrix, path)

    assert np.array_equal(read_feature_file(path), matrix)


def test_feature_file_bad_magic(tmp_path):
    """A file not starting with the magic bytes is rejected."""
    path = tmp_path / "x.bsvp"
    write_feature_file(np.ones((2, 3)), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))

    with pytest.raises(FormatError, match="magic"):
        read_feature_file(path)


def test_feature_file_truncated_reports_sizes(tmp_path):
    """A truncated payload reports the expected and actual byte counts."""
    path = tmp_path / "x.bsvp"
    write_feature_file(np.ones((2, 3)), path)
    path.write_bytes(path.read_bytes()[:-4])

    with pytest.raises(FormatError, match="expected 40 bytes, got 36"):
        read_feature_file(path)


def test_feature_file_rejects_empty_matrix(tmp_path):
    """A 0 x M matrix cannot be written."""
    with pytest.raises(FormatError):
        write_feature_file(np.zeros((0, 3)), tmp_path / "x.bsvp")


def test_load_empty_manifest(tmp_path):
    """A manifest listing no videos yields an empty dataset."""
    dataset = load_dataset(_write_manifest(tmp_path, []))

    assert len(dataset) == 0
    assert dataset.dim is None


@pytest.mark.parametrize(
    "dims, valid",
    [((8, 8), True), ((8, 16), False)],
    ids=["same-dim", "mixed-dim"],
)
def test_load_manifest_dimensions(tmp_path, dims, valid):
    """Two videos load into two bags only when their dimensions agree."""
    (tmp_path / "features").mkdir()
    videos = []
    for i, dim in enumerate(dims):
        write_feature_file(np.ones((4, dim)), tmp_path / "features" / f"v{i}.bsvp")
        videos.append({"id": f"v{i}", "feature_file": f"features/v{i}.bsvp", "bag_label": i % 2})
    manifest = _write_manifest(tmp_path, videos)

    if valid:
        assert len(load_dataset(manifest)) == 2
    else:
        with pytest.raises(ValidationError):
            load_dataset(manifest)


def test_load_missing_manifest_names_path(tmp_path):
    """A missing manifest is an I/O error naming the path."""
    path = tmp_path / "nowhere" / "manifest.json"

    with pytest.raises(FileNotFoundError, match="nowhere"):
        load_dataset(path)


def test_load_manifest_missing_field(tmp_path):
    """Manifest entries must carry id, feature_file and bag_label."""
    manifest = _write_manifest(tmp_path, [{"id": "v0", "bag_label": 0}])

    with pytest.raises(FormatError, match="feature_file"):
        load_dataset(manifest)


def test_write_then_load_dataset(tmp_path, rng):
    """write_dataset output loads back with identical ids, labels and features."""
    bags = (
        Bag(
            id="a",
            features=rng.standard_normal((5, 3)).astype(np.float32),
            bag_label=1,
            segment_labels=[0, 1, 1, 0, 0],
        ),
        Bag(id="b", features=rng.standard_normal((4, 3)).astype(np.float32), bag_label=0),
    )

    loaded = load_dataset(write_dataset(Dataset(bags=bags), tmp_path / "set"))

    assert [bag.id for bag in loaded] == ["a", "b"]
    assert loaded.name == "set"
    for original in bags:
        assert np.array_equal(loaded[original.id].features, original.features)
        assert loaded[original.id].bag_label == original.bag_label
    assert loaded["a"].segment_labels.tolist() == [0, 1, 1, 0, 0]
    assert loaded["b"].segment_labels is None


def test_segment_video_identity():
    """As many clips as segments leaves the features unchanged."""
    clips = np.random.default_rng(0).standard_normal((32, 4))

    assert np.array_equal(segment_video(clips, 32), clips)


def test_segment_video_pairs():
    """64 clips into 32 segments averages consecutive pairs."""
    clips = np.arange(1, 65, dtype=np.float64).reshape(64, 1)

    out = segment_video(clips, 32)

    expected = (clips[0::2] + clips[1::2]) / 2
    assert np.allclose(out, expected)


def test_segment_video_pads_short_video():
    """Fewer clips than segments repeats the last clip."""
    a, b, c = [1.0, 0.0], [0.0, 1.0], [2.0, 2.0]

    out = segment_video(np.array([a, b, c]), 4)

    assert out.tolist() == [a, b, c, c]


def test_segment_video_uneven_groups():
    """Earlier groups take the extra clip when the split is uneven."""
    clips = np.arange(5, dtype=np.float64).reshape(5, 1)

    out = segment_video(clips, 2)

    assert out[:, 0].tolist() == [1.0, 3.5]


def test_segment_video_rejects_zero_segments():
    """n_segments must be positive."""
    with pytest.raises(ArgumentError):
        segment_video(np.ones((4, 2)), 0)


def test_segment_labels_take_maximum():
    """A segment is abnormal when any of its clips is abnormal."""
    assert segment_labels([0, 0, 0, 1, 0, 0], 3).tolist() == [0, 1, 0]
