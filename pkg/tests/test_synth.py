"""Tests for synthetic scenario generation."""

import hashlib

import numpy as np
import pytest

from bnsvp import ScenarioConfig, generate_multimodal, generate_planted, inject_outliers, make_multimodal_bags
from bnsvp.errors import ArgumentError
from bnsvp.synth import ScenarioLibrary


def _digest(dataset):
    digest = hashlib.sha256()
    for bag in dataset:
        digest.update(bag.id.encode())
        digest.update(bag.features.tobytes())
    return digest.hexdigest()


def test_planted_is_deterministic(tiny_scenario):
    """The same configuration yields the same dataset."""
    assert _digest(generate_planted(tiny_scenario)) == _digest(generate_planted(tiny_scenario))


def test_planted_seeds_differ(tiny_scenario):
    """Different seeds yield different datasets."""
    digests = {_digest(generate_planted(ScenarioConfig(**{**tiny_scenario.to_dict(), "seed": s}))) for s in range(10)}

    assert len(digests) == 10


def test_planted_labels_follow_bag_labels(tiny_dataset):
    """Positive bags contain anomalous segments, negative bags none."""
    for bag in tiny_dataset:
        if bag.is_abnormal:
            assert bag.segment_labels.sum() >= 1
        else:
            assert bag.segment_labels.sum() == 0
    assert [bag.id for bag in tiny_dataset][:2] == ["pos_000", "pos_001"]


def test_planted_negative_only():
    """Without positive bags every label is normal."""
    dataset = generate_planted(ScenarioConfig(n_bags_pos=0, n_bags_neg=3, n_segments=8, dim=2))

    assert all(bag.bag_label == 0 for bag in dataset)
    assert all(not bag.segment_labels.any() for bag in dataset)


def test_planted_three_modes_make_three_blocks():
    """Each positive bag holds one labeled block per mode, each inside its own slot."""
    config = ScenarioConfig(n_bags_pos=5, n_bags_neg=0, n_segments=30, dim=8, anomaly_modes=3, anomaly_fraction=0.3)
    length = config.block_length(3)

    for bag in generate_planted(config):
        for slot in np.split(bag.segment_labels, 3):
            edges = np.diff(np.concatenate(([0], slot, [0])))
            assert slot.sum() == length
            assert (edges == 1).sum() == 1


def test_library_means_are_separated():
    """Every pair of means lies mean_separation apart."""
    library = ScenarioLibrary(ScenarioConfig(dim=8, mean_separation=6.0))
    means = np.vstack([library.component_means.reshape(-1, 8), library.anomaly_means])

    distances = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
    off_diagonal = distances[~np.eye(len(means), dtype=bool)]
    assert np.allclose(off_diagonal, 6.0)


def test_library_seed_is_shared_across_bag_seeds():
    """Bag seeds change the draws but not the means."""
    first = ScenarioLibrary(ScenarioConfig(seed=1))
    second = ScenarioLibrary(ScenarioConfig(seed=2))

    assert np.array_equal(first.component_means, second.component_means)


@pytest.mark.parametrize("overlay", [False, True], ids=["replace", "overlay"])
def test_anomaly_blocks_follow_overlay(overlay):
    """Replaced anomalies sit on the anomaly mean, overlaid ones on a scene mean plus it."""
    config = ScenarioConfig(n_bags_pos=3, n_bags_neg=0, n_segments=16, dim=8, noise_std=1e-6, anomaly_overlay=overlay)
    library = ScenarioLibrary(config)
    scene_means = library.component_means.reshape(-1, 8)

    for bag in generate_planted(config):
        rows = bag.features[bag.segment_labels == 1]
        if overlay:
            base = rows - library.anomaly_means[0]
            nearest = np.linalg.norm(base[:, None, :] - scene_means[None, :, :], axis=2).min(axis=1)
            assert np.all(nearest < 1e-4)
        else:
            assert np.allclose(rows, library.anomaly_means[0], atol=1e-4)


@pytest.mark.parametrize(
    "overrides",
    [{"anomaly_fraction": 0.01, "n_segments": 8}, {"anomaly_fraction": 1.5}, {"n_bags_pos": -1}, {"dim": 0}],
    ids=["block-too-small", "fraction", "negative-count", "dim"],
)
def test_scenario_validation(overrides):
    """Infeasible scenarios are argument errors."""
    with pytest.raises(ArgumentError):
        ScenarioConfig(**overrides)


def test_inject_zero_outliers_is_identity(tiny_dataset):
    """Injecting no outliers returns the dataset unchanged."""
    assert inject_outliers(tiny_dataset, 0, seed=3) is tiny_dataset


def _changed_rows(before, after):
    return sum(int((~np.all(a.features == b.features, axis=1)).sum()) for a, b in zip(before, after))


def test_inject_outliers_touches_abnormal_bags_only(tiny_dataset):
    """Exactly ``count`` rows of abnormal bags change; normal bags and labels do not."""
    injected = inject_outliers(tiny_dataset, 20, seed=3)

    assert _changed_rows(tiny_dataset, injected) == 20
    for before, after in zip(tiny_dataset, injected):
        assert np.array_equal(before.segment_labels, after.segment_labels)
        if not before.is_abnormal:
            assert after is before


def test_inject_outliers_exhaustive(tiny_dataset):
    """Using every abnormal segment resamples every abnormal row."""
    total = sum(bag.n_segments for bag in tiny_dataset.positives())

    injected = inject_outliers(tiny_dataset, total, seed=0)

    assert _changed_rows(tiny_dataset, injected) == total


def test_inject_outliers_too_many(tiny_dataset):
    """More outliers than abnormal segments is an argument error."""
    with pytest.raises(ArgumentError):
        inject_outliers(tiny_dataset, 10_000, seed=0)


def test_multimodal_bag_counts():
    """The requested numbers of abnormal and normal bags are produced."""
    config = ScenarioConfig(n_bags_pos=4, n_bags_neg=3, n_segments=16, dim=8)

    dataset = generate_multimodal(config)

    assert len(dataset.positives()) == 4
    assert len(dataset.negatives()) == 3
    assert all(bag.n_segments == 16 for bag in dataset)
    assert all(bag.segment_labels.any() for bag in dataset.positives())


def test_multimodal_single_video_per_mode():
    """With one abnormal video per mode every abnormal bag uses all three."""
    modes = [
        generate_planted(ScenarioConfig(n_bags_pos=1, n_bags_neg=1, n_segments=8, dim=8, seed=s)) for s in range(3)
    ]

    dataset = make_multimodal_bags(modes, bags_pos=3, bags_neg=0, seed=0, n_segments=24)

    source_rows = sorted(tuple(row) for mode in modes for row in mode.positives()[0].features)
    for bag in dataset:
        assert sorted(tuple(row) for row in bag.features) == source_rows


def test_multimodal_requires_abnormal_modes():
    """Normal-only inputs cannot form abnormal bags."""
    normal_only = generate_planted(ScenarioConfig(n_bags_pos=0, n_bags_neg=2, n_segments=8, dim=2))

    with pytest.raises(ArgumentError):
        make_multimodal_bags([normal_only] * 3, bags_pos=1, bags_neg=1, seed=0)
