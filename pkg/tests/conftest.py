"""Pytest fixtures for bnsvp tests."""

import logging

import numpy as np
import pytest
from click.testing import CliRunner

from bnsvp import Dataset, PartitionConfig, PartitionResult, ScenarioConfig, generate_planted, write_dataset
from bnsvp.partition import GaussianComponent

logger = logging.getLogger(__name__)


def make_partition(z, s, emissions=None):
    """PartitionResult carrying only assignments (and optional atoms)."""
    return PartitionResult(
        z=np.asarray(z, dtype=np.int64),
        s=np.asarray(s, dtype=np.int64),
        beta=np.zeros(0),
        pi=np.zeros((0, 0)),
        psi=np.zeros((0, 0)),
        emissions=dict(emissions or {}),
        log_likelihood_trace=np.zeros(0),
    )


def identity_emissions(keys, dim):
    """Unit-covariance atoms at the origin for the given (scene, component) keys."""
    return {key: GaussianComponent(mu=np.zeros(dim), sigma=np.eye(dim)) for key in keys}


@pytest.fixture
def rng():
    """Seeded generator for test inputs."""
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_scenario():
    """Small planted scenario: 4 + 4 bags of 16 segments in 3 dimensions."""
    return ScenarioConfig(
        n_bags_pos=4,
        n_bags_neg=4,
        n_segments=16,
        dim=3,
        n_scenes=2,
        components_per_scene=1,
        mean_separation=6.0,
        seed=1,
    )


@pytest.fixture(scope="session")
def tiny_dataset(tiny_scenario) -> Dataset:
    """Planted dataset built from ``tiny_scenario``."""
    return generate_planted(tiny_scenario)


@pytest.fixture
def fast_partition():
    """Sampler settings small enough for unit tests."""
    return PartitionConfig(max_states=4, max_components=2, n_iters=15, burn_in=5)


@pytest.fixture
def dataset_dir(tmp_path, tiny_dataset):
    """``tiny_dataset`` written to disk; yields the manifest path."""
    manifest = write_dataset(tiny_dataset, tmp_path / "data")
    logger.debug("Wrote test dataset to %s", manifest)
    return manifest


@pytest.fixture
def cli_runner():
    """Click test runner."""
    return CliRunner()
