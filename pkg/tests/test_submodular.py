"""Tests for partition-induced similarity and facility-location selection."""

import itertools
import math

import numpy as np
import pytest

from bnsvp import RepresentativeSet, build_similarity, facility_location_value, greedy_representatives
from bnsvp.errors import ArgumentError
from bnsvp.partition import GaussianComponent
from bnsvp.submodular import (
    blockwise_facility_value,
    brute_force_max,
    diversified_objective,
    greedy_facility_location,
    marginal_gain,
    score_threshold,
    similarity_blocks,
)
from tests.conftest import identity_emissions, make_partition

DIAGONAL = np.array([[2.0, 0.0], [0.0, 3.0]])


def _block_diagonal(rng, sizes, low=0.0, high=1.0):
    n = sum(sizes)
    values = np.zeros((n, n))
    start = 0
    for size in sizes:
        block = rng.uniform(low, high, (size, size))
        values[start : start + size, start : start + size] = (block + block.T) / 2
        start += size
    return values


def _random_sizes(rng, max_blocks=4, max_n=12):
    blocks = int(rng.integers(1, max_blocks + 1))
    sizes = [1] * blocks
    for _ in range(int(rng.integers(0, max_n - blocks + 1))):
        sizes[int(rng.integers(blocks))] += 1
    return sizes


def test_similarity_zero_across_components():
    """Segments in different components are never similar."""
    features = np.array([[1.0, 1.0], [1.0, 1.0]])
    partition = make_partition([0, 1], [0, 0], identity_emissions([(0, 0), (1, 0)], 2))

    similarity = build_similarity(features, partition)

    assert similarity.values[0, 1] == 0.0
    assert similarity.values[1, 0] == 0.0


@pytest.mark.parametrize(
    "x_i, x_j, expected",
    [((1.0, 0.0), (0.0, 1.0), 0.0), ((1.0, 1.0), (1.0, 1.0), 2.0), ((1.0, 0.0), (-1.0, 0.0), 0.0)],
    ids=["orthogonal", "equal", "clamped"],
)
def test_similarity_within_component(x_i, x_j, expected):
    """Within a component the similarity is max(0, x_i^T Sigma^-1 x_j)."""
    partition = make_partition([0, 0], [0, 0], identity_emissions([(0, 0)], 2))

    similarity = build_similarity(np.array([x_i, x_j]), partition)

    assert similarity.values[0, 1] == pytest.approx(expected, abs=1e-12)


def test_similarity_uses_component_precision():
    """The bilinear form is taken in the component's own metric."""
    emissions = {(0, 0): GaussianComponent(mu=np.zeros(2), sigma=np.diag([2.0, 4.0]))}
    partition = make_partition([0, 0], [0, 0], emissions)

    similarity = build_similarity(np.array([[2.0, 4.0], [1.0, 1.0]]), partition)

    assert similarity.values[0, 1] == pytest.approx(2.0 * 1.0 / 2.0 + 4.0 * 1.0 / 4.0)


def test_similarity_missing_emission():
    """Occupied components need an atom."""
    partition = make_partition([0, 0], [0, 1], identity_emissions([(0, 0)], 2))

    with pytest.raises(ArgumentError, match="component 1"):
        build_similarity(np.ones((2, 2)), partition)


def test_similarity_blocks_match_dense_matrix(rng):
    """F on component blocks equals F on the dense matrix."""
    features = rng.standard_normal((9, 3))
    z, s = [0, 0, 0, 1, 1, 1, 0, 1, 2], [0, 1, 0, 0, 0, 1, 1, 0, 0]
    keys = sorted(set(zip(z, s)))
    partition = make_partition(z, s, identity_emissions(keys, 3))
    dense = build_similarity(features, partition)
    blocks = similarity_blocks(features, partition)

    for subset in [(), (0,), (1, 4), (0, 3, 5, 8), tuple(range(9))]:
        assert blockwise_facility_value(blocks, subset) == pytest.approx(facility_location_value(dense, subset))


@pytest.mark.parametrize(
    "subset, expected",
    [((0,), 2.0), ((0, 1), 5.0), ((), 0.0)],
    ids=["first", "both", "empty"],
)
def test_facility_location_value(subset, expected):
    """Hand-evaluated facility-location values."""
    assert facility_location_value(DIAGONAL, subset) == expected


def test_facility_location_out_of_range():
    """Indices must address a segment."""
    with pytest.raises(ArgumentError):
        facility_location_value(DIAGONAL, [2])


def test_marginal_gain_examples():
    """Gains from the empty set, a hand example and a dominated column."""
    assert marginal_gain(DIAGONAL, [], 1) == facility_location_value(DIAGONAL, [1])
    assert marginal_gain(DIAGONAL, [0], 1) == 3.0
    duplicated = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert marginal_gain(duplicated, [0], 1) == 0.0


def test_marginal_gain_rejects_member():
    """The candidate must not already be selected."""
    with pytest.raises(ArgumentError):
        marginal_gain(DIAGONAL, [0], 0)


def test_facility_location_is_monotone_submodular():
    """Gains are nonnegative and shrink as the base set grows."""
    rng = np.random.default_rng(99)
    for _ in range(200):
        n = int(rng.integers(3, 10))
        values = rng.uniform(0.0, 1.0, (n, n))
        order = rng.permutation(n)
        j = int(order[0])
        big = sorted(int(i) for i in order[1 : 1 + int(rng.integers(0, n))])
        small = [i for i in big if rng.random() < 0.5]

        small_gain = marginal_gain(values, small, j)
        big_gain = marginal_gain(values, big, j)

        assert big_gain >= -1e-12
        assert small_gain >= big_gain - 1e-12
        assert facility_location_value(values, big) >= facility_location_value(values, small) - 1e-12


def test_greedy_meets_approximation_bound():
    """The greedy value is within (1 - 1/e) of the exhaustive optimum."""
    rng = np.random.default_rng(7)
    for _ in range(200):
        sizes = _random_sizes(rng)
        values = _block_diagonal(rng, sizes)
        budget = len(sizes)

        _, optimum = brute_force_max(values, budget)
        _, greedy = greedy_facility_location(values, budget)

        assert greedy >= (1 - math.exp(-1)) * optimum - 1e-9


def test_optimum_takes_one_segment_per_component():
    """With uniform positive blocks the constrained optimum has one index per block."""
    rng = np.random.default_rng(3)
    for _ in range(100):
        sizes = _random_sizes(rng)
        n = sum(sizes)
        values = np.zeros((n, n))
        owner = np.repeat(np.arange(len(sizes)), sizes)
        for block, size in enumerate(sizes):
            members = np.flatnonzero(owner == block)
            values[np.ix_(members, members)] = rng.uniform(0.1, 1.0)

        subset, _ = brute_force_max(values, len(sizes))

        assert sorted(owner[list(subset)].tolist()) == list(range(len(sizes)))


def test_greedy_stops_without_gain():
    """Greedy never adds a segment that does not raise F."""
    picks, value = greedy_facility_location(np.zeros((4, 4)), 3)

    assert picks == []
    assert value == 0.0


@pytest.mark.parametrize(
    "kappa, expected",
    [(1, ((1,), 3.0)), (2, ((0, 1), 5.0)), (5, ((0, 1), 5.0))],
    ids=["one", "exact", "above-n"],
)
def test_brute_force_max(kappa, expected):
    """Exhaustive maximization by hand."""
    assert brute_force_max(DIAGONAL, kappa) == expected


def test_brute_force_all_zero():
    """All-zero similarity returns value 0 and the smallest subset."""
    subset, value = brute_force_max(np.zeros((3, 3)), 2)

    assert value == 0.0
    assert subset == ()


def test_brute_force_size_limit():
    """Bags above 20 segments must use the greedy."""
    with pytest.raises(ArgumentError, match="greedy"):
        brute_force_max(np.zeros((21, 21)), 2)


@pytest.mark.parametrize(
    "scores, percentile, expected",
    [([0.1, 0.2, 0.8], 35, 0.2), ([0.1, 0.2, 0.8], 0, 0.1), ([0.1, 0.2, 0.8], 100, 0.8), ([0.5], 50, 0.5)],
    ids=["hand", "zero", "full", "single"],
)
def test_score_threshold_nearest_rank(scores, percentile, expected):
    """Nearest-rank percentile of the bag scores."""
    assert score_threshold(scores, percentile) == expected


def test_greedy_representatives_hand_example():
    """Winners per component, filtered at the 35th percentile."""
    partition = make_partition([0, 0, 1], [0, 0, 0])

    rep_set = greedy_representatives(partition, [0.2, 0.8, 0.1], 35)

    assert rep_set.epsilon_threshold == 0.2
    assert rep_set.per_component_winner == {(0, 0): (1, 0.8), (1, 0): (2, 0.1)}
    assert rep_set.indices == (1,)


def test_greedy_representatives_zero_percentile(rng):
    """At percentile 0 each occupied component contributes exactly one segment."""
    z = rng.integers(0, 3, 20)
    s = rng.integers(0, 2, 20)
    partition = make_partition(z, s)

    rep_set = greedy_representatives(partition, rng.uniform(0.01, 0.99, 20), 0)

    assert len(rep_set) == partition.kappa_count
    assert sorted({(int(z[i]), int(s[i])) for i in rep_set.indices}) == partition.occupied()


def test_greedy_representatives_single_component(rng):
    """One component yields at most one representative, its top scorer."""
    scores = rng.uniform(0.01, 0.99, 10)

    rep_set = greedy_representatives(make_partition(np.zeros(10), np.zeros(10)), scores, 35)

    assert rep_set.indices == (int(np.argmax(scores)),)


def test_greedy_representatives_tie_takes_lowest_index():
    """Tied scores inside a component resolve to the lowest index."""
    rep_set = greedy_representatives(make_partition([0, 0, 0], [0, 0, 0]), [0.4, 0.9, 0.9], 0)

    assert rep_set.indices == (1,)


def test_greedy_representatives_follow_segment_order(rng):
    """Reordering the segments reorders the representatives and nothing else."""
    z = rng.integers(0, 3, 25)
    s = rng.integers(0, 2, 25)
    scores = rng.uniform(0.01, 0.99, 25)
    order = rng.permutation(25)

    original = greedy_representatives(make_partition(z, s), scores, 35)
    reordered = greedy_representatives(make_partition(z[order], s[order]), scores[order], 35)

    assert sorted(int(order[i]) for i in reordered.indices) == list(original.indices)
    assert reordered.epsilon_threshold == original.epsilon_threshold


def test_greedy_representatives_empty_partition():
    """An empty partition has nothing to select."""
    with pytest.raises(ArgumentError):
        greedy_representatives(make_partition([], []), [], 35)


def test_winners_maximize_facility_location_on_uniform_blocks():
    """On uniform within-component similarity the winners reach the optimum F."""
    z = [0, 0, 0, 1, 1, 2]
    s = [0, 0, 0, 0, 0, 0]
    partition = make_partition(z, s)
    values = np.zeros((6, 6))
    for members in ([0, 1, 2], [3, 4], [5]):
        values[np.ix_(members, members)] = 0.8

    rep_set = greedy_representatives(partition, [0.3, 0.6, 0.2, 0.9, 0.4, 0.5], 0)

    _, optimum = brute_force_max(values, 3)
    assert facility_location_value(values, rep_set.indices) == pytest.approx(optimum)


@pytest.mark.parametrize(
    "loss, subset, lam, expected",
    [(0.5, [0, 1], 0.0, 0.5), (0.5, [0, 1], 1.0, -4.5), (0.7, [], 2.0, 0.7)],
    ids=["no-lambda", "hand", "empty-set"],
)
def test_diversified_objective(loss, subset, lam, expected):
    """MIL loss minus lambda times F."""
    assert diversified_objective(loss, DIAGONAL, subset, lam) == pytest.approx(expected)


def test_representative_set_serializes():
    """The JSON form lists epsilon, indices and winners."""
    rep_set = greedy_representatives(make_partition([0, 0, 1], [0, 0, 0]), [0.2, 0.8, 0.1], 35)

    document = rep_set.to_dict()

    assert isinstance(rep_set, RepresentativeSet)
    assert document["indices"] == [1]
    assert document["epsilon"] == 0.2
    assert [w["index"] for w in document["winners"]] == [1, 2]
    assert list(itertools.chain.from_iterable(rep_set.per_component_winner)) == [0, 0, 1, 0]
