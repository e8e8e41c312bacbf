"""Tests for ROC/AUC evaluation and reports."""

import itertools

import numpy as np
import pytest

from bnsvp import Bag, Dataset, ScorerModel, evaluate_model, mann_whitney_auc, report, roc_auc
from bnsvp.errors import ArgumentError, ValidationError
from bnsvp.metrics import read_eval_result, write_eval_result


def _pairwise_auc(scores, labels):
    positives = [s for s, y in zip(scores, labels) if y == 1]
    negatives = [s for s, y in zip(scores, labels) if y == 0]
    credit = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(positives, negatives))
    return credit / (len(positives) * len(negatives))


@pytest.mark.parametrize(
    "scores, labels, expected",
    [([0.9, 0.1], [1, 0], 1.0), ([0.4, 0.4, 0.4], [1, 0, 1], 0.5), ([0.1, 0.9], [1, 0], 0.0)],
    ids=["perfect", "all-tied", "inverted"],
)
def test_roc_auc_examples(scores, labels, expected):
    """Hand-evaluated AUCs, with ties credited one half."""
    assert roc_auc(scores, labels).auc == pytest.approx(expected, abs=1e-12)


def test_roc_curve_shape(rng):
    """Curves run from (0, 0) to (1, 1) and never decrease."""
    result = roc_auc(rng.uniform(size=30), rng.permutation(np.arange(30) % 2))

    fpr, tpr = result.fpr, result.tpr
    assert result.points[0] == (0.0, 0.0)
    assert result.points[-1] == (1.0, 1.0)
    assert np.all(np.diff(fpr) >= 0)
    assert np.all(np.diff(tpr) >= 0)
    assert result.auc == pytest.approx(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2), abs=1e-12)


def test_roc_auc_matches_pairwise_count():
    """Trapezoidal AUC equals brute-force pairwise counting, ties included."""
    rng = np.random.default_rng(17)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 10, n) / 10.0

        expected = _pairwise_auc(scores, labels)
        assert abs(roc_auc(scores, labels).auc - expected) < 1e-10
        assert abs(mann_whitney_auc(scores, labels) - expected) < 1e-10


def test_roc_auc_is_antisymmetric(rng):
    """Negating untied scores flips the AUC."""
    scores = rng.uniform(size=40)
    labels = np.arange(40) % 2

    assert roc_auc(scores, labels).auc + roc_auc(-scores, labels).auc == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize(
    "scores, labels",
    [([0.1, 0.2], [1, 1]), ([0.1, 0.2], [0, 0]), ([0.1], [0, 1])],
    ids=["all-positive", "all-negative", "length-mismatch"],
)
def test_roc_auc_rejects_invalid_labels(scores, labels):
    """Single-class or mismatched inputs are argument errors."""
    with pytest.raises(ArgumentError):
        roc_auc(scores, labels)


def test_evaluate_model_scores_every_segment():
    """Segment scores of all bags are ranked against their labels."""
    dataset = Dataset(
        bags=(
            Bag(id="p", features=[[2.0], [-1.0]], bag_label=1, segment_labels=[1, 0]),
            Bag(id="n", features=[[-2.0], [0.0]], bag_label=0),
        )
    )

    result = evaluate_model(ScorerModel(weight=np.array([1.0])), dataset)

    assert result.auc == 1.0


def test_evaluate_model_needs_abnormal_labels():
    """Abnormal bags without segment labels cannot be evaluated."""
    dataset = Dataset(bags=(Bag(id="p", features=[[1.0]], bag_label=1), Bag(id="n", features=[[0.0]], bag_label=0)))

    with pytest.raises(ValidationError, match="'p'"):
        evaluate_model(ScorerModel(weight=np.array([1.0])), dataset)


def test_report_writes_files(tmp_path):
    """One result produces metrics.csv and its curve file."""
    result = roc_auc([0.9, 0.1], [1, 0])

    written = report([("run", result)], tmp_path)

    assert [path.name for path in written] == ["metrics.csv", "roc_run.csv"]
    assert (tmp_path / "metrics.csv").read_text().splitlines() == ["name,auc", "run,1.0"]
    assert (tmp_path / "roc_run.csv").read_text().splitlines()[0] == "fpr,tpr"


def test_report_is_byte_identical(tmp_path):
    """Re-running a report reproduces the same bytes."""
    results = [("a", roc_auc([0.3, 0.7, 0.5], [0, 1, 1])), ("b", roc_auc([0.6, 0.2], [0, 1]))]

    first = [path.read_bytes() for path in report(results, tmp_path / "one")]
    second = [path.read_bytes() for path in report(results, tmp_path / "two")]

    assert first == second


def test_report_svg(tmp_path):
    """The optional plot is written next to the curve."""
    written = report([("run", roc_auc([0.9, 0.1], [1, 0]))], tmp_path, svg=True)

    assert (tmp_path / "roc_run.svg") in written
    assert (tmp_path / "roc_run.svg").read_text().lstrip().startswith("<?xml")


def test_report_requires_results(tmp_path):
    """An empty result list is an argument error."""
    with pytest.raises(ArgumentError):
        report([], tmp_path)


def test_eval_result_round_trip(tmp_path):
    """Evaluation files restore name, AUC and curve."""
    result = roc_auc([0.3, 0.7, 0.5], [0, 1, 1])

    name, restored = read_eval_result(write_eval_result("topk_3", result, tmp_path))

    assert name == "topk_3"
    assert restored == result


def test_eval_result_rejects_bad_name(tmp_path):
    """Result names must be usable as file names."""
    with pytest.raises(ArgumentError):
        write_eval_result("../escape", roc_auc([0.9, 0.1], [1, 0]), tmp_path)
