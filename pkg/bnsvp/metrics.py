"""Segment-level ROC curves, AUC and metric reports."""

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import rankdata

from .data import Dataset, PathLike
from .errors import ArgumentError, FormatError, ValidationError
from .training import ScorerModel, score_bag

logger = logging.getLogger(__name__)

_NAME_PATTERN = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass(frozen=True)
class RocResult:
    """ROC curve from (0, 0) to (1, 1) and the area beneath it."""

    points: tuple[tuple[float, float], ...]
    auc: float

    @property
    def fpr(self) -> NDArray[np.float64]:
        return np.array([point[0] for point in self.points])

    @property
    def tpr(self) -> NDArray[np.float64]:
        return np.array([point[1] for point in self.points])

    def to_dict(self) -> dict[str, Any]:
        return {"auc": self.auc, "points": [list(point) for point in self.points]}


def _validated(scores: ArrayLike, labels: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    values = np.asarray(scores, dtype=np.float64).reshape(-1)
    truth = np.asarray(labels).reshape(-1)
    if values.shape != truth.shape:
        raise ArgumentError(f"Got {values.size} scores for {truth.size} labels")
    if not np.isin(truth, (0, 1)).all():
        raise ArgumentError("Labels must be 0 or 1")
    truth = truth.astype(np.int64)
    n_pos = int(truth.sum())
    if n_pos == 0 or n_pos == truth.size:
        raise ArgumentError("ROC needs at least one positive and one negative label")
    return values, truth


def roc_auc(scores: ArrayLike, labels: ArrayLike) -> RocResult:
    """ROC curve over the distinct score values and its trapezoidal area.

    Tied scores move the curve diagonally, which credits each tied
    positive/negative pair with one half.

    Raises:
        ArgumentError: On length mismatch or single-class labels
    """
    values, truth = _validated(scores, labels)
    order = np.argsort(-values, kind="stable")
    ordered, hits = values[order], truth[order]
    # last index of every run of equal scores
    cuts = np.r_[np.flatnonzero(np.diff(ordered)), ordered.size - 1]
    true_pos = np.cumsum(hits)[cuts]
    false_pos = cuts + 1 - true_pos
    tpr = np.r_[0.0, true_pos / true_pos[-1]]
    fpr = np.r_[0.0, false_pos / false_pos[-1]]

    area = 0.0
    for i in range(1, fpr.size):
        area += (fpr[i] - fpr[i - 1]) * (tpr[i] + tpr[i - 1]) / 2.0
    points = tuple((float(f), float(t)) for f, t in zip(fpr, tpr))
    return RocResult(points=points, auc=float(area))


def mann_whitney_auc(scores: ArrayLike, labels: ArrayLike) -> float:
    """AUC as the normalized Mann-Whitney U statistic with average ranks for ties."""
    values, truth = _validated(scores, labels)
    ranks = rankdata(values)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    u_statistic = float(ranks[truth == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def evaluate_model(model: ScorerModel, dataset: Dataset) -> RocResult:
    """Score every segment of ``dataset`` and compare against its segment labels.

    Normal bags without labels count as all-normal.

    Raises:
        ValidationError: If an abnormal bag has no segment labels
    """
    scores, labels = [], []
    for bag in dataset:
        if bag.segment_labels is None:
            if bag.is_abnormal:
                raise ValidationError(f"Abnormal bag '{bag.id}' has no segment labels to evaluate against")
            labels.append(np.zeros(bag.n_segments, dtype=np.int64))
        else:
            labels.append(bag.segment_labels)
        scores.append(score_bag(model, bag))
    result = roc_auc(np.concatenate(scores), np.concatenate(labels))
    logger.info("Evaluated %d bags of '%s': AUC %.4f", len(dataset), dataset.name, result.auc)
    return result


def _check_name(name: str) -> str:
    if not _NAME_PATTERN.match(name):
        raise ArgumentError(f"Result name {name!r} may only contain letters, digits, '.', '_' and '-'")
    return name


def write_eval_result(name: str, result: RocResult, directory: PathLike) -> Path:
    """Write ``eval_<name>.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"eval_{_check_name(name)}.json"
    path.write_text(json.dumps({"name": name, **result.to_dict()}, indent=2), encoding="utf-8")
    return path


def read_eval_result(path: PathLike) -> tuple[str, RocResult]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Evaluation file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
        points = tuple((float(f), float(t)) for f, t in document["points"])
        return str(document["name"]), RocResult(points=points, auc=float(document["auc"]))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Malformed evaluation file {path}: {e}") from e


def _plot_svg(name: str, result: RocResult, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "bnsvp", "svg.fonttype": "none"}):
        figure, axis = plt.subplots(figsize=(4, 4))
        axis.plot(result.fpr, result.tpr, label=f"{name} (AUC {result.auc:.3f})")
        axis.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
        axis.set_xlabel("False positive rate")
        axis.set_ylabel("True positive rate")
        axis.set_xlim(0, 1)
        axis.set_ylim(0, 1)
        axis.legend(loc="lower right")
        figure.savefig(path, format="svg", metadata={"Date": None})
        plt.close(figure)


def report(results: Sequence[tuple[str, RocResult]], out_dir: PathLike, svg: bool = False) -> list[Path]:
    """Write ``metrics.csv`` and one ``roc_<name>.csv`` per result.

    Args:
        results: (name, RocResult) pairs, written in the given order
        out_dir: Output directory, created if needed
        svg: Also draw ``roc_<name>.svg`` per result

    Returns:
        Paths of the written files

    Raises:
        ArgumentError: If ``results`` is empty or a name is unusable as a file name
    """
    if not results:
        raise ArgumentError("report needs at least one result")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    metrics_path = out_dir / "metrics.csv"
    lines = ["name,auc"] + [f"{_check_name(name)},{result.auc!r}" for name, result in results]
    metrics_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(metrics_path)

    for name, result in results:
        curve_path = out_dir / f"roc_{name}.csv"
        rows = ["fpr,tpr"] + [f"{fpr!r},{tpr!r}" for fpr, tpr in result.points]
        curve_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        written.append(curve_path)
        if svg:
            svg_path = out_dir / f"roc_{name}.svg"
            _plot_svg(name, result, svg_path)
            written.append(svg_path)

    logger.info("Wrote report for %d results to %s", len(results), out_dir)
    return written
