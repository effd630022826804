"""Classification metrics: rank-sum AUC, balanced accuracy, confusion counts."""
from typing import Optional

import numpy as np

from app.core.errors import MetricError
from app.models.lotenet import probabilities_from_logits
from app.schemas.reports import MetricsReport
from app.services.losses import cross_entropy


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_values = values[order]
    _, first, counts = np.unique(sorted_values, return_index=True, return_counts=True)
    tied = first + (counts + 1) / 2.0  # mean of first+1 .. first+count
    ranks = np.empty(len(values), dtype=np.float64)
    ranks[order] = np.repeat(tied, counts)
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score+ > score-) + P(tie) / 2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auc needs at least one positive and one negative sample")
    rank_sum = average_ranks(scores)[labels].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_auc(probabilities: np.ndarray, labels) -> float:
    """One-vs-rest AUC averaged over the classes present in `labels`."""
    labels = np.asarray(labels)
    values = []
    for cls in range(probabilities.shape[1]):
        positives = labels == cls
        if positives.any() and not positives.all():
            values.append(auc(probabilities[:, cls], positives))
    if not values:
        raise MetricError("auc needs at least two classes")
    return float(np.mean(values))


def confusion(predictions, labels, n_classes: int) -> list[list[int]]:
    """confusion[true][predicted]."""
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (np.asarray(labels, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
    return matrix.tolist()


def accuracy(predictions, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(np.asarray(predictions) == labels))


def _mean_recall(predictions: np.ndarray, labels: np.ndarray) -> float:
    recalls = [np.mean(predictions[labels == cls] == cls) for cls in np.unique(labels)]
    return float(np.mean(recalls)) if recalls else 0.0


def balanced_accuracy(predictions, labels) -> float:
    """Mean per-class recall; for two classes, (sensitivity + specificity) / 2."""
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise MetricError("balanced accuracy needs both classes present")
    return _mean_recall(predictions, labels)


def score_vector(probabilities: np.ndarray) -> np.ndarray:
    """Positive-class score for binary problems (M=1 sigmoid or M=2 softmax)."""
    return probabilities[:, 0] if probabilities.shape[1] == 1 else probabilities[:, 1]


def safe_auc(probabilities: np.ndarray, labels: np.ndarray) -> Optional[float]:
    try:
        if probabilities.shape[1] <= 2:
            return auc(score_vector(probabilities), labels == 1)
        return macro_auc(probabilities, labels)
    except MetricError:
        return None


def metrics_report(split: str, logits: np.ndarray, labels) -> MetricsReport:
    labels = np.asarray(labels, dtype=np.int64)
    predictions, probabilities = probabilities_from_logits(logits)
    n_classes = max(logits.shape[1], 2)
    return MetricsReport(
        split=split,
        count=len(labels),
        loss=cross_entropy(logits, labels) if len(labels) else 0.0,
        accuracy=accuracy(predictions, labels),
        balanced_accuracy=_mean_recall(predictions, labels),
        auc=safe_auc(probabilities, labels),
        confusion=confusion(predictions, labels, n_classes),
    )
