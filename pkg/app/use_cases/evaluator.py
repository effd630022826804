from typing import Optional

import numpy as np

from app.core.errors import MetricError
from app.core.logging import get_logger, log_event
from app.models.dataset import Dataset
from app.models.lotenet import LoTeNetModel, probabilities_from_logits
from app.schemas.config import EarlyStoppingMetric
from app.schemas.reports import MetricsReport
from app.services.metrics import accuracy, metrics_report, safe_auc

logger = get_logger(__name__)


def evaluate(
    model: LoTeNetModel,
    dataset: Dataset,
    split: str,
    threads: Optional[int] = None,
    batch_size: Optional[int] = None,
) -> MetricsReport:
    """Eval-mode metrics for one split; chunks run on the worker pool."""
    logits = model.logits(dataset.images, batch_size=batch_size, threads=threads)
    report = metrics_report(split, logits, dataset.labels)
    log_event(
        logger,
        "split_evaluated",
        split=split,
        count=report.count,
        accuracy=report.accuracy,
        auc=report.auc,
    )
    return report


def validation_metric(
    model: LoTeNetModel,
    dataset: Dataset,
    metric: EarlyStoppingMetric,
    threads: Optional[int] = None,
) -> float:
    logits = model.logits(dataset.images, threads=threads)
    predictions, probabilities = probabilities_from_logits(logits)
    if metric is EarlyStoppingMetric.ACCURACY:
        return accuracy(predictions, dataset.labels)
    value = safe_auc(probabilities, np.asarray(dataset.labels))
    if value is None:
        raise MetricError("validation AUC is undefined: the validation split holds a single class")
    return value
