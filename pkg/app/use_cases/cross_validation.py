from typing import Optional

import numpy as np

from app.core.logging import get_logger, log_event, run_scope
from app.models.lotenet import LoTeNetModel
from app.repositories.checkpoint_repo import model_dtype
from app.repositories.dataset_repo import DatasetRepository
from app.schemas.config import RunConfig
from app.schemas.reports import CrossValidationReport, FoldResult
from app.services.splits import kfold, split_indices
from app.use_cases.evaluator import evaluate
from app.use_cases.trainer import Trainer
from app.use_cases.training_run import resolve_model_config

logger = get_logger(__name__)


class CrossValidation:
    """k-fold protocol: per fold, carve a validation set from the training part,
    train with early stopping, and score balanced accuracy on the held-out fold."""

    def __init__(self, dataset_repo: Optional[DatasetRepository] = None, threads: Optional[int] = None):
        self.dataset_repo = dataset_repo or DatasetRepository()
        self.threads = threads

    def run(self, config: RunConfig, k: int = 5, val_fraction: float = 0.2) -> CrossValidationReport:
        dataset = self.dataset_repo.load(config.data)
        model_config = resolve_model_config(config.model, dataset)
        config = config.model_copy(update={"model": model_config})

        results = []
        with run_scope():
            for fold, (train_part, test_part) in enumerate(kfold(dataset.labels, k, config.seed, dataset.groups)):
                fold_seed = config.seed + fold
                fit_rel, val_rel = split_indices(
                    dataset.labels[train_part], [1.0 - val_fraction, val_fraction], fold_seed
                )
                train = dataset.subset(train_part[fit_rel], provenance=f"fold{fold}[train]")
                val = dataset.subset(train_part[val_rel], provenance=f"fold{fold}[val]")
                test = dataset.subset(test_part, provenance=f"fold{fold}[test]")

                model = LoTeNetModel.init(model_config, dtype=model_dtype(config))
                best, history = Trainer(config.training, seed=fold_seed, threads=self.threads).train(model, train, val)
                report = evaluate(best, test, "test", self.threads)
                results.append(FoldResult(fold=fold, best_epoch=history.best_epoch, test=report))
                log_event(logger, "fold_completed", fold=fold, balanced_accuracy=report.balanced_accuracy)

        scores = np.array([result.test.balanced_accuracy for result in results])
        return CrossValidationReport(folds=results, mean=float(scores.mean()), std=float(scores.std()))
