import json
from pathlib import Path
from typing import Optional

from app.core.errors import ConfigError, ShapeMismatchError
from app.core.logging import get_logger, log_event, run_scope
from app.models.dataset import Dataset
from app.models.lotenet import LoTeNetModel
from app.repositories.checkpoint_repo import CheckpointRepository, model_dtype
from app.repositories.dataset_repo import DatasetRepository
from app.schemas.config import ModelConfig, RunConfig
from app.schemas.reports import RunReport
from app.services.progress import ProgressService
from app.services.splits import split
from app.use_cases.evaluator import evaluate
from app.use_cases.trainer import Trainer

logger = get_logger(__name__)

CHECKPOINT_NAME = "best.ltc"
HISTORY_NAME = "history.jsonl"
REPORT_NAME = "report.json"


def resolve_model_config(model: ModelConfig, dataset: Dataset) -> ModelConfig:
    """Fill input_shape from the data and check it agrees with the architecture."""
    if dataset.spatial_rank != model.spatial_rank:
        raise ConfigError(
            f"model.spatial_rank is {model.spatial_rank} but the data has {dataset.spatial_rank} spatial axes"
        )
    if model.input_shape is not None and list(model.input_shape) != dataset.sample_shape:
        raise ShapeMismatchError(f"model.input_shape {model.input_shape} != data shape {dataset.sample_shape}")
    if len(dataset) and int(dataset.labels.max()) >= max(model.n_classes, 2):
        raise ConfigError(f"labels reach {int(dataset.labels.max())} but model.n_classes is {model.n_classes}")
    return ModelConfig.model_validate({**model.model_dump(), "input_shape": dataset.sample_shape})


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


class TrainingRun:
    """Load data, split, train with early stopping, then checkpoint and report."""

    def __init__(
        self,
        dataset_repo: Optional[DatasetRepository] = None,
        checkpoint_repo: Optional[CheckpointRepository] = None,
        threads: Optional[int] = None,
    ):
        self.dataset_repo = dataset_repo or DatasetRepository()
        self.checkpoint_repo = checkpoint_repo or CheckpointRepository()
        self.threads = threads

    def prepare_splits(self, config: RunConfig) -> tuple[Dataset, Dataset, Optional[Dataset]]:
        dataset = self.dataset_repo.load(config.data)
        test_source = self.dataset_repo.load(config.data, test=True)
        tagged = split(dataset, config.data.split, config.seed)
        train, val = tagged.split("train"), tagged.split("val")
        test = test_source if test_source is not None else tagged.split("test")
        log_event(logger, "splits_prepared", train=len(train), val=len(val), test=len(test))
        return train, val, test

    def run(self, config: RunConfig, out_dir: Path) -> RunReport:
        with run_scope():
            return self._run(config, Path(out_dir))

    def _run(self, config: RunConfig, out_dir: Path) -> RunReport:
        train, val, test = self.prepare_splits(config)
        model_config = resolve_model_config(config.model, train)
        config = config.model_copy(update={"model": model_config})

        model = LoTeNetModel.init(model_config, dtype=model_dtype(config))
        out_dir.mkdir(parents=True, exist_ok=True)
        trainer = Trainer(
            config.training,
            seed=config.seed,
            progress=ProgressService(out_dir / HISTORY_NAME),
            threads=self.threads,
        )
        best, history = trainer.train(model, train, val)
        self.checkpoint_repo.save(best, config, out_dir / CHECKPOINT_NAME)

        report = RunReport(
            best_epoch=history.best_epoch,
            metric=config.training.metric.value,
            val=evaluate(best, val, "val", self.threads),
            test=evaluate(best, test, "test", self.threads) if test is not None and len(test) else None,
        )
        write_json(out_dir / REPORT_NAME, report.model_dump(mode="json"))
        logger.info(f"Training run finished: best epoch {history.best_epoch}, metric {history.best_metric:.4f}")
        return report
