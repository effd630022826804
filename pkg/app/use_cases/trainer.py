import time
from typing import Optional

import numpy as np

from app.core.autodiff import Tape
from app.core.errors import DivergenceError, NonFiniteError, SplitError
from app.core.logging import get_logger
from app.models.dataset import Dataset
from app.models.lotenet import LoTeNetModel
from app.models.train_state import TrainState
from app.schemas.config import TrainingConfig
from app.schemas.reports import EpochRecord, TrainingHistory
from app.services.augment import augment_batch
from app.services.losses import trace_cross_entropy
from app.services.optimizer import adam_step
from app.services.progress import ProgressService
from app.use_cases.evaluator import validation_metric
from app.workers.pool import chunk_ranges

logger = get_logger(__name__)


def minibatches(count: int, batch_size: int) -> list[tuple[int, int]]:
    """Contiguous batches; a trailing batch of one joins the previous batch."""
    ranges = chunk_ranges(count, batch_size)
    if len(ranges) > 1 and ranges[-1][1] - ranges[-1][0] == 1:
        ranges[-2:] = [(ranges[-2][0], ranges[-1][1])]
    return ranges


class Trainer:
    """Minibatch Adam training with validation-based early stopping."""

    def __init__(
        self,
        config: TrainingConfig,
        seed: int = 0,
        progress: Optional[ProgressService] = None,
        threads: Optional[int] = None,
    ):
        self.config = config
        self.seed = seed
        self.progress = progress or ProgressService()
        self.threads = threads

    def train_step(self, model: LoTeNetModel, state: TrainState, images: np.ndarray, labels: np.ndarray) -> float:
        """Forward, loss, backward and one Adam update on a fresh tape."""
        tape = Tape()
        logits = model.trace(tape, images, train=True)
        loss = trace_cross_entropy(tape, logits, labels)
        grads = tape.backward(loss)
        model.load_parameters(
            adam_step(
                model.parameters(),
                grads,
                state.adam,
                lr=self.config.lr,
                beta1=self.config.beta1,
                beta2=self.config.beta2,
                eps=self.config.eps,
            )
        )
        return loss.value.item()

    def run_epoch(self, model: LoTeNetModel, state: TrainState, train: Dataset) -> float:
        batch_size = self.config.resolve_batch_size(train.spatial_rank)
        order = state.rng.permutation(len(train))
        total = 0.0
        for batch_index, (start, stop) in enumerate(minibatches(len(train), batch_size)):
            picked = order[start:stop]
            images = train.images[picked]
            if self.config.augment and train.spatial_rank == 2:
                images = augment_batch(images, state.rng)
            try:
                loss = self.train_step(model, state, images, train.labels[picked])
            except NonFiniteError as error:
                raise DivergenceError(f"epoch {state.epoch} batch {batch_index}: {error}") from error
            total += loss * len(picked)
        return total / len(train)

    def train(self, model: LoTeNetModel, train: Dataset, val: Dataset) -> tuple[LoTeNetModel, TrainingHistory]:
        """Train until patience runs out or max_epochs; returns the best-validation snapshot."""
        if len(train) == 0 or len(val) == 0:
            raise SplitError(f"training needs non-empty splits, got train={len(train)} val={len(val)}")

        state = TrainState.create(self.seed)
        history = TrainingHistory()
        best = model.copy()
        logger.info(
            f"Training {model.count_parameters()} parameters on {len(train)} samples, "
            f"validating on {len(val)}"
        )

        while state.epoch < self.config.max_epochs:
            state.epoch += 1
            started = time.perf_counter()
            train_loss = self.run_epoch(model, state, train)
            metric = validation_metric(model, val, self.config.metric, self.threads)
            improved = state.observe(metric)
            if improved:
                best = model.copy()

            record = EpochRecord(
                epoch=state.epoch,
                train_loss=train_loss,
                val_metric=metric,
                elapsed_seconds=time.perf_counter() - started,
            )
            history.records.append(record)
            self.progress.publish_epoch(record, improved, state.epochs_since_improvement)

            if state.epochs_since_improvement >= self.config.patience:
                history.stopped_early = state.epoch < self.config.max_epochs
                break

        history.best_epoch = state.best_epoch
        history.best_metric = state.best_metric
        self.progress.publish_stop(state.epoch, state.best_epoch, history.stopped_early)
        return best, history
