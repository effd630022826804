import json
from pathlib import Path
from typing import Optional

from app.core.logging import get_logger, log_event
from app.schemas.reports import EpochRecord

logger = get_logger(__name__)


class ProgressService:
    """Publishes per-epoch training progress to the log and to history.jsonl."""

    def __init__(self, history_path: Optional[Path] = None):
        self.history_path = Path(history_path) if history_path else None
        if self.history_path is not None:
            self.history_path.parent.mkdir(parents=True, exist_ok=True)
            self.history_path.write_text("")

    def publish_epoch(self, record: EpochRecord, improved: bool, epochs_since_improvement: int) -> None:
        """Append the record as one JSON line and emit an epoch_completed event."""
        if self.history_path is not None:
            with self.history_path.open("a") as handle:
                handle.write(json.dumps(record.model_dump()) + "\n")

        log_event(
            logger,
            "epoch_completed",
            epoch=record.epoch,
            train_loss=record.train_loss,
            val_metric=record.val_metric,
            improved=improved,
            epochs_since_improvement=epochs_since_improvement,
        )

    def publish_stop(self, epoch: int, best_epoch: int, early: bool) -> None:
        log_event(logger, "early_stop" if early else "max_epochs_reached", epoch=epoch, best_epoch=best_epoch)

    def read_history(self) -> list[EpochRecord]:
        if self.history_path is None or not self.history_path.exists():
            return []
        return [
            EpochRecord.model_validate_json(line)
            for line in self.history_path.read_text().splitlines()
            if line.strip()
        ]
