from dataclasses import dataclass, field

import numpy as np

from app.services.optimizer import AdamState


@dataclass
class TrainState:
    """Optimizer moments, epoch counters and early-stopping bookkeeping."""

    rng: np.random.Generator
    adam: AdamState = field(default_factory=AdamState)
    epoch: int = 0
    best_metric: float = float("-inf")
    best_epoch: int = 0
    epochs_since_improvement: int = 0

    @classmethod
    def create(cls, seed: int) -> "TrainState":
        return cls(rng=np.random.default_rng(seed))

    def observe(self, metric: float) -> bool:
        """Record this epoch's validation metric; only a strict improvement resets patience."""
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_epoch = self.epoch
            self.epochs_since_improvement = 0
            return True
        self.epochs_since_improvement += 1
        return False
