from dataclasses import dataclass, field

import numpy as np

from app.core.autodiff import Tape, Variable, batch_statistics
from app.core.errors import ConfigError
from app.core.tensor import Tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class BatchNormState:
    """Learned scale/shift plus running statistics for one layer's nu channels."""

    channels: int
    scale: Tensor = None
    shift: Tensor = None
    running_mean: np.ndarray = None
    running_var: np.ndarray = None
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS
    tracked_batches: int = field(default=0)

    def __post_init__(self) -> None:
        if self.scale is None:
            self.scale = Tensor(np.ones(self.channels))
        if self.shift is None:
            self.shift = Tensor(np.zeros(self.channels))
        if self.running_mean is None:
            self.running_mean = np.zeros(self.channels)
        if self.running_var is None:
            self.running_var = np.ones(self.channels)

    @property
    def parameter_count(self) -> int:
        return 2 * self.channels

    def update_running(self, mean: np.ndarray, var: np.ndarray, count: int) -> None:
        unbiased = var * count / max(count - 1, 1)
        self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
        self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * unbiased
        self.tracked_batches += 1

    def copy(self) -> "BatchNormState":
        return BatchNormState(
            self.channels,
            self.scale,
            self.shift,
            self.running_mean.copy(),
            self.running_var.copy(),
            self.momentum,
            self.eps,
            self.tracked_batches,
        )


def trace_batch_norm(
    tape: Tape,
    x: Variable,
    state: BatchNormState,
    scale: Variable,
    shift: Variable,
    train: bool,
) -> Variable:
    """Normalize (batch, sites, nu) per channel over the batch and site axes.

    Train mode uses batch statistics and folds them into the running
    statistics; eval mode uses the running statistics.
    """
    if train:
        if x.shape[0] < 2:
            raise ConfigError("batch norm in train mode needs a batch of at least 2")
        values = x.numpy()
        mean, var = batch_statistics(values)
        out = tape.batch_norm(x, scale, shift, train=True, eps=state.eps)
        state.update_running(mean, var, values.size // values.shape[-1])
        return out
    return tape.batch_norm(
        x, scale, shift, train=False, eps=state.eps, mean=state.running_mean, var=state.running_var
    )


def batch_norm(x, state: BatchNormState, train: bool) -> Tensor:
    tape = Tape(record=False)
    return trace_batch_norm(
        tape, Tape.constant(Tensor(x)), state, Tape.constant(state.scale), Tape.constant(state.shift), train
    ).value
