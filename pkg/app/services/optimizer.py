from dataclasses import dataclass, field

import numpy as np

from app.core.errors import ShapeMismatchError
from app.core.tensor import Tensor


@dataclass
class AdamState:
    """First/second moments per parameter name plus the step counter."""

    step: int = 0
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return AdamState(
            self.step,
            {name: value.copy() for name, value in self.first.items()},
            {name: value.copy() for name, value in self.second.items()},
        )


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, Tensor],
    state: AdamState,
    lr: float = 5e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> dict[str, Tensor]:
    """One bias-corrected Adam update; returns new parameters and advances `state`."""
    for name, param in params.items():
        if name in grads and grads[name].shape != param.shape:
            raise ShapeMismatchError(f"{name}: gradient {grads[name].shape} does not match parameter {param.shape}")

    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step

    updated = {}
    for name, param in params.items():
        value = param.numpy()
        grad = grads[name].numpy() if name in grads else np.zeros_like(value)
        first = state.first.get(name)
        second = state.second.get(name)
        if first is None:
            first = np.zeros_like(value, dtype=np.float64)
            second = np.zeros_like(value, dtype=np.float64)
        first = beta1 * first + (1.0 - beta1) * grad
        second = beta2 * second + (1.0 - beta2) * (grad * grad)
        state.first[name], state.second[name] = first, second

        step = lr * (first / correction1) / (np.sqrt(second / correction2) + eps)
        updated[name] = Tensor(value - step, dtype=param.dtype)
    return updated
