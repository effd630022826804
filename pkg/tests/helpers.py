import numpy as np

from app.core.tensor import Tensor


def numeric_gradient(loss_fn, params: dict, name: str, positions, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of loss_fn(params) at the given flat positions of params[name]."""
    base = params[name].numpy()
    estimates = []
    for position in positions:
        values = []
        for sign in (1.0, -1.0):
            shifted = base.copy().reshape(-1)
            shifted[position] += sign * h
            trial = dict(params)
            trial[name] = Tensor(shifted.reshape(base.shape))
            values.append(loss_fn(trial))
        estimates.append((values[0] - values[1]) / (2.0 * h))
    return np.array(estimates)


def assert_gradients_close(analytic, numeric, rtol: float = 1e-4, floor: float = 1e-8) -> None:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    assert np.all(np.abs(analytic - numeric) <= rtol * scale + floor), (analytic, numeric)

