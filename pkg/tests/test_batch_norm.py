import numpy as np
import pytest

from app.core.errors import ConfigError
from app.models.batch_norm import BN_MOMENTUM, BatchNormState, batch_norm


def test_train_mode_standardizes_each_channel():
    """Every channel leaves train mode with mean ~0 and variance ~1 over batch and sites."""
    rng = np.random.default_rng(0)
    x = rng.normal(loc=3.0, scale=10.0, size=(6, 4, 3))
    out = batch_norm(x, BatchNormState(3), train=True).numpy()
    assert np.all(np.abs(out.mean(axis=(0, 1))) <= 1e-7)
    np.testing.assert_allclose(out.var(axis=(0, 1)), 1.0, atol=1e-5)


def test_constant_channel_becomes_zero():
    x = np.ones((4, 2, 2))
    x[..., 1] = np.arange(8.0).reshape(4, 2)
    out = batch_norm(x, BatchNormState(2), train=True).numpy()
    np.testing.assert_array_equal(out[..., 0], 0.0)


def test_eval_mode_with_fresh_state_is_near_identity():
    x = np.random.default_rng(1).normal(size=(3, 5, 2))
    out = batch_norm(x, BatchNormState(2), train=False).numpy()
    np.testing.assert_allclose(out, x / np.sqrt(1.0 + 1e-5), rtol=1e-12)


def test_running_statistics_use_momentum_and_unbiased_variance():
    x = np.random.default_rng(2).normal(size=(4, 3, 2))
    state = BatchNormState(2)
    batch_norm(x, state, train=True)
    flat = x.reshape(-1, 2)
    np.testing.assert_allclose(state.running_mean, BN_MOMENTUM * flat.mean(axis=0), rtol=1e-12)
    expected_var = (1.0 - BN_MOMENTUM) + BN_MOMENTUM * flat.var(axis=0, ddof=1)
    np.testing.assert_allclose(state.running_var, expected_var, rtol=1e-12)
    assert state.tracked_batches == 1


def test_train_mode_needs_two_samples():
    with pytest.raises(ConfigError, match="at least 2"):
        batch_norm(np.ones((1, 4, 2)), BatchNormState(2), train=True)


def test_copy_detaches_running_statistics():
    state = BatchNormState(2)
    clone = state.copy()
    batch_norm(np.random.default_rng(3).normal(size=(3, 2, 2)), state, train=True)
    np.testing.assert_array_equal(clone.running_mean, 0.0)
    assert clone.parameter_count == 4
