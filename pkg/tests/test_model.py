import numpy as np
import pytest

from app.core.autodiff import Tape
from app.core.errors import NormalizationError, ShapeMismatchError
from app.core.tensor import Tensor
from app.models.lotenet import (
    LoTeNetModel,
    forward_cost,
    plan_geometry,
    predicted_probability,
    probabilities_from_logits,
    summarize,
)
from app.schemas.config import FeatureMapKind, ModelConfig
from app.services.losses import cross_entropy, trace_cross_entropy

from tests.helpers import assert_gradients_close, numeric_gradient


def _config(**overrides):
    base = dict(
        layers=2,
        strides=[4],
        bond_dim=2,
        input_shape=[8, 8, 1],
        batch_norm=False,
        init_std=0.1,
    )
    base.update(overrides)
    return ModelConfig(**base)


def _images(count, shape, seed=0):
    return np.random.default_rng(seed).uniform(0.1, 1.0, size=(count, *shape))


def test_default_architecture_geometry():
    """128x128 with strides 8, 2, 2 leaves a 4x4 grid for the final block."""
    config = ModelConfig(input_shape=[128, 128, 1])
    plan = plan_geometry(config)
    assert [geometry.grid for geometry in plan] == [(16, 16), (8, 8), (4, 4), (4, 4)]
    assert [geometry.sites_per_block for geometry in plan] == [64, 4, 4, 16]
    assert [geometry.site_dim for geometry in plan] == [2, 5, 5, 5]
    assert plan[-1].is_final and plan[-1].out_dim == 2


@pytest.mark.parametrize("train", [False, True])
def test_default_model_starts_near_uniform(train):
    """A freshly initialized default 128x128 model gives finite logits and a loss near ln 2."""
    model = LoTeNetModel.init(ModelConfig(input_shape=[128, 128, 1]))
    images = np.random.default_rng(11).uniform(0.0, 1.0, size=(4, 128, 128, 1))
    logits = model.forward(images, train=train).numpy()
    assert logits.shape == (4, 2)
    assert np.all(np.isfinite(logits))
    loss = cross_entropy(logits, np.array([0, 1, 1, 0]))
    assert abs(loss - np.log(2.0)) <= 0.1 * np.log(2.0)


def test_noise_free_layers_are_bounded_without_batch_norm():
    """Identity cores weight each site by at most one, so outputs never exceed one."""
    config = ModelConfig(input_shape=[32, 32, 3], init_std=0.0, batch_norm=False)
    model = LoTeNetModel.init(config)
    images = np.random.default_rng(12).uniform(0.0, 1.0, size=(3, 32, 32, 3))
    for output in model.layer_outputs(images):
        assert np.all(output > 0.0) and np.all(output <= 1.0 + 1e-12)
    logits = model.forward(images).numpy()
    assert np.all(np.abs(logits) <= 1.0 + 1e-12)


def test_padding_to_stride_product():
    summary = summarize(_config(layers=3, strides=[4, 2], input_shape=[28, 28, 1]))
    assert summary.padded_shape == [32, 32, 1]
    with pytest.raises(ShapeMismatchError, match="layer 1"):
        plan_geometry(_config(input_shape=[10, 8, 1], pad_to_stride=False))


@pytest.mark.parametrize("batch_norm,shared", [(False, False), (True, False), (True, True)])
def test_summary_matches_instantiated_parameters(batch_norm, shared):
    config = _config(layers=3, strides=[2, 2], input_shape=[8, 8, 2], batch_norm=batch_norm,
                     share_weights_per_layer=shared)
    model = LoTeNetModel.init(config)
    assert model.summary().total_parameters == model.count_parameters()


def test_forward_shapes_2d_and_3d():
    model = LoTeNetModel.init(_config(n_classes=3))
    assert model.forward(_images(5, (8, 8, 1))).shape == (5, 3)
    volume = LoTeNetModel.init(_config(spatial_rank=3, strides=[2], input_shape=[4, 4, 4, 1]))
    assert volume.forward(_images(2, (4, 4, 4, 1))).shape == (2, 2)


def test_float32_model_stays_float32():
    model = LoTeNetModel.init(_config(), dtype=np.float32)
    assert model.forward(_images(2, (8, 8, 1))).dtype == np.float32


def test_loss_at_identity_init_is_log_two():
    """Identity cores give identical logits per class, so the loss is ln 2."""
    images = _images(6, (8, 8, 1))
    labels = np.array([0, 1, 0, 1, 1, 0])
    for batch_norm in (False, True):
        model = LoTeNetModel.init(_config(init_std=0.0, batch_norm=batch_norm, feature_map=FeatureMapKind.LINEAR))
        logits = model.forward(images, train=batch_norm).numpy()
        np.testing.assert_allclose(logits[:, 0], logits[:, 1])
        assert cross_entropy(logits, labels) == pytest.approx(np.log(2.0), abs=1e-12)


def test_multilinear_in_each_pixel():
    """Without a feature map or batch norm, halving one pixel halves the logits."""
    model = LoTeNetModel.init(_config(feature_map=FeatureMapKind.NONE))
    image = np.random.default_rng(3).uniform(0.9, 1.0, size=(1, 8, 8, 1))
    image[0, 0, 0, 0] = 0.8
    before = model.forward(image).numpy()
    image[0, 0, 0, 0] = 0.4
    after = model.forward(image).numpy()
    np.testing.assert_allclose(after, 0.5 * before, rtol=1e-10)


def test_blocks_act_on_their_own_patch():
    """Perturbing one layer-1 block changes only that patch's output."""
    model = LoTeNetModel.init(_config())
    images = _images(3, (8, 8, 1))
    before = model.layer_outputs(images)[0]
    params = model.parameters()
    core = params["layers.1.cores.0"].numpy().copy()
    core[1] += 0.5
    params["layers.1.cores.0"] = Tensor(core)
    model.load_parameters(params)
    after = model.layer_outputs(images)[0]
    changed = np.any(before != after, axis=(0, 2))
    assert changed.tolist() == [False, True, False, False]


def test_forward_cost_grows_linearly():
    """Multiply-adds per image fit a straight line in the pixel count."""
    sizes = [32, 64, 128]
    pixels = np.array([size * size for size in sizes], dtype=float)
    costs = np.array([forward_cost(ModelConfig(input_shape=[size, size, 1])) for size in sizes], dtype=float)
    slope, intercept = np.polyfit(pixels, costs, 1)
    fitted = slope * pixels + intercept
    r_squared = 1.0 - np.sum((costs - fitted) ** 2) / np.sum((costs - costs.mean()) ** 2)
    assert r_squared >= 0.95


def _gradient_check(model, images, labels, samples=3, seed=0):
    tape = Tape()
    loss = trace_cross_entropy(tape, model.trace(tape, images, train=True), labels)
    analytic = tape.backward(loss)
    params = model.parameters()

    def loss_fn(trial):
        model.load_parameters(trial)
        return cross_entropy(model.forward(images, train=True), labels)

    rng = np.random.default_rng(seed)
    for name, value in params.items():
        positions = rng.choice(value.size, size=min(samples, value.size), replace=False)
        numeric = numeric_gradient(loss_fn, params, name, positions)
        assert_gradients_close(analytic[name].numpy().reshape(-1)[positions], numeric)
    model.load_parameters(params)


def _mid_gray(count, shape, seed=0):
    return np.random.default_rng(seed).uniform(0.4, 0.6, size=(count, *shape))


def test_gradients_match_finite_differences():
    """16x16 input, three layers, bond 2, sinusoidal map, no batch norm."""
    config = _config(layers=3, strides=[4, 2], input_shape=[16, 16, 1])
    model = LoTeNetModel.init(config)
    _gradient_check(model, _mid_gray(4, (16, 16, 1)), np.array([0, 1, 1, 0]))


def test_gradients_with_batch_norm():
    model = LoTeNetModel.init(_config(batch_norm=True))
    _gradient_check(model, _images(4, (8, 8, 1), seed=5), np.array([1, 0, 1, 0]))


def test_gradients_single_logit():
    model = LoTeNetModel.init(_config(n_classes=1))
    _gradient_check(model, _mid_gray(4, (8, 8, 1), seed=6), np.array([1, 0, 0, 1]))


def test_chunked_logits_match_forward():
    model = LoTeNetModel.init(_config())
    images = _images(7, (8, 8, 1))
    np.testing.assert_allclose(model.logits(images, batch_size=3, threads=2), model.forward(images).numpy(), rtol=1e-12)


def test_input_validation():
    model = LoTeNetModel.init(_config())
    with pytest.raises(ShapeMismatchError, match="input"):
        model.forward(np.zeros((1, 16, 16, 1)))
    with pytest.raises(NormalizationError):
        model.forward(np.full((1, 8, 8, 1), 2.0))


def test_load_parameters_is_strict():
    model = LoTeNetModel.init(_config())
    params = model.parameters()
    params.pop("final.cores.0")
    with pytest.raises(ShapeMismatchError, match="missing"):
        model.load_parameters(params)
    params = model.parameters()
    params["final.cores.0"] = Tensor(np.zeros(3))
    with pytest.raises(ShapeMismatchError):
        model.load_parameters(params)


def test_copy_is_independent():
    model = LoTeNetModel.init(_config(batch_norm=True))
    snapshot = model.copy()
    model.forward(_images(4, (8, 8, 1)), train=True)
    assert model.norms[0].tracked_batches == 1
    assert snapshot.norms[0].tracked_batches == 0
    np.testing.assert_array_equal(snapshot.norms[0].running_var, np.ones(2))


def test_probabilities_and_ties():
    """A zero logit is class 0 for M=1; equal softmax logits pick the lowest class."""
    labels, probabilities = probabilities_from_logits(np.array([[0.0], [2.0]]))
    assert labels.tolist() == [0, 1]
    assert probabilities[0, 0] == 0.5
    labels, probabilities = probabilities_from_logits(np.array([[1.0, 1.0, 0.0]]))
    assert labels.tolist() == [0]
    np.testing.assert_allclose(probabilities.sum(axis=1), 1.0)
    assert predicted_probability(0, np.array([0.2])) == pytest.approx(0.8)
    assert predicted_probability(2, np.array([0.1, 0.2, 0.7])) == pytest.approx(0.7)
