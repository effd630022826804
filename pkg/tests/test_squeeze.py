import numpy as np
import pytest

from app.core.errors import ShapeMismatchError
from app.models.squeeze import pad_to_multiple, padded_extents, squeeze, unsqueeze


def test_squeeze_raster_order_2d():
    """A 4x4 single-channel image with stride 2 gives four patches in raster order."""
    image = np.arange(16.0).reshape(1, 4, 4, 1)
    sites = squeeze(image, 2).numpy()
    assert sites.shape == (1, 4, 4)
    np.testing.assert_array_equal(sites[0, 0], [0, 1, 4, 5])
    np.testing.assert_array_equal(sites[0, 1], [2, 3, 6, 7])
    np.testing.assert_array_equal(sites[0, 2], [8, 9, 12, 13])
    np.testing.assert_array_equal(sites[0, 3], [10, 11, 14, 15])


def test_squeeze_feature_layout_with_channels():
    """Feature axis is (within-patch position) x (channel)."""
    image = np.arange(2 * 2 * 3, dtype=float).reshape(1, 2, 2, 3)
    sites = squeeze(image, 2).numpy()
    assert sites.shape == (1, 1, 12)
    np.testing.assert_array_equal(sites[0, 0], image[0].reshape(-1))


def test_squeeze_3d_shape():
    volume = np.random.default_rng(0).normal(size=(2, 4, 4, 4, 3))
    sites = squeeze(volume, 2).numpy()
    assert sites.shape == (2, 8, 24)
    np.testing.assert_array_equal(sites[1, 0], volume[1, :2, :2, :2].reshape(-1))


@pytest.mark.parametrize("shape,k", [((2, 8, 8, 1), 4), ((1, 6, 4, 2), 2), ((1, 4, 4, 4, 2), 2)])
def test_unsqueeze_inverts_squeeze(shape, k):
    x = np.random.default_rng(1).normal(size=shape)
    grid = tuple(extent // k for extent in shape[1:-1])
    back = unsqueeze(squeeze(x, k), grid, k).numpy()
    assert back.tobytes() == x.tobytes()


def test_unsqueeze_to_grid():
    sites = np.arange(2 * 4 * 3.0).reshape(2, 4, 3)
    grid = unsqueeze(sites, (2, 2)).numpy()
    assert grid.shape == (2, 2, 2, 3)
    np.testing.assert_array_equal(grid[0, 1, 0], sites[0, 2])


def test_indivisible_extent_is_rejected():
    with pytest.raises(ShapeMismatchError, match="stride 4"):
        squeeze(np.zeros((1, 6, 8, 1)), 4)
    with pytest.raises(ShapeMismatchError):
        unsqueeze(np.zeros((1, 5, 2)), (2, 2))


def test_padding():
    assert padded_extents((28, 28), 16) == (32, 32)
    images = np.ones((2, 3, 5, 1))
    padded = pad_to_multiple(images, 4)
    assert padded.shape == (2, 4, 8, 1)
    assert padded[:, :3, :5].sum() == images.sum()
    assert padded.sum() == images.sum()
    assert pad_to_multiple(images, 1) is images


def test_six_by_six_stride_three():
    """A 6x6x1 patch squeezed by 3 gives 4 sites of dimension 9."""
    image = np.arange(36.0).reshape(1, 6, 6, 1)
    sites = squeeze(image, 3).numpy()
    assert sites.shape == (1, 4, 9)
    np.testing.assert_array_equal(sites[0, 3], [21, 22, 23, 27, 28, 29, 33, 34, 35])


def test_stride_one_is_a_flatten():
    image = np.random.default_rng(2).normal(size=(2, 3, 5, 2))
    assert squeeze(image, 1).numpy().tobytes() == image.reshape(2, 15, 2).tobytes()
