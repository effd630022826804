import dataclasses
import gzip
import struct

import numpy as np
import pytest

from app.core.errors import ChecksumError, ConfigError, FormatError, MissingFileError, NormalizationError, SplitError
from app.models.dataset import Dataset
from app.repositories.dataset_repo import DatasetRepository, encode_idx, parse_idx
from app.schemas.config import DataConfig
from app.services.splits import extract_slices, kfold, largest_remainder, split, split_indices
from app.services.synthetic import gen_synthetic


# idx ----------------------------------------------------------------------------

def test_parse_idx_header():
    """A 2x3 u8 payload decodes to its declared shape."""
    raw = bytes([0, 0, 0x08, 2]) + struct.pack(">2I", 2, 3) + bytes(range(6))
    array = parse_idx(raw)
    assert array.shape == (2, 3)
    assert array.tolist() == [[0, 1, 2], [3, 4, 5]]


@pytest.mark.parametrize(
    "raw,message",
    [
        (bytes([1, 0, 0x08, 1]) + struct.pack(">I", 1) + b"\x00", "magic"),
        (bytes([0, 0, 0x0D, 1]) + struct.pack(">I", 1) + b"\x00", "u8"),
        (bytes([0, 0, 0x08, 1]) + struct.pack(">I", 4) + b"\x00\x01", "payload"),
        (bytes([0, 0, 0x08, 2]) + struct.pack(">2I", 0, 3), "size 0"),
        (bytes([0, 0, 0x08, 3]) + b"\x00\x00", "truncated"),
    ],
)
def test_parse_idx_rejects_bad_files(raw, message):
    with pytest.raises(FormatError, match=message):
        parse_idx(raw)


def test_load_idx_scales_and_adds_channel(tmp_path):
    pixels = np.array([[[0, 255], [51, 102]]], dtype=np.uint8)
    (tmp_path / "images.idx").write_bytes(encode_idx(pixels))
    (tmp_path / "labels.idx.gz").write_bytes(gzip.compress(encode_idx(np.array([1], dtype=np.uint8))))
    dataset = DatasetRepository().load_idx(tmp_path / "images.idx", tmp_path / "labels.idx.gz")
    assert dataset.images.shape == (1, 2, 2, 1)
    assert dataset.images.dtype == np.float32
    np.testing.assert_allclose(dataset.images[0, :, :, 0], [[0.0, 1.0], [0.2, 0.4]], rtol=1e-6)
    assert dataset.labels.tolist() == [1]


def test_load_idx_count_mismatch(tmp_path):
    (tmp_path / "images.idx").write_bytes(encode_idx(np.zeros((2, 2, 2))))
    (tmp_path / "labels.idx").write_bytes(encode_idx(np.zeros(3)))
    with pytest.raises(FormatError, match="2 images but 3 labels"):
        DatasetRepository().load_idx(tmp_path / "images.idx", tmp_path / "labels.idx")
    with pytest.raises(MissingFileError):
        DatasetRepository().load_idx(tmp_path / "missing.idx", tmp_path / "labels.idx")


def test_save_idx_round_trip(tmp_path):
    repo = DatasetRepository()
    pixels = np.random.default_rng(0).integers(0, 256, size=(3, 4, 5)).astype(np.uint8)
    dataset = Dataset(images=pixels[..., None] / 255.0, labels=[0, 1, 1])
    repo.save_idx(dataset, tmp_path / "i.idx", tmp_path / "l.idx")
    assert parse_idx((tmp_path / "i.idx").read_bytes()).tolist() == pixels.tolist()


# native container -------------------------------------------------------------

def test_native_round_trip_is_bitwise(tmp_path):
    repo = DatasetRepository()
    dataset = gen_synthetic("blobs3d", 4, 4, seed=1)
    repo.save_native(dataset, tmp_path / "set.ltnt", float64=True)
    loaded = repo.load_native(tmp_path / "set.ltnt")
    assert loaded.images.dtype == np.float64
    assert loaded.images.tobytes() == dataset.images.tobytes()
    assert loaded.labels.tolist() == dataset.labels.tolist()
    assert loaded.spatial_rank == 3


def test_native_float32_header(tmp_path):
    repo = DatasetRepository()
    dataset = Dataset(images=np.full((2, 3, 3, 1), 0.5, dtype=np.float32), labels=[0, 1])
    repo.save_native(dataset, tmp_path / "set.ltnt")
    raw = (tmp_path / "set.ltnt").read_bytes()
    assert raw[:4] == b"LTNT"
    assert struct.unpack("<BBB", raw[4:7]) == (1, 1, 2)
    assert struct.unpack("<4Q", raw[7:39]) == (2, 3, 3, 1)
    assert len(raw) == 39 + 2 * 9 * 4 + 2 + 4


def test_native_defaults_to_float32(tmp_path):
    """Float64 images are stored with dtype code 1 unless f64 is asked for."""
    repo = DatasetRepository()
    dataset = gen_synthetic("blobs2d", 4, 4, seed=4)
    assert dataset.images.dtype == np.float64
    repo.save_native(dataset, tmp_path / "set.ltnt")
    raw = (tmp_path / "set.ltnt").read_bytes()
    assert struct.unpack("<BBB", raw[4:7]) == (1, 1, 2)
    loaded = repo.load_native(tmp_path / "set.ltnt")
    assert loaded.images.dtype == np.float32
    assert loaded.images.tobytes() == dataset.images.astype(np.float32).tobytes()


def test_native_corruption_is_detected(tmp_path):
    repo = DatasetRepository()
    path = tmp_path / "set.ltnt"
    repo.save_native(gen_synthetic("blobs2d", 4, 4, seed=2), path)
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        repo.load_native(path)


def test_native_rejects_out_of_range(tmp_path):
    repo = DatasetRepository()
    path = tmp_path / "set.ltnt"
    repo.save_native(Dataset(images=np.full((2, 2, 2, 1), 1.5), labels=[0, 1]), path)
    with pytest.raises(NormalizationError):
        repo.load_native(path)


def test_load_from_config(tmp_path):
    repo = DatasetRepository()
    repo.save_native(gen_synthetic("texture2d", 6, 8, seed=3), tmp_path / "train.ltnt")
    config = DataConfig(format="native", path=str(tmp_path / "train.ltnt"), class_names=["a", "b"])
    dataset = repo.load(config)
    assert len(dataset) == 6
    assert dataset.class_names == ["a", "b"]
    assert repo.load(config, test=True) is None


# synthetic ----------------------------------------------------------------------

@pytest.mark.parametrize("kind,shape", [("blobs2d", (8, 8, 1)), ("texture2d", (8, 8, 1)), ("blobs3d", (8, 8, 8, 1))])
def test_synthetic_shapes_and_balance(kind, shape):
    dataset = gen_synthetic(kind, 10, 8, seed=0)
    assert dataset.sample_shape == list(shape)
    assert np.bincount(dataset.labels).tolist() == [5, 5]
    assert dataset.images.min() >= 0.0 and dataset.images.max() <= 1.0


def test_synthetic_is_deterministic():
    first, second = gen_synthetic("blobs2d", 6, 8, seed=4), gen_synthetic("blobs2d", 6, 8, seed=4)
    assert first.images.tobytes() == second.images.tobytes()
    assert first.labels.tolist() == second.labels.tolist()
    assert gen_synthetic("blobs2d", 6, 8, seed=5).images.tobytes() != first.images.tobytes()


def test_synthetic_classes_are_separable():
    """Nearest-centroid on raw pixels separates the blob classes."""
    dataset = gen_synthetic("blobs2d", 400, 16, seed=1)
    flat = dataset.images.reshape(len(dataset), -1)
    train, test = slice(0, 200), slice(200, 400)
    centroids = np.stack([flat[train][dataset.labels[train] == cls].mean(axis=0) for cls in (0, 1)])
    distances = ((flat[test][:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    assert np.mean(distances.argmin(axis=1) == dataset.labels[test]) >= 0.95


def test_synthetic_needs_two_images():
    with pytest.raises(ConfigError):
        gen_synthetic("blobs2d", 1, 8, seed=0)


# splits ---------------------------------------------------------------------------

def test_largest_remainder_sums_to_total():
    assert largest_remainder(10, [0.6, 0.2, 0.2]) == [6, 2, 2]
    assert largest_remainder(7, [0.5, 0.5]) in ([4, 3], [3, 4])
    assert sum(largest_remainder(101, [0.6, 0.2, 0.2])) == 101


def test_split_is_stratified_and_disjoint():
    labels = np.array([0] * 50 + [1] * 30)
    parts = split_indices(labels, [0.6, 0.2, 0.2], seed=0)
    assert sorted(np.concatenate(parts).tolist()) == list(range(80))
    assert [len(part) for part in parts] == [48, 16, 16]
    assert [int((labels[part] == 1).sum()) for part in parts] == [18, 6, 6]
    again = split_indices(labels, [0.6, 0.2, 0.2], seed=0)
    assert all(np.array_equal(a, b) for a, b in zip(parts, again))


def test_split_missing_class_names_the_split():
    labels = np.array([0] * 10 + [1] * 2)
    with pytest.raises(SplitError, match="test"):
        split_indices(labels, [0.6, 0.2, 0.2], seed=0)


def test_split_tags_dataset():
    dataset = gen_synthetic("blobs2d", 20, 4, seed=0)
    tagged = split(dataset, [0.6, 0.2, 0.2], seed=1)
    sizes = [len(tagged.split(name)) for name in ("train", "val", "test")]
    assert sizes == [12, 4, 4]


def test_kfold_partitions_and_stratifies():
    labels = np.array([0, 1] * 10)
    folds = kfold(labels, 5, seed=0)
    tests = np.concatenate([test for _, test in folds])
    assert sorted(tests.tolist()) == list(range(20))
    for train, test in folds:
        assert len(np.intersect1d(train, test)) == 0
        assert np.bincount(labels[test]).tolist() == [2, 2]


def test_kfold_keeps_groups_together():
    groups = np.repeat(np.arange(8), 3)
    labels = np.repeat([0, 1] * 4, 3)
    for train, test in kfold(labels, 2, seed=0, groups=groups):
        assert not set(groups[train]) & set(groups[test])


def test_kfold_errors():
    with pytest.raises(ConfigError):
        kfold([0, 1], 1, seed=0)
    with pytest.raises(SplitError):
        kfold([0, 0, 0, 1], 3, seed=0)


def test_extract_slices_records_volume():
    dataset = gen_synthetic("blobs3d", 2, 4, seed=0)
    slices = extract_slices(dataset, axis=2)
    assert slices.images.shape == (8, 4, 4, 1)
    assert slices.groups.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]
    np.testing.assert_array_equal(slices.images[5], dataset.images[1, :, :, 1])
    with pytest.raises(ConfigError):
        extract_slices(gen_synthetic("blobs2d", 2, 4, seed=0))


def test_subset_carries_only_declared_fields():
    """Subsetting slices images, labels, groups and tags and keeps no side payload."""
    dataset = Dataset(
        images=np.zeros((4, 2, 2, 1)), labels=[0, 1, 0, 1], groups=np.array([5, 5, 6, 6]), provenance="vol"
    )
    part = dataset.subset([1, 3])
    assert part.labels.tolist() == [1, 1]
    assert part.groups.tolist() == [5, 6]
    assert part.provenance == "vol"
    assert {field.name for field in dataclasses.fields(Dataset)} == {
        "images", "labels", "class_names", "provenance", "groups", "split_tags"
    }
