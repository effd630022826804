"""Dataset persistence: IDX interchange files and the native LTNT container."""
import gzip
import struct
import zlib
from pathlib import Path
from typing import Optional

import numpy as np

from app.core.errors import ChecksumError, FormatError, MissingFileError
from app.core.logging import get_logger, log_event
from app.models.dataset import Dataset
from app.schemas.config import DataConfig, DataFormat
from app.services.synthetic import gen_synthetic

logger = get_logger(__name__)

IDX_UBYTE = 0x08
NATIVE_MAGIC = b"LTNT"
NATIVE_VERSION = 1
NATIVE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}  # 2 is written only on request


def read_bytes(path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"file not found: {path}")
    raw = path.read_bytes()
    return gzip.decompress(raw) if path.suffix == ".gz" else raw


def parse_idx(raw: bytes, source: str = "idx") -> np.ndarray:
    """Decode an unsigned-byte IDX payload into an array of its declared shape."""
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise FormatError(f"{source}: bad IDX magic")
    if raw[2] != IDX_UBYTE:
        raise FormatError(f"{source}: unsupported IDX element type 0x{raw[2]:02x}; only u8 is supported")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if ndim == 0 or len(raw) < header:
        raise FormatError(f"{source}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    if any(dim == 0 for dim in dims):
        raise FormatError(f"{source}: IDX dimension of size 0 in {dims}")
    expected = int(np.prod(dims))
    if len(raw) - header < expected:
        raise FormatError(f"{source}: payload has {len(raw) - header} bytes, header declares {expected}")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header).reshape(dims)


def encode_idx(array: np.ndarray) -> bytes:
    array = np.asarray(array, dtype=np.uint8)
    return bytes([0, 0, IDX_UBYTE, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()


class DatasetRepository:
    """Loads and stores datasets in the supported on-disk formats."""

    def load_idx(self, images_path, labels_path) -> Dataset:
        images = parse_idx(read_bytes(images_path), str(images_path))
        labels = parse_idx(read_bytes(labels_path), str(labels_path))
        if images.ndim < 3:
            raise FormatError(f"{images_path}: images need (count, rows, cols), got {images.shape}")
        if labels.ndim != 1:
            raise FormatError(f"{labels_path}: labels must be one-dimensional, got {labels.shape}")
        if len(images) != len(labels):
            raise FormatError(f"{len(images)} images but {len(labels)} labels")
        dataset = Dataset(
            images=(images.astype(np.float32) / np.float32(255.0))[..., None],
            labels=labels.astype(np.int64),
            provenance=f"idx:{Path(images_path).name}",
        )
        dataset.check_range()
        log_event(logger, "dataset_loaded", format="idx", count=len(dataset), shape=dataset.sample_shape)
        return dataset

    def save_idx(self, dataset: Dataset, images_path, labels_path) -> None:
        """Write 2D single-channel images back as u8 IDX files."""
        if dataset.spatial_rank != 2 or dataset.images.shape[-1] != 1:
            raise FormatError("IDX export supports single-channel 2D images only")
        pixels = np.rint(dataset.images[..., 0] * 255.0)
        Path(images_path).write_bytes(encode_idx(pixels))
        Path(labels_path).write_bytes(encode_idx(dataset.labels))

    def save_native(self, dataset: Dataset, path, float64: bool = False) -> None:
        """Write an LTNT container; images are stored as f32 unless float64 is requested."""
        images = dataset.images
        code = 2 if float64 else 1
        extents = images.shape
        if dataset.labels.size and (dataset.labels.min() < 0 or dataset.labels.max() > 255):
            raise FormatError("native container stores labels as u8")
        body = b"".join(
            [
                NATIVE_MAGIC,
                struct.pack("<BBB", NATIVE_VERSION, code, dataset.spatial_rank),
                struct.pack(f"<{len(extents)}Q", *extents),
                np.ascontiguousarray(images, dtype=NATIVE_DTYPES[code]).tobytes(),
                dataset.labels.astype(np.uint8).tobytes(),
            ]
        )
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
        log_event(logger, "dataset_saved", path=str(path), count=len(dataset))

    def load_native(self, path) -> Dataset:
        raw = read_bytes(path)
        if len(raw) < 11:
            raise FormatError(f"{path}: file too short for an LTNT container")
        body, (stored,) = raw[:-4], struct.unpack("<I", raw[-4:])
        if zlib.crc32(body) != stored:
            raise ChecksumError(f"{path}: CRC32 mismatch, file is corrupt")
        if body[:4] != NATIVE_MAGIC:
            raise FormatError(f"{path}: bad magic {body[:4]!r}")
        version, code, rank = struct.unpack("<BBB", body[4:7])
        if version != NATIVE_VERSION:
            raise FormatError(f"{path}: container version {version}, expected {NATIVE_VERSION}")
        if code not in NATIVE_DTYPES:
            raise FormatError(f"{path}: unknown dtype code {code}")
        n_extents = rank + 2
        offset = 7 + 8 * n_extents
        extents = struct.unpack(f"<{n_extents}Q", body[7:offset])
        dtype = NATIVE_DTYPES[code]
        count = extents[0]
        payload = int(np.prod(extents)) * dtype.itemsize
        if len(body) != offset + payload + count:
            raise FormatError(f"{path}: payload size does not match extents {extents}")
        images = np.frombuffer(body, dtype=dtype, count=int(np.prod(extents)), offset=offset).reshape(extents)
        labels = np.frombuffer(body, dtype=np.uint8, count=count, offset=offset + payload)
        dataset = Dataset(
            images=images.astype(dtype.newbyteorder("="), copy=True),
            labels=labels.astype(np.int64),
            provenance=f"native:{Path(path).name}",
        )
        dataset.check_range()
        log_event(logger, "dataset_loaded", format="native", count=len(dataset), shape=dataset.sample_shape)
        return dataset

    def load(self, config: DataConfig, test: bool = False) -> Optional[Dataset]:
        """Load the configured training source, or the separate test source."""
        if config.format is DataFormat.IDX:
            if test:
                return self.load_idx(config.test_images, config.test_labels) if config.has_test_source else None
            dataset = self.load_idx(config.images, config.labels)
        elif config.format is DataFormat.NATIVE:
            if test:
                return self.load_native(config.test_path) if config.has_test_source else None
            dataset = self.load_native(config.path)
        else:
            if test:
                return None
            spec = config.synthetic
            dataset = gen_synthetic(spec.kind, spec.count, spec.size, spec.seed, spec.noise)
        if config.class_names:
            dataset.class_names = list(config.class_names)
        return dataset
