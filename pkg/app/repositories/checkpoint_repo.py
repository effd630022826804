"""Versioned binary checkpoints (LTNC).

Layout, little-endian: magic "LTNC", u16 version, u32 length + RunConfig
JSON, u32 tensor count, every parameter in declaration order as raw f64,
u32 buffer count, batch-norm running statistics as raw f64, CRC32 of all
prior bytes.
"""
import struct
import zlib
from pathlib import Path

import numpy as np

from app.core.errors import ChecksumError, FormatError, MissingFileError
from app.core.logging import get_logger, log_event
from app.core.tensor import Tensor
from app.models.lotenet import LoTeNetModel
from app.schemas.config import Precision, RunConfig

logger = get_logger(__name__)

CHECKPOINT_MAGIC = b"LTNC"
CHECKPOINT_VERSION = 1
F64 = np.dtype("<f8")


def model_dtype(config: RunConfig) -> np.dtype:
    return np.dtype(np.float32 if config.training.precision is Precision.FLOAT32 else np.float64)


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(f"{self.source}: truncated checkpoint")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(count * F64.itemsize), dtype=F64).reshape(shape).astype(np.float64)


class CheckpointRepository:
    def save(self, model: LoTeNetModel, config: RunConfig, path) -> None:
        """Serialize `config` (with the model's resolved input shape) and every tensor."""
        config = config.model_copy(update={"model": model.config})
        blob = config.model_dump_json().encode("utf-8")
        params = model.parameters()
        buffers = model.buffers()
        parts = [
            CHECKPOINT_MAGIC,
            struct.pack("<H", CHECKPOINT_VERSION),
            struct.pack("<I", len(blob)),
            blob,
            struct.pack("<I", len(params)),
        ]
        parts.extend(np.ascontiguousarray(value.numpy(), dtype=F64).tobytes() for value in params.values())
        parts.append(struct.pack("<I", len(buffers)))
        parts.extend(np.ascontiguousarray(value, dtype=F64).tobytes() for value in buffers.values())
        body = b"".join(parts)

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
        log_event(logger, "checkpoint_saved", path=str(path), parameters=model.count_parameters())

    def load(self, path) -> tuple[LoTeNetModel, RunConfig]:
        path = Path(path)
        if not path.is_file():
            raise MissingFileError(f"checkpoint not found: {path}")
        raw = path.read_bytes()
        if len(raw) < 10:
            raise FormatError(f"{path}: file too short for a checkpoint")
        body, (stored,) = raw[:-4], struct.unpack("<I", raw[-4:])
        if zlib.crc32(body) != stored:
            raise ChecksumError(f"{path}: CRC32 mismatch, checkpoint is corrupt")

        reader = _Reader(body, str(path))
        if reader.take(4) != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not an LTNC checkpoint")
        (version,) = reader.unpack("<H")
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        (length,) = reader.unpack("<I")
        config = RunConfig.model_validate_json(reader.take(length).decode("utf-8"))

        model = LoTeNetModel.init(config.model, dtype=model_dtype(config))
        template = model.parameters()
        (count,) = reader.unpack("<I")
        if count != len(template):
            raise FormatError(f"{path}: {count} tensors stored, architecture declares {len(template)}")
        model.load_parameters({name: Tensor(reader.array(value.shape)) for name, value in template.items()})

        buffer_template = model.buffers()
        (count,) = reader.unpack("<I")
        if count != len(buffer_template):
            raise FormatError(f"{path}: {count} buffers stored, architecture declares {len(buffer_template)}")
        model.load_buffers({name: reader.array(value.shape) for name, value in buffer_template.items()})
        if reader.offset != len(body):
            raise FormatError(f"{path}: {len(body) - reader.offset} trailing bytes")

        log_event(logger, "checkpoint_loaded", path=str(path))
        return model, config
