"""Desk-scale synthetic image sets with a known class structure."""
import numpy as np

from app.core.errors import ConfigError
from app.core.logging import get_logger, log_event
from app.models.dataset import Dataset
from app.schemas.config import SyntheticKind

logger = get_logger(__name__)


def _balanced_labels(count: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(count) % 2).astype(np.int64)


def _bumps(labels: np.ndarray, size: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian bump in the low corner quadrant for class 0, the high one for class 1."""
    coords = np.meshgrid(*([np.arange(size, dtype=np.float64)] * rank), indexing="ij")
    sigma = max(size / 8.0, 0.5)
    jitter = size / 16.0
    images = np.empty((len(labels),) + (size,) * rank, dtype=np.float64)
    for n, label in enumerate(labels):
        base = size * (0.25 if label == 0 else 0.75) - 0.5
        center = base + rng.uniform(-jitter, jitter, size=rank)
        dist2 = sum((axis - c) ** 2 for axis, c in zip(coords, center))
        images[n] = np.exp(-dist2 / (2.0 * sigma**2))
    return images


def _checkerboards(labels: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    cell = max(1, size // 8)
    rows, cols = np.meshgrid(np.arange(size) // cell, np.arange(size) // cell, indexing="ij")
    images = np.empty((len(labels), size, size), dtype=np.float64)
    for n, label in enumerate(labels):
        contrast = rng.uniform(0.3, 0.5)
        images[n] = 0.5 + contrast * (2.0 * ((rows + cols + label) % 2) - 1.0)
    return images


def gen_synthetic(
    kind: SyntheticKind,
    count: int,
    size: int,
    seed: int,
    noise: float = 0.1,
) -> Dataset:
    """Balanced two-class dataset, deterministic per seed."""
    kind = SyntheticKind(kind)
    if count < 2:
        raise ConfigError(f"synthetic datasets need at least 2 images, got {count}")
    if size < 1:
        raise ConfigError(f"size must be positive, got {size}")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(count, rng)

    if kind is SyntheticKind.TEXTURE2D:
        images = _checkerboards(labels, size, rng)
    else:
        images = _bumps(labels, size, 3 if kind is SyntheticKind.BLOBS3D else 2, rng)
    if noise > 0:
        images = images + rng.uniform(-noise, noise, size=images.shape)
    images = np.clip(images, 0.0, 1.0)[..., None]

    log_event(logger, "synthetic_generated", kind=kind.value, count=count, size=size, seed=seed)
    return Dataset(
        images=images,
        labels=labels,
        class_names=["class_0", "class_1"],
        provenance=f"synthetic:{kind.value}:{count}x{size}:seed{seed}",
    )
