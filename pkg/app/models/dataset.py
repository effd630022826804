from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from app.core.errors import FormatError, NormalizationError, SplitError

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class Dataset:
    """Labeled images (count, *spatial, C) with intensities in [0, 1]."""

    images: np.ndarray
    labels: np.ndarray
    class_names: Optional[list[str]] = None
    provenance: str = ""
    groups: Optional[np.ndarray] = None  # e.g. source volume of each 2D slice
    split_tags: Optional[np.ndarray] = None  # index into SPLIT_NAMES per sample

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim < 3:
            raise FormatError(f"images need (count, *spatial, channels), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise FormatError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.groups is not None and len(self.groups) != len(self.labels):
            raise FormatError("group ids must cover every sample")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def spatial_rank(self) -> int:
        return self.images.ndim - 2

    @property
    def sample_shape(self) -> list[int]:
        return list(self.images.shape[1:])

    @property
    def n_classes(self) -> int:
        if self.class_names:
            return len(self.class_names)
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def check_range(self) -> None:
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise NormalizationError(f"{self.provenance or 'dataset'}: intensities must lie in [0, 1]")

    def subset(self, indices: Sequence[int], provenance: Optional[str] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            images=self.images[indices],
            labels=self.labels[indices],
            groups=None if self.groups is None else self.groups[indices],
            split_tags=None if self.split_tags is None else self.split_tags[indices],
            provenance=provenance or self.provenance,
        )

    def split(self, name: str) -> "Dataset":
        if self.split_tags is None:
            raise SplitError("dataset carries no split tags")
        tag = SPLIT_NAMES.index(name)
        return self.subset(np.flatnonzero(self.split_tags == tag), provenance=f"{self.provenance}[{name}]")
