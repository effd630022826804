"""Stratified splits, group-aware k-fold, and volume slicing."""
from typing import Optional, Sequence

import numpy as np

from app.core.errors import ConfigError, SplitError
from app.models.dataset import SPLIT_NAMES, Dataset


def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Integer sizes summing to `total`, closest to fractions * total."""
    exact = np.asarray(fractions, dtype=np.float64) * total
    sizes = np.floor(exact).astype(int)
    remainder = total - int(sizes.sum())
    order = np.argsort(-(exact - sizes), kind="stable")
    sizes[order[:remainder]] += 1
    return sizes.tolist()


def split_indices(labels, fractions: Sequence[float], seed: int) -> list[np.ndarray]:
    labels = np.asarray(labels)
    fractions = list(fractions)
    if not fractions or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[] for _ in fractions]
    classes = np.unique(labels)
    for cls in classes:
        members = rng.permutation(np.flatnonzero(labels == cls))
        start = 0
        for part, size in zip(parts, largest_remainder(len(members), fractions)):
            part.append(members[start:start + size])
            start += size

    result = [np.sort(np.concatenate(part)) if part else np.zeros(0, dtype=np.int64) for part in parts]
    for index, (fraction, indices) in enumerate(zip(fractions, result)):
        if fraction == 0:
            continue
        present = set(np.unique(labels[indices]).tolist())
        missing = [int(cls) for cls in classes if int(cls) not in present]
        if missing:
            name = SPLIT_NAMES[index] if index < len(SPLIT_NAMES) else str(index)
            raise SplitError(f"split '{name}' receives no samples of classes {missing}; use more data")
    return result


def split(dataset: Dataset, fractions: Sequence[float], seed: int) -> Dataset:
    """Tag every sample with its split (train, val[, test])."""
    if len(fractions) > len(SPLIT_NAMES):
        raise ConfigError(f"at most {len(SPLIT_NAMES)} split fractions are supported")
    tags = np.full(len(dataset), -1, dtype=np.int64)
    for tag, indices in enumerate(split_indices(dataset.labels, fractions, seed)):
        tags[indices] = tag
    tagged = dataset.subset(np.arange(len(dataset)))
    tagged.split_tags = tags
    return tagged


def kfold(
    labels,
    k: int,
    seed: int,
    groups: Optional[np.ndarray] = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified folds; every sample of a group lands in the same fold."""
    if k < 2:
        raise ConfigError(f"k-fold needs k >= 2, got {k}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    if groups is None:
        groups = np.arange(len(labels))
    groups = np.asarray(groups)
    unique_groups, first = np.unique(groups, return_index=True)
    group_labels = labels[first]

    fold_of_group = {}
    for cls in np.unique(group_labels):
        members = rng.permutation(unique_groups[group_labels == cls])
        for position, group in enumerate(members):
            fold_of_group[group.item()] = position % k

    folds = np.array([fold_of_group[group.item()] for group in groups], dtype=np.int64)
    classes = np.unique(labels)
    result = []
    for fold in range(k):
        test = np.flatnonzero(folds == fold)
        train = np.flatnonzero(folds != fold)
        if len(np.unique(labels[test])) != len(classes):
            raise SplitError(f"fold {fold} is missing a class; use fewer folds or more data")
        result.append((train, test))
    return result


def extract_slices(dataset: Dataset, axis: int = 0) -> Dataset:
    """Turn 3D volumes into their 2D slices along `axis`; groups record the volume."""
    if dataset.spatial_rank != 3:
        raise ConfigError(f"slice extraction needs 3D volumes, got spatial rank {dataset.spatial_rank}")
    if axis not in (0, 1, 2):
        raise ConfigError(f"slice axis must be 0, 1 or 2, got {axis}")
    volumes = np.moveaxis(dataset.images, axis + 1, 1)
    count, n_slices = volumes.shape[:2]
    slices = volumes.reshape(count * n_slices, *volumes.shape[2:])
    source = dataset.groups if dataset.groups is not None else np.arange(count)
    return Dataset(
        images=np.ascontiguousarray(slices),
        labels=np.repeat(dataset.labels, n_slices),
        class_names=dataset.class_names,
        provenance=f"{dataset.provenance}:slices{axis}",
        groups=np.repeat(source, n_slices),
    )
