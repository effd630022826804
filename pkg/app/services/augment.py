from dataclasses import dataclass

import numpy as np

from app.core.errors import AugmentationError


@dataclass(frozen=True)
class AugmentationPlan:
    flip_horizontal: bool
    flip_vertical: bool
    quarter_turns: int  # counter-clockwise multiples of 90 degrees


def plan_augmentation(seed: int, square: bool = True) -> AugmentationPlan:
    """Draw flips and a rotation, each applied with probability 0.5."""
    rng = np.random.default_rng(seed)
    flip_horizontal = bool(rng.random() < 0.5)
    flip_vertical = bool(rng.random() < 0.5)
    turns = int(rng.integers(0, 4)) if rng.random() < 0.5 else 0
    if not square:
        turns = 2 * (turns // 2)  # odd turns would swap height and width
    return AugmentationPlan(flip_horizontal, flip_vertical, turns)


def apply_plan(image: np.ndarray, plan: AugmentationPlan) -> np.ndarray:
    if image.ndim != 3:
        raise AugmentationError(f"augmentation supports 2D images (H, W, C) only, got shape {image.shape}")
    out = image
    if plan.flip_horizontal:
        out = out[:, ::-1]
    if plan.flip_vertical:
        out = out[::-1]
    if plan.quarter_turns:
        out = np.rot90(out, plan.quarter_turns, axes=(0, 1))
    return np.ascontiguousarray(out)


def augment(image: np.ndarray, seed: int) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3:
        raise AugmentationError(f"augmentation supports 2D images (H, W, C) only, got shape {image.shape}")
    return apply_plan(image, plan_augmentation(seed, square=image.shape[0] == image.shape[1]))


def augment_batch(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if images.ndim != 4:
        raise AugmentationError("augmentation is only defined for 2D image batches")
    seeds = rng.integers(0, 2**31 - 1, size=len(images))
    return np.stack([augment(image, int(seed)) for image, seed in zip(images, seeds)])
