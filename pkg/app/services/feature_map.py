import numpy as np

from app.core.errors import NormalizationError
from app.schemas.config import FeatureMapKind

RANGE_TOLERANCE = 1e-9

_FEATURE_DIMS = {
    FeatureMapKind.SINUSOIDAL: 2,
    FeatureMapKind.LINEAR: 2,
    FeatureMapKind.NONE: 1,
}

# sinusoidal: cos + sin lies in [1, sqrt 2]; linear sums to 1; none is x itself
_SITE_GAINS = {
    FeatureMapKind.SINUSOIDAL: 1.0 / np.sqrt(2.0),
    FeatureMapKind.LINEAR: 1.0,
    FeatureMapKind.NONE: 1.0,
}


def feature_dim(kind: FeatureMapKind) -> int:
    """Per-channel output dimension d0 of a local feature map."""
    return _FEATURE_DIMS[FeatureMapKind(kind)]


def site_gain(kind: FeatureMapKind) -> float:
    """g with g * sum(phi(x)) in (0, 1] for every x in [0, 1]."""
    return _SITE_GAINS[FeatureMapKind(kind)]


def apply_map(kind: FeatureMapKind, image: np.ndarray) -> np.ndarray:
    """Lift every channel value into d0 components; channel axis is last.

    Output channel c*d0 + j holds component j of the map applied to input
    channel c.
    """
    kind = FeatureMapKind(kind)
    image = np.asarray(image)
    low, high = float(image.min(initial=0.0)), float(image.max(initial=0.0))
    if low < -RANGE_TOLERANCE or high > 1.0 + RANGE_TOLERANCE:
        raise NormalizationError(
            f"intensities span [{low:.6g}, {high:.6g}]; rescale images into [0, 1] before mapping"
        )
    if kind is FeatureMapKind.NONE:
        return image
    x = np.clip(image, 0.0, 1.0)

    if kind is FeatureMapKind.SINUSOIDAL:
        angle = 0.5 * np.pi * x
        components = (np.cos(angle), np.sin(angle))
    else:
        components = (x, 1.0 - x)
    stacked = np.stack(components, axis=-1)
    return stacked.reshape(*image.shape[:-1], image.shape[-1] * len(components))
