"""Space-to-depth reshaping between image grids and MPS sites.

Patches and the positions inside a patch are both taken in raster order
(row-major, depth-major in 3D). The feature axis of a squeezed site is laid
out as (k^S within-patch positions) x (C channels).
"""
from typing import Optional, Sequence

import numpy as np

from app.core.autodiff import Tape, Variable
from app.core.errors import ShapeMismatchError
from app.core.tensor import Tensor, inverse_permutation


def _patch_permutation(spatial_rank: int) -> tuple[int, ...]:
    # (B, g_0, k, g_1, k, ..., C) -> (B, g_0, g_1, ..., k, k, ..., C)
    grid_axes = [1 + 2 * s for s in range(spatial_rank)]
    patch_axes = [2 + 2 * s for s in range(spatial_rank)]
    return tuple([0] + grid_axes + patch_axes + [2 * spatial_rank + 1])


def squeeze_grid(spatial: Sequence[int], k: int) -> tuple[int, ...]:
    for axis, extent in enumerate(spatial):
        if extent % k:
            raise ShapeMismatchError(f"spatial axis {axis} of extent {extent} is not divisible by stride {k}")
    return tuple(extent // k for extent in spatial)


def trace_squeeze(tape: Tape, x: Variable, k: int) -> Variable:
    """(batch, *spatial, C) -> (batch, N / k^S, k^S * C) on a tape."""
    batch, *spatial, channels = x.shape
    rank = len(spatial)
    grid = squeeze_grid(spatial, k)
    split = [batch]
    for extent in grid:
        split.extend([extent, k])
    split.append(channels)
    patches = tape.permute(tape.reshape(x, split), _patch_permutation(rank))
    return tape.reshape(patches, (batch, int(np.prod(grid)), k**rank * channels))


def trace_unsqueeze(tape: Tape, sites: Variable, grid: Sequence[int], k: int = 1) -> Variable:
    """(batch, N_l, F) -> (batch, *grid * k, F / k^S); inverse of trace_squeeze."""
    batch, n_sites, features = sites.shape
    grid = tuple(grid)
    rank = len(grid)
    if n_sites != int(np.prod(grid)):
        raise ShapeMismatchError(f"{n_sites} sites cannot fill a grid of {grid}")
    if k == 1:
        return tape.reshape(sites, (batch, *grid, features))
    if features % k**rank:
        raise ShapeMismatchError(f"feature extent {features} is not a multiple of {k}^{rank}")
    channels = features // k**rank
    blocked = tape.reshape(sites, (batch, *grid, *([k] * rank), channels))
    interleaved = tape.permute(blocked, inverse_permutation(_patch_permutation(rank)))
    return tape.reshape(interleaved, (batch, *(extent * k for extent in grid), channels))


def squeeze(x, k: int) -> Tensor:
    return trace_squeeze(Tape(record=False), Tape.constant(Tensor(x)), k).value


def unsqueeze(sites, grid: Sequence[int], k: int = 1) -> Tensor:
    return trace_unsqueeze(Tape(record=False), Tape.constant(Tensor(sites)), grid, k).value


def padded_extents(spatial: Sequence[int], multiple: int) -> tuple[int, ...]:
    return tuple(-(-extent // multiple) * multiple for extent in spatial)


def pad_to_multiple(images: np.ndarray, multiple: int, target: Optional[Sequence[int]] = None) -> np.ndarray:
    """Zero-pad the spatial axes of (batch, *spatial, C) on the high side."""
    spatial = images.shape[1:-1]
    target = padded_extents(spatial, multiple) if target is None else tuple(target)
    if target == tuple(spatial):
        return images
    widths = [(0, 0)] + [(0, want - have) for have, want in zip(spatial, target)] + [(0, 0)]
    return np.pad(images, widths, mode="constant", constant_values=0)
