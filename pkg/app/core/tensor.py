"""Dense real tensors and the pure operations every other module builds on.

A Tensor wraps a read-only, row-major numpy array. Operations never mutate
their inputs and never broadcast implicitly (a 0-d scalar operand is the only
exception). Any non-finite result is raised as NonFiniteError.
"""
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from app.core.errors import AxisError, DomainError, NonFiniteError, ShapeMismatchError

DEFAULT_DTYPE = np.float64
SUPPORTED_DTYPES = (np.float64, np.float32)

ArrayLike = Union["Tensor", np.ndarray, Sequence, float, int]


class ElementwiseOp(str, Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"


class ScalarOp(str, Enum):
    SCALE = "scale"
    SIN = "sin"
    COS = "cos"
    ASIN = "asin"
    LOG = "log"
    EXP = "exp"
    NEGATE = "negate"


class Tensor:
    """Immutable dense tensor; `data` length always equals prod(shape)."""

    __slots__ = ("_data",)

    def __init__(self, data: ArrayLike, dtype: Optional[np.dtype] = None):
        if isinstance(data, Tensor):
            array = data._data
        else:
            array = np.asarray(data)
        target = np.dtype(dtype) if dtype is not None else (
            array.dtype if array.dtype in SUPPORTED_DTYPES else np.dtype(DEFAULT_DTYPE)
        )
        if array.dtype != target or not array.flags.c_contiguous:
            array = np.array(array, dtype=target, order="C")
        if not np.isfinite(array).all():
            raise NonFiniteError(f"non-finite values in tensor of shape {array.shape}")
        if array.flags.writeable:
            array = array.view()
            array.flags.writeable = False
        self._data = array

    @classmethod
    def zeros(cls, shape: Iterable[int], dtype=DEFAULT_DTYPE) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=dtype))

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    def numpy(self) -> np.ndarray:
        """Read-only view of the underlying buffer."""
        return self._data

    def astype(self, dtype) -> "Tensor":
        return Tensor(self._data, dtype=dtype)

    def item(self) -> float:
        if self._data.size != 1:
            raise ShapeMismatchError(f"item() needs a single element, got shape {self.shape}")
        return float(self._data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _normalize_axes(axes: Sequence[int], ndim: int, label: str) -> list[int]:
    normalized = []
    for axis in axes:
        if not -ndim <= axis < ndim:
            raise AxisError(f"{label}: axis {axis} out of range for rank {ndim}")
        normalized.append(axis % ndim)
    if len(set(normalized)) != len(normalized):
        raise AxisError(f"{label}: duplicate axes {list(axes)}")
    return normalized


def contract(a: Tensor, b: Tensor, axes_a: Sequence[int], axes_b: Sequence[int]) -> Tensor:
    """Sum over paired axes; result axes are free(a) ++ free(b).

    Implemented as permute-to-matrix plus a matrix multiply (np.tensordot).
    """
    a, b = as_tensor(a), as_tensor(b)
    if len(axes_a) != len(axes_b):
        raise AxisError(f"contract: {len(axes_a)} axes of a paired with {len(axes_b)} axes of b")
    axes_a = _normalize_axes(axes_a, a.ndim, "contract(a)")
    axes_b = _normalize_axes(axes_b, b.ndim, "contract(b)")
    for axis_a, axis_b in zip(axes_a, axes_b):
        if a.shape[axis_a] != b.shape[axis_b]:
            raise ShapeMismatchError(
                f"contract: extent {a.shape[axis_a]} (a axis {axis_a}) "
                f"!= extent {b.shape[axis_b]} (b axis {axis_b})"
            )
    return Tensor(np.tensordot(a.numpy(), b.numpy(), axes=(axes_a, axes_b)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes.

    Batch axes of `a` and `b` must be identical; a 2-d `b` is shared across
    every batch entry of `a`.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError(f"matmul: operands need rank >= 2, got {a.shape} and {b.shape}")
    if b.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatchError(f"matmul: batch extents {a.shape[:-2]} != {b.shape[:-2]}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul: inner extents {a.shape[-1]} != {b.shape[-2]}")
    return Tensor(np.matmul(a.numpy(), b.numpy()))


def reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    t = as_tensor(t)
    new_shape = tuple(int(extent) for extent in new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != t.size:
        raise ShapeMismatchError(f"reshape: cannot view {t.shape} ({t.size} elements) as {new_shape}")
    return Tensor(t.numpy().reshape(new_shape))


def permute(t: Tensor, perm: Sequence[int]) -> Tensor:
    t = as_tensor(t)
    perm = tuple(int(axis) for axis in perm)
    if sorted(perm) != list(range(t.ndim)):
        raise AxisError(f"permute: {perm} is not a permutation of 0..{t.ndim - 1}")
    return Tensor(np.transpose(t.numpy(), perm))


def inverse_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(axis) for axis in np.argsort(perm))


def elementwise(a: Tensor, b: Tensor, op: Union[ElementwiseOp, str]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    op = ElementwiseOp(op)
    if a.shape != b.shape and b.ndim != 0:
        raise ShapeMismatchError(f"{op.value}: shapes {a.shape} and {b.shape} differ")
    x, y = a.numpy(), b.numpy()
    if op is ElementwiseOp.ADD:
        return Tensor(x + y)
    if op is ElementwiseOp.SUB:
        return Tensor(x - y)
    return Tensor(x * y)


def scalar_map(t: Tensor, op: Union[ScalarOp, str], c: Optional[float] = None) -> Tensor:
    t = as_tensor(t)
    op = ScalarOp(op)
    x = t.numpy()
    if op is ScalarOp.SCALE:
        if c is None:
            raise ValueError("scale requires a constant")
        return Tensor(x * c)
    if op is ScalarOp.SIN:
        return Tensor(np.sin(x))
    if op is ScalarOp.COS:
        return Tensor(np.cos(x))
    if op is ScalarOp.ASIN:
        if np.any(np.abs(x) > 1.0):
            raise DomainError("asin of a value outside [-1, 1]")
        return Tensor(np.arcsin(x))
    if op is ScalarOp.LOG:
        if np.any(x <= 0):
            raise DomainError("log of a non-positive value")
        return Tensor(np.log(x))
    if op is ScalarOp.EXP:
        return Tensor(np.exp(x))
    return Tensor(-x)


def total(t: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    t = as_tensor(t)
    if axes is None:
        return Tensor(t.numpy().sum())
    axes = _normalize_axes(axes, t.ndim, "sum")
    return Tensor(t.numpy().sum(axis=tuple(axes)))


def index(t: Tensor, axis: int, position: int) -> Tensor:
    """Select one slice along `axis`, dropping that axis."""
    t = as_tensor(t)
    (axis,) = _normalize_axes([axis], t.ndim, "index")
    if not 0 <= position < t.shape[axis]:
        raise AxisError(f"index: position {position} out of range for extent {t.shape[axis]}")
    return Tensor(np.take(t.numpy(), position, axis=axis))
