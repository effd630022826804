"""Reverse-mode automatic differentiation over the tensor-core operations.

A Tape is a Wengert list: every tracked operation appends a TapeNode in
creation order, and `backward` walks the list once in reverse, accumulating
adjoints by addition in tape order so repeated runs are bitwise identical.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from app.core.errors import ShapeMismatchError, TapeError, UnsupportedOpError
from app.core import tensor as tc
from app.core.tensor import ElementwiseOp, ScalarOp, Tensor


@dataclass
class TapeNode:
    index: int
    op: str
    inputs: tuple[Optional[int], ...]
    input_shapes: tuple[tuple[int, ...], ...]
    saved: dict[str, Any]
    attrs: dict[str, Any]
    shape: tuple[int, ...]


class Variable:
    """A Tensor value, optionally tracked on a tape."""

    __slots__ = ("value", "index")

    def __init__(self, value: Tensor, index: Optional[int] = None):
        self.value = value
        self.index = index

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def tracked(self) -> bool:
        return self.index is not None

    def numpy(self) -> np.ndarray:
        return self.value.numpy()

    def __repr__(self) -> str:
        return f"Variable(shape={self.shape}, index={self.index})"


@dataclass(frozen=True)
class SliceGrad:
    """Adjoint that only touches one slice of the input (from `index`)."""

    axis: int
    position: int
    value: np.ndarray


ForwardRule = Callable[[Sequence[Tensor], dict], tuple[Tensor, dict]]
BackwardRule = Callable[[np.ndarray, dict, dict], Sequence[Any]]


@dataclass(frozen=True)
class OpRule:
    forward: ForwardRule
    backward: BackwardRule


_RULES: dict[str, OpRule] = {}


def register(name: str, forward: ForwardRule, backward: BackwardRule) -> None:
    _RULES[name] = OpRule(forward, backward)


def supported_ops() -> frozenset[str]:
    return frozenset(_RULES)


# contract --------------------------------------------------------------------

def _contract_forward(inputs, attrs):
    a, b = inputs
    out = tc.contract(a, b, attrs["axes_a"], attrs["axes_b"])
    return out, {"a": a.numpy(), "b": b.numpy()}


def _contract_backward(g, saved, attrs):
    a, b = saved["a"], saved["b"]
    axes_a = [axis % a.ndim for axis in attrs["axes_a"]]
    axes_b = [axis % b.ndim for axis in attrs["axes_b"]]
    free_a = [axis for axis in range(a.ndim) if axis not in axes_a]
    free_b = [axis for axis in range(b.ndim) if axis not in axes_b]
    n_free_a = len(free_a)

    grad_a = np.tensordot(g, b, axes=(list(range(n_free_a, g.ndim)), free_b))
    as_a = free_a + [axes_a[j] for j in np.argsort(axes_b)]
    grad_a = np.transpose(grad_a, np.argsort(as_a))

    grad_b = np.tensordot(a, g, axes=(free_a, list(range(n_free_a))))
    as_b = [axes_b[j] for j in np.argsort(axes_a)] + free_b
    grad_b = np.transpose(grad_b, np.argsort(as_b))
    return grad_a, grad_b


# matmul ----------------------------------------------------------------------

def _matmul_forward(inputs, attrs):
    a, b = inputs
    return tc.matmul(a, b), {"a": a.numpy(), "b": b.numpy()}


def _matmul_backward(g, saved, attrs):
    a, b = saved["a"], saved["b"]
    grad_a = np.matmul(g, np.swapaxes(b, -1, -2))
    grad_b = np.matmul(np.swapaxes(a, -1, -2), g)
    if b.ndim == 2 and grad_b.ndim > 2:
        grad_b = grad_b.reshape(-1, *b.shape).sum(axis=0)
    return grad_a, grad_b


# shape plumbing ----------------------------------------------------------------

def _reshape_forward(inputs, attrs):
    (t,) = inputs
    return tc.reshape(t, attrs["shape"]), {"input_shape": t.shape}


def _reshape_backward(g, saved, attrs):
    return (g.reshape(saved["input_shape"]),)


def _permute_forward(inputs, attrs):
    (t,) = inputs
    return tc.permute(t, attrs["perm"]), {}


def _permute_backward(g, saved, attrs):
    return (np.transpose(g, tc.inverse_permutation(attrs["perm"])),)


def _index_forward(inputs, attrs):
    (t,) = inputs
    return tc.index(t, attrs["axis"], attrs["position"]), {"ndim": t.ndim}


def _index_backward(g, saved, attrs):
    return (SliceGrad(attrs["axis"] % saved["ndim"], attrs["position"], g),)


# pointwise -------------------------------------------------------------------

def _elementwise_forward(inputs, attrs):
    a, b = inputs
    out = tc.elementwise(a, b, attrs["op"])
    return out, {"a": a.numpy(), "b": b.numpy()}


def _elementwise_backward(g, saved, attrs):
    a, b = saved["a"], saved["b"]
    op = ElementwiseOp(attrs["op"])
    if op is ElementwiseOp.ADD:
        grad_a, grad_b = g, g
    elif op is ElementwiseOp.SUB:
        grad_a, grad_b = g, -g
    else:
        grad_a, grad_b = g * b, g * a
    if b.ndim == 0:
        grad_b = np.asarray(np.sum(grad_b))
    return grad_a, grad_b


def _scalar_map_forward(inputs, attrs):
    (t,) = inputs
    out = tc.scalar_map(t, attrs["op"], attrs.get("c"))
    return out, {"x": t.numpy(), "y": out.numpy()}


def _scalar_map_backward(g, saved, attrs):
    x, y = saved["x"], saved["y"]
    op = ScalarOp(attrs["op"])
    if op is ScalarOp.SCALE:
        return (g * attrs["c"],)
    if op is ScalarOp.SIN:
        return (g * np.cos(x),)
    if op is ScalarOp.COS:
        return (-g * np.sin(x),)
    if op is ScalarOp.ASIN:
        return (g / np.sqrt(1.0 - x * x),)
    if op is ScalarOp.LOG:
        return (g / x,)
    if op is ScalarOp.EXP:
        return (g * y,)
    return (-g,)


def _sum_forward(inputs, attrs):
    (t,) = inputs
    return tc.total(t, attrs.get("axes")), {"input_shape": t.shape}


def _sum_backward(g, saved, attrs):
    shape = saved["input_shape"]
    axes = attrs.get("axes")
    if axes is not None:
        g = np.expand_dims(g, tuple(axis % len(shape) for axis in axes))
    return (np.broadcast_to(g, shape),)


# normalization and losses --------------------------------------------------------

def batch_statistics(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (last axis) mean and biased variance over every other axis."""
    axes = tuple(range(x.ndim - 1))
    return x.mean(axis=axes), x.var(axis=axes)


def _batch_norm_forward(inputs, attrs):
    x, scale, shift = (t.numpy() for t in inputs)
    if scale.shape != (x.shape[-1],) or shift.shape != (x.shape[-1],):
        raise ShapeMismatchError(
            f"batch_norm: scale/shift {scale.shape}/{shift.shape} do not match channels {x.shape[-1]}"
        )
    if attrs["train"]:
        mean, var = batch_statistics(x)
    else:
        mean, var = np.asarray(attrs["mean"]), np.asarray(attrs["var"])
    inv_std = 1.0 / np.sqrt(var + attrs["eps"])
    x_hat = (x - mean) * inv_std
    out = Tensor(x_hat * scale + shift, dtype=x.dtype)
    return out, {"x_hat": x_hat, "inv_std": inv_std, "scale": scale}


def _batch_norm_backward(g, saved, attrs):
    x_hat, inv_std, scale = saved["x_hat"], saved["inv_std"], saved["scale"]
    axes = tuple(range(g.ndim - 1))
    grad_scale = np.sum(g * x_hat, axis=axes)
    grad_shift = np.sum(g, axis=axes)
    g_hat = g * scale
    if attrs["train"]:
        count = g.size // g.shape[-1]
        grad_x = (inv_std / count) * (
            count * g_hat - np.sum(g_hat, axis=axes) - x_hat * np.sum(g_hat * x_hat, axis=axes)
        )
    else:
        grad_x = g_hat * inv_std
    return grad_x, grad_scale, grad_shift


def _log_softmax_forward(inputs, attrs):
    (z,) = inputs
    values = z.numpy()
    peak = values.max(axis=-1, keepdims=True)
    lse = peak + np.log(np.exp(values - peak).sum(axis=-1, keepdims=True))
    out = Tensor(values - lse, dtype=values.dtype)
    return out, {"y": out.numpy()}


def _log_softmax_backward(g, saved, attrs):
    softmax = np.exp(saved["y"])
    return (g - softmax * g.sum(axis=-1, keepdims=True),)


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _sigmoid_forward(inputs, attrs):
    (z,) = inputs
    out = Tensor(stable_sigmoid(z.numpy()), dtype=z.dtype)
    return out, {"y": out.numpy()}


def _sigmoid_backward(g, saved, attrs):
    y = saved["y"]
    return (g * y * (1.0 - y),)


def _log_sigmoid_forward(inputs, attrs):
    (z,) = inputs
    values = z.numpy()
    return Tensor(-np.logaddexp(0.0, -values), dtype=values.dtype), {"z": values}


def _log_sigmoid_backward(g, saved, attrs):
    return (g * stable_sigmoid(-saved["z"]),)


register("contract", _contract_forward, _contract_backward)
register("matmul", _matmul_forward, _matmul_backward)
register("reshape", _reshape_forward, _reshape_backward)
register("permute", _permute_forward, _permute_backward)
register("index", _index_forward, _index_backward)
register("elementwise", _elementwise_forward, _elementwise_backward)
register("scalar_map", _scalar_map_forward, _scalar_map_backward)
register("sum", _sum_forward, _sum_backward)
register("batch_norm", _batch_norm_forward, _batch_norm_backward)
register("log_softmax", _log_softmax_forward, _log_softmax_backward)
register("sigmoid", _sigmoid_forward, _sigmoid_backward)
register("log_sigmoid", _log_sigmoid_forward, _log_sigmoid_backward)


class Tape:
    """Records tracked operations for one forward pass.

    With `record=False` operations are evaluated but nothing is kept, which
    is how evaluation runs the same forward code without building a graph.
    """

    def __init__(self, record: bool = True):
        self.record_enabled = record
        self.nodes: list[TapeNode] = []
        self._parameters: dict[str, int] = {}
        self._consumed = False

    # leaves ---------------------------------------------------------------

    def parameter(self, name: str, value: Tensor) -> Variable:
        """Register a trainable leaf; it will receive a gradient on backward."""
        if not self.record_enabled:
            return Variable(value)
        if name in self._parameters:
            raise TapeError(f"parameter {name!r} registered twice")
        node = self._append("parameter", (), (), {}, {}, value.shape)
        self._parameters[name] = node.index
        return Variable(value, node.index)

    @staticmethod
    def constant(value: Tensor) -> Variable:
        return Variable(value if isinstance(value, Tensor) else Tensor(value))

    # recording ------------------------------------------------------------

    def record(self, name: str, inputs: Sequence[Variable], /, **attrs: Any) -> Variable:
        """forward_record: evaluate `name` and append a TapeNode if any input is tracked."""
        rule = _RULES.get(name)
        if rule is None:
            raise UnsupportedOpError(f"unsupported op {name!r}; supported: {sorted(_RULES)}")
        values = [variable.value for variable in inputs]
        out, saved = rule.forward(values, attrs)
        if not self.record_enabled or not any(variable.tracked for variable in inputs):
            return Variable(out)
        node = self._append(
            name,
            tuple(variable.index for variable in inputs),
            tuple(value.shape for value in values),
            saved,
            attrs,
            out.shape,
        )
        return Variable(out, node.index)

    def _append(self, op, inputs, input_shapes, saved, attrs, shape) -> TapeNode:
        node = TapeNode(len(self.nodes), op, inputs, input_shapes, saved, attrs, tuple(shape))
        self.nodes.append(node)
        self._consumed = False
        return node

    # op helpers -------------------------------------------------------------

    def contract(self, a: Variable, b: Variable, axes_a: Sequence[int], axes_b: Sequence[int]) -> Variable:
        return self.record("contract", [a, b], axes_a=tuple(axes_a), axes_b=tuple(axes_b))

    def matmul(self, a: Variable, b: Variable) -> Variable:
        return self.record("matmul", [a, b])

    def reshape(self, t: Variable, shape: Sequence[int]) -> Variable:
        return self.record("reshape", [t], shape=tuple(shape))

    def permute(self, t: Variable, perm: Sequence[int]) -> Variable:
        return self.record("permute", [t], perm=tuple(perm))

    def index(self, t: Variable, axis: int, position: int) -> Variable:
        return self.record("index", [t], axis=axis, position=position)

    def add(self, a: Variable, b: Variable) -> Variable:
        return self.record("elementwise", [a, b], op=ElementwiseOp.ADD.value)

    def sub(self, a: Variable, b: Variable) -> Variable:
        return self.record("elementwise", [a, b], op=ElementwiseOp.SUB.value)

    def mul(self, a: Variable, b: Variable) -> Variable:
        return self.record("elementwise", [a, b], op=ElementwiseOp.MUL.value)

    def scalar_map(self, t: Variable, op: ScalarOp, c: Optional[float] = None) -> Variable:
        return self.record("scalar_map", [t], op=ScalarOp(op).value, c=c)

    def sum(self, t: Variable, axes: Optional[Sequence[int]] = None) -> Variable:
        return self.record("sum", [t], axes=None if axes is None else tuple(axes))

    def batch_norm(
        self,
        x: Variable,
        scale: Variable,
        shift: Variable,
        *,
        train: bool,
        eps: float,
        mean: Optional[np.ndarray] = None,
        var: Optional[np.ndarray] = None,
    ) -> Variable:
        return self.record("batch_norm", [x, scale, shift], train=train, eps=eps, mean=mean, var=var)

    def log_softmax(self, z: Variable) -> Variable:
        return self.record("log_softmax", [z])

    def sigmoid(self, z: Variable) -> Variable:
        return self.record("sigmoid", [z])

    def log_sigmoid(self, z: Variable) -> Variable:
        return self.record("log_sigmoid", [z])

    # reverse pass -----------------------------------------------------------

    def backward(self, loss: Variable) -> dict[str, Tensor]:
        """Gradients of a scalar loss for every registered parameter."""
        if loss.shape != ():
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.nodes or not loss.tracked:
            raise TapeError("backward called on an empty tape or an untracked loss")
        if self._consumed:
            raise TapeError("backward already ran on this tape; record a new forward first")
        self._consumed = True

        dtype = loss.value.dtype
        grads: dict[int, np.ndarray] = {loss.index: np.ones((), dtype=dtype)}
        owned: set[int] = set()
        parameter_indices = set(self._parameters.values())

        for node in reversed(self.nodes[: loss.index + 1]):
            g = grads.get(node.index)
            if g is None or node.op == "parameter":
                continue
            if node.index not in parameter_indices:
                del grads[node.index]
            input_grads = _RULES[node.op].backward(g, node.saved, node.attrs)
            for input_index, shape, grad in zip(node.inputs, node.input_shapes, input_grads):
                if input_index is None or grad is None:
                    continue
                self._accumulate(grads, owned, input_index, shape, grad, dtype)

        return {
            name: Tensor(grads[index] if index in grads else np.zeros(self.nodes[index].shape), dtype=dtype)
            for name, index in self._parameters.items()
        }

    @staticmethod
    def _accumulate(grads, owned, index, shape, grad, dtype) -> None:
        existing = grads.get(index)
        if isinstance(grad, SliceGrad):
            if index not in owned:
                grads[index] = np.zeros(shape, dtype=dtype) if existing is None else np.array(existing, dtype=dtype)
                owned.add(index)
            selector = [slice(None)] * len(shape)
            selector[grad.axis] = grad.position
            grads[index][tuple(selector)] += grad.value
            return
        grad = np.asarray(grad)
        if grad.shape != tuple(shape):
            raise TapeError(f"adjoint shape {grad.shape} does not match input shape {tuple(shape)}")
        if existing is None:
            grads[index] = grad
            owned.discard(index)
        else:
            grads[index] = existing + grad
            owned.add(index)
