import numpy as np

from app.core.autodiff import Tape, Variable
from app.core.errors import FormatError, ShapeMismatchError
from app.core.tensor import ScalarOp, Tensor


def check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    upper = max(n_classes, 2) - 1  # M=1 still takes binary labels
    if labels.size and (labels.min() < 0 or labels.max() > upper):
        raise FormatError(f"labels must lie in [0, {upper}], got range [{labels.min()}, {labels.max()}]")
    return labels


def trace_cross_entropy(tape: Tape, logits: Variable, labels) -> Variable:
    """Mean negative log-likelihood of (batch, M) logits.

    M >= 2 uses log-softmax; M = 1 is the binary sigmoid form, written as
    -log sigmoid(+z) for label 1 and -log sigmoid(-z) for label 0.
    """
    if len(logits.shape) != 2:
        raise ShapeMismatchError(f"logits must be (batch, M), got {logits.shape}")
    batch, n_classes = logits.shape
    labels = check_labels(labels, n_classes)
    if labels.shape != (batch,):
        raise ShapeMismatchError(f"{labels.shape[0]} labels for a batch of {batch}")
    dtype = logits.value.dtype

    if n_classes == 1:
        signs = tape.constant(Tensor((2.0 * labels - 1.0)[:, None], dtype=dtype))
        per_sample = tape.log_sigmoid(tape.mul(logits, signs))
    else:
        onehot = np.zeros((batch, n_classes), dtype=dtype)
        onehot[np.arange(batch), labels] = 1.0
        per_sample = tape.mul(tape.log_softmax(logits), tape.constant(Tensor(onehot, dtype=dtype)))
    return tape.scalar_map(tape.sum(per_sample), ScalarOp.SCALE, -1.0 / batch)


def cross_entropy(logits, labels) -> float:
    tape = Tape(record=False)
    value = logits.value if isinstance(logits, Variable) else Tensor(logits)
    return trace_cross_entropy(tape, Variable(value), labels).value.item()
