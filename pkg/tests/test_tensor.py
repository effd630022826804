import numpy as np
import pytest

from app.core.errors import AxisError, DomainError, NonFiniteError, ShapeMismatchError
from app.core.tensor import (
    Tensor,
    contract,
    elementwise,
    index,
    inverse_permutation,
    permute,
    reshape,
    scalar_map,
    total,
)


def test_contract_identity_leaves_matrix_unchanged():
    """Contracting I3 with B over (1, 0) returns B."""
    b = np.arange(12.0).reshape(3, 4)
    out = contract(Tensor(np.eye(3)), Tensor(b), [1], [0])
    np.testing.assert_array_equal(out.numpy(), b)


def test_contract_vector_dot():
    """[1,2,3] . [4,5,6] is 32."""
    out = contract(Tensor([1.0, 2.0, 3.0]), Tensor([4.0, 5.0, 6.0]), [0], [0])
    assert out.shape == ()
    assert out.item() == 32.0


def test_contract_matches_loop_nest():
    """Order-3 by matrix contraction equals an explicit loop over the shared index."""
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))
    expected = np.zeros((2, 3, 5))
    for i in range(2):
        for j in range(3):
            for m in range(5):
                expected[i, j, m] = sum(a[i, j, k] * b[k, m] for k in range(4))
    np.testing.assert_allclose(contract(Tensor(a), Tensor(b), [2], [0]).numpy(), expected, rtol=1e-12)


def test_contract_integer_matrices_exact():
    """Single-axis contraction of integer matrices is the textbook product exactly."""
    rng = np.random.default_rng(1)
    a, b = rng.integers(-5, 5, size=(4, 3)).astype(float), rng.integers(-5, 5, size=(3, 2)).astype(float)
    expected = [[sum(a[i, k] * b[k, j] for k in range(3)) for j in range(2)] for i in range(4)]
    np.testing.assert_array_equal(contract(Tensor(a), Tensor(b), [1], [0]).numpy(), expected)


def test_contract_is_bilinear():
    """contract(alpha a + beta a', b) = alpha contract(a, b) + beta contract(a', b)."""
    rng = np.random.default_rng(2)
    a, a2, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    lhs = contract(Tensor(2.5 * a - 0.5 * a2), Tensor(b), [1], [0]).numpy()
    rhs = 2.5 * contract(Tensor(a), Tensor(b), [1], [0]).numpy() - 0.5 * contract(Tensor(a2), Tensor(b), [1], [0]).numpy()
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_contract_errors():
    """Mismatched extents and bad axes are rejected."""
    with pytest.raises(ShapeMismatchError, match="3"):
        contract(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))), [1], [0])
    with pytest.raises(AxisError):
        contract(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))), [2], [0])
    with pytest.raises(AxisError):
        contract(Tensor(np.ones((3, 3))), Tensor(np.ones((3, 3))), [0, 0], [0, 1])


def test_reshape_preserves_order():
    """Reshape reinterprets the row-major buffer."""
    t = Tensor(np.arange(6.0))
    out = reshape(t, (2, 3))
    assert out.shape == (2, 3)
    np.testing.assert_array_equal(out.numpy().reshape(-1), np.arange(6.0))
    np.testing.assert_array_equal(reshape(out, (6,)).numpy(), t.numpy())


def test_reshape_index_arithmetic():
    """(2,3,4) -> (24,) -> (4,6) follows flat-index arithmetic."""
    data = np.arange(24.0).reshape(2, 3, 4)
    out = reshape(reshape(Tensor(data), (24,)), (4, 6)).numpy()
    for i in range(2):
        for j in range(3):
            for k in range(4):
                flat = i * 12 + j * 4 + k
                assert out[flat // 6, flat % 6] == data[i, j, k]


def test_reshape_count_mismatch():
    with pytest.raises(ShapeMismatchError):
        reshape(Tensor(np.ones(6)), (4, 2))


def test_permute_transpose_and_inverse():
    """Transpose matches m[j][i]; permute then inverse is bitwise identity."""
    m = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(permute(Tensor(m), (1, 0)).numpy(), m.T)
    data = np.random.default_rng(3).normal(size=(2, 3, 4))
    perm = (2, 0, 1)
    out = permute(Tensor(data), perm)
    for i in range(2):
        for j in range(3):
            for k in range(4):
                assert out.numpy()[k, i, j] == data[i, j, k]
    back = permute(out, inverse_permutation(perm))
    assert back.numpy().tobytes() == data.tobytes()
    assert permute(Tensor(data), (0, 1, 2)).numpy().tobytes() == data.tobytes()


def test_permute_invalid():
    with pytest.raises(AxisError):
        permute(Tensor(np.ones((2, 2))), (0, 0))


def test_elementwise_and_scalar_maps():
    """Pointwise arithmetic and scalar maps."""
    np.testing.assert_array_equal(elementwise(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]), "add").numpy(), [4.0, 6.0])
    np.testing.assert_array_equal(scalar_map(Tensor([1.0, -2.0]), "scale", 0.0).numpy(), [0.0, 0.0])
    x = np.linspace(-1.0, 1.0, 101)
    roundtrip = scalar_map(scalar_map(Tensor(x), "asin"), "sin").numpy()
    np.testing.assert_allclose(roundtrip, x, atol=1e-12)
    with pytest.raises(ShapeMismatchError):
        elementwise(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]), "mul")


def test_scalar_map_domain_errors():
    with pytest.raises(DomainError):
        scalar_map(Tensor([1.0, 0.0]), "log")
    with pytest.raises(DomainError):
        scalar_map(Tensor([1.5]), "asin")


def test_non_finite_values_are_errors():
    """Overflow surfaces as NonFiniteError instead of propagating inf."""
    with pytest.raises(NonFiniteError):
        scalar_map(Tensor([1000.0]), "exp")
    with pytest.raises(NonFiniteError):
        Tensor([np.nan])


def test_total_and_index():
    data = np.arange(24.0).reshape(2, 3, 4)
    assert total(Tensor(data)).item() == data.sum()
    np.testing.assert_array_equal(total(Tensor(data), [0, 2]).numpy(), data.sum(axis=(0, 2)))
    np.testing.assert_array_equal(index(Tensor(data), 1, 2).numpy(), data[:, 2, :])
    with pytest.raises(AxisError):
        index(Tensor(data), 1, 3)


def test_float32_is_kept():
    t = Tensor(np.ones(3, dtype=np.float32))
    assert t.dtype == np.float32
    assert Tensor(np.ones(3, dtype=np.int32)).dtype == np.float64
