import numpy as np
import pytest
import scipy.sparse as sp

from inheritlab.operators import OperatorMatrix, diagonal, read_triplets, smallest_singular_value


@pytest.fixture
def weighted_op(rng):
    n = 30
    A = sp.random(n, n, density=0.2, random_state=7) + 1j * sp.random(n, n, density=0.2, random_state=8)
    A = A + 5.0 * sp.identity(n)
    return OperatorMatrix(A, rng.uniform(0.5, 2.0, n), "A")


def test_real_and_imaginary_parts(weighted_op, rng):
    re, im = weighted_op.real_part(), weighted_op.imag_part()
    assert re.selfadjoint_defect() < 1e-14
    assert im.selfadjoint_defect() < 1e-14
    np.testing.assert_allclose((re.matrix + 1j * im.matrix).toarray(), weighted_op.dense(), atol=1e-13)
    u = rng.normal(size=weighted_op.n) + 1j * rng.normal(size=weighted_op.n)
    v = rng.normal(size=weighted_op.n)
    lhs = weighted_op.inner(u, weighted_op.apply(v))
    rhs = weighted_op.inner(weighted_op.adjoint().apply(u), v)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_commutator_of_selfadjoint_parts_is_selfadjoint(weighted_op):
    comm = weighted_op.real_part().commutator(weighted_op.imag_part())
    assert comm.selfadjoint
    assert comm.selfadjoint_defect() < 1e-12


def test_algebra_and_shift(weighted_op):
    shifted = weighted_op.shifted(2.0)
    np.testing.assert_allclose(shifted.dense(), weighted_op.dense() - 2.0 * np.eye(weighted_op.n))
    both = weighted_op + weighted_op.scaled(-1.0)
    assert both.frobenius() == 0.0
    assert (weighted_op @ weighted_op).label == "A·A"


def test_sparse_and_dense_sigma_min_agree(weighted_op):
    sparse = smallest_singular_value(weighted_op, "sparse")
    dense = smallest_singular_value(weighted_op, "dense")
    assert sparse == pytest.approx(dense, rel=1e-8)
    with pytest.raises(ValueError):
        smallest_singular_value(weighted_op, "qr")


def test_sigma_min_of_diagonal_operator():
    op = diagonal(np.array([3.0, -0.5, 2.0, 4.0]), np.array([1.0, 2.0, 3.0, 4.0]), "D")
    assert op.selfadjoint
    assert smallest_singular_value(op, "dense") == pytest.approx(0.5)


def test_triplet_export(tmp_path, weighted_op):
    path = weighted_op.to_triplets(tmp_path / "A.triplets")
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == f"# 30 30 {weighted_op.matrix.nnz} A"
    matrix, label = read_triplets(path)
    assert label == "A"
    assert abs(matrix - weighted_op.matrix).max() == 0.0


def test_measure_validation():
    with pytest.raises(ValueError):
        OperatorMatrix(sp.identity(3), np.ones(2))
    with pytest.raises(ValueError):
        OperatorMatrix(sp.identity(3), np.array([1.0, 0.0, 1.0]))
