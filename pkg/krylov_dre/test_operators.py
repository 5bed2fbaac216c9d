import os

import numpy as np
import pytest
import scipy.sparse

from . import operators
from .matrix_market import load_matrix_market
from .problems import gen_advdiff, gen_sym2d

TEST_DATA_DIR = os.path.join(os.path.dirname(__file__), "test_data")


def data_file(name):
    return os.path.join(TEST_DATA_DIR, name)


@pytest.fixture
def generalized():
    A_hat = load_matrix_market(data_file("convection6.mtx"))
    E_hat = load_matrix_market(data_file("mass6.mtx"))
    return A_hat.toarray(), E_hat.toarray(), operators.MassTransformOperator(
        A_hat, E_hat
    )


def test_sparse_operator_products():
    A = gen_advdiff(4)
    op = operators.as_operator(A)
    x = np.arange(16, dtype=float)
    np.testing.assert_allclose(op.matvec(x), A @ x)
    np.testing.assert_allclose(op.rmatvec(x), A.T @ x)
    np.testing.assert_allclose(op.todense(), A.toarray())
    assert not op.symmetric


def test_as_operator_rejects_lists():
    with pytest.raises(TypeError):
        operators.as_operator([[1.0]])


def test_as_operator_rejects_rectangular():
    with pytest.raises(ValueError):
        operators.as_operator(scipy.sparse.csr_matrix((3, 2)))


def test_mass_transform_dense_equivalent(generalized):
    A_hat, E_hat, op = generalized
    F = op.factor.apply_lower(np.eye(6))
    np.testing.assert_allclose(F @ F.T, E_hat, atol=1e-12)
    A = np.linalg.solve(F, np.linalg.solve(F, A_hat.T).T)
    np.testing.assert_allclose(op.todense(), A, atol=1e-12)
    np.testing.assert_allclose(op.rmatmat(np.eye(6)), A.T, atol=1e-12)


@pytest.mark.parametrize("transpose", [False, True])
def test_mass_transform_shifted_solve(generalized, transpose):
    _, _, op = generalized
    A = op.todense()
    M = (A.T if transpose else A) - 0.7 * np.eye(6)
    rhs = np.linspace(1.0, 2.0, 6)
    x = op.solve_shifted(0.7, rhs, transpose=transpose)
    np.testing.assert_allclose(M @ x, rhs, atol=1e-10)


def test_identity_mass_is_plain_operator():
    A = gen_sym2d(3)
    op = operators.MassTransformOperator(A, scipy.sparse.identity(9))
    np.testing.assert_allclose(op.todense(), A.toarray(), atol=1e-12)
    assert op.symmetric


def test_use_backend():
    op = operators.as_operator(gen_sym2d(4))
    op.use_backend("cg")
    assert op.cache.backend == "cg"
    with pytest.raises(ValueError):
        op.use_backend("nope")


def test_spectral_bounds_bracket_spectrum():
    A = gen_sym2d(6)
    eigs = -np.linalg.eigvalsh(A.toarray())
    s_min, s_max = operators.estimate_spectral_bounds(operators.as_operator(A))
    assert 0.0 < s_min < s_max
    assert s_min == pytest.approx(eigs.min(), rel=0.3)
    assert s_max == pytest.approx(eigs.max(), rel=0.3)
