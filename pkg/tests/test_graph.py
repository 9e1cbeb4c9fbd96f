import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfgnn.graph import CsrMatrix, build_operators, from_edges, spmm

from conftest import random_graph


def naive_spmm(S, D):
    dense = S.to_dense()
    out = np.zeros((dense.shape[0], D.shape[1]))
    for i in range(dense.shape[0]):
        for j in range(D.shape[1]):
            acc = 0.0
            for k in range(dense.shape[1]):
                acc += dense[i, k] * D[k, j]
            out[i, j] = acc
    return out


def test_single_edge():
    A = from_edges(2, [(0, 1)])
    np.testing.assert_array_equal(A.to_dense(), [[0, 1], [1, 0]])


def test_empty_graph():
    A = from_edges(1, [])
    assert A.nnz == 0
    np.testing.assert_array_equal(A.to_dense(), [[0]])


def test_path_has_four_entries(path3):
    assert path3.nnz == 4
    assert list(path3.row_ptr) == [0, 1, 3, 4]


def test_duplicates_collapse():
    A = from_edges(3, [(0, 1), (1, 0), (0, 1)])
    assert A.nnz == 2
    assert set(A.values) == {1.0}


def test_rejects_bad_edges():
    with pytest.raises(ValueError):
        from_edges(2, [(0, 2)])
    with pytest.raises(ValueError):
        from_edges(2, [(1, 1)])


def test_csr_invariants_enforced():
    with pytest.raises(ValueError):
        CsrMatrix(2, 2, np.array([0, 2, 2]), np.array([1, 0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        CsrMatrix(1, 2, np.array([0, 1]), np.array([0]), np.array([0.0]))
    with pytest.raises(ValueError):
        CsrMatrix(1, 2, np.array([0, 1]), np.array([5]), np.array([1.0]))


def test_operators_single_edge(edge2_ops):
    np.testing.assert_allclose(edge2_ops.adj_norm.to_dense(), [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_allclose(edge2_ops.lap_norm.to_dense(), [[0.5, -0.5], [-0.5, 0.5]])


def test_operators_isolated_node():
    ops = build_operators(from_edges(1, []))
    np.testing.assert_array_equal(ops.adj_norm.to_dense(), [[1.0]])
    np.testing.assert_array_equal(ops.lap_norm.to_dense(), [[0.0]])


def test_operators_path(path3):
    # D̄ = diag(2, 3, 2)
    A = build_operators(path3).adj_norm.to_dense()
    expected = np.array([
        [1 / 2, 1 / np.sqrt(6), 0],
        [1 / np.sqrt(6), 1 / 3, 1 / np.sqrt(6)],
        [0, 1 / np.sqrt(6), 1 / 2],
    ])
    np.testing.assert_allclose(A, expected, atol=1e-15)


def test_build_rejects_asymmetric():
    A = from_edges(2, [(0, 1)], symmetrize=False)
    with pytest.raises(ValueError):
        build_operators(A)


def test_adj_plus_lap_is_identity(rng):
    for _ in range(5):
        ops = build_operators(random_graph(25, 0.2, rng))
        total = ops.adj_norm.to_dense() + ops.lap_norm.to_dense()
        np.testing.assert_allclose(total, np.eye(25), atol=1e-12, rtol=0)


def test_filter_response(rng):
    for _ in range(3):
        ops = build_operators(random_graph(40, 0.15, rng))
        L = ops.lap_norm.to_dense()
        lam, U = np.linalg.eigh(L)
        assert lam.min() > -1e-12 and lam.max() < 2.0
        for k in range(len(lam)):
            u = U[:, k]
            assert np.linalg.norm(spmm(ops.adj_norm, u[:, None])[:, 0] - (1 - lam[k]) * u) <= 1e-8


def test_spmm_examples(edge2_ops):
    D = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(spmm(CsrMatrix.from_dense(np.eye(3)), D), D)
    np.testing.assert_array_equal(spmm(CsrMatrix.from_dense(np.zeros((3, 3))), D), np.zeros((3, 2)))
    np.testing.assert_allclose(spmm(edge2_ops.adj_norm, np.array([[1.0], [3.0]])), [[2.0], [2.0]])


def test_spmm_shape_mismatch(edge2_ops):
    with pytest.raises(ValueError):
        spmm(edge2_ops.adj_norm, np.ones((3, 1)))


def test_spmm_against_triple_loop(rng):
    for _ in range(5):
        dense = rng.normal(size=(20, 20)) * (rng.random((20, 20)) < 0.2)
        S = CsrMatrix.from_dense(dense)
        D = rng.normal(size=(20, 4))
        assert np.abs(spmm(S, D) - naive_spmm(S, D)).max() <= 1e-12


def test_spmm_repeatable(rng):
    ops = build_operators(random_graph(50, 0.1, rng))
    D = rng.normal(size=(50, 8))
    assert spmm(ops.adj_norm, D).tobytes() == spmm(ops.adj_norm, D).tobytes()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=30))
def test_from_edges_canonical(n, raw):
    edges = [(i % n, j % n) for i, j in raw if i % n != j % n]
    A = from_edges(n, edges)
    assert A.is_symmetric()
    assert A.row_ptr[0] == 0 and A.row_ptr[-1] == A.nnz
    for i in range(n):
        cols = A.col_idx[A.row_ptr[i]:A.row_ptr[i + 1]]
        assert np.all(np.diff(cols) > 0)
        assert i not in cols
