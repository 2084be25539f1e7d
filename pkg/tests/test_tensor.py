import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vgcn.tensor import (MultCounter, counting, degree_normalize, dense_matmul, scale_rows,
                         sparse_from_edges, spmm)

from conftest import random_edges


def dense_oracle(edges, m, c):
    a = np.zeros((m, m))
    for i, j in edges:
        a[i, j] = a[j, i] = 1.0
    return a + c * np.eye(m)


def test_dense_matmul_hand_example():
    with counting() as c:
        out = dense_matmul([[1, 2], [3, 4]], [[5], [6]])
    assert out.tolist() == [[17], [39]]
    assert c.total == 2 * 2 * 1


def test_dense_matmul_identity_and_zero(rng):
    b = rng.random((4, 3))
    with counting() as c:
        np.testing.assert_array_equal(dense_matmul(np.eye(4), b), b)
    assert c.total == 4 * 4 * 3
    assert not dense_matmul(np.zeros((2, 4)), b).any()


def test_dense_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        dense_matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_counter_is_silent_outside_context(rng):
    dense_matmul(rng.random((3, 3)), rng.random((3, 3)))
    with counting() as c:
        pass
    assert c.total == 0


def test_counter_stages_and_reset():
    c = MultCounter()
    c.add(5, "weight")
    c.add(2, "adjacency")
    assert c.total == 7 and c.snapshot() == {"weight": 5, "adjacency": 2}
    c.reset()
    assert c.total == 0 and c.snapshot() == {}


def test_sparse_from_edges_examples():
    np.testing.assert_array_equal(sparse_from_edges([(0, 1)], 2, 6).to_dense(), [[6, 1], [1, 6]])
    np.testing.assert_array_equal(sparse_from_edges([], 3, 6).to_dense(), 6 * np.eye(3))


def test_sparse_from_edges_random_matches_dense(rng):
    e = random_edges(rng, 50, 0.1)
    np.testing.assert_array_equal(sparse_from_edges(e, 50, 1.0).to_dense(), dense_oracle(e, 50, 1))


def test_sparse_from_edges_collapses_duplicates():
    adj = sparse_from_edges([(0, 1), (1, 0), (0, 1)], 2, 1.0)
    assert adj.nnz == 4
    for r in range(adj.n):
        cols = adj.indices[adj.indptr[r]:adj.indptr[r + 1]]
        assert len(set(cols.tolist())) == len(cols)


@pytest.mark.parametrize("edges", [[(0, 3)], [(-1, 0)], [(1, 1)]])
def test_sparse_from_edges_rejects_bad_edges(edges):
    with pytest.raises(ValueError):
        sparse_from_edges(edges, 3, 1.0)


def test_spmm_examples():
    adj = sparse_from_edges([(0, 1)], 2, 6)
    np.testing.assert_array_equal(spmm(adj, np.eye(2)), [[6, 1], [1, 6]])
    h = np.arange(12.0).reshape(4, 3)
    np.testing.assert_array_equal(spmm(sparse_from_edges([], 4, 6), h), 6 * h)


def test_spmm_count_hundred_nodes(rng):
    # 300 undirected edges -> 600 off-diagonal entries, plus 100 diagonal ones
    iu, ju = np.triu_indices(100, 1)
    pick = rng.choice(len(iu), 300, replace=False)
    adj = sparse_from_edges(np.stack([iu[pick], ju[pick]], 1), 100, 1.0)
    assert adj.nnz == 700
    with counting() as c:
        spmm(adj, rng.random((100, 4)))
    assert c.total == 2800 and c.stages["adjacency"] == 2800


def test_spmm_shape_mismatch():
    with pytest.raises(ValueError):
        spmm(sparse_from_edges([], 3, 1.0), np.zeros((4, 2)))


def test_scale_rows_counts(rng):
    h = rng.random((5, 3))
    with counting() as c:
        out = scale_rows(np.arange(5.0), h, "deg_scale_pre")
    np.testing.assert_array_equal(out, np.arange(5.0)[:, None] * h)
    assert c.stages["deg_scale_pre"] == 15


def test_degree_normalize_examples():
    norm = degree_normalize(sparse_from_edges([(0, 1)], 2, 1.0))
    np.testing.assert_allclose(norm.to_dense(), [[0.5, 0.5], [0.5, 0.5]])
    single = degree_normalize(sparse_from_edges([], 1, 1.0))
    np.testing.assert_array_equal(single.to_dense(), [[1.0]])


def test_degree_normalize_counts_and_rejects_zero_rows():
    adj = sparse_from_edges([(0, 1), (1, 2)], 3, 1.0)
    with counting() as c:
        degree_normalize(adj)
    assert c.stages["normalize"] == 2 * adj.nnz
    with pytest.raises(ValueError):
        degree_normalize(adj.with_data(np.zeros(adj.nnz)))


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 64), p=st.floats(0, 1), c=st.floats(0.5, 8), seed=st.integers(0, 2**31))
def test_spmm_equals_dense_and_preserves_symmetry(m, p, c, seed):
    rng = np.random.default_rng(seed)
    e = random_edges(rng, m, p)
    adj = sparse_from_edges(e, m, c)
    d = adj.to_dense()
    np.testing.assert_array_equal(d, d.T)
    h = rng.standard_normal((m, 3))
    np.testing.assert_allclose(spmm(adj, h), dense_oracle(e, m, c) @ h, rtol=0, atol=1e-12)
    nd = degree_normalize(adj).to_dense()
    np.testing.assert_allclose(nd, nd.T, rtol=0, atol=1e-15)
