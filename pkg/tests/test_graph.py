import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import dense_normalized_adjacency, random_graph
from spectral_complement import (
    InputError,
    ParseError,
    build_graph,
    normalized_adjacency,
    normalized_laplacian,
    read_edge_list,
    spmm,
    write_edge_list,
)


def test_build_k2(k2):
    assert k2.num_edges == 1
    assert k2.degrees.tolist() == [1, 1]


def test_build_drops_duplicates_and_self_loops():
    g = build_graph([(0, 1), (1, 0), (2, 2)], 3)
    assert g.num_edges == 1
    assert g.degrees.tolist() == [1, 1, 0]
    assert g.neighbors(2).size == 0


def test_build_triangle(k3):
    assert k3.degrees.tolist() == [2, 2, 2]
    assert k3.edges.tolist() == [[0, 1], [0, 2], [1, 2]]


def test_build_rejects_out_of_range_pair():
    with pytest.raises(InputError, match=r"\(1, 5\)"):
        build_graph([(0, 1), (1, 5)], 3)


def test_neighbors_sorted_and_symmetric():
    g = build_graph([(3, 0), (0, 2), (2, 1), (0, 1)], 4)
    assert g.neighbors(0).tolist() == [1, 2, 3]
    for u, v in g.edges:
        assert v in g.neighbors(u) and u in g.neighbors(v)
    assert g.has_edge(3, 0) and not g.has_edge(1, 3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=60))
def test_graph_invariants(pairs):
    g = build_graph(pairs, 12)
    assert (g.edges[:, 0] < g.edges[:, 1]).all()
    assert len({tuple(e) for e in g.edges.tolist()}) == g.num_edges
    assert g.degrees.sum() == 2 * g.num_edges
    assert (np.diff(g.row_offsets) == g.degrees).all()
    for i in range(12):
        assert (np.diff(g.neighbors(i)) > 0).all()
    expected = {(min(u, v), max(u, v)) for u, v in pairs if u != v}
    assert {tuple(e) for e in g.edges.tolist()} == expected


def test_normalized_adjacency_k2(k2):
    np.testing.assert_array_equal(normalized_adjacency(k2).toarray(), [[0, 1], [1, 0]])


def test_normalized_adjacency_p3(p3):
    s = 1 / np.sqrt(2)
    expected = [[0, s, 0], [s, 0, s], [0, s, 0]]
    np.testing.assert_allclose(normalized_adjacency(p3).toarray(), expected, atol=1e-15)


def test_normalized_adjacency_k3(k3):
    expected = 0.5 * (np.ones((3, 3)) - np.eye(3))
    np.testing.assert_allclose(normalized_adjacency(k3).toarray(), expected, atol=1e-15)


def test_laplacian_examples(k2, k3):
    np.testing.assert_array_equal(normalized_laplacian(k2).toarray(), [[1, -1], [-1, 1]])
    L = normalized_laplacian(k3).toarray()
    np.testing.assert_allclose(np.diag(L), 1.0)
    np.testing.assert_allclose(L[~np.eye(3, dtype=bool)], -0.5)


def test_laplacian_isolated_node_row_is_identity():
    g = build_graph([(0, 1)], 3)
    L = normalized_laplacian(g).toarray()
    np.testing.assert_array_equal(L[2], [0, 0, 1])
    assert normalized_adjacency(g).getrow(2).nnz == 0


@pytest.mark.parametrize("seed", range(10))
def test_operator_invariants_on_random_graphs(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(int(rng.integers(2, 50)), 0.15, rng)
    A = normalized_adjacency(g)
    L = normalized_laplacian(g)
    for S in (A, L):
        dense = S.toarray()
        assert np.abs(dense - dense.T).max() < 1e-12
        assert (np.diff(S.indptr) >= 0).all()
        for r in range(S.shape[0]):
            cols = S.indices[S.indptr[r]:S.indptr[r + 1]]
            assert (np.diff(cols) > 0).all()
    np.testing.assert_allclose(A.toarray(), dense_normalized_adjacency(g), atol=1e-15)
    assert np.abs(A.toarray()).max() <= 1.0
    kernel = np.sqrt(g.degrees.astype(float))
    assert np.abs(spmm(L, kernel)).max() < 1e-10


def test_spmm_examples(k2):
    A = normalized_adjacency(k2)
    np.testing.assert_array_equal(spmm(A, np.eye(2)), [[0, 1], [1, 0]])
    np.testing.assert_allclose(spmm(normalized_laplacian(k2), [[1.0], [1.0]]), [[0], [0]])
    np.testing.assert_array_equal(spmm(A, np.zeros((2, 3))), np.zeros((2, 3)))


def test_spmm_shape_mismatch(k2):
    with pytest.raises(InputError):
        spmm(normalized_adjacency(k2), np.ones((3, 2)))


@pytest.mark.parametrize("seed", range(5))
def test_spmm_matches_dense_product(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_graph(50, 0.1, rng)
    H = rng.normal(size=(50, 7))
    dense = dense_normalized_adjacency(g)
    expected = np.array([[sum(dense[i, k] * H[k, j] for k in range(50)) for j in range(7)]
                         for i in range(50)])
    np.testing.assert_allclose(spmm(normalized_adjacency(g), H), expected, atol=1e-12)


def test_edge_list_round_trip(tmp_path):
    g = build_graph([(0, 3), (1, 2)], 5)
    path = tmp_path / "g.tsv"
    write_edge_list(g, path)
    back = read_edge_list(path)
    assert back.num_nodes == 5
    assert back.edges.tolist() == g.edges.tolist()


def test_edge_list_comments_and_errors(tmp_path):
    path = tmp_path / "g.tsv"
    path.write_text("# a comment\n0\t1\n\n1\t2\n")
    assert read_edge_list(path).num_edges == 2
    path.write_text("0\t1\n1\tx\n")
    with pytest.raises(ParseError) as info:
        read_edge_list(path)
    assert info.value.line == 2
