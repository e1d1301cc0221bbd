"""Independent dense oracles used by the tests."""

import numpy as np

from spectral_complement import build_graph


def random_graph(n, p, rng):
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return build_graph(np.argwhere(upper), n)


def dense_adjacency(g):
    A = np.zeros((g.num_nodes, g.num_nodes))
    for u, v in g.edges:
        A[u, v] = A[v, u] = 1.0
    return A


def dense_normalized_adjacency(g):
    A = dense_adjacency(g)
    out = np.zeros_like(A)
    deg = A.sum(axis=1)
    for i in range(len(A)):
        for j in range(len(A)):
            if A[i, j]:
                out[i, j] = 1.0 / np.sqrt(deg[i] * deg[j])
    return out
