"""Item graph container, normalised operators and the sparse-dense kernel."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError, ParseError


@dataclass(frozen=True, eq=False)
class ItemGraph:
    """Undirected simple graph over items ``0..num_nodes-1``.

    ``edges`` holds each undirected edge once as ``(u, v)`` with ``u < v``,
    sorted lexicographically. ``row_offsets``/``col_indices`` is the symmetric
    CSR adjacency with sorted neighbours.
    """

    num_nodes: int
    edges: np.ndarray
    row_offsets: np.ndarray
    col_indices: np.ndarray
    degrees: np.ndarray
    _keys: np.ndarray = field(repr=False)

    @property
    def num_edges(self):
        return len(self.edges)

    def neighbors(self, i):
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def has_edge(self, i, j):
        key = min(i, j) * self.num_nodes + max(i, j)
        pos = np.searchsorted(self._keys, key)
        return bool(pos < len(self._keys) and self._keys[pos] == key)

    def adjacency(self):
        data = np.ones(len(self.col_indices), dtype=np.float64)
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )


def build_graph(edge_pairs, num_nodes):
    """Build an :class:`ItemGraph` from raw ``(u, v)`` pairs.

    Self-loops are dropped and duplicates (in either orientation) collapsed.

    >>> g = build_graph([(0, 1), (1, 0), (2, 2)], 3)
    >>> g.num_edges, g.degrees.tolist()
    (1, [1, 1, 0])
    """
    num_nodes = int(num_nodes)
    if num_nodes < 0:
        raise InputError(f"num_nodes must be nonnegative, got {num_nodes}")
    pairs = np.asarray(edge_pairs, dtype=np.int64)
    if pairs.size == 0:
        pairs = pairs.reshape(0, 2)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise InputError(f"edge_pairs must have shape (E, 2), got {pairs.shape}")
    bad = np.flatnonzero((pairs < 0).any(axis=1) | (pairs >= num_nodes).any(axis=1))
    if len(bad):
        u, v = pairs[bad[0]]
        raise InputError(
            f"edge ({u}, {v}) has a node id outside [0, {num_nodes})"
        )

    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    keys = np.unique(lo * num_nodes + hi)
    edges = np.column_stack([keys // num_nodes, keys % num_nodes]) if len(keys) else (
        np.empty((0, 2), dtype=np.int64)
    )

    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    degrees = np.bincount(rows, minlength=num_nodes).astype(np.int64)
    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(degrees, out=row_offsets[1:])
    return ItemGraph(
        num_nodes=num_nodes,
        edges=edges.astype(np.int64),
        row_offsets=row_offsets,
        col_indices=cols.astype(np.int64),
        degrees=degrees,
        _keys=keys,
    )


def _inv_sqrt_degrees(g):
    out = np.zeros(g.num_nodes, dtype=np.float64)
    nz = g.degrees > 0
    out[nz] = 1.0 / np.sqrt(g.degrees[nz])
    return out


def normalized_adjacency(g):
    """Return ``D^-1/2 A D^-1/2`` as CSR; isolated nodes get empty rows."""
    s = _inv_sqrt_degrees(g)
    rows = np.repeat(np.arange(g.num_nodes), g.degrees)
    values = s[rows] * s[g.col_indices]
    return sp.csr_matrix(
        (values, g.col_indices.copy(), g.row_offsets.copy()),
        shape=(g.num_nodes, g.num_nodes),
    )


def normalized_laplacian(g):
    """Return ``I - D^-1/2 A D^-1/2`` with an explicit unit diagonal."""
    lap = sp.identity(g.num_nodes, format="csr") - normalized_adjacency(g)
    lap = sp.csr_matrix(lap)
    lap.sort_indices()
    return lap


def spmm(S, H):
    """Sparse-dense product ``S @ H`` with shape checking.

    Cost is proportional to ``nnz(S) * H.shape[1]``.
    """
    H = np.asarray(H, dtype=np.float64)
    vector = H.ndim == 1
    if vector:
        H = H[:, None]
    if H.ndim != 2 or S.shape[1] != H.shape[0]:
        raise InputError(
            f"shape mismatch: sparse {S.shape} times dense {H.shape}"
        )
    out = np.asarray(S @ H)
    return out[:, 0] if vector else out


def read_edge_list(path, num_nodes=None):
    """Read a tab-separated edge list; ``#`` lines are comments.

    When ``num_nodes`` is omitted it is read from a ``# nodes N`` header
    line if present, else taken as ``max id + 1``.
    """
    path = Path(path)
    pairs = []
    declared = None
    try:
        handle = path.open(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read edge list {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                words = stripped[1:].split()
                if len(words) == 2 and words[0] == "nodes" and words[1].isdigit():
                    declared = int(words[1])
                continue
            parts = stripped.split("\t")
            if len(parts) != 2:
                parts = stripped.split()
            if len(parts) != 2:
                raise ParseError("expected two node ids", path, lineno)
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(f"non-integer node id in {stripped!r}", path, lineno)
    if num_nodes is None:
        num_nodes = declared
    if num_nodes is None:
        num_nodes = 1 + max((max(p) for p in pairs), default=-1)
    return build_graph(pairs, num_nodes)


def write_edge_list(g, path):
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"# nodes {g.num_nodes}\n")
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
