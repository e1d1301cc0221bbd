"""Low-pass and mid-pass graph convolution operators.

Both are applied in their spatial form so the cost stays linear in the
number of edges: the low-pass kernel ``(A_norm + I) / 2`` needs one sparse
product and the mid-pass kernel ``I - A_norm @ A_norm`` needs two (the
squared adjacency is never formed).
"""

import enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import CapacityError, InputError
from .graph import normalized_adjacency, spmm
from .spectral import DEFAULT_NODE_CAP
from ._validation import check_features, as_item_graph


class FilterKind(str, enum.Enum):
    LOW = "low"
    MID = "mid"


def low_pass_response(lambdas):
    return 1.0 - np.asarray(lambdas) / 2.0


def mid_pass_response(lambdas):
    return 1.0 - np.square(np.asarray(lambdas) - 1.0)


def apply_low_pass(adj_norm, H):
    """``(A_norm @ H + H) / 2``."""
    H = np.asarray(H, dtype=np.float64)
    return 0.5 * (spmm(adj_norm, H) + H)


def apply_mid_pass(adj_norm, H):
    """``H - A_norm @ (A_norm @ H)``."""
    H = np.asarray(H, dtype=np.float64)
    return H - spmm(adj_norm, spmm(adj_norm, H))


def apply_filter(kind, adj_norm, H):
    kind = FilterKind(kind)
    if kind is FilterKind.LOW:
        return apply_low_pass(adj_norm, H)
    return apply_mid_pass(adj_norm, H)


def spectral_response(kind, decomposition, g, node_cap=DEFAULT_NODE_CAP):
    """Probe the frequency response of a filter on graph ``g``.

    Applies the spatial operator to every eigenvector and projects back, so
    the result is ``diag(U.T @ C @ U)`` with ``C`` never formed explicitly.
    Returns ``(response, leakage)`` where ``leakage`` is the largest
    off-diagonal magnitude of ``U.T @ C @ U``.
    """
    if g.num_nodes > node_cap:
        raise CapacityError(f"{g.num_nodes} nodes exceeds the probe cap of {node_cap}")
    U = decomposition.U
    if U.shape[0] != g.num_nodes:
        raise InputError("decomposition does not match the graph")
    projected = U.T @ apply_filter(kind, normalized_adjacency(g), U)
    response = np.diag(projected).copy()
    off = projected - np.diag(response)
    leakage = float(np.abs(off).max()) if off.size else 0.0
    return response, leakage


class SpectralFilter(TransformerMixin, BaseEstimator):
    """Apply a fixed low-pass or mid-pass graph kernel to node features.

    ``fit`` takes the item graph (an :class:`ItemGraph` or an edge array) as
    its second argument and stores the normalised adjacency; ``transform``
    filters a feature matrix row-aligned with the graph's nodes.

    >>> import numpy as np
    >>> f = SpectralFilter(kind="low").fit(np.eye(2), [(0, 1)])
    >>> f.transform(np.eye(2))
    array([[0.5, 0.5],
           [0.5, 0.5]])
    """

    def __init__(self, kind="low", num_hops=1):
        self.kind = kind
        self.num_hops = num_hops

    def fit(self, X, graph):
        X = check_features(X)
        g = as_item_graph(graph, X.shape[0])
        FilterKind(self.kind)
        if self.num_hops < 1:
            raise InputError("num_hops must be at least 1")
        self.adj_norm_ = normalized_adjacency(g)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "adj_norm_")
        X = check_features(X)
        if X.shape[0] != self.adj_norm_.shape[0]:
            raise InputError(
                f"X has {X.shape[0]} rows but the fitted graph has "
                f"{self.adj_norm_.shape[0]} nodes"
            )
        out = X
        for _ in range(self.num_hops):
            out = apply_filter(self.kind, self.adj_norm_, out)
        return out
