import numpy as np
from sklearn.utils import check_array

from .errors import InputError
from .graph import ItemGraph, build_graph


def check_features(X):
    """2-D finite float64 array, or :class:`InputError`."""
    try:
        return check_array(X, dtype=np.float64, ensure_all_finite=True)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def as_item_graph(graph, num_nodes):
    if isinstance(graph, ItemGraph):
        if graph.num_nodes != num_nodes:
            raise InputError(
                f"graph has {graph.num_nodes} nodes but X has {num_nodes} rows"
            )
        return graph
    return build_graph(graph, num_nodes)


def check_node_id(i, num_nodes, name="node"):
    i = int(i)
    if not 0 <= i < num_nodes:
        raise InputError(f"{name} id {i} outside [0, {num_nodes})")
    return i


def check_pairs(pairs, num_nodes):
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.ndim == 1 and pairs.size == 2:
        pairs = pairs[None, :]
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise InputError(f"pairs must have shape (n, 2), got {pairs.shape}")
    if ((pairs < 0) | (pairs >= num_nodes)).any():
        raise InputError(f"pair node ids must lie in [0, {num_nodes})")
    if (pairs[:, 0] == pairs[:, 1]).any():
        raise InputError("an item cannot be paired with itself")
    return pairs
