"""Estimator interface for the complementary-item model."""

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_item_graph, check_features, check_node_id, check_pairs
from .errors import InputError
from .model import ModelState
from .training import TrainingConfig, train


class ComplementRecommender(BaseEstimator):
    """Low/mid-pass GCN with two-stage attention, trained contrastively.

    ``fit(X, graph)`` takes the item features and the training graph (an
    :class:`~spectral_complement.graph.ItemGraph` or an ``(E, 2)`` edge
    array). After fitting, ``predict_proba(pairs)`` gives complementarity
    probabilities and ``recommend(item)`` ranks every non-neighbour.
    """

    def __init__(self, embed_dim=16, num_layers=1, shared_weights=True, branches="both",
                 epochs=100, learning_rate=1e-3, optimizer="adam", num_negatives=5,
                 temperature=1.0, batch_size=256, random_state=42):
        self.embed_dim = embed_dim
        self.num_layers = num_layers
        self.shared_weights = shared_weights
        self.branches = branches
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.num_negatives = num_negatives
        self.temperature = temperature
        self.batch_size = batch_size
        self.random_state = random_state

    def training_config(self):
        return TrainingConfig(
            epochs=self.epochs, learning_rate=self.learning_rate, optimizer=self.optimizer,
            num_negatives=self.num_negatives, temperature=self.temperature,
            batch_size=self.batch_size, embed_dim=self.embed_dim,
            num_layers=self.num_layers, shared_weights=self.shared_weights,
            branches=self.branches, seed=self.random_state,
        ).validate()

    def fit(self, X, graph, val_edges=None, eval_graph=None):
        X = check_features(X)
        g = as_item_graph(graph, X.shape[0])
        params, trace = train(g, X, self.training_config(), val_edges=val_edges,
                              eval_graph=eval_graph)
        self.params_ = params
        self.trace_ = trace
        self.state_ = ModelState(params, g, X)
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_params(cls, params, X, graph):
        """Wrap already-trained parameters without refitting."""
        X = check_features(X)
        est = cls(embed_dim=params.embed_dim, num_layers=params.num_layers,
                  shared_weights=params.shared_weights, branches=params.branches)
        est.params_ = params
        est.state_ = ModelState(params, as_item_graph(graph, X.shape[0]), X)
        est.n_features_in_ = X.shape[1]
        return est

    def decision_function(self, pairs):
        """Pair logits ``z_i . z_j``."""
        check_is_fitted(self, "state_")
        pairs = check_pairs(pairs, self.state_.graph.num_nodes)
        return self.state_.logits(pairs[:, 0], pairs[:, 1])

    def predict_proba(self, pairs):
        return expit(self.decision_function(pairs))

    def predict(self, pairs, threshold=0.5):
        return (self.predict_proba(pairs) >= threshold).astype(np.int64)

    def recommend(self, item, topk=10, exclude_graph=None, pool=None, rng=None):
        """Top-``topk`` non-neighbours of ``item`` as ``[(id, probability), ...]``.

        Candidates are all non-neighbours in ``exclude_graph`` (default: the
        fitted graph), or ``pool`` of them sampled with ``rng`` if given.
        """
        check_is_fitted(self, "state_")
        g = exclude_graph or self.state_.graph
        item = check_node_id(item, g.num_nodes, "item")
        if topk < 0:
            raise InputError("topk must be nonnegative")
        mask = np.ones(g.num_nodes, dtype=bool)
        mask[item] = False
        mask[g.neighbors(item)] = False
        candidates = np.flatnonzero(mask)
        if pool is not None and pool < len(candidates):
            rng = rng if rng is not None else np.random.default_rng(0)
            candidates = np.sort(rng.choice(candidates, size=pool, replace=False))
        if len(candidates) == 0:
            return []
        logits = self.state_.logits(np.full(len(candidates), item), candidates)
        order = np.lexsort((candidates, -logits))[:topk]
        return [(int(candidates[k]), float(expit(logits[k]))) for k in order]
