"""Per-item edge split and sampled-candidate ranking metrics."""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, ReportIOError
from .graph import build_graph
from .training import sample_negatives


@dataclass(eq=False)
class EdgeSplit:
    """Train/validation/test partition of a graph's edges.

    ``provenance`` maps each held-out edge ``(u, v)`` (with ``u < v``) to the
    item that claimed it; that item is the query when the edge is evaluated.
    """

    graph: object
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    provenance: dict = field(default_factory=dict)

    def train_graph(self):
        return build_graph(self.train, self.graph.num_nodes)

    def oriented(self, which):
        """``(query, positive)`` rows for the held-out set ``which``."""
        edges = self.test if which == "test" else self.validation
        rows = []
        for u, v in edges:
            q = self.provenance[(int(u), int(v))]
            rows.append((q, v if q == u else u))
        return np.asarray(rows, dtype=np.int64).reshape(-1, 2)


def split_edges(g, seed=0, min_degree=3):
    """Hold out one test and one validation edge per item.

    Items are visited in a seeded random order. An item with at least
    ``min_degree`` incident edges claims one random still-unclaimed incident
    edge for test and another for validation. An edge is only claimed if
    both endpoints keep at least one training edge.
    """
    if g.num_edges == 0:
        raise InputError("cannot split an empty edge set")
    rng = np.random.default_rng(seed)
    n = g.num_nodes
    train_deg = g.degrees.copy()
    claimed = {}
    test, val = [], []
    for i in rng.permutation(n):
        i = int(i)
        if g.degrees[i] < min_degree:
            continue
        for bucket in (test, val):
            options = []
            for j in g.neighbors(i):
                j = int(j)
                key = (min(i, j), max(i, j))
                if key in claimed or train_deg[i] < 2 or train_deg[j] < 2:
                    continue
                options.append(key)
            if not options:
                break
            key = options[int(rng.integers(len(options)))]
            claimed[key] = i
            train_deg[key[0]] -= 1
            train_deg[key[1]] -= 1
            bucket.append(key)
    held = set(claimed)
    train = [tuple(e) for e in g.edges.tolist() if tuple(e) not in held]
    as_arr = lambda rows: np.asarray(rows, dtype=np.int64).reshape(-1, 2)
    return EdgeSplit(g, as_arr(train), as_arr(val), as_arr(test), claimed)


@dataclass
class EvaluationReport:
    hr_at_5: float
    hr_at_10: float
    ndcg: float
    per_query_ranks: list
    num_queries: int
    candidate_pool_size: int
    queries: list = field(default_factory=list)

    def to_dict(self):
        return {
            "hr_at_5": self.hr_at_5,
            "hr_at_10": self.hr_at_10,
            "ndcg": self.ndcg,
            "num_queries": self.num_queries,
            "candidate_pool_size": self.candidate_pool_size,
            "per_query_ranks": list(self.per_query_ranks),
        }

    def write_json(self, path):
        try:
            with Path(path).open("w", encoding="utf-8") as fh:
                json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise ReportIOError(f"cannot write {path}: {exc}") from exc

    def write_query_csv(self, path):
        try:
            with Path(path).open("w", encoding="utf-8") as fh:
                fh.write("query,positive,rank\n")
                for (q, p), r in zip(self.queries, self.per_query_ranks):
                    fh.write(f"{q},{p},{r}\n")
        except OSError as exc:
            raise ReportIOError(f"cannot write {path}: {exc}") from exc


def rank_from_scores(positive_score, positive_id, pool_scores, pool_ids):
    """1-based rank of the positive; ties go to the smaller item id."""
    pool_scores = np.asarray(pool_scores, dtype=np.float64)
    pool_ids = np.asarray(pool_ids)
    ahead = (pool_scores > positive_score) | (
        (pool_scores == positive_score) & (pool_ids < positive_id))
    return 1 + int(ahead.sum())


def rank_candidates(query, positive, pool, state, exclude_graph=None):
    """Rank ``positive`` among ``pool`` by pair score against ``query``.

    ``exclude_graph`` (default: the state's graph) is the graph whose
    neighbours of ``query`` must not appear in the pool.
    """
    query, positive = int(query), int(positive)
    pool = np.asarray(pool, dtype=np.int64)
    exclude_graph = exclude_graph or state.graph
    if query == positive:
        raise InputError("query and positive must differ")
    if positive in set(pool.tolist()):
        raise InputError(f"positive {positive} appears in the candidate pool")
    for c in pool.tolist():
        if c == query or exclude_graph.has_edge(query, c):
            raise InputError(f"pool item {c} is the query or linked to it")
    candidates = np.concatenate([[positive], pool])
    scores = state.logits(np.full(len(candidates), query), candidates)
    return rank_from_scores(scores[0], positive, scores[1:], pool)


def metrics_from_ranks(ranks, ks=(5, 10)):
    """HR@K for each K and single-relevant-item NDCG ``1 / log2(rank + 1)``."""
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        raise InputError("no ranks to aggregate")
    if (ranks < 1).any():
        raise InputError("ranks are 1-based")
    hr = {k: float(np.mean(ranks <= k)) for k in ks}
    ndcg = float(np.mean(1.0 / np.log2(ranks + 1.0)))
    return EvaluationReport(
        hr_at_5=hr.get(5, float(np.mean(ranks <= 5))),
        hr_at_10=hr.get(10, float(np.mean(ranks <= 10))),
        ndcg=ndcg,
        per_query_ranks=ranks.tolist(),
        num_queries=int(ranks.size),
        candidate_pool_size=0,
    )


def evaluate_edges(pairs, state, exclude_graph, pool_size=100, seed=0):
    """Rank each ``(query, positive)`` row against sampled non-neighbours."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise InputError("no held-out edges to evaluate")
    if pool_size == 0:
        warnings.warn("pool_size 0: every positive ranks first", stacklevel=2)
    rng = np.random.default_rng(seed)
    ranks = []
    for q, p in pairs:
        pool = sample_negatives(exclude_graph, q, pool_size, rng) if pool_size else []
        ranks.append(rank_candidates(q, p, pool, state, exclude_graph))
    report = metrics_from_ranks(ranks)
    report.candidate_pool_size = int(pool_size)
    report.queries = [(int(q), int(p)) for q, p in pairs]
    return report


def evaluate(split, state, pool_size=100, seed=0, which="test"):
    """Evaluate held-out edges of ``split`` with pools drawn from non-neighbours
    in the full graph."""
    return evaluate_edges(split.oriented(which), state, split.graph, pool_size, seed)
