"""Contrastive training of the pair model.

Every directed training edge ``(i, +)`` is contrasted against ``M`` sampled
non-neighbours of ``i``. Each candidate's logit is computed from the
pair-specific embeddings of ``(i, candidate)``, so item ``i``'s embedding is
recomputed for every candidate.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import ConfigError, DivergenceError, InputError, SamplingError
from .graph import build_graph, normalized_adjacency
from .model import (
    ModelState,
    _pair_backward,
    _pair_forward,
    filters_backward,
    forward_filters,
    init_params,
)

logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainingConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    num_negatives: int = 5
    temperature: float = 1.0
    batch_size: int = 256
    embed_dim: int = 16
    num_layers: int = 1
    shared_weights: bool = True
    branches: str = "both"
    seed: int = 42

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.num_negatives < 1:
            raise ConfigError(f"num_negatives must be >= 1, got {self.num_negatives}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.embed_dim < 1 or self.num_layers < 1:
            raise ConfigError("embed_dim and num_layers must be >= 1")
        if self.branches not in ("both", "low", "mid"):
            raise ConfigError(f"unknown branches variant {self.branches!r}")
        return self

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown training config keys: {', '.join(unknown)}")
        return cls(**data).validate()

    @classmethod
    def from_json(cls, path):
        with Path(path).open(encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainingTrace:
    loss: list = field(default_factory=list)
    val_hr10: list = field(default_factory=list)
    seconds: list = field(default_factory=list, compare=False)

    def write_csv(self, path, include_time=True):
        """``epoch,loss,val_hr10,seconds``; time cells are left empty when
        ``include_time`` is false so that reruns are byte-identical."""
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write("epoch,loss,val_hr10,seconds\n")
            for e, loss in enumerate(self.loss, start=1):
                val = self.val_hr10[e - 1] if e - 1 < len(self.val_hr10) else None
                sec = self.seconds[e - 1] if include_time and e - 1 < len(self.seconds) else None
                fh.write(f"{e},{loss!r},{'' if val is None else repr(val)},"
                         f"{'' if sec is None else f'{sec:.6f}'}\n")


# -- negative sampling --------------------------------------------------------

def sample_negatives(g, i, M, rng):
    """Draw ``M`` distinct nodes that are neither ``i`` nor adjacent to it."""
    i = int(i)
    eligible = g.num_nodes - 1 - int(g.degrees[i])
    if eligible < M:
        raise SamplingError(
            f"item {i} has {eligible} non-neighbours, cannot draw {M} negatives"
        )
    banned = set(g.neighbors(i).tolist())
    banned.add(i)
    out = []
    while len(out) < M:
        c = int(rng.integers(g.num_nodes))
        if c not in banned:
            banned.add(c)
            out.append(c)
    return out


def _sample_negatives_batch(g, queries, M, rng, oversample=4):
    """Vectorised rejection sampling of ``M`` distinct negatives per query."""
    n = g.num_nodes
    B = len(queries)
    eligible = n - 1 - g.degrees[queries]
    short = np.flatnonzero(eligible < M)
    if len(short):
        i = int(queries[short[0]])
        raise SamplingError(
            f"item {i} has {int(eligible[short[0]])} non-neighbours, cannot draw {M} negatives"
        )
    width = max(M * oversample, M + 8)
    draws = rng.integers(n, size=(B, width))
    q = queries[:, None]
    lo = np.minimum(q, draws)
    hi = np.maximum(q, draws)
    keys = lo * n + hi
    pos = np.searchsorted(g._keys, keys)
    pos = np.minimum(pos, max(len(g._keys) - 1, 0))
    linked = (g._keys[pos] == keys) if len(g._keys) else np.zeros_like(keys, dtype=bool)
    valid = (draws != q) & ~linked

    # drop repeated draws, keeping the first occurrence in each row
    order = np.argsort(draws, axis=1, kind="stable")
    sorted_draws = np.take_along_axis(draws, order, axis=1)
    repeat_sorted = np.zeros_like(valid)
    repeat_sorted[:, 1:] = sorted_draws[:, 1:] == sorted_draws[:, :-1]
    repeat = np.empty_like(valid)
    np.put_along_axis(repeat, order, repeat_sorted, axis=1)
    valid &= ~repeat

    rank = np.cumsum(valid, axis=1)
    take = valid & (rank <= M)
    ok = take.sum(axis=1) == M
    out = np.empty((B, M), dtype=np.int64)
    rows, cols = np.nonzero(take[ok])
    out[ok] = draws[ok][rows, cols].reshape(-1, M)
    for b in np.flatnonzero(~ok):
        out[b] = sample_negatives(g, queries[b], M, rng)
    return out


# -- loss and gradients -------------------------------------------------------

def _check_triple(g, i, positive, negatives):
    if not g.has_edge(i, positive):
        raise InputError(f"({i}, {positive}) is not an edge of the training graph")
    for c in negatives:
        if c == i or g.has_edge(i, c):
            raise InputError(f"negative {c} is linked to (or equals) item {i}")


def pair_loss(i, positive, negatives, state, tau=1.0):
    """Contrastive loss of one ``(i, +, negatives)`` triple.

    Candidate logits come from :meth:`ModelState.pair_embed` one pair at a
    time; this is the reference path the vectorised gradients are checked
    against.
    """
    _check_triple(state.graph, i, positive, negatives)
    logits = []
    for c in [positive, *negatives]:
        pe = state.pair_embed(i, c)
        logits.append(float(np.dot(pe.z_hat_i, pe.z_hat_j)) / tau)
    return float(-log_softmax(np.asarray(logits))[0])


def contrastive_loss_from_logits(logits, tau=1.0):
    """Mean loss for a ``(B, M+1)`` logit matrix whose column 0 is the positive."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64)) / tau
    return float(-log_softmax(logits, axis=1)[:, 0].mean())


def batch_loss_and_gradients(params, X, adj_norm, queries, candidates, tau):
    """Mean loss over triples and its exact gradient for every weight.

    ``candidates`` is ``(B, M+1)`` with the positive in column 0.
    """
    queries = np.asarray(queries, dtype=np.int64)
    candidates = np.asarray(candidates, dtype=np.int64)
    B, C = candidates.shape
    n = X.shape[0]
    H_low, H_mid, fcache = forward_filters(X, adj_norm, params, return_cache=True)
    i_idx = np.repeat(queries, C)
    j_idx = candidates.reshape(-1)
    z_i, z_j, pcache = _pair_forward(H_low, H_mid, i_idx, j_idx, params.fusion)
    logits = (np.sum(z_i * z_j, axis=-1) / tau).reshape(B, C)
    logp = log_softmax(logits, axis=1)
    loss = float(-logp[:, 0].mean())

    dlogits = softmax(logits, axis=1)
    dlogits[:, 0] -= 1.0
    dlogits /= B * tau
    dl = dlogits.reshape(-1, 1)
    dH_low, dH_mid, dfusion = _pair_backward(
        dl * z_j, dl * z_i, pcache, i_idx, j_idx, n, params.fusion)
    grads = filters_backward(dH_low, dH_mid, adj_norm, params, fcache)
    grads["fusion"] = dfusion
    return loss, grads


def gradients(batch, state, config):
    """Gradient of the mean batch loss; ``batch`` is a list of ``(i, +, negatives)``."""
    queries = [t[0] for t in batch]
    candidates = [[t[1], *t[2]] for t in batch]
    for i, pos, negs in batch:
        _check_triple(state.graph, i, pos, negs)
    _, grads = batch_loss_and_gradients(
        state.params, state.X, state.adj_norm, queries, candidates, config.temperature)
    return grads


# -- optimisers -----------------------------------------------------------------

class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, weights, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.m.get(name, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(name, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            weights[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class GradientDescent:
    def __init__(self, lr):
        self.lr = lr

    def step(self, weights, grads):
        for name, g in grads.items():
            weights[name] -= self.lr * g


def make_optimizer(config):
    if config.optimizer == "adam":
        return Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    return GradientDescent(config.learning_rate)


def directed_edges(g):
    return np.concatenate([g.edges, g.edges[:, ::-1]], axis=0)


def train(g, X, config, val_edges=None, eval_graph=None, on_epoch_end=None, params=None):
    """Fit model parameters on training graph ``g`` with features ``X``.

    Each epoch shuffles both orientations of every training edge, draws fresh
    negatives, and takes one optimiser step per mini-batch. When
    ``val_edges`` is given, HR@10 on them (pool exclusion against
    ``eval_graph``, default ``g``) is recorded after every epoch.
    ``on_epoch_end(epoch, params, trace)`` is called after each epoch.
    Returns ``(params, trace)``.
    """
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != g.num_nodes:
        raise InputError(f"X has {X.shape[0]} rows for {g.num_nodes} nodes")
    if g.num_edges == 0:
        raise InputError("training graph has no edges")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(config.seed, X.shape[1], config.embed_dim, config.num_layers,
                             config.shared_weights, config.branches)
    adj_norm = normalized_adjacency(g)
    optimizer = make_optimizer(config)
    pairs = directed_edges(g)
    trace = TrainingTrace()

    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(pairs))
        epoch_pairs = pairs[order]
        negatives = _sample_negatives_batch(g, epoch_pairs[:, 0], config.num_negatives, rng)
        total = 0.0
        for lo in range(0, len(epoch_pairs), config.batch_size):
            hi = lo + config.batch_size
            cand = np.column_stack([epoch_pairs[lo:hi, 1], negatives[lo:hi]])
            loss, grads = batch_loss_and_gradients(
                params, X, adj_norm, epoch_pairs[lo:hi, 0], cand, config.temperature)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch starting at {lo}; "
                    "try a lower learning rate or temperature closer to 1"
                )
            optimizer.step(params.weights, grads)
            total += loss * (min(hi, len(epoch_pairs)) - lo)
        trace.loss.append(total / len(epoch_pairs))
        if val_edges is not None and len(val_edges):
            from .evaluation import evaluate_edges

            state = ModelState(params, g, X, adj_norm=adj_norm)
            report = evaluate_edges(val_edges, state, eval_graph or g, pool_size=100,
                                    seed=config.seed)
            trace.val_hr10.append(report.hr_at_10)
        trace.seconds.append(time.perf_counter() - start)
        logger.info("epoch %d loss %.6f", epoch, trace.loss[-1])
        if on_epoch_end is not None:
            on_epoch_end(epoch, params, trace)
    return params, trace


# -- finite-difference verification -------------------------------------------

def _ring_with_chords(n, rng):
    edges = [(k, (k + 1) % n) for k in range(n)]
    extra = rng.integers(n, size=(n // 3, 2))
    return build_graph(np.vstack([edges, extra]), n)


def reference_mean_loss(state, triples, tau):
    return float(np.mean([pair_loss(i, p, negs, state, tau) for i, p, negs in triples]))


def gradient_check(num_nodes=6, input_dim=3, embed_dim=4, num_negatives=2, seed=0,
                   tau=1.0, shared_weights=True, num_layers=1, h=1e-5, floor=1e-6):
    """Compare analytic gradients with central finite differences.

    The loss for the finite differences is evaluated through
    :func:`pair_loss`, one pair at a time, independent of the vectorised
    backward pass. The relative error of an entry is
    ``|a - n| / max(|a| + |n|, floor)``.
    """
    rng = np.random.default_rng(seed)
    for _ in range(100):
        g = _ring_with_chords(num_nodes, rng)
        if (num_nodes - 1 - g.degrees >= num_negatives).all():
            break
    else:
        raise InputError("could not build a graph with enough non-neighbours")
    X = rng.normal(size=(num_nodes, input_dim))
    params = init_params(seed, input_dim, embed_dim, num_layers, shared_weights)
    # scale up so attention weights are away from the uniform point
    for w in params.weights.values():
        w *= 2.0
    triples = []
    for i, p in directed_edges(g):
        triples.append((int(i), int(p), sample_negatives(g, i, num_negatives, rng)))

    adj_norm = normalized_adjacency(g)
    queries = [t[0] for t in triples]
    cands = [[t[1], *t[2]] for t in triples]
    loss, analytic = batch_loss_and_gradients(params, X, adj_norm, queries, cands, tau)

    def ref_loss(p):
        return reference_mean_loss(ModelState(p, g, X, adj_norm=adj_norm), triples, tau)

    max_rel = 0.0
    per_weight = {}
    for name in params.weight_names():
        w = params.weights[name]
        numeric = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            up = ref_loss(params)
            w[idx] = orig - h
            down = ref_loss(params)
            w[idx] = orig
            numeric[idx] = (up - down) / (2 * h)
        a = analytic[name]
        rel = np.abs(a - numeric) / np.maximum(np.abs(a) + np.abs(numeric), floor)
        per_weight[name] = float(rel.max())
        max_rel = max(max_rel, per_weight[name])
    return {
        "seed": seed,
        "tau": tau,
        "shared_weights": shared_weights,
        "loss": loss,
        "reference_loss": ref_loss(params),
        "max_relative_error": max_rel,
        "per_weight": per_weight,
    }
