"""Forward pass of the spectral complementary-item model.

Node features go through a low-pass and a mid-pass GCN branch. For a pair
of items each item's two branch embeddings are mixed by attention queried
by the partner item, mixed again by self-attention, concatenated and
projected. The pair score is the sigmoid of the dot product of the two
projected embeddings, so an item's final embedding depends on its partner.

All functions here also accept batches: vectors may carry leading batch
dimensions. The private ``*_backward`` helpers are the hand-derived
reverse passes used by :mod:`spectral_complement.training`.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import InputError, ParseError, ReportIOError
from .filters import apply_low_pass, apply_mid_pass
from .graph import normalized_adjacency

BRANCHES = ("both", "low", "mid")

CHECKPOINT_MAGIC = b"SPCMPCKP"
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class ModelParameters:
    """Filter weights per layer plus the fusion projection.

    With ``shared_weights`` the two branches use one matrix per layer,
    stored under ``filter_<l>``; otherwise under ``low_<l>`` and ``mid_<l>``.
    The fusion matrix is ``fusion`` with shape ``(2 * embed_dim, embed_dim)``.
    ``branches`` selects the ablation variant: ``"low"`` zeroes the mid
    branch output and ``"mid"`` zeroes the low branch output.
    """

    input_dim: int
    embed_dim: int = 16
    num_layers: int = 1
    shared_weights: bool = True
    branches: str = "both"
    weights: dict = field(default_factory=dict)

    def weight_names(self):
        names = []
        for layer in range(self.num_layers):
            if self.shared_weights:
                names.append(f"filter_{layer}")
            else:
                names += [f"low_{layer}", f"mid_{layer}"]
        names.append("fusion")
        return names

    def weight_shape(self, name):
        if name == "fusion":
            return (2 * self.embed_dim, self.embed_dim)
        layer = int(name.rsplit("_", 1)[1])
        fan_in = self.input_dim if layer == 0 else self.embed_dim
        return (fan_in, self.embed_dim)

    def filter_weight(self, branch, layer):
        if self.shared_weights:
            return self.weights[f"filter_{layer}"]
        return self.weights[f"{branch}_{layer}"]

    def filter_weight_name(self, branch, layer):
        return f"filter_{layer}" if self.shared_weights else f"{branch}_{layer}"

    @property
    def fusion(self):
        return self.weights["fusion"]

    def copy(self):
        return ModelParameters(
            self.input_dim, self.embed_dim, self.num_layers, self.shared_weights,
            self.branches, {k: v.copy() for k, v in self.weights.items()},
        )

    def validate(self):
        if min(self.input_dim, self.embed_dim, self.num_layers) < 1:
            raise InputError("input_dim, embed_dim and num_layers must be positive")
        if self.branches not in BRANCHES:
            raise InputError(f"branches must be one of {BRANCHES}, got {self.branches!r}")
        expected = self.weight_names()
        if sorted(self.weights) != sorted(expected):
            raise InputError(f"weights {sorted(self.weights)} do not match {expected}")
        for name in expected:
            w = self.weights[name]
            if w.shape != self.weight_shape(name):
                raise InputError(f"{name} has shape {w.shape}, expected {self.weight_shape(name)}")
            if not np.all(np.isfinite(w)):
                raise InputError(f"{name} has non-finite entries")
        return self


def init_params(seed, input_dim, embed_dim=16, num_layers=1, shared_weights=True,
                branches="both"):
    """Glorot-uniform initialisation, deterministic in ``seed``."""
    if min(input_dim, embed_dim, num_layers) < 1:
        raise InputError("input_dim, embed_dim and num_layers must be positive")
    params = ModelParameters(int(input_dim), int(embed_dim), int(num_layers),
                             bool(shared_weights), branches)
    rng = np.random.default_rng(seed)
    for name in params.weight_names():
        fan_in, fan_out = params.weight_shape(name)
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.weights[name] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    return params.validate()


# -- filter branches --------------------------------------------------------

_KERNELS = {"low": apply_low_pass, "mid": apply_mid_pass}


def forward_filters(X, adj_norm, params, return_cache=False):
    """Run both GCN branches; ReLU after every layer.

    Returns ``(H_low, H_mid)``, each ``N x embed_dim``, plus a cache for
    :func:`filters_backward` when ``return_cache`` is set.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise InputError(f"X shape {X.shape} does not match input_dim {params.input_dim}")
    if adj_norm.shape != (X.shape[0], X.shape[0]):
        raise InputError(f"adjacency {adj_norm.shape} does not match {X.shape[0]} nodes")
    outputs = {}
    cache = {}
    for branch, kernel in _KERNELS.items():
        if params.branches not in ("both", branch):
            outputs[branch] = np.zeros((X.shape[0], params.embed_dim))
            continue
        H = X
        layers = []
        for layer in range(params.num_layers):
            P = kernel(adj_norm, H)
            Q = P @ params.filter_weight(branch, layer)
            H = np.maximum(Q, 0.0)
            layers.append((P, Q))
        outputs[branch] = H
        cache[branch] = layers
    if return_cache:
        return outputs["low"], outputs["mid"], cache
    return outputs["low"], outputs["mid"]


def filters_backward(dH_low, dH_mid, adj_norm, params, cache):
    """Gradients of the filter weights given gradients of both branch outputs."""
    grads = {}
    for branch, dH in (("low", dH_low), ("mid", dH_mid)):
        if branch not in cache:
            continue
        kernel = _KERNELS[branch]
        for layer in reversed(range(params.num_layers)):
            P, Q = cache[branch][layer]
            dQ = dH * (Q > 0.0)
            name = params.filter_weight_name(branch, layer)
            g = P.T @ dQ
            grads[name] = grads[name] + g if name in grads else g
            if layer > 0:
                # both kernels are symmetric
                dH = kernel(adj_norm, dQ @ params.filter_weight(branch, layer).T)
    for name in params.weight_names():
        if name != "fusion" and name not in grads:
            grads[name] = np.zeros(params.weight_shape(name))
    return grads


# -- two-way softmax attention ----------------------------------------------

def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _attend(query, key0, key1):
    """Mix ``key0``/``key1`` with softmax weights of their dot with ``query``."""
    s0 = _dot(query, key0)
    s1 = _dot(query, key1)
    top = np.maximum(s0, s1)
    e0 = np.exp(s0 - top)
    e1 = np.exp(s1 - top)
    w0 = e0 / (e0 + e1)
    w1 = e1 / (e0 + e1)
    out = w0[..., None] * key0 + w1[..., None] * key1
    return out, w0, w1


def _attend_backward(dout, query, key0, key1, w0, w1):
    dw0 = _dot(dout, key0)
    dw1 = _dot(dout, key1)
    ds0 = (w0 * w1 * (dw0 - dw1))[..., None]
    dquery = ds0 * (key0 - key1)
    dkey0 = w0[..., None] * dout + ds0 * query
    dkey1 = w1[..., None] * dout - ds0 * query
    return dquery, dkey0, dkey1


def pairwise_attention(h_i_low, h_i_mid, h_j_low, h_j_mid, return_weights=False):
    """Mix item i's two embeddings, once queried by each of item j's.

    Returns ``(z_i_low, z_i_mid)``; with ``return_weights`` also the two
    weight pairs ``((a_low_low, a_low_mid), (a_mid_low, a_mid_mid))``.
    """
    z_low, a0, a1 = _attend(h_j_low, h_i_low, h_i_mid)
    z_mid, b0, b1 = _attend(h_j_mid, h_i_low, h_i_mid)
    if return_weights:
        return z_low, z_mid, ((a0, a1), (b0, b1))
    return z_low, z_mid


def self_attention(z_low, z_mid, return_weights=False):
    """Mix the pairwise-integrated embeddings, queried by each of themselves."""
    zt_low, a0, a1 = _attend(z_low, z_low, z_mid)
    zt_mid, b0, b1 = _attend(z_mid, z_low, z_mid)
    if return_weights:
        return zt_low, zt_mid, ((a0, a1), (b0, b1))
    return zt_low, zt_mid


def fuse(zt_low, zt_mid, fusion_weight):
    """``[zt_low, zt_mid] @ fusion_weight``; no bias, no activation."""
    fusion_weight = np.asarray(fusion_weight)
    d = zt_low.shape[-1]
    if fusion_weight.shape[0] != 2 * d or zt_mid.shape[-1] != d:
        raise InputError(
            f"fusion weight {fusion_weight.shape} incompatible with embedding size {d}"
        )
    return np.concatenate([zt_low, zt_mid], axis=-1) @ fusion_weight


def _side_forward(h_self_low, h_self_mid, h_other_low, h_other_mid, fusion_weight):
    z_low, z_mid, alpha = pairwise_attention(
        h_self_low, h_self_mid, h_other_low, h_other_mid, return_weights=True)
    zt_low, zt_mid, beta = self_attention(z_low, z_mid, return_weights=True)
    cat = np.concatenate([zt_low, zt_mid], axis=-1)
    z_hat = cat @ fusion_weight
    cache = (h_self_low, h_self_mid, h_other_low, h_other_mid,
             z_low, z_mid, alpha, beta, cat)
    return z_hat, cache


def _side_backward(dz_hat, cache, fusion_weight):
    h_sl, h_sm, h_ol, h_om, z_low, z_mid, alpha, beta, cat = cache
    d = z_low.shape[-1]
    dfusion = cat.reshape(-1, 2 * d).T @ dz_hat.reshape(-1, d)
    dcat = dz_hat @ fusion_weight.T
    dzt_low, dzt_mid = dcat[..., :d], dcat[..., d:]

    dq, dk0, dk1 = _attend_backward(dzt_mid, z_mid, z_low, z_mid, *beta[1])
    dz_mid = dq + dk1
    dz_low = dk0
    dq, dk0, dk1 = _attend_backward(dzt_low, z_low, z_low, z_mid, *beta[0])
    dz_low = dz_low + dq + dk0
    dz_mid = dz_mid + dk1

    dh_om, dh_sl, dh_sm = _attend_backward(dz_mid, h_om, h_sl, h_sm, *alpha[1])
    dh_ol, dk0, dk1 = _attend_backward(dz_low, h_ol, h_sl, h_sm, *alpha[0])
    return dh_sl + dk0, dh_sm + dk1, dh_ol, dh_om, dfusion


def _pair_forward(H_low, H_mid, i_idx, j_idx, fusion_weight):
    hil, him = H_low[i_idx], H_mid[i_idx]
    hjl, hjm = H_low[j_idx], H_mid[j_idx]
    z_i, cache_i = _side_forward(hil, him, hjl, hjm, fusion_weight)
    z_j, cache_j = _side_forward(hjl, hjm, hil, him, fusion_weight)
    return z_i, z_j, (cache_i, cache_j)


def _pair_backward(dz_i, dz_j, cache, i_idx, j_idx, num_nodes, fusion_weight):
    """Scatter pair-embedding gradients back onto the branch outputs."""
    cache_i, cache_j = cache
    d = dz_i.shape[-1]
    dH_low = np.zeros((num_nodes, d))
    dH_mid = np.zeros((num_nodes, d))
    dil, dim_, djl, djm, dfus = _side_backward(dz_i, cache_i, fusion_weight)
    a, b, c, e, dfus2 = _side_backward(dz_j, cache_j, fusion_weight)
    djl, djm, dil, dim_ = djl + a, djm + b, dil + c, dim_ + e
    np.add.at(dH_low, i_idx, dil)
    np.add.at(dH_mid, i_idx, dim_)
    np.add.at(dH_low, j_idx, djl)
    np.add.at(dH_mid, j_idx, djm)
    return dH_low, dH_mid, dfus + dfus2


def pair_logits(H_low, H_mid, i_idx, j_idx, fusion_weight):
    """Unnormalised pair scores ``z_i . z_j`` for index arrays ``i_idx``, ``j_idx``."""
    z_i, z_j, _ = _pair_forward(H_low, H_mid, np.asarray(i_idx), np.asarray(j_idx),
                                fusion_weight)
    return _dot(z_i, z_j)


@dataclass(eq=False)
class PairEmbedding:
    z_hat_i: np.ndarray
    z_hat_j: np.ndarray
    attention_trace: dict


def pair_embed(i, j, H_low, H_mid, params):
    """Final embeddings of items ``i`` and ``j`` as a pair, with attention weights.

    ``attention_trace`` maps ``alpha_i_low``, ``alpha_i_mid``, ``beta_i_low``,
    ``beta_i_mid`` (and the ``_j_`` counterparts) to weight pairs over the
    (low, mid) inputs.
    """
    n = H_low.shape[0]
    i, j = int(i), int(j)
    if not (0 <= i < n and 0 <= j < n):
        raise InputError(f"pair ({i}, {j}) outside [0, {n})")
    if i == j:
        raise InputError(f"cannot score item {i} against itself")
    z_i, z_j, (cache_i, cache_j) = _pair_forward(H_low, H_mid, i, j, params.fusion)
    trace = {}
    for who, c in (("i", cache_i), ("j", cache_j)):
        alpha, beta = c[6], c[7]
        for k, tag in enumerate(("low", "mid")):
            trace[f"alpha_{who}_{tag}"] = (float(alpha[k][0]), float(alpha[k][1]))
            trace[f"beta_{who}_{tag}"] = (float(beta[k][0]), float(beta[k][1]))
    return PairEmbedding(z_i, z_j, trace)


def score(pe):
    """Probability that the pair is complementary: ``sigmoid(z_i . z_j)``."""
    return float(expit(_dot(pe.z_hat_i, pe.z_hat_j)))


@dataclass(eq=False)
class ModelState:
    """Parameters bound to a propagation graph and its node features."""

    params: ModelParameters
    graph: object
    X: np.ndarray
    adj_norm: object = None
    H_low: np.ndarray = None
    H_mid: np.ndarray = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.adj_norm is None:
            self.adj_norm = normalized_adjacency(self.graph)
        self.H_low, self.H_mid = forward_filters(self.X, self.adj_norm, self.params)

    def pair_embed(self, i, j):
        return pair_embed(i, j, self.H_low, self.H_mid, self.params)

    def logits(self, i_idx, j_idx):
        return pair_logits(self.H_low, self.H_mid, i_idx, j_idx, self.params.fusion)

    def scores(self, i_idx, j_idx):
        return expit(self.logits(i_idx, j_idx))


# -- checkpoints -------------------------------------------------------------

def _header(params, metadata):
    return {
        "version": CHECKPOINT_VERSION,
        "input_dim": params.input_dim,
        "embed_dim": params.embed_dim,
        "num_layers": params.num_layers,
        "shared_weights": params.shared_weights,
        "branches": params.branches,
        "tensors": [[name, list(params.weight_shape(name))] for name in params.weight_names()],
        "metadata": metadata or {},
    }


def save_checkpoint(params, path, fmt="binary", metadata=None):
    """Write parameters to ``path``.

    The binary form is ``magic | u32 version | u64 header length | JSON
    header | little-endian float64 payloads`` and round-trips bit-exactly.
    The JSON form stores nested lists of floats.
    """
    header = _header(params, metadata)
    path = Path(path)
    try:
        if fmt == "binary":
            blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
            with path.open("wb") as fh:
                fh.write(CHECKPOINT_MAGIC)
                fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)))
                fh.write(blob)
                for name in params.weight_names():
                    fh.write(np.ascontiguousarray(params.weights[name], dtype="<f8").tobytes())
        elif fmt == "json":
            header["weights"] = {k: params.weights[k].tolist() for k in params.weight_names()}
            with path.open("w", encoding="utf-8") as fh:
                json.dump(header, fh, sort_keys=True)
                fh.write("\n")
        else:
            raise InputError(f"unknown checkpoint format {fmt!r}")
    except OSError as exc:
        raise ReportIOError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns ``(params, metadata)``; the format is detected from the magic.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw.startswith(CHECKPOINT_MAGIC):
        off = len(CHECKPOINT_MAGIC)
        version, hlen = struct.unpack_from("<IQ", raw, off)
        if version != CHECKPOINT_VERSION:
            raise ParseError(f"unsupported checkpoint version {version}", path)
        off += struct.calcsize("<IQ")
        header = json.loads(raw[off:off + hlen].decode())
        off += hlen
        weights = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape))
            if off + 8 * count > len(raw):
                raise ParseError(f"tensor {name} is truncated", path)
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
            weights[name] = arr.reshape(shape).astype(np.float64)
            off += 8 * count
        if off != len(raw):
            raise ParseError("trailing bytes after tensor payload", path)
    else:
        try:
            header = json.loads(raw.decode("utf-8"))
            weights = {k: np.asarray(v, dtype=np.float64) for k, v in header["weights"].items()}
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as exc:
            raise ParseError(f"not a checkpoint: {exc}", path) from exc
    params = ModelParameters(
        header["input_dim"], header["embed_dim"], header["num_layers"],
        header["shared_weights"], header["branches"], weights,
    )
    return params.validate(), header.get("metadata", {})
