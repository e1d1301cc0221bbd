"""Feature files, price binning and synthetic planted-cluster graphs."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError, ReportIOError
from .graph import build_graph


@dataclass(eq=False)
class FeatureTable:
    rows: np.ndarray
    source: str = ""

    @property
    def item_count(self):
        return self.rows.shape[0]

    @property
    def dim(self):
        return self.rows.shape[1]


def load_features(path, expected_items=None):
    """Load a feature table from text or ``.npy``.

    The text format is a header line ``item_count dim`` followed by one line
    per item: ``id v1 ... vdim``. Item ids must cover ``0..item_count-1``
    exactly once, in any order.
    """
    path = Path(path)
    if path.suffix == ".npy":
        try:
            rows = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise ParseError(f"cannot load binary features: {exc}", path) from exc
        if rows.ndim != 2:
            raise ParseError(f"expected a 2-D array, got shape {rows.shape}", path)
        rows = rows.astype(np.float64)
    else:
        rows = _load_text_features(path)
    if not np.all(np.isfinite(rows)):
        raise InputError(f"{path}: non-finite feature values")
    if expected_items is not None and rows.shape[0] != expected_items:
        raise InputError(
            f"{path}: {rows.shape[0]} feature rows but {expected_items} items expected"
        )
    return FeatureTable(rows, str(path))


def _load_text_features(path):
    try:
        handle = path.open(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read features {path}: {exc}") from exc
    with handle:
        header = handle.readline().split()
        if len(header) != 2:
            raise ParseError("header must be 'item_count dim'", path, 1)
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError("header must hold two integers", path, 1)
        rows = np.full((count, dim), np.nan)
        seen = np.zeros(count, dtype=bool)
        for lineno, line in enumerate(handle, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"expected {dim + 1} fields, got {len(parts)}", path, lineno)
            try:
                item = int(parts[0])
                values = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric token ({exc})", path, lineno)
            if not 0 <= item < count:
                raise ParseError(f"item id {item} outside [0, {count})", path, lineno)
            if seen[item]:
                raise ParseError(f"duplicate item id {item}", path, lineno)
            seen[item] = True
            rows[item] = values
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise InputError(f"{path}: header declares {count} items but item {missing} is missing")
    return rows


def write_features(rows, path):
    """Write features as text, or as ``.npy`` when the suffix says so."""
    rows = np.asarray(rows, dtype=np.float64)
    path = Path(path)
    try:
        if path.suffix == ".npy":
            np.save(path, rows, allow_pickle=False)
            return
        with path.open("w", encoding="utf-8") as fh:
            fh.write(f"{rows.shape[0]} {rows.shape[1]}\n")
            for k, row in enumerate(rows):
                fh.write(str(k) + " " + " ".join(repr(float(v)) for v in row) + "\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write features {path}: {exc}") from exc


def equal_depth_binning(values, num_bins):
    """Assign each value to one of ``num_bins`` equal-count bins.

    Values are stable-sorted and cut into contiguous runs whose sizes differ
    by at most one (larger runs first). Ties may straddle a boundary; the
    stable order decides which side each lands on.

    >>> equal_depth_binning([5, 1, 3], 3).tolist()
    [2, 0, 1]
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    n = values.size
    if n == 0:
        raise InputError("cannot bin an empty list")
    if num_bins < 1 or num_bins > n:
        raise InputError(f"num_bins must be in [1, {n}], got {num_bins}")
    order = np.argsort(values, kind="stable")
    sizes = np.full(num_bins, n // num_bins)
    sizes[: n % num_bins] += 1
    ids = np.empty(n, dtype=np.int64)
    ids[order] = np.repeat(np.arange(num_bins), sizes)
    return ids


def build_feature_matrix(category_vectors, prices, num_price_bins):
    """Concatenate category vectors with a one-hot equal-depth price bin."""
    cats = category_vectors.rows if isinstance(category_vectors, FeatureTable) else (
        np.asarray(category_vectors, dtype=np.float64))
    prices = np.asarray(prices, dtype=np.float64).ravel()
    if cats.ndim != 2 or cats.shape[0] != prices.size:
        raise InputError(f"{cats.shape[0]} category rows vs {prices.size} prices")
    onehot = np.zeros((prices.size, num_price_bins))
    onehot[np.arange(prices.size), equal_depth_binning(prices, num_price_bins)] = 1.0
    return np.hstack([cats, onehot])


@dataclass(frozen=True)
class SynthSpec:
    """Planted-cluster graph recipe.

    ``homophilous`` links items of the same cluster; ``heterophilous`` links
    items only across paired clusters. ``pairing="cyclic"`` pairs
    ``c <-> (c + 1) % C``; ``pairing="matched"`` pairs ``2k <-> 2k + 1`` and
    needs an even cluster count.
    """

    num_clusters: int = 4
    items_per_cluster: int = 50
    feature_dim: int = 8
    noise_scale: float = 0.1
    wiring: str = "heterophilous"
    edge_probability: float = 0.1
    seed: int = 0
    pairing: str = "cyclic"

    def validate(self):
        if self.num_clusters < 1 or self.items_per_cluster < 1 or self.feature_dim < 1:
            raise InputError("cluster count, cluster size and feature_dim must be positive")
        if self.wiring not in ("homophilous", "heterophilous"):
            raise InputError(f"unknown wiring {self.wiring!r}")
        if self.wiring == "heterophilous" and self.num_clusters < 2:
            raise InputError("heterophilous wiring needs at least 2 clusters")
        if self.wiring == "homophilous" and self.items_per_cluster < 2:
            raise InputError("homophilous wiring needs at least 2 items per cluster")
        if self.pairing not in ("cyclic", "matched"):
            raise InputError(f"unknown pairing {self.pairing!r}")
        if self.wiring == "heterophilous" and self.pairing == "matched" and self.num_clusters % 2:
            raise InputError("matched pairing needs an even number of clusters")
        if not 0.0 < self.edge_probability <= 1.0:
            raise InputError("edge_probability must be in (0, 1]")
        if self.noise_scale < 0:
            raise InputError("noise_scale must be nonnegative")
        return self


def generate_synthetic(spec):
    """Return ``(graph, features, labels)`` drawn from ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    C, m = spec.num_clusters, spec.items_per_cluster
    n = C * m
    labels = np.repeat(np.arange(C), m)
    centroids = rng.normal(size=(C, spec.feature_dim))
    X = centroids[labels] + spec.noise_scale * rng.normal(size=(n, spec.feature_dim))

    if spec.wiring == "homophilous":
        blocks = [(c, c) for c in range(C)]
    elif spec.pairing == "matched":
        blocks = [(c, c + 1) for c in range(0, C, 2)]
    else:
        blocks = sorted({tuple(sorted((c, (c + 1) % C))) for c in range(C)})
    edges = []
    for a, b in blocks:
        ia = np.arange(a * m, (a + 1) * m)
        ib = np.arange(b * m, (b + 1) * m)
        u, v = np.meshgrid(ia, ib, indexing="ij")
        u, v = u.ravel(), v.ravel()
        if a == b:
            keep = u < v
            u, v = u[keep], v[keep]
        hit = rng.random(u.size) < spec.edge_probability
        edges.append(np.column_stack([u[hit], v[hit]]))
    g = build_graph(np.vstack(edges), n)
    return g, X, labels


def write_report(report, path, fmt="json"):
    """Serialise a report deterministically.

    Spectral reports (anything with ``write(csv, json)``) produce the CSV at
    ``path`` plus a ``.json`` sidecar; everything else is written as JSON
    from ``to_dict()``.
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise ReportIOError(f"output directory {path.parent} does not exist")
    if fmt == "csv" and hasattr(report, "write"):
        report.write(path, path.with_suffix(".json"))
        return
    if fmt != "json":
        raise InputError(f"unsupported report format {fmt!r}")
    data = report.to_dict() if hasattr(report, "to_dict") else report
    try:
        with path.open("w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc
