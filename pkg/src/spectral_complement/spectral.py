"""Laplacian spectrum, graph Fourier transform and high-frequency area."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, DegenerateSignalError, InputError, ReportIOError
from .graph import normalized_laplacian, spmm

DEFAULT_NODE_CAP = 4000
DEFAULT_NUM_BINS = 40


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Ascending eigenvalues ``lambdas`` and orthonormal columns ``U``."""

    lambdas: np.ndarray
    U: np.ndarray


def _fix_signs(U, tol=1e-12):
    # first component above tol in each column made positive
    idx = np.argmax(np.abs(U) > tol, axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def eigendecompose(L, node_cap=DEFAULT_NODE_CAP):
    """Dense symmetric eigendecomposition of a Laplacian.

    Each eigenvector column is sign-normalised so its first nonzero entry is
    positive, which makes Fourier coefficients reproducible.
    """
    n = L.shape[0]
    if L.shape[0] != L.shape[1]:
        raise InputError(f"Laplacian must be square, got {L.shape}")
    if n > node_cap:
        raise CapacityError(
            f"{n} nodes exceeds the dense eigensolver cap of {node_cap}; "
            "use s_high_rayleigh, which needs no eigendecomposition"
        )
    dense = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=np.float64)
    dense = 0.5 * (dense + dense.T)
    lambdas, U = np.linalg.eigh(dense)
    return SpectralDecomposition(lambdas=lambdas, U=_fix_signs(U))


def graph_fourier(U, x):
    """Graph Fourier coefficients ``U.T @ x`` (``x`` may be N or N x k)."""
    U = np.asarray(U, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != U.shape[0]:
        raise InputError(
            f"signal length {x.shape[0]} does not match {U.shape[0]} eigenvectors"
        )
    return U.T @ x


def spectral_energy(x_hat):
    """Normalised energy ``x_hat_k**2 / sum(x_hat**2)`` of each component."""
    sq = np.square(np.asarray(x_hat, dtype=np.float64))
    total = sq.sum()
    if total == 0.0:
        raise DegenerateSignalError("spectral energy of an all-zero signal is undefined")
    return sq / total


def s_high_rayleigh(L, x):
    """High-frequency area as the Rayleigh quotient ``x'Lx / x'x``.

    Uses one sparse product, so it scales to graphs far beyond the dense
    eigensolver cap.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != L.shape[0]:
        raise InputError(f"signal shape {x.shape} does not match Laplacian {L.shape}")
    denom = x @ x
    if denom == 0.0:
        raise DegenerateSignalError("high-frequency area of an all-zero signal is undefined")
    return float(x @ spmm(L, x) / denom)


def s_high_spectral(lambdas, x_hat):
    """High-frequency area from the spectrum: ``sum(l * x_hat**2) / sum(x_hat**2)``."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    sq = np.square(np.asarray(x_hat, dtype=np.float64))
    if lambdas.shape != sq.shape:
        raise InputError(f"{lambdas.shape} eigenvalues vs {sq.shape} coefficients")
    total = sq.sum()
    if total == 0.0:
        raise DegenerateSignalError("high-frequency area of an all-zero signal is undefined")
    return float(lambdas @ sq / total)


@dataclass
class SpectralReport:
    num_bins: int
    bin_edges: np.ndarray
    histogram_dims: list
    energy_histogram: np.ndarray  # (num_bins, len(histogram_dims))
    cumulative_energy: np.ndarray
    s_high_per_dim: list  # None marks an all-zero column
    s_high_mean: float
    degenerate_dims: list = field(default_factory=list)

    def to_dict(self):
        return {
            "num_bins": self.num_bins,
            "histogram_dims": list(self.histogram_dims),
            "s_high_per_dim": list(self.s_high_per_dim),
            "s_high_mean": self.s_high_mean,
            "degenerate_dims": list(self.degenerate_dims),
        }

    def write(self, csv_path, json_path):
        """Write the histogram CSV and the JSON sidecar."""
        try:
            with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                header = ["bin_lower", "bin_upper"]
                header += [f"energy_dim_{k}" for k in self.histogram_dims]
                header += [f"cumulative_dim_{k}" for k in self.histogram_dims]
                writer.writerow(header)
                for b in range(self.num_bins):
                    row = [repr(float(self.bin_edges[b])), repr(float(self.bin_edges[b + 1]))]
                    row += [repr(float(v)) for v in self.energy_histogram[b]]
                    row += [repr(float(v)) for v in self.cumulative_energy[b]]
                    writer.writerow(row)
            with Path(json_path).open("w", encoding="utf-8") as fh:
                json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise ReportIOError(f"cannot write spectral report: {exc}") from exc


def energy_histogram(lambdas, energies, num_bins=DEFAULT_NUM_BINS):
    """Sum per-component energies into equal-width bins over [0, 2]."""
    edges = np.linspace(0.0, 2.0, num_bins + 1)
    idx = np.clip(np.floor(np.asarray(lambdas) / 2.0 * num_bins).astype(int), 0, num_bins - 1)
    energies = np.asarray(energies, dtype=np.float64)
    if energies.ndim == 1:
        energies = energies[:, None]
    hist = np.zeros((num_bins, energies.shape[1]))
    np.add.at(hist, idx, energies)
    return edges, hist


def analyze_dataset(g, X, num_bins=DEFAULT_NUM_BINS, dims_for_histogram=None,
                    seed=0, node_cap=DEFAULT_NODE_CAP, num_random_dims=2):
    """Spectral statistics of every feature column of ``X`` on graph ``g``.

    The high-frequency area is computed for every column with the Rayleigh
    form and averaged over nonzero columns. Energy histograms are computed
    only for ``dims_for_histogram`` (a seeded random choice of
    ``num_random_dims`` columns when None) and only when the graph fits under
    ``node_cap``; otherwise the histogram fields are empty.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0 or X.shape[0] == 0:
        raise InputError(f"feature matrix must be non-empty 2-D, got shape {X.shape}")
    if X.shape[0] != g.num_nodes:
        raise InputError(f"feature matrix has {X.shape[0]} rows for {g.num_nodes} nodes")
    if num_bins < 1:
        raise InputError("num_bins must be at least 1")

    L = normalized_laplacian(g)
    s_high = []
    degenerate = []
    for k in range(X.shape[1]):
        col = X[:, k]
        if not np.any(col):
            s_high.append(None)
            degenerate.append(k)
        else:
            s_high.append(s_high_rayleigh(L, col))
    valid = [v for v in s_high if v is not None]
    s_high_mean = float(np.sum(valid) / len(valid)) if valid else float("nan")

    if dims_for_histogram is None:
        rng = np.random.default_rng(seed)
        candidates = [k for k in range(X.shape[1]) if k not in degenerate]
        take = min(num_random_dims, len(candidates))
        dims = sorted(rng.choice(candidates, size=take, replace=False).tolist()) if take else []
    else:
        dims = [int(k) for k in dims_for_histogram]
        for k in dims:
            if not 0 <= k < X.shape[1]:
                raise InputError(f"histogram dimension {k} out of range")
            if k in degenerate:
                raise DegenerateSignalError(f"feature dimension {k} is all zeros")

    edges = np.linspace(0.0, 2.0, num_bins + 1)
    if dims and g.num_nodes <= node_cap:
        dec = eigendecompose(L, node_cap)
        x_hat = graph_fourier(dec.U, X[:, dims])
        energies = np.square(x_hat) / np.square(x_hat).sum(axis=0)
        edges, hist = energy_histogram(dec.lambdas, energies, num_bins)
        cumulative = np.cumsum(hist, axis=0)
    else:
        dims = []
        hist = np.zeros((num_bins, 0))
        cumulative = np.zeros((num_bins, 0))

    return SpectralReport(
        num_bins=num_bins,
        bin_edges=edges,
        histogram_dims=dims,
        energy_histogram=hist,
        cumulative_energy=cumulative,
        s_high_per_dim=s_high,
        s_high_mean=s_high_mean,
        degenerate_dims=degenerate,
    )
