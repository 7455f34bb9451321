"""Multilayer network container, descriptive layer statistics and network I/O."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

STAT_COLUMNS = ("Dens.", "Trans.", "Assor.", "M. Deg.", "SD Deg.", "M. Geo.", "Diam.")
STAT_NAMES = ("density", "transitivity", "assortativity", "mean_degree",
              "sd_degree", "mean_geodesic", "diameter")


class NetworkError(ValueError):
    pass


def check_layer(A, name="layer"):
    """Return `A` as an int8 array after checking it is a simple undirected graph."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NetworkError(f"{name}: adjacency must be square, got {A.shape}")
    if not np.isin(A, (0, 1)).all():
        raise NetworkError(f"{name}: entries must be 0/1")
    A = A.astype(np.int8)
    if np.any(np.diag(A)):
        raise NetworkError(f"{name}: self-loops present")
    if not np.array_equal(A, A.T):
        raise NetworkError(f"{name}: adjacency is not symmetric")
    return A


@dataclass
class MultilayerNetwork:
    """K binary symmetric layers over a shared node set.

    ``layers`` has shape (K, n, n).
    """
    layers: np.ndarray
    node_labels: list = None
    layer_labels: list = None

    def __post_init__(self):
        layers = np.asarray(self.layers)
        if layers.ndim == 2:
            layers = layers[None]
        if layers.ndim != 3:
            raise NetworkError("layers must have shape (K, n, n)")
        self.layers = np.stack([check_layer(A, f"layer {k + 1}")
                                for k, A in enumerate(layers)])
        K, n, _ = self.layers.shape
        if self.node_labels is None:
            self.node_labels = [str(i + 1) for i in range(n)]
        if self.layer_labels is None:
            self.layer_labels = [str(k + 1) for k in range(K)]
        self.node_labels = [str(s) for s in self.node_labels]
        self.layer_labels = [str(s) for s in self.layer_labels]
        if len(self.node_labels) != n or len(self.layer_labels) != K:
            raise NetworkError("label counts do not match network dimensions")

    @property
    def n(self):
        return self.layers.shape[1]

    @property
    def K(self):
        return self.layers.shape[0]

    def dyads(self):
        """Edge indicators on the upper triangle, shape (K, n(n-1)/2)."""
        iu, ju = np.triu_indices(self.n, k=1)
        return self.layers[:, iu, ju]

    @classmethod
    def from_dyads(cls, y, n, **kw):
        y = np.asarray(y)
        K = y.shape[0]
        iu, ju = np.triu_indices(n, k=1)
        layers = np.zeros((K, n, n), dtype=np.int8)
        layers[:, iu, ju] = y
        layers[:, ju, iu] = y
        return cls(layers, **kw)

    def permute(self, perm):
        perm = np.asarray(perm)
        return MultilayerNetwork(self.layers[:, perm][:, :, perm],
                                 [self.node_labels[p] for p in perm],
                                 list(self.layer_labels))


@dataclass
class LayerStats:
    density: float
    transitivity: float
    assortativity: float
    mean_degree: float
    sd_degree: float
    mean_geodesic: float
    diameter: float
    unreachable_pairs: int = 0
    flags: tuple = field(default_factory=tuple)

    def as_tuple(self):
        return tuple(getattr(self, name) for name in STAT_NAMES)

    def as_dict(self):
        return {col: getattr(self, name) for col, name in zip(STAT_COLUMNS, STAT_NAMES)}


def density(A):
    A = np.asarray(A)
    n = A.shape[0]
    if n <= 1:
        return 0.0
    return float(A.sum()) / (n * (n - 1))


def transitivity(A):
    """Global transitivity 3 * triangles / connected triples (0 without triples)."""
    A = np.asarray(A, dtype=np.int64)
    deg = A.sum(axis=1)
    triples = float(np.sum(deg * (deg - 1)))
    if triples == 0:
        return 0.0
    # trace(A^3) counts every triangle six times; triples above are doubled.
    closed = float(np.einsum("ij,jk,ki->", A, A, A))
    return closed / triples


def degree_assortativity(A):
    """Pearson correlation of endpoint degrees over both edge orientations.

    Returns NaN when there are no edges or the degree variance over edge
    endpoints is zero (for instance on regular graphs).
    """
    A = np.asarray(A)
    deg = A.sum(axis=1).astype(float)
    i, j = np.nonzero(A)
    if i.size == 0:
        return float("nan")
    x, y = deg[i], deg[j]
    dx, dy = x - x.mean(), y - y.mean()
    denom = np.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    if denom <= 1e-12 * max(1.0, float(np.sum(x * x))):
        return float("nan")
    return float(np.sum(dx * dy) / denom)


def degree_stats(A, ddof=1):
    """Mean and standard deviation of node degrees (sample SD by default)."""
    deg = np.asarray(A).sum(axis=1).astype(float)
    if deg.size == 0:
        return 0.0, float("nan")
    sd = float(np.std(deg, ddof=ddof)) if deg.size > ddof else float("nan")
    return float(deg.mean()), sd


def geodesic_stats(A):
    """Mean shortest-path length and diameter over connected node pairs.

    Returns ``(mean, diameter, unreachable_pairs)``; mean and diameter are NaN
    when no pair of distinct nodes is connected.
    """
    A = np.asarray(A)
    n = A.shape[0]
    if n < 2:
        return float("nan"), float("nan"), 0
    dist = shortest_path(csr_matrix(A.astype(np.float64)), method="D", unweighted=True,
                         directed=False)
    iu, ju = np.triu_indices(n, k=1)
    d = dist[iu, ju]
    finite = np.isfinite(d)
    unreachable = int((~finite).sum())
    if not finite.any():
        return float("nan"), float("nan"), unreachable
    return float(d[finite].mean()), float(d[finite].max()), unreachable


def layer_stats(A, ddof=1):
    """All seven summary statistics of one layer."""
    A = np.asarray(A)
    flags = []
    assort = degree_assortativity(A)
    if np.isnan(assort):
        flags.append("assortativity_undefined")
    mean_deg, sd_deg = degree_stats(A, ddof=ddof)
    mgeo, diam, unreachable = geodesic_stats(A)
    if np.isnan(mgeo):
        flags.append("no_connected_pairs")
    elif unreachable:
        flags.append("disconnected")
    return LayerStats(density(A), transitivity(A), assort, mean_deg, sd_deg,
                      mgeo, diam, unreachable, tuple(flags))


def network_stats(net, ddof=1):
    return [layer_stats(A, ddof=ddof) for A in net.layers]


# ---------------------------------------------------------------- I/O

def _header(net, fmt):
    return {"n": net.n, "K": net.K, "node_labels": net.node_labels,
            "layer_labels": net.layer_labels, "format": fmt,
            "layers": [f"layer_{k + 1}.csv" for k in range(net.K)]}


def write_header(header, path):
    Path(path).write_text(json.dumps(header, indent=2) + "\n")


def write_network(net, out_dir, fmt="edgelist"):
    """Write ``network.json`` plus one CSV per layer (1-based node indices)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = _header(net, fmt)
    write_header(header, out / "network.json")
    for k, A in enumerate(net.layers):
        with open(out / header["layers"][k], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if fmt == "edgelist":
                w.writerow(["i", "j"])
                iu, ju = np.nonzero(np.triu(A, 1))
                for i, j in zip(iu, ju):
                    w.writerow([i + 1, j + 1])
            elif fmt == "dense":
                for row in A:
                    w.writerow(row.tolist())
            else:
                raise ValueError(f"unknown network format {fmt!r}")
    return out / "network.json"


def read_network(path):
    """Read a network written by :func:`write_network`.

    ``path`` may be the JSON header or the directory containing it.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "network.json"
    header = json.loads(path.read_text())
    n, K = int(header["n"]), int(header["K"])
    fmt = header.get("format", "edgelist")
    files = header.get("layers", [f"layer_{k + 1}.csv" for k in range(K)])
    layers = np.zeros((K, n, n), dtype=np.int8)
    for k, name in enumerate(files):
        fp = path.parent / name
        if fmt == "dense":
            A = np.loadtxt(fp, delimiter=",", dtype=np.int64, ndmin=2)
            if A.shape != (n, n):
                raise NetworkError(f"{fp}: expected {n}x{n} matrix, got {A.shape}")
            layers[k] = A
        else:
            with open(fp, newline="") as fh:
                for row in csv.DictReader(fh):
                    i, j = int(row["i"]) - 1, int(row["j"]) - 1
                    if not (0 <= i < n and 0 <= j < n) or i == j:
                        raise NetworkError(f"{fp}: bad edge ({i + 1}, {j + 1})")
                    layers[k, i, j] = layers[k, j, i] = 1
    return MultilayerNetwork(layers, header.get("node_labels"), header.get("layer_labels"))


def read_dense_layers(paths, node_labels=None, layer_labels=None):
    """Build a network from one dense 0/1 CSV matrix per layer."""
    layers = [np.loadtxt(p, delimiter=",", dtype=np.int64, ndmin=2) for p in paths]
    return MultilayerNetwork(np.stack(layers), node_labels, layer_labels)
