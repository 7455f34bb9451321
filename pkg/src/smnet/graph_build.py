"""kNN similarity layers from distance matrices, and dyadic covariates."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .netcore import MultilayerNetwork

COVARIATE_NAMES = ("abs_diff_year", "abs_diff_bpm", "abs_diff_duration",
                   "same_album", "emotion_cosine", "vad_distance")
EMOTION_COLUMNS = tuple(f"emo_{i}" for i in range(1, 9))
VAD_COLUMNS = ("vad_v", "vad_a", "vad_d")


def nearest_neighbors(D, k):
    """k nearest neighbours of every node, ordered by (distance, index)."""
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    idx = np.arange(n)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        others = idx[idx != i]
        # lexsort uses the last key as primary; zero distance (infinite affinity) sorts first
        order = np.lexsort((others, D[i, others]))
        out[i] = others[order[:k]]
    return out


def knn_graph(D, k):
    """Undirected kNN graph with the OR rule: i ~ j if either lists the other."""
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise ValueError("distance matrix must be square")
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    nn = nearest_neighbors(D, k)
    A = np.zeros((n, n), dtype=np.int8)
    rows = np.repeat(np.arange(n), k)
    A[rows, nn.ravel()] = 1
    A = np.maximum(A, A.T)
    np.fill_diagonal(A, 0)
    return A


def build_multilayer(distances, k, node_labels=None, layer_labels=None):
    distances = [np.asarray(D) for D in distances]
    n = distances[0].shape[0]
    if any(D.shape != (n, n) for D in distances):
        raise ValueError("distance matrices differ in size")
    return MultilayerNetwork(np.stack([knn_graph(D, k) for D in distances]),
                             node_labels, layer_labels)


@dataclass
class DyadicCovariates:
    """p symmetric n x n covariate matrices, stored as shape (p, n, n)."""
    matrices: np.ndarray
    names: list
    standardized: list = field(default_factory=list)

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=np.float64)
        if self.matrices.ndim == 2:
            self.matrices = self.matrices[None]
        if not self.standardized:
            self.standardized = [False] * self.p
        if len(self.names) != self.p:
            raise ValueError("covariate names do not match matrix count")
        if not np.allclose(self.matrices, np.swapaxes(self.matrices, 1, 2)):
            raise ValueError("covariate matrices must be symmetric")

    @property
    def p(self):
        return self.matrices.shape[0]

    @property
    def n(self):
        return self.matrices.shape[1]

    def dyad_matrix(self):
        """Covariates on the upper-triangle dyads, shape (n(n-1)/2, p)."""
        iu, ju = np.triu_indices(self.n, k=1)
        return self.matrices[:, iu, ju].T.copy()

    @classmethod
    def from_dyads(cls, X, n, names=None, standardized=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        p = X.shape[1]
        iu, ju = np.triu_indices(n, k=1)
        mats = np.zeros((p, n, n))
        mats[:, iu, ju] = X.T
        mats[:, ju, iu] = X.T
        return cls(mats, list(names or [f"x{l + 1}" for l in range(p)]),
                   list(standardized or [False] * p))


def standardize_dyads(M, ddof=1):
    """Standardize a symmetric matrix over its i<j entries (diagonal left 0)."""
    n = M.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    v = M[iu, ju]
    sd = v.std(ddof=ddof)
    if not sd > 0:
        raise ValueError("covariate is constant over dyads")
    out = np.zeros_like(M, dtype=np.float64)
    z = (v - v.mean()) / sd
    out[iu, ju] = z
    out[ju, iu] = z
    return out


def _abs_diff(v):
    return np.abs(v[:, None] - v[None, :])


def _cosine(E):
    norms = np.linalg.norm(E, axis=1)
    G = E @ E.T
    den = norms[:, None] * norms[None, :]
    return np.divide(G, den, out=np.zeros_like(G), where=den > 0)


def _column(table, names, cast=float):
    try:
        vals = [[cast(row[c]) for c in names] for row in table]
    except (KeyError, ValueError, TypeError):
        return None
    arr = np.asarray(vals, dtype=np.float64)
    return arr if np.all(np.isfinite(arr)) else None


def assemble_covariates(song_table, ddof=1):
    """Six dyadic covariates from a song table (list of dict rows).

    Order: |Δyear|, |Δbpm|, |Δduration|, same-album indicator, cosine of the
    emotion-share vectors, Euclidean distance between VAD triples after
    standardizing each VAD dimension over songs. All but the album indicator
    are then standardized over the i<j dyads. A covariate whose inputs are
    missing is dropped with a warning.
    """
    table = list(song_table)
    n = len(table)
    raw = {}
    for name, col in (("abs_diff_year", "year"), ("abs_diff_bpm", "bpm"),
                      ("abs_diff_duration", "duration_s")):
        v = _column(table, [col])
        if v is not None:
            raw[name] = _abs_diff(v[:, 0])
    try:
        albums = [str(row["album"]) for row in table]
        if any(a == "" for a in albums):
            raise KeyError("album")
        raw["same_album"] = np.array([[float(a == b) for b in albums] for a in albums])
        np.fill_diagonal(raw["same_album"], 0.0)
    except KeyError:
        pass
    E = _column(table, EMOTION_COLUMNS)
    if E is not None:
        raw["emotion_cosine"] = _cosine(E)
    V = _column(table, VAD_COLUMNS)
    if V is not None:
        sd = V.std(axis=0, ddof=ddof)
        Vs = (V - V.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        raw["vad_distance"] = np.linalg.norm(Vs[:, None, :] - Vs[None, :, :], axis=2)

    mats, names, flags = [], [], []
    for name in COVARIATE_NAMES:
        if name not in raw:
            warnings.warn(f"covariate {name} dropped: missing or invalid attribute")
            continue
        M = raw[name]
        if name == "same_album":
            mats.append(M)
            flags.append(False)
        else:
            try:
                mats.append(standardize_dyads(M, ddof))
            except ValueError:
                warnings.warn(f"covariate {name} dropped: constant over dyads")
                continue
            flags.append(True)
        names.append(name)
    if not mats:
        return DyadicCovariates(np.zeros((0, n, n)), [], [])
    return DyadicCovariates(np.stack(mats), names, flags)


def read_song_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_covariates(cov, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, M in zip(cov.names, cov.matrices):
        fname = f"cov_{name}.csv"
        np.savetxt(out / fname, M, delimiter=",", fmt="%.17g")
        files.append(fname)
    manifest = {"n": cov.n, "p": cov.p, "names": list(cov.names),
                "standardized": [bool(s) for s in cov.standardized],
                "standardization_population": "dyads_i<j", "ddof": 1,
                "files": files}
    (out / "covariates.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out / "covariates.json"


def read_covariates(path):
    path = Path(path)
    if path.is_dir():
        path = path / "covariates.json"
    man = json.loads(path.read_text())
    n = int(man["n"])
    if not man["files"]:
        return DyadicCovariates(np.zeros((0, n, n)), [], [])
    mats = [np.loadtxt(path.parent / f, delimiter=",", ndmin=2) for f in man["files"]]
    return DyadicCovariates(np.stack(mats), man["names"], man["standardized"])
