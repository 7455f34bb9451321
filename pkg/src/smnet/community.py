"""Posterior co-clustering, Dahl's least-squares partition and adjusted Rand index."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.special import comb


def canonical_labels(labels):
    """Relabel to 1..C' in order of first occurrence."""
    labels = np.asarray(labels)
    mapping = {}
    out = np.empty(labels.size, dtype=np.int64)
    for i, lab in enumerate(labels.tolist()):
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out[i] = mapping[lab]
    return out


def _layer_labels(archive_or_labels, layer):
    if hasattr(archive_or_labels, "draws"):
        if "xi" not in archive_or_labels.draws:
            raise ValueError("archive has no block labels (not a stochastic block model fit)")
        return archive_or_labels.draws["xi"][:, :, layer]
    return np.asarray(archive_or_labels)


def coclustering(archive, layer=0):
    """Fraction of stored draws in which each node pair shares a label.

    ``archive`` may be a ChainArchive or an (S, n) array of label draws.
    """
    L = _layer_labels(archive, layer)
    if L.shape[0] == 0:
        raise ValueError("no draws")
    P = np.zeros((L.shape[1], L.shape[1]))
    for labels in L:
        P += labels[:, None] == labels[None, :]
    return P / L.shape[0]


def _scaled_dahl_losses(L):
    """S^2 times the squared loss of every draw, in exact integer arithmetic."""
    S = L.shape[0]
    iu, ju = np.triu_indices(L.shape[1], k=1)
    same = (L[:, iu] == L[:, ju]).astype(np.int64)
    counts = same.sum(axis=0)
    return np.sum((S * same - counts) ** 2, axis=1)


def dahl_losses(label_draws, P=None):
    """Squared loss of each draw against the co-clustering matrix (``P`` defaults to the
    draws' own)."""
    L = np.asarray(label_draws)
    if P is None:
        return _scaled_dahl_losses(L) / float(L.shape[0]) ** 2
    iu, ju = np.triu_indices(L.shape[1], k=1)
    target = P[iu, ju]
    return np.array([np.sum(((lab[iu] == lab[ju]) - target) ** 2) for lab in L])


def dahl_partition(archive, layer=0):
    """Stored partition closest in squared loss to the co-clustering matrix.

    Losses are compared exactly (scaled to integers), so ties go to the earliest
    draw; labels are returned in canonical form.
    """
    L = _layer_labels(archive, layer)
    if L.shape[0] == 0:
        raise ValueError("empty archive")
    losses = _scaled_dahl_losses(L)
    return canonical_labels(L[int(np.argmin(losses))])


def ari(p1, p2):
    """Adjusted Rand index from the contingency table of two partitions."""
    p1, p2 = np.asarray(p1), np.asarray(p2)
    if p1.size != p2.size:
        raise ValueError("partitions differ in length")
    n = p1.size
    if n < 2:
        raise ValueError("need at least two items")
    _, a = np.unique(p1, return_inverse=True)
    _, b = np.unique(p2, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    index = comb(table, 2).sum()
    rows = comb(table.sum(axis=1), 2).sum()
    cols = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = rows * cols / total
    maximum = 0.5 * (rows + cols)
    if maximum == expected:
        # both partitions trivial in the same way (all singletons or one block)
        return 1.0 if np.array_equal(canonical_labels(p1), canonical_labels(p2)) else 0.0
    return float((index - expected) / (maximum - expected))


def album_ari_table(archive, album_partition):
    """ARI between the album partition and the Dahl partition of every layer."""
    K = archive.draws["xi"].shape[2]
    return [ari(dahl_partition(archive, k), album_partition) for k in range(K)]


def node_effect_means(archive):
    """Posterior mean of delta_{i,k}, shape (n, K), for external plotting."""
    return archive.draws["delta"].mean(axis=0)


def write_partitions(partitions, out_path, node_labels=None, layer_labels=None):
    partitions = [np.asarray(p) for p in partitions]
    n = partitions[0].size
    node_labels = node_labels or [str(i + 1) for i in range(n)]
    layer_labels = layer_labels or [str(k + 1) for k in range(len(partitions))]
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", *[f"label_{lab}" for lab in layer_labels]])
        for i in range(n):
            w.writerow([node_labels[i], *[int(p[i]) for p in partitions]])


def read_partition(path, node_labels=None):
    """Read a (node_id, label) CSV; rows are ordered to match ``node_labels`` if given."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    key = "label" if "label" in rows[0] else [c for c in rows[0] if c != "node_id"][0]
    lookup = {r["node_id"]: r[key] for r in rows}
    order = node_labels or [r["node_id"] for r in rows]
    missing = [v for v in order if v not in lookup]
    if missing:
        raise ValueError(f"partition file lacks nodes {missing[:5]}")
    return canonical_labels([lookup[v] for v in order])


def write_ari_table(values, out_path, label="model", layer_labels=None):
    layer_labels = layer_labels or [str(k + 1) for k in range(len(values))]
    with open(Path(out_path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", *layer_labels])
        w.writerow([label, *[repr(float(v)) for v in values]])
