"""Smoothed, resampled and standardized feature curves, and curve distances."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, make_smoothing_spline
from scipy.spatial.distance import pdist, squareform

DEFAULT_GRID = 1000
DISTANCES = ("canberra", "correlation", "cosine", "euclidean")


class CurveError(ValueError):
    pass


@dataclass
class FeatureCurve:
    song_id: str
    metric_id: str
    values: np.ndarray


def grid(M=DEFAULT_GRID):
    return np.linspace(0.0, 1.0, M)


def smooth_resample(times, values, M=DEFAULT_GRID, lam=None):
    """Fit a cubic smoothing spline to (times, values) and evaluate on the grid.

    NaN values are treated as missing frames and dropped. ``lam=None`` picks the
    penalty by generalized cross-validation. With exactly four frames the GCV
    fit is unavailable and the natural cubic interpolant is used instead.
    """
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    keep = np.isfinite(y) & np.isfinite(t)
    t, y = t[keep], y[keep]
    if t.size < 4:
        raise CurveError(f"need at least 4 valid frames, got {t.size}")
    if np.any(np.diff(t) <= 0):
        raise CurveError("frame times must be strictly increasing")
    if t.size == 4:
        spline = CubicSpline(t, y, bc_type="natural")
    else:
        spline = make_smoothing_spline(t, y, lam=lam)
    return spline(grid(M))


def standardize(values, ddof=1):
    """Zero mean, unit standard deviation. Constant input raises CurveError."""
    v = np.asarray(values, dtype=np.float64)
    sd = v.std(ddof=ddof)
    if not np.isfinite(sd) or sd <= 1e-12 * max(1.0, float(np.abs(v).max())):
        raise CurveError("degenerate (constant) curve cannot be standardized")
    return (v - v.mean()) / sd


def make_curve(song_id, series, M=DEFAULT_GRID, lam=None):
    """FeatureCurve from a FrameSeries: resample first, then standardize."""
    t, y = series.defined()
    return FeatureCurve(str(song_id), series.metric_id,
                        standardize(smooth_resample(t, y, M, lam)))


def canberra(g, h):
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    num = np.abs(g - h)
    den = np.abs(g) + np.abs(h)
    return float(np.sum(np.divide(num, den, out=np.zeros_like(num), where=den > 0)))


def alt_distance(g, h, kind):
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if kind == "canberra":
        return canberra(g, h)
    if kind == "euclidean":
        return float(np.linalg.norm(g - h))
    if kind == "cosine":
        return float(1.0 - g @ h / (np.linalg.norm(g) * np.linalg.norm(h)))
    if kind == "correlation":
        gc, hc = g - g.mean(), h - h.mean()
        den = np.linalg.norm(gc) * np.linalg.norm(hc)
        if den == 0:
            raise CurveError("correlation distance undefined for constant input")
        return float(1.0 - gc @ hc / den)
    raise ValueError(f"unknown distance {kind!r}")


def distance_matrix(curves, kind="canberra"):
    """Symmetric n x n distance matrix with zero diagonal."""
    if kind not in DISTANCES:
        raise ValueError(f"unknown distance {kind!r}")
    G = np.vstack([c.values if isinstance(c, FeatureCurve) else np.asarray(c, float)
                   for c in curves])
    if not np.all(np.isfinite(G)):
        raise CurveError("curves contain non-finite values")
    if kind == "correlation" and np.any(G.std(axis=1) == 0):
        raise CurveError("correlation distance undefined for constant curve")
    D = squareform(pdist(G, metric=kind))
    np.fill_diagonal(D, 0.0)
    return D


def write_curves(curves, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["song_id", "metric_id", "l", "value"])
        for c in curves:
            for ell, v in enumerate(c.values, start=1):
                w.writerow([c.song_id, c.metric_id, ell, repr(float(v))])


def read_curves(path):
    rows = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault((r["song_id"], r["metric_id"]), []).append(
                (int(r["l"]), float(r["value"])))
    out = []
    for (song, metric), pts in rows.items():
        pts.sort()
        out.append(FeatureCurve(song, metric, np.array([v for _, v in pts])))
    return out


def write_distance_matrix(D, kind, path, labels=None):
    with open(path, "w", newline="") as fh:
        fh.write(f"# metric={kind}\n")
        w = csv.writer(fh, lineterminator="\n")
        if labels is not None:
            w.writerow(["#labels", *labels])
        for row in np.asarray(D):
            w.writerow([repr(float(v)) for v in row])


def read_distance_matrix(path):
    kind, labels, rows = None, None, []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row and row[0].startswith("# metric="):
                kind = row[0].split("=", 1)[1]
            elif row and row[0] == "#labels":
                labels = row[1:]
            elif row:
                rows.append([float(v) for v in row])
    return np.array(rows), kind, labels
