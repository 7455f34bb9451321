"""Posterior predictive checks, scoring rules and information criteria."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import log_ndtr, ndtr
from scipy.stats import rankdata

from .models import eta, simulate_dyads
from .netcore import STAT_COLUMNS, MultilayerNetwork, layer_stats

LOGLOSS_CLIP = 1e-12


# ------------------------------------------------------------ scoring rules

def auc(theta, y):
    """Mann-Whitney AUC with ties counted one half; NaN if only one class is present."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    y = np.asarray(y).ravel()
    n1 = int(np.sum(y == 1))
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        return float("nan")
    ranks = rankdata(theta)
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def brier(theta, y):
    theta = np.asarray(theta, dtype=np.float64)
    return float(np.mean((theta - np.asarray(y)) ** 2))


def log_loss(theta, y, clip=LOGLOSS_CLIP):
    theta = np.clip(np.asarray(theta, dtype=np.float64), clip, 1.0 - clip)
    y = np.asarray(y)
    return float(-np.mean(np.where(y == 1, np.log(theta), np.log1p(-theta))))


# ------------------------------------------------------------ chain-level metrics

@dataclass
class FitMetrics:
    auc: float
    brier: float
    log_loss: float
    dic: float = float("nan")
    p_dic: float = float("nan")
    waic: float = float("nan")
    p_waic: float = float("nan")
    auc_layers: list = field(default_factory=list)
    brier_layers: list = field(default_factory=list)
    log_loss_layers: list = field(default_factory=list)
    undefined_auc: int = 0

    def to_dict(self):
        return asdict(self)


def draw_probabilities(archive, X):
    """Edge probabilities per stored draw, yielded as (K, D) arrays."""
    for state in archive.states():
        yield ndtr(eta(archive.model, state, X))


def metrics_over_chain(archive, y, X=None):
    """Per-draw, per-layer AUC / Brier / log-loss, then posterior mean per layer,
    then the average over layers."""
    y = np.asarray(y)
    K = y.shape[0]
    S = archive.n_draws
    A = np.empty((S, K))
    B = np.empty((S, K))
    L = np.empty((S, K))
    for s, theta in enumerate(draw_probabilities(archive, X)):
        for k in range(K):
            A[s, k] = auc(theta[k], y[k])
            B[s, k] = brier(theta[k], y[k])
            L[s, k] = log_loss(theta[k], y[k])
    undefined = int(np.isnan(A).sum())
    with np.errstate(invalid="ignore"):
        a_layers = np.array([np.nanmean(A[:, k]) if np.any(np.isfinite(A[:, k])) else np.nan
                             for k in range(K)])
    b_layers, l_layers = B.mean(axis=0), L.mean(axis=0)
    a_mean = float(np.nanmean(a_layers)) if np.any(np.isfinite(a_layers)) else float("nan")
    return FitMetrics(a_mean, float(b_layers.mean()), float(l_layers.mean()),
                      auc_layers=a_layers.tolist(), brier_layers=b_layers.tolist(),
                      log_loss_layers=l_layers.tolist(), undefined_auc=undefined)


def bernoulli_loglik(theta, y):
    theta = np.asarray(theta, dtype=np.float64)
    y = np.asarray(y)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.where(y == 1, np.log(theta), np.log1p(-theta))))


def dic(archive, y, X=None):
    """DIC = 2 * mean deviance - deviance at the point estimate; returns (DIC, p_D).

    The point estimate is the block-wise posterior mean, except for the block
    model whose discrete labels cannot be averaged: there the posterior mean
    edge probability of every dyad is used.
    """
    y = np.asarray(y)
    model = archive.model
    dev = np.array([-2.0 * float(np.sum(np.where(y == 1, log_ndtr(e), log_ndtr(-e))))
                    for e in (eta(model, st, X) for st in archive.states())])
    if model.has_blocks:
        theta_bar = np.zeros(y.shape)
        for theta in draw_probabilities(archive, X):
            theta_bar += theta
        theta_bar /= archive.n_draws
        dev_hat = -2.0 * bernoulli_loglik(theta_bar, y)
    else:
        e = eta(model, archive.posterior_mean_state(), X)
        dev_hat = -2.0 * float(np.sum(np.where(y == 1, log_ndtr(e), log_ndtr(-e))))
    mean_dev = float(dev.mean())
    return 2.0 * mean_dev - dev_hat, mean_dev - dev_hat


def waic(archive, y, X=None):
    """WAIC = -2 (lppd - p_waic); returns (WAIC, p_waic).

    Pointwise log-likelihoods are reduced in one pass over the draws
    (streaming log-sum-exp and Welford variance), so memory stays O(K D).
    """
    y = np.asarray(y)
    positive = y == 1
    model = archive.model
    run_max = run_sum = mean = m2 = None
    count = 0
    for state in archive.states():
        e = eta(model, state, X)
        ll = np.where(positive, log_ndtr(e), log_ndtr(-e))
        count += 1
        if run_max is None:
            run_max, run_sum = ll.copy(), np.ones_like(ll)
            mean, m2 = ll.copy(), np.zeros_like(ll)
            continue
        new_max = np.maximum(run_max, ll)
        run_sum = run_sum * np.exp(run_max - new_max) + np.exp(ll - new_max)
        run_max = new_max
        delta = ll - mean
        mean += delta / count
        m2 += delta * (ll - mean)
    lppd = float(np.sum(run_max + np.log(run_sum) - np.log(count)))
    p_waic = float(np.sum(m2 / (count - 1))) if count > 1 else 0.0
    return -2.0 * (lppd - p_waic), p_waic


def evaluate(archive, y, X=None):
    fm = metrics_over_chain(archive, y, X)
    fm.dic, fm.p_dic = dic(archive, y, X)
    fm.waic, fm.p_waic = waic(archive, y, X)
    return fm


# ------------------------------------------------------------ posterior predictive checks

@dataclass
class PPCReport:
    observed: np.ndarray      # (K, 7)
    predictive_mean: np.ndarray  # (K, 7)
    rmse: np.ndarray          # (K, 7)
    rmse_mean: np.ndarray     # (7,)
    excluded: np.ndarray      # (K, 7) draws with an undefined statistic
    layer_labels: list = None

    def to_dict(self):
        cols = list(STAT_COLUMNS)
        return {
            "columns": cols,
            "layers": self.layer_labels,
            "observed": self.observed.tolist(),
            "predictive_mean": self.predictive_mean.tolist(),
            "rmse": self.rmse.tolist(),
            "rmse_mean": self.rmse_mean.tolist(),
            "excluded": self.excluded.tolist(),
        }


def ppc(archive, y, X=None, rng=None, ddof=1):
    """Simulate one network per stored draw and summarize its layer statistics.

    The per-layer error is the absolute gap between the posterior predictive
    mean of a statistic and its observed value; these are then averaged over
    layers. Draws where a statistic is undefined are excluded and counted.
    """
    y = np.asarray(y)
    model = archive.model
    rng = rng or np.random.default_rng(0)
    K = y.shape[0]
    obs_net = MultilayerNetwork.from_dyads(y, model.n)
    observed = np.array([layer_stats(A, ddof).as_tuple() for A in obs_net.layers])
    sims = np.empty((archive.n_draws, K, len(STAT_COLUMNS)))
    for s, state in enumerate(archive.states()):
        net = MultilayerNetwork.from_dyads(simulate_dyads(model, state, X, rng), model.n)
        sims[s] = [layer_stats(A, ddof).as_tuple() for A in net.layers]
    excluded = np.isnan(sims).sum(axis=0)
    with np.errstate(invalid="ignore"):
        pm = np.where(excluded < archive.n_draws,
                      np.nansum(sims, axis=0) / np.maximum(archive.n_draws - excluded, 1),
                      np.nan)
    rmse = np.abs(pm - observed)
    with np.errstate(invalid="ignore"):
        rmse_mean = np.array([np.nanmean(rmse[:, c]) if np.any(np.isfinite(rmse[:, c]))
                              else np.nan for c in range(rmse.shape[1])])
    return PPCReport(observed, pm, rmse, rmse_mean, excluded)


# ------------------------------------------------------------ reports

def _fmt(v):
    return "NA" if v is None or not np.isfinite(v) else repr(float(v))


def write_ppc_report(report, out_dir, label="model"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    layers = report.layer_labels or [str(k + 1) for k in range(report.rmse.shape[0])]
    with open(out / "ppc.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "layer", "quantity", *STAT_COLUMNS])
        for k, lab in enumerate(layers):
            w.writerow([label, lab, "observed", *map(_fmt, report.observed[k])])
            w.writerow([label, lab, "predictive_mean", *map(_fmt, report.predictive_mean[k])])
            w.writerow([label, lab, "rmse", *map(_fmt, report.rmse[k])])
        w.writerow([label, "average", "rmse", *map(_fmt, report.rmse_mean)])
    (out / "ppc.json").write_text(json.dumps(_clean(report.to_dict()), indent=2) + "\n")


def write_metrics_report(metrics, out_dir, label="model"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "AUC", "BS", "LL", "DIC", "pD", "WAIC", "pWAIC"])
        w.writerow([label, *map(_fmt, (metrics.auc, metrics.brier, metrics.log_loss,
                                       metrics.dic, metrics.p_dic, metrics.waic,
                                       metrics.p_waic))])
    (out / "metrics.json").write_text(json.dumps(_clean(metrics.to_dict()), indent=2) + "\n")


def _clean(obj):
    """JSON-safe copy with non-finite floats replaced by None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
