import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from smnet.assess import (auc, brier, dic, evaluate, log_loss, metrics_over_chain, ppc, waic,
                          write_metrics_report, write_ppc_report)
from smnet.models import Model, default_hyperparameters, prior_draw
from smnet.netcore import STAT_COLUMNS, density

from helpers import archive_from_states


def brute_auc(theta, y):
    pos = [t for t, v in zip(theta, y) if v == 1]
    neg = [t for t, v in zip(theta, y) if v == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def test_auc_examples():
    # pairwise count: (0.9 > 0.8), (0.9 > 0.1), (0.7 < 0.8), (0.7 > 0.1) -> 3 of 4
    assert brute_auc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) == 0.75
    assert auc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) == 0.75
    assert auc([0.9, 0.8, 0.7, 0.1], [1, 0.0, 1, 0]) == brute_auc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])
    assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc(np.full(6, 0.3), [1, 0, 1, 0, 0, 1]) == 0.5
    assert math.isnan(auc([0.2, 0.3], [1, 1]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.1, 0.2, 0.5, 0.7, 0.9]), st.integers(0, 1)),
                min_size=2, max_size=30))
def test_auc_matches_pairwise_and_is_rank_invariant(pairs):
    theta = np.array([p for p, _ in pairs])
    y = np.array([v for _, v in pairs])
    if y.min() == y.max():
        return
    assert auc(theta, y) == pytest.approx(brute_auc(theta, y), abs=1e-12)
    assert auc(np.exp(3 * theta) - 7, y) == pytest.approx(auc(theta, y), abs=1e-12)


def test_brier_examples():
    y = np.array([1, 0, 1])
    assert brier(y.astype(float), y) == 0
    assert brier(np.full(3, 0.5), y) == 0.25
    assert brier([0.8], [0]) == pytest.approx(0.64, abs=1e-15)


def test_log_loss_examples():
    assert log_loss(np.full(4, 0.5), [1, 0, 0, 1]) == pytest.approx(math.log(2), abs=1e-15)
    assert log_loss([1.0, 0.0], [1, 0]) == pytest.approx(1e-12, rel=1e-3)
    assert log_loss([0.9], [1]) == pytest.approx(-math.log(0.9), abs=1e-15)


def test_constant_predictor_optimum_at_base_rate():
    y = np.array([1, 0, 0, 1, 0, 0, 0, 1, 0, 0])
    grid = np.linspace(0.01, 0.99, 99)
    assert grid[np.argmin([brier(np.full(10, g), y) for g in grid])] == pytest.approx(0.3)
    assert grid[np.argmin([log_loss(np.full(10, g), y) for g in grid])] == pytest.approx(0.3)


def zeta_archive(zetas, n=2, K=1):
    """SMN archive whose draws differ only in zeta (all other effects zero)."""
    model = Model("SMN", n, K, 0, default_hyperparameters("SMN"))
    base = prior_draw(model, np.random.default_rng(0))
    base.mu[:], base.delta[:], base.vartheta[:] = 0.0, 0.0, 0.0
    states = []
    for z in zetas:
        s = base.copy()
        s.zeta = z
        states.append(s)
    return archive_from_states(model, states)


def test_dic_and_waic_two_draw_hand_instance():
    a = zeta_archive([0.3, -0.5])
    y = np.array([[1]])
    t1, t2 = norm.cdf(0.3), norm.cdf(-0.5)
    d1, d2 = -2 * math.log(t1), -2 * math.log(t2)
    d_bar = -2 * math.log(norm.cdf(-0.1))
    value, p_d = dic(a, y)
    assert value == pytest.approx(2 * (d1 + d2) / 2 - d_bar, abs=1e-12)
    assert p_d == pytest.approx((d1 + d2) / 2 - d_bar, abs=1e-12)
    lppd = math.log((t1 + t2) / 2)
    p_waic = np.var([math.log(t1), math.log(t2)], ddof=1)
    value, p = waic(a, y)
    assert p == pytest.approx(p_waic, abs=1e-12)
    assert value == pytest.approx(-2 * (lppd - p_waic), abs=1e-12)


def test_degenerate_archive_reduces_to_deviance():
    a = zeta_archive([0.4, 0.4, 0.4], n=4, K=2)
    y = np.array([[1, 0, 0, 1, 0, 1], [0, 0, 1, 1, 0, 0]])
    t = norm.cdf(0.4)
    dev = -2 * (y.sum() * math.log(t) + (y.size - y.sum()) * math.log(1 - t))
    value, p_d = dic(a, y)
    assert p_d == pytest.approx(0, abs=1e-10) and value == pytest.approx(dev, abs=1e-10)
    value, p = waic(a, y)
    assert p == pytest.approx(0, abs=1e-12) and value == pytest.approx(dev, abs=1e-10)


def test_metrics_over_chain_aggregation():
    a = zeta_archive([0.1], n=4, K=2)
    y = np.array([[1, 0, 0, 1, 0, 1], [0, 0, 1, 1, 0, 0]])
    theta = np.full(6, norm.cdf(0.1))
    fm = metrics_over_chain(a, y)
    assert fm.brier == pytest.approx(np.mean([brier(theta, y[0]), brier(theta, y[1])]))
    assert fm.log_loss == pytest.approx(np.mean([log_loss(theta, y[0]), log_loss(theta, y[1])]))
    assert fm.auc == 0.5
    twice = zeta_archive([0.1, 0.1], n=4, K=2)
    assert metrics_over_chain(twice, y).to_dict() == fm.to_dict()


def test_metrics_order_independent():
    model = Model("SMN", 5, 2)
    rng = np.random.default_rng(1)
    states = [prior_draw(model, rng) for _ in range(6)]
    y = (rng.random((2, 10)) < 0.4).astype(int)
    a = archive_from_states(model, states, y)
    b = a.subset(np.array([3, 1, 5, 0, 2, 4]))
    fa, fb = evaluate(a, y), evaluate(b, y)
    for key in ("auc", "brier", "log_loss", "dic", "waic", "p_waic"):
        assert getattr(fa, key) == pytest.approx(getattr(fb, key), rel=1e-12)


def test_ppc_constant_zero_probability():
    a = zeta_archive([-40.0, -40.0], n=5, K=1)
    y = np.array([[1, 1, 0, 0, 1, 0, 0, 0, 0, 1]])
    rep = ppc(a, y, rng=np.random.default_rng(2))
    from smnet.netcore import MultilayerNetwork
    obs = density(MultilayerNetwork.from_dyads(y, 5).layers[0])
    assert rep.predictive_mean[0, 0] == 0.0
    assert rep.rmse[0, 0] == pytest.approx(obs)
    assert rep.excluded[0, 2] == 2  # assortativity undefined on empty graphs


def test_ppc_density_near_expected():
    z = 0.0
    a = zeta_archive([z] * 400, n=8, K=1)
    rng = np.random.default_rng(3)
    y = (rng.random((1, 28)) < 0.5).astype(int)
    rep = ppc(a, y, rng=rng)
    assert abs(rep.predictive_mean[0, 0] - 0.5) < 4 * math.sqrt(0.25 / 28 / 400)
    assert np.all(rep.rmse[np.isfinite(rep.rmse)] >= 0)


def test_report_files(tmp_path):
    a = zeta_archive([0.1, 0.2], n=4, K=1)
    y = np.array([[1, 0, 0, 1, 0, 1]])
    write_metrics_report(evaluate(a, y), tmp_path, label="SMN")
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert header == "model,AUC,BS,LL,DIC,pD,WAIC,pWAIC"
    write_ppc_report(ppc(a, y, rng=np.random.default_rng(4)), tmp_path, label="SMN")
    header = (tmp_path / "ppc.csv").read_text().splitlines()[0].split(",")
    assert header[3:] == list(STAT_COLUMNS)
