import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smnet.graph_build import (COVARIATE_NAMES, DyadicCovariates, assemble_covariates, build_multilayer,
                               knn_graph, nearest_neighbors, read_covariates, standardize_dyads,
                               write_covariates)
from smnet.netcore import check_layer


def random_distances(rng, n):
    pts = rng.normal(size=(n, 3))
    return np.linalg.norm(pts[:, None] - pts[None], axis=2)


def test_three_node_example():
    D = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], dtype=float)
    A = knn_graph(D, 1)
    edges = {(i + 1, j + 1) for i, j in zip(*np.nonzero(np.triu(A)))}
    assert edges == {(1, 2), (1, 3)}


def test_complete_when_k_is_n_minus_one():
    D = random_distances(np.random.default_rng(0), 6)
    assert np.array_equal(knn_graph(D, 5), np.ones((6, 6)) - np.eye(6))


def test_ties_break_by_lower_index():
    D = np.ones((4, 4)) - np.eye(4)
    assert nearest_neighbors(D, 2).tolist() == [[1, 2], [0, 2], [0, 1], [0, 1]]
    D = np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0]], dtype=float)
    assert nearest_neighbors(D, 1).tolist() == [[1], [0], [0]]


def test_invalid_k():
    D = np.zeros((3, 3))
    for k in (0, 3):
        with pytest.raises(ValueError):
            knn_graph(D, k)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 12))
def test_knn_properties(seed, n):
    rng = np.random.default_rng(seed)
    D = random_distances(rng, n)
    previous = np.zeros((n, n), dtype=np.int8)
    for k in range(1, n):
        A = knn_graph(D, k)
        check_layer(A)
        degrees = A.sum(axis=1)
        assert degrees.min() >= k and A.sum() // 2 <= n * k
        assert np.all(A >= previous)
        previous = A


def test_build_multilayer():
    rng = np.random.default_rng(1)
    D = random_distances(rng, 8)
    net = build_multilayer([D, D, D], 2)
    assert net.K == 3 and all(np.array_equal(net.layers[0], L) for L in net.layers)
    perm = rng.permutation(8)
    again = build_multilayer([D[np.ix_(perm, perm)]], 2)
    assert np.array_equal(again.layers[0], net.layers[0][np.ix_(perm, perm)])
    with pytest.raises(ValueError):
        build_multilayer([D, D[:5, :5]], 2)


def test_density_near_published_range():
    rng = np.random.default_rng(7)
    n = 150
    curves = rng.normal(size=(n, 50))
    Ds = [np.linalg.norm(curves[:, None] - curves[None], axis=2) for _ in range(4)]
    net = build_multilayer(Ds, 3)
    dens = net.layers[0].sum() / (n * (n - 1))
    assert 0.02 <= dens <= 0.035


def song_rows():
    base = [
        dict(year=1986, bpm=120, duration_s=300, album="A"),
        dict(year=1990, bpm=140, duration_s=250, album="B"),
        dict(year=1990, bpm=100, duration_s=410, album="B"),
    ]
    emotions = [[1, 0, 0, 0, 0, 0, 0, 1], [1, 0, 0, 0, 0, 0, 0, 1], [0, 2, 1, 0, 0, 0, 3, 0]]
    vads = [(0.1, 0.5, 0.2), (0.4, 0.2, 0.9), (0.7, 0.1, 0.3)]
    for row, e, v in zip(base, emotions, vads):
        row.update({f"emo_{i + 1}": x for i, x in enumerate(e)})
        row.update(vad_v=v[0], vad_a=v[1], vad_d=v[2])
    return base


def test_year_covariate_example():
    cov = assemble_covariates(song_rows())
    assert cov.names == list(COVARIATE_NAMES)
    X = cov.dyad_matrix()
    raw = np.array([4.0, 4.0, 0.0])
    assert np.allclose(X[:, 0], (raw - raw.mean()) / raw.std(ddof=1))
    assert np.allclose(X[:, 3], [0, 0, 1])
    assert cov.standardized == [True, True, True, False, True, True]


def test_emotion_cosine_before_standardization():
    rows = song_rows()
    E = np.array([[float(r[f"emo_{i}"]) for i in range(1, 9)] for r in rows])
    cos = E @ E.T / np.outer(np.linalg.norm(E, axis=1), np.linalg.norm(E, axis=1))
    assert cos[0, 1] == pytest.approx(1.0)
    raw = cos[[0, 0, 1], [1, 2, 2]]
    X = assemble_covariates(rows).dyad_matrix()
    assert np.allclose(X[:, 4], (raw - raw.mean()) / raw.std(ddof=1))


def test_covariates_symmetric_and_centered():
    rng = np.random.default_rng(4)
    rows = []
    for i in range(12):
        r = dict(year=int(rng.integers(1983, 2016)), bpm=float(rng.uniform(80, 200)),
                 duration_s=float(rng.uniform(120, 600)), album=str(rng.integers(0, 4)))
        r.update({f"emo_{j}": float(rng.uniform()) for j in range(1, 9)})
        r.update(vad_v=rng.uniform(), vad_a=rng.uniform(), vad_d=rng.uniform())
        rows.append(r)
    cov = assemble_covariates(rows)
    assert np.allclose(cov.matrices, np.swapaxes(cov.matrices, 1, 2))
    X = cov.dyad_matrix()
    for l, flag in enumerate(cov.standardized):
        if flag:
            assert abs(X[:, l].mean()) < 1e-9
            assert X[:, l].std(ddof=1) == pytest.approx(1.0)
        else:
            assert set(np.unique(X[:, l])) <= {0.0, 1.0}


def test_missing_attribute_dropped_with_warning():
    rows = song_rows()
    for r in rows:
        del r["bpm"]
    with pytest.warns(UserWarning, match="abs_diff_bpm"):
        cov = assemble_covariates(rows)
    assert "abs_diff_bpm" not in cov.names and cov.p == 5


def test_standardize_dyads_constant():
    with pytest.raises(ValueError):
        standardize_dyads(np.ones((3, 3)))


def test_covariate_io_round_trip(tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cov = assemble_covariates(song_rows())
    write_covariates(cov, tmp_path)
    back = read_covariates(tmp_path)
    assert back.names == cov.names and back.standardized == cov.standardized
    assert np.array_equal(back.matrices, cov.matrices)


def test_from_dyads():
    X = np.arange(6.0).reshape(3, 2)
    cov = DyadicCovariates.from_dyads(X, 3)
    assert np.array_equal(cov.dyad_matrix(), X)
