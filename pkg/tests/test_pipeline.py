import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from daf_rerank import (
    DaFReRanker,
    InvalidParameterError,
    ReRankParams,
    compute_initial_distances,
    initial_ranking,
    iterate_subfeature,
    rerank,
)
from daf_rerank.pipeline import _aggregate

import reference as ref


@pytest.fixture
def data():
    rng = np.random.default_rng(7)
    return rng.standard_normal((5, 12)), rng.standard_normal((40, 12))


def test_update_arithmetic():
    out = _aggregate(np.array([[0.5]]), np.array([[0.0]]), 0.2)
    assert out[0, 0] == pytest.approx(0.6, abs=1e-15)


def test_iterate_matches_reference(data):
    P, G = data
    dist = compute_initial_distances(P[:, :4], G[:, :4])
    params = ReRankParams(k1=6, k2=3, lam=0.3, iterations=3)
    vp, vg, final = iterate_subfeature(dist, params)
    rp, rg, qg, gg = ref.iterate(dist.query_gallery, dist.gallery_gallery, 6, 3, 0.3, 3)
    assert np.abs(vp.toarray() - rp).max() <= 1e-12
    assert np.abs(vg.toarray() - rg).max() <= 1e-12
    assert np.abs(final.query_gallery - qg).max() <= 1e-12
    assert np.abs(final.gallery_gallery - gg).max() <= 1e-12
    assert np.array_equal(final.gallery_gallery, final.gallery_gallery.T)
    assert np.all(np.diag(final.gallery_gallery) == 0)


def test_single_pass_has_no_update(data):
    P, G = data
    dist = compute_initial_distances(P, G)
    _, _, final = iterate_subfeature(dist, ReRankParams(k1=5, k2=2, iterations=1))
    assert np.array_equal(final.query_gallery, dist.query_gallery)


def test_rerank_result_is_ranked_permutation(data):
    P, G = data
    res = rerank(P, G, ReRankParams(L=3, k1=8, k2=2))
    assert res.distances.shape == (5, 40)
    assert res.distances.min() >= 0 and res.distances.max() <= 1
    for order, d in zip(res.order, res.distances):
        assert sorted(order) == list(range(40))
        assert np.all(np.diff(d[order]) >= 0)
    assert np.array_equal(res.top(3), res.order[:, :3])


def test_rerank_scale_invariant(data):
    P, G = data
    params = ReRankParams(L=2, k1=6, k2=2)
    a = rerank(P, G, params)
    b = rerank(P * 3.5, G * 3.5, params)
    assert np.allclose(a.distances, b.distances, atol=1e-12)


def test_below_one_only_with_shared_support(data):
    P, G = data
    model = DaFReRanker(n_parts=3, k1=5, k2=2).fit(G)
    enc = model.encode(P)
    d = model.transform(P)
    gallery = model.gallery_encoding_.toarray() > 0
    for p in range(P.shape[0]):
        shares = gallery[:, enc[p].indices].any(axis=1)
        assert np.all(d[p][~shares] == 1.0)


def test_estimator_matches_dense_route(data):
    P, G = data
    params = ReRankParams(L=3, k1=7, k2=3, alpha=0.8, lam=0.4, iterations=3)
    dense = rerank(P, G, params)
    model = DaFReRanker(n_parts=3, k1=7, k2=3, alpha=0.8, lam=0.4, n_iter=3, block_rows=7).fit(G)
    assert np.abs(model.transform(P) - dense.distances).max() <= 1e-12
    assert np.array_equal(model.rank(P).order, dense.order)


def test_probe_isolation(data):
    P, G = data
    model = DaFReRanker(n_parts=2, k1=6, k2=2).fit(G)
    together = model.transform(P)
    alone = np.vstack([model.transform(P[i : i + 1]) for i in range(len(P))])
    assert np.array_equal(together, alone)


def test_random_split_deterministic(data):
    P, G = data
    params = ReRankParams(L=4, k1=5, k2=2, split_strategy="random", seed=9)
    assert np.array_equal(rerank(P, G, params).distances, rerank(P, G, params).distances)


def test_parameter_errors_before_work(data):
    P, G = data
    with pytest.raises(InvalidParameterError, match="k1"):
        rerank(P, G, ReRankParams(k1=40, k2=2))
    with pytest.raises(ValueError, match="dimension"):
        rerank(P[:, :5], G)
    with pytest.raises(ValueError):
        rerank(np.full((1, 12), np.nan), G)


def test_initial_ranking(data):
    P, G = data
    G2 = G.copy()
    G2[17] = P[2] * 2.0
    assert initial_ranking(P, G2).order[2, 0] == 17
    perm = np.random.default_rng(0).permutation(40)
    base = initial_ranking(P, G)
    permuted = initial_ranking(P, G[perm])
    assert np.array_equal(perm[permuted.order], base.order)


def test_initial_ranking_agrees_with_first_pass_ranks(data):
    P, G = data
    field = compute_initial_distances(P, G)
    expected = np.argsort(field.query_gallery, axis=1, kind="stable")
    assert np.array_equal(initial_ranking(P, G).order, expected)


def test_estimator_api(data):
    P, G = data
    model = DaFReRanker(n_parts=2, k1=5)
    assert model.get_params()["n_parts"] == 2
    assert clone(model).get_params() == model.get_params()
    with pytest.raises(NotFittedError):
        model.transform(P)
    model.fit(G)
    assert model.n_features_in_ == 12 and model.n_gallery_ == 40
    with pytest.raises(ValueError, match="features"):
        model.transform(P[:, :3])
    with pytest.raises(InvalidParameterError, match="lam"):
        DaFReRanker(lam=1.0).fit(G)
