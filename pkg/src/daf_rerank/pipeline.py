"""Divide-and-Fuse re-ranking: per-part iterative encoding, fusion, final ranking."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import (
    DistanceField,
    ReRankParams,
    _self_first,
    check_features,
    compute_initial_distances,
    halved_distances,
    lookup_ranks,
    normalize_rows,
    split_features,
    topk_neighbors,
)
from .encoding import encode_neighbors, enhance
from .fusion import InvertedIndex, fuse

__all__ = [
    "RankingResult",
    "DaFReRanker",
    "iterate_subfeature",
    "rerank",
    "initial_ranking",
]

logger = logging.getLogger(__name__)

# dense working rows are materialised in blocks of about this many entries
_BLOCK_ENTRIES = 1 << 22
# a whole pass matrix is cached when it stays below this many entries
_CACHE_ENTRIES = 1 << 23


@dataclass(frozen=True)
class RankingResult:
    """Per-probe gallery order (ascending distance, ties by index) and distances."""

    order: np.ndarray
    distances: np.ndarray

    @classmethod
    def from_distances(cls, distances: np.ndarray) -> "RankingResult":
        order = np.argsort(distances, axis=1, kind="stable")
        return cls(order=order, distances=distances)

    def top(self, k: int) -> np.ndarray:
        return self.order[:, :k]


def _blocks(n: int, n_cols: int, block_rows: int | None = None):
    step = block_rows or max(16, _BLOCK_ENTRIES // max(n_cols, 1))
    for start in range(0, n, step):
        yield start, min(n, start + step)


class _DenseSource:
    def __init__(self, gallery_gallery: np.ndarray):
        self.gg = gallery_gallery
        self.n_gallery = gallery_gallery.shape[0]

    def gallery_rows(self, idx: np.ndarray) -> np.ndarray:
        return np.array(self.gg[idx], dtype=np.float64)


class _FeatureSource:
    """Initial gallery distances computed on demand from row-normalised features."""

    def __init__(self, gallery: np.ndarray):
        self.gallery = gallery
        self.n_gallery = gallery.shape[0]

    def gallery_rows(self, idx: np.ndarray) -> np.ndarray:
        rows = halved_distances(self.gallery[idx], self.gallery)
        rows[np.arange(len(idx)), idx] = 0.0
        return rows

    def probe_rows(self, probes: np.ndarray) -> np.ndarray:
        return halved_distances(probes, self.gallery)


def _aggregate(D: np.ndarray, similarity: np.ndarray, lam: float) -> np.ndarray:
    # d := (1 - lam) d + lam * d_hat with d_hat = 1 - similarity
    return (1.0 - lam) * D + lam * (1.0 - similarity)


class _SubFeatureEngine:
    """Iterative contextual encoding of one sub-feature.

    The gallery side is fitted once and never sees probes. Working distances
    of pass ``t`` are rebuilt row-wise from the initial distances and the
    enhanced encodings of passes ``0..t-1``, so memory stays O(N_g * k1 * k2)
    plus one block of dense rows.
    """

    def __init__(self, source, params: ReRankParams, block_rows: int | None = None):
        self.source = source
        self.params = params
        self.block_rows = block_rows
        self.n_gallery = source.n_gallery
        self.pre: list[sparse.csr_matrix] = []
        self.post: list[sparse.csr_matrix] = []
        self.indexes: list[InvertedIndex] = []
        self._cache: dict[int, np.ndarray] = {}

    def gallery_rows(self, idx: np.ndarray, t: int) -> np.ndarray:
        if t in self._cache:
            return self._cache[t][idx]
        D = self.source.gallery_rows(idx)
        for u in range(t):
            D = _aggregate(D, self.indexes[u].similarities(self.post[u][idx]), self.params.lam)
        D[np.arange(len(idx)), idx] = 0.0
        return D

    def _ranking_rows(self, idx: np.ndarray, t: int) -> np.ndarray:
        return _self_first(self.gallery_rows(idx, t), idx)

    def _blocks(self, n: int):
        return _blocks(n, self.n_gallery, self.block_rows)

    def pair_ranks(self, neighbors: np.ndarray, t: int) -> np.ndarray:
        """``out[i, a, b]`` = rank of ``neighbors[i, b]`` in gallery ``neighbors[i, a]``'s list."""
        n, k = neighbors.shape
        out = np.empty((n, k, k), dtype=np.int64)
        flat = neighbors.ravel()
        order = np.argsort(flat, kind="stable")
        owners = flat[order]
        rows = np.unique(owners)
        for a, b in self._blocks(rows.size):
            ids = rows[a:b]
            lo = np.searchsorted(owners, ids[0], side="left")
            hi = np.searchsorted(owners, ids[-1], side="right")
            entries = order[lo:hi]
            who, slot = np.divmod(entries, k)
            local = np.repeat(np.searchsorted(ids, owners[lo:hi]), k)
            ranks = lookup_ranks(self._ranking_rows(ids, t), local, neighbors[who].ravel())
            out[who, slot, :] = ranks.reshape(-1, k)
        return out

    def _encode(self, neighbors: np.ndarray, t: int, gallery_pre=None):
        pre = encode_neighbors(neighbors, self.pair_ranks(neighbors, t), self.n_gallery)
        # galleries are enhanced with their own pass-t encodings
        gallery_pre = pre if gallery_pre is None else gallery_pre
        return pre, enhance(pre, neighbors[:, : self.params.k2], gallery_pre)

    def fit(self) -> sparse.csr_matrix:
        """Encode every gallery item for all passes; return the last enhanced encodings."""
        p, n = self.params, self.n_gallery
        all_ids = np.arange(n)
        for t in range(p.iterations):
            if n * n <= _CACHE_ENTRIES:
                self._cache = {t: self.gallery_rows(all_ids, t)}
            neighbors = np.empty((n, p.k1), dtype=np.int64)
            for a, b in self._blocks(n):
                neighbors[a:b] = topk_neighbors(self._ranking_rows(all_ids[a:b], t), p.k1)
            pre, post = self._encode(neighbors, t)
            self.pre.append(pre)
            if t < p.iterations - 1:
                self.post.append(post)
                self.indexes.append(InvertedIndex(post))
            self._cache = {}
        return post

    def final_gallery_distances(self) -> np.ndarray:
        t = self.params.iterations - 1
        D = np.vstack([self.gallery_rows(np.arange(a, b), t) for a, b in self._blocks(self.n_gallery)])
        D = (D + D.T) / 2.0
        np.fill_diagonal(D, 0.0)
        return D

    def encode_probes(self, d0: np.ndarray) -> tuple[sparse.csr_matrix, np.ndarray]:
        """Encode a block of probes from their initial distance rows.

        Returns the last-pass enhanced encodings and the working distances
        they were built from.
        """
        p = self.params
        D = np.array(d0, dtype=np.float64, copy=True)
        for t in range(p.iterations):
            if t:
                D = _aggregate(D, self.indexes[t - 1].similarities(post), p.lam)
            neighbors = topk_neighbors(D, p.k1)
            _, post = self._encode(neighbors, t, self.pre[t])
        return post, D


def iterate_subfeature(dist0: DistanceField, params: ReRankParams):
    """Run the iterative encoding on one sub-feature's initial distances.

    Returns ``(probe_encodings, gallery_encodings, final_field)`` where the
    encodings are the enhanced sparse vectors of the last pass and
    ``final_field`` holds the working distances that pass was ranked on.
    """
    params.validate(n_gallery=dist0.n_gallery)
    engine = _SubFeatureEngine(_DenseSource(dist0.gallery_gallery), params)
    gallery = engine.fit()
    probes, qg = engine.encode_probes(dist0.query_gallery)
    return probes, gallery, DistanceField(qg, engine.final_gallery_distances())


def _check_pair(probes, galleries) -> tuple[np.ndarray, np.ndarray]:
    probes = check_features(probes, "probe features")
    galleries = check_features(galleries, "gallery features")
    if probes.shape[1] != galleries.shape[1]:
        raise ValueError(
            f"dimension mismatch: probes have {probes.shape[1]} columns, galleries {galleries.shape[1]}"
        )
    return probes, galleries


def rerank(probes, galleries, params: ReRankParams | None = None) -> RankingResult:
    """Dense reference route: materialises every sub-feature's distance field.

    Memory grows with N_g ** 2; use :class:`DaFReRanker` for large galleries.
    """
    params = params or ReRankParams()
    probes, galleries = _check_pair(probes, galleries)
    params.validate(probes.shape[1], galleries.shape[0])
    probe_parts, gallery_parts = [], []
    for cols in split_features(galleries, params.L, params.split_strategy, params.seed):
        vp, vg, _ = iterate_subfeature(compute_initial_distances(probes[:, cols], galleries[:, cols]), params)
        probe_parts.append(vp)
        gallery_parts.append(vg)
    index = InvertedIndex(fuse(gallery_parts, params.alpha))
    return RankingResult.from_distances(index.distances(fuse(probe_parts, params.alpha)))


def initial_ranking(probes, galleries) -> RankingResult:
    """Baseline ranking by normalised Euclidean distance on the whole feature."""
    probes, galleries = _check_pair(probes, galleries)
    return RankingResult.from_distances(halved_distances(normalize_rows(probes), normalize_rows(galleries)))


class DaFReRanker(TransformerMixin, BaseEstimator):
    """Divide-and-Fuse re-ranking as a scikit-learn transformer.

    ``fit`` takes the gallery features; ``transform`` maps probe features to
    their re-ranked distances against that gallery (shape n_probes x
    n_gallery). Galleries are encoded without any probe information, and
    each probe is encoded independently of the others.

    Distance rows are produced block by block, so N_g x N_g matrices are
    never held in memory.

    Parameters
    ----------
    n_parts : int
        Number of sub-features the feature vector is divided into.
    k1, k2 : int
        Encoding and neighbor-enhancement neighborhood sizes.
    alpha : float
        Exponent of the coordinate-wise power mean used for fusion.
    lam : float
        Weight of the encoding distance when refreshing the working distance.
    n_iter : int
        Number of encoding passes.
    split : {"contiguous", "random"}
    random_state : int
        Seed of the random split.
    block_rows : int or None
        Rows per dense block; by default sized to about 4M entries.
    """

    def __init__(
        self,
        n_parts=11,
        k1=20,
        k2=4,
        alpha=0.5,
        lam=0.2,
        n_iter=2,
        split="contiguous",
        random_state=0,
        block_rows=None,
    ):
        self.n_parts = n_parts
        self.k1 = k1
        self.k2 = k2
        self.alpha = alpha
        self.lam = lam
        self.n_iter = n_iter
        self.split = split
        self.random_state = random_state
        self.block_rows = block_rows

    @property
    def rerank_params(self) -> ReRankParams:
        return ReRankParams(
            L=self.n_parts,
            k1=self.k1,
            k2=self.k2,
            alpha=self.alpha,
            lam=self.lam,
            iterations=self.n_iter,
            split_strategy=self.split,
            seed=self.random_state,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        params = self.rerank_params.validate(X.shape[1], X.shape[0])
        self.n_features_in_ = X.shape[1]
        self.n_gallery_ = X.shape[0]
        self.parts_ = split_features(X, params.L, params.split_strategy, params.seed)
        self.engines_ = []
        finals = []
        for l, cols in enumerate(self.parts_):
            logger.info("encoding gallery part %d/%d (%d dims)", l + 1, len(self.parts_), cols.size)
            engine = _SubFeatureEngine(_FeatureSource(normalize_rows(X[:, cols])), params, self.block_rows)
            finals.append(engine.fit())
            self.engines_.append(engine)
        self.gallery_encoding_ = fuse(finals, params.alpha)
        self.index_ = InvertedIndex(self.gallery_encoding_)
        return self

    def _validate_probes(self, X) -> np.ndarray:
        check_is_fitted(self, "index_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, but DaFReRanker was fitted with {self.n_features_in_}")
        return X

    def encode(self, X) -> sparse.csr_matrix:
        """Fused sparse encodings of probe features, one row per probe."""
        X = self._validate_probes(X)
        blocks = []
        for a, b in _blocks(X.shape[0], self.n_gallery_, self.block_rows):
            parts = []
            for cols, engine in zip(self.parts_, self.engines_):
                d0 = engine.source.probe_rows(normalize_rows(X[a:b, cols]))
                parts.append(engine.encode_probes(d0)[0])
            blocks.append(fuse(parts, self.alpha))
        return sparse.vstack(blocks, format="csr")

    def transform(self, X) -> np.ndarray:
        encoded = self.encode(X)
        return self.index_.distances(encoded)

    def rank(self, X) -> RankingResult:
        return RankingResult.from_distances(self.transform(X))
