"""Fuzzy fusion of sparse encodings and generalized Jaccard distance."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .core import InvalidParameterError

__all__ = ["fuse", "jaccard_distance", "InvertedIndex", "build_inverted_index", "batch_jaccard"]

# upper bound on (query entry, posting) pairs expanded at once
_EXPANSION_BUDGET = 1 << 22


def _as_csr(vectors) -> sparse.csr_matrix:
    m = sparse.csr_matrix(vectors, dtype=np.float64)
    m.sum_duplicates()
    m.sort_indices()
    return m


def fuse(vectors, alpha: float) -> sparse.csr_matrix:
    """Coordinate-wise power mean of ``L`` sparse encodings.

    ``vectors`` is a sequence of equally shaped sparse matrices (one row per
    entity). Coordinates absent from every input stay absent.
    """
    if not np.isfinite(alpha) or alpha <= 0:
        raise InvalidParameterError("alpha", f"must be > 0, got {alpha!r}")
    vectors = [_as_csr(v) for v in vectors]
    if not vectors:
        raise ValueError("fuse needs at least one encoding")
    shape = vectors[0].shape
    if any(v.shape != shape for v in vectors):
        raise ValueError(f"encodings differ in shape: {[v.shape for v in vectors]}")
    if len(vectors) == 1:
        return vectors[0].copy()
    total = vectors[0].power(alpha)
    for v in vectors[1:]:
        total = total + v.power(alpha)
    total = total / len(vectors)
    total.data **= 1.0 / alpha
    return _as_csr(total)


def _dense_1d(v) -> np.ndarray:
    if sparse.issparse(v):
        return np.asarray(v.toarray(), dtype=np.float64).ravel()
    if isinstance(v, dict):
        raise TypeError("pass dict vectors together with a dimension")
    return np.asarray(v, dtype=np.float64).ravel()


def jaccard_distance(a, b) -> float:
    """``1 - sum(min) / sum(max)`` of two nonnegative vectors; 1 if both are all zero.

    Accepts dense 1-D arrays, sparse rows, or ``{index: value}`` dicts.
    """
    if isinstance(a, dict) or isinstance(b, dict):
        a, b = dict(a), dict(b)
        keys = a.keys() | b.keys()
        mins = sum(min(a.get(j, 0.0), b.get(j, 0.0)) for j in keys)
        maxs = sum(max(a.get(j, 0.0), b.get(j, 0.0)) for j in keys)
    else:
        a, b = _dense_1d(a), _dense_1d(b)
        if a.shape != b.shape:
            raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
        mins = np.minimum(a, b).sum()
        maxs = np.maximum(a, b).sum()
    if maxs == 0:
        return 1.0
    return float(1.0 - mins / maxs)


class InvertedIndex:
    """Coordinate postings over a set of sparse nonnegative vectors.

    Postings of coordinate ``j`` live in ``ids[indptr[j]:indptr[j+1]]`` with
    the matching ``values``; ``norms`` holds each entity's coordinate sum.
    """

    def __init__(self, vectors):
        rows = _as_csr(vectors)
        if rows.data.size and rows.data.min() <= 0:
            raise ValueError("indexed vectors must store strictly positive values")
        cols = rows.tocsc()
        cols.sort_indices()
        self.n_entities, self.dim = rows.shape
        self.indptr = cols.indptr.astype(np.int64)
        self.ids = cols.indices.astype(np.int64)
        self.values = cols.data
        self.norms = np.asarray(rows.sum(axis=1), dtype=np.float64).ravel()

    @property
    def n_postings(self) -> int:
        return int(self.ids.size)

    def _check(self, queries) -> sparse.csr_matrix:
        q = _as_csr(queries)
        if q.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: queries have {q.shape[1]} coordinates, index {self.dim}")
        return q

    def _min_sums(self, q: sparse.csr_matrix) -> np.ndarray:
        """Dense (n_queries, n_entities) matrix of sum(min) over shared coordinates."""
        nq, n = q.shape[0], self.n_entities
        counts = self.indptr[q.indices + 1] - self.indptr[q.indices]
        total = int(counts.sum())
        owner = np.repeat(np.repeat(np.arange(nq, dtype=np.int64), np.diff(q.indptr)), counts)
        offsets = np.repeat(self.indptr[q.indices] - (np.cumsum(counts) - counts), counts)
        pos = offsets + np.arange(total, dtype=np.int64)
        mins = np.minimum(np.repeat(q.data, counts), self.values[pos])
        # bincount adds in input order: ascending coordinate for every pair
        flat = np.bincount(owner * n + self.ids[pos], weights=mins, minlength=nq * n)
        return flat.reshape(nq, n)

    def _chunks(self, q: sparse.csr_matrix):
        counts = self.indptr[q.indices + 1] - self.indptr[q.indices]
        owner = np.repeat(np.arange(q.shape[0]), np.diff(q.indptr))
        per_row = np.bincount(owner, weights=counts, minlength=q.shape[0])
        budget = max(_EXPANSION_BUDGET, self.n_entities)
        start, acc = 0, 0
        for i, c in enumerate(per_row):
            if i > start and (acc + c > budget or (i - start) * self.n_entities > budget):
                yield start, i
                start, acc = i, 0
            acc += c
        if start < q.shape[0]:
            yield start, q.shape[0]

    def similarities(self, queries) -> np.ndarray:
        """Generalized Jaccard similarity ``sum(min) / sum(max)`` to every indexed entity."""
        q = self._check(queries)
        out = np.zeros((q.shape[0], self.n_entities))
        qnorms = np.asarray(q.sum(axis=1), dtype=np.float64).ravel()
        for a, b in self._chunks(q):
            smin = self._min_sums(q[a:b])
            smax = qnorms[a:b, None] + self.norms[None, :] - smin
            np.divide(smin, smax, out=out[a:b], where=smin > 0)
        return out

    def distances(self, queries) -> np.ndarray:
        """Generalized Jaccard distance to every indexed entity; untouched entities get 1."""
        return 1.0 - self.similarities(queries)


def build_inverted_index(gallery_vectors) -> InvertedIndex:
    return InvertedIndex(gallery_vectors)


def batch_jaccard(query, index: InvertedIndex) -> np.ndarray:
    """Jaccard distances from one sparse query to every indexed entity."""
    q = sparse.csr_matrix(query, dtype=np.float64)
    if q.shape[0] != 1:
        q = q.reshape(1, -1) if q.shape[1] == 1 else q
    if q.shape[0] != 1:
        raise ValueError(f"expected a single query vector, got shape {q.shape}")
    return index.distances(q)[0]
