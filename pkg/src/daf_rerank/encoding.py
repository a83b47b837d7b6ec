"""Rank-based contextual encoding of neighborhoods into sparse vectors.

Batched routines work on *neighbor lists* rather than full rank tables:
``neighbors[i]`` holds the gallery indices ranked 1..k by entity ``i`` and
``pair_ranks[i, a, b]`` is the rank of ``neighbors[i, b]`` in the list of
gallery ``neighbors[i, a]``. That is all the similarity needs, and it can be
produced without ever materialising an N x N rank table.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

__all__ = [
    "contextual_similarity",
    "neighbors_from_ranks",
    "pair_ranks_from_table",
    "encode_neighbors",
    "encode_vector",
    "encode_all",
    "enhance",
    "neighbor_enhance",
]


def contextual_similarity(entity_ranks, gallery_ranks, j: int, k1: int) -> float:
    """Similarity of an entity to gallery ``j`` from rank relations alone.

    ``entity_ranks[g]`` is the entity's rank of gallery ``g`` and
    ``gallery_ranks[m, g]`` the rank of ``g`` in gallery ``m``'s list.
    """
    entity_ranks = np.asarray(entity_ranks)
    value = 1.0 / entity_ranks[j]
    for m in np.flatnonzero(entity_ranks <= k1):
        value += 1.0 / (gallery_ranks[m, j] * (1.0 + entity_ranks[m]))
    return float(value)


def neighbors_from_ranks(ranks: np.ndarray, k: int) -> np.ndarray:
    """Gallery indices ranked 1..k for each row of a rank table."""
    ranks = np.atleast_2d(ranks)
    return np.argsort(ranks, axis=1, kind="stable")[:, :k]


def pair_ranks_from_table(neighbors: np.ndarray, gallery_ranks: np.ndarray) -> np.ndarray:
    return gallery_ranks[neighbors[:, :, None], neighbors[:, None, :]]


def encode_neighbors(neighbors: np.ndarray, pair_ranks: np.ndarray, n_gallery: int) -> sparse.csr_matrix:
    """Sparse encodings, one row per entity, supported on its k1 nearest galleries."""
    n, k = neighbors.shape
    own = 1.0 / np.arange(1, k + 1, dtype=np.float64)
    # entity's rank of neighbor a is a + 1
    spread = (np.arange(k, dtype=np.float64) + 2.0)[None, :, None]
    values = own[None, :] + (1.0 / (pair_ranks * spread)).sum(axis=1)
    out = sparse.csr_matrix(
        (values.ravel(), neighbors.ravel(), np.arange(0, n * k + 1, k)),
        shape=(n, n_gallery),
    )
    out.sort_indices()
    return out


def encode_all(ranks: np.ndarray, gallery_ranks: np.ndarray, k1: int) -> sparse.csr_matrix:
    """Encode every row of a rank table against full gallery rank tables."""
    nb = neighbors_from_ranks(ranks, k1)
    return encode_neighbors(nb, pair_ranks_from_table(nb, gallery_ranks), gallery_ranks.shape[0])


def encode_vector(entity_ranks, gallery_ranks: np.ndarray, k1: int) -> sparse.csr_matrix:
    return encode_all(np.asarray(entity_ranks)[None, :], gallery_ranks, k1)


def enhance(vectors, neighbors: np.ndarray, gallery_vectors) -> sparse.csr_matrix:
    """Average each row with the gallery encodings of its listed neighbors.

    ``neighbors`` has shape (n, k2); ``gallery_vectors`` must be the
    encodings *before* any enhancement. With ``k2 == 0`` rows pass through.
    """
    vectors = sparse.csr_matrix(vectors, dtype=np.float64)
    n, k2 = neighbors.shape
    if k2 == 0:
        return vectors.copy()
    pick = sparse.csr_matrix(
        (np.ones(n * k2), neighbors.ravel(), np.arange(0, n * k2 + 1, k2)),
        shape=(n, gallery_vectors.shape[0]),
    )
    out = (vectors + pick @ gallery_vectors) / (1.0 + k2)
    out = sparse.csr_matrix(out)
    out.sort_indices()
    return out


def neighbor_enhance(vector, entity_ranks, gallery_vectors, k2: int) -> sparse.csr_matrix:
    nb = neighbors_from_ranks(np.asarray(entity_ranks)[None, :], k2)
    return enhance(vector, nb, gallery_vectors)
