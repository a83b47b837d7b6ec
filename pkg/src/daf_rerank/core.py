"""Parameters, feature division, initial distances and rank tables."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

__all__ = [
    "InvalidParameterError",
    "ReRankParams",
    "DistanceField",
    "RankTable",
    "check_features",
    "normalize_rows",
    "halved_distances",
    "split_features",
    "compute_initial_distances",
    "build_rank_tables",
    "topk_neighbors",
    "lookup_ranks",
]

SPLIT_STRATEGIES = ("contiguous", "random")
METRICS = ("euclidean_normalized",)

# squared distances below this are recomputed from explicit differences
_CANCELLATION_GUARD = 1e-6


class InvalidParameterError(ValueError):
    """Raised when a re-ranking parameter violates its constraints."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class ReRankParams:
    """Hyper-parameters of Divide-and-Fuse re-ranking.

    Defaults are the published Market-1501 configuration.
    """

    L: int = 11
    k1: int = 20
    k2: int = 4
    alpha: float = 0.5
    lam: float = 0.2
    iterations: int = 2
    split_strategy: str = "contiguous"
    seed: int = 0
    metric: str = "euclidean_normalized"

    def violations(self, n_features: int | None = None, n_gallery: int | None = None) -> list[str]:
        """Return one message per violated constraint, each prefixed by the field name."""
        errors = []
        for f in ("L", "k1", "k2", "iterations"):
            value = getattr(self, f)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                errors.append(f"{f}: must be a positive integer, got {value!r}")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            errors.append(f"alpha: must be > 0, got {self.alpha!r}")
        if not (0 <= self.lam < 1):
            errors.append(f"lam: must lie in [0, 1), got {self.lam!r}")
        if self.split_strategy not in SPLIT_STRATEGIES:
            errors.append(f"split_strategy: must be one of {SPLIT_STRATEGIES}, got {self.split_strategy!r}")
        if self.metric not in METRICS:
            errors.append(f"metric: must be one of {METRICS}, got {self.metric!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            errors.append(f"seed: must be an unsigned 64-bit integer, got {self.seed!r}")
        if errors:
            return errors
        if self.k2 > self.k1:
            errors.append(f"k2: must not exceed k1={self.k1}, got {self.k2}")
        if n_features is not None and self.L > n_features:
            errors.append(f"L: must not exceed the feature dimension {n_features}, got {self.L}")
        if n_gallery is not None and self.k1 >= n_gallery:
            errors.append(f"k1: must be smaller than the gallery size {n_gallery}, got {self.k1}")
        return errors

    def validate(self, n_features: int | None = None, n_gallery: int | None = None) -> "ReRankParams":
        errors = self.violations(n_features, n_gallery)
        if errors:
            field, _, message = errors[0].partition(": ")
            if len(errors) > 1:
                message += "; " + "; ".join(errors[1:])
            raise InvalidParameterError(field, message)
        return self

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class DistanceField:
    """Query-gallery and gallery-gallery distances of one sub-feature."""

    query_gallery: np.ndarray
    gallery_gallery: np.ndarray

    def __post_init__(self):
        qg, gg = self.query_gallery, self.gallery_gallery
        if qg.ndim != 2 or gg.ndim != 2 or gg.shape[0] != gg.shape[1] or qg.shape[1] != gg.shape[0]:
            raise ValueError(
                f"inconsistent distance shapes: query_gallery {qg.shape}, gallery_gallery {gg.shape}"
            )

    @property
    def n_probes(self) -> int:
        return self.query_gallery.shape[0]

    @property
    def n_gallery(self) -> int:
        return self.gallery_gallery.shape[0]


@dataclass(frozen=True)
class RankTable:
    """1-based ranks of every gallery item in each entity's ascending-distance list.

    ``probe_ranks[p, j]`` is R_p(g_j) and ``gallery_ranks[i, j]`` is R_{g_i}(g_j).
    """

    probe_ranks: np.ndarray
    gallery_ranks: np.ndarray


def check_features(X, name: str = "features") -> np.ndarray:
    """Validate a feature matrix and return it as a float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"{name}: empty feature matrix of shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name}: contains non-finite values")
    return X


def normalize_rows(X: np.ndarray) -> np.ndarray:
    """Scale rows to unit Euclidean norm; all-zero rows stay zero."""
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X, dtype=np.float64), where=norms > 0)


def halved_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Half the Euclidean distance between rows of two row-normalised matrices.

    Uses the Gram expansion, then recomputes near-zero entries from explicit
    differences so identical rows come out at exactly 0.
    """
    sq = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :]
    sq -= 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    rows, cols = np.nonzero(sq < _CANCELLATION_GUARD)
    if rows.size:
        diff = A[rows] - B[cols]
        sq[rows, cols] = np.einsum("ij,ij->i", diff, diff)
    out = np.sqrt(sq, out=sq)
    out *= 0.5
    return np.minimum(out, 1.0, out=out)


def split_features(features, L: int, strategy: str = "contiguous", seed: int = 0) -> list[np.ndarray]:
    """Partition the feature columns into ``L`` nearly equal index sets.

    The first ``M mod L`` parts get ``ceil(M / L)`` columns. With the random
    strategy the columns are permuted by ``seed`` before slicing.

    ``features`` may be a feature matrix or the dimension ``M`` itself.
    """
    M = int(features) if np.isscalar(features) else np.shape(features)[1]
    if isinstance(L, bool) or not isinstance(L, (int, np.integer)) or not 1 <= L <= M:
        raise InvalidParameterError("L", f"must satisfy 1 <= L <= {M}, got {L!r}")
    if strategy == "contiguous":
        columns = np.arange(M)
    elif strategy == "random":
        columns = np.random.default_rng(seed).permutation(M)
    else:
        raise InvalidParameterError("split_strategy", f"unknown strategy {strategy!r}")
    size, extra = divmod(M, L)
    bounds = np.cumsum([0] + [size + 1] * extra + [size] * (L - extra))
    return [columns[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def compute_initial_distances(probe_sub, gallery_sub) -> DistanceField:
    probe_sub = check_features(probe_sub, "probe features")
    gallery_sub = check_features(gallery_sub, "gallery features")
    if probe_sub.shape[1] != gallery_sub.shape[1]:
        raise ValueError(
            f"dimension mismatch: probes have {probe_sub.shape[1]} columns, galleries {gallery_sub.shape[1]}"
        )
    P, G = normalize_rows(probe_sub), normalize_rows(gallery_sub)
    gg = halved_distances(G, G)
    gg = (gg + gg.T) / 2.0
    np.fill_diagonal(gg, 0.0)
    return DistanceField(halved_distances(P, G), gg)


def _self_first(D: np.ndarray, self_columns) -> np.ndarray:
    """Copy of gallery rows with each row's own column pushed ahead of every tie."""
    D = np.array(D, dtype=np.float64, copy=True)
    D[np.arange(D.shape[0]), self_columns] = -1.0
    return D


def _stable_ranks(D: np.ndarray) -> np.ndarray:
    order = np.argsort(D, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(1, D.shape[1] + 1)[None, :], axis=1)
    return ranks


def build_rank_tables(dist: DistanceField) -> RankTable:
    """Rank galleries by ascending distance, ties by gallery index.

    A gallery item always ranks itself first, even against exact duplicates.
    """
    n = dist.n_gallery
    return RankTable(
        probe_ranks=_stable_ranks(dist.query_gallery),
        gallery_ranks=_stable_ranks(_self_first(dist.gallery_gallery, np.arange(n))),
    )


def _row_starts(rows: np.ndarray, n_rows: int) -> np.ndarray:
    return np.searchsorted(rows, np.arange(n_rows))


def topk_neighbors(D: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the ``k`` smallest entries per row, ordered by (value, index).

    Equivalent to the first ``k`` columns of a stable argsort, in linear time
    per row plus a sort of the boundary candidates.
    """
    n = D.shape[0]
    kth = np.partition(D, k - 1, axis=1)[:, k - 1]
    rows, cols = np.nonzero(D <= kth[:, None])
    order = np.lexsort((cols, D[rows, cols], rows))
    rows, cols = rows[order], cols[order]
    pos = np.arange(rows.size) - _row_starts(rows, n)[rows]
    return cols[pos < k].reshape(n, k)


def _count_below(S: np.ndarray, rows: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Vectorised ``np.searchsorted(S[r], v, side="left")`` for many (row, value) pairs."""
    n_cols = S.shape[1]
    flat = S.ravel()
    base = rows * n_cols
    lo = np.zeros(rows.size, dtype=np.int64)
    hi = np.full(rows.size, n_cols, dtype=np.int64)
    for _ in range(n_cols.bit_length()):
        mid = (lo + hi) >> 1
        below = flat[base + np.minimum(mid, n_cols - 1)] < values
        open_ = lo < hi
        lo = np.where(open_ & below, mid + 1, lo)
        hi = np.where(open_ & ~below, mid, hi)
    return lo


def lookup_ranks(D: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """1-based rank of ``D[rows[i], cols[i]]`` within its row, ties by column index.

    Each rank is the count of strictly smaller entries plus the count of
    equal entries in lower columns, found by binary search in sorted rows.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    n_cols = D.shape[1]
    values = D[rows, cols]
    S = np.sort(D, axis=1)
    below = _count_below(S, rows, values)
    # the queried entry itself sits at S[row, below]; a tie shows up right after it
    nxt = np.minimum(below + 1, n_cols - 1)
    tied = np.flatnonzero((below + 1 < n_cols) & (S[rows, nxt] == values))
    ranks = below + 1
    step = max(1, (1 << 22) // max(n_cols, 1))
    columns = np.arange(n_cols)
    for a in range(0, tied.size, step):
        t = tied[a : a + step]
        equal_before = (D[rows[t]] == values[t, None]) & (columns[None, :] < cols[t, None])
        ranks[t] += np.count_nonzero(equal_before, axis=1)
    return ranks
