"""CMC / mAP scoring under the single-query re-ID protocol, and synthetic data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GroundTruth",
    "Metrics",
    "UnevaluableQueryError",
    "protocol_filter",
    "average_precision",
    "compute_metrics",
    "generate_synthetic",
]

CMC_RANKS = (1, 5, 10, 20)


class UnevaluableQueryError(ValueError):
    """A probe has no cross-camera match in the gallery."""


@dataclass(frozen=True)
class GroundTruth:
    person_ids: np.ndarray
    camera_ids: np.ndarray

    def __post_init__(self):
        pids = np.asarray(self.person_ids, dtype=np.int64)
        cams = np.asarray(self.camera_ids, dtype=np.int64)
        if pids.ndim != 1 or pids.shape != cams.shape:
            raise ValueError(f"person_ids {pids.shape} and camera_ids {cams.shape} must be equal-length 1-D")
        object.__setattr__(self, "person_ids", pids)
        object.__setattr__(self, "camera_ids", cams)

    def __len__(self) -> int:
        return self.person_ids.size

    def __getitem__(self, idx) -> "GroundTruth":
        return GroundTruth(self.person_ids[idx], self.camera_ids[idx])


@dataclass
class Metrics:
    cmc: dict[int, float]
    map_score: float
    per_query_ap: np.ndarray = field(repr=False)

    def as_dict(self) -> dict[str, float]:
        out = {f"rank{k}": float(v) for k, v in self.cmc.items()}
        out["mAP"] = float(self.map_score)
        return out


def protocol_filter(person_id: int, camera_id: int, gallery: GroundTruth) -> tuple[np.ndarray, np.ndarray]:
    """Valid and relevant gallery indices for one probe.

    Entries sharing both identity and camera with the probe are junk and
    dropped from ``valid``. ``relevant`` is the same-identity subset of
    ``valid``; the probe is unevaluable when it is empty.
    """
    same_id = gallery.person_ids == person_id
    junk = same_id & (gallery.camera_ids == camera_id)
    return np.flatnonzero(~junk), np.flatnonzero(same_id & ~junk)


def average_precision(ranked, relevant, skipped=()) -> float:
    """Mean over relevant items of (hits so far / effective rank), skipped items not counted."""
    relevant = set(np.asarray(list(relevant)).tolist())
    skipped = set(np.asarray(list(skipped)).tolist())
    relevant -= skipped
    if not relevant:
        raise UnevaluableQueryError("no relevant gallery entries after skipping")
    hits, rank, total = 0, 0, 0.0
    for g in ranked:
        g = int(g)
        if g in skipped:
            continue
        rank += 1
        if g in relevant:
            hits += 1
            total += hits / rank
            if hits == len(relevant):
                break
    return total / len(relevant)


def compute_metrics(order, probe_truth: GroundTruth, gallery_truth: GroundTruth, cmc_ranks=CMC_RANKS) -> Metrics:
    """CMC and mAP of ranked gallery lists.

    ``order`` is a (n_probes, n_gallery) array of gallery indices, best
    first, or anything exposing it as ``.order``. Unevaluable probes get
    NaN AP and are excluded from every average.
    """
    order = np.asarray(getattr(order, "order", order))
    if order.ndim != 2 or order.shape[0] != len(probe_truth):
        raise ValueError(f"ranking shape {order.shape} does not match {len(probe_truth)} probes")
    ap = np.full(order.shape[0], np.nan)
    first_rank = np.zeros(order.shape[0], dtype=np.int64)
    step = max(1, (1 << 22) // max(order.shape[1], 1))
    for a in range(0, order.shape[0], step):
        ap[a : a + step], first_rank[a : a + step] = _score_block(
            order[a : a + step], probe_truth[a : a + step], gallery_truth
        )
    evaluable = ~np.isnan(ap)
    if not evaluable.any():
        raise ValueError("no evaluable probes: every probe lacks a cross-camera match")
    cmc = {k: float(np.mean(first_rank[evaluable] <= k)) for k in cmc_ranks}
    return Metrics(cmc=cmc, map_score=float(np.mean(ap[evaluable])), per_query_ap=ap)


def _score_block(order: np.ndarray, probes: GroundTruth, gallery: GroundTruth):
    gp = gallery.person_ids[order]
    same_id = gp == probes.person_ids[:, None]
    keep = ~(same_id & (gallery.camera_ids[order] == probes.camera_ids[:, None]))
    hits = same_id & keep
    n_rel = hits.sum(axis=1)
    evaluable = n_rel > 0

    # effective rank of each kept entry; junk entries are removed, not penalised
    eff_rank = np.cumsum(keep, axis=1)
    cum_hits = np.cumsum(hits, axis=1)
    precision_sum = np.where(hits, cum_hits / np.maximum(eff_rank, 1), 0.0).sum(axis=1)
    ap = np.full(order.shape[0], np.nan)
    ap[evaluable] = precision_sum[evaluable] / n_rel[evaluable]
    first = np.argmax(hits, axis=1)
    return ap, eff_rank[np.arange(order.shape[0]), first]


def generate_synthetic(n_ids: int, per_id: int, dim: int, noise: float, n_cameras: int, seed: int = 0):
    """Clustered features with identity and camera labels.

    Each identity is a random point on the unit sphere; its ``per_id``
    samples add isotropic Gaussian noise of scale ``noise`` and cycle through
    the cameras. Sample 0 of every identity is the probe, the rest form the
    gallery (shuffled).

    Returns ``(probes, galleries, probe_truth, gallery_truth)``.
    """
    for name, value, low in (("n_ids", n_ids, 2), ("per_id", per_id, 2), ("n_cameras", n_cameras, 2), ("dim", dim, 1)):
        if int(value) != value or value < low:
            raise ValueError(f"{name}: must be an integer >= {low}, got {value!r}")
    if not np.isfinite(noise) or noise < 0:
        raise ValueError(f"noise: must be >= 0, got {noise!r}")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_ids, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    samples = centers[:, None, :] + noise * rng.standard_normal((n_ids, per_id, dim))
    cams = np.broadcast_to(np.arange(per_id) % n_cameras, (n_ids, per_id))
    pids = np.broadcast_to(np.arange(n_ids)[:, None], (n_ids, per_id))

    probes = samples[:, 0]
    probe_truth = GroundTruth(pids[:, 0].copy(), cams[:, 0].copy())
    perm = rng.permutation(n_ids * (per_id - 1))
    galleries = samples[:, 1:].reshape(-1, dim)[perm]
    gallery_truth = GroundTruth(pids[:, 1:].reshape(-1)[perm], cams[:, 1:].reshape(-1)[perm])
    return probes, galleries, probe_truth, gallery_truth
