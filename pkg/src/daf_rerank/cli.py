"""Command-line driver: load features, re-rank, score, write results."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import ReRankParams
from .evaluation import GroundTruth, compute_metrics, generate_synthetic
from .io import LoadError, load_features, load_labels
from .pipeline import DaFReRanker, initial_ranking

logger = logging.getLogger(__name__)

__all__ = ["RunConfig", "ConfigError", "run", "main"]


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass
class RunConfig:
    out: str | None = None
    probe_features: str | None = None
    gallery_features: str | None = None
    labels: str | None = None
    format: str = "binary"
    L: int = 11
    k1: int = 20
    k2: int = 4
    alpha: float = 0.5
    lam: float = 0.2
    iterations: int = 2
    split: str = "contiguous"
    seed: int = 0
    topk: int = 100
    synthetic: bool = False
    ids: int = 50
    per_id: int = 6
    dim: int = 64
    noise: float = 0.6
    cameras: int = 4

    @property
    def params(self) -> ReRankParams:
        return ReRankParams(
            L=self.L,
            k1=self.k1,
            k2=self.k2,
            alpha=self.alpha,
            lam=self.lam,
            iterations=self.iterations,
            split_strategy=self.split,
            seed=self.seed,
        )

    def violations(self) -> list[str]:
        errors = []
        if not self.out:
            errors.append("out: an output directory is required")
        if self.format not in ("binary", "csv"):
            errors.append(f"format: must be 'binary' or 'csv', got {self.format!r}")
        if not isinstance(self.topk, int) or self.topk < 1:
            errors.append(f"topk: must be a positive integer, got {self.topk!r}")
        if self.synthetic:
            for name, low in (("ids", 2), ("per_id", 2), ("dim", 1), ("cameras", 2)):
                if getattr(self, name) < low:
                    errors.append(f"{name}: must be >= {low}, got {getattr(self, name)!r}")
            if not self.noise >= 0:
                errors.append(f"noise: must be >= 0, got {self.noise!r}")
        else:
            for name in ("probe_features", "gallery_features"):
                path = getattr(self, name)
                if not path:
                    errors.append(f"{name}: required unless --synthetic is given")
                elif not Path(path).is_file():
                    errors.append(f"{name}: no such file {path!r}")
            if self.labels and not Path(self.labels).is_file():
                errors.append(f"labels: no such file {self.labels!r}")
        errors.extend(self.params.violations())
        return errors

    def validate(self) -> "RunConfig":
        errors = self.violations()
        if errors:
            raise ConfigError(errors)
        return self


def _load(config: RunConfig):
    if config.synthetic:
        probes, galleries, pt, gt = generate_synthetic(
            config.ids, config.per_id, config.dim, config.noise, config.cameras, config.seed
        )
        return probes, galleries, pt, gt
    probes = load_features(config.probe_features, config.format)
    galleries = load_features(config.gallery_features, config.format)
    if probes.shape[1] != galleries.shape[1]:
        raise LoadError(
            f"probe features have {probes.shape[1]} dimensions but gallery features have {galleries.shape[1]}"
        )
    if not config.labels:
        return probes, galleries, None, None
    truth = load_labels(config.labels)
    n_p, n_g = probes.shape[0], galleries.shape[0]
    if len(truth) != n_p + n_g:
        raise LoadError(
            f"{config.labels}: {len(truth)} label rows, expected {n_p} probes followed by {n_g} galleries"
        )
    return probes, galleries, truth[:n_p], truth[n_p:]


def _format_rankings(order: np.ndarray, topk: int) -> str:
    lines = [f"{p}\t{' '.join(map(str, row[:topk]))}" for p, row in enumerate(order)]
    return "\n".join(lines) + "\n"


def _publish(staging: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for item in sorted(staging.iterdir()):
        os.replace(item, out / item.name)


def run(config: RunConfig) -> int:
    """Execute one re-ranking run; returns a process exit status."""
    try:
        config.validate()
        probes, galleries, probe_truth, gallery_truth = _load(config)
        params = config.params.validate(probes.shape[1], galleries.shape[0])
    except ConfigError as exc:
        for v in exc.violations:
            print(f"error: {v}", file=sys.stderr)
        return 2
    except (LoadError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.staging-", dir=out.parent))
    try:
        logger.info("fitting %d galleries (%d dims)", galleries.shape[0], galleries.shape[1])
        model = DaFReRanker(
            n_parts=params.L,
            k1=params.k1,
            k2=params.k2,
            alpha=params.alpha,
            lam=params.lam,
            n_iter=params.iterations,
            split=params.split_strategy,
            random_state=params.seed,
        ).fit(galleries)
        daf = model.rank(probes)
        (staging / "rankings.tsv").write_text(_format_rankings(daf.order, config.topk))
        if probe_truth is not None:
            metrics = {
                "baseline": compute_metrics(initial_ranking(probes, galleries), probe_truth, gallery_truth).as_dict(),
                "daf": compute_metrics(daf, probe_truth, gallery_truth).as_dict(),
            }
            (staging / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
        resolved = asdict(config) | {"n_probes": int(probes.shape[0]), "n_gallery": int(galleries.shape[0])}
        (staging / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
        _publish(staging, out)
    except Exception as exc:  # no partial outputs on any failure
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return 0


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    ap = argparse.ArgumentParser(
        prog="daf-rerank",
        description="Divide-and-Fuse re-ranking of probe features against a gallery.",
    )
    ap.add_argument("--probe-features", metavar="PATH")
    ap.add_argument("--gallery-features", metavar="PATH")
    ap.add_argument(
        "--labels",
        metavar="PATH",
        help="index,person_id,camera_id CSV: probe rows first, then gallery rows",
    )
    ap.add_argument("--format", choices=["binary", "csv"], default=d.format)
    ap.add_argument("--out", metavar="DIR", required=True)
    ap.add_argument("--L", type=int, default=d.L, help="number of sub-features")
    ap.add_argument("--k1", type=int, default=d.k1)
    ap.add_argument("--k2", type=int, default=d.k2)
    ap.add_argument("--alpha", type=float, default=d.alpha)
    ap.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    ap.add_argument("--iterations", type=int, default=d.iterations)
    ap.add_argument("--split", choices=["contiguous", "random"], default=d.split)
    ap.add_argument("--seed", type=int, default=d.seed)
    ap.add_argument("--topk", type=int, default=d.topk)
    syn = ap.add_argument_group("synthetic data")
    syn.add_argument("--synthetic", action="store_true", help="use the built-in clustered generator")
    syn.add_argument("--ids", type=int, default=d.ids)
    syn.add_argument("--per-id", type=int, default=d.per_id)
    syn.add_argument("--dim", type=int, default=d.dim)
    syn.add_argument("--noise", type=float, default=d.noise)
    syn.add_argument("--cameras", type=int, default=d.cameras)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    logging.basicConfig(
        level=logging.INFO if args.pop("verbose") else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    return run(RunConfig(**args))


if __name__ == "__main__":
    sys.exit(main())
