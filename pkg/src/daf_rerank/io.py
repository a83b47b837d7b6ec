"""Feature and label file formats.

Binary features: ``b"DAF1"``, little-endian uint32 count N, uint32 dim M,
then N * M little-endian float32 values, row-major.
CSV features: one row per entity, comma-separated decimals.
Labels: CSV with header ``index,person_id,camera_id``, indices 0..n-1 in order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .evaluation import GroundTruth

__all__ = ["LoadError", "load_features", "save_features", "load_labels", "save_labels"]

MAGIC = b"DAF1"
_HEADER = struct.Struct("<4sII")
LABEL_HEADER = ["index", "person_id", "camera_id"]


class LoadError(ValueError):
    """Malformed feature or label file."""


def load_features(path, format: str = "binary") -> np.ndarray:
    path = Path(path)
    if format == "binary":
        return _load_binary(path)
    if format == "csv":
        return _load_csv(path)
    raise ValueError(f"unknown feature format {format!r}; expected 'binary' or 'csv'")


def _load_binary(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise LoadError(f"{path}: truncated header at byte offset {len(blob)} (need {_HEADER.size} bytes)")
    magic, n, m = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise LoadError(f"{path}: bad magic {magic!r} at byte offset 0, expected {MAGIC!r}")
    if n == 0 or m == 0:
        raise LoadError(f"{path}: empty matrix declared ({n} x {m}) at byte offset 4")
    expected = _HEADER.size + 4 * n * m
    if len(blob) < expected:
        raise LoadError(
            f"{path}: truncated payload at byte offset {len(blob)}; header declares {n} x {m} "
            f"floats ending at byte offset {expected}"
        )
    if len(blob) > expected:
        raise LoadError(f"{path}: {len(blob) - expected} trailing bytes after byte offset {expected}")
    values = np.frombuffer(blob, dtype="<f4", count=n * m, offset=_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise LoadError(f"{path}: non-finite value at byte offset {_HEADER.size + 4 * int(bad[0])}")
    return values.reshape(n, m).astype(np.float64)


def _load_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with path.open(newline="") as fh:
        for lineno, line in enumerate(csv.reader(fh), start=1):
            if not line or all(not cell.strip() for cell in line):
                continue
            try:
                row = [float(cell) for cell in line]
            except ValueError as exc:
                raise LoadError(f"{path}: line {lineno}: {exc}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise LoadError(f"{path}: line {lineno}: expected {width} columns, got {len(row)}")
            if not all(np.isfinite(row)):
                raise LoadError(f"{path}: line {lineno}: non-finite value")
            rows.append(row)
    if not rows:
        raise LoadError(f"{path}: no feature rows")
    return np.asarray(rows, dtype=np.float64)


def save_features(path, X, format: str = "binary") -> None:
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    path = Path(path)
    if format == "binary":
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(MAGIC, X.shape[0], X.shape[1]))
            fh.write(np.ascontiguousarray(X, dtype="<f4").tobytes())
    elif format == "csv":
        np.savetxt(path, X, delimiter=",", fmt="%.9g")
    else:
        raise ValueError(f"unknown feature format {format!r}; expected 'binary' or 'csv'")


def load_labels(path) -> GroundTruth:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != LABEL_HEADER:
            raise LoadError(f"{path}: line 1: expected header {','.join(LABEL_HEADER)!r}, got {header!r}")
        pids, cams = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise LoadError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            try:
                index, pid, cam = (int(cell) for cell in row)
            except ValueError:
                raise LoadError(f"{path}: line {lineno}: non-integer field in {row!r}") from None
            if index != len(pids):
                kind = "duplicate" if index < len(pids) else "gap before"
                raise LoadError(f"{path}: line {lineno}: {kind} index {index}, expected {len(pids)}")
            pids.append(pid)
            cams.append(cam)
    if not pids:
        raise LoadError(f"{path}: no label rows")
    return GroundTruth(np.array(pids), np.array(cams))


def save_labels(path, truth: GroundTruth) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABEL_HEADER)
        for i, (pid, cam) in enumerate(zip(truth.person_ids, truth.camera_ids)):
            writer.writerow([i, int(pid), int(cam)])
