"""Seven-K windows of scan statistics and their class labels."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, TooFewRecords
from .numerics import make_rng

WINDOW = 7
N_FEATURES = 3 * WINDOW
N_CLASSES = 7
# identifies the feature layout; stored in model files and checked at inference
FEATURE_NORMALIZATION = "window-minmax-aic/v1"


@dataclass
class WindowSample:
    origin_k: int
    features: np.ndarray
    label: int | None = None


@dataclass
class WindowSet:
    """Stacked samples: ``features`` is ``(N, 21)``; ``groups`` holds the source-matrix index."""

    origins: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray

    def __len__(self):
        return len(self.labels)

    def subset(self, mask) -> "WindowSet":
        return WindowSet(self.origins[mask], self.features[mask], self.labels[mask], self.groups[mask])


def window_label(k_true: int, k_origin: int) -> int:
    """Class of a window starting at ``k_origin`` for a matrix with ``k_true`` features."""
    diff = k_true - k_origin
    if diff <= 0:
        return 0
    return min(diff, WINDOW - 1)


def _normalize_aic(values):
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def extract_windows(records) -> list[WindowSample]:
    """One sample per window origin; AIC is min-max scaled inside each window.

    Features are position-major in ascending K: ``(aic, min_sil, avg_sil)``
    for each of the 7 positions.
    """
    records = sorted(records, key=lambda r: r.k)
    if len(records) < WINDOW:
        raise TooFewRecords(f"need at least {WINDOW} scan records, got {len(records)}")
    ks = np.array([r.k for r in records])
    if np.any(np.diff(ks) != 1):
        raise DataError("scan records must cover consecutive K values")
    stats = np.array([[r.aic, r.min_silhouette, r.avg_silhouette] for r in records], dtype=np.float64)
    out = []
    for start in range(len(records) - WINDOW + 1):
        block = stats[start:start + WINDOW].copy()
        block[:, 0] = _normalize_aic(block[:, 0])
        out.append(WindowSample(origin_k=int(ks[start]), features=block.reshape(-1)))
    return out


def build_training_set(labeled_scans) -> WindowSet:
    """Label and stack the windows of ``(records, k_true)`` pairs in the given order."""
    origins, feats, labels, groups = [], [], [], []
    for idx, (records, k_true) in enumerate(labeled_scans):
        try:
            samples = extract_windows(records)
        except DataError as exc:
            raise type(exc)(f"scan {idx}: {exc}") from exc
        for s in samples:
            origins.append(s.origin_k)
            feats.append(s.features)
            labels.append(window_label(k_true, s.origin_k))
            groups.append(idx)
    if not feats:
        return WindowSet(np.zeros(0, int), np.zeros((0, N_FEATURES)), np.zeros(0, int), np.zeros(0, int))
    return WindowSet(np.array(origins), np.vstack(feats), np.array(labels), np.array(groups))


def split_by_group(ws: WindowSet, holdout: float = 0.1, seed: int = 0):
    """Train/validation split that keeps all windows of a matrix on one side."""
    ids = np.unique(ws.groups)
    rng = make_rng(seed, 7)
    n_val = max(1, int(round(holdout * ids.size))) if ids.size > 1 else 0
    val_ids = rng.permutation(ids)[:n_val]
    val = np.isin(ws.groups, val_ids)
    return ws.subset(~val), ws.subset(val)


def write_training_csv(path, ws: WindowSet) -> None:
    header = ["origin_k"] + [f"{stat}_{p}" for p in range(WINDOW) for stat in ("aic", "min_sil", "avg_sil")] + ["label"]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for o, f, lab in zip(ws.origins, ws.features, ws.labels):
            writer.writerow([int(o)] + [repr(float(v)) for v in f] + [int(lab)])


def read_training_csv(path) -> WindowSet:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != N_FEATURES + 2:
            raise DataError(f"{path}: expected a header with {N_FEATURES + 2} columns")
        rows = list(reader)
    try:
        origins = np.array([int(r[0]) for r in rows], dtype=int)
        feats = np.array([[float(v) for v in r[1:-1]] for r in rows], dtype=np.float64).reshape(-1, N_FEATURES)
        labels = np.array([int(r[-1]) for r in rows], dtype=int)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed training row ({exc})") from None
    return WindowSet(origins, feats, labels, np.zeros(len(labels), dtype=int))
