"""NMFk: ensemble NMF with balanced cosine clustering of the W columns.

For every K in a range the input is perturbed into an ensemble, every
member is factorized, the pooled W columns are clustered into K clusters
holding exactly one column per member, and the cluster silhouettes plus an
AIC computed from the mean reconstruction error summarize that K.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError, DegenerateColumns, NmfkError, NonPositiveError, ScanError
from .nmf import NmfConfig, factorize_stack
from .numerics import as_nonneg_matrix, make_rng

log = logging.getLogger(__name__)

__all__ = [
    "ScanConfig",
    "KScanRecord",
    "ClusterAssignment",
    "resample",
    "balanced_cluster",
    "silhouette_samples",
    "silhouettes",
    "aic",
    "scan_k",
    "scan",
    "write_scan_jsonl",
    "read_scan_jsonl",
]

REL_ERR_FLOOR = 1e-15

# stream tags for make_rng(seed, tag, k, member)
_RESAMPLE_STREAM = 1
_INIT_STREAM = 2


@dataclass(frozen=True)
class ScanConfig:
    k_min: int = 1
    k_max: int = 16
    ensemble_size: int = 32
    resample_noise: float = 0.03
    nmf: NmfConfig = field(default_factory=NmfConfig)
    cluster_max_iter: int = 100
    seed: int = 0
    threads: int = 1
    shared_init: bool = True

    def __post_init__(self):
        if self.k_min < 1 or self.k_min > self.k_max:
            raise DataError(f"need 1 <= k_min <= k_max, got k_min={self.k_min}, k_max={self.k_max}")
        if self.ensemble_size < 2:
            raise DataError("ensemble_size must be >= 2")
        if not 0 <= self.resample_noise < 1:
            raise DataError("resample_noise must lie in [0, 1)")
        if self.cluster_max_iter < 1:
            raise DataError("cluster_max_iter must be >= 1")


@dataclass(frozen=True)
class KScanRecord:
    k: int
    aic: float
    min_silhouette: float
    avg_silhouette: float
    mean_relative_error: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ClusterAssignment:
    """Balanced clustering of ``r`` groups of ``K`` columns.

    ``labels[i, c]`` is the cluster of column ``c`` of member ``i``; each row
    of ``labels`` is a permutation of ``0..K-1``. ``points`` holds the
    unit-normalized columns, shape ``(r, n, K)``.
    """

    labels: np.ndarray
    centroids: np.ndarray
    points: np.ndarray
    iterations: int

    @property
    def k(self) -> int:
        return self.labels.shape[1]

    def flat(self):
        """Points as rows ``(r*K, n)`` with matching flat labels."""
        r, n, k = self.points.shape
        return self.points.transpose(0, 2, 1).reshape(r * k, n), self.labels.reshape(-1)


def resample(x, noise: float, seed) -> np.ndarray:
    """Elementwise ``X * U`` with ``U ~ uniform[1 - noise, 1 + noise]``."""
    if not 0 <= noise < 1:
        raise DataError("resample noise must lie in [0, 1)")
    x = np.asarray(x, dtype=np.float64)
    if noise == 0:
        return x.copy()
    return x * make_rng(seed).uniform(1.0 - noise, 1.0 + noise, size=x.shape)


def _unit_columns(groups):
    norms = np.linalg.norm(groups, axis=1, keepdims=True)
    if np.any(norms == 0):
        i, _, c = np.argwhere(norms == 0)[0]
        raise DegenerateColumns(f"ensemble member {i} has an all-zero column {c}")
    return groups / norms


def balanced_cluster(columns, max_iter: int = 100) -> ClusterAssignment:
    """Cluster ``r`` groups of ``K`` vectors into ``K`` clusters of size ``r``.

    ``columns`` has shape ``(r, n, K)``: member ``i`` contributes the ``K``
    columns of ``columns[i]``. Centroids start at member 0's columns; each
    round matches every member's columns one-to-one to the centroids at
    minimum total cosine distance, then resets centroids to the normalized
    cluster means. Stops when the assignment repeats.
    """
    pts = _unit_columns(np.asarray(columns, dtype=np.float64))
    r, _, k = pts.shape
    centroids = pts[0].copy()
    labels = np.tile(np.arange(k), (r, 1))
    it = 0
    for it in range(1, max_iter + 1):
        new = np.empty_like(labels)
        for i in range(r):
            cost = 1.0 - pts[i].T @ centroids
            rows, cols = linear_sum_assignment(cost)
            new[i, rows] = cols
        aligned = np.empty_like(pts)
        for i in range(r):
            aligned[i][:, new[i]] = pts[i]
        mean = aligned.sum(axis=0)
        centroids = mean / np.linalg.norm(mean, axis=0, keepdims=True)
        changed = it == 1 or not np.array_equal(new, labels)
        labels = new
        if not changed:
            break
    return ClusterAssignment(labels=labels, centroids=centroids, points=pts, iterations=it)


def silhouette_samples(points, labels) -> np.ndarray:
    """Per-point silhouette with cosine distance.

    ``points`` is ``(N, n)``; every cluster needs at least two members. A
    point whose intra- and nearest inter-cluster distances are both zero gets 0.
    """
    p = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    dist = np.clip(1.0 - p @ p.T, 0.0, 2.0)
    np.fill_diagonal(dist, 0.0)
    clusters, inverse = np.unique(labels, return_inverse=True)
    if clusters.size < 2:
        raise DataError("silhouette needs at least two clusters")
    onehot = np.zeros((p.shape[0], clusters.size))
    onehot[np.arange(p.shape[0]), inverse] = 1.0
    counts = onehot.sum(axis=0)
    if np.any(counts < 2):
        raise DataError("every cluster needs at least two points")
    sums = dist @ onehot
    own = np.arange(p.shape[0]), inverse
    a = sums[own] / (counts[inverse] - 1)
    means = sums / counts
    means[own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    return s


def silhouettes(assignment: ClusterAssignment) -> tuple[float, float]:
    """(minimum, mean) point silhouette; both are 1 when K = 1."""
    if assignment.k == 1:
        return 1.0, 1.0
    pts, labels = assignment.flat()
    s = silhouette_samples(pts, labels)
    return float(s.min()), float(s.mean())


def aic(k: int, n_elements: int, rel_err: float) -> float:
    """``2K + N ln(O / N)`` with ``O`` the relative reconstruction error."""
    if n_elements < 1:
        raise DataError("n_elements must be >= 1")
    if not rel_err > 0:
        raise NonPositiveError(f"AIC needs a positive relative error, got {rel_err!r}")
    return 2.0 * k + n_elements * np.log(rel_err / n_elements)


def scan_k(x, k: int, cfg: ScanConfig) -> KScanRecord:
    """Statistics for a single K."""
    r = cfg.ensemble_size
    xs = np.stack([resample(x, cfg.resample_noise, make_rng(cfg.seed, _RESAMPLE_STREAM, k, i)) for i in range(r)])
    if cfg.shared_init:
        rngs = [make_rng(cfg.seed, _INIT_STREAM, k) for _ in range(r)]
    else:
        rngs = [make_rng(cfg.seed, _INIT_STREAM, k, i) for i in range(r)]
    pairs = factorize_stack(xs, k, cfg.nmf, rngs)
    w = np.stack([fp.w for fp in pairs])
    assignment = balanced_cluster(w, cfg.cluster_max_iter)
    smin, savg = silhouettes(assignment)
    mean_err = float(np.mean([fp.relative_error for fp in pairs]))
    return KScanRecord(
        k=k,
        aic=float(aic(k, x.size, max(mean_err, REL_ERR_FLOOR))),
        min_silhouette=smin,
        avg_silhouette=savg,
        mean_relative_error=mean_err,
    )


def _scan_k_tagged(args):
    x, k, cfg = args
    try:
        return scan_k(x, k, cfg)
    except NmfkError as exc:
        raise ScanError(k, exc) from exc


def scan(x, cfg: ScanConfig, progress=None) -> list[KScanRecord]:
    """Run NMFk for every K in ``[cfg.k_min, cfg.k_max]``, ascending.

    With ``cfg.threads > 1`` the K values are spread over worker processes;
    every K draws from its own seeded streams so the output does not depend
    on scheduling. ``progress`` is called with each finished record.
    """
    x = as_nonneg_matrix(x, "X")
    if cfg.k_max > min(x.shape):
        raise DataError(f"k_max={cfg.k_max} exceeds min(n, m)={min(x.shape)}")
    if not np.any(x):
        raise DataError("cannot scan an all-zero matrix")
    ks = range(cfg.k_min, cfg.k_max + 1)
    jobs = [(x, k, cfg) for k in ks]
    records = []
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            for rec in pool.map(_scan_k_tagged, jobs):
                records.append(rec)
                if progress:
                    progress(rec)
    else:
        for job in jobs:
            rec = _scan_k_tagged(job)
            log.debug("K=%d aic=%.6g min_sil=%.4f avg_sil=%.4f", rec.k, rec.aic, rec.min_silhouette,
                      rec.avg_silhouette)
            records.append(rec)
            if progress:
                progress(rec)
    return records


def dumps_scan(records) -> str:
    return "".join(json.dumps(rec.to_dict()) + "\n" for rec in records)


def write_scan_jsonl(path, records) -> None:
    Path(path).write_text(dumps_scan(records))


def read_scan_jsonl(path) -> list[KScanRecord]:
    records = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                records.append(KScanRecord(
                    k=int(d["k"]),
                    aic=float(d["aic"]),
                    min_silhouette=float(d["min_silhouette"]),
                    avg_silhouette=float(d["avg_silhouette"]),
                    mean_relative_error=float(d["mean_relative_error"]),
                ))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad scan record ({exc})") from None
    return records
