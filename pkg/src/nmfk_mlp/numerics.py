"""Dense nonnegative matrices, seeded randomness and small vector statistics."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConstantVector, DataError, NegativeEntries, ZeroVector

__all__ = [
    "as_nonneg_matrix",
    "make_rng",
    "frobenius_norm",
    "pearson",
    "cosine_distance",
    "uniform_matrix",
    "read_matrix_csv",
    "write_matrix_csv",
]


def as_nonneg_matrix(x, name="matrix") -> np.ndarray:
    """Return ``x`` as a 2-D float64 array, checking finiteness and sign."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains NaN or infinite values")
    if np.any(arr < 0):
        i, j = np.argwhere(arr < 0)[0]
        raise NegativeEntries(f"{name} has a negative entry at ({i}, {j}): {arr[i, j]!r}")
    return arr


def make_rng(seed, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``.

    Streams for distinct keys are statistically independent, so ensemble
    members can draw in any order (or in parallel) and still reproduce.
    An existing ``Generator`` is passed through unchanged when no key is given.
    """
    if isinstance(seed, np.random.Generator):
        if key:
            raise TypeError("cannot derive keyed streams from a Generator")
        return seed
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def frobenius_norm(m) -> float:
    m = np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.sum(m * m)))


def pearson(u, v) -> float:
    """Sample Pearson correlation of two equal-length vectors."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape or u.size < 2:
        raise DataError("pearson needs two vectors of equal length >= 2")
    du = u - u.mean()
    dv = v - v.mean()
    su = np.sqrt(np.dot(du, du))
    sv = np.sqrt(np.dot(dv, dv))
    if su == 0 or sv == 0:
        raise ConstantVector("pearson is undefined for a constant vector")
    r = np.dot(du, dv) / (su * sv)
    return float(np.clip(r, -1.0, 1.0))


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DataError("cosine_distance needs vectors of equal length")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine distance is undefined for a zero vector")
    return float(1.0 - np.dot(u, v) / (nu * nv))


def uniform_matrix(rows: int, cols: int, lo: float, hi: float, seed) -> np.ndarray:
    """I.i.d. uniform samples in ``[lo, hi)``; ``lo == hi`` gives a constant matrix."""
    if lo > hi:
        raise DataError(f"uniform_matrix needs lo <= hi, got [{lo}, {hi}]")
    rng = make_rng(seed)
    return rng.uniform(lo, hi, size=(rows, cols)) if lo < hi else np.full((rows, cols), float(lo))


def read_matrix_csv(path) -> np.ndarray:
    """Read a header-less comma separated matrix, one row per line.

    Blank lines are skipped. Ragged rows, unparsable fields and negative
    values raise :class:`DataError` naming the offending line.
    """
    path = Path(path)
    rows = []
    width = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed CSV row") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}:{lineno}: expected {width} values, found {len(row)}")
            if any(val < 0 for val in row):
                raise NegativeEntries(f"{path}:{lineno}: negative entry")
            if not all(np.isfinite(row)):
                raise DataError(f"{path}:{lineno}: non-finite entry")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data")
    return np.array(rows, dtype=np.float64)


def write_matrix_csv(path, m) -> None:
    m = as_nonneg_matrix(m)
    np.savetxt(path, m, delimiter=",", fmt="%.17g")
