"""Frobenius-norm NMF at a fixed rank.

Two monotone solvers share one driver: Lee-Seung multiplicative updates
(``"mu"``, the default) and hierarchical alternating least squares
(``"hals"``). Both alternate a W block and an H block per iteration and never
increase ``||X - WH||``. Multiplicative updates move slowly along the flat
directions of a non-unique factorization, so resampled copies started from
the same point stay together, which is what the NMFk stability statistics
rely on; HALS converges to a fixed tolerance far faster. The driver works on stacks of matrices, shape
``(batch, n, m)``, so an NMFk ensemble is factorized with batched matmuls;
:func:`nmf_factorize` is the single-matrix entry point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateInput, RankTooLarge, ZeroData
from .numerics import as_nonneg_matrix, frobenius_norm, make_rng

__all__ = ["NmfConfig", "FactorPair", "nmf_factorize", "factorize_stack", "relative_error"]


@dataclass(frozen=True)
class NmfConfig:
    max_iterations: int = 1000
    convergence_tol: float = 1e-6
    epsilon_floor: float = 1e-9
    seed: int = 0
    solver: str = "mu"
    # block updates per iteration, each reusing the iteration's X H' / W'X products
    sweeps: int = 3

    def __post_init__(self):
        if self.solver not in ("hals", "mu"):
            raise DataError(f"unknown solver {self.solver!r}")
        if self.sweeps < 1:
            raise DataError("sweeps must be >= 1")
        if self.max_iterations < 1:
            raise DataError("max_iterations must be >= 1")
        if self.convergence_tol < 0:
            raise DataError("convergence_tol must be >= 0")
        if not self.epsilon_floor > 0:
            raise DataError("epsilon_floor must be > 0")


@dataclass
class FactorPair:
    w: np.ndarray
    h: np.ndarray
    relative_error: float
    iterations_used: int
    # ||X - WH|| after each iteration, only filled when requested
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return self.w.shape[1]


def relative_error(x, w, h) -> float:
    """``||X - WH|| / ||X||`` in the Frobenius norm."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if w.shape[0] != x.shape[0] or h.shape[1] != x.shape[1] or w.shape[1] != h.shape[0]:
        raise DataError(f"shapes do not conform: X{x.shape}, W{w.shape}, H{h.shape}")
    nx = frobenius_norm(x)
    if nx == 0:
        raise ZeroData("relative error is undefined for an all-zero X")
    return frobenius_norm(x - w @ h) / nx


def _check_rank(shape, k):
    if k < 1 or k > min(shape):
        raise RankTooLarge(f"k={k} must lie in [1, {min(shape)}] for a {shape[0]}x{shape[1]} matrix")


# HALS clips entries here instead of at 0 so no column is ever exactly zero
_ENTRY_FLOOR = 1e-16


def _random_init(rng, x, k, eps):
    """Uniform ``[eps, 1)`` factors, rescaled so ``WH`` best matches ``X`` in scale."""
    n, m = x.shape
    w = rng.uniform(eps, 1.0, size=(n, k))
    h = rng.uniform(eps, 1.0, size=(k, m))
    wh = w @ h
    scale = np.sqrt(np.sum(x * wh) / np.sum(wh * wh))
    return w * scale, h * scale


def _mu_sweep(x, w, h, eps, sweeps):
    ht = h.transpose(0, 2, 1)
    xht = x @ ht
    hht = h @ ht
    for _ in range(sweeps):
        w = w * xht / (w @ hht + eps)
    wt = w.transpose(0, 2, 1)
    wtx = wt @ x
    wtw = wt @ w
    for _ in range(sweeps):
        h = h * wtx / (wtw @ h + eps)
    return w, h, wtx, wtw


def _hals_sweep(x, w, h, eps, sweeps):
    k = w.shape[2]
    ht = h.transpose(0, 2, 1)
    xht = x @ ht
    hht = h @ ht
    w = w.copy()
    for _ in range(sweeps):
        for j in range(k):
            step = (xht[:, :, j] - np.einsum("bik,bk->bi", w, hht[:, :, j])) / (hht[:, j, j][:, None] + eps)
            w[:, :, j] = np.maximum(_ENTRY_FLOOR, w[:, :, j] + step)
    wt = w.transpose(0, 2, 1)
    wtx = wt @ x
    wtw = wt @ w
    h = h.copy()
    for _ in range(sweeps):
        for j in range(k):
            step = (wtx[:, j, :] - np.einsum("bk,bkj->bj", wtw[:, j, :], h)) / (wtw[:, j, j][:, None] + eps)
            h[:, j, :] = np.maximum(_ENTRY_FLOOR, h[:, j, :] + step)
    return w, h, wtx, wtw


_SOLVERS = {"hals": _hals_sweep, "mu": _mu_sweep}


def _update_stack(x, w, h, x_sq, cfg, history):
    """Iterate the configured solver in place on stacked factors.

    Each stack member stops independently; returns iterations used per member
    and, if ``history`` is set, the exact residual norm of every member after
    every iteration it performed.
    """
    sweep = _SOLVERS[cfg.solver]
    batch = x.shape[0]
    active = np.ones(batch, dtype=bool)
    iters = np.zeros(batch, dtype=np.int64)
    prev = np.full(batch, np.inf)
    hist = [[] for _ in range(batch)] if history else None

    for _ in range(cfg.max_iterations):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        full = idx.size == batch
        xa = x if full else x[idx]
        wa, ha, wtx, wtw = sweep(xa, w if full else w[idx], h if full else h[idx],
                                 cfg.epsilon_floor, cfg.sweeps)

        # ||X - WH||^2 = ||X||^2 - 2<H, W'X> + <W'W, HH'> reuses the sweep's products
        hht = ha @ ha.transpose(0, 2, 1)
        sq = x_sq[idx] - 2.0 * np.einsum("bij,bij->b", ha, wtx) + np.einsum("bij,bij->b", wtw, hht)
        obj = np.sqrt(np.maximum(sq, 0.0))

        if full:
            w, h = wa, ha
        else:
            w[idx] = wa
            h[idx] = ha
        iters[idx] += 1
        if history:
            r = xa - wa @ ha
            resid = np.sqrt(np.einsum("bij,bij->b", r, r))
            for j, b in enumerate(idx):
                hist[b].append(float(resid[j]))

        p = prev[idx]
        with np.errstate(invalid="ignore"):
            change = np.abs(p - obj) / np.where(p > 0, p, 1.0)
        done = np.isfinite(p) & (change < cfg.convergence_tol)
        active[idx[done]] = False
        prev[idx] = obj
    return w, h, iters, hist


def factorize_stack(xs, k: int, cfg: NmfConfig, rngs, w0=None, h0=None,
                    record_history: bool = False) -> list[FactorPair]:
    """Factorize every matrix in ``xs`` (same shape) at rank ``k``.

    ``rngs`` supplies one generator per member for the random initialization;
    members are independent, so the result for member ``i`` does not depend on
    the rest of the stack.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 3:
        raise DataError("factorize_stack expects a (batch, n, m) array")
    batch, n, m = xs.shape
    _check_rank((n, m), k)
    x_sq = np.einsum("bij,bij->b", xs, xs)
    if np.any(x_sq == 0):
        raise DegenerateInput("cannot factorize an all-zero matrix")
    if w0 is None:
        rngs = list(rngs)
        if len(rngs) != batch:
            raise DataError("need one generator per stack member")
        inits = [_random_init(rng, xb, k, cfg.epsilon_floor) for rng, xb in zip(rngs, xs)]
        w = np.stack([a for a, _ in inits])
        h = np.stack([b for _, b in inits])
    else:
        w = np.array(w0, dtype=np.float64).reshape(batch, n, k)
        h = np.array(h0, dtype=np.float64).reshape(batch, k, m)
    w, h, iters, hist = _update_stack(
        xs, w, h, x_sq, cfg, record_history)
    out = []
    for b in range(batch):
        err = float(np.linalg.norm(xs[b] - w[b] @ h[b]) / np.sqrt(x_sq[b]))
        out.append(FactorPair(w[b], h[b], err, int(iters[b]), hist[b] if hist else []))
    return out


def nmf_factorize(x, k: int, cfg: NmfConfig | None = None, *, w0=None, h0=None,
                  record_history: bool = False) -> FactorPair:
    """Nonnegative factorization ``X ~ W H`` with inner dimension ``k``.

    Initial factors are uniform in ``[epsilon_floor, 1)`` drawn from
    ``cfg.seed`` and jointly rescaled to the magnitude of ``X``, unless
    ``w0``/``h0`` are given (used as is). With ``record_history`` the
    exact residual norm is stored after every iteration.
    """
    cfg = cfg or NmfConfig()
    x = as_nonneg_matrix(x, "X")
    _check_rank(x.shape, k)
    if not np.any(x):
        raise DegenerateInput("cannot factorize an all-zero matrix")
    if (w0 is None) != (h0 is None):
        raise DataError("w0 and h0 must be given together")
    if w0 is None:
        w0, h0 = _random_init(make_rng(cfg.seed), x, k, cfg.epsilon_floor)
    x_sq = np.array([np.sum(x * x)])
    w, h, iters, hist = _update_stack(
        x[None], np.array(w0, dtype=np.float64)[None], np.array(h0, dtype=np.float64)[None],
        x_sq, cfg, record_history,
    )
    err = relative_error(x, w[0], h[0])
    return FactorPair(w[0], h[0], err, int(iters[0]), hist[0] if hist else [])
