"""Synthetic matrices with a known number of latent features.

The generator builds ``W`` from narrow Gaussian bumps with controlled
pairwise correlations, ``H`` from ``exp(U[0, 1))`` and multiplies the
product by elementwise uniform noise. :func:`swimmer` renders the
stick-figure benchmark whose ground truth is 16 parts.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, RejectionBudgetExceeded
from .numerics import make_rng, pearson, read_matrix_csv, uniform_matrix, write_matrix_csv

NOISE_LEVELS = (0.05, 0.10, 0.20)
CORRELATION_BANDS = ((0.2, 0.4), (0.4, 0.6), (0.6, 0.8))
# later columns must stay below this correlation with every earlier one
MAX_OTHER_CORRELATION = 0.3


@dataclass(frozen=True)
class GenSpec:
    n: int
    m: int
    k_true: int
    noise: float = 0.05
    corr_band: tuple[float, float] = (0.2, 0.4)
    seed: int = 0
    max_rejections: int = 10_000

    def __post_init__(self):
        lo, hi = self.corr_band
        if not 0 <= lo < hi <= 1:
            raise DataError(f"invalid correlation band {self.corr_band}")
        if self.k_true < 2:
            raise DataError("k_true must be >= 2")
        if self.k_true > min(self.n, self.m):
            raise DataError(f"k_true={self.k_true} exceeds min(n, m)={min(self.n, self.m)}")
        if self.n < 10:
            raise DataError("n must be >= 10 for Gaussian columns")
        if not 0 <= self.noise < 1:
            raise DataError("noise must lie in [0, 1)")


@dataclass
class LabeledMatrix:
    x: np.ndarray
    k_true: int
    w_true: np.ndarray
    h_true: np.ndarray
    spec: GenSpec | None = field(default=None, repr=False)


def gaussian_column(n: int, seed, center: float | None = None, width: float | None = None) -> np.ndarray:
    """``exp(-(x - a)^2 / b)`` on the grid ``x = 1..n``.

    ``a`` is uniform in ``[1, n]`` and ``b`` uniform in ``[1, n/10]`` unless
    forced by ``center`` / ``width``.
    """
    rng = make_rng(seed)
    a = rng.uniform(1.0, n) if center is None else float(center)
    b = rng.uniform(1.0, n / 10.0) if width is None else float(width)
    grid = np.arange(1, n + 1, dtype=np.float64)
    return np.exp(-((grid - a) ** 2) / b)


def _safe_pearson(u, v):
    # a constant candidate column counts as a rejection
    try:
        return pearson(u, v)
    except DataError:
        return np.inf


def generate(spec: GenSpec) -> LabeledMatrix:
    rng = make_rng(spec.seed)
    lo, hi = spec.corr_band
    cols = [gaussian_column(spec.n, rng)]

    for _ in range(spec.max_rejections):
        cand = gaussian_column(spec.n, rng)
        if lo < _safe_pearson(cols[0], cand) < hi:
            cols.append(cand)
            break
    else:
        raise RejectionBudgetExceeded(
            f"column 2 missed the correlation band {spec.corr_band} {spec.max_rejections} times"
        )

    for i in range(2, spec.k_true):
        for _ in range(spec.max_rejections):
            cand = gaussian_column(spec.n, rng)
            if all(_safe_pearson(c, cand) < MAX_OTHER_CORRELATION for c in cols):
                cols.append(cand)
                break
        else:
            raise RejectionBudgetExceeded(
                f"column {i + 1} could not stay below correlation {MAX_OTHER_CORRELATION} "
                f"after {spec.max_rejections} draws (n={spec.n}, k={spec.k_true})"
            )

    w = np.column_stack(cols)
    h = np.exp(rng.uniform(0.0, 1.0, size=(spec.k_true, spec.m)))
    err = uniform_matrix(spec.n, spec.m, 1.0 - spec.noise, 1.0 + spec.noise, rng)
    x = (w @ h) * err
    return LabeledMatrix(x=x, k_true=spec.k_true, w_true=w, h_true=h, spec=spec)


def derive_seed(seed: int, index: int) -> int:
    """Stable 63-bit seed for corpus member ``index``."""
    state = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & (2**63 - 1)


def corpus_specs(count: int, size_range=(50, 150), k_range=(2, 12), seed: int = 0,
                 noise_levels=NOISE_LEVELS, bands=CORRELATION_BANDS) -> list[GenSpec]:
    """Draw ``count`` generation specs with uniformly sampled parameters."""
    if count < 0:
        raise DataError("count must be >= 0")
    if size_range[0] > size_range[1] or k_range[0] > k_range[1]:
        raise DataError("empty size or k range")
    specs = []
    for i in range(count):
        rng = make_rng(seed, 0, i)
        n, m = (int(v) for v in rng.integers(size_range[0], size_range[1] + 1, size=2))
        k = int(rng.integers(k_range[0], k_range[1] + 1))
        noise = float(noise_levels[rng.integers(len(noise_levels))])
        band = tuple(float(b) for b in bands[rng.integers(len(bands))])
        specs.append(GenSpec(n=n, m=m, k_true=k, noise=noise, corr_band=band, seed=derive_seed(seed, i)))
    return specs


def generate_corpus(count: int, size_range=(50, 150), k_range=(2, 12), seed: int = 0,
                    **kwargs) -> list[LabeledMatrix]:
    out = []
    for i, spec in enumerate(corpus_specs(count, size_range, k_range, seed, **kwargs)):
        try:
            out.append(generate(spec))
        except DataError as exc:
            raise type(exc)(f"corpus member {i}: {exc}") from exc
    return out


def save_corpus(corpus, directory) -> Path:
    """Write ``matrix_0000.csv`` ... plus ``manifest.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, item in enumerate(corpus):
        name = f"matrix_{i:04d}.csv"
        write_matrix_csv(directory / name, item.x)
        spec = item.spec
        entries.append({
            "index": i,
            "file": name,
            "k_true": int(item.k_true),
            "n": int(item.x.shape[0]),
            "m": int(item.x.shape[1]),
            "noise": None if spec is None else spec.noise,
            "corr_band": None if spec is None else list(spec.corr_band),
            "seed": None if spec is None else spec.seed,
        })
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({"matrices": entries}, indent=2) + "\n")
    return manifest


def load_manifest(directory) -> list[dict]:
    path = Path(directory) / "manifest.json"
    try:
        return json.loads(path.read_text())["matrices"]
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read corpus manifest {path}: {exc}") from exc


def load_corpus_matrix(directory, entry) -> np.ndarray:
    return read_matrix_csv(Path(directory) / entry["file"])


# --- swimmer -----------------------------------------------------------------

SWIMMER_SIZE = 32
_TORSO_ROWS = range(10, 22)
_TORSO_COLS = range(14, 18)
_LIMB_LEN = 6


def _limb_pixels():
    """Pixel sets for 4 limbs x 4 positions; all 16 sets disjoint from each other and the torso."""
    top, bottom = _TORSO_ROWS[0] - 1, _TORSO_ROWS[-1] + 1
    left, right = _TORSO_COLS[0] - 1, _TORSO_COLS[-1] + 1
    # anchor just outside each torso corner, with 4 directions pointing away from the body
    corners = [
        ((top, left), [(-1, 0), (-1, -1), (0, -1), (1, -1)]),
        ((top, right), [(-1, 0), (-1, 1), (0, 1), (1, 1)]),
        ((bottom, left), [(1, 0), (1, -1), (0, -1), (-1, -1)]),
        ((bottom, right), [(1, 0), (1, 1), (0, 1), (-1, 1)]),
    ]
    limbs = []
    for (r0, c0), dirs in corners:
        limbs.append([[(r0 + t * dr, c0 + t * dc) for t in range(1, _LIMB_LEN + 1)] for dr, dc in dirs])
    return limbs


def swimmer() -> LabeledMatrix:
    """256 binary 32x32 stick figures as columns of a 1024x256 matrix, K=16."""
    size = SWIMMER_SIZE
    torso = np.zeros((size, size))
    torso[_TORSO_ROWS[0]:_TORSO_ROWS[-1] + 1, _TORSO_COLS[0]:_TORSO_COLS[-1] + 1] = 1.0
    limbs = _limb_pixels()

    parts = []
    for limb in limbs:
        for pixels in limb:
            img = np.zeros((size, size))
            for r, c in pixels:
                img[r, c] = 1.0
            parts.append(img.ravel())
    parts = np.column_stack(parts)  # (1024, 16)

    images, selectors = [], []
    for pos in itertools.product(range(4), repeat=4):
        sel = np.zeros(16)
        for limb, p in enumerate(pos):
            sel[4 * limb + p] = 1.0
        selectors.append(sel)
        images.append(torso.ravel() + parts @ sel)
    x = np.column_stack(images)
    # torso split evenly over the four active limbs keeps X = W H exact at K = 16
    w = parts + torso.ravel()[:, None] / 4.0
    h = np.column_stack(selectors)
    return LabeledMatrix(x=x, k_true=16, w_true=w, h_true=h, spec=None)


def swimmer_torso_mask() -> np.ndarray:
    torso = np.zeros((SWIMMER_SIZE, SWIMMER_SIZE), dtype=bool)
    torso[_TORSO_ROWS[0]:_TORSO_ROWS[-1] + 1, _TORSO_COLS[0]:_TORSO_COLS[-1] + 1] = True
    return torso.ravel()


def spec_to_dict(spec: GenSpec) -> dict:
    d = asdict(spec)
    d["corr_band"] = list(spec.corr_band)
    return d
