"""Similarity-matrix construction from (possibly masked) sample data.

A dataset is an ``(n, d)`` matrix whose first ``n_search`` rows are fully
observed search candidates and whose remaining ``n_query`` rows may have
missing features. The ground-truth similarity uses full rows; the initial
(inaccurate) similarity restricts every pair to the features observed in
both rows.

All pairwise entries are computed with the same scalar kernel, so blocks
built from fully observed rows agree bit-for-bit regardless of which
routine produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllMissingRow, DimensionMismatch, InvalidRank, InvalidRho
from .linalg import as_matrix

DEFAULT_EPSILON = 1e-8


@dataclass
class MaskSpec:
    """Per-row missing ratio and the seed that draws the missing indices."""

    rho: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise InvalidRho(f"missing ratio must lie in [0, 1), got {self.rho}")


@dataclass
class MaskedDataset:
    """Sample matrix with an observation mask and a search/query row split.

    ``mask[i, j]`` is True when feature j of row i was observed. Rows
    ``0..n_search`` are search candidates and must be fully observed;
    missingness lives only in the query rows.
    """

    X: np.ndarray
    mask: np.ndarray
    n_search: int
    n_query: int
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        self.X = as_matrix(self.X, "X")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.X.shape:
            raise DimensionMismatch(
                f"mask shape {self.mask.shape} != data shape {self.X.shape}"
            )
        if self.n_search < 0 or self.n_query < 0:
            raise ValueError("row counts must be nonnegative")
        if self.n_search + self.n_query != self.X.shape[0]:
            raise ValueError(
                f"n_search + n_query = {self.n_search + self.n_query} "
                f"!= rows(X) = {self.X.shape[0]}"
            )
        if not self.mask[: self.n_search].all():
            raise ValueError("search rows must be fully observed")
        if not 0.0 < self.epsilon <= 1e-3:
            raise ValueError(f"epsilon must lie in (0, 1e-3], got {self.epsilon}")


def _pair_cosine(x: np.ndarray, y: np.ndarray, nx: float, ny: float, epsilon: float) -> float:
    return float(np.dot(x, y)) / (max(nx, epsilon) * max(ny, epsilon))


def cosine_similarity(x, y, epsilon: float = DEFAULT_EPSILON) -> float:
    """Cosine of the angle between two vectors, with near-zero norms
    replaced by ``epsilon`` in the denominator."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1:
        raise DimensionMismatch(f"vector shapes differ: {xv.shape} vs {yv.shape}")
    nx = float(np.sqrt(np.dot(xv, xv)))
    ny = float(np.sqrt(np.dot(yv, yv)))
    return _pair_cosine(xv, yv, nx, ny, epsilon)


def masked_cosine(x, y, mask_x, mask_y, epsilon: float = DEFAULT_EPSILON) -> float:
    """Cosine similarity over the features observed in both vectors.

    An empty overlap yields 0, the neutral no-information score.
    """
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    mx = np.asarray(mask_x, dtype=bool)
    my = np.asarray(mask_y, dtype=bool)
    if not (xv.shape == yv.shape == mx.shape == my.shape) or xv.ndim != 1:
        raise DimensionMismatch("vectors and masks must share one 1-D shape")
    common = mx & my
    if not common.any():
        return 0.0
    return cosine_similarity(xv[common], yv[common], epsilon)


def true_similarity(X, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Pairwise cosine similarity of the rows of X (the ground truth S*)."""
    xm = as_matrix(X, "X")
    n = xm.shape[0]
    if n < 2:
        raise ValueError("need at least two rows")
    norms = np.array([np.sqrt(np.dot(row, row)) for row in xm])
    s = np.empty((n, n))
    for i in range(n):
        xi = xm[i]
        ni = norms[i]
        for j in range(i, n):
            v = _pair_cosine(xi, xm[j], ni, norms[j], epsilon)
            s[i, j] = v
            s[j, i] = v
    return s


def initial_similarity(ds: MaskedDataset) -> np.ndarray:
    """Initial (inaccurate) similarity S0 under the dataset's mask.

    Pairs of fully observed rows use the full-vector kernel, so the
    search/search block matches ``true_similarity`` exactly; every pair
    touching a partially observed row uses ``masked_cosine``.
    """
    x = ds.X
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two rows")
    full = ds.mask.all(axis=1)
    missing_all = ~ds.mask.any(axis=1)
    if missing_all.any():
        raise AllMissingRow(
            f"rows with no observed features: {np.nonzero(missing_all)[0].tolist()}"
        )
    norms = np.array([np.sqrt(np.dot(row, row)) for row in x])
    s = np.empty((n, n))
    for i in range(n):
        xi = x[i]
        for j in range(i, n):
            if full[i] and full[j]:
                v = _pair_cosine(xi, x[j], norms[i], norms[j], ds.epsilon)
            else:
                v = masked_cosine(xi, x[j], ds.mask[i], ds.mask[j], ds.epsilon)
            s[i, j] = v
            s[j, i] = v
    return s


def generate_mask(shape: tuple[int, int], spec: MaskSpec) -> np.ndarray:
    """Observation flags for query rows: each row independently loses exactly
    ``floor(rho * d)`` features, drawn uniformly without replacement."""
    n_query, d = shape
    # nudge before flooring: decimal ratios like 0.57 * 100 land at
    # 56.999... in binary floating point
    n_missing = int(spec.rho * d + 1e-9)
    rng = np.random.default_rng(spec.seed)
    mask = np.ones((n_query, d), dtype=bool)
    for i in range(n_query):
        mask[i, rng.permutation(d)[:n_missing]] = False
    return mask


def generate_synthetic(
    n_search: int,
    n_query: int,
    d: int,
    latent_rank: int,
    noise_sigma: float,
    seed: int,
) -> np.ndarray:
    """Low-rank sample matrix: A @ B.T plus Gaussian noise.

    A is (n, latent_rank) and B is (d, latent_rank), both standard normal;
    noise entries are N(0, noise_sigma^2). Rows that come out numerically
    zero are redrawn so every row has a usable direction.
    """
    n = n_search + n_query
    if not 1 <= latent_rank <= min(n, d):
        raise InvalidRank(f"latent_rank={latent_rank} outside [1, min(n={n}, d={d})]")
    if noise_sigma < 0.0:
        raise ValueError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, latent_rank))
    b = rng.normal(size=(d, latent_rank))
    x = a @ b.T
    if noise_sigma > 0.0:
        x = x + rng.normal(0.0, noise_sigma, size=(n, d))
    for _ in range(100):
        weak = np.sqrt((x * x).sum(axis=1)) < 1e-12
        if not weak.any():
            break
        rows = np.nonzero(weak)[0]
        x[rows] = rng.normal(size=(rows.size, latent_rank)) @ b.T
        if noise_sigma > 0.0:
            x[rows] += rng.normal(0.0, noise_sigma, size=(rows.size, d))
    return x
