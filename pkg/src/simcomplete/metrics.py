"""Evaluation metrics for completed similarity matrices.

Retrieval metrics score, for each query row, how well the estimated
scores against the search candidates reproduce the ground-truth ranking:
``recall_at_topk`` is the overlap of the two top-k candidate sets, and
``ndcg_at_topk`` discounts hits by their estimated position. Both default
to per-query ranking averaged over queries; ``global_topk=True`` instead
ranks all (candidate, query) score entries at once.

The error metric is relative: squared Frobenius distance to the ground
truth divided by the initial matrix's squared distance, so values below
one mean the estimate improved on its starting point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBaseline, DimensionMismatch, InvalidK
from .linalg import as_square, effective_rank


@dataclass
class MetricReport:
    """Bundle of all per-run evaluation outputs."""

    rmse: float
    recall_at_k: float
    ndcg_at_k: float
    k_fraction: float
    rank_hat: int
    elapsed_seconds: float


def rmse(s_hat, s_star, s0) -> float:
    """|S_hat - S*|_F^2 / |S0 - S*|_F^2; below one beats the initial matrix."""
    a = as_square(s_hat, "s_hat")
    b = as_square(s_star, "s_star")
    c = as_square(s0, "s0")
    if a.shape != b.shape or a.shape != c.shape:
        raise DimensionMismatch(
            f"shapes differ: {a.shape}, {b.shape}, {c.shape}"
        )
    denom = float(np.linalg.norm(c - b, "fro") ** 2)
    if denom == 0.0:
        raise DegenerateBaseline("initial matrix equals the ground truth")
    return float(np.linalg.norm(a - b, "fro") ** 2) / denom


def _top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores, ties broken by ascending index."""
    return np.argsort(-scores, kind="stable")[:k]


def _resolve_k(n_search: int, n_query: int, k_fraction: float) -> int:
    if n_search < 1 or n_query < 1:
        raise InvalidK(f"need search and query rows, got {n_search}/{n_query}")
    if not 0.0 < k_fraction <= 1.0:
        raise InvalidK(f"k_fraction must lie in (0, 1], got {k_fraction}")
    # nudge before flooring; decimal fractions like 0.57 * 100 land at
    # 56.999... in binary floating point
    k = max(1, int(k_fraction * n_search + 1e-9))
    if k > n_search:
        raise InvalidK(f"k={k} exceeds n_search={n_search}")
    return k


def _query_block(s: np.ndarray, n_search: int, n_query: int) -> np.ndarray:
    a = as_square(s)
    if a.shape[0] != n_search + n_query:
        raise DimensionMismatch(
            f"matrix of size {a.shape[0]} cannot split into {n_search}+{n_query}"
        )
    return a[:n_search, n_search:]


def recall_at_topk(
    s_hat,
    s_star,
    n_search: int,
    n_query: int,
    k_fraction: float = 0.2,
    global_topk: bool = False,
) -> float:
    """Mean overlap fraction between estimated and true top-k candidate sets.

    k is ``max(1, floor(k_fraction * n_search))``.
    """
    k = _resolve_k(n_search, n_query, k_fraction)
    est = _query_block(s_hat, n_search, n_query)
    tru = _query_block(s_star, n_search, n_query)
    if global_topk:
        est_set = set(_top_k(est.ravel(), k).tolist())
        tru_set = set(_top_k(tru.ravel(), k).tolist())
        return len(est_set & tru_set) / k
    total = 0.0
    for q in range(n_query):
        est_set = set(_top_k(est[:, q], k).tolist())
        tru_set = set(_top_k(tru[:, q], k).tolist())
        total += len(est_set & tru_set) / k
    return total / n_query


def ndcg_at_topk(
    s_hat,
    s_star,
    n_search: int,
    n_query: int,
    k_fraction: float = 0.2,
    global_topk: bool = False,
) -> float:
    """Discounted-gain quality of the estimated ranking against the true
    top-k set, normalized by the all-relevant ideal prefix.

    Relevance is binary membership of the true top-k set; a query whose
    ideal gain is zero scores zero.
    """
    k = _resolve_k(n_search, n_query, k_fraction)
    est = _query_block(s_hat, n_search, n_query)
    tru = _query_block(s_star, n_search, n_query)
    if global_topk:
        return _ndcg_single(est.ravel(), tru.ravel(), k)
    total = 0.0
    for q in range(n_query):
        total += _ndcg_single(est[:, q], tru[:, q], k)
    return total / n_query


def _ndcg_single(est_scores: np.ndarray, tru_scores: np.ndarray, k: int) -> float:
    tru_set = set(_top_k(tru_scores, k).tolist())
    est_order = _top_k(est_scores, k)
    dcg = 0.0
    idcg = 0.0
    for pos in range(k):
        gain = 1.0 / math.log2(pos + 2)
        idcg += gain
        if int(est_order[pos]) in tru_set:
            dcg += gain
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def rank_report(s_hat) -> int:
    """Count of eigenvalues above 1e-15 * max(1, |lambda|_max)."""
    return effective_rank(s_hat, threshold=None)
