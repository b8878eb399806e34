"""Retrieval metrics: Precision@1, MAP@R and mean Average Precision.

Each query ranks every other sample by ascending Euclidean distance, ties broken
by ascending index. Queries whose class has no other member are excluded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    precision_at_1: float
    map_at_r: float
    mean_ap: float
    n_queries: int
    n_excluded: int = 0


def _distances(emb):
    emb = np.asarray(emb, dtype=np.float64)
    if emb.ndim != 2:
        raise ContractError(f"embeddings must be 2-D, got shape {emb.shape}")
    sq = np.sum((emb[:, None, :] - emb[None, :, :]) ** 2, axis=-1)
    return np.sqrt(sq)


def ranked_relevance(emb, labels):
    """Relevance flags of each query's ranking (self removed), shape (n, n - 1)."""
    labels = np.asarray(labels)
    n = labels.size
    if n < 2:
        raise ContractError("retrieval metrics need at least 2 samples")
    dist = _distances(emb)
    if dist.shape[0] != n:
        raise ContractError("one label per embedding row required")
    np.fill_diagonal(dist, np.inf)
    # stable sort keeps ascending index order among equal distances
    order = np.argsort(dist, axis=1, kind="stable")[:, : n - 1]
    return labels[order] == labels[:, None]


def _per_query(rel):
    n_rel = rel.sum(axis=1)
    valid = n_rel > 0
    ranks = np.arange(1, rel.shape[1] + 1)
    prec = np.cumsum(rel, axis=1) / ranks
    hits = np.where(rel, prec, 0.0)
    p1 = rel[:, 0].astype(float)
    within_r = ranks[None, :] <= n_rel[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        ap_r = np.where(within_r, hits, 0.0).sum(axis=1) / n_rel
        ap = hits.sum(axis=1) / n_rel
    return valid, p1, ap_r, ap


def evaluate(emb, labels) -> MetricsReport:
    rel = ranked_relevance(emb, labels)
    valid, p1, ap_r, ap = _per_query(rel)
    excluded = int((~valid).sum())
    if excluded:
        log.info("%d singleton-class queries excluded", excluded)
    if not np.any(valid):
        return MetricsReport(0.0, 0.0, 0.0, 0, excluded)
    return MetricsReport(
        float(p1[valid].mean()),
        float(ap_r[valid].mean()),
        float(ap[valid].mean()),
        int(valid.sum()),
        excluded,
    )


def precision_at_1(emb, labels) -> float:
    return evaluate(emb, labels).precision_at_1


def map_at_r(emb, labels) -> float:
    return evaluate(emb, labels).map_at_r


def mean_ap(emb, labels) -> float:
    return evaluate(emb, labels).mean_ap
