"""Retrieval evaluation of embeddings: ranking, CMC, mAP, and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Dataset
from .errors import InputError
from .model import ModelParams, embed


@dataclass(frozen=True)
class RetrievalReport:
    cmc: np.ndarray
    map: float
    n_query: int
    n_gallery: int

    def rank(self, i: int) -> float:
        """Rank-i accuracy (1-based); ranks past the gallery size saturate."""
        return float(self.cmc[min(i, len(self.cmc)) - 1])


def extract_descriptors(params: ModelParams, samples) -> np.ndarray:
    feats = samples.features if isinstance(samples, Dataset) else samples
    return np.atleast_2d(embed(params, np.asarray(feats, dtype=np.float64)))


def rank_gallery(query, gallery) -> np.ndarray:
    """Gallery indices by descending cosine similarity, ties by ascending index."""
    gallery = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    if gallery.shape[0] == 0 or np.size(gallery) == 0:
        raise InputError("empty gallery")
    q = np.asarray(query, dtype=np.float64).reshape(1, -1)
    sims = kernels.cosine_matrix(q, np.ascontiguousarray(gallery))[0]
    return np.argsort(-sims, kind="stable")


def rank_all(queries, gallery) -> np.ndarray:
    """Ranking permutation for every query row, shape (n_query, n_gallery)."""
    gallery = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    if gallery.shape[0] == 0:
        raise InputError("empty gallery")
    sims = kernels.cosine_matrix(np.atleast_2d(np.asarray(queries, dtype=np.float64)), gallery)
    return np.argsort(-sims, axis=1, kind="stable")


def _hits(relevance) -> tuple[np.ndarray, np.ndarray]:
    rel = np.atleast_2d(np.asarray(relevance, dtype=np.bool_))
    if rel.shape[0] == 0:
        raise InputError("no queries")
    first, ap = kernels.ranked_hits(np.ascontiguousarray(rel))
    if np.any(first == 0):
        raise InputError(f"query {int(np.flatnonzero(first == 0)[0])} has no relevant gallery item")
    return first, ap


def cmc(relevance, max_rank: int = 10) -> np.ndarray:
    """``cmc[i-1]`` is the fraction of queries whose first relevant item has rank <= i.

    ``relevance`` is a boolean (n_query, n_gallery) matrix in ranked order.
    """
    first, _ = _hits(relevance)
    ranks = np.arange(1, max_rank + 1)
    return (first[:, None] <= ranks[None, :]).mean(axis=0)


def mean_average_precision(relevance) -> float:
    _, ap = _hits(relevance)
    return float(ap.mean())


def evaluate_retrieval(query_feats, query_labels, gallery_feats, gallery_labels, max_rank: int = 10) -> RetrievalReport:
    order = rank_all(query_feats, gallery_feats)
    gl = np.asarray(gallery_labels)
    rel = gl[order] == np.asarray(query_labels)[:, None]
    return RetrievalReport(
        cmc(rel, max_rank), mean_average_precision(rel), int(order.shape[0]), int(order.shape[1])
    )


def query_gallery_split(ds: Dataset, queries_per_class: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """First ``queries_per_class`` samples of each class are queries, the rest gallery."""
    is_query = np.zeros(len(ds), dtype=bool)
    for k in range(ds.K):
        idx = np.flatnonzero(ds.labels == k)
        is_query[idx[:queries_per_class]] = True
    return np.flatnonzero(is_query), np.flatnonzero(~is_query & ds.labeled_mask)


def intra_class_variance(features, labels) -> float:
    """Mean over classes of the mean squared distance to the class mean."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels).reshape(-1)
    classes = np.unique(labels)
    if classes.size == 0:
        raise InputError("no classes")
    vals = []
    for k in classes:
        f = features[labels == k]
        vals.append(np.mean(np.sum((f - f.mean(axis=0)) ** 2, axis=1)))
    return float(np.mean(vals))


def pseudo_label_accuracy(assigned, provenance) -> float:
    """Fraction of assignments equal to provenance; 2-D ``assigned`` is reduced by argmax."""
    a = np.asarray(assigned)
    if provenance is None:
        raise InputError("provenance missing")
    prov = np.asarray(provenance).reshape(-1)
    if a.ndim == 2:
        a = np.argmax(a, axis=1)
    if a.shape[0] != prov.shape[0]:
        raise InputError(f"{a.shape[0]} assignments but {prov.shape[0]} provenance entries")
    if np.any(prov < 0):
        raise InputError("provenance missing for some samples")
    if a.size == 0:
        raise InputError("no samples")
    return float(np.mean(a == prov))
