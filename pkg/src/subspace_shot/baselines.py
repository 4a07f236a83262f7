"""Inductive reference classifiers: nearest class mean and cosine matching.

Both predict each query column independently from per-class prototypes
(the mean of that class's support embeddings).  Tie-breaking mirrors the
factorization solver (lowest class index wins) so accuracy differences
between methods come from scores, not conventions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import EpisodeMatrices
from .linalg import as_matrix


@dataclass
class PrototypeSet:
    """dim x n_classes matrix, column c = mean support embedding of class c."""

    prototypes: np.ndarray

    def __post_init__(self) -> None:
        self.prototypes = as_matrix(self.prototypes, "prototypes")

    @property
    def n_classes(self) -> int:
        return self.prototypes.shape[1]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[0]


def fit_prototypes(ep: EpisodeMatrices) -> PrototypeSet:
    """Per-class mean of the support columns."""
    protos = np.empty((ep.dim, ep.n_classes))
    for c in range(ep.n_classes):
        cols = ep.support_embeddings[:, ep.support_labels == c]
        if cols.shape[1] == 0:
            raise ValueError(f"class {c} has no support columns")
        protos[:, c] = cols.mean(axis=1)
    return PrototypeSet(protos)


def _check_queries(ps: PrototypeSet, queries) -> np.ndarray:
    q = as_matrix(queries, "queries")
    if q.shape[0] != ps.dim:
        raise ValueError(
            f"queries have dimension {q.shape[0]}, prototypes have {ps.dim}"
        )
    return q


def predict_euclidean(ps: PrototypeSet, queries) -> np.ndarray:
    """Class of the nearest prototype in squared Euclidean distance.

    Ties resolve to the lowest class index.
    """
    q = _check_queries(ps, queries)
    # (n_classes, n_queries) table of squared distances, computed directly
    # so that crafted exact ties stay exact
    diff = ps.prototypes[:, :, None] - q[:, None, :]
    dist_sq = np.einsum("pcu,pcu->cu", diff, diff)
    return np.argmin(dist_sq, axis=0).astype(np.int64)


def predict_cosine(ps: PrototypeSet, queries) -> np.ndarray:
    """Class of the prototype with the highest cosine similarity.

    Zero-norm prototypes are rejected; a zero-norm query column gets class 0
    by convention.  Ties resolve to the lowest class index.
    """
    q = _check_queries(ps, queries)
    proto_norms = np.linalg.norm(ps.prototypes, axis=0)
    if (proto_norms == 0.0).any():
        bad = int(np.flatnonzero(proto_norms == 0.0)[0])
        raise ValueError(f"prototype {bad} has zero norm; cosine similarity undefined")
    query_norms = np.linalg.norm(q, axis=0)
    safe_norms = np.where(query_norms > 0.0, query_norms, 1.0)
    sims = (ps.prototypes.T @ q) / (proto_norms[:, None] * safe_norms[None, :])
    labels = np.argmax(sims, axis=0).astype(np.int64)
    labels[query_norms == 0.0] = 0
    return labels
