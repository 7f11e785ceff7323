"""Order candidates by cosine similarity with deterministic tie-breaking.

Vectors are unit-norm, so cosine similarity is a plain dot product.
Scores accumulate in double precision for rank stability near ties; ties
break by ascending doc id so identical inputs rank identically on every
platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import UnknownDocError, ValidationError


@dataclass(frozen=True, eq=False)
class RankedList:
    """Ordered (doc id, score) pairs, scores non-increasing."""

    ids: np.ndarray  # (k,) uint64
    scores: np.ndarray  # (k,) float64

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @property
    def items(self) -> list[tuple[int, float]]:
        return [(int(i), float(s)) for i, s in zip(self.ids, self.scores)]

    def id_set(self) -> frozenset[int]:
        return frozenset(int(i) for i in self.ids)

    def validate(self) -> None:
        if self.ids.shape != self.scores.shape:
            raise ValidationError("ids and scores lengths differ")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValidationError("duplicate doc ids in ranked list")
        if np.any(np.diff(self.scores) > 0):
            raise ValidationError("scores not non-increasing")
        for i in range(len(self.ids) - 1):
            if self.scores[i] == self.scores[i + 1] and self.ids[i] >= self.ids[i + 1]:
                raise ValidationError("tied scores not in ascending id order")


def rank_arrays(
    ids: np.ndarray, vectors: np.ndarray, query: np.ndarray
) -> RankedList:
    """Rank rows of ``vectors`` (aligned with ``ids``) against ``query``.

    This is the hot path shared by all levels of the cascade; the
    dict-based ``rank`` wraps it.
    """
    ids = np.ascontiguousarray(ids, dtype=np.uint64)
    if vectors.ndim != 2 or vectors.shape[0] != ids.shape[0]:
        raise ValidationError(
            f"vectors shape {vectors.shape} disagrees with {ids.shape[0]} candidates"
        )
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (vectors.shape[1],):
        raise ValidationError(
            f"dimension mismatch: query {query.shape} vs vectors {vectors.shape}"
        )
    scores = vectors.astype(np.float64, copy=False) @ query
    # lexsort: primary key scores descending, secondary key ids ascending
    order = np.lexsort((ids, -scores))
    return RankedList(ids=ids[order], scores=scores[order])


def rank(
    candidates: Sequence[int],
    vectors: Mapping[int, np.ndarray],
    query: np.ndarray,
) -> RankedList:
    """Sort candidates by dot(query, vectors[id]) descending, ids ascending on ties."""
    ids = np.fromiter((int(c) for c in candidates), dtype=np.uint64, count=len(candidates))
    if len(ids) == 0:
        return RankedList(
            ids=np.empty(0, dtype=np.uint64), scores=np.empty(0, dtype=np.float64)
        )
    dim = np.asarray(query).shape[0]
    mat = np.empty((len(ids), dim), dtype=np.float64)
    for row, doc_id in enumerate(ids):
        try:
            vec = vectors[int(doc_id)]
        except KeyError:
            raise UnknownDocError(f"no vector for candidate {int(doc_id)}") from None
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (dim,):
            raise ValidationError(
                f"dimension mismatch for candidate {int(doc_id)}: "
                f"{vec.shape} vs query ({dim},)"
            )
        mat[row] = vec
    return rank_arrays(ids, mat, query)


def top_m(ranked: RankedList, m: int) -> RankedList:
    """First min(m, len) items, order preserved; m beyond the end clamps."""
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    k = min(int(m), len(ranked))
    return RankedList(ids=ranked.ids[:k], scores=ranked.scores[:k])
