"""Encoder tiers: a uniform face over cheap-to-expensive embedding sources.

A tier encodes images (documents) and texts (queries) into unit-norm
vectors of its own dimensionality and carries an abstract per-image cost
unit. Two kinds exist:

* truncation tiers, a desk-scale stand-in for progressively weaker
  models: keep the leading coordinates of a ground-truth embedding and
  renormalize;
* file-backed tiers that serve rows verbatim from exported embedding
  matrices (one for images, one for query texts).

Tiers are immutable and their encode operations are pure, so concurrent
use needs no coordination. Each tier pairs its own text encoder: real
encoder families do not share one text model across dimensionalities, so
query embeddings always come from the same tier that scores them.
"""

from __future__ import annotations

import abc
import statistics
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import UnknownDocError, UnknownQueryError, ValidationError
from .store import EmbeddingMatrix


@dataclass(frozen=True, eq=False)
class QueryEmbedding:
    """A text encoding produced by one tier; unit-norm in that tier's dim."""

    tier_id: int
    vector: np.ndarray


def _renormalize(vector: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not norm > 0:
        raise ValidationError(f"{what}: vector vanishes after truncation")
    return (v / norm).astype(np.float32)


class Tier(abc.ABC):
    """One encoder level: image and text encoding plus a declared cost."""

    tier_id: int
    kind: str
    cost: float

    @property
    @abc.abstractmethod
    def image_dim(self) -> int: ...

    @abc.abstractmethod
    def encode_image(self, doc_id: int) -> np.ndarray:
        """Unit-norm vector for a document; deterministic per id."""

    @abc.abstractmethod
    def encode_text(self, query_key: str) -> QueryEmbedding:
        """Unit-norm embedding of a query key; deterministic per key."""

    def _check_cost(self) -> None:
        if not self.cost > 0:
            raise ValidationError(f"tier {self.tier_id}: cost must be positive")


@dataclass(frozen=True, eq=False)
class TruncationTier(Tier):
    """Keeps the first ``width`` coordinates of ground truth, renormalized.

    With width equal to the ground-truth dimension this is exactly the
    identity, so the widest tier of a family reproduces ground truth.
    """

    tier_id: int
    cost: float
    width: int
    ground_truth: EmbeddingMatrix
    query_vectors: Mapping[str, np.ndarray]
    kind: str = field(default="synthetic-truncation", init=False)

    def __post_init__(self) -> None:
        self._check_cost()
        if not 1 <= self.width <= self.ground_truth.dim:
            raise ValidationError(
                f"tier {self.tier_id}: width {self.width} outside "
                f"[1, {self.ground_truth.dim}]"
            )

    @property
    def image_dim(self) -> int:
        return self.width

    def encode_image(self, doc_id: int) -> np.ndarray:
        row = self.ground_truth.row(doc_id)
        if self.width == self.ground_truth.dim:
            return row
        return _renormalize(row[: self.width], f"doc {int(doc_id)} at width {self.width}")

    def encode_text(self, query_key: str) -> QueryEmbedding:
        try:
            full = self.query_vectors[query_key]
        except KeyError:
            raise UnknownQueryError(f"unknown query key {query_key!r}") from None
        full = np.asarray(full, dtype=np.float64)
        if full.shape != (self.ground_truth.dim,):
            raise ValidationError(
                f"query {query_key!r}: expected dim {self.ground_truth.dim}, "
                f"got {full.shape}"
            )
        vec = _renormalize(full[: self.width], f"query {query_key!r} at width {self.width}")
        return QueryEmbedding(tier_id=self.tier_id, vector=vec)


@dataclass(frozen=True, eq=False)
class FileBackedTier(Tier):
    """Serves pre-exported embeddings verbatim.

    Image rows are keyed by doc id; text rows by caption id, so query
    keys must parse as integers.
    """

    tier_id: int
    cost: float
    images: EmbeddingMatrix
    texts: EmbeddingMatrix | None = None
    kind: str = field(default="file-backed", init=False)

    def __post_init__(self) -> None:
        self._check_cost()
        if self.texts is not None and self.texts.dim != self.images.dim:
            raise ValidationError(
                f"tier {self.tier_id}: text dim {self.texts.dim} != "
                f"image dim {self.images.dim}"
            )

    @property
    def image_dim(self) -> int:
        return self.images.dim

    def encode_image(self, doc_id: int) -> np.ndarray:
        return self.images.row(doc_id)

    def encode_text(self, query_key: str) -> QueryEmbedding:
        if self.texts is None:
            raise UnknownQueryError(
                f"tier {self.tier_id} has no text matrix; cannot encode queries"
            )
        try:
            caption_id = int(query_key)
        except ValueError:
            raise UnknownQueryError(
                f"query key {query_key!r} is not a caption id"
            ) from None
        try:
            row = self.texts.row(caption_id)
        except UnknownDocError:
            raise UnknownQueryError(f"unknown caption id {caption_id}") from None
        return QueryEmbedding(tier_id=self.tier_id, vector=row)


def make_truncation_family(
    ground_truth: EmbeddingMatrix,
    widths: Sequence[int],
    costs: Sequence[float],
    query_vectors: Mapping[str, np.ndarray],
) -> list[TruncationTier]:
    """Tier k truncates ground truth to widths[k]; widths and costs increase."""
    if len(widths) != len(costs):
        raise ValidationError(
            f"{len(widths)} widths but {len(costs)} costs"
        )
    if not widths:
        raise ValidationError("at least one tier required")
    if any(b <= a for a, b in zip(widths, widths[1:])):
        raise ValidationError(f"widths not strictly increasing: {list(widths)}")
    if widths[-1] > ground_truth.dim:
        raise ValidationError(
            f"width {widths[-1]} exceeds ground-truth dim {ground_truth.dim}"
        )
    if any(c <= 0 for c in costs):
        raise ValidationError("costs must be positive")
    if any(b <= a for a, b in zip(costs, costs[1:])):
        raise ValidationError(f"costs not increasing: {list(costs)}")
    return [
        TruncationTier(
            tier_id=k,
            cost=float(cost),
            width=int(width),
            ground_truth=ground_truth,
            query_vectors=query_vectors,
        )
        for k, (width, cost) in enumerate(zip(widths, costs))
    ]


def calibrate_costs(
    tiers: Sequence[Tier],
    sample_ids: Sequence[int],
    repetitions: int = 3,
) -> list[float]:
    """Measure per-image encode wall time and normalize to tier 0 = 1.

    Median over repetitions; non-deterministic by nature, meant only to
    fill cost units from real timings.
    """
    if not sample_ids:
        raise ValidationError("calibration needs at least one sample id")
    medians = []
    for tier in tiers:
        per_rep = []
        for _ in range(max(1, repetitions)):
            start = time.perf_counter()
            for doc_id in sample_ids:
                tier.encode_image(int(doc_id))
            per_rep.append((time.perf_counter() - start) / len(sample_ids))
        medians.append(statistics.median(per_rep))
    base = medians[0]
    if base <= 0:
        raise ValidationError("tier 0 timing was zero; increase the sample")
    return [m / base for m in medians]
