"""Seeded synthetic collections for desk-scale experiments and tests.

Documents are random unit vectors; queries are the same documents
perturbed with Gaussian noise and renormalized, so every query has a
known correct answer and retrieval difficulty is tunable through the
noise scale.
"""

from __future__ import annotations

import numpy as np

from .evaluation import GroundTruthPairs
from .store import EmbeddingMatrix


def random_unit_matrix(
    n: int, dim: int, seed: int, level_id: int = 0, first_id: int = 1
) -> EmbeddingMatrix:
    """n random unit rows with consecutive doc ids starting at first_id."""
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, dim))
    if n:
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    ids = np.arange(first_id, first_id + n, dtype=np.uint64)
    return EmbeddingMatrix.from_rows(level_id, ids, rows.astype(np.float32))


def perturbed_queries(
    ground_truth: EmbeddingMatrix, noise: float, seed: int
) -> tuple[dict[str, np.ndarray], GroundTruthPairs]:
    """One query per document: the document plus Gaussian noise, renormalized.

    Returns the query-vector mapping (keyed by the document id as a
    string) and the matching ground-truth pairs.
    """
    rng = np.random.default_rng(seed)
    vecs = ground_truth.vectors.astype(np.float64)
    noisy = vecs + noise * rng.standard_normal(vecs.shape)
    noisy /= np.linalg.norm(noisy, axis=1, keepdims=True)
    noisy = noisy.astype(np.float32)
    query_vectors = {
        str(int(doc_id)): noisy[i] for i, doc_id in enumerate(ground_truth.doc_ids)
    }
    pairs = tuple(
        (str(int(doc_id)), int(doc_id)) for doc_id in ground_truth.doc_ids
    )
    truth = GroundTruthPairs(
        pairs=pairs, collection=frozenset(int(d) for d in ground_truth.doc_ids)
    )
    return query_vectors, truth


def queries_matrix(
    query_vectors: dict[str, np.ndarray], dim: int, level_id: int = 0
) -> EmbeddingMatrix:
    """Pack a query-vector mapping into a matrix keyed by integer caption id."""
    keys = sorted(query_vectors, key=int)
    rows = np.stack([query_vectors[k] for k in keys]) if keys else np.empty((0, dim))
    ids = np.array([int(k) for k in keys], dtype=np.uint64)
    return EmbeddingMatrix.from_rows(level_id, ids, rows.astype(np.float32))
