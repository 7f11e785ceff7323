"""Shared fixtures and the plain-python cascade oracle used across tests."""

import numpy as np

from cascade_search.engine import CascadeConfig, CascadeEngine
from cascade_search.synthetic import perturbed_queries, random_unit_matrix
from cascade_search.tiers import make_truncation_family


def reference_cascade(ids, level_vectors, level_queries, m, k):
    """Brute-force trace of the tiered search loop.

    Ranks with sorted() over per-candidate double dots; independent of
    the engine's vectorized path. level_vectors[j] maps doc id -> vector
    for level j; level_queries[j] is that level's query embedding.
    """

    def order(cands, vecs, q):
        q64 = np.asarray(q, dtype=np.float64)
        return sorted(
            cands,
            key=lambda c: (-float(np.dot(np.asarray(vecs[c], np.float64), q64)), c),
        )

    top = order(list(ids), level_vectors[0], level_queries[0])
    for j in range(1, len(level_vectors)):
        prefix = top[: m[j - 1]]
        top = order(prefix, level_vectors[j], level_queries[j])
    return top[:k]


def synthetic_engine(
    state_dir,
    n,
    dim,
    widths,
    costs,
    m,
    output_k,
    noise=0.3,
    seed=0,
    f_assumed=0.1,
):
    """Build a truncation-tier engine over a random collection."""
    gt = random_unit_matrix(n, dim, seed)
    query_vectors, truth = perturbed_queries(gt, noise, seed + 1000)
    tiers = make_truncation_family(gt, widths, costs, query_vectors)
    config = CascadeConfig(
        tiers=tuple(tiers), m=tuple(m), f_assumed=f_assumed, output_k=output_k
    )
    engine = CascadeEngine.build(gt.doc_ids, config, state_dir)
    return engine, gt, query_vectors, truth


def tier_view(tier, ids):
    """Materialize {id: vector} for one tier, for oracle comparisons."""
    return {int(i): tier.encode_image(int(i)) for i in ids}
