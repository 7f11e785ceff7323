"""Build a tiered index over a synthetic collection and watch lazy reranking.

Demonstrates: building the level-0 matrix, querying through a cheap->
expensive tier stack, cache fills being charged exactly once, and the
lifetime cost report.
"""

import tempfile
from pathlib import Path

from cascade_search import CascadeConfig, CascadeEngine, make_truncation_family
from cascade_search.synthetic import perturbed_queries, random_unit_matrix


def main():
    print("Tiered search walkthrough")
    print("=" * 60)

    n, dim = 400, 64
    ground_truth = random_unit_matrix(n, dim, seed=7)
    query_vectors, truth = perturbed_queries(ground_truth, noise=0.35, seed=8)

    # cheap 8-wide tier at build time, full-width tier reranks the top 20
    tiers = make_truncation_family(
        ground_truth, widths=[8, 64], costs=[1.0, 4.0], query_vectors=query_vectors
    )
    config = CascadeConfig(tiers=tuple(tiers), m=(20,), f_assumed=0.1, output_k=5)

    with tempfile.TemporaryDirectory() as workdir:
        engine = CascadeEngine.build(ground_truth.doc_ids, config, Path(workdir) / "state")
        print(f"built: {engine.n} documents, {len(config.tiers)} tiers")
        print(f"build cost: {engine.lifetime_report().total_cost:.0f} units\n")

        caption = truth.pairs[0][0]
        first = engine.query(caption)
        print(f"query {caption!r} (cold):")
        for doc_id, score in first.items.items:
            print(f"  doc {doc_id:4d}  score {score:+.4f}")
        for charge in first.charges:
            print(
                f"  level {charge.level_id}: {charge.new_encodings} new encodings, "
                f"{charge.cost_units:.0f} cost units"
            )

        second = engine.query(caption)
        print(f"\nsame query again (warm): "
              f"{sum(c.new_encodings for c in second.charges)} new encodings")

        for key, _ in truth.pairs[1:30]:
            engine.query(key)
        report = engine.lifetime_report()
        print("\nafter 31 queries:")
        print(f"  per-level encodings: {report.invocations}")
        print(f"  realized return fraction: {report.f_realized:.3f} "
              f"(assumed {report.f_assumed})")
        print(f"  realized cost {report.total_cost:.0f} vs "
              f"model {report.model_cost:.0f} units")


if __name__ == "__main__":
    main()
