"""Realize a target lifetime return fraction and compare model vs ledger.

Demonstrates: the workload generator's pilot-and-pool mechanism, executing
the workload, and how the realized speedup tracks the closed form at the
realized return fraction.
"""

import tempfile
from pathlib import Path

from cascade_search import (
    CascadeConfig,
    CascadeEngine,
    estimate_f,
    generate_workload,
    make_truncation_family,
    two_level_speedup,
)
from cascade_search.synthetic import perturbed_queries, random_unit_matrix


def main():
    n, dim = 2000, 64
    ground_truth = random_unit_matrix(n, dim, seed=1)
    query_vectors, truth = perturbed_queries(ground_truth, noise=0.3, seed=2)
    t_s, t_1 = 1.0, 4.3
    tiers = make_truncation_family(
        ground_truth, widths=[8, 64], costs=[t_s, t_1], query_vectors=query_vectors
    )
    config = CascadeConfig(tiers=tuple(tiers), m=(50,), f_assumed=0.1, output_k=10)

    with tempfile.TemporaryDirectory() as workdir:
        engine = CascadeEngine.build(ground_truth.doc_ids, config, Path(workdir) / "state")

        workload = generate_workload(engine, truth, target_f=0.1, seed=11)
        print(f"workload: {len(workload.queries)} queries over a pool of "
              f"{len(workload.pool)} captions")
        print(f"pilot-measured return fraction: {workload.pilot_f:.3f} "
              f"(target {workload.target_f})")

        for key in workload.queries:
            engine.query(key)

        report = engine.lifetime_report()
        f_hat = estimate_f(engine.ledger)
        print(f"\nexecuted: q={report.q}, realized f = {f_hat:.3f}")
        print(f"ledger cost {report.total_cost:,.0f} vs model {report.model_cost:,.0f}")

        baseline = n * t_1  # encode everything with the expensive tier once
        realized_speedup = baseline / report.total_cost
        closed_form = two_level_speedup(t_s, t_1, f_hat)
        print(f"\nlifetime speedup over the uncascaded wide tier:")
        print(f"  from the ledger: {realized_speedup:.2f}x")
        print(f"  closed form at realized f: {closed_form:.2f}x")


if __name__ == "__main__":
    main()
