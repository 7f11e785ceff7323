"""Tour of the closed-form cost algebra.

Demonstrates: lifetime cost, the 2-level break-even condition, cold-query
speedup of deep cascades, and sizing the middle level for a target speedup.
"""

from cascade_search import (
    CostParams,
    lifetime_cost,
    query_speedup,
    solve_intermediate_m,
    two_level_speedup,
)


def main():
    print("Lifetime cost")
    print("=" * 60)
    for f in (0.05, 0.1, 0.5, 1.0):
        cost = lifetime_cost(CostParams(n=100_000, f=f, t=(1.0, 4.3)))
        print(f"  n=100k, t=(1, 4.3), f={f:<5} -> {cost:>12,.0f} units")

    print("\n2-level break-even: cheaper iff t_s + f*t_1 < t_1")
    print("=" * 60)
    t_1 = 1.0
    for t_s in (0.1, 0.2125, 0.5, 0.95):
        ratio = two_level_speedup(t_s, t_1, 0.1)
        note = "cascade wins" if ratio > 1 else "cascade loses"
        print(f"  t_s/t_1={t_s:<7} f=0.1 -> speedup {ratio:5.2f}x  ({note})")

    print("\nCold-query speedup of a 3-level stack over the 2-level one")
    print("=" * 60)
    for m2 in (25, 10, 5, 1):
        ratio = query_speedup([50, m2], [1.0, 3.3])
        print(f"  m=[50, {m2:>2}], t=[1, 3.3] -> {ratio:.2f}x")

    print("\nSizing the middle level for a 2x target")
    print("=" * 60)
    m2 = solve_intermediate_m(50, 2, 1.0, 3.3)
    achieved = query_speedup([50, m2], [1.0, 3.3])
    print(f"  m1=50, t1/t2 = 1/3.3 -> m2 = {m2}, achieved {achieved:.3f}x")


if __name__ == "__main__":
    main()
