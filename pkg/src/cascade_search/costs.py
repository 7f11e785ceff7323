"""Closed-form cost algebra for tiered retrieval.

All functions do plain Python arithmetic, so exact inputs (ints,
Fractions) give exact outputs; floats behave as usual. Costs are
abstract units per image encoding.

Conventions: ``t`` lists tier costs cheapest-first, ``t[0]`` being the
build-time tier; ``m`` lists candidate counts per runtime level,
strictly decreasing. The lifetime return fraction ``f`` is the share of
the collection that runtime levels ever encode.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Sequence

from .errors import InfeasibleTargetError, ValidationError


@dataclass(frozen=True)
class CostParams:
    """Inputs to the lifetime cost formula."""

    n: int
    f: Real
    t: tuple[Real, ...]
    m: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValidationError("n must be non-negative")
        if not 0 < self.f <= 1:
            raise ValidationError(f"f must be in (0, 1], got {self.f}")
        if not self.t:
            raise ValidationError("at least one tier cost required")
        if any(c <= 0 for c in self.t):
            raise ValidationError("tier costs must be positive")
        if any(b <= a for a, b in zip(self.t, self.t[1:])):
            raise ValidationError(f"tier costs not strictly increasing: {list(self.t)}")
        if self.m:
            if len(self.m) != len(self.t) - 1:
                raise ValidationError(
                    f"{len(self.m)} m values for {len(self.t) - 1} runtime tiers"
                )
            if any(v < 1 for v in self.m):
                raise ValidationError("m values must be positive")
            if any(b >= a for a, b in zip(self.m, self.m[1:])):
                raise ValidationError(f"m not strictly decreasing: {list(self.m)}")


def lifetime_cost(params: CostParams):
    """Total image-encoding cost over the engine's lifetime.

    Build pass encodes all n documents with the cheapest tier; each
    runtime tier eventually encodes the returned fraction f of the
    collection: n*t[0] + f*n*sum(t[1:]).
    """
    runtime = sum(params.t[1:])
    return params.n * params.t[0] + params.f * params.n * runtime


def two_level_speedup(t_s, t_1, f):
    """Lifetime cost ratio of the single expensive tier over the 2-level stack.

    Returns t_1 / (t_s + f*t_1); the cascade is cheaper iff this exceeds 1,
    equivalently iff t_s + f*t_1 < t_1.
    """
    if not (0 < t_s < t_1):
        raise ValidationError(f"need 0 < t_s < t_1, got t_s={t_s}, t_1={t_1}")
    if not 0 < f <= 1:
        raise ValidationError(f"f must be in (0, 1], got {f}")
    return t_1 / (t_s + f * t_1)


def query_speedup(m: Sequence[int], t: Sequence) -> float:
    """Cache-cold latency factor of the deep cascade over the 2-level one.

    ``m`` and ``t`` cover runtime levels only. The 2-level baseline runs
    the most expensive encoder on all m[0] candidates; the deep cascade
    spends sum(m_i * t_i): ratio m[0]*t[-1] / sum(m_i*t_i).
    """
    if len(m) != len(t):
        raise ValidationError(f"{len(m)} m values but {len(t)} costs")
    if len(m) < 1:
        raise ValidationError("at least one runtime level required")
    if any(v < 1 for v in m):
        raise ValidationError("m values must be positive")
    if any(b >= a for a, b in zip(m, m[1:])):
        raise ValidationError(f"m not strictly decreasing: {list(m)}")
    if any(c <= 0 for c in t):
        raise ValidationError("costs must be positive")
    denom = sum(mi * ti for mi, ti in zip(m, t))
    return m[0] * t[-1] / denom


def solve_intermediate_m(m_1: int, target_speedup, t_1, t_2) -> int:
    """Candidate count for a middle level that hits a target query speedup.

    Solves m[0]*t_2 / (m[0]*t_1 + m_2*t_2) = s for m_2, i.e.
    m_2 = m_1*(1/s - t_1/t_2), rounded half-up and clamped to [1, m_1-1].
    """
    if m_1 < 2:
        raise ValidationError(f"m_1 must be at least 2, got {m_1}")
    if not target_speedup > 1:
        raise ValidationError(f"target speedup must exceed 1, got {target_speedup}")
    if not (0 < t_1 < t_2):
        raise ValidationError(f"need 0 < t_1 < t_2, got t_1={t_1}, t_2={t_2}")
    raw = m_1 * (1 / target_speedup - t_1 / t_2)
    if raw <= 0:
        raise InfeasibleTargetError(
            f"target speedup {target_speedup} implies m_2 = {raw} <= 0; "
            f"the cost ratio t_2/t_1 caps the speedup at {t_2 / t_1}"
        )
    rounded = int(raw + Fraction(1, 2))  # half-up; raw > 0 so int() floors
    return max(1, min(rounded, m_1 - 1))


def estimate_f(ledger) -> float:
    """Realized lifetime return fraction: |union of touched ids| / n."""
    n = ledger.n
    if n == 0:
        raise ValidationError("cannot estimate f for an empty collection")
    return len(ledger.touched_union) / n
