"""Recall@k evaluation plus a workload generator for cost experiments.

Recall runs against caption-to-image ground truth in the engine's
read-only mode, so measuring quality never pollutes the cost ledger.
The workload generator produces a seeded query sequence whose executed
union of rerank prefixes lands near a requested lifetime return
fraction; it works by pilot-probing caption prefixes and growing a
popularity-skewed caption pool until the union is close enough.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import costs
from .engine import CascadeEngine, LifetimeReport
from .errors import (
    DataError,
    InfeasibleTargetError,
    StorageError,
    ValidationError,
)
from .ranking import RankedList


@dataclass(frozen=True)
class GroundTruthPairs:
    """Caption key -> correct document id, over a known collection."""

    pairs: tuple[tuple[str, int], ...]
    collection: frozenset[int]

    def __post_init__(self) -> None:
        keys = [k for k, _ in self.pairs]
        if len(set(keys)) != len(keys):
            raise ValidationError("caption keys must be unique")
        missing = [d for _, d in self.pairs if d not in self.collection]
        if missing:
            raise ValidationError(
                f"{len(missing)} ground-truth ids missing from collection, "
                f"first: {missing[0]}"
            )

    @property
    def caption_keys(self) -> list[str]:
        return [k for k, _ in self.pairs]

    @classmethod
    def from_tsv(cls, path: str | Path, collection: frozenset[int]) -> "GroundTruthPairs":
        """Read `caption_key<TAB>doc_id` rows; a header row is optional."""
        pairs: list[tuple[str, int]] = []
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise StorageError(f"cannot read ground truth {path}: {exc}") from exc
        for line_no, row in enumerate(csv.reader(io.StringIO(text), delimiter="\t"), 1):
            if not row or (line_no == 1 and row[0] == "caption_key"):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{line_no}: expected 2 columns, got {len(row)}")
            try:
                pairs.append((row[0], int(row[1])))
            except ValueError:
                raise DataError(f"{path}:{line_no}: doc id {row[1]!r} is not an integer") from None
        return cls(pairs=tuple(pairs), collection=collection)

    def to_tsv(self, path: str | Path) -> None:
        lines = ["caption_key\tdoc_id"]
        lines += [f"{key}\t{doc_id}" for key, doc_id in self.pairs]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class RecallReport:
    k_values: tuple[int, ...]
    recall: dict[int, float]
    query_count: int
    config: dict

    def __post_init__(self) -> None:
        values = [self.recall[k] for k in sorted(self.k_values)]
        if any(not 0 <= v <= 1 for v in values):
            raise ValidationError(f"recall values outside [0, 1]: {values}")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValidationError(f"recall not non-decreasing in k: {values}")

    def to_json(self) -> dict:
        return {
            "k_values": list(self.k_values),
            "recall": {str(k): self.recall[k] for k in self.k_values},
            "query_count": self.query_count,
            "config": self.config,
        }

    def to_csv_row(self, dataset: str, method: str, speedup: float | None = None) -> str:
        """One row of the dataset/method/R@k/speedup table layout."""
        cells = [dataset, method]
        cells += [f"{100 * self.recall[k]:.1f}" for k in self.k_values]
        cells.append("" if speedup is None else f"{speedup:.1f}x")
        return ",".join(cells)


def recall_at_k(
    results: Mapping[str, RankedList],
    truth: GroundTruthPairs,
    ks: Sequence[int],
) -> RecallReport:
    """Fraction of captions whose correct image sits in the top-k results."""
    if not ks or any(k < 1 for k in ks):
        raise ValidationError(f"invalid k values: {list(ks)}")
    if not truth.pairs:
        raise ValidationError("ground truth is empty")
    max_k = max(ks)
    n = len(truth.collection)
    hits = {k: 0 for k in ks}
    for caption, correct_id in truth.pairs:
        if caption not in results:
            raise DataError(f"no results for caption {caption!r}")
        ranked = results[caption]
        if len(ranked) < max_k and len(ranked) != n:
            raise ValidationError(
                f"results for {caption!r} have {len(ranked)} items; "
                f"need at least {max_k} (or the full collection)"
            )
        ids = ranked.ids
        for k in ks:
            if correct_id in ids[:k]:
                hits[k] += 1
    total = len(truth.pairs)
    return RecallReport(
        k_values=tuple(ks),
        recall={k: hits[k] / total for k in ks},
        query_count=total,
        config={},
    )


@dataclass(frozen=True)
class Workload:
    """A seeded query sequence realizing a target return fraction."""

    queries: tuple[str, ...]
    pool: tuple[str, ...]
    pilot_f: float
    target_f: float


def generate_workload(
    engine: CascadeEngine,
    truth: GroundTruthPairs,
    target_f: float,
    seed: int,
    num_queries: int | None = None,
    zipf_exponent: float = 1.0,
    rel_tol: float = 0.2,
) -> Workload:
    """Build a query sequence whose realized return fraction ~= target_f.

    Captions get a seeded popularity order; prefix pools grow one caption
    at a time while pilot probes (read-only) accumulate the union of
    their rerank prefixes. The pool whose union is closest to target_f*n
    wins; if even the best is off by more than rel_tol relative, the
    target is infeasible for this geometry. The emitted sequence covers
    the pool once, then samples it with a Zipf-like weight, so executing
    it realizes exactly the pilot-measured union.
    """
    if not 0 < target_f <= 1:
        raise ValidationError(f"target_f must be in (0, 1], got {target_f}")
    if engine.config.r == 0:
        raise InfeasibleTargetError("no rerank levels: nothing is ever touched")
    if engine.n == 0:
        raise ValidationError("empty collection")
    if not truth.pairs:
        raise ValidationError("ground truth is empty")

    rng = np.random.default_rng(seed)
    captions = truth.caption_keys
    order = rng.permutation(len(captions))
    ordered = [captions[i] for i in order]

    target = target_f * engine.n
    union: set[int] = set()
    best_p, best_size, best_err = 0, 0, float("inf")
    for p, key in enumerate(ordered, start=1):
        union |= engine.probe_prefix(key)
        err = abs(len(union) - target)
        if err < best_err:
            best_p, best_size, best_err = p, len(union), err
        if len(union) >= target:
            break

    pilot_f = best_size / engine.n
    if abs(pilot_f - target_f) > rel_tol * target_f:
        raise InfeasibleTargetError(
            f"closest achievable return fraction is {pilot_f:.4f} "
            f"(pool of {best_p} captions), outside {target_f} +/- {rel_tol:.0%}"
        )

    pool = ordered[:best_p]
    count = num_queries if num_queries is not None else max(4 * best_p, 20)
    if count < best_p:
        raise ValidationError(
            f"num_queries={count} cannot cover the pool of {best_p} captions"
        )
    weights = 1.0 / np.arange(1, best_p + 1, dtype=np.float64) ** zipf_exponent
    weights /= weights.sum()
    first_pass = [pool[i] for i in rng.permutation(best_p)]
    draws = rng.choice(best_p, size=count - best_p, p=weights)
    queries = tuple(first_pass + [pool[i] for i in draws])
    return Workload(
        queries=queries, pool=tuple(pool), pilot_f=pilot_f, target_f=target_f
    )


@dataclass(frozen=True)
class ExperimentReport:
    recall: RecallReport
    lifetime: LifetimeReport
    speedups: dict

    def to_json(self) -> dict:
        return {
            "recall": self.recall.to_json(),
            "lifetime": self.lifetime.to_json(),
            "speedups": self.speedups,
        }


def run_experiment(
    engine: CascadeEngine,
    truth: GroundTruthPairs,
    workload: Sequence[str],
    ks: Sequence[int] = (1, 5, 10),
) -> ExperimentReport:
    """Execute a workload, then measure recall without touching the ledger.

    The workload mutates caches and the ledger; the subsequent recall
    sweep over all captions runs read-only. Reports include the realized
    and model-predicted lifetime speedups over the uncascaded most
    expensive tier, and the cache-cold query speedup for deep cascades.
    """
    config = engine.config
    max_k = max(ks)
    if config.m and max_k > config.m[-1]:
        raise ValidationError(
            f"recall at k={max_k} needs m_r >= {max_k}, got {config.m[-1]}"
        )
    for key in workload:
        engine.query(key)

    results = {
        caption: engine.evaluate_query(caption, k=max_k).items
        for caption in truth.caption_keys
    }
    recall = recall_at_k(results, truth, ks)
    recall = RecallReport(
        k_values=recall.k_values,
        recall=recall.recall,
        query_count=recall.query_count,
        config={
            "m": list(config.m),
            "costs": list(config.costs),
            "f_assumed": config.f_assumed,
            "output_k": config.output_k,
        },
    )

    lifetime = engine.lifetime_report()
    tier_costs = config.costs
    speedups: dict[str, float] = {}
    if config.r >= 1 and engine.n > 0:
        baseline = engine.n * tier_costs[-1]
        speedups["lifetime_realized"] = baseline / lifetime.total_cost
        speedups["lifetime_model"] = tier_costs[-1] / (
            tier_costs[0] + config.f_assumed * sum(tier_costs[1:])
        )
        speedups["query_cold"] = costs.query_speedup(config.m, tier_costs[1:])
    else:
        speedups["lifetime_realized"] = 1.0
        speedups["lifetime_model"] = 1.0
        speedups["query_cold"] = 1.0
    return ExperimentReport(recall=recall, lifetime=lifetime, speedups=speedups)
