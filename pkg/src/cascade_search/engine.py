"""Tiered search end to end: build, query with lazy rerank fills, account.

Build encodes the whole collection once with the cheapest tier and
persists it as the level-0 matrix. Each query ranks all documents at
level 0, then for every deeper level j encodes the current top m_j
candidates that are still missing from that level's cache (charging
their tier cost exactly once per document per lifetime, cache fills are
logged to disk) and reranks the prefix with that level's vectors and
text embedding. The final top-k therefore comes out of the most refined
level, while the ledger tracks precisely which documents each level ever
encoded.

State directory layout: ``manifest.json``, ``level0.csc`` (full matrix),
``level<j>.csl`` (append-only cache log per runtime level),
``ledger.json`` (cost counters snapshot).
"""

from __future__ import annotations

import base64
import json
import shutil
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CascadeSearchError,
    FormatError,
    StorageError,
    ValidationError,
)
from .ranking import RankedList, rank_arrays, top_m
from .store import (
    CacheLog,
    EmbeddingMatrix,
    LevelInfo,
    SparseLevelCache,
    StoreManifest,
    collection_fingerprint,
    read_matrix,
    write_matrix,
)
from .tiers import Tier

MANIFEST_FILE = "manifest.json"
LEDGER_FILE = "ledger.json"
LEVEL0_FILE = "level0.csc"
LOCK_FILE = "lock"


def _log_file(level_id: int) -> str:
    return f"level{level_id}.csl"


@dataclass(frozen=True)
class CascadeConfig:
    """An ordered tier stack plus its candidate budgets.

    tiers[0] is the build-time encoder; m[j-1] is how many top-ranked
    documents tier j reranks. m must decrease strictly and the final
    output size may not exceed the last level's budget, so every
    returned rank has been refined by the most expensive tier.
    """

    tiers: tuple[Tier, ...]
    m: tuple[int, ...]
    f_assumed: float = 0.1
    output_k: int = 1

    def __post_init__(self) -> None:
        if not self.tiers:
            raise ValidationError("at least one tier required")
        if len(self.m) != len(self.tiers) - 1:
            raise ValidationError(
                f"{len(self.m)} m values for {len(self.tiers) - 1} rerank tiers"
            )
        if any(v < 1 for v in self.m):
            raise ValidationError("m values must be positive")
        if any(b >= a for a, b in zip(self.m, self.m[1:])):
            raise ValidationError(f"m not strictly decreasing: {list(self.m)}")
        if not 0 < self.f_assumed <= 1:
            raise ValidationError(f"f_assumed must be in (0, 1], got {self.f_assumed}")
        if self.output_k < 1:
            raise ValidationError(f"output_k must be positive, got {self.output_k}")
        if self.m and self.output_k > self.m[-1]:
            raise ValidationError(
                f"output_k={self.output_k} exceeds final budget m_r={self.m[-1]}"
            )

    @property
    def r(self) -> int:
        return len(self.tiers) - 1

    @property
    def costs(self) -> tuple[float, ...]:
        return tuple(t.cost for t in self.tiers)


class CostLedger:
    """Exact per-level encoder accounting across the engine's lifetime.

    Counts encode_image invocations charged per level and the sets of
    documents each level ever reranked. The charged count always equals
    the touched-set size, because lazy fills charge once per document.
    """

    def __init__(self, n: int, level_ids: Iterable[int]):
        self.n = int(n)
        self.q = 0
        self.counts: dict[int, int] = {int(l): 0 for l in level_ids}
        self.touched: dict[int, set[int]] = {int(l): set() for l in self.counts}
        self.touched_union: set[int] = set()
        self._lock = threading.Lock()

    def charge_build(self, level_id: int, doc_ids: Iterable[int]) -> None:
        with self._lock:
            ids = {int(d) for d in doc_ids}
            self.touched[level_id] |= ids
            self.counts[level_id] = len(self.touched[level_id])

    def record_query(self, prefixes: dict[int, frozenset[int]]) -> None:
        """Absorb one query's rerank prefixes.

        prefixes maps level id -> ids that entered that level's candidate
        prefix. Newly touched ids are charged (count == touched size).
        """
        with self._lock:
            self.q += 1
            for level_id, ids in prefixes.items():
                self.touched[level_id] |= ids
                self.counts[level_id] = len(self.touched[level_id])
                self.touched_union |= ids

    def total_cost(self, costs_by_level: dict[int, float]):
        with self._lock:
            return sum(self.counts[l] * costs_by_level[l] for l in sorted(self.counts))

    def snapshot(self) -> dict:
        """Cheap comparable view (no bitmaps); used to assert read-only paths."""
        with self._lock:
            return {
                "q": self.q,
                "counts": dict(self.counts),
                "touched": {l: len(s) for l, s in self.touched.items()},
                "union": len(self.touched_union),
            }

    def to_json(self, doc_order: np.ndarray) -> dict:
        def bitmap(ids: set[int]) -> str:
            mask = np.isin(doc_order, np.fromiter(ids, dtype=np.uint64, count=len(ids)))
            return base64.b64encode(np.packbits(mask).tobytes()).decode("ascii")

        with self._lock:
            return {
                "n": self.n,
                "q": self.q,
                "counts": {str(l): c for l, c in self.counts.items()},
                "touched_cardinalities": {str(l): len(s) for l, s in self.touched.items()},
                "touched_bitmaps": {str(l): bitmap(s) for l, s in self.touched.items()},
                "touched_union_bitmap": bitmap(self.touched_union),
            }

    @classmethod
    def from_json(cls, data: dict, doc_order: np.ndarray) -> "CostLedger":
        def unbitmap(encoded: str) -> set[int]:
            raw = np.frombuffer(base64.b64decode(encoded), dtype=np.uint8)
            mask = np.unpackbits(raw, count=len(doc_order)).astype(bool)
            return {int(d) for d in doc_order[mask]}

        try:
            ledger = cls(int(data["n"]), [int(l) for l in data["counts"]])
            ledger.q = int(data["q"])
            for key, encoded in data["touched_bitmaps"].items():
                level = int(key)
                ledger.touched[level] = unbitmap(encoded)
                ledger.counts[level] = int(data["counts"][key])
            ledger.touched_union = unbitmap(data["touched_union_bitmap"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed ledger snapshot: {exc}") from exc
        return ledger


@dataclass(frozen=True)
class LevelCharge:
    level_id: int
    new_encodings: int
    cost_units: float


@dataclass(frozen=True, eq=False)
class QueryResult:
    """Top-k items of one query plus what it newly charged per level."""

    items: RankedList
    charges: tuple[LevelCharge, ...]

    def to_json(self) -> dict:
        return {
            "results": [[i, s] for i, s in self.items.items],
            "cost_charged": [
                [c.level_id, c.new_encodings, c.cost_units] for c in self.charges
            ],
        }


@dataclass(frozen=True)
class LifetimeReport:
    """Realized vs modeled lifetime encoding cost."""

    q: int
    n: int
    invocations: dict[int, int]
    touched: dict[int, int]
    f_assumed: float
    f_realized: float
    total_cost: float
    model_cost: float

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "n": self.n,
            "invocations": {str(l): c for l, c in sorted(self.invocations.items())},
            "touched": {str(l): c for l, c in sorted(self.touched.items())},
            "f_assumed": self.f_assumed,
            "f_realized": self.f_realized,
            "total_cost": self.total_cost,
            "model_cost": self.model_cost,
        }


class CascadeEngine:
    """A built tier stack over one document collection, with persistence."""

    def __init__(
        self,
        config: CascadeConfig,
        state_dir: Path,
        manifest: StoreManifest,
        level0: EmbeddingMatrix,
        caches: dict[int, SparseLevelCache],
        logs: dict[int, CacheLog],
        ledger: CostLedger,
    ):
        self.config = config
        self.state_dir = Path(state_dir)
        self.manifest = manifest
        self.level0 = level0
        self.caches = caches
        self.logs = logs
        self.ledger = ledger
        self._save_lock = threading.Lock()
        # level 0 is ranked on every query; keep the double-precision copy
        self._level0_f64 = level0.vectors.astype(np.float64)

    @property
    def n(self) -> int:
        return self.level0.count

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def build(
        cls,
        collection: Sequence[int] | np.ndarray,
        config: CascadeConfig,
        state_dir: str | Path,
        force: bool = False,
    ) -> "CascadeEngine":
        """Encode the whole collection with tier 0 and persist fresh state.

        Refuses to clobber an existing state directory unless forced.
        """
        state_dir = Path(state_dir)
        if (state_dir / MANIFEST_FILE).exists():
            if not force:
                raise ValidationError(f"state exists at {state_dir}; use force to rebuild")
            for child in state_dir.iterdir():
                if child.name == LOCK_FILE:
                    continue  # held by the caller
                if child.is_dir():
                    shutil.rmtree(child)
                else:
                    child.unlink()
        state_dir.mkdir(parents=True, exist_ok=True)

        tier0 = config.tiers[0]
        doc_ids = np.ascontiguousarray(collection, dtype=np.uint64)
        rows = np.empty((len(doc_ids), tier0.image_dim), dtype=np.float32)
        for i, doc_id in enumerate(doc_ids):
            try:
                rows[i] = tier0.encode_image(int(doc_id))
            except CascadeSearchError as exc:
                raise type(exc)(f"build failed encoding doc {int(doc_id)}: {exc}") from exc
        level0 = EmbeddingMatrix.from_rows(0, doc_ids, rows)
        write_matrix(level0, state_dir / LEVEL0_FILE)

        levels = [LevelInfo(0, "full", tier0.image_dim, LEVEL0_FILE)]
        caches: dict[int, SparseLevelCache] = {}
        logs: dict[int, CacheLog] = {}
        for j in range(1, len(config.tiers)):
            tier = config.tiers[j]
            logs[j] = CacheLog.create(state_dir / _log_file(j), j, tier.image_dim)
            caches[j] = SparseLevelCache(j, tier.image_dim)
            levels.append(LevelInfo(j, "sparse", tier.image_dim, _log_file(j)))

        manifest = StoreManifest(
            n=len(doc_ids),
            levels=tuple(levels),
            fingerprint=collection_fingerprint(doc_ids),
        )
        manifest.save(state_dir / MANIFEST_FILE)

        ledger = CostLedger(len(doc_ids), range(len(config.tiers)))
        ledger.charge_build(0, (int(d) for d in doc_ids))
        engine = cls(config, state_dir, manifest, level0, caches, logs, ledger)
        engine.save_ledger()
        return engine

    @classmethod
    def open(
        cls,
        config: CascadeConfig,
        state_dir: str | Path,
        expected_collection: Sequence[int] | np.ndarray | None = None,
    ) -> "CascadeEngine":
        """Reload persisted state; cache logs replay into warm caches.

        When the caller knows which collection it expects (from its own
        config), passing it catches caches built over a different one.
        """
        state_dir = Path(state_dir)
        manifest = StoreManifest.load(state_dir / MANIFEST_FILE)
        if len(manifest.levels) != len(config.tiers):
            raise ValidationError(
                f"state has {len(manifest.levels)} levels but config has "
                f"{len(config.tiers)} tiers"
            )
        level0 = read_matrix(state_dir / LEVEL0_FILE)
        if manifest.fingerprint != collection_fingerprint(level0.doc_ids):
            raise ValidationError("manifest fingerprint does not match level-0 matrix")
        if expected_collection is not None:
            expected = collection_fingerprint(
                np.ascontiguousarray(expected_collection, dtype=np.uint64)
            )
            if expected != manifest.fingerprint:
                raise ValidationError(
                    "state was built over a different collection than the "
                    "config describes (fingerprint mismatch)"
                )
        caches: dict[int, SparseLevelCache] = {}
        logs: dict[int, CacheLog] = {}
        for info, tier in zip(manifest.levels, config.tiers):
            if info.dim != tier.image_dim:
                raise ValidationError(
                    f"level {info.level_id} stored dim {info.dim} does not match "
                    f"tier dim {tier.image_dim}"
                )
            if info.level_id == 0:
                continue
            log = CacheLog.open(state_dir / info.path)
            logs[info.level_id] = log
            caches[info.level_id] = log.replay()

        ledger_path = state_dir / LEDGER_FILE
        if ledger_path.exists():
            try:
                data = json.loads(ledger_path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise StorageError(f"cannot read ledger {ledger_path}: {exc}") from exc
            ledger = CostLedger.from_json(data, level0.doc_ids)
        else:
            ledger = CostLedger(level0.count, range(len(config.tiers)))
            ledger.charge_build(0, (int(d) for d in level0.doc_ids))
        # cache logs are the authority for runtime levels: a crash between a
        # log append and the ledger snapshot must not double-charge later
        for level_id, cache in caches.items():
            ids = cache.ids()
            ledger.touched[level_id] = set(ids)
            ledger.counts[level_id] = len(ids)
            ledger.touched_union |= ids
        return cls(config, state_dir, manifest, level0, caches, logs, ledger)

    def save_ledger(self) -> None:
        with self._save_lock:
            payload = json.dumps(self.ledger.to_json(self.level0.doc_ids))
            tmp = self.state_dir / (LEDGER_FILE + ".tmp")
            try:
                tmp.write_text(payload + "\n")
                tmp.replace(self.state_dir / LEDGER_FILE)
            except OSError as exc:
                raise StorageError(f"cannot write ledger: {exc}") from exc

    # -- queries -----------------------------------------------------------

    def _resolve_k(self, k: int | None) -> int:
        if k is None:
            k = self.config.output_k
        if k < 1:
            raise ValidationError(f"k must be positive, got {k}")
        if self.config.m and k > self.config.m[-1]:
            raise ValidationError(
                f"k={k} exceeds final budget m_r={self.config.m[-1]}"
            )
        return k

    def _cascade(
        self, query_key: str, k: int, record: bool
    ) -> tuple[RankedList, tuple[LevelCharge, ...]]:
        config = self.config
        top = rank_arrays(
            self.level0.doc_ids,
            self._level0_f64,
            config.tiers[0].encode_text(query_key).vector,
        )
        charges: list[LevelCharge] = []
        prefixes: dict[int, frozenset[int]] = {}
        for j in range(1, len(config.tiers)):
            tier = config.tiers[j]
            cache = self.caches[j]
            prefix = top_m(top, config.m[j - 1])
            vectors = np.empty((len(prefix), tier.image_dim), dtype=np.float32)
            fresh: list[tuple[int, np.ndarray]] = []
            for row, doc_id in enumerate(prefix.ids):
                doc_id = int(doc_id)
                if record:
                    vec, inserted = cache.get_or_insert(
                        doc_id, lambda d=doc_id: tier.encode_image(d)
                    )
                    if inserted:
                        fresh.append((doc_id, vec))
                else:
                    vec = cache.get(doc_id)
                    if vec is None:
                        vec = tier.encode_image(doc_id)
                vectors[row] = vec
            if fresh:
                self.logs[j].append_many(fresh)
            prefixes[j] = prefix.id_set()
            charges.append(LevelCharge(j, len(fresh), len(fresh) * tier.cost))
            top = rank_arrays(
                prefix.ids, vectors, tier.encode_text(query_key).vector
            )
        if record:
            self.ledger.record_query(prefixes)
            self.save_ledger()
        return top_m(top, k), tuple(charges)

    def query(self, query_key: str, k: int | None = None) -> QueryResult:
        """Run one query, filling caches and charging the ledger persistently."""
        k = self._resolve_k(k)
        items, charges = self._cascade(query_key, k, record=True)
        return QueryResult(items=items, charges=charges)

    def evaluate_query(self, query_key: str, k: int | None = None) -> QueryResult:
        """Read-only query: identical ranking, but never mutates caches,
        logs, or ledger; missing vectors are computed transiently."""
        k = self._resolve_k(k)
        items, _ = self._cascade(query_key, k, record=False)
        return QueryResult(items=items, charges=())

    def probe_prefix(self, query_key: str) -> frozenset[int]:
        """Ids this query would push into the first rerank prefix (read-only)."""
        if self.config.r == 0:
            return frozenset()
        top = rank_arrays(
            self.level0.doc_ids,
            self._level0_f64,
            self.config.tiers[0].encode_text(query_key).vector,
        )
        return top_m(top, self.config.m[0]).id_set()

    # -- reporting ---------------------------------------------------------

    def lifetime_report(self) -> LifetimeReport:
        config = self.config
        costs = {l: config.tiers[l].cost for l in range(len(config.tiers))}
        snap = self.ledger.snapshot()
        total = sum(snap["counts"][l] * costs[l] for l in sorted(snap["counts"]))
        runtime_sum = sum(costs[l] for l in range(1, len(config.tiers)))
        model = self.n * costs[0] + config.f_assumed * self.n * runtime_sum
        f_realized = snap["union"] / self.n if self.n else 0.0
        return LifetimeReport(
            q=snap["q"],
            n=self.n,
            invocations=snap["counts"],
            touched=snap["touched"],
            f_assumed=config.f_assumed,
            f_realized=f_realized,
            total_cost=total,
            model_cost=model,
        )
