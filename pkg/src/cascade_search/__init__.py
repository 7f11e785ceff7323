"""Tiered text-image retrieval with lazy reranking and exact cost accounting.

A collection is embedded once with a cheap encoder; queries rank all
documents against it and progressively rerank shrinking candidate
prefixes with more expensive encoders, whose embeddings materialize
lazily and persist for the engine's lifetime. A cost ledger records
exactly which documents each tier encoded, realizing the closed-form
lifetime cost model in :mod:`cascade_search.costs`.
"""

from .costs import (
    CostParams,
    estimate_f,
    lifetime_cost,
    query_speedup,
    solve_intermediate_m,
    two_level_speedup,
)
from .engine import (
    CascadeConfig,
    CascadeEngine,
    CostLedger,
    LevelCharge,
    LifetimeReport,
    QueryResult,
)
from .errors import (
    CascadeSearchError,
    ConfigError,
    CorruptLogError,
    DataError,
    FormatError,
    InfeasibleTargetError,
    StorageError,
    UnknownDocError,
    UnknownQueryError,
    ValidationError,
)
from .evaluation import (
    ExperimentReport,
    GroundTruthPairs,
    RecallReport,
    Workload,
    generate_workload,
    recall_at_k,
    run_experiment,
)
from .ranking import RankedList, rank, rank_arrays, top_m
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
from .tiers import (
    FileBackedTier,
    QueryEmbedding,
    Tier,
    TruncationTier,
    calibrate_costs,
    make_truncation_family,
)

__version__ = "0.1.0"

__all__ = [
    "CascadeConfig",
    "CascadeEngine",
    "CascadeSearchError",
    "CacheLog",
    "ConfigError",
    "CorruptLogError",
    "CostLedger",
    "CostParams",
    "DataError",
    "EmbeddingMatrix",
    "ExperimentReport",
    "FileBackedTier",
    "FormatError",
    "GroundTruthPairs",
    "InfeasibleTargetError",
    "LevelCharge",
    "LevelInfo",
    "LifetimeReport",
    "QueryEmbedding",
    "QueryResult",
    "RankedList",
    "RecallReport",
    "SparseLevelCache",
    "StorageError",
    "StoreManifest",
    "Tier",
    "TruncationTier",
    "UnknownDocError",
    "UnknownQueryError",
    "ValidationError",
    "Workload",
    "calibrate_costs",
    "collection_fingerprint",
    "estimate_f",
    "generate_workload",
    "lifetime_cost",
    "make_truncation_family",
    "query_speedup",
    "rank",
    "rank_arrays",
    "read_matrix",
    "recall_at_k",
    "run_experiment",
    "solve_intermediate_m",
    "top_m",
    "two_level_speedup",
    "write_matrix",
]
