"""Engine config files: TOML describing one deployment of the engine.

A config names the collection manifest, the ordered tier specs, the
candidate budgets m, the assumed return fraction, output size, seed and
state directory. Paths are resolved relative to the file that mentions
them; the state directory can be overridden with the
CASCADE_SEARCH_STATE_DIR environment variable.

Example::

    state_dir = "state"
    m = [50, 10]
    f_assumed = 0.1
    output_k = 10
    seed = 7
    collection = "collection.json"

    [[tiers]]
    kind = "synthetic-truncation"
    width = 16
    cost = 1.0

    [[tiers]]
    kind = "file-backed"
    images = "b16_images.csc"
    texts = "b16_texts.csc"
    cost = 4.3

The collection manifest is JSON: ``{"kind": "synthetic",
"ground_truth": "gt.csc", "queries": "queries.csc"}`` for truncation
tiers, or ``{"kind": "file"}`` when tier 0's image matrix defines the
collection.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .engine import CascadeConfig
from .errors import ConfigError
from .store import EmbeddingMatrix, read_matrix
from .tiers import FileBackedTier, Tier, TruncationTier

STATE_DIR_ENV = "CASCADE_SEARCH_STATE_DIR"


@dataclass(frozen=True, eq=False)
class LoadedConfig:
    """A parsed config with tiers constructed and sources loaded."""

    config_path: Path
    state_dir: Path
    seed: int
    cascade: CascadeConfig
    collection_ids: np.ndarray


def _require(table: Mapping, key: str, where: str):
    if key not in table:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return table[key]


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _load_matrix(path: Path, where: str) -> EmbeddingMatrix:
    if not path.exists():
        raise ConfigError(f"{where}: referenced path does not exist: {path}")
    return read_matrix(path)


def load_config(path: str | Path, env: Mapping[str, str] | None = None) -> LoadedConfig:
    """Parse and validate a config file, loading every referenced matrix."""
    env = os.environ if env is None else env
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    base = path.parent
    where = str(path)

    manifest_path = _resolve(base, str(_require(data, "collection", where)))
    if not manifest_path.exists():
        raise ConfigError(f"{where}: collection manifest does not exist: {manifest_path}")
    try:
        collection = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse collection manifest {manifest_path}: {exc}") from exc
    kind = _require(collection, "kind", str(manifest_path))
    if kind not in ("synthetic", "file"):
        raise ConfigError(f"{manifest_path}: unknown collection kind {kind!r}")

    ground_truth = None
    query_vectors: dict[str, np.ndarray] = {}
    if kind == "synthetic":
        gt_path = _resolve(
            manifest_path.parent, str(_require(collection, "ground_truth", str(manifest_path)))
        )
        ground_truth = _load_matrix(gt_path, str(manifest_path))
        queries_path = _resolve(
            manifest_path.parent, str(_require(collection, "queries", str(manifest_path)))
        )
        queries = _load_matrix(queries_path, str(manifest_path))
        query_vectors = {
            str(int(cid)): queries.vectors[i] for i, cid in enumerate(queries.doc_ids)
        }

    tier_tables = _require(data, "tiers", where)
    if not isinstance(tier_tables, list) or not tier_tables:
        raise ConfigError(f"{where}: tiers must be a non-empty array of tables")
    tiers: list[Tier] = []
    for idx, table in enumerate(tier_tables):
        t_where = f"{where}: tiers[{idx}]"
        t_kind = _require(table, "kind", t_where)
        cost = float(_require(table, "cost", t_where))
        if t_kind == "synthetic-truncation":
            if ground_truth is None:
                raise ConfigError(
                    f"{t_where}: synthetic tier needs a synthetic collection manifest"
                )
            tiers.append(
                TruncationTier(
                    tier_id=idx,
                    cost=cost,
                    width=int(_require(table, "width", t_where)),
                    ground_truth=ground_truth,
                    query_vectors=query_vectors,
                )
            )
        elif t_kind == "file-backed":
            images = _load_matrix(
                _resolve(base, str(_require(table, "images", t_where))), t_where
            )
            texts = None
            if "texts" in table:
                texts = _load_matrix(_resolve(base, str(table["texts"])), t_where)
            tiers.append(
                FileBackedTier(tier_id=idx, cost=cost, images=images, texts=texts)
            )
        else:
            raise ConfigError(f"{t_where}: unknown tier kind {t_kind!r}")

    if kind == "synthetic":
        collection_ids = np.array(ground_truth.doc_ids, dtype=np.uint64)
    else:
        tier0 = tiers[0]
        if not isinstance(tier0, FileBackedTier):
            raise ConfigError(f"{where}: file collection requires a file-backed tier 0")
        collection_ids = np.array(tier0.images.doc_ids, dtype=np.uint64)
    for tier in tiers:
        if isinstance(tier, FileBackedTier):
            have = set(int(d) for d in tier.images.doc_ids)
            missing = [int(d) for d in collection_ids if int(d) not in have]
            if missing:
                raise ConfigError(
                    f"{where}: tier {tier.tier_id} image matrix is missing "
                    f"{len(missing)} collection ids, first: {missing[0]}"
                )

    m = data.get("m", [])
    if not isinstance(m, list) or not all(isinstance(v, int) for v in m):
        raise ConfigError(f"{where}: m must be a list of integers")
    try:
        cascade = CascadeConfig(
            tiers=tuple(tiers),
            m=tuple(m),
            f_assumed=float(data.get("f_assumed", 0.1)),
            output_k=int(data.get("output_k", 1)),
        )
    except Exception as exc:
        raise ConfigError(f"{where}: {exc}") from exc

    state_dir = env.get(STATE_DIR_ENV) or str(_require(data, "state_dir", where))
    return LoadedConfig(
        config_path=path,
        state_dir=_resolve(base, state_dir),
        seed=int(data.get("seed", 0)),
        cascade=cascade,
        collection_ids=collection_ids,
    )
