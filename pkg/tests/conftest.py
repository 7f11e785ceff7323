"""Shared on-disk fixtures for CLI-level tests."""

import json

import pytest

from cascade_search.store import write_matrix
from cascade_search.synthetic import (
    perturbed_queries,
    queries_matrix,
    random_unit_matrix,
)


@pytest.fixture
def workspace(tmp_path):
    """A ready-to-build synthetic deployment: matrices, manifest, config, truth."""
    n, dim = 30, 16
    gt = random_unit_matrix(n, dim, seed=11)
    query_vectors, truth = perturbed_queries(gt, noise=0.05, seed=12)
    write_matrix(gt, tmp_path / "gt.csc")
    write_matrix(queries_matrix(query_vectors, dim), tmp_path / "queries.csc")
    truth.to_tsv(tmp_path / "truth.tsv")
    (tmp_path / "collection.json").write_text(
        json.dumps(
            {"kind": "synthetic", "ground_truth": "gt.csc", "queries": "queries.csc"}
        )
    )
    (tmp_path / "config.toml").write_text(
        """
state_dir = "state"
m = [8]
f_assumed = 0.1
output_k = 5
seed = 7
collection = "collection.json"

[[tiers]]
kind = "synthetic-truncation"
width = 4
cost = 1.0

[[tiers]]
kind = "synthetic-truncation"
width = 16
cost = 3.0
"""
    )
    (tmp_path / "flat.toml").write_text(
        """
state_dir = "flat_state"
m = []
f_assumed = 0.1
output_k = 5
collection = "collection.json"

[[tiers]]
kind = "synthetic-truncation"
width = 16
cost = 1.0
"""
    )
    return tmp_path
