"""End-to-end engine behavior: build, cascade queries, ledger, persistence."""

import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from cascade_search.engine import CascadeConfig, CascadeEngine
from cascade_search.errors import ValidationError
from cascade_search.ranking import rank
from cascade_search.store import EmbeddingMatrix, read_matrix
from cascade_search.synthetic import perturbed_queries, random_unit_matrix
from cascade_search.tiers import make_truncation_family

from helpers import reference_cascade, synthetic_engine, tier_view


class TestConfigValidation:
    def _tiers(self, r):
        gt = random_unit_matrix(8, 16, seed=0)
        widths = [2 * (i + 1) for i in range(r + 1)]
        costs = [float(i + 1) for i in range(r + 1)]
        return tuple(make_truncation_family(gt, widths, costs, {}))

    def test_m_must_decrease(self):
        with pytest.raises(ValidationError, match="strictly decreasing"):
            CascadeConfig(tiers=self._tiers(2), m=(10, 10), output_k=1)

    def test_m_length_must_match(self):
        with pytest.raises(ValidationError, match="m values"):
            CascadeConfig(tiers=self._tiers(1), m=(10, 5), output_k=1)

    def test_output_k_bounded_by_last_budget(self):
        with pytest.raises(ValidationError, match="output_k"):
            CascadeConfig(tiers=self._tiers(1), m=(5,), output_k=6)

    def test_f_assumed_range(self):
        with pytest.raises(ValidationError, match="f_assumed"):
            CascadeConfig(tiers=self._tiers(0), m=(), f_assumed=0.0)


class TestBuild:
    def test_four_docs_builds_matrix_and_charges(self, tmp_path):
        engine, gt, _, _ = synthetic_engine(
            tmp_path / "s", n=4, dim=8, widths=[4, 8], costs=[1.0, 3.0], m=(2,), output_k=2
        )
        stored = read_matrix(tmp_path / "s" / "level0.csc")
        assert stored.count == 4
        report = engine.lifetime_report()
        assert report.invocations[0] == 4
        assert report.total_cost == 4.0

    def test_empty_collection(self, tmp_path):
        engine, _, _, _ = synthetic_engine(
            tmp_path / "s", n=0, dim=8, widths=[8], costs=[1.0], m=(), output_k=1
        )
        assert engine.n == 0
        assert engine.lifetime_report().total_cost == 0

    def test_unit_cost_build(self, tmp_path):
        engine, _, _, _ = synthetic_engine(
            tmp_path / "s", n=100, dim=8, widths=[8], costs=[1.0], m=(), output_k=1
        )
        assert engine.lifetime_report().total_cost == 100.0

    def test_refuses_existing_state(self, tmp_path):
        synthetic_engine(
            tmp_path / "s", n=4, dim=8, widths=[8], costs=[1.0], m=(), output_k=1
        )
        gt = random_unit_matrix(4, 8, seed=0)
        config = CascadeConfig(
            tiers=tuple(make_truncation_family(gt, [8], [1.0], {})), m=(), output_k=1
        )
        with pytest.raises(ValidationError, match="state exists"):
            CascadeEngine.build(gt.doc_ids, config, tmp_path / "s")
        CascadeEngine.build(gt.doc_ids, config, tmp_path / "s", force=True)


class TestQueryCascade:
    def test_r0_equals_full_ranking(self, tmp_path):
        n = 30
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=n, dim=16, widths=[16], costs=[1.0], m=(), output_k=n
        )
        key = str(int(gt.doc_ids[5]))
        got = engine.query(key)
        tier = engine.config.tiers[0]
        expected = rank(
            [int(i) for i in gt.doc_ids],
            tier_view(tier, gt.doc_ids),
            tier.encode_text(key).vector,
        )
        assert np.array_equal(got.items.ids, expected.ids)
        assert np.array_equal(got.items.scores, expected.scores)
        assert got.charges == ()

    def test_repeat_query_charges_nothing(self, tmp_path):
        engine, gt, _, _ = synthetic_engine(
            tmp_path / "s", n=40, dim=16, widths=[4, 16], costs=[1.0, 3.0], m=(8,), output_k=3
        )
        key = str(int(gt.doc_ids[0]))
        first = engine.query(key)
        assert sum(c.new_encodings for c in first.charges) == 8
        second = engine.query(key)
        assert all(c.new_encodings == 0 for c in second.charges)
        assert all(c.cost_units == 0 for c in second.charges)
        assert np.array_equal(first.items.ids, second.items.ids)

    def test_hand_traced_rerank_flip(self, tmp_path):
        # 4-doc fixture where the top-2 rerank inverts the level-0 order;
        # expectations frozen from reference_cascade (see oracle test below)
        rows = np.array(
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.8, 0.0, 0.6, 0.0],
                [0.6, 0.8, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
            ],
            dtype=np.float32,
        )
        gt = EmbeddingMatrix.from_rows(0, [1, 2, 3, 4], rows)
        query_vectors = {"q": np.array([0.6, 0.0, 0.8, 0.0], dtype=np.float32)}
        tiers = make_truncation_family(gt, [2, 4], [1.0, 3.0], query_vectors)
        config = CascadeConfig(tiers=tuple(tiers), m=(2,), output_k=2)
        engine = CascadeEngine.build(gt.doc_ids, config, tmp_path / "s")

        got = engine.query("q")
        assert [int(i) for i in got.items.ids] == [2, 1]
        assert got.charges == (type(got.charges[0])(1, 2, 6.0),)

        # the oracle agrees with the frozen trace
        level_vectors = [tier_view(tiers[0], [1, 2, 3, 4]), tier_view(tiers[1], [1, 2, 3, 4])]
        level_queries = [t.encode_text("q").vector for t in tiers]
        assert reference_cascade([1, 2, 3, 4], level_vectors, level_queries, [2], 2) == [2, 1]
        # and level-0 alone would have ranked doc 1 first (tie broken by id)
        level0_only = reference_cascade([1, 2, 3, 4], level_vectors[:1], level_queries[:1], [], 2)
        assert level0_only == [1, 2]

    def test_matches_oracle_on_random_fixtures(self, tmp_path):
        for seed in range(8):
            n, dim = 25, 32
            engine, gt, qv, truth = synthetic_engine(
                tmp_path / f"s{seed}",
                n=n,
                dim=dim,
                widths=[4, 12, 32],
                costs=[1.0, 2.0, 4.0],
                m=(10, 5),
                output_k=5,
                seed=seed,
            )
            tiers = engine.config.tiers
            level_vectors = [tier_view(t, gt.doc_ids) for t in tiers]
            for key in list(qv)[:6]:
                level_queries = [t.encode_text(key).vector for t in tiers]
                expected = reference_cascade(
                    [int(i) for i in gt.doc_ids], level_vectors, level_queries, [10, 5], 5
                )
                got = engine.query(key)
                assert [int(i) for i in got.items.ids] == expected

    def test_exhaustive_equivalence_m1_equals_n(self, tmp_path):
        n = 60
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=n, dim=16, widths=[4, 16], costs=[1.0, 3.0],
            m=(n,), output_k=n, seed=3,
        )
        tier1 = engine.config.tiers[1]
        for key in list(qv)[:5]:
            got = engine.query(key)
            expected = rank(
                [int(i) for i in gt.doc_ids],
                tier_view(tier1, gt.doc_ids),
                tier1.encode_text(key).vector,
            )
            assert np.array_equal(got.items.ids, expected.ids)

    def test_prefix_set_invariance(self, tmp_path):
        # reranking the last level permutes a fixed prefix: the id SET of the
        # final top-m_r equals the shorter cascade's top-m_r
        m_r = 5
        for seed in range(6):
            gt = random_unit_matrix(40, 32, seed=seed)
            qv, _ = perturbed_queries(gt, 0.4, seed + 99)
            tiers = make_truncation_family(gt, [4, 12, 32], [1, 2, 4], qv)
            deep = CascadeEngine.build(
                gt.doc_ids,
                CascadeConfig(tiers=tuple(tiers), m=(12, m_r), output_k=m_r),
                tmp_path / f"deep{seed}",
            )
            shallow = CascadeEngine.build(
                gt.doc_ids,
                CascadeConfig(tiers=tuple(tiers[:2]), m=(12,), output_k=m_r),
                tmp_path / f"shallow{seed}",
            )
            for key in list(qv)[:5]:
                assert (
                    deep.query(key).items.id_set()
                    == shallow.query(key).items.id_set()
                )

    def test_m1_larger_than_n_clamps(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=6, dim=8, widths=[4, 8], costs=[1, 3], m=(50,), output_k=4
        )
        got = engine.query(str(int(gt.doc_ids[0])))
        assert len(got.items) == 4
        assert got.charges[0].new_encodings == 6  # whole collection filled

    def test_output_k_beyond_n_returns_all(self, tmp_path):
        engine, gt, _, _ = synthetic_engine(
            tmp_path / "s", n=3, dim=8, widths=[4, 8], costs=[1, 3], m=(10,), output_k=8
        )
        got = engine.query(str(int(gt.doc_ids[0])))
        assert len(got.items) == 3

    def test_k_override_beyond_last_budget_rejected(self, tmp_path):
        engine, gt, _, _ = synthetic_engine(
            tmp_path / "s", n=20, dim=8, widths=[4, 8], costs=[1, 3], m=(5,), output_k=2
        )
        with pytest.raises(ValidationError, match="exceeds final budget"):
            engine.query(str(int(gt.doc_ids[0])), k=6)


class TestLedger:
    def test_formula_agreement_exact(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=50, dim=32, widths=[4, 12, 32], costs=[1.0, 3.0, 10.0],
            m=(10, 4), output_k=2, seed=5,
        )
        for key in list(qv)[:12]:
            engine.query(key)
        report = engine.lifetime_report()
        expected = (
            engine.n * 1.0
            + report.touched[1] * 3.0
            + report.touched[2] * 10.0
        )
        assert report.total_cost == expected
        assert report.invocations == report.touched

    def test_single_query_touched_sets_are_budgets(self, tmp_path):
        # n=100, t=(1,3,10), one query: touched sets are exactly (10, 4)
        engine, gt, _, _ = synthetic_engine(
            tmp_path / "s", n=100, dim=16, widths=[4, 8, 16], costs=[1.0, 3.0, 10.0],
            m=(10, 4), output_k=2, seed=6,
        )
        engine.query(str(int(gt.doc_ids[0])))
        report = engine.lifetime_report()
        assert report.touched[1] == 10
        assert report.touched[2] == 4
        assert report.total_cost == 100 * 1 + 10 * 3 + 4 * 10  # 170

    def test_monotone_touched_sets(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=40, dim=16, widths=[4, 16], costs=[1, 3], m=(6,), output_k=2
        )
        previous_union: set = set()
        previous_counts = {1: 0}
        for key in list(qv)[:15]:
            engine.query(key)
            snap = engine.ledger.snapshot()
            assert engine.ledger.touched_union >= previous_union
            assert snap["counts"][1] >= previous_counts[1]
            previous_union = set(engine.ledger.touched_union)
            previous_counts = dict(snap["counts"])

    def test_touched_union_matches_level1(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=40, dim=16, widths=[4, 8, 16], costs=[1, 2, 4],
            m=(8, 3), output_k=2,
        )
        for key in list(qv)[:10]:
            engine.query(key)
        assert engine.ledger.touched_union == engine.ledger.touched[1]

    def test_before_any_query(self, tmp_path):
        engine, _, _, _ = synthetic_engine(
            tmp_path / "s", n=25, dim=8, widths=[4, 8], costs=[1, 3], m=(5,), output_k=2
        )
        report = engine.lifetime_report()
        assert report.f_realized == 0
        assert report.total_cost == 25.0
        assert report.q == 0


class TestPersistence:
    def test_charge_once_across_restarts(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=30, dim=16, widths=[4, 16], costs=[1, 3], m=(6,), output_k=2
        )
        keys = list(qv)[:8]
        for key in keys:
            engine.query(key)
        before = engine.ledger.snapshot()

        reopened = CascadeEngine.open(engine.config, tmp_path / "s")
        assert reopened.ledger.snapshot() == before
        for key in keys:
            result = reopened.query(key)
            assert all(c.new_encodings == 0 for c in result.charges)
        after = reopened.ledger.snapshot()
        assert after["counts"] == before["counts"]
        assert after["union"] == before["union"]
        assert after["q"] == before["q"] + len(keys)

    def test_ledger_snapshot_round_trip(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=20, dim=8, widths=[4, 8], costs=[1, 3], m=(4,), output_k=2
        )
        for key in list(qv)[:5]:
            engine.query(key)
        data = json.loads((tmp_path / "s" / "ledger.json").read_text())
        from cascade_search.engine import CostLedger

        back = CostLedger.from_json(data, engine.level0.doc_ids)
        assert back.snapshot() == engine.ledger.snapshot()
        assert back.touched == engine.ledger.touched

    def test_open_rejects_wrong_collection(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=10, dim=8, widths=[8], costs=[1.0], m=(), output_k=1
        )
        other = random_unit_matrix(10, 8, seed=77, first_id=500)
        tiers = make_truncation_family(other, [8], [1.0], {})
        config = CascadeConfig(tiers=tuple(tiers), m=(), output_k=1)
        with pytest.raises(ValidationError, match="different collection"):
            CascadeEngine.open(config, tmp_path / "s", expected_collection=other.doc_ids)

    def test_open_rejects_dim_mismatch(self, tmp_path):
        engine, gt, _, _ = synthetic_engine(
            tmp_path / "s", n=10, dim=8, widths=[4, 8], costs=[1, 3], m=(4,), output_k=2
        )
        tiers = make_truncation_family(gt, [2, 8], [1, 3], {})
        config = CascadeConfig(tiers=tuple(tiers), m=(4,), output_k=2)
        with pytest.raises(ValidationError, match="dim"):
            CascadeEngine.open(config, tmp_path / "s")


class TestReadOnlyMode:
    def test_evaluate_query_leaves_no_trace(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=30, dim=16, widths=[4, 16], costs=[1, 3], m=(6,), output_k=3
        )
        engine.query(list(qv)[0])
        before = engine.ledger.snapshot()
        cache_sizes = {j: len(c) for j, c in engine.caches.items()}
        ledger_bytes = (tmp_path / "s" / "ledger.json").read_bytes()
        log_bytes = (tmp_path / "s" / "level1.csl").read_bytes()

        for key in list(qv)[:10]:
            engine.evaluate_query(key)

        assert engine.ledger.snapshot() == before
        assert {j: len(c) for j, c in engine.caches.items()} == cache_sizes
        assert (tmp_path / "s" / "ledger.json").read_bytes() == ledger_bytes
        assert (tmp_path / "s" / "level1.csl").read_bytes() == log_bytes

    def test_evaluate_matches_mutating_ranking(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=30, dim=16, widths=[4, 16], costs=[1, 3], m=(6,), output_k=3
        )
        key = list(qv)[3]
        ro = engine.evaluate_query(key)
        rw = engine.query(key)
        assert np.array_equal(ro.items.ids, rw.items.ids)
        assert np.array_equal(ro.items.scores, rw.items.scores)


class TestConcurrency:
    def test_parallel_queries_consistent(self, tmp_path):
        engine, gt, qv, _ = synthetic_engine(
            tmp_path / "s", n=60, dim=16, widths=[4, 16], costs=[1, 3], m=(8,), output_k=3
        )
        keys = list(qv)[:20] * 3
        serial, _, _, _ = synthetic_engine(
            tmp_path / "serial", n=60, dim=16, widths=[4, 16], costs=[1, 3], m=(8,), output_k=3
        )
        expected = {key: [int(i) for i in serial.query(key).items.ids] for key in set(keys)}

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda k: (k, engine.query(k)), keys))
        for key, result in results:
            assert [int(i) for i in result.items.ids] == expected[key]
        assert engine.ledger.snapshot()["counts"] == serial.ledger.snapshot()["counts"]
        assert engine.ledger.touched == serial.ledger.touched
        # charge-once held under contention: log has no conflicting duplicates
        reopened = CascadeEngine.open(engine.config, tmp_path / "s")
        assert reopened.ledger.snapshot()["counts"] == serial.ledger.snapshot()["counts"]
