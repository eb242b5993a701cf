import unittest

import pytest

from housing_markets import experiments
from housing_markets.errors import ImprovementError, ModelError
from housing_markets.instances import STABLE_CONCEPTS, GenConfig, family, fixtures, generate
from housing_markets.market import is_improvement
from housing_markets.models import Concept, Formulation, Objective, ObjectiveKind


class TestPriceOfFairness(unittest.IsolatedAsyncioTestCase):
    async def test_core_loses_one_transplant_in_example1(self):
        market = fixtures()["example1"].market
        rows = await experiments.price_of_fairness([("example1", market)], [Formulation(concept=Concept.CORE)])
        self.assertEqual(len(rows), 1)
        row = rows[0]
        self.assertEqual((row.size, row.model, row.objective, row.feasible_count), (6, "core", "size", 1))
        assert row.mean_pct is not None
        self.assertAlmostEqual(row.mean_pct, 100 / 6)
        self.assertEqual(row.csv_row(), ["6", "core", "size", "16.666667", "1"])

    async def test_empty_concept_is_not_counted(self):
        market = fixtures()["sotomayor-wako"].market
        rows = await experiments.price_of_fairness(
            [("sw", market)], [Formulation(concept=Concept.STRONG_CORE), Formulation(concept=Concept.COMPETITIVE)]
        )
        self.assertEqual([r.feasible_count for r in rows], [0, 1])
        self.assertIsNone(rows[0].mean_pct)
        self.assertEqual(rows[0].csv_row()[3], "")

    async def test_stability_never_adds_transplants(self):
        markets = family([6, 7], 4, seed=11, edge_probability=0.35, ties=True)
        formulations = [Formulation(concept=c, k=k) for c in STABLE_CONCEPTS for k in (2, 3, None)]
        rows = await experiments.price_of_fairness(markets, formulations, workers=2)
        self.assertEqual(len(rows), 2 * len(formulations))
        for row in rows:
            with self.subTest(model=row.model, size=row.size):
                if row.mean_pct is not None:
                    self.assertGreaterEqual(row.mean_pct, 0.0)
        unbounded_core = [r for r in rows if r.model == "core"]
        self.assertTrue(all(r.feasible_count == 4 for r in unbounded_core))


class TestBlockingStats(unittest.IsolatedAsyncioTestCase):
    async def test_strong_core_has_no_weakly_blocking_cycles(self):
        market = fixtures()["example1"].market
        rows = await experiments.blocking_stats(
            [("example1", market)], [Formulation(concept=Concept.STRONG_CORE), Formulation()], length=3
        )
        strong, maximum = rows
        self.assertEqual(strong.mean_cycles, 0.0)
        self.assertEqual(strong.mean_improvable, 0.0)
        self.assertEqual(maximum.model, "max")
        assert maximum.mean_cycles is not None and maximum.mean_improvable is not None
        self.assertGreaterEqual(maximum.mean_cycles, 2.0)
        self.assertGreaterEqual(maximum.mean_improvable, 3.0)
        self.assertEqual([r.l for r in rows], [3, 3])
        self.assertEqual([r.limit_hits for r in rows], [0, 0])


class TestRunCells(unittest.IsolatedAsyncioTestCase):
    async def test_errors_map_to_none_and_order_is_kept(self):
        def broken() -> int:
            raise ModelError("no model")

        results = await experiments.run_cells([("b", lambda: 2), ("a", broken), ("c", lambda: 3)], workers=2)
        self.assertEqual(list(results), ["b", "a", "c"])
        self.assertEqual(results, {"b": 2, "a": None, "c": 3})


class TestRespectingImprovementExperiment(unittest.IsolatedAsyncioTestCase):
    async def test_family_records_match_single_audits(self):
        markets = [("pairwise1", fixtures()["pairwise1-R"].market), ("example1", fixtures()["example1"].market)]
        formulation = Formulation(k=2)
        records = await experiments.ri_experiment(markets, [formulation], workers=2)
        expected = [r for instance_id, m in markets for r in experiments.ri_audit(m, formulation, instance_id)]
        self.assertEqual(records, expected)
        self.assertTrue(any(r.violated and r.instance_id == "pairwise1" for r in records))


class TestRespectingImprovementAudit(unittest.TestCase):
    def test_maximum_size_pairs_violate(self):
        market = fixtures()["pairwise1-R"].market
        records = experiments.ri_audit(market, Formulation(k=2), "pairwise1", pairs=[(0, 2)])
        self.assertEqual(len(records), 1)
        record = records[0]
        self.assertEqual((record.step, record.rank_before, record.rank_after), (1, 1, 2))
        self.assertTrue(record.violated)
        self.assertIs(record.status, experiments.AuditStatus.OK)
        self.assertEqual(record.csv_row()[:5], ["pairwise1", "max-k2", "1", "3", "1"])

    def test_unbounded_maximum_size_violates(self):
        # agent 4 starts accepting object 3: agent 3 drops from donor 1 to donor 4
        market = fixtures()["intro-fig1-initial"].market
        records = experiments.ri_audit(market, Formulation(), pairs=[(2, 3)])
        self.assertEqual([(r.step, r.rank_before, r.rank_after, r.violated) for r in records], [(1, 1, 2, True)])

    def test_core_with_ties_violates(self):
        market = fixtures()["pairwise-ties-R"].market
        records = experiments.ri_audit(market, Formulation(concept=Concept.CORE, k=2), pairs=[(3, 0)])
        first = records[0]
        self.assertEqual((first.step, first.rank_before, first.rank_after), (1, 2, 3))
        self.assertTrue(first.violated)

    def test_bounded_core_on_strict_preferences_violates(self):
        market = fixtures()["proposition2-R"].market
        records = experiments.ri_audit(market, Formulation(concept=Concept.CORE, k=3), pairs=[(0, 7)])
        self.assertEqual([r.step for r in records], [1, 2, 3])
        self.assertTrue(any(r.violated for r in records))

    def test_bounded_concepts_lose_the_best_allotment(self):
        # agent 8 starts ranking object 1 first: agent 1 falls from object 2 to object 10
        before = fixtures()["proposition2-R"].market
        after = fixtures()["example6-Rb"].market
        self.assertTrue(is_improvement(before, after, 0))
        for concept in STABLE_CONCEPTS:
            with self.subTest(concept=concept):
                formulation = Formulation(concept=concept, k=3)
                self.assertEqual(experiments.best_rank(before, formulation, 0), 2)
                self.assertEqual(experiments.best_rank(after, formulation, 0), 3)
                record = experiments.audit_pair(before, after, formulation, 0, 7, "example6")
                self.assertEqual((record.rank_before, record.rank_after), (2, 3))
                self.assertTrue(record.violated)
                self.assertIs(record.status, experiments.AuditStatus.OK)
                self.assertEqual(record.csv_row()[:5], ["example6", f"{concept.value}-k3", "1", "8", "1"])

    def test_audit_pair_needs_an_improvement(self):
        before = fixtures()["proposition2-R"].market
        after = fixtures()["example6-Rb"].market
        with self.assertRaises(ImprovementError):
            experiments.audit_pair(after, before, Formulation(concept=Concept.CORE, k=3), 0, 7)

    def test_strong_core_admits_a_worse_allocation(self):
        # agent 3 starts accepting object 1: the best allotment of agent 1 stays, a worse one joins
        before = fixtures()["pairwise2-R"].market
        after = fixtures()["pairwise2-Rtilde"].market
        formulation = Formulation(concept=Concept.STRONG_CORE, k=2)
        record = experiments.audit_pair(before, after, formulation, 0, 2)
        self.assertEqual((record.rank_before, record.rank_after), (1, 1))
        self.assertFalse(record.violated)
        self.assertEqual(experiments.worst_rank(before, formulation, 0), 1)
        self.assertEqual(experiments.worst_rank(after, formulation, 0), 2)
        with self.assertRaises(ValueError):
            experiments.worst_rank(before, Formulation(k=2), 0)

    def test_strong_core_respects_improvement_on_strict_markets(self):
        market = generate(GenConfig(n=5, edge_probability=0.5, seed=4))
        records = experiments.ri_audit(market, Formulation(concept=Concept.STRONG_CORE))
        self.assertTrue(records)
        self.assertFalse(any(r.violated for r in records))
        self.assertTrue(all(r.status is experiments.AuditStatus.OK for r in records))

    def test_empty_solution_set_is_skipped(self):
        market = fixtures()["sotomayor-wako"].market
        records = experiments.ri_audit(market, Formulation(concept=Concept.STRONG_CORE), pairs=[(0, 2)])
        self.assertTrue(records)
        self.assertTrue(all(r.status is experiments.AuditStatus.SKIPPED for r in records))
        self.assertFalse(any(r.violated for r in records))


def test_summary_mentions_violations():
    market = fixtures()["pairwise1-R"].market
    records = experiments.ri_audit(market, Formulation(k=2), "pairwise1", pairs=[(0, 2)])
    text = experiments.render_ri_summary(records)
    assert text.startswith("Respecting-improvement audit")
    assert "violations 1" in text
    assert "pairwise1 max-k2: agent 1 at agent 3, step 1, rank 1 -> 2" in text
    assert "No audit steps recorded." in experiments.render_ri_summary([])


def test_emit_csv(tmp_path):
    path = tmp_path / "pof.csv"
    rows = [experiments.PofRow(size=6, model="core", objective="size", mean_pct=100 / 6, feasible_count=1)]
    experiments.emit_csv(rows, path, experiments.PofRow)
    assert path.read_text() == "size,model,objective,mean_pct,feasible_count\n6,core,size,16.666667,1\n"

    empty = tmp_path / "empty.csv"
    experiments.emit_csv([], empty, experiments.BlockingRow)
    assert empty.read_text() == "size,model,objective,l,mean_cycles,mean_improvable,feasible_count,limit_hits\n"


def test_grid():
    formulations = experiments.grid([Concept.CORE], [ObjectiveKind.MAX_SIZE, ObjectiveKind.MAX_WEIGHT], 3)
    assert [f.label for f in formulations] == ["max-k3", "max-k3", "core-k3", "core-k3"]
    assert [f.objective.kind for f in formulations] == [ObjectiveKind.MAX_SIZE, ObjectiveKind.MAX_WEIGHT] * 2
    with pytest.raises(ValueError):
        experiments.objective_of(ObjectiveKind.BEST_FOR)


def test_best_for_keeps_the_maximum_stage():
    market = fixtures()["example1"].market
    maximum = experiments.formulation_model(market, Formulation(objective=Objective.max_size()), best_for=0)
    core = experiments.formulation_model(market, Formulation(concept=Concept.CORE), best_for=0)
    assert len(maximum.objectives) == 2
    assert len(core.objectives) == 1
