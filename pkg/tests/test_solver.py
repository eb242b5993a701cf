import itertools
import unittest
from unittest.mock import patch

import pytest

from housing_markets import market as market_ops
from housing_markets import solver, ttc
from housing_markets.errors import CapExceededError, ModelError, SolverLimitError, TooLargeError
from housing_markets.ilp import Constraint, IlpModel, LinearExpr, Sense, Variable, VarKind
from housing_markets.instances import MAX_SIZE, GenConfig, fixtures, generate
from housing_markets.ip_models import build_model, decode_allocation, decode_prices
from housing_markets.models import Allocation, Concept, Market, Objective

FIXTURE_KEYS = [(name, key) for name, fixture in fixtures().items() for key in sorted(fixture.expected)]


def _max_size(alloc_set: set[Allocation]) -> set[Allocation]:
    best = max(market_ops.size(alloc) for alloc in alloc_set)
    return {alloc for alloc in alloc_set if market_ops.size(alloc) == best}


class TestSolve(unittest.TestCase):
    def setUp(self):
        self.fixture = fixtures()["example1"]
        self.market = self.fixture.market

    def test_max_size(self):
        model = build_model(self.market, Concept.NONE, objective=Objective.max_size())
        result = solver.solve(model)
        self.assertIs(result.status, solver.SolveStatus.OPTIMAL)
        self.assertEqual(result.objective, 6.0)
        self.assertEqual(decode_allocation(model, result.assignment), self.fixture.allocations["e"])

    def test_strong_core_feasibility(self):
        model = build_model(self.market, Concept.STRONG_CORE, objective=Objective.feasibility())
        result = solver.solve(model)
        self.assertIs(result.status, solver.SolveStatus.OPTIMAL)
        self.assertEqual(result.objective, 0.0)
        self.assertEqual(result.objective_values, ())
        self.assertEqual(decode_allocation(model, result.assignment), self.fixture.allocations["a"])
        self.assertTrue(model.is_feasible(result.assignment))

    def test_empty_strong_core_is_infeasible(self):
        market = fixtures()["sotomayor-wako"].market
        result = solver.solve(build_model(market, Concept.STRONG_CORE))
        self.assertIs(result.status, solver.SolveStatus.INFEASIBLE)
        self.assertFalse(result.has_solution)
        self.assertIsNone(result.objective)

    def test_competitive_prices_are_constant_on_cycles(self):
        model = build_model(self.market, Concept.COMPETITIVE, objective=Objective.max_weight())
        result = solver.solve(model)
        alloc = decode_allocation(model, result.assignment)
        prices = decode_prices(model, result.assignment)
        assert prices is not None
        for agent, obj in enumerate(alloc.allot):
            self.assertEqual(prices.prices[obj], prices.prices[agent])
        self.assertTrue(all(1 <= p <= 6 for p in prices.prices))

    def test_incumbents_improve_within_each_stage(self):
        model = build_model(
            self.market, Concept.CORE, objective=Objective.lexi(Objective.max_size(), Objective.max_weight())
        )
        result = solver.solve(model)
        self.assertEqual(len(result.objective_values), 2)
        self.assertEqual(result.objective_values[0], 5.0)
        for stage in (0, 1):
            values = [value for s, value in result.incumbents if s == stage]
            self.assertTrue(values)
            self.assertEqual(values, sorted(values))

    def test_first_feasible(self):
        model = build_model(self.market, Concept.CORE, objective=Objective.max_size())
        result = solver.solve(model, solver.SolverLimits(first_feasible=True))
        self.assertIs(result.status, solver.SolveStatus.FEASIBLE)
        self.assertTrue(model.is_feasible(result.assignment))

    def test_best_for_agent(self):
        # among core allocations agent 5 can only do better than their own object in x^c
        model = build_model(self.market, Concept.CORE, objective=Objective.best_for(4))
        result = solver.solve(model)
        self.assertEqual(decode_allocation(model, result.assignment), self.fixture.allocations["c"])


class TestSmallModels(unittest.TestCase):
    def setUp(self):
        self.variables = (Variable(name="x1"), Variable(name="x2"))
        self.row = Constraint(name="pick_one", terms=(("x1", 1.0), ("x2", 1.0)), sense=Sense.LE, rhs=1)
        self.total = LinearExpr(terms=(("x1", 1.0), ("x2", 1.0)))

    def test_model_without_assignment_rows(self):
        model = IlpModel(n=1, variables=self.variables, constraints=(self.row,), objectives=(self.total,))
        result = solver.solve(model)
        self.assertIs(result.status, solver.SolveStatus.OPTIMAL)
        self.assertEqual(result.objective, 1.0)

    def test_lexicographic_stages(self):
        second = LinearExpr(terms=(("x1", 1.0),))
        model = IlpModel(n=1, variables=self.variables, constraints=(self.row,), objectives=(self.total, second))
        result = solver.solve(model)
        self.assertEqual(result.objective_values, (1.0, 1.0))
        self.assertEqual(result.assignment, {"x1": 1, "x2": 0})

    def test_integer_rows_must_be_differences(self):
        model = IlpModel(
            n=1,
            variables=(Variable(name="p_1", kind=VarKind.INTEGER, lower=1, upper=3),),
            constraints=(Constraint(name="twice", terms=(("p_1", 2.0),), sense=Sense.LE, rhs=3),),
        )
        with self.assertRaises(ModelError):
            solver.solve(model)

    def test_objective_must_be_binary(self):
        model = IlpModel(
            n=1,
            variables=(Variable(name="p_1", kind=VarKind.INTEGER, lower=1, upper=3),),
            objectives=(LinearExpr(terms=(("p_1", 1.0),)),),
        )
        with self.assertRaises(ModelError):
            solver.solve(model)

    def test_undeclared_variable(self):
        model = IlpModel(n=1, variables=self.variables[:1], constraints=(self.row,))
        with self.assertRaises(ModelError):
            solver.solve(model)


class TestEnumerate(unittest.TestCase):
    def setUp(self):
        self.fixture = fixtures()["example1"]

    def test_core_of_example1(self):
        found = solver.enumerate_feasible(build_model(self.fixture.market, Concept.CORE))
        self.assertEqual(found, self.fixture.expected_set(Concept.CORE))

    def test_cap(self):
        with self.assertRaises(CapExceededError):
            solver.enumerate_feasible(build_model(self.fixture.market, Concept.CORE), cap=2)

    def test_infeasible_model_gives_empty_set(self):
        market = fixtures()["sotomayor-wako"].market
        self.assertEqual(solver.enumerate_feasible(build_model(market, Concept.STRONG_CORE)), set())

    def test_limit_hit_aborts(self):
        hit = solver.SolveResult(status=solver.SolveStatus.LIMIT_HIT)
        with patch("housing_markets.solver.solve", return_value=hit), self.assertRaises(SolverLimitError):
            solver.enumerate_feasible(build_model(self.fixture.market, Concept.CORE))


@pytest.mark.parametrize(("name", "key"), FIXTURE_KEYS)
def test_fixture_solution_sets(name, key):
    fixture = fixtures()[name]
    if key == MAX_SIZE:
        found = _max_size(solver.enumerate_feasible(build_model(fixture.market, Concept.NONE, k=fixture.k)))
    else:
        found = solver.enumerate_feasible(build_model(fixture.market, Concept(key), k=fixture.k))
    assert found == fixture.expected_set(key)


@pytest.mark.parametrize(("name", "key"), FIXTURE_KEYS)
def test_oracle_matches_fixtures(name, key):
    fixture = fixtures()[name]
    if key == MAX_SIZE:
        found = _max_size(solver.oracle(fixture.market, Concept.NONE, fixture.k))
    else:
        found = solver.oracle(fixture.market, Concept(key), fixture.k)
    assert found == fixture.expected_set(key)


def test_oracle_limits():
    lonely = Market(n=1, ranks=((1,),))
    assert solver.oracle(lonely, Concept.NONE) == {Allocation.identity(1)}

    nobody_trades = Market(n=11, ranks=tuple(tuple(1 if j == i else None for j in range(11)) for i in range(11)))
    with pytest.raises(TooLargeError):
        solver.oracle(nobody_trades, Concept.CORE)


class TestPriceConflicts(unittest.TestCase):
    """Markets whose price systems run into negative cycles through the reference node."""

    def test_four_agent_ring(self):
        ranks = ((3, 2, 1, None), (None, 3, 2, 1), (1, None, 3, 2), (None, None, None, 1))
        market = Market(n=4, ranks=ranks, weights=market_ops.weights_from_ranks(ranks))
        for concept in (Concept.CORE, Concept.COMPETITIVE, Concept.STRONG_CORE):
            with self.subTest(concept=concept):
                found = solver.enumerate_feasible(build_model(market, concept))
                self.assertEqual(found, solver.oracle(market, concept))

    def test_generated_weak_market(self):
        market = generate(GenConfig(n=6, edge_probability=0.4, ties=True, seed=6000))
        found = solver.enumerate_feasible(build_model(market, Concept.COMPETITIVE))
        self.assertEqual(found, ttc.competitive_set_by_tiebreak(market))


MARKETS = list(itertools.product((5, 6), (False, True), range(6)))
CONCEPT_ORDER = (Concept.NONE, Concept.CORE, Concept.COMPETITIVE, Concept.STRONG_CORE)


def _optimum(market: Market, concept: Concept, k: int | None) -> float | None:
    return solver.solve(build_model(market, concept, k=k, objective=Objective.max_size())).objective


@pytest.mark.parametrize(("n", "ties", "seed"), MARKETS)
def test_optimum_sizes_follow_the_concept_nesting(n, ties, seed):
    market = generate(GenConfig(n=n, edge_probability=0.4, ties=ties, seed=seed))
    for k in (2, 3, None):
        sizes = [_optimum(market, concept, k) for concept in CONCEPT_ORDER]
        assert sizes[0] is not None
        feasible = [size for size in sizes if size is not None]
        assert sizes[: len(feasible)] == feasible, (k, sizes)
        assert feasible == sorted(feasible, reverse=True), (k, sizes)


@pytest.mark.parametrize(("n", "ties", "seed"), MARKETS)
def test_longer_cycles_never_shrink_the_maximum(n, ties, seed):
    market = generate(GenConfig(n=n, edge_probability=0.4, ties=ties, seed=seed))
    two, three, unbounded = (_optimum(market, Concept.NONE, k) for k in (2, 3, None))
    assert two is not None and three is not None and unbounded is not None
    assert two <= three <= unbounded


@pytest.mark.parametrize(("n", "ties", "seed"), MARKETS)
def test_cycle_formulation_with_every_length_matches_prices(n, ties, seed):
    market = generate(GenConfig(n=n, edge_probability=0.4, ties=ties, seed=seed))
    for concept in CONCEPT_ORDER:
        assert _optimum(market, concept, n) == _optimum(market, concept, None), concept.value
