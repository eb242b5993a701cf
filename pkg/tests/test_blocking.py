import unittest

import pytest

from housing_markets import blocking
from housing_markets.errors import CycleEnumerationLimitError, LimitExceededError, NotKAllocationError
from housing_markets.instances import fixtures
from housing_markets.models import Allocation, BlockMode, ExchangeCycle


class TestEnumerateCycles(unittest.TestCase):
    def setUp(self):
        self.market = fixtures()["example1"].market

    def test_cycles_up_to_three(self):
        cycles = blocking.enumerate_cycles(self.market, 3)
        self.assertEqual(
            {c.nodes for c in cycles},
            {(0, 1), (1, 2), (2, 3), (0, 2, 1), (0, 4, 1), (0, 4, 5), (1, 2, 3)},
        )

    def test_pairs_only(self):
        self.assertEqual(len(blocking.enumerate_cycles(self.market, 2)), 3)

    def test_cycles_start_at_smallest_agent(self):
        for cycle in blocking.enumerate_cycles(self.market, 6):
            self.assertEqual(cycle.nodes[0], min(cycle.nodes))

    def test_limit(self):
        with self.assertRaises(CycleEnumerationLimitError) as ctx:
            blocking.enumerate_cycles(self.market, 6, limit=1)
        self.assertEqual(ctx.exception.limit, 1)


class TestCoreMembership(unittest.TestCase):
    def setUp(self):
        self.fixture = fixtures()["example1"]
        self.market = self.fixture.market
        self.x = self.fixture.allocations

    def test_core(self):
        members = {name for name, alloc in self.x.items() if blocking.in_core(self.market, alloc)}
        self.assertEqual(members, {"a", "b", "c", "d"})

    def test_wako_core(self):
        members = {name for name, alloc in self.x.items() if blocking.in_wako_core(self.market, alloc)}
        self.assertEqual(members, {"a", "b"})

    def test_strong_core(self):
        members = {name for name, alloc in self.x.items() if blocking.in_strong_core(self.market, alloc)}
        self.assertEqual(members, {"a"})

    def test_not_individually_rational(self):
        self.assertFalse(blocking.in_core(self.market, Allocation.from_cycles(6, [[1, 5]])))

    def test_k_bound_is_checked(self):
        with self.assertRaises(NotKAllocationError):
            blocking.in_core(self.market, self.x["d"], k=3)

    def test_coalitions_agree_with_cycles(self):
        for mode in BlockMode:
            for name, alloc in self.x.items():
                with self.subTest(mode=mode, allocation=name):
                    by_cycles = next(blocking.iter_blocking_cycles(self.market, alloc, 6, mode), None) is not None
                    self.assertEqual(blocking.coalition_blocks(self.market, alloc, mode), by_cycles)


def test_weakly_blocking_cycles_of_maximum_allocation():
    fixture = fixtures()["example1"]
    report = blocking.find_blocking_cycles(fixture.market, fixture.allocations["e"], 3, BlockMode.WEAK)
    assert ExchangeCycle(nodes=(0, 2, 1)) in report.cycles
    assert ExchangeCycle(nodes=(0, 1)) in report.cycles
    assert {0, 1, 2} <= report.improvable


def test_strong_core_allocation_has_no_weakly_blocking_cycle():
    fixture = fixtures()["example1"]
    report = blocking.find_blocking_cycles(fixture.market, fixture.allocations["a"], 6, BlockMode.WEAK)
    assert report.cycles == []
    assert report.improvable == frozenset()


def test_weak_mode_needs_a_strict_improvement():
    # agent 2 is indifferent between objects 1 and 3: cycle (2,3) weakly blocks but is not antisymmetric
    fixture = fixtures()["sotomayor-wako"]
    alloc = fixture.allocations["a"]
    assert blocking.in_core(fixture.market, alloc)
    assert not blocking.in_strong_core(fixture.market, alloc)
    assert blocking.in_wako_core(fixture.market, alloc)


def test_search_limit_surfaces():
    fixture = fixtures()["example6-R"]
    with pytest.raises(LimitExceededError):
        blocking.find_blocking_cycles(fixture.market, Allocation.identity(10), 10, BlockMode.WEAK, limit=2)


@pytest.mark.parametrize("name", ["pairwise-ties-R", "example6-R", "example6-Rb"])
def test_bounded_core_fixtures(name):
    fixture = fixtures()[name]
    members = {n for n, alloc in fixture.allocations.items() if blocking.in_core(fixture.market, alloc, fixture.k)}
    assert members == set(fixture.expected["core"])


def test_improvable_agents_come_from_weakly_blocking_cycles():
    # (2,3) only weakly blocks x^a: agent 3 strictly gains, agent 2 is indifferent
    fixture = fixtures()["sotomayor-wako"]
    report = blocking.find_blocking_cycles(fixture.market, fixture.allocations["a"], 3, BlockMode.STRICT)
    assert report.cycles == []
    assert report.improvable == frozenset({2})


def test_zero_limit_is_not_the_default():
    fixture = fixtures()["example6-R"]
    with pytest.raises(LimitExceededError):
        blocking.find_blocking_cycles(fixture.market, Allocation.identity(10), 2, BlockMode.WEAK, limit=0)
