"""Respecting improvement for the trading-cycle mechanisms, checked on random markets."""

import unittest
from collections.abc import Iterator

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from housing_markets import quint_wako, ttc
from housing_markets.instances import GenConfig, generate, random_improvement
from housing_markets.models import Allocation, Market


@st.composite
def improvements(draw: st.DrawFn, ties: bool, max_n: int = 8) -> tuple[Market, Market, int]:
    n = draw(st.integers(min_value=3, max_value=max_n))
    p = draw(st.sampled_from([0.3, 0.5, 0.8]))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    market = generate(GenConfig(n=n, edge_probability=p, ties=ties, seed=seed))
    agent = draw(st.integers(min_value=0, max_value=n - 1))
    outcome = random_improvement(market, agent, np.random.default_rng(seed), ties)
    assume(outcome is not None)
    assert outcome is not None
    return market, outcome[1], agent


def _rank(market: Market, alloc: Allocation, agent: int) -> int:
    rank = market.rank(agent, alloc.allot[agent])
    assert rank is not None
    return rank


class TestTopTradingCycles(unittest.TestCase):
    @given(improvements(ties=False))
    @settings(max_examples=200, deadline=None)
    def test_allotment_weakly_improves(self, case):
        before, after, agent = case
        self.assertLessEqual(_rank(after, ttc.ttc(after)[0], agent), _rank(before, ttc.ttc(before)[0], agent))


class TestCompetitiveSet(unittest.TestCase):
    @given(improvements(ties=True, max_n=5))
    @settings(max_examples=100, deadline=None)
    def test_best_and_worst_allotments_weakly_improve(self, case):
        before, after, agent = case
        assume(ttc.tiebreak_count(before) <= 2000 and ttc.tiebreak_count(after) <= 2000)
        ranks_before = [_rank(before, alloc, agent) for alloc in ttc.competitive_set_by_tiebreak(before)]
        ranks_after = [_rank(after, alloc, agent) for alloc in ttc.competitive_set_by_tiebreak(after)]
        self.assertLessEqual(min(ranks_after), min(ranks_before))
        self.assertLessEqual(max(ranks_after), max(ranks_before))


class TestStrongCore(unittest.TestCase):
    @given(improvements(ties=True))
    @settings(max_examples=200, deadline=None)
    def test_allotment_weakly_improves(self, case):
        before, after, agent = case
        found_before = quint_wako.strong_core(before)
        found_after = quint_wako.strong_core(after)
        assume(found_before is not None and found_after is not None)
        assert found_before is not None and found_after is not None
        self.assertLessEqual(_rank(after, found_after[0], agent), _rank(before, found_before[0], agent))

    @given(improvements(ties=False))
    @settings(max_examples=100, deadline=None)
    def test_strict_strong_core_is_the_ttc_allocation(self, case):
        before, _, _ = case
        found = quint_wako.strong_core(before)
        assert found is not None
        self.assertEqual(found[0], ttc.ttc(before)[0])


def _chains(n: int, seeds: int, length: int, p: float) -> Iterator[tuple[Market, Market, int]]:
    """Successive random improvements: each step starts from the previous step's market."""
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        market = generate(GenConfig(n=n, edge_probability=p, ties=True, seed=seed))
        for _ in range(length):
            agent = int(rng.integers(market.n))
            outcome = random_improvement(market, agent, rng, ties=True)
            if outcome is None:
                continue
            yield market, outcome[1], agent
            market = outcome[1]


@pytest.mark.slow
def test_long_improvement_chains():
    steps = 0
    applicable = 0
    for before, after, agent in _chains(n=10, seeds=60, length=30, p=0.3):
        found_before, found_after = quint_wako.strong_core(before), quint_wako.strong_core(after)
        if found_before is not None and found_after is not None:
            assert _rank(after, found_after[0], agent) <= _rank(before, found_before[0], agent)
            applicable += 1
        strict_before, strict_after = ttc.strictify(before), ttc.strictify(after)
        assert _rank(after, ttc.ttc(strict_after)[0], agent) <= _rank(before, ttc.ttc(strict_before)[0], agent)
        steps += 1
    assert steps >= 1000
    assert applicable >= 500


@pytest.mark.slow
def test_competitive_chains_on_small_markets():
    applicable = 0
    for before, after, agent in _chains(n=6, seeds=120, length=10, p=0.3):
        if ttc.tiebreak_count(before) > 720 or ttc.tiebreak_count(after) > 720:
            continue
        ranks_before = [_rank(before, alloc, agent) for alloc in ttc.competitive_set_by_tiebreak(before)]
        ranks_after = [_rank(after, alloc, agent) for alloc in ttc.competitive_set_by_tiebreak(after)]
        assert min(ranks_after) <= min(ranks_before)
        assert max(ranks_after) <= max(ranks_before)
        applicable += 1
    assert applicable >= 500
