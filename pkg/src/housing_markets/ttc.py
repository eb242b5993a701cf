"""Top trading cycles and the competitive set of weak markets by tie-breaking."""

import itertools
import logging
import math
from collections.abc import Mapping, Sequence

import networkx as nx

from housing_markets.errors import SameAgentError, TieBreakExplosionError
from housing_markets.models import Allocation, Edge, Market, Relation, TradeGraph

logger = logging.getLogger(__name__)

TieBreak = Mapping[int, Sequence[int]]


def strictify(market: Market, tie_break: TieBreak | None = None) -> Market:
    """Linearize every tie with ``tie_break[agent]``; objects it does not order fall back to their id."""
    tie_break = tie_break or {}
    ranks = []
    for agent in range(market.n):
        order = {obj: pos for pos, obj in enumerate(tie_break.get(agent, ()))}
        row = market.ranks[agent]
        acceptable = [j for j in range(market.n) if row[j] is not None]
        acceptable.sort(key=lambda j: (row[j], order.get(j, math.inf), j == agent, j))
        strict_row: list[int | None] = [None] * market.n
        for level, obj in enumerate(acceptable, start=1):
            strict_row[obj] = level
        ranks.append(tuple(strict_row))
    return market.model_copy(update={"ranks": tuple(ranks)})


def _top_trading_cycle(pointer: dict[int, int]) -> list[int]:
    """The cycle of the pointer graph containing the lowest agent id."""
    on_cycle: set[int] = set()
    for start in sorted(pointer):
        path: dict[int, int] = {}
        agent = start
        while agent not in path and agent not in on_cycle:
            path[agent] = len(path)
            agent = pointer[agent]
        if agent in path:
            cycle = list(path)[path[agent] :]
            on_cycle.update(cycle)
    lowest = min(on_cycle)
    cycle = [lowest]
    agent = pointer[lowest]
    while agent != lowest:
        cycle.append(agent)
        agent = pointer[agent]
    return cycle


def ttc(market: Market, tie_break: TieBreak | None = None) -> tuple[Allocation, TradeGraph]:
    strict = strictify(market, tie_break)
    remaining = set(range(market.n))
    allot = list(range(market.n))
    rounds = [0] * market.n
    cycle_edges: set[Edge] = set()
    pointing_edges: set[Edge] = set()

    current_round = 0
    while remaining:
        pointer = {
            i: min((j for j in remaining if strict.ranks[i][j] is not None), key=lambda j: strict.ranks[i][j])
            for i in remaining
        }
        cycle = _top_trading_cycle(pointer)
        members = set(cycle)
        for agent in cycle:
            allot[agent] = pointer[agent]
            rounds[agent] = current_round
            cycle_edges.add((agent, pointer[agent]))
        for agent in remaining - members:
            if pointer[agent] in members:
                pointing_edges.add((agent, pointer[agent]))
        remaining -= members
        logger.debug("Round %s removed cycle %s", current_round, [a + 1 for a in cycle])
        current_round += 1

    graph = TradeGraph(
        n=market.n,
        cycle_edges=frozenset(cycle_edges),
        pointing_edges=frozenset(pointing_edges),
        rounds=tuple(rounds),
    )
    return Allocation(allot=tuple(allot)), graph


def tiebreak_count(market: Market) -> int:
    return math.prod(math.factorial(len(tier)) for agent in range(market.n) for tier in market.tiers(agent))


def competitive_set_by_tiebreak(market: Market, cap: int = 10**6) -> set[Allocation]:
    count = tiebreak_count(market)
    if count > cap:
        raise TieBreakExplosionError(count, cap)

    tied = [(agent, tier) for agent in range(market.n) for tier in market.tiers(agent) if len(tier) > 1]
    allocations: set[Allocation] = set()
    for choice in itertools.product(*(itertools.permutations(tier) for _, tier in tied)):
        tie_break: dict[int, list[int]] = {}
        for (agent, _), ordered in zip(tied, choice, strict=True):
            tie_break.setdefault(agent, []).extend(ordered)
        allocation, _ = ttc(market, tie_break)
        allocations.add(allocation)
    logger.debug("%s tie-breaks produced %s competitive allocations", count, len(allocations))
    return allocations


def classify(graph: TradeGraph, i: int, j: int) -> Relation:
    if i == j:
        raise SameAgentError(f"agent {i + 1} cannot be classified against themselves")
    cycle_graph = nx.DiGraph()
    cycle_graph.add_nodes_from(range(graph.n))
    cycle_graph.add_edges_from((u, v) for u, v in graph.cycle_edges if u != v)
    if j in nx.descendants(cycle_graph, i):
        return Relation.CYCLE_MEMBERS

    full = cycle_graph.copy()
    full.add_edges_from(graph.pointing_edges)
    if j in nx.descendants(full, i):
        return Relation.PREDECESSOR_OF
    if i in nx.descendants(full, j):
        return Relation.SUCCESSOR_OF
    return Relation.INDEPENDENT
