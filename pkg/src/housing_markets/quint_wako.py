"""Strong core construction for weak preferences with absorbing sets and cycle covers."""

import itertools
import logging
import math
from collections.abc import Iterator

import networkx as nx

from housing_markets.errors import CoverExplosionError
from housing_markets.market import acceptability_graph
from housing_markets.models import AbsorbingSet, Allocation, CycleCover, Edge, ExchangeCycle, Market, TradeGraph

logger = logging.getLogger(__name__)

Matching = dict[int, int]


def most_preferred_edges(graph: nx.DiGraph, market: Market) -> set[Edge]:
    edges: set[Edge] = set()
    for agent in graph.nodes:
        targets = list(graph.successors(agent))
        best = min(market.ranks[agent][j] for j in targets)
        edges.update((agent, j) for j in targets if market.ranks[agent][j] == best)
    return edges


def absorbing_sets(top_graph: nx.DiGraph, round_index: int = 0) -> list[AbsorbingSet]:
    found = []
    for component in nx.attracting_components(top_graph):
        edges = frozenset((u, v) for u, v in top_graph.subgraph(component).edges)
        found.append(AbsorbingSet(nodes=frozenset(component), edges=edges, round=round_index))
    return sorted(found, key=lambda s: min(s.nodes))


def _bipartite(edges: frozenset[Edge]) -> nx.Graph:
    graph = nx.Graph()
    for agent, obj in edges:
        graph.add_node(("a", agent), bipartite=0)
        graph.add_node(("o", obj), bipartite=1)
        graph.add_edge(("a", agent), ("o", obj))
    return graph


def _cycles_of(matching: Matching) -> frozenset[ExchangeCycle]:
    seen: set[int] = set()
    cycles = []
    for start in sorted(matching):
        if start in seen:
            continue
        nodes = []
        agent = start
        while agent not in seen:
            seen.add(agent)
            nodes.append(agent)
            agent = matching[agent]
        cycles.append(ExchangeCycle.canonical(nodes))
    return frozenset(cycles)


def _perfect_matching(nodes: frozenset[int], edges: frozenset[Edge]) -> Matching | None:
    graph = _bipartite(edges)
    agents = {("a", agent) for agent in nodes}
    if not agents <= set(graph.nodes):
        return None
    matching = nx.bipartite.hopcroft_karp_matching(graph, top_nodes=agents)
    if not all(node in matching for node in agents):
        return None
    return {agent: matching[("a", agent)][1] for agent in nodes}


def cycle_cover(absorbing: AbsorbingSet) -> CycleCover | None:
    matching = _perfect_matching(absorbing.nodes, absorbing.edges)
    if matching is None:
        return None
    return CycleCover(cycles=_cycles_of(matching))


def _enumerate_matchings(edges: frozenset[Edge], matching: Matching, cap: int, found: list[Matching]) -> None:
    # Alternating-cycle enumeration: split on an edge of an alternating cycle into "contains" and "avoids".
    oriented = nx.DiGraph()
    for agent, obj in edges:
        if matching[agent] == obj:
            oriented.add_edge(("o", obj), ("a", agent))
        else:
            oriented.add_edge(("a", agent), ("o", obj))
    try:
        cycle = nx.find_cycle(oriented)
    except nx.NetworkXNoCycle:
        found.append(dict(matching))
        if len(found) > cap:
            raise CoverExplosionError(len(found), cap) from None
        return

    split = next((u[1], v[1]) for u, v in cycle if u[0] == "a")
    flipped = dict(matching)
    for u, v in cycle:
        if u[0] == "a":
            flipped[u[1]] = v[1]
    agent, obj = split
    with_split = frozenset(e for e in edges if e == split or (e[0] != agent and e[1] != obj))
    _enumerate_matchings(with_split, flipped, cap, found)
    _enumerate_matchings(edges - {split}, matching, cap, found)


def enumerate_cycle_covers(absorbing: AbsorbingSet, cap: int = 10**5) -> list[CycleCover]:
    matching = _perfect_matching(absorbing.nodes, absorbing.edges)
    if matching is None:
        return []
    found: list[Matching] = []
    _enumerate_matchings(absorbing.edges, matching, cap, found)
    return [CycleCover(cycles=_cycles_of(m)) for m in found]


def _rounds(market: Market) -> Iterator[tuple[list[AbsorbingSet], set[Edge]]]:
    """Yield the absorbing sets removed per round along with the pointing edges into them."""
    graph = acceptability_graph(market).to_networkx()
    remaining = set(range(market.n))
    round_index = 0
    while remaining:
        sub = graph.subgraph(remaining)
        top = nx.DiGraph()
        top.add_nodes_from(remaining)
        top.add_edges_from(most_preferred_edges(sub, market))
        sets = absorbing_sets(top, round_index)
        removed = set().union(*(s.nodes for s in sets))
        pointing = {(u, v) for u, v in top.edges if u not in removed and v in removed}
        yield sets, pointing
        remaining -= removed
        round_index += 1


def strong_core(market: Market) -> tuple[Allocation, TradeGraph] | None:
    allot = list(range(market.n))
    rounds = [0] * market.n
    cycle_edges: set[Edge] = set()
    pointing_edges: set[Edge] = set()
    for sets, pointing in _rounds(market):
        for absorbing in sets:
            cover = cycle_cover(absorbing)
            if cover is None:
                logger.debug("Absorbing set %s has no cycle cover", sorted(a + 1 for a in absorbing.nodes))
                return None
            for cycle in cover.cycles:
                for agent, obj in cycle.edges:
                    allot[agent] = obj
            for agent in absorbing.nodes:
                rounds[agent] = absorbing.round
            cycle_edges.update(absorbing.edges)
        pointing_edges.update(pointing)
    graph = TradeGraph(
        n=market.n,
        cycle_edges=frozenset(cycle_edges),
        pointing_edges=frozenset(pointing_edges),
        rounds=tuple(rounds),
    )
    return Allocation(allot=tuple(allot)), graph


def enumerate_strong_core(market: Market, cap: int = 10**5) -> set[Allocation]:
    per_set: list[list[CycleCover]] = []
    for sets, _ in _rounds(market):
        for absorbing in sets:
            covers = enumerate_cycle_covers(absorbing, cap)
            if not covers:
                return set()
            per_set.append(covers)
    total = math.prod(len(covers) for covers in per_set)
    if total > cap:
        raise CoverExplosionError(total, cap)

    core = set()
    for choice in itertools.product(*per_set):
        cycles = [cycle.nodes for cover in choice for cycle in cover.cycles]
        core.add(Allocation.from_cycles(market.n, cycles))
    return core
