"""Blocking-cycle search and core membership.

Cycles are searched depth-first from an anchor agent that must be the smallest id on the cycle,
so every cycle is reported exactly once, starting at its smallest agent.
"""

import itertools
import logging
from collections.abc import Callable, Iterator

from housing_markets.errors import CycleEnumerationLimitError, LimitExceededError, NotKAllocationError
from housing_markets.market import acceptability_graph, is_individually_rational, is_k_allocation
from housing_markets.models import Allocation, BlockMode, BlockReport, ExchangeCycle, Market

logger = logging.getLogger(__name__)

DEFAULT_PATH_LIMIT = 10**7


def _anchored_cycles(
    n: int,
    successors: list[list[int]],
    max_length: int,
    limit: int,
    on_limit: Callable[[int], Exception],
) -> Iterator[tuple[int, ...]]:
    visited = 0
    for anchor in range(n):
        path = [anchor]
        on_path = {anchor}
        stack = [iter(successors[anchor])]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            if nxt == anchor:
                if len(path) >= 2:
                    yield tuple(path)
                continue
            if nxt < anchor or nxt in on_path or len(path) >= max_length:
                continue
            visited += 1
            if visited > limit:
                raise on_limit(limit)
            path.append(nxt)
            on_path.add(nxt)
            stack.append(iter(successors[nxt]))


def enumerate_cycles(market: Market, max_length: int, limit: int = DEFAULT_PATH_LIMIT) -> list[ExchangeCycle]:
    """All exchange cycles of length 2..max_length in the acceptability graph."""
    graph = acceptability_graph(market)
    successors = [[j for j in graph.out_neighbours(i) if j != i] for i in range(market.n)]
    cycles = [
        ExchangeCycle(nodes=nodes)
        for nodes in _anchored_cycles(market.n, successors, max_length, limit, CycleEnumerationLimitError)
    ]
    logger.debug("Enumerated %s cycles of length at most %s", len(cycles), max_length)
    return cycles


def _improving_edge(market: Market, alloc: Allocation, u: int, v: int, mode: BlockMode) -> bool:
    current = alloc.allot[u]
    if not market.acceptable(u, v):
        return False
    if mode is BlockMode.STRICT:
        return market.prefers(u, v, current)
    if mode is BlockMode.WEAK:
        return market.weakly_prefers(u, v, current)
    return v == current or market.prefers(u, v, current)


def iter_blocking_cycles(
    market: Market,
    alloc: Allocation,
    length: int,
    mode: BlockMode,
    limit: int = DEFAULT_PATH_LIMIT,
) -> Iterator[ExchangeCycle]:
    successors = [
        [v for v in range(market.n) if v != u and _improving_edge(market, alloc, u, v, mode)] for u in range(market.n)
    ]
    for nodes in _anchored_cycles(market.n, successors, length, limit, LimitExceededError):
        cycle = ExchangeCycle(nodes=nodes)
        if mode is BlockMode.STRICT or any(market.prefers(u, v, alloc.allot[u]) for u, v in cycle.edges):
            yield cycle


def find_blocking_cycles(
    market: Market,
    alloc: Allocation,
    length: int,
    mode: BlockMode,
    limit: int | None = None,
) -> BlockReport:
    """Blocking cycles of the given mode; improvable agents come from the weakly blocking cycles."""
    if limit is None:
        limit = DEFAULT_PATH_LIMIT
    cycles = list(iter_blocking_cycles(market, alloc, length, mode, limit))
    weak = cycles if mode is BlockMode.WEAK else iter_blocking_cycles(market, alloc, length, BlockMode.WEAK, limit)
    improvable = {u for cycle in weak for u, v in cycle.edges if market.prefers(u, v, alloc.allot[u])}
    return BlockReport(cycles=cycles, improvable=frozenset(improvable))


def _is_unblocked(market: Market, alloc: Allocation, k: int | None, mode: BlockMode) -> bool:
    if k is not None and not is_k_allocation(alloc, k):
        raise NotKAllocationError(f"allocation has a cycle longer than {k}")
    if not is_individually_rational(market, alloc):
        return False
    length = market.n if k is None else min(k, market.n)
    return next(iter_blocking_cycles(market, alloc, length, mode), None) is None


def in_core(market: Market, alloc: Allocation, k: int | None = None) -> bool:
    return _is_unblocked(market, alloc, k, BlockMode.STRICT)


def in_wako_core(market: Market, alloc: Allocation, k: int | None = None) -> bool:
    return _is_unblocked(market, alloc, k, BlockMode.ANTISYM_WEAK)


def in_strong_core(market: Market, alloc: Allocation, k: int | None = None) -> bool:
    return _is_unblocked(market, alloc, k, BlockMode.WEAK)


def _reallocations(
    market: Market, alloc: Allocation, coalition: tuple[int, ...], mode: BlockMode
) -> Iterator[dict[int, int]]:
    options = [[obj for obj in coalition if _improving_edge(market, alloc, agent, obj, mode)] for agent in coalition]
    assignment: dict[int, int] = {}
    used: set[int] = set()

    def extend(position: int) -> Iterator[dict[int, int]]:
        if position == len(coalition):
            yield dict(assignment)
            return
        agent = coalition[position]
        for obj in options[position]:
            if obj in used:
                continue
            assignment[agent] = obj
            used.add(obj)
            yield from extend(position + 1)
            used.discard(obj)
            del assignment[agent]

    yield from extend(0)


def coalition_blocks(market: Market, alloc: Allocation, mode: BlockMode, k: int | None = None) -> bool:
    """Definitional check over every coalition and every reallocation of its endowments.

    Exponential; meant for markets with a handful of agents.
    """
    bound = market.n if k is None else min(k, market.n)
    for coalition_size in range(1, bound + 1):
        for coalition in itertools.combinations(range(market.n), coalition_size):
            for z in _reallocations(market, alloc, coalition, mode):
                if mode is BlockMode.STRICT or any(market.prefers(i, z[i], alloc.allot[i]) for i in coalition):
                    return True
    return False
