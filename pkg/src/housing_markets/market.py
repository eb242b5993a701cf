"""Market-level operations: validation, acceptability graph, allocations and instance files."""

import json
import logging
import pathlib
from collections.abc import Mapping, Sequence
from typing import Any

from housing_markets.errors import ImprovementError, InvalidMarketError, NotAPermutationError
from housing_markets.models import (
    AcceptabilityGraph,
    Allocation,
    Edge,
    ExchangeCycle,
    Market,
    Violation,
    ViolationKind,
)

logger = logging.getLogger(__name__)


def validate(market: Market) -> list[Violation]:
    n = market.n
    if len(market.ranks) != n or any(len(row) != n for row in market.ranks):
        return [Violation(kind=ViolationKind.BAD_SHAPE, message=f"rank matrix is not {n}x{n}")]

    violations: list[Violation] = []
    for i, row in enumerate(market.ranks):
        own = row[i]
        if own is None:
            violations.append(
                Violation(
                    kind=ViolationKind.MISSING_SELF_RANK,
                    agent=i,
                    message=f"agent {i + 1} does not rank their own object",
                )
            )
            continue
        for j, rank in enumerate(row):
            if rank is not None and rank > own:
                violations.append(
                    Violation(
                        kind=ViolationKind.RANKED_BELOW_OWN,
                        agent=i,
                        edge=(i, j),
                        message=f"agent {i + 1} ranks object {j + 1} below their own object",
                    )
                )

    for (i, j), w in market.weights.items():
        edge = (i, j)
        if not (0 <= i < n and 0 <= j < n) or i == j or market.ranks[i][j] is None:
            violations.append(
                Violation(kind=ViolationKind.STRAY_WEIGHT, edge=edge, message=f"weight on non-edge ({i + 1},{j + 1})")
            )
        elif not 0.0 < w < 1.0:
            violations.append(
                Violation(
                    kind=ViolationKind.WEIGHT_OUT_OF_RANGE,
                    edge=edge,
                    message=f"weight {w} of ({i + 1},{j + 1}) is outside (0,1)",
                )
            )
    for i in range(n):
        for j in range(n):
            if i != j and market.ranks[i][j] is not None and (i, j) not in market.weights:
                violations.append(
                    Violation(
                        kind=ViolationKind.MISSING_WEIGHT,
                        edge=(i, j),
                        message=f"acceptable edge ({i + 1},{j + 1}) has no weight",
                    )
                )
    return violations


def acceptability_graph(market: Market) -> AcceptabilityGraph:
    edges = {(i, i) for i in range(market.n)}
    for i in range(market.n):
        for j in range(market.n):
            if market.acceptable(i, j) and market.weakly_prefers(i, j, i):
                edges.add((i, j))
    return AcceptabilityGraph(n=market.n, edges=frozenset(edges))


def decompose(alloc: Allocation) -> frozenset[ExchangeCycle]:
    n = alloc.n
    if sorted(alloc.allot) != list(range(n)):
        raise NotAPermutationError(f"{[x + 1 for x in alloc.allot]} is not a permutation of 1..{n}")
    seen = [False] * n
    cycles = []
    for start in range(n):
        if seen[start]:
            continue
        nodes = []
        agent = start
        while not seen[agent]:
            seen[agent] = True
            nodes.append(agent)
            agent = alloc.allot[agent]
        cycles.append(ExchangeCycle(nodes=tuple(nodes)))
    return frozenset(cycles)


def recompose(n: int, cycles: frozenset[ExchangeCycle]) -> Allocation:
    return Allocation.from_cycles(n, (c.nodes for c in cycles))


def is_individually_rational(market: Market, alloc: Allocation) -> bool:
    return all(market.acceptable(i, x) and market.weakly_prefers(i, x, i) for i, x in enumerate(alloc.allot))


def is_k_allocation(alloc: Allocation, k: int) -> bool:
    return all(len(cycle) <= k for cycle in decompose(alloc))


def size(alloc: Allocation) -> int:
    return sum(1 for i, x in enumerate(alloc.allot) if x != i)


def weight(market: Market, alloc: Allocation) -> float:
    return sum(market.weight(i, x) for i, x in enumerate(alloc.allot) if x != i)


def welfare_equivalent(market: Market, a: Allocation, b: Allocation) -> bool:
    return all(market.indifferent(i, a.allot[i], b.allot[i]) for i in range(market.n))


def pareto_dominates(market: Market, a: Allocation, b: Allocation) -> bool:
    """True when every agent weakly prefers ``a`` to ``b`` and someone strictly."""
    if not all(market.weakly_prefers(i, a.allot[i], b.allot[i]) for i in range(market.n)):
        return False
    return any(market.prefers(i, a.allot[i], b.allot[i]) for i in range(market.n))


def weights_from_ranks(ranks: Sequence[Sequence[int | None]]) -> dict[Edge, float]:
    """Weights in (0,1) that decrease with rank, for markets that come without weights."""
    weights: dict[Edge, float] = {}
    for i, row in enumerate(ranks):
        levels = sorted({r for j, r in enumerate(row) if j != i and r is not None})
        m = len(levels)
        for j, r in enumerate(row):
            if j == i or r is None:
                continue
            position = levels.index(r) + 1
            weights[(i, j)] = (m - position + 1) / (m + 1)
    return weights


def ranks_from_tiers(n: int, agent: int, tiers: Sequence[Sequence[int]]) -> tuple[int | None, ...]:
    """Dense ranks for one agent; tiers exclude the own object, which is ranked after the last tier."""
    row: list[int | None] = [None] * n
    for level, tier in enumerate(tiers, start=1):
        for obj in tier:
            if obj == agent or row[obj] is not None or not 0 <= obj < n:
                raise InvalidMarketError(
                    [
                        Violation(
                            kind=ViolationKind.BAD_SHAPE,
                            agent=agent,
                            message=f"agent {agent + 1} lists object {obj + 1} twice, out of range or as their own",
                        )
                    ]
                )
            row[obj] = level
    row[agent] = len(tiers) + 1
    return tuple(row)


def market_from_tiers(tiers: Sequence[Sequence[Sequence[int]]], weights: Mapping[Edge, float] | None = None) -> Market:
    n = len(tiers)
    ranks = tuple(ranks_from_tiers(n, i, agent_tiers) for i, agent_tiers in enumerate(tiers))
    return Market(n=n, ranks=ranks, weights=dict(weights) if weights is not None else weights_from_ranks(ranks))


def non_self_tiers(market: Market, agent: int) -> list[list[int]]:
    return [[obj for obj in tier if obj != agent] for tier in market.tiers(agent) if tier != [agent]]


def market_from_json(data: Mapping[str, Any]) -> Market:
    n = int(data["n"])
    tiers = [[[obj - 1 for obj in tier] for tier in agent_prefs] for agent_prefs in data["prefs"]]
    if len(tiers) != n:
        raise InvalidMarketError(
            [Violation(kind=ViolationKind.BAD_SHAPE, message=f"{len(tiers)} preference lists for {n} agents")]
        )
    weights = None
    if "weights" in data:
        weights = {(int(i) - 1, int(j) - 1): float(w) for i, j, w in data["weights"]}
    return market_from_tiers(tiers, weights)


def market_to_json(market: Market) -> dict[str, Any]:
    return {
        "n": market.n,
        "prefs": [[[obj + 1 for obj in tier] for tier in non_self_tiers(market, i)] for i in range(market.n)],
        "weights": [[i + 1, j + 1, w] for (i, j), w in sorted(market.weights.items())],
    }


def load_market(path: pathlib.Path) -> Market:
    with path.open("r") as file:
        market = market_from_json(json.load(file))
    violations = validate(market)
    if violations:
        raise InvalidMarketError(violations)
    return market


def dump_market(market: Market, path: pathlib.Path) -> None:
    with path.open("w") as file:
        json.dump(market_to_json(market), file, indent=2)


def allocation_to_json(alloc: Allocation) -> dict[str, Any]:
    cycles = sorted(decompose(alloc), key=lambda c: c.nodes)
    return {"cycles": [c.one_based() for c in cycles]}


def allocation_from_json(data: Mapping[str, Any], n: int) -> Allocation:
    if "allot" in data:
        return Allocation(allot=tuple(int(x) - 1 for x in data["allot"]))
    return Allocation.from_cycles(n, ([int(a) - 1 for a in cycle] for cycle in data["cycles"]))


def load_allocation(path: pathlib.Path, n: int) -> Allocation:
    with path.open("r") as file:
        alloc = allocation_from_json(json.load(file), n)
    decompose(alloc)
    return alloc


def is_improvement(before: Market, after: Market, agent: int) -> bool:
    """Whether ``after`` only makes ``agent``'s object more attractive to the other agents."""
    n = before.n
    if after.n != n:
        return False
    for a in range(n):
        for b in range(n):
            if before.weakly_prefers(agent, a, b) != after.weakly_prefers(agent, a, b):
                return False
    for j in range(n):
        if j == agent:
            continue
        for k in range(n):
            if k == agent:
                continue
            if before.weakly_prefers(j, agent, k) and not after.weakly_prefers(j, agent, k):
                return False
            if before.prefers(j, agent, k) and not after.prefers(j, agent, k):
                return False
            for m in range(n):
                if m != agent and before.weakly_prefers(j, k, m) != after.weakly_prefers(j, k, m):
                    return False
    return True


def promote(market: Market, agent: int, target: int, ties: bool) -> Market | None:
    """Move ``agent``'s object one step up in ``target``'s list, or ``None`` once it is on top.

    An unacceptable object first becomes acceptable just above the target's own object. With ``ties``
    the object joins the next better tier, otherwise it is placed alone right above that tier.
    """
    if agent == target:
        raise ImprovementError("an agent cannot improve their own object in their own list")
    tiers = [list(tier) for tier in market.tiers(target)]
    position = next((t for t, tier in enumerate(tiers) if agent in tier), None)
    if position is None:
        own_tier = next(t for t, tier in enumerate(tiers) if target in tier)
        tiers.insert(own_tier, [agent])
    elif position == 0:
        return None
    else:
        tiers[position].remove(agent)
        if ties:
            tiers[position - 1].append(agent)
        else:
            tiers.insert(position - 1, [agent])
        tiers = [tier for tier in tiers if tier]

    row: list[int | None] = [None] * market.n
    for level, tier in enumerate(tiers, start=1):
        for obj in tier:
            row[obj] = level
    ranks = tuple(tuple(row) if i == target else market.ranks[i] for i in range(market.n))

    weights = dict(market.weights)
    if (target, agent) not in weights:
        existing = [w for (i, _), w in market.weights.items() if i == target]
        weights[(target, agent)] = min(existing) / 2 if existing else 0.5
    improved = market.model_copy(update={"ranks": ranks, "weights": weights})
    logger.debug("Promoted object %s in the list of agent %s", agent + 1, target + 1)
    return improved
