"""Random kidney-exchange-like markets and the worked example markets used as fixtures."""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from housing_markets.market import market_from_tiers, promote
from housing_markets.models import Allocation, Concept, Edge, Market

logger = logging.getLogger(__name__)

MAX_SIZE = "max-size"
STABLE_CONCEPTS = (Concept.CORE, Concept.COMPETITIVE, Concept.STRONG_CORE)


class GenConfig(BaseModel):
    n: int = Field(ge=2)
    edge_probability: float = Field(default=0.3, gt=0.0, le=1.0)
    ties: bool = False
    seed: int = 0


def _dense_ranks(keys: dict[int, float]) -> dict[int, int]:
    """Rank 1 for the largest key; equal keys share a rank."""
    levels = sorted(set(keys.values()), reverse=True)
    return {obj: levels.index(key) + 1 for obj, key in keys.items()}


def generate(cfg: GenConfig) -> Market:
    """Draw a market from ``numpy``'s PCG64 stream seeded with ``cfg.seed``.

    Agents are visited in order and, for each, the other objects in order; every pair consumes one
    uniform for the edge test and, when it becomes an edge, further uniforms for its weight.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    weights: dict[Edge, float] = {}
    ranks: list[tuple[int | None, ...]] = []
    for i in range(n):
        drawn: dict[int, float] = {}
        for j in range(n):
            if j == i or rng.random() >= cfg.edge_probability:
                continue
            w = rng.random()
            while w == 0.0 or (not cfg.ties and w in drawn.values()):
                w = rng.random()
            drawn[j] = w
        keys = {j: float(np.floor(w * n)) for j, w in drawn.items()} if cfg.ties else drawn
        dense = _dense_ranks(keys)
        row: list[int | None] = [None] * n
        for j, rank in dense.items():
            row[j] = rank
            weights[(i, j)] = drawn[j]
        row[i] = len(set(dense.values())) + 1
        ranks.append(tuple(row))
    return Market(n=n, ranks=tuple(ranks), weights=weights)


def family(
    sizes: list[int], per_size: int, seed: int, edge_probability: float = 0.3, ties: bool = False
) -> list[tuple[str, Market]]:
    """``per_size`` markets per size; each gets its own seed spawned from ``(seed, size, index)``."""
    markets = []
    for n in sizes:
        for index in range(per_size):
            instance_seed = int(np.random.SeedSequence([seed, n, index]).generate_state(1)[0])
            cfg = GenConfig(n=n, edge_probability=edge_probability, ties=ties, seed=instance_seed)
            markets.append((f"n{n}-{index}", generate(cfg)))
    logger.info("Generated %s markets for sizes %s", len(markets), sizes)
    return markets


def random_improvement(
    market: Market, agent: int, rng: np.random.Generator, ties: bool = False
) -> tuple[int, Market] | None:
    """Promote ``agent``'s object one step for a random other agent; ``None`` if it is top everywhere."""
    targets = [j for j in range(market.n) if j != agent and agent not in market.tiers(j)[0]]
    if not targets:
        return None
    target = targets[int(rng.integers(len(targets)))]
    improved = promote(market, agent, target, ties)
    assert improved is not None
    return target, improved


class Fixture(BaseModel):
    """A worked example market with its named allocations and the known solution sets."""

    model_config = ConfigDict(frozen=True)

    name: str
    market: Market
    k: int | None = None
    allocations: dict[str, Allocation] = Field(default_factory=dict)
    expected: dict[str, frozenset[str]] = Field(default_factory=dict)

    def expected_set(self, key: Concept | str) -> set[Allocation]:
        label = key.value if isinstance(key, Concept) else key
        return {self.allocations[name] for name in self.expected[label]}


def _market(prefs: list[list[list[int]]]) -> Market:
    return market_from_tiers([[[obj - 1 for obj in tier] for tier in agent] for agent in prefs])


def _alloc(n: int, *cycles: tuple[int, ...]) -> Allocation:
    return Allocation.from_cycles(n, ([agent - 1 for agent in cycle] for cycle in cycles))


def _replace(prefs: list[list[list[int]]], changes: dict[int, list[list[int]]]) -> list[list[list[int]]]:
    return [changes.get(agent, tiers) for agent, tiers in enumerate(prefs, start=1)]


def _ring(n: int) -> list[list[list[int]]]:
    return [[[i % n + 1], [(i - 2) % n + 1]] for i in range(1, n + 1)]


def fixtures() -> dict[str, Fixture]:
    """Agents in the preference lists below are one-based; each list omits the agent's own object."""
    intro: list[list[list[int]]] = [[[2]], [[1], [3]], [[1], [4]], []]
    example1: list[list[list[int]]] = [[[2, 3], [5]], [[1], [3]], [[2], [4]], [[3], [2]], [[2], [6]], [[1]]]
    example2: list[list[list[int]]] = [[[4], [2]], [[1], [3, 5]], [[4], [2]], [[1]], [[2]]]
    pairwise1: list[list[list[int]]] = [[[2], [3]], [[1], [4]], [], [[2]]]
    pairwise2: list[list[list[int]]] = [[[2], [3]], [[4], [1]], [[4]], [[3], [2]]]
    ties: list[list[list[int]]] = [[[3]], [[4]], [[1, 4]], [[1], [3], [2]]]
    ring = _ring(10)
    ring_b = _replace(ring, {1: [[4], [2], [10]], 4: [[5], [8], [3]], 8: [[1], [9], [7]]})
    ring_c = _replace(ring_b, {8: [[9], [7]]})

    e1 = {
        "a": _alloc(6, (1, 3, 2)),
        "b": _alloc(6, (1, 2), (3, 4)),
        "c": _alloc(6, (1, 5, 2), (3, 4)),
        "d": _alloc(6, (1, 3, 4, 2)),
        "e": _alloc(6, (1, 5, 6), (2, 3, 4)),
    }
    e2 = {"a": _alloc(5, (1, 4), (2, 5)), "b": _alloc(5, (1, 4), (2, 3)), "c": _alloc(5, (1, 2), (3, 4))}
    p1 = {"a": _alloc(4, (1, 2)), "b": _alloc(4, (2, 4)), "c": _alloc(4, (1, 3), (2, 4))}
    p2 = {"a": _alloc(4, (1, 2), (3, 4)), "b": _alloc(4, (1, 3), (2, 4))}
    pt = {"a": _alloc(4, (3, 4)), "b": _alloc(4, (1, 3), (2, 4))}
    e6 = {
        "a": _alloc(10, (1, 2), (3, 4), (5, 6), (7, 8), (9, 10)),
        "b": _alloc(10, (10, 1), (2, 3), (4, 5), (6, 7), (8, 9)),
    }
    sw = {"a": _alloc(3, (1, 2)), "b": _alloc(3, (2, 3))}

    def fs(*names: str) -> frozenset[str]:
        return frozenset(names)

    listing = [
        Fixture(
            name="intro-fig1-initial",
            market=_market(intro),
            allocations={"a": _alloc(4, (1, 2, 3))},
            expected={MAX_SIZE: fs("a")},
        ),
        Fixture(
            name="intro-fig1",
            market=_market(_replace(intro, {4: [[3]]})),
            allocations={"a": _alloc(4, (1, 2), (3, 4))},
            expected={MAX_SIZE: fs("a")},
        ),
        Fixture(
            name="example1",
            market=_market(example1),
            allocations=e1,
            expected={
                Concept.CORE.value: fs("a", "b", "c", "d"),
                Concept.COMPETITIVE.value: fs("a", "b"),
                Concept.STRONG_CORE.value: fs("a"),
                MAX_SIZE: fs("e"),
            },
        ),
        Fixture(
            name="example2-R",
            market=_market(example2),
            allocations=e2,
            expected={Concept.COMPETITIVE.value: fs("a", "b")},
        ),
        Fixture(
            name="example2-Rtilde",
            market=_market(_replace(example2, {2: [[3], [1], [5]], 4: [[1, 3]]})),
            allocations=e2,
            expected={Concept.COMPETITIVE.value: fs("b", "c")},
        ),
        Fixture(
            name="sotomayor-wako",
            market=_market([[[2], [3]], [[1, 3]], [[2], [1]]]),
            allocations=sw,
            expected={Concept.STRONG_CORE.value: fs(), Concept.COMPETITIVE.value: fs("a", "b")},
        ),
        Fixture(
            name="pairwise1-R",
            market=_market(pairwise1),
            k=2,
            allocations=p1,
            expected={MAX_SIZE: fs("a", "b")},
        ),
        Fixture(
            name="pairwise1-Rtilde",
            market=_market(_replace(pairwise1, {3: [[1]]})),
            k=2,
            allocations=p1,
            expected={MAX_SIZE: fs("c")},
        ),
        Fixture(
            name="pairwise2-R",
            market=_market(pairwise2),
            k=2,
            allocations=p2,
            expected={Concept.STRONG_CORE.value: fs("a")},
        ),
        Fixture(
            name="pairwise2-Rtilde",
            market=_market(_replace(pairwise2, {3: [[1], [4]]})),
            k=2,
            allocations=p2,
            expected={Concept.STRONG_CORE.value: fs("a", "b")},
        ),
        Fixture(
            name="pairwise-ties-R",
            market=_market(ties),
            k=2,
            allocations=pt,
            expected={
                Concept.CORE.value: fs("a", "b"),
                Concept.COMPETITIVE.value: fs("a", "b"),
                Concept.STRONG_CORE.value: fs(),
            },
        ),
        Fixture(
            name="pairwise-ties-Rtilde",
            market=_market(_replace(ties, {1: [[3], [4]]})),
            k=2,
            allocations=pt,
            expected={Concept.CORE.value: fs("b")},
        ),
        Fixture(
            name="example6-R",
            market=_market(ring),
            k=3,
            allocations=e6,
            expected={Concept.CORE.value: fs("a", "b")},
        ),
        Fixture(
            name="example6-Rb",
            market=_market(ring_b),
            k=3,
            allocations=e6,
            expected={c.value: fs("b") for c in STABLE_CONCEPTS},
        ),
        Fixture(
            name="proposition2-R",
            market=_market(ring_c),
            k=3,
            allocations=e6,
            expected={c.value: fs("a", "b") for c in STABLE_CONCEPTS},
        ),
    ]
    return {fixture.name: fixture for fixture in listing}
