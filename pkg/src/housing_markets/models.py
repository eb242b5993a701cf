import enum
import math
from collections.abc import Iterable, Sequence

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, model_validator

Edge = tuple[int, int]


def _rank_key(rank: int | None) -> float:
    return math.inf if rank is None else rank


class Market(BaseModel):
    """A housing market with weak preferences.

    ``ranks[i][j]`` is the level at which agent ``i`` ranks object ``j`` (smaller is better),
    ``None`` when the object is unacceptable. Agents and objects are zero-based.
    """

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1)
    ranks: tuple[tuple[int | None, ...], ...]
    weights: dict[Edge, float] = Field(default_factory=dict)

    def rank(self, agent: int, obj: int) -> int | None:
        return self.ranks[agent][obj]

    def acceptable(self, agent: int, obj: int) -> bool:
        return self.ranks[agent][obj] is not None

    def weakly_prefers(self, agent: int, a: int, b: int) -> bool:
        return _rank_key(self.ranks[agent][a]) <= _rank_key(self.ranks[agent][b])

    def prefers(self, agent: int, a: int, b: int) -> bool:
        return _rank_key(self.ranks[agent][a]) < _rank_key(self.ranks[agent][b])

    def indifferent(self, agent: int, a: int, b: int) -> bool:
        return _rank_key(self.ranks[agent][a]) == _rank_key(self.ranks[agent][b])

    def acceptable_objects(self, agent: int) -> list[int]:
        row = self.ranks[agent]
        return sorted((j for j in range(self.n) if row[j] is not None), key=lambda j: (row[j], j))

    def tiers(self, agent: int) -> list[list[int]]:
        """Acceptable objects grouped by rank, best tier first."""
        grouped: dict[int, list[int]] = {}
        for obj in self.acceptable_objects(agent):
            rank = self.ranks[agent][obj]
            assert rank is not None
            grouped.setdefault(rank, []).append(obj)
        return [grouped[rank] for rank in sorted(grouped)]

    def is_strict(self) -> bool:
        return all(len(tier) == 1 for agent in range(self.n) for tier in self.tiers(agent))

    def weight(self, agent: int, obj: int) -> float:
        if agent == obj:
            return 0.0
        return self.weights.get((agent, obj), 0.0)


class Allocation(BaseModel):
    """``allot[i]`` is the object received by agent ``i``."""

    model_config = ConfigDict(frozen=True)

    allot: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.allot)

    @classmethod
    def identity(cls, n: int) -> "Allocation":
        return cls(allot=tuple(range(n)))

    @classmethod
    def from_cycles(cls, n: int, cycles: Iterable[Sequence[int]]) -> "Allocation":
        allot = list(range(n))
        for cycle in cycles:
            for pos, agent in enumerate(cycle):
                allot[agent] = cycle[(pos + 1) % len(cycle)]
        return cls(allot=tuple(allot))


class ExchangeCycle(BaseModel):
    """Agent ``nodes[l]`` receives the object of ``nodes[l + 1]``; the last agent receives the first object."""

    model_config = ConfigDict(frozen=True)

    nodes: tuple[int, ...]

    @model_validator(mode="after")
    def _check_nodes(self) -> "ExchangeCycle":
        if not self.nodes:
            raise ValueError("an exchange cycle needs at least one agent")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"repeated agent in cycle {self.nodes}")
        return self

    @classmethod
    def canonical(cls, nodes: Sequence[int]) -> "ExchangeCycle":
        start = nodes.index(min(nodes))
        return cls(nodes=tuple(nodes[start:]) + tuple(nodes[:start]))

    @property
    def edges(self) -> tuple[Edge, ...]:
        k = len(self.nodes)
        return tuple((self.nodes[pos], self.nodes[(pos + 1) % k]) for pos in range(k))

    def __len__(self) -> int:
        return len(self.nodes)

    def one_based(self) -> list[int]:
        return [agent + 1 for agent in self.nodes]


class AcceptabilityGraph(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    edges: frozenset[Edge]

    def out_neighbours(self, agent: int) -> list[int]:
        return sorted(j for i, j in self.edges if i == agent)

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges)
        return graph


class ViolationKind(enum.Enum):
    BAD_SHAPE = "bad_shape"
    MISSING_SELF_RANK = "missing_self_rank"
    RANKED_BELOW_OWN = "ranked_below_own"
    STRAY_WEIGHT = "stray_weight"
    MISSING_WEIGHT = "missing_weight"
    WEIGHT_OUT_OF_RANGE = "weight_out_of_range"


class Violation(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ViolationKind
    agent: int | None = None
    edge: Edge | None = None
    message: str

    def __str__(self) -> str:
        return f"{self.kind.value}: {self.message}"


class PriceVector(BaseModel):
    """Integer prices in ``1..n``, indexed by object."""

    model_config = ConfigDict(frozen=True)

    prices: tuple[int, ...]


class Relation(enum.Enum):
    INDEPENDENT = "independent"
    CYCLE_MEMBERS = "cycle_members"
    PREDECESSOR_OF = "predecessor_of"
    SUCCESSOR_OF = "successor_of"


class TradeGraph(BaseModel):
    """Certificate of a top trading cycles or Quint-Wako run."""

    model_config = ConfigDict(frozen=True)

    n: int
    cycle_edges: frozenset[Edge]
    pointing_edges: frozenset[Edge]
    rounds: tuple[int, ...]


class AbsorbingSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    nodes: frozenset[int]
    edges: frozenset[Edge]
    round: int = 0


class CycleCover(BaseModel):
    model_config = ConfigDict(frozen=True)

    cycles: frozenset[ExchangeCycle]


class BlockMode(enum.Enum):
    STRICT = "strict"
    WEAK = "weak"
    ANTISYM_WEAK = "antisym-weak"


class BlockReport(BaseModel):
    cycles: list[ExchangeCycle] = Field(default_factory=list)
    improvable: frozenset[int] = frozenset()


class Concept(enum.Enum):
    NONE = "none"
    CORE = "core"
    COMPETITIVE = "competitive"
    STRONG_CORE = "strong-core"


class ObjectiveKind(enum.Enum):
    MAX_SIZE = "size"
    MAX_WEIGHT = "weight"
    BEST_FOR = "best-for"
    FEASIBILITY = "feasibility"
    LEXI = "lexi"


class Objective(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ObjectiveKind
    agent: int | None = None
    stages: tuple["Objective", ...] = ()

    @model_validator(mode="after")
    def _check_agent(self) -> "Objective":
        if self.kind is ObjectiveKind.BEST_FOR and self.agent is None:
            raise ValueError("best-for objective needs an agent")
        return self

    @classmethod
    def max_size(cls) -> "Objective":
        return cls(kind=ObjectiveKind.MAX_SIZE)

    @classmethod
    def max_weight(cls) -> "Objective":
        return cls(kind=ObjectiveKind.MAX_WEIGHT)

    @classmethod
    def feasibility(cls) -> "Objective":
        return cls(kind=ObjectiveKind.FEASIBILITY)

    @classmethod
    def best_for(cls, agent: int) -> "Objective":
        return cls(kind=ObjectiveKind.BEST_FOR, agent=agent)

    @classmethod
    def lexi(cls, *stages: "Objective") -> "Objective":
        return cls(kind=ObjectiveKind.LEXI, stages=stages)


class Formulation(BaseModel):
    """A solution concept, a cycle-length bound (``None`` for unbounded) and an objective."""

    model_config = ConfigDict(frozen=True)

    concept: Concept = Concept.NONE
    k: int | None = Field(default=None, ge=2)
    objective: Objective = Field(default_factory=Objective.max_size)

    @property
    def label(self) -> str:
        name = "max" if self.concept is Concept.NONE else self.concept.value
        return name if self.k is None else f"{name}-k{self.k}"
