"""Integer programming formulations for the core, competitive and strong core allocations.

Unbounded markets use the edge-and-price formulations: binary ``y_i_j`` per acceptability edge and
integer prices ``p_i`` in ``1..n`` with big-M equal to ``n``. Bounded markets link edge variables to
binary cycle variables ``c_...`` and add one stability row per exchange cycle.
"""

import logging
import re
from collections.abc import Mapping

from housing_markets.blocking import DEFAULT_PATH_LIMIT, enumerate_cycles
from housing_markets.errors import ModelError
from housing_markets.ilp import Constraint, IlpModel, LinearExpr, Sense, Variable, VarKind
from housing_markets.market import acceptability_graph
from housing_markets.models import (
    Allocation,
    Concept,
    Edge,
    ExchangeCycle,
    Market,
    Objective,
    ObjectiveKind,
    PriceVector,
)

logger = logging.getLogger(__name__)

_Y_NAME = re.compile(r"^y_(\d+)_(\d+)$")


def y_name(i: int, j: int) -> str:
    return f"y_{i + 1}_{j + 1}"


def p_name(i: int) -> str:
    return f"p_{i + 1}"


def cycle_name(cycle: ExchangeCycle) -> str:
    return "c_" + "_".join(str(a) for a in cycle.one_based())


def parse_y(name: str) -> Edge | None:
    match = _Y_NAME.match(name)
    if match is None:
        return None
    return int(match.group(1)) - 1, int(match.group(2)) - 1


def model_edges(model: IlpModel) -> list[Edge]:
    return [edge for edge in (parse_y(v.name) for v in model.variables) if edge is not None]


def _out_edges(model: IlpModel) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {i: [] for i in range(model.n)}
    for i, j in model_edges(model):
        out[i].append(j)
    return out


def base_model(market: Market, k: int | None = None, limit: int = DEFAULT_PATH_LIMIT) -> IlpModel:
    edges = set(acceptability_graph(market).edges)
    if k is not None:
        usable = {(i, i) for i in range(market.n)}
        for cycle in enumerate_cycles(market, k, limit):
            usable.update(cycle.edges)
        edges &= usable
    ordered = sorted(edges)

    variables = [Variable(name=y_name(i, j)) for i, j in ordered]
    rows = []
    for agent in range(market.n):
        rows.append(
            Constraint(
                name=f"out_{agent + 1}",
                terms=tuple((y_name(agent, j), 1.0) for i, j in ordered if i == agent),
                sense=Sense.EQ,
                rhs=1,
            )
        )
    for obj in range(market.n):
        rows.append(
            Constraint(
                name=f"in_{obj + 1}",
                terms=tuple((y_name(i, obj), 1.0) for i, j in ordered if j == obj),
                sense=Sense.EQ,
                rhs=1,
            )
        )
    return IlpModel(n=market.n, k=k, variables=tuple(variables), constraints=tuple(rows))


def _with_prices(model: IlpModel) -> IlpModel:
    if p_name(0) in model.variable_names():
        return model
    prices = [Variable(name=p_name(i), kind=VarKind.INTEGER, lower=1, upper=model.n) for i in range(model.n)]
    return model.with_variables(prices)


def add_core(model: IlpModel, market: Market) -> IlpModel:
    model = _with_prices(model)
    n = model.n
    out = _out_edges(model)
    rows = []
    for i, j in model_edges(model):
        if i == j:
            continue
        covering = [(y_name(i, k), -float(n)) for k in out[i] if market.weakly_prefers(i, k, j)]
        rows.append(
            Constraint(
                name=f"core_{i + 1}_{j + 1}",
                terms=((p_name(i), 1.0), (p_name(j), -1.0), *covering),
                sense=Sense.LE,
                rhs=-1,
            )
        )
    return model.with_constraints(rows)


def add_competitive(model: IlpModel, market: Market) -> IlpModel:
    del market
    model = _with_prices(model)
    n = model.n
    rows = [
        Constraint(
            name=f"comp_{i + 1}_{j + 1}",
            terms=((p_name(i), 1.0), (p_name(j), -1.0), (y_name(i, j), float(n))),
            sense=Sense.LE,
            rhs=n,
        )
        for i, j in model_edges(model)
        if i != j
    ]
    return model.with_constraints(rows)


def add_strong_core(model: IlpModel, market: Market) -> IlpModel:
    model = _with_prices(model)
    n = model.n
    out = _out_edges(model)
    rows = []
    for i, j in model_edges(model):
        if i == j:
            continue
        better = [(y_name(i, k), -float(n)) for k in out[i] if market.prefers(i, k, j)]
        rows.append(
            Constraint(
                name=f"strong_{i + 1}_{j + 1}",
                terms=((p_name(i), 1.0), (p_name(j), -1.0), *better),
                sense=Sense.LE,
                rhs=0,
            )
        )
    return model.with_constraints(rows)


def _cycle_row(market: Market, out: Mapping[int, list[int]], cycle: ExchangeCycle, concept: Concept) -> Constraint:
    size = float(len(cycle))
    terms: list[tuple[str, float]] = []
    if concept is Concept.CORE:
        for i, j in cycle.edges:
            terms.extend((y_name(i, k), 1.0) for k in out[i] if market.weakly_prefers(i, k, j))
        rhs = 1.0
    elif concept is Concept.STRONG_CORE:
        for i, j in cycle.edges:
            for k in out[i]:
                if market.indifferent(i, k, j):
                    terms.append((y_name(i, k), 1.0))
                elif market.prefers(i, k, j):
                    terms.append((y_name(i, k), size))
        rhs = size
    else:
        for i, j in cycle.edges:
            terms.append((y_name(i, j), 1.0))
            terms.extend((y_name(i, k), size) for k in out[i] if k != j and market.weakly_prefers(i, k, j))
        rhs = size
    name = "block_" + "_".join(str(a) for a in cycle.one_based())
    return Constraint(name=name, terms=tuple(terms), sense=Sense.GE, rhs=rhs)


def add_cycle_formulation(
    model: IlpModel,
    market: Market,
    k: int,
    concept: Concept,
    limit: int = DEFAULT_PATH_LIMIT,
) -> IlpModel:
    if k < 2:
        raise ModelError(f"cycle formulations need k >= 2, got {k}")
    if model.k != k:
        raise ModelError(f"base model is restricted to k={model.k}, not k={k}")
    cycles = enumerate_cycles(market, k, limit)
    out = _out_edges(model)

    containing: dict[Edge, list[str]] = {}
    for cycle in cycles:
        for edge in cycle.edges:
            containing.setdefault(edge, []).append(cycle_name(cycle))
    links = [
        Constraint(
            name=f"link_{i + 1}_{j + 1}",
            terms=((y_name(i, j), 1.0), *((name, -1.0) for name in containing.get((i, j), []))),
            sense=Sense.EQ,
            rhs=0,
        )
        for i, j in model_edges(model)
        if i != j
    ]
    rows = [] if concept is Concept.NONE else [_cycle_row(market, out, cycle, concept) for cycle in cycles]
    logger.debug("Cycle formulation for k=%s: %s cycles, concept %s", k, len(cycles), concept.value)
    return model.with_variables(Variable(name=cycle_name(c)) for c in cycles).with_constraints(links + rows)


def _stage(model: IlpModel, market: Market, objective: Objective) -> list[LinearExpr]:
    edges = [edge for edge in model_edges(model) if edge[0] != edge[1]]
    match objective.kind:
        case ObjectiveKind.MAX_SIZE:
            return [LinearExpr(terms=tuple((y_name(i, j), 1.0) for i, j in edges))]
        case ObjectiveKind.MAX_WEIGHT:
            return [LinearExpr(terms=tuple((y_name(i, j), market.weight(i, j)) for i, j in edges))]
        case ObjectiveKind.FEASIBILITY:
            return []
        case ObjectiveKind.BEST_FOR:
            agent = objective.agent
            assert agent is not None
            terms = []
            for i, j in model_edges(model):
                rank = market.rank(i, j)
                if i == agent and rank is not None:
                    terms.append((y_name(i, j), -float(rank)))
            return [LinearExpr(terms=tuple(terms))]
        case ObjectiveKind.LEXI:
            return [expr for sub in objective.stages for expr in _stage(model, market, sub)]
    raise ModelError(f"unknown objective {objective.kind}")


def set_objective(model: IlpModel, market: Market, objective: Objective) -> IlpModel:
    """Install ``objective``; best-for keeps the model's current stages and then maximizes the agent's rank."""
    stages = _stage(model, market, objective)
    if objective.kind is ObjectiveKind.BEST_FOR:
        stages = list(model.objectives) + stages
    return model.with_objectives(stages)


def build_model(
    market: Market,
    concept: Concept,
    k: int | None = None,
    objective: Objective | None = None,
    limit: int = DEFAULT_PATH_LIMIT,
) -> IlpModel:
    model = base_model(market, k, limit)
    if k is not None:
        model = add_cycle_formulation(model, market, k, concept, limit)
    elif concept is not Concept.NONE:
        model = add_core(model, market)
        if concept in (Concept.COMPETITIVE, Concept.STRONG_CORE):
            model = add_competitive(model, market)
        if concept is Concept.STRONG_CORE:
            model = add_strong_core(model, market)
    if objective is not None:
        model = set_objective(model, market, objective)
    return model


def decode_allocation(model: IlpModel, assignment: Mapping[str, float]) -> Allocation:
    allot = list(range(model.n))
    for name, value in assignment.items():
        edge = parse_y(name)
        if edge is not None and value > 0.5:
            allot[edge[0]] = edge[1]
    return Allocation(allot=tuple(allot))


def decode_prices(model: IlpModel, assignment: Mapping[str, float]) -> PriceVector | None:
    if p_name(0) not in assignment:
        return None
    return PriceVector(prices=tuple(int(round(assignment[p_name(i)])) for i in range(model.n)))
