"""Exact branch and bound for the housing-market integer programs, plus a brute-force oracle.

Only binary variables are branched on. Integer variables must appear in rows of the form
``p_a - p_b + (binary terms) <= rhs``; once the binaries are fixed those rows form a system of
difference constraints whose feasibility is a negative-cycle check.
"""

import enum
import itertools
import logging
import math
import re
import time
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import linear_sum_assignment

from housing_markets import blocking
from housing_markets.errors import CapExceededError, ModelError, OracleMismatchError, SolverLimitError, TooLargeError
from housing_markets.ilp import Constraint, IlpModel, LinearExpr, Sense, VarKind
from housing_markets.ip_models import decode_allocation, model_edges, parse_y, y_name
from housing_markets.market import acceptability_graph
from housing_markets.models import Allocation, BlockMode, Concept, Market

logger = logging.getLogger(__name__)

_EPS = 1e-6
_SOURCE = "source"
_CYCLE_NAME = re.compile(r"^c_(\d+(?:_\d+)+)$")

ORACLE_MAX_AGENTS = 10
DEFINITIONAL_MAX_AGENTS = 7


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    LIMIT_HIT = "limit_hit"


class SolverLimits(BaseModel):
    node_limit: int = Field(default=10**7, ge=1)
    time_limit: float = Field(default=300.0, gt=0)
    first_feasible: bool = False


class SolveResult(BaseModel):
    status: SolveStatus
    assignment: dict[str, int] = Field(default_factory=dict)
    objective_values: tuple[float, ...] = ()
    nodes: int = 0
    wall_time: float = 0.0
    incumbents: list[tuple[int, float]] = Field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return bool(self.assignment)

    @property
    def objective(self) -> float | None:
        if not self.has_solution:
            return None
        return self.objective_values[0] if self.objective_values else 0.0


@dataclass
class _DiffRow:
    name: str
    plus: int | None
    minus: int | None
    terms: list[tuple[int, float]]
    rhs: float


@dataclass
class _Compiled:
    """Constraints rewritten as ``<=`` rows over indexed variables."""

    model: IlpModel
    binary_names: list[str] = field(default_factory=list)
    binary_index: dict[str, int] = field(default_factory=dict)
    int_names: list[str] = field(default_factory=list)
    int_lower: list[int] = field(default_factory=list)
    int_upper: list[int] = field(default_factory=list)
    fixed: dict[int, int] = field(default_factory=dict)
    rows: list[list[tuple[int, float]]] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    var_rows: list[list[int]] = field(default_factory=list)
    diff_rows: list[_DiffRow] = field(default_factory=list)
    cycle_support: dict[int, list[int]] = field(default_factory=dict)

    @classmethod
    def of(cls, model: IlpModel) -> "_Compiled":
        model.check_well_formed()
        compiled = cls(model=model)
        int_index: dict[str, int] = {}
        for var in model.variables:
            if var.kind is VarKind.BINARY:
                idx = len(compiled.binary_names)
                compiled.binary_index[var.name] = idx
                compiled.binary_names.append(var.name)
                compiled.var_rows.append([])
                if var.lower == var.upper:
                    compiled.fixed[idx] = var.lower
            else:
                int_index[var.name] = len(compiled.int_names)
                compiled.int_names.append(var.name)
                compiled.int_lower.append(var.lower)
                compiled.int_upper.append(var.upper)
        for constraint in model.constraints:
            for sign, rhs in _as_le(constraint):
                compiled._add(constraint.name, sign, constraint, rhs, int_index)
        compiled._find_cycle_support()
        return compiled

    def _add(self, name: str, sign: float, row: Constraint, rhs: float, int_index: Mapping[str, int]) -> None:
        binaries: dict[int, float] = {}
        integers: dict[int, float] = {}
        for var, coef in row.terms:
            if var in self.binary_index:
                idx = self.binary_index[var]
                binaries[idx] = binaries.get(idx, 0.0) + sign * coef
            else:
                idx = int_index[var]
                integers[idx] = integers.get(idx, 0.0) + sign * coef
        terms = [(idx, coef) for idx, coef in binaries.items() if coef != 0]
        integers = {idx: coef for idx, coef in integers.items() if coef != 0}
        if not integers:
            self.add_row(terms, rhs)
            return
        plus = [idx for idx, coef in integers.items() if coef == 1]
        minus = [idx for idx, coef in integers.items() if coef == -1]
        if len(plus) > 1 or len(minus) > 1 or len(plus) + len(minus) != len(integers):
            raise ModelError(f"row {name} is not a difference constraint over its integer variables")
        self.diff_rows.append(
            _DiffRow(name=name, plus=plus[0] if plus else None, minus=minus[0] if minus else None, terms=terms, rhs=rhs)
        )

    def add_row(self, terms: list[tuple[int, float]], rhs: float) -> int:
        index = len(self.rows)
        self.rows.append(terms)
        self.rhs.append(rhs)
        for var, _ in terms:
            self.var_rows[var].append(index)
        return index

    def _find_cycle_support(self) -> None:
        for idx, name in enumerate(self.binary_names):
            match = _CYCLE_NAME.match(name)
            if match is None:
                continue
            nodes = [int(a) - 1 for a in match.group(1).split("_")]
            support = [self.binary_index.get(y_name(u, v)) for u, v in itertools.pairwise([*nodes, nodes[0]])]
            if all(s is not None for s in support):
                self.cycle_support[idx] = [s for s in support if s is not None]

    def coefficients(self, expr: LinearExpr) -> dict[int, float]:
        coefs: dict[int, float] = {}
        for name, coef in expr.terms:
            if name not in self.binary_index:
                raise ModelError(f"objective term {name} is not a binary variable")
            idx = self.binary_index[name]
            coefs[idx] = coefs.get(idx, 0.0) + coef
        return coefs


def _as_le(row: Constraint) -> Iterator[tuple[float, float]]:
    if row.sense in (Sense.LE, Sense.EQ):
        yield 1.0, row.rhs
    if row.sense in (Sense.GE, Sense.EQ):
        yield -1.0, -row.rhs


class _AssignmentGrid:
    """Assignment relaxation over the ``y_i_j`` variables of a model with ``out_i``/``in_i`` rows."""

    def __init__(self, n: int, cells: list[tuple[int, int, int]]) -> None:
        self.n = n
        self.cells = cells

    @classmethod
    def detect(cls, compiled: _Compiled, objective: Mapping[int, float]) -> "_AssignmentGrid | None":
        model = compiled.model
        names = {row.name for row in model.constraints if row.sense is Sense.EQ}
        for agent in range(1, model.n + 1):
            if f"out_{agent}" not in names or f"in_{agent}" not in names:
                return None
        cells = []
        for idx, name in enumerate(compiled.binary_names):
            edge = parse_y(name)
            if edge is not None:
                cells.append((idx, edge[0], edge[1]))
        on_grid = {idx for idx, _, _ in cells}
        if any(idx not in on_grid for idx, coef in objective.items() if coef != 0):
            return None
        return cls(model.n, cells)

    def solve(self, values: list[int], costs: Mapping[int, float]) -> tuple[float, set[int]] | None:
        n = self.n
        big = 1.0 + 2.0 * sum(abs(c) for c in costs.values())
        allowed = np.zeros((n, n), dtype=bool)
        cost = np.zeros((n, n))
        var_at = np.full((n, n), -1, dtype=int)
        for idx, i, j in self.cells:
            if values[idx] != 0:
                allowed[i, j] = True
                cost[i, j] = costs.get(idx, 0.0)
                var_at[i, j] = idx
        for idx, i, j in self.cells:
            if values[idx] == 1:
                allowed[i, :] = False
                allowed[:, j] = False
                allowed[i, j] = True
        cost[~allowed] = -big
        rows, cols = linear_sum_assignment(cost, maximize=True)
        if not allowed[rows, cols].all():
            return None
        return float(cost[rows, cols].sum()), {int(var_at[i, j]) for i, j in zip(rows, cols, strict=True)}


def _negative_cycle(graph: nx.DiGraph) -> list[Any]:
    """Closed node walk ``[v0, ..., v0]`` of a negative cycle, searched from a virtual origin."""
    distance = dict.fromkeys(graph, 0)
    predecessor: dict[Any, Any] = {}
    edges = list(graph.edges(data="weight"))
    relaxed = None
    for _ in range(graph.number_of_nodes() + 1):
        relaxed = None
        for u, v, weight in edges:
            if distance[u] + weight < distance[v]:
                distance[v] = distance[u] + weight
                predecessor[v] = u
                relaxed = v
        if relaxed is None:
            raise ModelError("price system reported unbounded without a negative cycle")
    node = relaxed
    for _ in range(graph.number_of_nodes()):
        node = predecessor[node]
    cycle = [node]
    current = predecessor[node]
    while current != node:
        cycle.append(current)
        current = predecessor[current]
    cycle.append(node)
    cycle.reverse()
    return cycle


class _Stop(Exception):
    pass


class _Search:
    def __init__(
        self,
        compiled: _Compiled,
        stage: int,
        objective: dict[int, float],
        previous: list[tuple[dict[int, float], float]],
        limits: SolverLimits,
        deadline: float,
    ) -> None:
        self.compiled = compiled
        self.stage = stage
        self.objective = objective
        self.limits = limits
        self.deadline = deadline
        self.values = [-1] * len(compiled.binary_names)
        self.trail: list[int] = []
        self.nodes = 0
        self.limit_hit = False
        self.incumbent: tuple[float, list[int], list[int]] | None = None
        self.history: list[tuple[int, float]] = []

        # previous stages enter the relaxation as a weighted penalty
        weight = 1.0 + sum(abs(c) for c in objective.values())
        self.grid_costs = dict(objective)
        self.grid_offset = 0.0
        for coefs, optimum in previous:
            for idx, coef in coefs.items():
                self.grid_costs[idx] = self.grid_costs.get(idx, 0.0) + weight * coef
            self.grid_offset += weight * optimum
        self.grid = _AssignmentGrid.detect(compiled, self.grid_costs)

    # propagation

    def _fix(self, var: int, value: int) -> bool:
        self.values[var] = value
        self.trail.append(var)
        return self._propagate([var])

    def _undo(self, mark: int) -> None:
        while len(self.trail) > mark:
            self.values[self.trail.pop()] = -1

    def _propagate(self, queue: list[int], rows: Iterator[int] | None = None) -> bool:
        compiled = self.compiled
        pending = list(rows) if rows is not None else []
        while queue or pending:
            row_ids = pending if pending else compiled.var_rows[queue.pop()]
            pending = []
            for r in row_ids:
                terms = compiled.rows[r]
                rhs = compiled.rhs[r] + _EPS
                min_activity = 0.0
                for var, coef in terms:
                    value = self.values[var]
                    if value == -1:
                        if coef < 0:
                            min_activity += coef
                    else:
                        min_activity += coef * value
                if min_activity > rhs:
                    return False
                for var, coef in terms:
                    if self.values[var] != -1:
                        continue
                    if coef > 0 and min_activity + coef > rhs:
                        forced = 0
                    elif coef < 0 and min_activity - coef > rhs:
                        forced = 1
                    else:
                        continue
                    self.values[var] = forced
                    self.trail.append(var)
                    min_activity += coef * forced - min(coef, 0.0)
                    queue.append(var)
        return True

    # evaluation

    def _bound(self) -> tuple[float, set[int] | None] | None:
        if self.grid is not None:
            relaxed = self.grid.solve(self.values, self.grid_costs)
            if relaxed is None:
                return None
            value, chosen = relaxed
            return value - self.grid_offset, chosen
        total = 0.0
        for var, coef in self.objective.items():
            value = self.values[var]
            total += coef * value if value != -1 else max(coef, 0.0)
        return total, None

    def _tentative(self, chosen: set[int] | None) -> list[int]:
        t = list(self.values)
        if chosen is not None and self.grid is not None:
            for idx, _, _ in self.grid.cells:
                if t[idx] == -1:
                    t[idx] = 1 if idx in chosen else 0
        for idx, value in enumerate(t):
            if value != -1:
                continue
            support = self.compiled.cycle_support.get(idx)
            if support is not None:
                t[idx] = 1 if all(t[s] == 1 for s in support) else 0
            else:
                t[idx] = 1 if self.objective.get(idx, 0.0) > 0 else 0
        return t

    def _price_system(self, t: list[int]) -> tuple[list[int] | None, list[int]]:
        compiled = self.compiled
        if not compiled.diff_rows:
            return [], []
        graph = nx.DiGraph()
        graph.add_node(_SOURCE)
        for v in range(len(compiled.int_names)):
            graph.add_edge(_SOURCE, v, weight=compiled.int_upper[v], row=None)
            graph.add_edge(v, _SOURCE, weight=-compiled.int_lower[v], row=None)
        for r, row in enumerate(compiled.diff_rows):
            bound = math.floor(row.rhs - sum(coef * t[var] for var, coef in row.terms) + _EPS)
            head = row.plus if row.plus is not None else _SOURCE
            tail = row.minus if row.minus is not None else _SOURCE
            head_max = compiled.int_upper[head] if isinstance(head, int) else 0
            tail_min = compiled.int_lower[tail] if isinstance(tail, int) else 0
            if bound >= head_max - tail_min:
                continue
            if graph.has_edge(tail, head) and graph[tail][head]["weight"] <= bound:
                continue
            graph.add_edge(tail, head, weight=bound, row=r)
        try:
            _, distance = nx.bellman_ford_predecessor_and_distance(graph, _SOURCE)
        except nx.NetworkXUnbounded:
            cycle = _negative_cycle(graph)
            rows = [graph[u][v]["row"] for u, v in itertools.pairwise(cycle) if graph[u][v]["row"] is not None]
            return None, rows
        except nx.NetworkXException as e:
            raise ModelError(f"price system of stage {self.stage} could not be checked: {e}") from e
        return [int(distance[v]) for v in range(len(compiled.int_names))], []

    def _evaluate(self, t: list[int]) -> tuple[list[int] | None, list[int]]:
        """Integer values when ``t`` is feasible, otherwise the binaries of a violated row or cycle."""
        compiled = self.compiled
        for r, terms in enumerate(compiled.rows):
            if sum(coef * t[var] for var, coef in terms) > compiled.rhs[r] + _EPS:
                return None, [var for var, _ in terms]
        prices, rows = self._price_system(t)
        if prices is not None:
            return prices, []
        return None, [var for r in rows for var, _ in compiled.diff_rows[r].terms]

    def _value(self, t: list[int]) -> float:
        return sum(coef * t[var] for var, coef in self.objective.items())

    def _expand(self) -> tuple[int, list[int]] | None:
        bounded = self._bound()
        if bounded is None:
            return None
        bound, chosen = bounded
        if self.incumbent is not None and bound <= self.incumbent[0] + _EPS:
            return None
        t = self._tentative(chosen)
        prices, conflict = self._evaluate(t)
        free = [var for var in conflict if self.values[var] == -1]
        if prices is not None:
            value = self._value(t)
            if self.incumbent is None or value > self.incumbent[0] + _EPS:
                self.incumbent = (value, t, prices)
                self.history.append((self.stage, value))
                logger.debug("Stage %s incumbent %s after %s nodes", self.stage, value, self.nodes)
                if self.limits.first_feasible:
                    raise _Stop
            if value >= bound - _EPS:
                return None
            free = [var for var, coef in self.objective.items() if coef > 0 and self.values[var] == -1 and t[var] == 0]
            free = free or [var for var, value in enumerate(self.values) if value == -1]
        if not free:
            return None
        var = min(free)
        return var, [1 - t[var], t[var]]

    def warm_start(self, t: list[int], prices: list[int]) -> None:
        value = self._value(t)
        self.incumbent = (value, t, prices)
        self.history.append((self.stage, value))

    def run(self) -> None:
        for var, value in self.compiled.fixed.items():
            self.values[var] = value
            self.trail.append(var)
        if not self._propagate([], rows=iter(range(len(self.compiled.rows)))):
            return
        try:
            decision = self._expand()
            stack = [(len(self.trail), decision[0], decision[1])] if decision else []
            while stack:
                mark, var, options = stack[-1]
                self._undo(mark)
                if not options:
                    stack.pop()
                    continue
                value = options.pop(0)
                self.nodes += 1
                if self.nodes > self.limits.node_limit or time.monotonic() > self.deadline:
                    self.limit_hit = True
                    return
                if not self._fix(var, value):
                    continue
                decision = self._expand()
                if decision is not None:
                    stack.append((len(self.trail), decision[0], decision[1]))
        except _Stop:
            return


def _assignment(compiled: _Compiled, t: list[int], prices: list[int]) -> dict[str, int]:
    values = {name: t[idx] for idx, name in enumerate(compiled.binary_names)}
    values.update({name: prices[idx] for idx, name in enumerate(compiled.int_names)})
    return values


def solve(model: IlpModel, limits: SolverLimits | None = None) -> SolveResult:
    limits = limits or SolverLimits()
    started = time.monotonic()
    deadline = started + limits.time_limit
    compiled = _Compiled.of(model)
    stages = [compiled.coefficients(expr) for expr in model.objectives] or [{}]

    previous: list[tuple[dict[int, float], float]] = []
    nodes = 0
    history: list[tuple[int, float]] = []
    best: tuple[float, list[int], list[int]] | None = None
    status = SolveStatus.OPTIMAL
    for stage, objective in enumerate(stages):
        search = _Search(compiled, stage, objective, previous, limits, deadline)
        if best is not None:
            search.warm_start(best[1], best[2])
        search.run()
        nodes += search.nodes
        history.extend(search.history)
        if search.incumbent is None:
            status = SolveStatus.LIMIT_HIT if search.limit_hit else SolveStatus.INFEASIBLE
            break
        best = search.incumbent
        if search.limit_hit:
            status = SolveStatus.LIMIT_HIT
            break
        if limits.first_feasible:
            status = SolveStatus.FEASIBLE
            break
        optimum = best[0]
        previous.append((objective, optimum))
        compiled.add_row([(var, -coef) for var, coef in objective.items()], -(optimum - _EPS))

    wall_time = time.monotonic() - started
    if best is None or status is SolveStatus.INFEASIBLE:
        logger.debug("Model %s: %s after %s nodes", model.name, status.value, nodes)
        return SolveResult(status=status, nodes=nodes, wall_time=wall_time, incumbents=history)

    t, prices = best[1], best[2]
    values = tuple(sum(coef * t[var] for var, coef in objective.items()) for objective in stages if objective)
    logger.debug("Model %s: %s with %s after %s nodes", model.name, status.value, values, nodes)
    return SolveResult(
        status=status,
        assignment=_assignment(compiled, t, prices),
        objective_values=values,
        nodes=nodes,
        wall_time=wall_time,
        incumbents=history,
    )


def enumerate_feasible(model: IlpModel, cap: int = 10_000, limits: SolverLimits | None = None) -> set[Allocation]:
    """Every allocation encoded by a feasible point, found by solving and excluding one support at a time."""
    model = model.with_objectives(())
    non_self = [y_name(i, j) for i, j in model_edges(model) if i != j]
    found: set[Allocation] = set()
    while True:
        result = solve(model, limits)
        if result.status is SolveStatus.INFEASIBLE:
            return found
        if result.status is not SolveStatus.OPTIMAL:
            raise SolverLimitError(f"enumeration stopped after {len(found)} allocations: {result.status.value}")
        allocation = decode_allocation(model, result.assignment)
        found.add(allocation)
        if len(found) > cap:
            raise CapExceededError(cap)
        support = [name for name in non_self if result.assignment[name] == 1]
        chosen = set(support)
        cut = Constraint(
            name=f"nogood_{len(found)}",
            terms=tuple((name, 1.0 if name in chosen else -1.0) for name in non_self),
            sense=Sense.LE,
            rhs=len(support) - 1,
        )
        model = model.with_constraints([cut])


def _ir_allocations(market: Market, k: int | None) -> Iterator[Allocation]:
    """Every individually rational allocation with cycles of length at most ``k``, by cycle packing."""
    graph = acceptability_graph(market)
    successors = [[j for j in graph.out_neighbours(i) if j != i] for i in range(market.n)]
    bound = market.n if k is None else k
    allot = list(range(market.n))

    def cycles_through(anchor: int, free: set[int]) -> Iterator[list[int]]:
        path = [anchor]

        def extend(node: int) -> Iterator[list[int]]:
            for nxt in successors[node]:
                if nxt == anchor and len(path) >= 2:
                    yield list(path)
                elif nxt in free and nxt not in path and len(path) < bound:
                    path.append(nxt)
                    yield from extend(nxt)
                    path.pop()

        yield from extend(anchor)

    def pack(free: set[int]) -> Iterator[Allocation]:
        if not free:
            yield Allocation(allot=tuple(allot))
            return
        anchor = min(free)
        yield from pack(free - {anchor})
        for cycle in cycles_through(anchor, free - {anchor}):
            for pos, agent in enumerate(cycle):
                allot[agent] = cycle[(pos + 1) % len(cycle)]
            yield from pack(free - set(cycle))
            for agent in cycle:
                allot[agent] = agent

    yield from pack(set(range(market.n)))


_MODES = {
    Concept.CORE: BlockMode.STRICT,
    Concept.COMPETITIVE: BlockMode.ANTISYM_WEAK,
    Concept.STRONG_CORE: BlockMode.WEAK,
}


def oracle(market: Market, concept: Concept, k: int | None = None, definitional: bool | None = None) -> set[Allocation]:
    """Brute-force solution set from the definitions.

    With ``definitional`` (default for markets of at most seven agents) every coalition is checked and
    compared against the blocking-cycle search.
    """
    if market.n > ORACLE_MAX_AGENTS:
        raise TooLargeError(market.n, ORACLE_MAX_AGENTS)
    if definitional is None:
        definitional = market.n <= DEFINITIONAL_MAX_AGENTS
    length = market.n if k is None else min(k, market.n)

    accepted: set[Allocation] = set()
    for alloc in _ir_allocations(market, k):
        if concept is Concept.NONE:
            accepted.add(alloc)
            continue
        mode = _MODES[concept]
        by_cycles = next(blocking.iter_blocking_cycles(market, alloc, length, mode), None) is None
        if definitional:
            by_coalitions = not blocking.coalition_blocks(market, alloc, mode, k)
            if by_coalitions != by_cycles:
                raise OracleMismatchError(
                    f"{concept.value} membership of {[x + 1 for x in alloc.allot]} differs between "
                    f"coalitions ({by_coalitions}) and cycles ({by_cycles})"
                )
        if by_cycles:
            accepted.add(alloc)
    return accepted
