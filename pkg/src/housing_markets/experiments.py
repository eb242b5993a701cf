"""Batch experiments: price of fairness, blocking-cycle statistics and the respecting-improvement audit.

Cells run on worker threads behind an ``asyncio`` semaphore; results are collected by key, so the
emitted tables do not depend on scheduling.
"""

import asyncio
import csv
import enum
import logging
import pathlib
from collections.abc import Callable, Hashable, Iterable, Sequence
from typing import ClassVar, TypeVar

import jinja2
from pydantic import BaseModel

from housing_markets.blocking import DEFAULT_PATH_LIMIT, find_blocking_cycles
from housing_markets.errors import HousingMarketError, ImprovementError, LimitExceededError, SolverLimitError
from housing_markets.ilp import IlpModel
from housing_markets.ip_models import build_model, decode_allocation
from housing_markets.market import is_improvement, promote, size
from housing_markets.models import Allocation, BlockMode, Concept, Formulation, Market, Objective, ObjectiveKind
from housing_markets.solver import SolverLimits, SolveResult, SolveStatus, enumerate_feasible, solve
from housing_markets.templating import template_environment

logger = logging.getLogger(__name__)

K = TypeVar("K", bound=Hashable)
R = TypeVar("R")

Family = Sequence[tuple[str, Market]]


class CsvRow(BaseModel):
    """A flat record written as one CSV line; ``ONE_BASED`` fields hold agent ids."""

    ONE_BASED: ClassVar[frozenset[str]] = frozenset()

    @classmethod
    def header(cls) -> list[str]:
        return list(cls.model_fields)

    def csv_row(self) -> list[str]:
        cells = []
        for name in self.header():
            value = getattr(self, name)
            if value is None:
                cells.append("")
            elif isinstance(value, bool):
                cells.append(str(value).lower())
            elif isinstance(value, float):
                cells.append(f"{value:.6f}")
            elif isinstance(value, enum.Enum):
                cells.append(str(value.value))
            elif name in self.ONE_BASED:
                cells.append(str(value + 1))
            else:
                cells.append(str(value))
        return cells


class PofRow(CsvRow):
    size: int
    model: str
    objective: str
    mean_pct: float | None
    feasible_count: int


class BlockingRow(CsvRow):
    size: int
    model: str
    objective: str
    l: int  # noqa: E741
    mean_cycles: float | None
    mean_improvable: float | None
    feasible_count: int
    limit_hits: int


class AuditStatus(enum.Enum):
    OK = "ok"
    SKIPPED = "skipped"
    ERROR = "error"


class RIAuditRecord(CsvRow):
    ONE_BASED: ClassVar[frozenset[str]] = frozenset({"agent", "target"})

    instance_id: str
    model: str
    agent: int
    target: int
    step: int
    rank_before: int | None
    rank_after: int | None
    violated: bool
    status: AuditStatus


def emit_csv(rows: Iterable[CsvRow], path: pathlib.Path, row_type: type[CsvRow]) -> None:
    with path.open("w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(row_type.header())
        count = 0
        for row in rows:
            writer.writerow(row.csv_row())
            count += 1
    logger.info("Wrote %s rows to %s", count, path)


def formulation_model(
    market: Market, formulation: Formulation, best_for: int | None = None, path_limit: int = DEFAULT_PATH_LIMIT
) -> IlpModel:
    """The formulation's model; with ``best_for`` the agent's rank becomes the last objective stage.

    Maximum models keep their objective first; concept models only rank the agent.
    """
    objective = formulation.objective
    if best_for is not None:
        if formulation.concept is Concept.NONE:
            objective = Objective.lexi(objective, Objective.best_for(best_for))
        else:
            objective = Objective.best_for(best_for)
    return build_model(market, formulation.concept, formulation.k, objective, path_limit)


def solve_formulation(
    market: Market,
    formulation: Formulation,
    limits: SolverLimits | None = None,
    best_for: int | None = None,
    path_limit: int = DEFAULT_PATH_LIMIT,
) -> tuple[SolveResult, Allocation | None]:
    model = formulation_model(market, formulation, best_for, path_limit)
    result = solve(model, limits)
    if result.status is SolveStatus.LIMIT_HIT:
        raise SolverLimitError(f"{formulation.label} hit a solver limit after {result.nodes} nodes")
    if not result.has_solution:
        return result, None
    return result, decode_allocation(model, result.assignment)


async def run_cells(jobs: Sequence[tuple[K, Callable[[], R]]], workers: int = 4) -> dict[K, R | None]:
    """Run each job on a worker thread; a job raising ``HousingMarketError`` maps to ``None``."""
    semaphore = asyncio.Semaphore(workers)
    results: dict[K, R | None] = {}

    async def run(key: K, job: Callable[[], R]) -> None:
        async with semaphore:
            try:
                results[key] = await asyncio.to_thread(job)
            except HousingMarketError as e:
                logger.error("Cell %s failed: %s", key, e)
                results[key] = None

    async with asyncio.TaskGroup() as task_group:
        for key, job in jobs:
            task_group.create_task(run(key, job))
    return {key: results[key] for key, _ in jobs}


def _by_size(family: Family) -> dict[int, list[tuple[str, Market]]]:
    grouped: dict[int, list[tuple[str, Market]]] = {}
    for instance_id, market in family:
        grouped.setdefault(market.n, []).append((instance_id, market))
    return dict(sorted(grouped.items()))


def _objective_label(formulation: Formulation) -> str:
    return formulation.objective.kind.value


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


async def price_of_fairness(
    family: Family,
    formulations: Sequence[Formulation],
    limits: SolverLimits | None = None,
    workers: int = 4,
) -> list[PofRow]:
    """Mean percentage of transplants lost against the maximum-size optimum with the same bound."""

    def cell(market: Market, formulation: Formulation) -> int | None:
        _, alloc = solve_formulation(market, formulation, limits)
        return None if alloc is None else size(alloc)

    bounds = sorted({f.k for f in formulations}, key=lambda k: (k is None, k or 0))
    baselines = {k: Formulation(concept=Concept.NONE, k=k) for k in bounds}
    jobs: list[tuple[tuple[str, str, str], Callable[[], int | None]]] = []
    for instance_id, market in family:
        for k, baseline in baselines.items():
            jobs.append(((instance_id, "baseline", str(k)), lambda m=market, f=baseline: cell(m, f)))
        for index, formulation in enumerate(formulations):
            jobs.append(((instance_id, "cell", str(index)), lambda m=market, f=formulation: cell(m, f)))
    results = await run_cells(jobs, workers)

    rows = []
    for n, instances in _by_size(family).items():
        for index, formulation in enumerate(formulations):
            losses = []
            for instance_id, _ in instances:
                base = results[(instance_id, "baseline", str(formulation.k))]
                achieved = results[(instance_id, "cell", str(index))]
                if base is None or achieved is None:
                    continue
                losses.append(0.0 if base == 0 else 100.0 * (base - achieved) / base)
            rows.append(
                PofRow(
                    size=n,
                    model=formulation.label,
                    objective=_objective_label(formulation),
                    mean_pct=_mean(losses),
                    feasible_count=len(losses),
                )
            )
    return rows


class _BlockingCell(BaseModel):
    feasible: bool
    cycles: int = 0
    improvable: int = 0
    limit_hit: bool = False


async def blocking_stats(
    family: Family,
    formulations: Sequence[Formulation],
    length: int = 3,
    limits: SolverLimits | None = None,
    path_limit: int = DEFAULT_PATH_LIMIT,
    workers: int = 4,
) -> list[BlockingRow]:
    """Weakly blocking cycles up to ``length`` and improvable agents of each model's optimum."""

    def cell(market: Market, formulation: Formulation) -> _BlockingCell:
        _, alloc = solve_formulation(market, formulation, limits, path_limit=path_limit)
        if alloc is None:
            return _BlockingCell(feasible=False)
        try:
            report = find_blocking_cycles(market, alloc, length, BlockMode.WEAK, path_limit)
        except LimitExceededError:
            return _BlockingCell(feasible=True, limit_hit=True)
        return _BlockingCell(feasible=True, cycles=len(report.cycles), improvable=len(report.improvable))

    jobs: list[tuple[tuple[str, int], Callable[[], _BlockingCell]]] = [
        ((instance_id, index), lambda m=market, f=formulation: cell(m, f))
        for instance_id, market in family
        for index, formulation in enumerate(formulations)
    ]
    results = await run_cells(jobs, workers)

    rows = []
    for n, instances in _by_size(family).items():
        for index, formulation in enumerate(formulations):
            cells = [results[(instance_id, index)] for instance_id, _ in instances]
            counted = [c for c in cells if c is not None and c.feasible and not c.limit_hit]
            rows.append(
                BlockingRow(
                    size=n,
                    model=formulation.label,
                    objective=_objective_label(formulation),
                    l=length,
                    mean_cycles=_mean([float(c.cycles) for c in counted]),
                    mean_improvable=_mean([float(c.improvable) for c in counted]),
                    feasible_count=sum(1 for c in cells if c is not None and c.feasible),
                    limit_hits=sum(1 for c in cells if c is not None and c.limit_hit),
                )
            )
    return rows


def best_rank(
    market: Market, formulation: Formulation, agent: int, limits: SolverLimits | None = None
) -> int | None:
    """Rank of ``agent``'s best allotment under the formulation, ``None`` when it has no solution."""
    _, alloc = solve_formulation(market, formulation, limits, best_for=agent)
    if alloc is None:
        return None
    return market.rank(agent, alloc.allot[agent])


def worst_rank(
    market: Market, formulation: Formulation, agent: int, limits: SolverLimits | None = None
) -> int | None:
    """Rank of ``agent``'s worst allotment over a concept's solution set, ``None`` when it is empty."""
    if formulation.concept is Concept.NONE:
        raise ValueError("worst allotments are only defined over a concept's solution set")
    found = enumerate_feasible(formulation_model(market, formulation), limits=limits)
    ranks = [market.rank(agent, alloc.allot[agent]) for alloc in found]
    return max((r for r in ranks if r is not None), default=None)


def _record(
    formulation: Formulation,
    agent: int,
    target: int,
    step: int,
    before: int | None,
    after: int | None,
    status: AuditStatus,
    instance_id: str,
) -> RIAuditRecord:
    violated = status is AuditStatus.OK and before is not None and after is not None and after > before
    entry = RIAuditRecord(
        instance_id=instance_id,
        model=formulation.label,
        agent=agent,
        target=target,
        step=step,
        rank_before=before,
        rank_after=after,
        violated=violated,
        status=status,
    )
    if violated:
        logger.info(
            "RI violation on %s (%s): agent %s at %s, step %s, rank %s -> %s",
            instance_id,
            formulation.label,
            agent + 1,
            target + 1,
            step,
            before,
            after,
        )
    return entry


def audit_pair(
    before: Market,
    after: Market,
    formulation: Formulation,
    agent: int,
    target: int,
    instance_id: str = "",
    limits: SolverLimits | None = None,
) -> RIAuditRecord:
    """Audit one improvement of ``agent`` that ``target`` made between two markets."""
    if not is_improvement(before, after, agent):
        raise ImprovementError(f"the second market is not an improvement for agent {agent + 1}")
    rank_before = best_rank(before, formulation, agent, limits)
    rank_after = best_rank(after, formulation, agent, limits)
    status = AuditStatus.SKIPPED if rank_before is None or rank_after is None else AuditStatus.OK
    return _record(formulation, agent, target, 1, rank_before, rank_after, status, instance_id)


def _audit_chain(
    market: Market,
    formulation: Formulation,
    agent: int,
    target: int,
    ties: bool,
    instance_id: str,
    limits: SolverLimits | None,
) -> list[RIAuditRecord]:
    try:
        before = best_rank(market, formulation, agent, limits)
    except HousingMarketError as e:
        logger.error("Audit %s agent %s target %s: %s", instance_id, agent + 1, target + 1, e)
        return [_record(formulation, agent, target, 0, None, None, AuditStatus.ERROR, instance_id)]

    records = []
    current = market
    step = 0
    while (improved := promote(current, agent, target, ties)) is not None:
        step += 1
        try:
            if not is_improvement(current, improved, agent):
                raise ImprovementError(f"promotion step {step} changed more than the object of agent {agent + 1}")
            after = best_rank(improved, formulation, agent, limits)
        except HousingMarketError as e:
            logger.error("Audit %s agent %s target %s step %s: %s", instance_id, agent + 1, target + 1, step, e)
            records.append(_record(formulation, agent, target, step, before, None, AuditStatus.ERROR, instance_id))
            break
        status = AuditStatus.SKIPPED if before is None or after is None else AuditStatus.OK
        records.append(_record(formulation, agent, target, step, before, after, status, instance_id))
        current, before = improved, after
    return records


def ri_audit(
    market: Market,
    formulation: Formulation,
    instance_id: str = "",
    ties: bool | None = None,
    pairs: Iterable[tuple[int, int]] | None = None,
    limits: SolverLimits | None = None,
) -> list[RIAuditRecord]:
    """Promote each agent step by step in each other agent's list and compare best allotments.

    Every chain starts from ``market``; within a chain the promoted preferences carry forward.
    A step is a violation when the agent's best rank gets strictly worse.
    """
    if ties is None:
        ties = not market.is_strict()
    if pairs is None:
        pairs = [(i, j) for i in range(market.n) for j in range(market.n) if i != j]
    return [
        record
        for agent, target in pairs
        for record in _audit_chain(market, formulation, agent, target, ties, instance_id, limits)
    ]


async def ri_experiment(
    family: Family,
    formulations: Sequence[Formulation],
    limits: SolverLimits | None = None,
    workers: int = 4,
) -> list[RIAuditRecord]:
    jobs: list[tuple[tuple[str, int], Callable[[], list[RIAuditRecord]]]] = [
        ((instance_id, index), lambda m=market, f=formulation, i=instance_id: ri_audit(m, f, i, limits=limits))
        for instance_id, market in family
        for index, formulation in enumerate(formulations)
    ]
    results = await run_cells(jobs, workers)
    return [record for chunk in results.values() if chunk is not None for record in chunk]


class RISummaryLine(BaseModel):
    model: str
    steps: int
    violations: int
    skipped: int
    errors: int


def summarize(records: Iterable[RIAuditRecord]) -> list[RISummaryLine]:
    lines: dict[str, RISummaryLine] = {}
    for r in records:
        line = lines.setdefault(r.model, RISummaryLine(model=r.model, steps=0, violations=0, skipped=0, errors=0))
        line.steps += 1
        line.violations += int(r.violated)
        line.skipped += int(r.status is AuditStatus.SKIPPED)
        line.errors += int(r.status is AuditStatus.ERROR)
    return [lines[name] for name in sorted(lines)]


def render_ri_summary(records: Sequence[RIAuditRecord], template_env: jinja2.Environment | None = None) -> str:
    env = template_env or template_environment()
    return env.get_template("ri_summary.j2").render(
        lines=summarize(records),
        violations=[r for r in records if r.violated],
    )


def objective_of(kind: ObjectiveKind) -> Objective:
    if kind is ObjectiveKind.MAX_SIZE:
        return Objective.max_size()
    if kind is ObjectiveKind.MAX_WEIGHT:
        return Objective.max_weight()
    if kind is ObjectiveKind.FEASIBILITY:
        return Objective.feasibility()
    raise ValueError(f"{kind.value} needs more than a kind to build")


def grid(concepts: Iterable[Concept], objectives: Iterable[ObjectiveKind], k: int | None) -> list[Formulation]:
    """The maximum model and every concept, each under every objective."""
    objectives = list(objectives)
    return [
        Formulation(concept=concept, k=k, objective=objective_of(kind))
        for concept in [Concept.NONE, *concepts]
        for kind in objectives
    ]
