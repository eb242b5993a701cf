import asyncio
import contextlib
import json
import pathlib
from collections.abc import Iterator
from typing import Annotated, Any

import typer

from housing_markets import blocking, config, experiments, instances, ip_models, lp_format, market, quint_wako, solver, ttc
from housing_markets.errors import HousingMarketError
from housing_markets.ilp import IlpModel
from housing_markets.models import BlockMode, Concept, Formulation, Market, Objective, ObjectiveKind, TradeGraph
from housing_markets.toolkit_logger import ToolkitLogger

app = typer.Typer()
experiment_app = typer.Typer()
app.add_typer(experiment_app, name="experiment")

InstanceArg = Annotated[pathlib.Path, typer.Argument(exists=True, dir_okay=False)]
ConceptOpt = Annotated[Concept, typer.Option("--concept")]
BoundOpt = Annotated[str | None, typer.Option("--k", help="Longest exchange cycle, 'inf' for unbounded.")]
ObjectiveOpt = Annotated[ObjectiveKind, typer.Option("--objective")]
AgentOpt = Annotated[int | None, typer.Option("--agent", help="One-based agent for the best-for objective.")]
OutOpt = Annotated[pathlib.Path | None, typer.Option("--out", "-o")]


@app.callback()
def main(
    ctx: typer.Context,
    config_path: Annotated[
        pathlib.Path | None, typer.Option("--config", envvar="HOUSING_MARKETS_CONFIG_PATH")
    ] = None,
) -> None:
    ToolkitLogger.get_logger("housing_markets")
    ctx.obj = config.load_config(config_path, config.ToolkitConfig)


@contextlib.contextmanager
def _reported() -> Iterator[None]:
    try:
        yield
    except HousingMarketError as e:
        typer.echo(str(e), err=True)
        raise typer.Exit(1) from e


def _echo_json(data: Any, out: pathlib.Path | None = None) -> None:
    text = json.dumps(data, indent=2)
    if out is None:
        typer.echo(text)
    else:
        out.write_text(text + "\n")


def _parse_k(value: str | None, default: int | None = None) -> int | None:
    if value is None:
        return default
    if value.lower() == "inf":
        return None
    k = int(value)
    if k < 2:
        raise typer.BadParameter("k must be at least 2 or 'inf'")
    return k


def _parse_sizes(value: str | None, default: list[int]) -> list[int]:
    return default if value is None else [int(part) for part in value.split(",") if part.strip()]


def _objective(kind: ObjectiveKind, agent: int | None) -> Objective:
    if kind is ObjectiveKind.BEST_FOR:
        if agent is None:
            raise typer.BadParameter("the best-for objective needs --agent")
        return Objective.best_for(agent - 1)
    if kind is ObjectiveKind.LEXI:
        raise typer.BadParameter("lexicographic objectives are only available from Python")
    return experiments.objective_of(kind)


def _settings(ctx: typer.Context) -> config.ToolkitConfig:
    settings: config.ToolkitConfig = ctx.obj
    return settings


def _limits(settings: config.ToolkitConfig) -> solver.SolverLimits:
    return solver.SolverLimits(node_limit=settings.solver.node_limit, time_limit=settings.solver.time_limit)


@app.command()
def gen(
    ctx: typer.Context,
    n: Annotated[int, typer.Option("--n")],
    p: Annotated[float | None, typer.Option("--p")] = None,
    ties: Annotated[bool | None, typer.Option("--ties/--strict")] = None,
    seed: Annotated[int, typer.Option("--seed")] = 0,
    out: OutOpt = None,
) -> None:
    """Generate a random market as JSON."""
    settings = _settings(ctx)
    cfg = instances.GenConfig(
        n=n,
        edge_probability=settings.generator.edge_probability if p is None else p,
        ties=settings.generator.ties if ties is None else ties,
        seed=seed,
    )
    _echo_json(market.market_to_json(instances.generate(cfg)), out)


def _tie_break(value: str) -> ttc.TieBreak | None:
    if value == "identity":
        return None
    path = pathlib.Path(value)
    if not path.is_file():
        raise typer.BadParameter("expected 'identity' or a JSON file of one-based tie orders")
    data = json.loads(path.read_text())
    return {int(agent) - 1: [int(obj) - 1 for obj in order] for agent, order in data.items()}


def _trade_graph_json(graph: TradeGraph) -> dict[str, Any]:
    return {
        "n": graph.n,
        "cycle_edges": sorted([u + 1, v + 1] for u, v in graph.cycle_edges),
        "pointing_edges": sorted([u + 1, v + 1] for u, v in graph.pointing_edges),
        "rounds": list(graph.rounds),
    }


@app.command("ttc")
def run_ttc(
    ctx: typer.Context,
    instance: InstanceArg,
    tiebreak: Annotated[
        str, typer.Option("--tiebreak", help="'identity' or a JSON file mapping agents to tie orders.")
    ] = "identity",
    emit_tradegraph: Annotated[pathlib.Path | None, typer.Option("--emit-tradegraph")] = None,
    all_ties: bool = False,
) -> None:
    """Top trading cycles, or with --all-ties every competitive allocation via tie-breaking."""
    with _reported():
        mkt = market.load_market(instance)
        if all_ties:
            found = ttc.competitive_set_by_tiebreak(mkt, _settings(ctx).ttc.tiebreak_cap)
            _echo_json([market.allocation_to_json(a) for a in sorted(found, key=lambda a: a.allot)])
            return
        alloc, graph = ttc.ttc(mkt, _tie_break(tiebreak))
        if emit_tradegraph is not None:
            _echo_json(_trade_graph_json(graph), emit_tradegraph)
        _echo_json({**market.allocation_to_json(alloc), "rounds": list(graph.rounds)})


@app.command("strong-core")
def run_strong_core(
    ctx: typer.Context,
    instance: InstanceArg,
    enumerate_all: Annotated[bool, typer.Option("--all")] = False,
    cap: Annotated[int | None, typer.Option("--cap", min=1, help="Most cycle covers to enumerate.")] = None,
) -> None:
    """Quint-Wako strong core allocation; prints null when the strong core is empty."""
    with _reported():
        mkt = market.load_market(instance)
        if enumerate_all:
            found = quint_wako.enumerate_strong_core(mkt, _settings(ctx).strong_core.cover_cap if cap is None else cap)
            _echo_json([market.allocation_to_json(a) for a in sorted(found, key=lambda a: a.allot)])
            return
        outcome = quint_wako.strong_core(mkt)
        _echo_json(None if outcome is None else market.allocation_to_json(outcome[0]))


def _build(
    ctx: typer.Context, mkt: Market, concept: Concept, k: str | None, objective: ObjectiveKind, agent: int | None
) -> IlpModel:
    return ip_models.build_model(
        mkt, concept, _parse_k(k), _objective(objective, agent), _settings(ctx).blocking.path_limit
    )


@app.command()
def model(
    ctx: typer.Context,
    instance: InstanceArg,
    concept: ConceptOpt = Concept.CORE,
    k: BoundOpt = None,
    objective: ObjectiveOpt = ObjectiveKind.MAX_SIZE,
    agent: AgentOpt = None,
    out: OutOpt = None,
) -> None:
    """Write the integer program for a concept in LP format."""
    with _reported():
        built = _build(ctx, market.load_market(instance), concept, k, objective, agent)
        if out is None:
            typer.echo(lp_format.export_lp(built), nl=False)
        else:
            lp_format.write_lp(built, out)


@app.command()
def solve(
    ctx: typer.Context,
    path: InstanceArg,
    concept: ConceptOpt = Concept.CORE,
    k: BoundOpt = None,
    objective: ObjectiveOpt = ObjectiveKind.MAX_SIZE,
    agent: AgentOpt = None,
    enumerate_all: Annotated[bool, typer.Option("--all")] = False,
) -> None:
    """Solve an LP file or an instance file under a concept and objective."""
    with _reported():
        settings = _settings(ctx)
        if path.suffix == ".lp":
            built = lp_format.load_lp(path)
        else:
            built = _build(ctx, market.load_market(path), concept, k, objective, agent)
        if enumerate_all:
            found = solver.enumerate_feasible(built, limits=_limits(settings))
            _echo_json([market.allocation_to_json(a) for a in sorted(found, key=lambda a: a.allot)])
            return
        result = solver.solve(built, _limits(settings))
        data: dict[str, Any] = {
            "status": result.status.value,
            "objective": result.objective,
            "objective_values": list(result.objective_values),
            "nodes": result.nodes,
            "wall_time": result.wall_time,
        }
        if result.has_solution:
            data["allocation"] = market.allocation_to_json(ip_models.decode_allocation(built, result.assignment))
            prices = ip_models.decode_prices(built, result.assignment)
            data["prices"] = None if prices is None else list(prices.prices)
        _echo_json(data)


@app.command()
def audit(
    ctx: typer.Context,
    instance: InstanceArg,
    allocation: Annotated[pathlib.Path, typer.Argument(exists=True, dir_okay=False)],
    mode: Annotated[BlockMode, typer.Option("--mode")] = BlockMode.WEAK,
    length: Annotated[int | None, typer.Option("--l", min=2, help="Longest blocking cycle.")] = None,
    k: BoundOpt = None,
) -> None:
    """Blocking cycles of an allocation and its membership in the three cores."""
    with _reported():
        settings = _settings(ctx)
        mkt = market.load_market(instance)
        alloc = market.load_allocation(allocation, mkt.n)
        bound = _parse_k(k)
        length = min(settings.experiment.l if length is None else length, mkt.n)
        report = blocking.find_blocking_cycles(mkt, alloc, length, mode, settings.blocking.path_limit)
        _echo_json(
            {
                "mode": mode.value,
                "l": length,
                "cycles": [c.one_based() for c in report.cycles],
                "improvable": sorted(a + 1 for a in report.improvable),
                "core": blocking.in_core(mkt, alloc, bound),
                "wako_core": blocking.in_wako_core(mkt, alloc, bound),
                "strong_core": blocking.in_strong_core(mkt, alloc, bound),
            }
        )


def _family(
    settings: config.ToolkitConfig, sizes: str | None, per_size: int | None, seed: int | None
) -> list[tuple[str, Market]]:
    section = settings.experiment
    return instances.family(
        _parse_sizes(sizes, section.sizes),
        section.per_size if per_size is None else per_size,
        section.seed if seed is None else seed,
        settings.generator.edge_probability,
        settings.generator.ties,
    )


SizesOpt = Annotated[str | None, typer.Option("--sizes", help="Comma-separated agent counts.")]
PerSizeOpt = Annotated[int | None, typer.Option("--per-size")]
SeedOpt = Annotated[int | None, typer.Option("--seed")]
ObjectivesOpt = Annotated[list[ObjectiveKind] | None, typer.Option("--objective")]


def _formulations(
    settings: config.ToolkitConfig, k: str | None, objectives: list[ObjectiveKind] | None
) -> list[Formulation]:
    section = settings.experiment
    return experiments.grid(section.concepts, objectives or section.objectives, _parse_k(k, section.k))


@experiment_app.command()
def pof(
    ctx: typer.Context,
    sizes: SizesOpt = None,
    per_size: PerSizeOpt = None,
    seed: SeedOpt = None,
    k: BoundOpt = None,
    objective: ObjectivesOpt = None,
    out: OutOpt = None,
) -> None:
    """Price of fairness per size and model."""
    settings = _settings(ctx)
    rows = asyncio.run(
        experiments.price_of_fairness(
            _family(settings, sizes, per_size, seed),
            _formulations(settings, k, objective),
            _limits(settings),
            settings.experiment.workers,
        )
    )
    experiments.emit_csv(rows, out or settings.experiment.out, experiments.PofRow)


@experiment_app.command("blocking")
def run_blocking(
    ctx: typer.Context,
    sizes: SizesOpt = None,
    per_size: PerSizeOpt = None,
    seed: SeedOpt = None,
    k: BoundOpt = None,
    length: Annotated[int | None, typer.Option("--l")] = None,
    objective: ObjectivesOpt = None,
    out: OutOpt = None,
) -> None:
    """Weakly blocking cycles and improvable agents per size and model."""
    settings = _settings(ctx)
    rows = asyncio.run(
        experiments.blocking_stats(
            _family(settings, sizes, per_size, seed),
            _formulations(settings, k, objective),
            settings.experiment.l if length is None else length,
            _limits(settings),
            settings.blocking.path_limit,
            settings.experiment.workers,
        )
    )
    experiments.emit_csv(rows, out or settings.experiment.out, experiments.BlockingRow)


@experiment_app.command()
def ri(
    ctx: typer.Context,
    sizes: SizesOpt = None,
    per_size: PerSizeOpt = None,
    seed: SeedOpt = None,
    k: BoundOpt = None,
    objective: ObjectivesOpt = None,
    instance: Annotated[
        pathlib.Path | None, typer.Option("--instance", exists=True, dir_okay=False, help="Audit this market only.")
    ] = None,
    out: OutOpt = None,
) -> None:
    """Respecting-improvement audit over a generated family or a single market."""
    settings = _settings(ctx)
    with _reported():
        markets = (
            _family(settings, sizes, per_size, seed)
            if instance is None
            else [(instance.stem, market.load_market(instance))]
        )
    records = asyncio.run(
        experiments.ri_experiment(
            markets,
            _formulations(settings, k, objective),
            _limits(settings),
            settings.experiment.workers,
        )
    )
    experiments.emit_csv(records, out or settings.experiment.out, experiments.RIAuditRecord)
    typer.echo(experiments.render_ri_summary(records), nl=False)


if __name__ == "__main__":
    app()
