import logging
import pathlib
from typing import TypeVar

import yaml
from pydantic import BaseModel, Field

from housing_markets.models import Concept, ObjectiveKind

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)


class SolverSection(BaseModel):
    node_limit: int = Field(default=10**7, ge=1)
    time_limit: float = Field(default=300.0, gt=0)


class BlockingSection(BaseModel):
    path_limit: int = Field(default=10**7, ge=1)


class TtcSection(BaseModel):
    tiebreak_cap: int = Field(default=10**6, ge=1)


class StrongCoreSection(BaseModel):
    cover_cap: int = Field(default=10**5, ge=1)


class GeneratorSection(BaseModel):
    edge_probability: float = Field(default=0.3, gt=0.0, le=1.0)
    ties: bool = False


class ExperimentSection(BaseModel):
    sizes: list[int] = Field(default_factory=lambda: [20, 30, 40, 50, 60])
    per_size: int = Field(default=50, ge=1)
    seed: int = 0
    k: int | None = Field(default=None, ge=2)
    l: int = Field(default=3, ge=2)  # noqa: E741
    objectives: list[ObjectiveKind] = Field(default_factory=lambda: [ObjectiveKind.MAX_SIZE, ObjectiveKind.MAX_WEIGHT])
    concepts: list[Concept] = Field(default_factory=lambda: [Concept.CORE, Concept.COMPETITIVE, Concept.STRONG_CORE])
    out: pathlib.Path = pathlib.Path("results.csv")
    workers: int = Field(default=4, ge=1)


class ToolkitConfig(BaseModel):
    solver: SolverSection = Field(default_factory=SolverSection)
    blocking: BlockingSection = Field(default_factory=BlockingSection)
    ttc: TtcSection = Field(default_factory=TtcSection)
    strong_core: StrongCoreSection = Field(default_factory=StrongCoreSection)
    generator: GeneratorSection = Field(default_factory=GeneratorSection)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)


def load_config(config_path: pathlib.Path | None, config_class: type[ConfigT]) -> ConfigT:
    if config_path is None or not config_path.exists():
        if config_path is not None:
            logger.warning("Config file %s not found, using defaults", config_path)
        return config_class()
    with config_path.open("r") as file:
        config_data = yaml.safe_load(file) or {}
    return config_class.model_validate(config_data)
