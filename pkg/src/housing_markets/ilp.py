import enum
from collections.abc import Iterable, Mapping

from pydantic import BaseModel, ConfigDict

from housing_markets.errors import ModelError

Terms = tuple[tuple[str, float], ...]


class VarKind(enum.Enum):
    BINARY = "binary"
    INTEGER = "integer"


class Sense(enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class Variable(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    kind: VarKind = VarKind.BINARY
    lower: int = 0
    upper: int = 1


class LinearExpr(BaseModel):
    model_config = ConfigDict(frozen=True)

    terms: Terms = ()

    def value(self, assignment: Mapping[str, float]) -> float:
        return sum(coef * assignment[name] for name, coef in self.terms)


class Constraint(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    terms: Terms
    sense: Sense
    rhs: float

    def satisfied(self, assignment: Mapping[str, float], tolerance: float = 1e-9) -> bool:
        activity = sum(coef * assignment[name] for name, coef in self.terms)
        if self.sense is Sense.LE:
            return activity <= self.rhs + tolerance
        if self.sense is Sense.GE:
            return activity >= self.rhs - tolerance
        return abs(activity - self.rhs) <= tolerance


class IlpModel(BaseModel):
    """A pure integer program; ``objectives`` are maximized lexicographically, first stage first."""

    model_config = ConfigDict(frozen=True)

    name: str = "housing_market"
    n: int
    k: int | None = None
    variables: tuple[Variable, ...] = ()
    constraints: tuple[Constraint, ...] = ()
    objectives: tuple[LinearExpr, ...] = ()

    def variable_names(self) -> set[str]:
        return {v.name for v in self.variables}

    def with_variables(self, variables: Iterable[Variable]) -> "IlpModel":
        return self.model_copy(update={"variables": self.variables + tuple(variables)})

    def with_constraints(self, constraints: Iterable[Constraint]) -> "IlpModel":
        return self.model_copy(update={"constraints": self.constraints + tuple(constraints)})

    def with_objectives(self, objectives: Iterable[LinearExpr]) -> "IlpModel":
        return self.model_copy(update={"objectives": tuple(objectives)})

    def check_well_formed(self) -> None:
        names = [v.name for v in self.variables]
        declared = set(names)
        if len(declared) != len(names):
            raise ModelError(f"model {self.name} declares a variable twice")
        for var in self.variables:
            if var.lower > var.upper:
                raise ModelError(f"variable {var.name} has empty domain [{var.lower}, {var.upper}]")
        for row in self.constraints:
            unknown = [name for name, _ in row.terms if name not in declared]
            if unknown:
                raise ModelError(f"constraint {row.name} references undeclared variables {unknown}")
        for stage in self.objectives:
            unknown = [name for name, _ in stage.terms if name not in declared]
            if unknown:
                raise ModelError(f"objective references undeclared variables {unknown}")

    def is_feasible(self, assignment: Mapping[str, float]) -> bool:
        for var in self.variables:
            value = assignment[var.name]
            if not var.lower <= value <= var.upper or value != int(value):
                return False
        return all(row.satisfied(assignment) for row in self.constraints)
