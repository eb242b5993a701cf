"""Export to and import from the LP file dialect written by :func:`export_lp`.

Only the first objective stage is a real objective; later lexicographic stages are kept as
``\\ objective.N:`` comment lines so that MILP tools still read the file.
"""

import logging
import pathlib
import re
from collections.abc import Iterator

import jinja2
from pydantic import ValidationError

from housing_markets.errors import LpFormatError
from housing_markets.ilp import Constraint, IlpModel, LinearExpr, Sense, Terms, Variable, VarKind
from housing_markets.templating import template_environment

logger = logging.getLogger(__name__)

_SECTIONS = {
    "maximize": "objective",
    "subject to": "rows",
    "bounds": "bounds",
    "binaries": "binaries",
    "generals": "generals",
}
_ROW = re.compile(r"^(\S+):(.*)\s(<=|>=|=)\s(\S+)$")
_BOUND = re.compile(r"^(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$")
_COMMENT = re.compile(r"^\\\s*(Model|n|k|objective\.\d+):?\s*(.*)$")
_CONTINUATION = re.compile(r"^(\\)?\s{2,}([+-].*)$")


def export_lp(model: IlpModel, template_env: jinja2.Environment | None = None) -> str:
    env = template_env or template_environment()
    return env.get_template("model.lp.j2").render(
        model=model,
        binaries=[v for v in model.variables if v.kind is VarKind.BINARY],
        generals=[v for v in model.variables if v.kind is VarKind.INTEGER],
    )


def write_lp(model: IlpModel, path: pathlib.Path) -> None:
    path.write_text(export_lp(model))
    logger.info("Wrote %s variables and %s rows to %s", len(model.variables), len(model.constraints), path)


def _parse_terms(text: str, line_no: int) -> Terms:
    tokens = text.split()
    if len(tokens) % 2:
        raise LpFormatError(f"line {line_no}: dangling token in '{text.strip()}'")
    try:
        return tuple((tokens[pos + 1], float(tokens[pos])) for pos in range(0, len(tokens), 2))
    except ValueError as e:
        raise LpFormatError(f"line {line_no}: bad coefficient in '{text.strip()}'") from e


def _logical_lines(text: str) -> Iterator[tuple[int, str]]:
    """Stripped lines with wrapped terms joined back onto the line they continue."""
    pending: tuple[int, str] | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        match = _CONTINUATION.match(raw)
        if match is not None and pending is not None and pending[1].startswith("\\") == bool(match.group(1)):
            pending = (pending[0], f"{pending[1]} {match.group(2).strip()}")
            continue
        if pending is not None:
            yield pending
        pending = (line_no, raw.strip())
    if pending is not None:
        yield pending


def read_lp(text: str) -> IlpModel:
    name = "housing_market"
    n: int | None = None
    k: int | None = None
    first: LinearExpr | None = None
    objectives: list[LinearExpr] = []
    rows: list[Constraint] = []
    bounds: list[tuple[str, int, int]] = []
    integers: set[str] = set()
    section = None

    for line_no, line in _logical_lines(text):
        if not line:
            continue
        if line.startswith("\\"):
            comment = _COMMENT.match(line)
            if comment is None:
                continue
            key, value = comment.groups()
            if key == "Model":
                name = value
            elif key == "n":
                n = int(value)
            elif key == "k":
                k = int(value)
            else:
                objectives.append(LinearExpr(terms=_parse_terms(value, line_no)))
            continue
        lowered = line.lower()
        if lowered == "end":
            break
        if lowered in _SECTIONS:
            section = _SECTIONS[lowered]
            continue

        if section == "objective":
            label, _, body = line.partition(":")
            if label.strip() != "obj":
                raise LpFormatError(f"line {line_no}: expected the 'obj:' row")
            first = LinearExpr(terms=_parse_terms(body, line_no))
        elif section == "rows":
            match = _ROW.match(line)
            if match is None:
                raise LpFormatError(f"line {line_no}: unreadable constraint '{line}'")
            row_name, body, sense, rhs = match.groups()
            rows.append(
                Constraint(name=row_name, terms=_parse_terms(body, line_no), sense=Sense(sense), rhs=float(rhs))
            )
        elif section == "bounds":
            match = _BOUND.match(line)
            if match is None:
                raise LpFormatError(f"line {line_no}: unreadable bound '{line}'")
            lower, var_name, upper = match.groups()
            bounds.append((var_name, int(lower), int(upper)))
        elif section == "generals":
            integers.update(line.split())
        elif section != "binaries":
            raise LpFormatError(f"line {line_no}: content outside of any section")

    if n is None:
        raise LpFormatError("missing '\\ n:' header")
    if first is not None and (first.terms or objectives):
        objectives.insert(0, first)
    variables = [
        Variable(name=var_name, kind=VarKind.INTEGER if var_name in integers else VarKind.BINARY, lower=lo, upper=hi)
        for var_name, lo, hi in bounds
    ]
    try:
        return IlpModel(
            name=name,
            n=n,
            k=k,
            variables=tuple(variables),
            constraints=tuple(rows),
            objectives=tuple(objectives),
        )
    except ValidationError as e:
        raise LpFormatError(str(e)) from e


def load_lp(path: pathlib.Path) -> IlpModel:
    return read_lp(path.read_text())
