from collections.abc import Iterable

import jinja2

LINE_WIDTH = 255


def format_number(value: float) -> str:
    return f"{value:.17g}"


def format_terms(terms: Iterable[tuple[str, float]], offset: int = 0, comment: bool = False) -> str:
    """Signed ``coef name`` pairs; past ``LINE_WIDTH`` they continue on indented lines."""
    continuation = "\n\\   " if comment else "\n   "
    parts: list[str] = []
    width = offset
    for name, coef in terms:
        term = f" {coef:+.17g} {name}"
        if parts and width + len(term) > LINE_WIDTH:
            parts.append(continuation)
            width = len(continuation) - 1
        parts.append(term)
        width += len(term)
    return "".join(parts)


def template_environment() -> jinja2.Environment:
    env = jinja2.Environment(
        loader=jinja2.PackageLoader("housing_markets", "templates"),
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
        autoescape=False,
    )
    env.filters["number"] = format_number
    env.filters["terms"] = format_terms
    return env
