"""Plain-text LP format.

Grammar (one statement per line, blank lines ignored)::

    /* problem: <name> */                      optional, first line
    min: <expr>;
    /* <tag> */                                annotation of the next row
    <row>: <expr> <= | >= | = <number>;
    bounds:
    <number> <= <column> <= <number>;          one line per column, in order

    <expr>   := 0 | <term> { <term> }
    <term>   := (+|-)<number> <name>
    <number> := any Python float literal, including inf / -inf

Numbers are written with ``repr`` so a written problem parses back exactly.
"""

import re
from pathlib import Path
from typing import Dict, List, Tuple, Union

from .problem import LpColumn, LpError, LpProblem, LpRow

_NAME = r"[A-Za-z_][A-Za-z0-9_.]*"
_ROW_RE = re.compile(rf"^({_NAME}):\s*(.*?)\s*(<=|>=|=)\s*(\S+);$")
_BOUND_RE = re.compile(rf"^(\S+)\s*<=\s*({_NAME})\s*<=\s*(\S+);$")
_COMMENT_RE = re.compile(r"^/\*\s*(.*?)\s*\*/$")


class LpFormatError(LpError):
    """Raised when LP text cannot be parsed"""

    pass


def _format_number(v: float) -> str:
    return repr(float(v))


def _format_expr(coeffs: Dict[int, float], columns: List[LpColumn]) -> str:
    terms = [
        f"{'+' if a >= 0 else '-'}{_format_number(abs(a))} {columns[j].name}"
        for j, a in coeffs.items()
    ]
    return " ".join(terms) if terms else "0"


def format_lp(problem: LpProblem) -> str:
    lines = [f"/* problem: {problem.name} */"]
    objective = {j: c.cost for j, c in enumerate(problem.columns) if c.cost != 0.0}
    lines.append(f"min: {_format_expr(objective, problem.columns)};")
    for row in problem.rows:
        if row.tag:
            if "*/" in row.tag:
                raise LpFormatError(f"row {row.name}: tag may not contain '*/'")
            lines.append(f"/* {row.tag} */")
        lines.append(
            f"{row.name}: {_format_expr(row.coeffs, problem.columns)} "
            f"{row.relation} {_format_number(row.rhs)};"
        )
    lines.append("bounds:")
    for col in problem.columns:
        lines.append(
            f"{_format_number(col.lower)} <= {col.name} <= {_format_number(col.upper)};"
        )
    return "\n".join(lines) + "\n"


def export_lp(problem: LpProblem, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.write_text(format_lp(problem))
    except OSError as e:
        raise LpError(f"Failed to write LP file {path}: {str(e)}")
    return path


def _parse_number(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise LpFormatError(f"line {lineno}: invalid number {token!r}")


def _parse_expr(text: str, lineno: int) -> List[Tuple[str, float]]:
    tokens = text.split()
    if tokens == ["0"]:
        return []
    if len(tokens) % 2:
        raise LpFormatError(f"line {lineno}: malformed expression {text!r}")
    terms = []
    for k in range(0, len(tokens), 2):
        coef, name = tokens[k], tokens[k + 1]
        if coef[0] not in "+-" or not re.fullmatch(_NAME, name):
            raise LpFormatError(f"line {lineno}: malformed term {coef} {name}")
        terms.append((name, _parse_number(coef, lineno)))
    return terms


def _is_file(name: str) -> bool:
    try:
        return Path(name).is_file()
    except (OSError, ValueError):
        return False


def parse_lp(source: Union[str, Path]) -> LpProblem:
    """Parse LP text (or a path to an LP file) written by `format_lp`.

    A string is read as a file name when it is a single line naming an existing
    file.
    """
    if isinstance(source, str) and "\n" not in source and _is_file(source):
        source = Path(source)
    if isinstance(source, Path):
        try:
            source = source.read_text()
        except OSError as e:
            raise LpError(f"Failed to read LP file {source}: {str(e)}")

    name = "lp"
    objective = None
    raw_rows = []
    columns: List[LpColumn] = []
    pending_tag = None
    in_bounds = False

    for lineno, line in enumerate(source.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        comment = _COMMENT_RE.match(line)
        if comment:
            text = comment.group(1)
            if lineno == 1 and text.startswith("problem:"):
                name = text[len("problem:") :].strip()
            else:
                pending_tag = text
            continue
        if line == "bounds:":
            in_bounds = True
            continue
        if in_bounds:
            m = _BOUND_RE.match(line)
            if not m:
                raise LpFormatError(f"line {lineno}: malformed bound {line!r}")
            columns.append(
                LpColumn(
                    name=m.group(2),
                    lower=_parse_number(m.group(1), lineno),
                    upper=_parse_number(m.group(3), lineno),
                )
            )
            continue
        if line.startswith("min:"):
            if not line.endswith(";"):
                raise LpFormatError(f"line {lineno}: missing ';'")
            objective = _parse_expr(line[len("min:") : -1], lineno)
            continue
        m = _ROW_RE.match(line)
        if not m:
            raise LpFormatError(f"line {lineno}: cannot parse {line!r}")
        raw_rows.append(
            (
                m.group(1),
                _parse_expr(m.group(2), lineno),
                m.group(3),
                _parse_number(m.group(4), lineno),
                pending_tag,
                lineno,
            )
        )
        pending_tag = None

    if objective is None:
        raise LpFormatError("missing 'min:' objective line")
    index = {c.name: j for j, c in enumerate(columns)}

    def resolve(terms, lineno):
        coeffs = {}
        for col, a in terms:
            if col not in index:
                raise LpFormatError(f"line {lineno}: column {col} missing from bounds")
            coeffs[index[col]] = a
        return coeffs

    for j, a in resolve(objective, 0).items():
        columns[j] = columns[j].model_copy(update={"cost": a})
    rows = [
        LpRow(name=rname, coeffs=resolve(terms, ln), relation=rel, rhs=rhs, tag=tag)
        for rname, terms, rel, rhs, tag, ln in raw_rows
    ]
    try:
        return LpProblem(name=name, columns=columns, rows=rows)
    except ValueError as e:
        raise LpFormatError(str(e))
