"""MPS reading and writing for binary integer programs.

Free-format MPS only: tokens are whitespace-delimited, section headers start
in column one, comment lines start with '*'. Supported sections are NAME,
OBJSENSE, ROWS, COLUMNS (with INTORG/INTEND markers), RHS, RANGES, BOUNDS
and ENDATA. Every variable must lower to a binary: declared BV, or marked
integer with final bounds exactly [0, 1].
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from cmsabip.model import BipInstance, Sense, make_row, negate_objective_if_max


class MpsFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class UnsupportedVariableError(MpsFormatError):
    def __init__(self, var_name: str, message: str, line: int | None = None):
        self.var_name = var_name
        super().__init__(f"variable '{var_name}': {message}", line)


_SECTIONS = {"NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA"}
_ROW_TYPES = {"N", "L", "G", "E"}


@dataclass
class _Column:
    name: str
    index: int
    first_line: int
    integer: bool | None = None  # None until seen under a marker regime
    binary_bound: bool = False
    lo: float = 0.0
    hi: float = float("inf")
    entries: dict[int, float] = field(default_factory=dict)
    obj: float = 0.0


def _num(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise MpsFormatError(f"expected a number, got {token!r}", line) from None


def parse_mps(text) -> BipInstance:
    """Parse free-format MPS text (str or bytes) into a BipInstance."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    lines = text.splitlines()

    name = ""
    obj_sense = "MIN"
    obj_row: str | None = None
    row_order: list[str] = []
    row_index: dict[str, int] = {}
    row_sense: dict[str, str] = {}
    row_rhs: dict[str, float] = {}
    row_range: dict[str, float] = {}
    row_line: dict[str, int] = {}
    columns: dict[str, _Column] = {}
    col_order: list[_Column] = []
    section = None
    saw_endata = False
    in_integer_block = False
    expect_objsense_value = False

    for lineno, raw in enumerate(lines, start=1):
        if saw_endata:
            break
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        is_header = not raw[0].isspace()
        tokens = raw.split()

        if is_header:
            head = tokens[0].upper()
            if head not in _SECTIONS:
                raise MpsFormatError(f"unknown section '{tokens[0]}'", lineno)
            section = head
            expect_objsense_value = False
            if head == "NAME":
                name = tokens[1] if len(tokens) > 1 else ""
            elif head == "OBJSENSE":
                if len(tokens) > 1:
                    obj_sense = tokens[1].upper()
                else:
                    expect_objsense_value = True
            elif head == "ENDATA":
                saw_endata = True
            continue

        if section is None:
            raise MpsFormatError("data before any section header", lineno)

        if section == "OBJSENSE":
            if not expect_objsense_value:
                raise MpsFormatError("unexpected extra OBJSENSE data", lineno)
            obj_sense = tokens[0].upper()
            expect_objsense_value = False

        elif section == "ROWS":
            if len(tokens) != 2:
                raise MpsFormatError("ROWS entries need a type and a name", lineno)
            rtype = tokens[0].upper()
            rname = tokens[1]
            if rtype not in _ROW_TYPES:
                raise MpsFormatError(f"unknown row type '{tokens[0]}'", lineno)
            if rname in row_sense or rname == obj_row:
                raise MpsFormatError(f"duplicate row name '{rname}'", lineno)
            if rtype == "N":
                if obj_row is not None:
                    raise MpsFormatError(
                        f"second N row '{rname}'; exactly one objective row is supported",
                        lineno)
                obj_row = rname
            else:
                row_index[rname] = len(row_order)
                row_order.append(rname)
                row_sense[rname] = rtype
                row_line[rname] = lineno

        elif section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1].upper() == "'MARKER'":
                marker = tokens[-1].strip("'").upper()
                if marker == "INTORG":
                    in_integer_block = True
                elif marker == "INTEND":
                    in_integer_block = False
                else:
                    raise MpsFormatError(f"unknown marker '{tokens[-1]}'", lineno)
                continue
            if len(tokens) < 3 or len(tokens) % 2 == 0:
                raise MpsFormatError("COLUMNS entries need name plus row/value pairs",
                                     lineno)
            cname = tokens[0]
            col = columns.get(cname)
            if col is None:
                col = _Column(name=cname, index=len(col_order), first_line=lineno,
                              integer=in_integer_block)
                columns[cname] = col
                col_order.append(col)
            elif col.integer != in_integer_block:
                raise MpsFormatError(
                    f"column '{cname}' appears under both integrality regimes", lineno)
            for k in range(1, len(tokens), 2):
                rname, val = tokens[k], _num(tokens[k + 1], lineno)
                if rname == obj_row:
                    col.obj += val
                elif rname in row_index:
                    ridx = row_index[rname]
                    if ridx in col.entries:
                        raise MpsFormatError(
                            f"duplicate entry for column '{cname}' in row '{rname}'",
                            lineno)
                    col.entries[ridx] = val
                else:
                    raise MpsFormatError(f"unknown row '{rname}' in COLUMNS", lineno)

        elif section in ("RHS", "RANGES"):
            target = row_rhs if section == "RHS" else row_range
            # The vector name is optional in the wild; detect by token parity.
            vals = tokens[1:] if len(tokens) % 2 == 1 else tokens
            if len(vals) % 2 != 0 or not vals:
                raise MpsFormatError(f"malformed {section} entry", lineno)
            for k in range(0, len(vals), 2):
                rname, val = vals[k], _num(vals[k + 1], lineno)
                if rname == obj_row:
                    raise MpsFormatError(
                        "objective-row RHS (constant offset) is not supported", lineno)
                if rname not in row_sense:
                    raise MpsFormatError(f"unknown row '{rname}' in {section}", lineno)
                if rname in target:
                    raise MpsFormatError(
                        f"duplicate {section} entry for row '{rname}'", lineno)
                target[rname] = val

        elif section == "BOUNDS":
            if len(tokens) < 3:
                raise MpsFormatError("malformed BOUNDS entry", lineno)
            btype = tokens[0].upper()
            cname = tokens[2]
            col = columns.get(cname)
            if col is None:
                raise MpsFormatError(f"bound on unknown column '{cname}'", lineno)
            if btype == "BV":
                col.binary_bound = True
                col.lo, col.hi = 0.0, 1.0
            elif btype in ("UP", "UI"):
                col.hi = _num(tokens[3], lineno)
            elif btype in ("LO", "LI"):
                col.lo = _num(tokens[3], lineno)
            elif btype == "FX":
                col.lo = col.hi = _num(tokens[3], lineno)
            elif btype in ("FR", "MI", "PL", "BN"):
                raise UnsupportedVariableError(
                    cname, f"bound type {btype} cannot yield a binary variable", lineno)
            else:
                raise MpsFormatError(f"unknown bound type '{tokens[0]}'", lineno)

    if not saw_endata:
        raise MpsFormatError("missing ENDATA")
    if obj_row is None:
        raise MpsFormatError("no N-type objective row declared")
    if not col_order:
        raise MpsFormatError("no columns declared")

    # Lower to a pure-binary instance.
    for col in col_order:
        if col.binary_bound:
            continue
        if not col.integer:
            raise UnsupportedVariableError(
                col.name, "continuous variables are not supported", col.first_line)
        if col.lo != 0.0 or col.hi != 1.0:
            raise UnsupportedVariableError(
                col.name,
                f"integer variable with bounds [{col.lo:g}, {col.hi:g}] is not binary",
                col.first_line)

    objective = np.array([col.obj for col in col_order])
    objective, max_flag = negate_objective_if_max(obj_sense, objective)

    sense_map = {"L": Sense.LE, "G": Sense.GE, "E": Sense.EQ}
    row_entries: list[list[tuple[int, float]]] = [[] for _ in row_order]
    for col in col_order:
        for ridx, val in col.entries.items():
            row_entries[ridx].append((col.index, val))

    try:
        rows = []
        extra = []
        for ridx, rname in enumerate(row_order):
            stype = row_sense[rname]
            rhs = row_rhs.get(rname, 0.0)
            entries = row_entries[ridx]
            if rname not in row_range:
                rows.append(make_row(entries, sense_map[stype], rhs, rname))
                continue
            rng = row_range[rname]
            # Standard ranged-row semantics: the row activity must land in
            # [lo, hi] derived from the row type and the sign of the range.
            if stype == "L":
                lo, hi = rhs - abs(rng), rhs
            elif stype == "G":
                lo, hi = rhs, rhs + abs(rng)
            else:
                lo, hi = (rhs, rhs + rng) if rng >= 0 else (rhs + rng, rhs)
            if lo == hi:
                rows.append(make_row(entries, Sense.EQ, lo, rname))
                continue
            if stype == "G":
                rows.append(make_row(entries, Sense.GE, lo, rname))
                extra.append(make_row(entries, Sense.LE, hi, rname + "_rng"))
            else:
                rows.append(make_row(entries, Sense.LE, hi, rname))
                extra.append(make_row(entries, Sense.GE, lo, rname + "_rng"))
        rows.extend(extra)

        return BipInstance(name=name or "mps", objective=objective, rows=rows,
                           var_names=[col.name for col in col_order],
                           maximize_input=max_flag)
    except MpsFormatError:
        raise
    except ValueError as exc:  # invariant violations surface as format errors
        raise MpsFormatError(str(exc)) from exc


def load_mps(path) -> BipInstance:
    with open(path, "rb") as fh:
        return parse_mps(fh.read())


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def dump_mps(instance: BipInstance) -> str:
    """Render an instance as MPS text; parse_mps(dump_mps(x)) reproduces x."""
    for nm in instance.var_names + instance.row_names:
        if not nm or any(ch.isspace() for ch in nm):
            raise ValueError(f"name {nm!r} cannot be written to MPS")
    out = io.StringIO()
    out.write(f"NAME {instance.name}\n")
    if instance.maximize_input:
        out.write("OBJSENSE\n MAX\n")
    sense_char = {Sense.LE: "L", Sense.GE: "G", Sense.EQ: "E"}
    out.write("ROWS\n")
    out.write(" N OBJ\n")
    for row in instance.rows:
        out.write(f" {sense_char[row.sense]} {row.name}\n")
    # Report-side objective: un-negate for maximization inputs so the file
    # carries the original sense.
    objective = -instance.objective if instance.maximize_input else instance.objective
    col_entries: list[list[tuple[str, float]]] = [[] for _ in range(instance.n)]
    for row in instance.rows:
        for k in range(row.cols.size):
            col_entries[int(row.cols[k])].append((row.name, float(row.coefs[k])))
    out.write("COLUMNS\n")
    out.write(" MARKER 'MARKER' 'INTORG'\n")
    for j, vname in enumerate(instance.var_names):
        if objective[j] != 0.0:
            out.write(f" {vname} OBJ {_fmt(objective[j])}\n")
        for rname, coef in col_entries[j]:
            out.write(f" {vname} {rname} {_fmt(coef)}\n")
        if objective[j] == 0.0 and not col_entries[j]:
            out.write(f" {vname} OBJ 0\n")  # keep unused columns declared
    out.write(" MARKER 'MARKER' 'INTEND'\n")
    out.write("RHS\n")
    for row in instance.rows:
        if row.rhs != 0.0:
            out.write(f" RHS {row.name} {_fmt(row.rhs)}\n")
    out.write("BOUNDS\n")
    for vname in instance.var_names:
        out.write(f" BV BND {vname}\n")
    out.write("ENDATA\n")
    return out.getvalue()


def write_mps(instance: BipInstance, path) -> None:
    text = dump_mps(instance)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
