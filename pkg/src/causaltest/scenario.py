"""Modelling scenarios, constraint evaluation and tabular execution data."""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .dag import CausalDag

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class DataError(ValueError):
    pass


class ConstraintError(ValueError):
    pass


# --- constraints ----------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Literal:
    value: Union[float, str]

    def __str__(self):
        if isinstance(self.value, str):
            return repr(self.value)
        return format(self.value, "g")


Operand = Union[Var, Literal]

_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
    "!=": lambda a, b: a != b,
}
_ORDERING = {"<", "<=", ">=", ">"}


@dataclass(frozen=True)
class Comparison:
    left: Operand
    op: str
    right: Operand

    def variables(self):
        return {o.name for o in (self.left, self.right) if isinstance(o, Var)}

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


@dataclass(frozen=True)
class Membership:
    var: str
    values: tuple

    def variables(self):
        return {self.var}

    def __str__(self):
        items = ", ".join(str(Literal(v)) for v in self.values)
        return f"{self.var} in {{{items}}}"


@dataclass(frozen=True)
class And:
    parts: tuple

    def variables(self):
        out = set()
        for p in self.parts:
            out |= p.variables()
        return out

    def __str__(self):
        return " and ".join(str(p) for p in self.parts)


Constraint = Union[Comparison, Membership, And]

_CTOKEN = re.compile(
    r"""\s*(?:
        (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
      | (?P<str>'[^']*'|"[^"]*")
      | (?P<op><=|>=|!=|==|<|>|=|≤|≥|≠)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<punct>[{},&])
    )""",
    re.VERBOSE,
)
_UNICODE_OPS = {"≤": "<=", "≥": ">=", "≠": "!=", "==": "="}


def _lex(text):
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _CTOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ConstraintError(f"cannot parse constraint {text!r} at offset {pos}")
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "op":
            val = _UNICODE_OPS.get(val, val)
        out.append((kind, val))
        pos = m.end()
    return out


def parse_constraint(text: str) -> Constraint:
    """Parse a conjunction of comparisons and set memberships.

    >>> str(parse_constraint("0 < W <= 10 and W = H"))
    '0 < W and W <= 10 and W = H'
    """
    toks = _lex(text)
    i = 0
    parts = []

    def operand():
        nonlocal i
        if i >= len(toks):
            raise ConstraintError(f"unexpected end of constraint {text!r}")
        kind, val = toks[i]
        i += 1
        if kind == "num":
            return Literal(float(val))
        if kind == "str":
            return Literal(val[1:-1])
        if kind == "ident":
            return Var(val)
        raise ConstraintError(f"expected a variable or literal in {text!r}, got {val!r}")

    while True:
        first = operand()
        if i < len(toks) and toks[i] == ("ident", "in"):
            if not isinstance(first, Var):
                raise ConstraintError(f"left side of 'in' must be a variable in {text!r}")
            i += 1
            if i >= len(toks) or toks[i] != ("punct", "{"):
                raise ConstraintError(f"expected '{{' after 'in' in {text!r}")
            i += 1
            values = []
            while True:
                lit = operand()
                values.append(lit.name if isinstance(lit, Var) else lit.value)
                if i < len(toks) and toks[i] == ("punct", ","):
                    i += 1
                    continue
                break
            if i >= len(toks) or toks[i] != ("punct", "}"):
                raise ConstraintError(f"expected '}}' in {text!r}")
            i += 1
            parts.append(Membership(first.name, tuple(values)))
        else:
            left = first
            chained = 0
            while i < len(toks) and toks[i][0] == "op":
                op = toks[i][1]
                i += 1
                right = operand()
                parts.append(Comparison(left, op, right))
                left = right
                chained += 1
            if not chained:
                raise ConstraintError(f"expected a comparison in {text!r}")
        if i == len(toks):
            break
        if toks[i] in (("ident", "and"), ("punct", "&"), ("punct", ",")):
            i += 1
            if i < len(toks) and toks[i] == ("punct", "&"):
                i += 1
            continue
        raise ConstraintError(f"unexpected token {toks[i][1]!r} in {text!r}")
    return parts[0] if len(parts) == 1 else And(tuple(parts))


def _value(operand, row):
    if isinstance(operand, Literal):
        return operand.value
    try:
        return row[operand.name]
    except KeyError:
        raise ConstraintError(f"row has no value for variable {operand.name!r}") from None


def _is_cat(v):
    return isinstance(v, str)


def evaluate_constraint(c: Constraint, row) -> bool:
    if isinstance(c, str):
        c = parse_constraint(c)
    if isinstance(c, And):
        return all(evaluate_constraint(p, row) for p in c.parts)
    if isinstance(c, Membership):
        v = _value(Var(c.var), row)
        for lit in c.values:
            if _is_cat(v) != _is_cat(lit):
                raise ConstraintError(f"kind mismatch in {c}: {v!r} vs {lit!r}")
        return v in c.values
    a, b = _value(c.left, row), _value(c.right, row)
    if _is_cat(a) or _is_cat(b):
        if c.op in _ORDERING:
            raise ConstraintError(f"ordering comparison on categorical value in {c}")
        if _is_cat(a) != _is_cat(b):
            raise ConstraintError(f"kind mismatch in {c}: {a!r} vs {b!r}")
    return bool(_OPS[c.op](a, b))


# --- scenario -------------------------------------------------------------

@dataclass(frozen=True)
class Variable:
    kind: str = NUMERIC
    role: str = "input"

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"variable kind must be numeric or categorical, got {self.kind!r}")
        if self.role not in ("input", "output"):
            raise ValueError(f"variable role must be input or output, got {self.role!r}")


@dataclass(frozen=True)
class ModellingScenario:
    variables: dict
    constraints: tuple = ()

    def __init__(self, variables: dict, constraints: Iterable = ()):
        vs = {name: v if isinstance(v, Variable) else Variable(**v) for name, v in variables.items()}
        cs = tuple(parse_constraint(c) if isinstance(c, str) else c for c in constraints)
        for c in cs:
            unknown = c.variables() - set(vs)
            if unknown:
                raise ConstraintError(f"constraint {c} references undeclared {sorted(unknown)}")
        object.__setattr__(self, "variables", vs)
        object.__setattr__(self, "constraints", cs)

    @classmethod
    def from_dict(cls, d: dict) -> "ModellingScenario":
        return cls(d.get("variables", {}), d.get("constraints", ()))

    @property
    def inputs(self) -> list[str]:
        return [n for n, v in self.variables.items() if v.role == "input"]

    @property
    def outputs(self) -> list[str]:
        return [n for n, v in self.variables.items() if v.role == "output"]

    @property
    def kinds(self) -> dict:
        return {n: v.kind for n, v in self.variables.items()}

    @property
    def roles(self) -> dict:
        return {n: v.role for n, v in self.variables.items()}


@dataclass(frozen=True)
class CausalSpecification:
    scenario: ModellingScenario
    dag: CausalDag

    def __post_init__(self):
        names = set(self.scenario.variables)
        if names != set(self.dag.nodes):
            only_s = sorted(names - self.dag.nodes)
            only_d = sorted(self.dag.nodes - names)
            raise ValueError(f"scenario/DAG mismatch: not in DAG {only_s}, not in scenario {only_d}")


# --- data -----------------------------------------------------------------

class DataTable:
    """Rectangular column store: numeric columns are float64 arrays,
    categorical columns are object arrays of strings."""

    def __init__(self, columns: dict, kinds: dict | None = None):
        kinds = dict(kinds or {})
        cols = {}
        n = None
        for name, values in columns.items():
            kind = kinds.get(name)
            if kind is None:
                arr = np.asarray(values)
                kind = CATEGORICAL if arr.dtype.kind in "OUS" else NUMERIC
            if kind == NUMERIC:
                arr = np.asarray(values, dtype=np.float64)
            else:
                arr = np.asarray([str(v) for v in values], dtype=object)
            if arr.ndim != 1:
                raise DataError(f"column {name!r} is not one-dimensional")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise DataError(f"column {name!r} has {arr.size} rows, expected {n}")
            arr.setflags(write=False)
            cols[name] = arr
            kinds[name] = kind
        self._columns = cols
        self._kinds = {k: kinds[k] for k in cols}
        self._n = n or 0

    @classmethod
    def from_rows(cls, rows: list[dict], kinds: dict | None = None,
                  columns: list[str] | None = None) -> "DataTable":
        if columns is None:
            columns = list(rows[0]) if rows else list(kinds or {})
        return cls({c: [r[c] for r in rows] for c in columns}, kinds)

    @property
    def columns(self) -> list[str]:
        return list(self._columns)

    @property
    def kinds(self) -> dict:
        return dict(self._kinds)

    def __len__(self):
        return self._n

    def __contains__(self, name):
        return name in self._columns

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise KeyError(f"no column {name!r}") from None

    def __eq__(self, other):
        if not isinstance(other, DataTable):
            return NotImplemented
        return (self.columns == other.columns and self._kinds == other._kinds
                and all(np.array_equal(self[c], other[c]) for c in self.columns))

    def __repr__(self):
        return f"DataTable({self._n} rows, columns={self.columns})"

    def row(self, i: int) -> dict:
        return {c: _scalar(a[i]) for c, a in self._columns.items()}

    def rows(self):
        for i in range(self._n):
            yield self.row(i)

    def take(self, index) -> "DataTable":
        index = np.asarray(index)
        return DataTable({c: a[index] for c, a in self._columns.items()}, self._kinds)

    def select(self, names) -> "DataTable":
        return DataTable({c: self[c] for c in names}, {c: self._kinds[c] for c in names})

    def with_column(self, name, values, kind=None) -> "DataTable":
        cols = dict(self._columns)
        cols[name] = values
        kinds = dict(self._kinds)
        if kind:
            kinds[name] = kind
        else:
            kinds.pop(name, None)
        return DataTable(cols, kinds)

    def to_csv(self, path_or_buf=None) -> str | None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows():
            w.writerow([_fmt(r[c]) for c in self.columns])
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return None


def _scalar(v):
    return v.item() if isinstance(v, np.generic) else v


def _fmt(v):
    if isinstance(v, float):
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


def save_csv(table: DataTable, path) -> None:
    table.to_csv(path)


def read_csv_text(text: str, kinds: dict, required: Iterable[str] | None = None,
                  source: str = "<csv>") -> DataTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: empty file") from None
    header = [h.strip() for h in header]
    required = list(kinds if required is None else required)
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{source}: missing required column(s) {', '.join(missing)}")
    extra = [c for c in header if c not in kinds]
    if extra:
        log.warning("%s: ignoring extra column(s) %s", source, ", ".join(extra))
    keep = [c for c in header if c in kinds]
    pos = {c: header.index(c) for c in keep}
    data = {c: [] for c in keep}
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise DataError(f"{source}: row {lineno} has {len(rec)} cells, expected {len(header)}")
        for c in keep:
            cell = rec[pos[c]].strip()
            if cell == "":
                raise DataError(f"{source}: missing value in row {lineno}, column {c!r}")
            if kinds[c] == NUMERIC:
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{source}: cannot parse {cell!r} as a number in row {lineno}, "
                                    f"column {c!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{source}: non-finite value in row {lineno}, column {c!r}")
                data[c].append(v)
            else:
                data[c].append(cell)
    return DataTable(data, {c: kinds[c] for c in keep})


def load_csv(path, scenario: ModellingScenario) -> DataTable:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return read_csv_text(text, scenario.kinds, source=str(path))


def row_mask(table: DataTable, constraints) -> np.ndarray:
    constraints = [parse_constraint(c) if isinstance(c, str) else c for c in constraints]
    mask = np.ones(len(table), dtype=bool)
    if not constraints:
        return mask
    needed = set()
    for c in constraints:
        needed |= c.variables()
    missing = sorted(needed - set(table.columns))
    if missing:
        raise ConstraintError(f"table lacks constraint variable(s) {', '.join(missing)}")
    for i in range(len(table)):
        row = {v: _scalar(table[v][i]) for v in needed}
        mask[i] = all(evaluate_constraint(c, row) for c in constraints)
    return mask


def filter_data(table: DataTable, scenario: ModellingScenario) -> tuple[DataTable, int]:
    """Drop rows violating any scenario constraint; row order is kept."""
    mask = row_mask(table, scenario.constraints)
    kept = table.take(np.flatnonzero(mask))
    return kept, len(table) - len(kept)
