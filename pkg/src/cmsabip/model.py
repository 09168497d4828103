"""In-memory representation of binary integer linear programs.

A BIP is stored in normalized form

    min c'x  s.t.  rows (sparse, each LE/GE/EQ with a right-hand side),
    x binary,

maximization inputs are negated on load and a flag is kept so reported
objective values can be un-negated on output.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# Absolute tolerance on row activities when judging feasibility.
FEAS_TOL = 1e-9


class Sense(enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "="


@dataclass
class Row:
    """One sparse constraint row: coefs @ x[cols] (sense) rhs."""

    cols: np.ndarray   # int32, strictly increasing, 0-based
    coefs: np.ndarray  # float64, finite and nonzero
    sense: Sense
    rhs: float
    name: str


@dataclass
class BipInstance:
    """A validated binary integer program. Immutable after construction."""

    name: str
    objective: np.ndarray       # float64 (n,), minimization coefficients
    rows: list[Row]
    var_names: list[str]
    maximize_input: bool = False

    @property
    def n(self) -> int:
        return len(self.objective)

    @property
    def m(self) -> int:
        return len(self.rows)

    @property
    def row_names(self) -> list[str]:
        return [r.name for r in self.rows]

    @cached_property
    def var_rows(self) -> list[np.ndarray]:
        """For each variable, indices of the rows it appears in."""
        buckets: list[list[int]] = [[] for _ in range(self.n)]
        for i, row in enumerate(self.rows):
            for j in row.cols:
                buckets[int(j)].append(i)
        return [np.asarray(b, dtype=np.int32) for b in buckets]

    def __post_init__(self) -> None:
        self.objective = np.ascontiguousarray(self.objective, dtype=np.float64)
        if self.n < 1:
            raise ValueError("instance must have at least one variable")
        if len(self.var_names) != self.n:
            raise ValueError("var_names length does not match objective length")
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective coefficients must be finite")
        for row in self.rows:
            row.cols = np.ascontiguousarray(row.cols, dtype=np.int32)
            row.coefs = np.ascontiguousarray(row.coefs, dtype=np.float64)
            if row.cols.shape != row.coefs.shape:
                raise ValueError(f"row {row.name}: cols/coefs length mismatch")
            if row.cols.size:
                if np.any(np.diff(row.cols) <= 0):
                    raise ValueError(f"row {row.name}: column indices must be strictly increasing")
                if row.cols[0] < 0 or row.cols[-1] >= self.n:
                    raise ValueError(f"row {row.name}: column index out of range")
            if not np.all(np.isfinite(row.coefs)) or np.any(row.coefs == 0.0):
                raise ValueError(f"row {row.name}: coefficients must be finite and nonzero")
            if not np.isfinite(row.rhs):
                raise ValueError(f"row {row.name}: rhs must be finite")


@dataclass
class Solution:
    """A 0/1 assignment with its exact objective and feasibility verdict."""

    values: np.ndarray      # int8 (n,)
    objective: float
    feasible: bool
    max_violation: float


def make_row(entries, sense: Sense, rhs: float, name: str) -> Row:
    """Canonicalize (col, coef) pairs: sort, merge duplicates, drop zeros."""
    merged: dict[int, float] = {}
    for col, coef in entries:
        merged[int(col)] = merged.get(int(col), 0.0) + float(coef)
    cols = sorted(c for c, v in merged.items() if v != 0.0)
    coefs = [merged[c] for c in cols]
    return Row(np.asarray(cols, dtype=np.int32), np.asarray(coefs, dtype=np.float64),
               sense, float(rhs), name)


def make_instance(objective, row_specs, var_names=None, name="bip",
                  maximize_input=False) -> BipInstance:
    """Build a BipInstance from plain data.

    row_specs is an iterable of (entries, sense, rhs) or
    (entries, sense, rhs, row_name) where entries are (col, coef) pairs.
    """
    objective = np.asarray(objective, dtype=np.float64)
    n = objective.size
    if var_names is None:
        var_names = [f"x{j + 1}" for j in range(n)]
    rows = []
    for i, spec in enumerate(row_specs):
        if len(spec) == 4:
            entries, sense, rhs, rname = spec
        else:
            entries, sense, rhs = spec
            rname = f"r{i + 1}"
        rows.append(make_row(entries, sense, rhs, rname))
    return BipInstance(name=name, objective=objective, rows=rows,
                       var_names=list(var_names), maximize_input=maximize_input)


def negate_objective_if_max(raw_sense: str, objective) -> tuple[np.ndarray, bool]:
    """Normalize the objective to minimization.

    Returns (stored coefficients, report flag); the flag records that
    reported objective values must be un-negated on output.
    """
    objective = np.asarray(objective, dtype=np.float64)
    sense = raw_sense.strip().upper()
    if sense in ("MIN", "MINIMIZE"):
        return objective, False
    if sense in ("MAX", "MAXIMIZE"):
        return -objective, True
    raise ValueError(f"unknown objective sense {raw_sense!r}")


def reported_objective(instance: BipInstance, objective: float) -> float:
    """Map a normalized (minimization) objective back to the input sense."""
    # +0.0 normalizes the sign of a negated zero.
    return -objective + 0.0 if instance.maximize_input else objective


def row_activity(row: Row, values: np.ndarray) -> float:
    return float(np.dot(row.coefs, values[row.cols]))


def row_violation(row: Row, activity: float) -> float:
    """Nonnegative magnitude by which the row is violated (0 if satisfied)."""
    if row.sense is Sense.LE:
        return max(0.0, activity - row.rhs)
    if row.sense is Sense.GE:
        return max(0.0, row.rhs - activity)
    return abs(activity - row.rhs)


def evaluate(instance: BipInstance, values) -> Solution:
    """Evaluate a 0/1 vector against the instance. Pure."""
    values = np.asarray(values)
    if values.shape != (instance.n,):
        raise ValueError(f"expected {instance.n} values, got shape {values.shape}")
    if not np.all((values == 0) | (values == 1)):
        raise ValueError("values must be 0/1")
    values = values.astype(np.int8)
    dense = values.astype(np.float64)
    objective = float(np.dot(instance.objective, dense))
    worst = 0.0
    for row in instance.rows:
        worst = max(worst, row_violation(row, row_activity(row, dense)))
    return Solution(values=values, objective=objective,
                    feasible=worst <= FEAS_TOL, max_violation=worst)
