"""Constraint propagation over binary domains via row activity bounds.

Implications are derived one row at a time: each row keeps the minimum and
maximum activity reachable under the current domains, and a FIFO fixpoint
loop fixes variables whose opposite value would make the row unsatisfiable.
All fixings go on a trail with saved bound values, so backtracking restores
the state bit-exactly.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from cmsabip.model import BipInstance, Sense

BOUND_TOL = 1e-9

FREE = -1


class Reason(enum.Enum):
    ROOT = "root"
    DECISION = "decision"
    IMPLICATION = "implication"


class PropStatus(enum.Enum):
    CONSISTENT = "consistent"
    INFEASIBLE = "infeasible"


@dataclass
class TrailEntry:
    var: int
    value: int
    reason: Reason


@dataclass
class FixResult:
    ok: bool
    implied: list[tuple[int, int]]


class PropagationState:
    """Mutable propagation state over one immutable instance. Single owner."""

    def __init__(self, instance: BipInstance):
        self.instance = instance
        self.domains = np.full(instance.n, FREE, dtype=np.int8)
        self.row_min = np.zeros(instance.m)
        self.row_max = np.zeros(instance.m)
        for i, row in enumerate(instance.rows):
            self.row_min[i] = float(np.minimum(row.coefs, 0.0).sum())
            self.row_max[i] = float(np.maximum(row.coefs, 0.0).sum())
        self.trail: list[TrailEntry] = []
        self.marks: list[int] = []
        self.status = PropStatus.CONSISTENT
        # Saved (row, old_min, old_max) triples per trail entry, for exact undo.
        self._undo: list[list[tuple[int, float, float]]] = []
        self._infeasible_at: int | None = None

    # -- internal mechanics -------------------------------------------------

    def _apply_fix(self, var: int, value: int, reason: Reason) -> None:
        inst = self.instance
        saved: list[tuple[int, float, float]] = []
        for i in inst.var_rows[var]:
            i = int(i)
            row = inst.rows[i]
            a = float(row.coefs[np.searchsorted(row.cols, var)])
            saved.append((i, self.row_min[i], self.row_max[i]))
            contrib = a * value
            self.row_min[i] += contrib - min(0.0, a)
            self.row_max[i] += contrib - max(0.0, a)
        self.domains[var] = value
        self.trail.append(TrailEntry(var, value, reason))
        self._undo.append(saved)

    def _unwind(self, target_len: int) -> None:
        while len(self.trail) > target_len:
            entry = self.trail.pop()
            for i, old_min, old_max in self._undo.pop():
                self.row_min[i] = old_min
                self.row_max[i] = old_max
            self.domains[entry.var] = FREE
        if self._infeasible_at is not None and self._infeasible_at >= target_len:
            self.status = PropStatus.CONSISTENT
            self._infeasible_at = None

    def _row_deductions(self, i: int):
        """Return 'conflict' or a list of (var, value) forced by row i."""
        row = self.instance.rows[i]
        lo, hi, rhs = self.row_min[i], self.row_max[i], row.rhs
        forced: list[tuple[int, int]] = []
        need_le = row.sense in (Sense.LE, Sense.EQ)
        need_ge = row.sense in (Sense.GE, Sense.EQ)
        if need_le and lo > rhs + BOUND_TOL:
            return "conflict"
        if need_ge and hi < rhs - BOUND_TOL:
            return "conflict"
        for k in range(row.cols.size):
            var = int(row.cols[k])
            if self.domains[var] != FREE:
                continue
            a = float(row.coefs[k])
            if need_le:
                if a > 0 and lo + a > rhs + BOUND_TOL:
                    forced.append((var, 0))
                    continue
                if a < 0 and lo - a > rhs + BOUND_TOL:
                    forced.append((var, 1))
                    continue
            if need_ge:
                if a > 0 and hi - a < rhs - BOUND_TOL:
                    forced.append((var, 1))
                elif a < 0 and hi + a < rhs - BOUND_TOL:
                    forced.append((var, 0))
        return forced

    def _propagate(self, queue: deque[int], reason: Reason) -> bool:
        """Run the fixpoint loop. Returns False on conflict."""
        inst = self.instance
        inqueue = np.zeros(inst.m, dtype=bool)
        for i in queue:
            inqueue[i] = True
        while queue:
            i = queue.popleft()
            inqueue[i] = False
            result = self._row_deductions(i)
            if result == "conflict":
                self.status = PropStatus.INFEASIBLE
                self._infeasible_at = len(self.trail)
                return False
            for var, value in result:
                if self.domains[var] != FREE:
                    if self.domains[var] != value:
                        self.status = PropStatus.INFEASIBLE
                        self._infeasible_at = len(self.trail)
                        return False
                    continue
                self._apply_fix(var, value, reason)
                for r in inst.var_rows[var]:
                    r = int(r)
                    if not inqueue[r]:
                        inqueue[r] = True
                        queue.append(r)
        return True

    # -- queries used by tests and callers ----------------------------------

    def fixed_map(self) -> dict[int, int]:
        return {int(j): int(self.domains[j]) for j in np.flatnonzero(self.domains != FREE)}

    def recomputed_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Activity bounds rebuilt from scratch, for differential checks."""
        inst = self.instance
        lo = np.zeros(inst.m)
        hi = np.zeros(inst.m)
        for i, row in enumerate(inst.rows):
            for k in range(row.cols.size):
                var = int(row.cols[k])
                a = float(row.coefs[k])
                if self.domains[var] == FREE:
                    lo[i] += min(0.0, a)
                    hi[i] += max(0.0, a)
                else:
                    lo[i] += a * self.domains[var]
                    hi[i] += a * self.domains[var]
        return lo, hi


def init_propagation(instance: BipInstance) -> PropagationState:
    """Compute activity bounds and apply all root-forced fixings to fixpoint."""
    state = PropagationState(instance)
    state._propagate(deque(range(instance.m)), Reason.ROOT)
    return state


def fix_and_propagate(state: PropagationState, var: int, value: int) -> FixResult:
    """Fix one free variable and propagate; a conflict leaves no residue."""
    if state.status is not PropStatus.CONSISTENT:
        raise ValueError("fix_and_propagate requires a consistent state")
    if not 0 <= var < state.instance.n:
        raise ValueError(f"variable index {var} out of range")
    if value not in (0, 1):
        raise ValueError("value must be 0 or 1")
    if state.domains[var] != FREE:
        raise ValueError(f"variable {var} is already fixed")
    mark = len(state.trail)
    state._apply_fix(var, int(value), Reason.DECISION)
    queue = deque(int(r) for r in state.instance.var_rows[var])
    if not state._propagate(queue, Reason.IMPLICATION):
        state._unwind(mark)
        return FixResult(ok=False, implied=[])
    implied = [(e.var, e.value) for e in state.trail[mark + 1:]]
    return FixResult(ok=True, implied=implied)


def push_mark(state: PropagationState) -> None:
    state.marks.append(len(state.trail))


def backtrack_to_mark(state: PropagationState) -> None:
    if not state.marks:
        raise ValueError("no mark to backtrack to")
    state._unwind(state.marks.pop())
