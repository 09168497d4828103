"""Exact solving of pool-restricted problems via depth-first branch and bound.

The restricted problem fixes every variable whose component pool admits only
one value. Each node runs fix-and-propagate for its branching decision and
prunes with the last valid LP bound; on large instances the LP is re-solved
only every few levels (a parent's optimal LP objective remains a valid bound
for its descendants), branching on the most fractional value of the most
recent LP solution and exploring its rounding first.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from cmsabip.lp_relaxation import LpStatus, solve_lp
from cmsabip.model import BipInstance, Sense, Solution, evaluate, make_row
from cmsabip.mps_io import write_mps
from cmsabip.propagation import (
    FREE,
    PropStatus,
    backtrack_to_mark,
    fix_and_propagate,
    init_propagation,
    push_mark,
)

INT_TOL = 1e-6    # LP values this close to 0/1 count as integral
GAP_TOL = 1e-6    # prune when bound >= incumbent - GAP_TOL
LARGE_ROWS = 200  # above this row count, LPs are solved every LP_STRIDE levels
LP_STRIDE = 6


@dataclass
class RestrictedProblem:
    base: BipInstance
    forced: dict[int, int]
    free_vars: list[int]


@dataclass
class SearchResult:
    best: Solution | None
    proven: bool      # search completed; best is optimal (or none exists)
    nodes: int


def build_restriction(instance: BipInstance, pool: "ComponentPool") -> RestrictedProblem:
    forced: dict[int, int] = {}
    free_vars: list[int] = []
    for j in range(instance.n):
        has0 = bool(pool.present[j, 0])
        has1 = bool(pool.present[j, 1])
        if not has0 and not has1:
            raise ValueError(f"variable {j} has no component in the pool")
        if has0 and has1:
            free_vars.append(j)
        else:
            forced[j] = 1 if has1 else 0
    return RestrictedProblem(base=instance, forced=forced, free_vars=free_vars)


if TYPE_CHECKING:  # pragma: no cover
    from cmsabip.orchestrator import ComponentPool


def _consistent_with(solution: Solution, forced: dict[int, int]) -> bool:
    return all(int(solution.values[j]) == v for j, v in forced.items())


def solve_restricted(rp: RestrictedProblem, time_limit: float,
                     incumbent: Solution | None = None) -> Solution | None:
    """Best feasible solution of the restricted problem found in the budget."""
    return search_restricted(rp, time_limit, incumbent).best


def search_restricted(rp: RestrictedProblem, time_limit: float,
                      incumbent: Solution | None = None) -> SearchResult:
    if time_limit <= 0:
        raise ValueError("time_limit must be positive")
    base = rp.base
    deadline = time.monotonic() + time_limit
    state = init_propagation(base)
    if state.status is PropStatus.INFEASIBLE:
        return SearchResult(best=None, proven=True, nodes=0)
    for var, val in sorted(rp.forced.items()):
        if state.domains[var] != FREE:
            if int(state.domains[var]) != val:
                return SearchResult(best=None, proven=True, nodes=0)
            continue
        if not fix_and_propagate(state, var, val).ok:
            return SearchResult(best=None, proven=True, nodes=0)

    best: Solution | None = None
    if incumbent is not None and incumbent.feasible and _consistent_with(incumbent, rp.forced):
        best = incumbent

    stride = 1 if base.m <= LARGE_ROWS else LP_STRIDE
    nodes = 0
    limit = max(sys.getrecursionlimit(), 4 * base.n + 100)
    sys.setrecursionlimit(limit)

    def consider(values: np.ndarray) -> None:
        nonlocal best
        sol = evaluate(base, values)
        if sol.feasible and (best is None or sol.objective < best.objective):
            best = sol

    def round_dive(lp_values: np.ndarray) -> None:
        """Complete the node by LP-guided rounding with propagation repair.

        Much cheaper than the tree search below it; supplies early
        incumbents that tighten pruning.
        """
        push_mark(state)
        try:
            while True:
                free = np.flatnonzero(state.domains == FREE)
                if free.size == 0:
                    consider(state.domains.copy())
                    return
                frac = lp_values[free]
                var = int(free[int(np.argmin(np.abs(frac - np.round(frac))))])
                value = 1 if lp_values[var] >= 0.5 else 0
                if not fix_and_propagate(state, var, value).ok:
                    if not fix_and_propagate(state, var, 1 - value).ok:
                        return
        finally:
            backtrack_to_mark(state)

    def dfs(depth: int, bound: float, lp_values: np.ndarray | None) -> bool:
        """Returns False when the time budget interrupted the search."""
        nonlocal nodes
        if time.monotonic() > deadline:
            return False
        nodes += 1
        free = np.flatnonzero(state.domains == FREE)
        solve_here = lp_values is None or depth % stride == 0 or free.size <= 20
        if solve_here:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return False
            lp = solve_lp(base, fixings=state.fixed_map(), time_limit=remaining)
            if lp.status is LpStatus.INFEASIBLE:
                return True
            if lp.status is LpStatus.TIME_LIMIT:
                return False
            bound = lp.objective
            lp_values = lp.values
        if best is not None and bound >= best.objective - GAP_TOL:
            return True
        if free.size == 0:
            consider(state.domains.copy())
            return True
        frac = lp_values[free]
        dist = np.abs(frac - np.round(frac))
        if solve_here and np.all(dist <= INT_TOL):
            # Integral LP under the current fixings: evaluate its rounding.
            values = state.domains.copy()
            values[free] = np.round(frac).astype(np.int8)
            consider(values)
            return True
        if solve_here:
            round_dive(lp_values)
            if best is not None and bound >= best.objective - GAP_TOL:
                return True
        var = int(free[int(np.argmax(np.minimum(frac, 1.0 - frac)))])
        first = 1 if lp_values[var] >= 0.5 else 0
        for value in (first, 1 - first):
            push_mark(state)
            res = fix_and_propagate(state, var, value)
            if not res.ok:
                backtrack_to_mark(state)
                continue
            done = dfs(depth + 1, bound, lp_values)
            backtrack_to_mark(state)
            if not done:
                return False
        return True

    proven = dfs(0, -np.inf, None)
    return SearchResult(best=best, proven=proven, nodes=nodes)


def initial_heuristic(instance: BipInstance, time_limit: float) -> Solution | None:
    """LP diving start heuristic; never returns an infeasible solution."""
    sol, _ = dive_heuristic(instance, time_limit)
    return sol


def dive_heuristic(instance: BipInstance, time_limit: float):
    """LP diving; also reports the root LP for bound reuse by callers.

    Repeatedly solves the LP under the current fixings and fixes the
    variable closest to integral at its rounded value; a conflict flips the
    value, a second conflict aborts.
    """
    if time_limit <= 0:
        raise ValueError("time_limit must be positive")
    deadline = time.monotonic() + time_limit
    state = init_propagation(instance)
    if state.status is PropStatus.INFEASIBLE:
        return None, None
    root_lp = None
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return None, root_lp
        lp = solve_lp(instance, fixings=state.fixed_map(), time_limit=remaining)
        if root_lp is None:
            root_lp = lp
        if lp.status is LpStatus.INFEASIBLE or lp.status is LpStatus.TIME_LIMIT:
            return None, root_lp
        free = np.flatnonzero(state.domains == FREE)
        if free.size == 0:
            sol = evaluate(instance, state.domains.copy())
            return (sol if sol.feasible else None), root_lp
        frac = lp.values[free]
        dist = np.minimum(frac, 1.0 - frac)
        if np.all(dist <= INT_TOL):
            values = state.domains.copy()
            values[free] = np.round(frac).astype(np.int8)
            sol = evaluate(instance, values)
            return (sol if sol.feasible else None), root_lp
        var = int(free[int(np.argmin(dist))])
        value = 1 if lp.values[var] >= 0.5 else 0
        if not fix_and_propagate(state, var, value).ok:
            if not fix_and_propagate(state, var, 1 - value).ok:
                return None, root_lp


def solve_with_external(rp: RestrictedProblem, time_limit: float,
                        command_template: str, scratch_dir: str | None = None
                        ) -> Solution | None:
    """Hand the restricted problem to an external solver command.

    The restriction is materialized by appending one equality row per forced
    variable to the base problem. The command template receives {mps} and
    {sol} paths; it must write `<var name> <value>` lines. Nonzero exit,
    timeout, or an unusable solution file all yield None.
    """
    base = rp.base
    extra = [make_row([(var, 1.0)], Sense.EQ, float(val), f"FIX_{base.var_names[var]}")
             for var, val in sorted(rp.forced.items())]
    extended = BipInstance(name=base.name + "_restricted",
                           objective=base.objective.copy(),
                           rows=list(base.rows) + extra,
                           var_names=list(base.var_names),
                           maximize_input=base.maximize_input)
    scratch = scratch_dir or os.environ.get("CMSABIP_SCRATCH_DIR") or tempfile.gettempdir()
    os.makedirs(scratch, exist_ok=True)
    tag = f"cmsabip_{os.getpid()}_{time.monotonic_ns()}"
    mps_path = os.path.join(scratch, tag + ".mps")
    sol_path = os.path.join(scratch, tag + ".sol")
    write_mps(extended, mps_path)
    cmd = shlex.split(command_template.format(mps=mps_path, sol=sol_path))
    try:
        proc = subprocess.run(cmd, timeout=time_limit + 5.0,
                              capture_output=True, text=True)
    except (subprocess.TimeoutExpired, OSError):
        return None
    finally:
        if os.path.exists(mps_path):
            os.unlink(mps_path)
    if proc.returncode != 0 or not os.path.exists(sol_path):
        return None
    try:
        values = np.zeros(base.n, dtype=np.int8)
        index = {name: j for j, name in enumerate(base.var_names)}
        with open(sol_path) as fh:
            for line in fh:
                parts = line.split()
                if len(parts) < 2 or parts[0].startswith("#"):
                    continue
                if parts[0] not in index:
                    return None
                val = float(parts[1])
                if abs(val - round(val)) > 1e-4 or round(val) not in (0, 1):
                    return None
                values[index[parts[0]]] = int(round(val))
    finally:
        if os.path.exists(sol_path):
            os.unlink(sol_path)
    sol = evaluate(base, values)
    if not sol.feasible or not _consistent_with(sol, rp.forced):
        return None
    return sol
