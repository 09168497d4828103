"""The construct-merge-solve-adapt loop.

Each iteration constructs n_a candidates, merges their components into the
pool, solves the pool-restricted problem with the exact sub-solver, updates
the incumbent on strict improvement, ages the pool, and steps the adaptive
controller for the determinism rate and the sub-solver budget. The loop
stops when the wall-clock budget runs out, or earlier when the incumbent is
provably optimal (it matches a valid lower bound, or the sub-solver solved
an unrestricted pool to completion).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from cmsabip.construction import (
    build_sampling_vector,
    construct_basic,
    construct_cp,
    sample_plan,
)
from cmsabip.lp_relaxation import LpStatus, solve_lp
from cmsabip.model import BipInstance, Solution
from cmsabip.propagation import PropStatus, init_propagation
from cmsabip.subsolver import (
    build_restriction,
    dive_heuristic,
    search_restricted,
    solve_with_external,
)

PROOF_TOL = 1e-9


class ComponentPool:
    """Present/age bookkeeping for the (variable, value) components."""

    def __init__(self, n: int):
        self.n = n
        self.present = np.zeros((n, 2), dtype=bool)
        self.age = np.zeros((n, 2), dtype=np.int64)

    def covers_all(self) -> bool:
        return bool(self.present.any(axis=1).all())

    def size(self) -> int:
        return int(self.present.sum())


def merge_candidate(pool: ComponentPool, candidate: Solution) -> ComponentPool:
    """Add the candidate's components; ages reset only on first insertion."""
    values = np.asarray(candidate.values, dtype=np.int64)
    if values.shape != (pool.n,):
        raise ValueError("candidate length does not match the pool")
    rows = np.arange(pool.n)
    fresh = ~pool.present[rows, values]
    pool.present[rows[fresh], values[fresh]] = True
    pool.age[rows[fresh], values[fresh]] = 0
    return pool


def adapt(pool: ComponentPool, s_opt: Solution | None, age_max: int) -> ComponentPool:
    """Age the pool against the sub-solver solution and evict stale entries.

    Components of s_opt are rejuvenated to age 0, every other present
    component ages by one, and components older than age_max are removed.
    Without a sub-solver solution all present components age.
    """
    if s_opt is not None:
        values = np.asarray(s_opt.values, dtype=np.int64)
        keep = np.zeros((pool.n, 2), dtype=bool)
        keep[np.arange(pool.n), values] = True
        pool.age[pool.present & ~keep] += 1
        pool.age[pool.present & keep] = 0
    else:
        pool.age[pool.present] += 1
    stale = pool.present & (pool.age > age_max)
    pool.present[stale] = False
    pool.age[stale] = 0
    return pool


@dataclass
class CmsaParams:
    n_a: int = 5
    age_max: int = 1
    t_lp: float = 10.0
    d_rate_lb: float = 0.1
    d_rate_ub: float = 0.3
    t_sub_lb: float = 30.0
    t_sub_ub: float = 100.0
    total_budget: float = 1000.0
    seed: int = 1
    cp_enabled: bool = False
    merge_infeasible: bool = True
    external_solver_cmd: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.d_rate_lb <= self.d_rate_ub <= 0.5:
            raise ValueError("d_rate bounds must satisfy 0 < lb <= ub <= 0.5")
        if not 0.0 < self.t_sub_lb <= self.t_sub_ub:
            raise ValueError("t_sub bounds must satisfy 0 < lb <= ub")
        if self.n_a < 1:
            raise ValueError("n_a must be at least 1")
        if self.age_max < 0:
            raise ValueError("age_max must be nonnegative")
        if self.t_lp <= 0 or self.total_budget <= 0:
            raise ValueError("time budgets must be positive")


@dataclass
class AdaptiveController:
    d_rate_lb: float
    d_rate_ub: float
    t_sub_lb: float
    t_sub_ub: float
    current_d_rate: float = field(init=False)
    current_t_sub: float = field(init=False)
    step_d: float = field(init=False)
    step_t: float = field(init=False)

    def __post_init__(self) -> None:
        self.current_d_rate = self.d_rate_lb
        self.current_t_sub = self.t_sub_lb
        self.step_d = (self.d_rate_ub - self.d_rate_lb) / 5.0
        self.step_t = (self.t_sub_ub - self.t_sub_lb) / 5.0


def controller_step(ctrl: AdaptiveController, improved: bool) -> AdaptiveController:
    """Reset both knobs on improvement, otherwise step up and wrap past ub."""
    if improved:
        ctrl.current_d_rate = ctrl.d_rate_lb
        ctrl.current_t_sub = ctrl.t_sub_lb
        return ctrl
    cand = ctrl.current_d_rate + ctrl.step_d
    ctrl.current_d_rate = ctrl.d_rate_lb if cand > ctrl.d_rate_ub + 1e-12 \
        else min(cand, ctrl.d_rate_ub)
    cand = ctrl.current_t_sub + ctrl.step_t
    ctrl.current_t_sub = ctrl.t_sub_lb if cand > ctrl.t_sub_ub + 1e-12 \
        else min(cand, ctrl.t_sub_ub)
    return ctrl


class TraceEvent(enum.Enum):
    INITIAL_HEURISTIC = "INITIAL_HEURISTIC"
    SUBSOLVER_IMPROVEMENT = "SUBSOLVER_IMPROVEMENT"


@dataclass
class TracePoint:
    elapsed_s: float
    objective: float
    iteration: int
    event: TraceEvent


class RunStatus(enum.Enum):
    BUDGET_EXHAUSTED = "budget_exhausted"
    PROVEN_OPTIMAL = "proven_optimal"
    INFEASIBLE_PROVEN = "infeasible_proven"


@dataclass
class RunStats:
    iterations: int = 0
    constructions: int = 0
    subsolver_calls: int = 0
    elapsed_s: float = 0.0
    lower_bound: float = float("-inf")
    status: RunStatus = RunStatus.BUDGET_EXHAUSTED


@dataclass
class RunResult:
    best: Solution | None
    trace: list[TracePoint]
    stats: RunStats


def run(instance: BipInstance, params: CmsaParams) -> RunResult:
    start = time.monotonic()
    deadline = start + params.total_budget
    rng = np.random.default_rng(params.seed)
    trace: list[TracePoint] = []
    stats = RunStats()

    def record(objective: float, iteration: int, event: TraceEvent) -> None:
        elapsed = time.monotonic() - start
        if trace and elapsed <= trace[-1].elapsed_s:
            elapsed = trace[-1].elapsed_s + 1e-9
        trace.append(TracePoint(elapsed, objective, iteration, event))

    def finish(best: Solution | None, status: RunStatus) -> RunResult:
        stats.status = status
        stats.elapsed_s = time.monotonic() - start
        return RunResult(best=best, trace=trace, stats=stats)

    state = init_propagation(instance)
    if state.status is PropStatus.INFEASIBLE:
        return finish(None, RunStatus.INFEASIBLE_PROVEN)

    lower_bound = float("-inf")
    incumbent: Solution | None = None
    root_fixed = state.fixed_map()

    root_lp = None
    remaining = deadline - time.monotonic()
    if remaining > 0:
        heuristic_sol, root_lp = dive_heuristic(instance, min(params.t_lp, remaining))
        if root_lp is not None and root_lp.status is LpStatus.OPTIMAL:
            lower_bound = root_lp.objective
        if heuristic_sol is not None:
            incumbent = heuristic_sol
            record(incumbent.objective, 0, TraceEvent.INITIAL_HEURISTIC)

    lp_values = None
    if incumbent is None:
        # The heuristic's first dive step already solved this LP whenever the
        # root has no fixings (or the CP variant wants them applied anyway).
        reusable = (root_lp is not None and root_lp.status is LpStatus.OPTIMAL
                    and (params.cp_enabled or not root_fixed))
        if reusable:
            lp = root_lp
        else:
            remaining = deadline - time.monotonic()
            lp = solve_lp(instance,
                          fixings=root_fixed if params.cp_enabled else None,
                          time_limit=max(min(params.t_lp, remaining), 0.05))
        if lp.status is LpStatus.INFEASIBLE:
            return finish(None, RunStatus.INFEASIBLE_PROVEN)
        if lp.status is LpStatus.OPTIMAL:
            lower_bound = max(lower_bound, lp.objective)
        lp_values = lp.values

    stats.lower_bound = lower_bound
    pool = ComponentPool(instance.n)
    ctrl = AdaptiveController(params.d_rate_lb, params.d_rate_ub,
                              params.t_sub_lb, params.t_sub_ub)

    def proven_optimal() -> bool:
        return incumbent is not None and incumbent.objective <= lower_bound + PROOF_TOL

    iteration = 0
    while not proven_optimal() and time.monotonic() < deadline:
        iteration += 1
        stats.iterations = iteration
        d_rate = ctrl.current_d_rate
        t_sub = ctrl.current_t_sub
        if incumbent is not None:
            sv = build_sampling_vector(incumbent.values, d_rate, "incumbent")
        else:
            sv = build_sampling_vector(lp_values, d_rate, "lp")
        for _ in range(params.n_a):
            if params.cp_enabled:
                plan = sample_plan(instance.n, rng)
                cand = construct_cp(instance, sv, plan, state, rng)
            else:
                cand = construct_basic(instance, sv, rng)
            stats.constructions += 1
            if cand.feasible or params.merge_infeasible:
                merge_candidate(pool, cand)

        s_opt: Solution | None = None
        restriction_exact = False
        proven_sub = False
        if pool.covers_all():
            rp = build_restriction(instance, pool)
            # Forcings that are all root implications do not cut off any
            # feasible point, so a completed search proves global optimality.
            restriction_exact = all(root_fixed.get(j) == v
                                    for j, v in rp.forced.items())
            budget = min(t_sub, deadline - time.monotonic())
            if budget > 0.01:
                stats.subsolver_calls += 1
                if params.external_solver_cmd:
                    s_opt = solve_with_external(rp, budget, params.external_solver_cmd)
                else:
                    result = search_restricted(rp, budget, incumbent)
                    s_opt = result.best
                    proven_sub = result.proven

        improved = False
        if s_opt is not None and (incumbent is None or s_opt.objective < incumbent.objective):
            incumbent = s_opt
            improved = True
            record(incumbent.objective, iteration, TraceEvent.SUBSOLVER_IMPROVEMENT)

        if proven_sub and restriction_exact:
            if s_opt is None and incumbent is None:
                return finish(None, RunStatus.INFEASIBLE_PROVEN)
            if s_opt is not None:
                lower_bound = max(lower_bound, s_opt.objective)
                stats.lower_bound = lower_bound

        adapt(pool, s_opt, params.age_max)
        controller_step(ctrl, improved)

    status = RunStatus.PROVEN_OPTIMAL if proven_optimal() else RunStatus.BUDGET_EXHAUSTED
    return finish(incumbent, status)
