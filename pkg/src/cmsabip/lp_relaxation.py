"""LP relaxation: bounded-variable primal simplex over the [0,1] box.

Each kept row i is rewritten as a_i x - s_i = 0 where the slack s_i carries
the row's activity interval, so the working matrix is [A | -I | R] with R
holding phase-1 artificials for rows whose initial slack cannot absorb the
activity at the starting point. Phase 1 minimizes total artificial mass;
phase 2 optimizes the true objective with artificials pinned to [0, 0].

The basis inverse is a dense LU factorization plus product-form eta updates,
refactorized every REFACTOR_EVERY pivots. Entering variables are picked by
the most-violating reduced cost (lowest index on ties); after BLAND_TRIGGER
consecutive degenerate pivots Bland's rule takes over until progress resumes.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve

from cmsabip.model import BipInstance, Sense

DTOL = 1e-9        # reduced-cost optimality tolerance
PIVOT_TOL = 1e-10  # smallest acceptable pivot element
DEGEN_TOL = 1e-9   # step sizes at or below this count as degenerate
PHASE1_TOL = 1e-7  # residual infeasibility accepted as "zero"
REFACTOR_EVERY = 100

BASIC, AT_LOWER, AT_UPPER = 0, 1, 2


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    TIME_LIMIT = "time_limit"
    INFEASIBLE = "infeasible"


@dataclass
class LpSolution:
    values: np.ndarray  # float64 (n,), fixed variables at their fixed value
    objective: float
    status: LpStatus
    iterations: int


def _check_fixings(instance: BipInstance, fixings) -> dict[int, int]:
    if fixings is None:
        return {}
    out: dict[int, int] = {}
    for var, val in fixings.items():
        var = int(var)
        val = int(val)
        if not 0 <= var < instance.n:
            raise ValueError(f"fixing index {var} out of range")
        if val not in (0, 1):
            raise ValueError(f"fixing value for variable {var} must be 0 or 1")
        if var in out and out[var] != val:
            raise ValueError(f"variable {var} fixed twice with different values")
        out[var] = val
    return out


def _fallback_values(lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """Sampling base when no feasible iterate exists: free vars at 0.5."""
    values = np.full(lb.size, 0.5)
    fixed = lb == ub
    values[fixed] = lb[fixed]
    return values


def solve_lp(instance: BipInstance, fixings=None, time_limit: float = 10.0) -> LpSolution:
    """Solve the LP relaxation under the given partial 0/1 fixings."""
    if time_limit <= 0:
        raise ValueError("time_limit must be positive")
    fixed = _check_fixings(instance, fixings)
    deadline = time.monotonic() + time_limit

    n = instance.n
    lb = np.zeros(n)
    ub = np.ones(n)
    for var, val in fixed.items():
        lb[var] = ub[var] = float(val)

    # Row intervals and activity ranges under the current box; rows that can
    # never be violated are dropped, rows that can never be satisfied prove
    # infeasibility outright.
    kept: list[int] = []
    row_lo: list[float] = []
    row_hi: list[float] = []
    for i, row in enumerate(instance.rows):
        pos = row.coefs > 0
        amin = float(np.dot(row.coefs[pos], lb[row.cols[pos]])
                     + np.dot(row.coefs[~pos], ub[row.cols[~pos]]))
        amax = float(np.dot(row.coefs[pos], ub[row.cols[pos]])
                     + np.dot(row.coefs[~pos], lb[row.cols[~pos]]))
        if row.sense is Sense.LE:
            lo_i, hi_i = -np.inf, row.rhs
        elif row.sense is Sense.GE:
            lo_i, hi_i = row.rhs, np.inf
        else:
            lo_i, hi_i = row.rhs, row.rhs
        if amin > hi_i + 1e-9 or amax < lo_i - 1e-9:
            return LpSolution(values=lb.copy(), objective=np.inf,
                              status=LpStatus.INFEASIBLE, iterations=0)
        if amin >= lo_i - 1e-9 and amax <= hi_i + 1e-9:
            continue  # redundant under the box
        kept.append(i)
        row_lo.append(lo_i)
        row_hi.append(hi_i)

    nr = len(kept)
    if nr == 0:
        # Pure box problem: each variable sits at its cheaper bound.
        values = np.where(instance.objective > 0, lb, ub)
        values[lb == ub] = lb[lb == ub]
        return LpSolution(values=values,
                          objective=float(np.dot(instance.objective, values)),
                          status=LpStatus.OPTIMAL, iterations=0)

    return _simplex(instance, lb, ub, kept, np.asarray(row_lo), np.asarray(row_hi),
                    deadline)


def _simplex(instance: BipInstance, lb, ub, kept, row_lo, row_hi, deadline):
    n = instance.n
    nr = len(kept)
    total = n + 2 * nr
    slack0 = n
    art0 = n + nr

    data, rows_idx, cols_idx = [], [], []
    for r, i in enumerate(kept):
        row = instance.rows[i]
        data.extend(row.coefs.tolist())
        rows_idx.extend([r] * row.cols.size)
        cols_idx.extend(row.cols.tolist())

    # Feasibility-greedy start: each variable begins at the bound favored by
    # the senses of the rows it appears in, which empties phase 1 on
    # uniformly covering- or packing-like instances. Ties follow the cost.
    up = np.zeros(n)
    down = np.zeros(n)
    for i in kept:
        row = instance.rows[i]
        pos = np.maximum(row.coefs, 0.0)
        neg = np.maximum(-row.coefs, 0.0)
        if row.sense is Sense.LE:
            np.add.at(down, row.cols, pos)
            np.add.at(up, row.cols, neg)
        elif row.sense is Sense.GE:
            np.add.at(up, row.cols, pos)
            np.add.at(down, row.cols, neg)
    start = np.where(up > down, ub,
                     np.where(down > up, lb,
                              np.where(instance.objective <= 0, ub, lb)))
    start[lb == ub] = lb[lb == ub]
    act0 = np.zeros(nr)
    for r, i in enumerate(kept):
        row = instance.rows[i]
        act0[r] = float(np.dot(row.coefs, start[row.cols]))
    s0 = np.clip(act0, row_lo, row_hi)
    resid = act0 - s0
    sigma = np.where(resid >= 0, 1.0, -1.0)
    for r in range(nr):
        data.append(-1.0)
        rows_idx.append(r)
        cols_idx.append(slack0 + r)
        data.append(-sigma[r])
        rows_idx.append(r)
        cols_idx.append(art0 + r)
    matrix = sp.csc_matrix((data, (rows_idx, cols_idx)), shape=(nr, total))
    matrix_t = matrix.T.tocsr()

    col_lo = np.concatenate([lb, row_lo, np.zeros(nr)])
    col_hi = np.concatenate([ub, row_hi, np.full(nr, np.inf)])
    violated = np.abs(resid) > 1e-12
    col_hi[art0:][~violated] = 0.0

    x = np.concatenate([start, s0, np.abs(resid)])
    vstat = np.full(total, AT_LOWER, dtype=np.int8)
    vstat[:n][start == ub] = AT_UPPER
    vstat[:n][lb == ub] = AT_LOWER
    vstat[slack0:slack0 + nr][s0 >= row_hi] = AT_UPPER
    basis = np.where(violated, art0 + np.arange(nr), slack0 + np.arange(nr))
    vstat[basis] = BASIC

    cost1 = np.zeros(total)
    cost1[art0:] = 1.0
    cost2 = np.zeros(total)
    cost2[:n] = instance.objective

    lu = None
    etas: list[tuple[int, np.ndarray]] = []

    def refactor():
        nonlocal lu
        dense = matrix[:, basis].toarray()
        lu = lu_factor(dense)
        etas.clear()
        xn = x.copy()
        xn[basis] = 0.0
        x[basis] = lu_solve(lu, -(matrix @ xn))

    def ftran(v):
        w = lu_solve(lu, v)
        for p, a in etas:
            wp = w[p] / a[p]
            w -= a * wp
            w[p] = wp
        return w

    def btran(v):
        z = v.copy()
        for p, a in reversed(etas):
            zp = (z[p] - (np.dot(a, z) - a[p] * z[p])) / a[p]
            z[p] = zp
        return lu_solve(lu, z, trans=1)

    refactor()

    phase = 1 if violated.any() else 2
    cost = cost1 if phase == 1 else cost2
    bland_trigger = 5 * (instance.n + instance.m)
    bland = False
    degen_run = 0
    iterations = 0
    banned: set[int] = set()

    while True:
        if time.monotonic() > deadline:
            if phase == 2:
                refactor()  # resync basic values before extraction
                values = np.clip(x[:n], lb, ub)
            else:
                values = _fallback_values(lb, ub)
            return LpSolution(values=values,
                              objective=float(np.dot(instance.objective, values)),
                              status=LpStatus.TIME_LIMIT, iterations=iterations)

        y = btran(cost[basis])
        d = cost - matrix_t @ y
        movable = col_hi - col_lo > 0
        cand_dn = (vstat == AT_LOWER) & movable & (d < -DTOL)
        cand_up = (vstat == AT_UPPER) & movable & (d > DTOL)
        viol = np.zeros(total)
        viol[cand_dn] = -d[cand_dn]
        viol[cand_up] = d[cand_up]
        if banned:
            viol[list(banned)] = 0.0
        if not np.any(viol > 0):
            if phase == 1:
                if float(np.dot(cost, x)) > PHASE1_TOL:
                    return LpSolution(values=_fallback_values(lb, ub),
                                      objective=np.inf, status=LpStatus.INFEASIBLE,
                                      iterations=iterations)
                phase = 2
                cost = cost2
                col_hi[art0:] = 0.0
                x[art0:][vstat[art0:] != BASIC] = 0.0
                banned.clear()
                continue
            refactor()  # clean basics before extraction
            values = np.clip(x[:n], lb, ub)
            return LpSolution(values=values,
                              objective=float(np.dot(instance.objective, values)),
                              status=LpStatus.OPTIMAL, iterations=iterations)

        if bland:
            enter = int(np.flatnonzero(viol > 0)[0])
        else:
            enter = int(np.argmax(viol))
        alpha = ftran(matrix[:, enter].toarray().ravel())
        dirn = 1.0 if vstat[enter] == AT_LOWER else -1.0
        delta = -dirn * alpha

        xb = x[basis]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.full(nr, np.inf)
            up = delta > PIVOT_TOL
            dn = delta < -PIVOT_TOL
            ratios[up] = (col_hi[basis[up]] - xb[up]) / delta[up]
            ratios[dn] = (xb[dn] - col_lo[basis[dn]]) / (-delta[dn])
        ratios = np.maximum(ratios, 0.0)
        theta_bound = col_hi[enter] - col_lo[enter]

        if ratios.size and ratios.min() < theta_bound:
            theta = float(ratios.min())
            tied = np.flatnonzero(ratios <= theta + 1e-12)
            if bland:
                p = int(tied[np.argmin(basis[tied])])
            else:
                p = int(tied[0])
            if abs(alpha[p]) < PIVOT_TOL:
                if etas:
                    refactor()
                    continue
                banned.add(enter)
                continue
            x[basis] = xb + delta * theta
            leaving = int(basis[p])
            if delta[p] > 0:
                vstat[leaving] = AT_UPPER
                x[leaving] = col_hi[leaving]
            else:
                vstat[leaving] = AT_LOWER
                x[leaving] = col_lo[leaving]
            x[enter] = (col_lo[enter] if dirn > 0 else col_hi[enter]) + dirn * theta
            basis[p] = enter
            vstat[enter] = BASIC
            etas.append((p, alpha))
            if len(etas) >= REFACTOR_EVERY:
                refactor()
        else:
            # Bound flip: the entering variable crosses its own range first.
            theta = float(theta_bound)
            if not np.isfinite(theta):
                if etas:
                    refactor()  # stale factors can fake an unblocked ray
                    continue
                raise RuntimeError("unbounded direction in bounded LP (numerical failure)")
            x[basis] = xb + delta * theta
            vstat[enter] = AT_UPPER if dirn > 0 else AT_LOWER
            x[enter] = col_hi[enter] if dirn > 0 else col_lo[enter]

        banned.clear()
        iterations += 1
        if theta <= DEGEN_TOL:
            degen_run += 1
            if degen_run > bland_trigger:
                bland = True
        else:
            degen_run = 0
            bland = False
