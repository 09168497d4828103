"""Shared test utilities: brute-force oracles and instance generators.

The brute-force checker enumerates all 2^n assignments independently of
the solver code paths; tests freeze expected values computed from it.
"""

from __future__ import annotations

import numpy as np

from cmsabip.model import BipInstance, Sense, make_instance

FEAS_TOL = 1e-9


def all_assignments(n: int) -> np.ndarray:
    """All 2^n binary vectors, row k = binary digits of k (LSB = x1)."""
    codes = np.arange(2 ** n, dtype=np.uint32)
    return ((codes[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(np.float64)


def dense_rows(inst: BipInstance) -> tuple[np.ndarray, list[Sense], np.ndarray]:
    a = np.zeros((inst.m, inst.n))
    rhs = np.zeros(inst.m)
    senses = []
    for i, row in enumerate(inst.rows):
        a[i, row.cols] = row.coefs
        rhs[i] = row.rhs
        senses.append(row.sense)
    return a, senses, rhs


class BruteForce:
    """Exhaustive enumeration oracle over a small instance (n <= ~20)."""

    def __init__(self, inst: BipInstance):
        self.inst = inst
        x = all_assignments(inst.n)
        a, senses, rhs = dense_rows(inst)
        act = x @ a.T
        ok = np.ones(len(x), dtype=bool)
        for i, sense in enumerate(senses):
            if sense is Sense.LE:
                ok &= act[:, i] <= rhs[i] + FEAS_TOL
            elif sense is Sense.GE:
                ok &= act[:, i] >= rhs[i] - FEAS_TOL
            else:
                ok &= np.abs(act[:, i] - rhs[i]) <= FEAS_TOL
        self.assignments = x
        self.feasible_mask = ok
        self.objectives = x @ inst.objective
        # Bit codes of the feasible assignments, for fast completion queries.
        self._codes = np.arange(2 ** inst.n, dtype=np.uint32)[ok]

    @property
    def any_feasible(self) -> bool:
        return bool(self.feasible_mask.any())

    def optimum(self) -> float:
        vals = self.objectives[self.feasible_mask]
        if vals.size == 0:
            raise ValueError("instance is infeasible")
        return float(vals.min())

    def optimum_under(self, forced: dict[int, int]) -> float | None:
        """Best objective among feasible completions of a partial assignment."""
        mask = self.feasible_mask.copy()
        for var, val in forced.items():
            mask &= self.assignments[:, var] == val
        vals = self.objectives[mask]
        return float(vals.min()) if vals.size else None

    def has_completion(self, partial: dict[int, int]) -> bool:
        """Does any feasible assignment extend the given partial one?"""
        fixed_mask = np.uint32(0)
        value_bits = np.uint32(0)
        for var, val in partial.items():
            fixed_mask |= np.uint32(1 << var)
            if val:
                value_bits |= np.uint32(1 << var)
        return bool(np.any((self._codes & fixed_mask) == value_bits))


def random_feasible_instance(rng: np.random.Generator, n_range=(8, 15),
                             m_range=(4, 12), eq_prob=0.2) -> BipInstance:
    """Random BIP with integer data, feasible by construction.

    Rows are planted around a random 0/1 point: LE/GE rows get slack,
    EQ rows pass exactly through the planted point.
    """
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    planted = rng.integers(0, 2, size=n)
    objective = rng.integers(-10, 11, size=n).astype(float)
    specs = []
    for i in range(m):
        k = int(rng.integers(2, min(n, 6) + 1))
        cols = rng.choice(n, size=k, replace=False)
        coefs = rng.integers(-4, 5, size=k)
        coefs[coefs == 0] = 1
        lhs = int(np.dot(coefs, planted[cols]))
        u = rng.random()
        if u < eq_prob:
            sense, rhs = Sense.EQ, lhs
        elif u < 0.5 + eq_prob / 2:
            sense, rhs = Sense.LE, lhs + int(rng.integers(0, 3))
        else:
            sense, rhs = Sense.GE, lhs - int(rng.integers(0, 3))
        specs.append((list(zip(cols.tolist(), coefs.tolist())), sense, float(rhs)))
    return make_instance(objective, specs, name="rand")


def random_instance(rng: np.random.Generator, n_range=(4, 12),
                    m_range=(2, 10)) -> BipInstance:
    """Random BIP with no feasibility guarantee (may be infeasible)."""
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    objective = rng.integers(-10, 11, size=n).astype(float)
    specs = []
    for i in range(m):
        k = int(rng.integers(1, min(n, 5) + 1))
        cols = rng.choice(n, size=k, replace=False)
        coefs = rng.integers(-4, 5, size=k)
        coefs[coefs == 0] = 1
        sense = [Sense.LE, Sense.GE, Sense.EQ][int(rng.integers(0, 3))]
        rhs = float(rng.integers(-4, 5))
        specs.append((list(zip(cols.tolist(), coefs.tolist())), sense, rhs))
    return make_instance(objective, specs, name="rand")


def partition_like_instance(rng: np.random.Generator, universe=30, blocks=60,
                            planted_block=3) -> BipInstance:
    """Tightly constrained set-partitioning-style BIP (equality rows).

    A disjoint cover is planted so the instance is feasible; the
    remaining blocks are random. One EQ row per universe element.
    """
    assert universe % planted_block == 0
    perm = rng.permutation(universe)
    cover = [perm[i:i + planted_block] for i in range(0, universe, planted_block)]
    subsets = [np.sort(c) for c in cover]
    while len(subsets) < blocks:
        k = int(rng.integers(2, 5))
        subsets.append(np.sort(rng.choice(universe, size=k, replace=False)))
    order = rng.permutation(len(subsets))
    subsets = [subsets[i] for i in order]
    objective = rng.integers(1, 6, size=blocks).astype(float)
    specs = []
    for e in range(universe):
        entries = [(j, 1.0) for j, s in enumerate(subsets) if e in s]
        specs.append((entries, Sense.EQ, 1.0, f"elem{e}"))
    return make_instance(objective, specs, name="partition")


def knapsack3() -> BipInstance:
    """min -3x1 -4x2 -5x3  s.t.  2x1 + 3x2 + 4x3 <= 6."""
    return make_instance(
        [-3.0, -4.0, -5.0],
        [([(0, 2.0), (1, 3.0), (2, 4.0)], Sense.LE, 6.0)],
        name="knap3",
    )


# -- covering-design instance (reconstruction of the MIPLIB cov1075 data) -----
#
# Columns are the 120 seven-element subsets of a ten-point set; for every
# subset T of sizes 1..5 a row demands enough chosen blocks through T
# (recursive covering lower bounds; 1 for the five-element subsets). This
# yields 120 columns, 637 rows, 14280 nonzeros and known optimum 20.

def cov1075_text() -> str:
    from itertools import combinations

    points = range(10)
    blocks = list(combinations(points, 7))
    block_sets = [frozenset(b) for b in blocks]
    min_through = {5: 1, 4: 2, 3: 4, 2: 7, 1: 11}

    lines = ["NAME cov1075", "ROWS", " N obj"]
    rows = []
    for size in (1, 2, 3, 4, 5):
        for idx, subset in enumerate(combinations(points, size)):
            rname = f"t{size}_{idx}"
            rows.append((rname, frozenset(subset), min_through[size]))
            lines.append(f" G {rname}")
    lines.append("COLUMNS")
    lines.append(" M 'MARKER' 'INTORG'")
    col_rows = [[] for _ in blocks]
    for rname, subset, _ in rows:
        for j, bset in enumerate(block_sets):
            if subset <= bset:
                col_rows[j].append(rname)
    for j in range(len(blocks)):
        lines.append(f" x{j:04d} obj 1")
        for rname in col_rows[j]:
            lines.append(f" x{j:04d} {rname} 1")
    lines.append(" M 'MARKER' 'INTEND'")
    lines.append("RHS")
    for rname, _, need in rows:
        lines.append(f" RHS {rname} {need}")
    lines.append("BOUNDS")
    for j in range(len(blocks)):
        lines.append(f" UP BND x{j:04d} 1")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"
