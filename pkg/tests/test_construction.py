import numpy as np
import pytest

from cmsabip.construction import (
    ConstructionPlan,
    build_sampling_vector,
    construct_basic,
    construct_cp,
    sample_plan,
)
from cmsabip.model import Sense, make_instance
from cmsabip.propagation import init_propagation

from helpers import partition_like_instance, random_feasible_instance


def state_snapshot(state):
    return (state.domains.copy(), state.row_min.copy(), state.row_max.copy(),
            len(state.trail), state.status)


def state_equals(state, snap):
    d, lo, hi, tl, st = snap
    return (np.array_equal(state.domains, d) and np.array_equal(state.row_min, lo)
            and np.array_equal(state.row_max, hi) and len(state.trail) == tl
            and state.status == st)


# -- sampling vector -------------------------------------------------------------


def test_incumbent_formula():
    sv = build_sampling_vector(np.array([0, 1]), 0.1, "incumbent")
    assert sv.probs.tolist() == [0.1, 0.9]


def test_lp_clamp_formula():
    sv = build_sampling_vector(np.array([0.02, 0.5, 0.99]), 0.05, "lp")
    assert sv.probs.tolist() == [0.05, 0.5, 0.95]


def test_lp_clamp_boundary_inclusive():
    sv = build_sampling_vector(np.array([0.05, 0.95]), 0.05, "lp")
    assert sv.probs.tolist() == [0.05, 0.95]  # values at the band edge pass through


def test_d_rate_validation():
    with pytest.raises(ValueError):
        build_sampling_vector(np.array([0.5]), 0.0, "lp")
    with pytest.raises(ValueError):
        build_sampling_vector(np.array([0.5]), 0.55, "lp")
    with pytest.raises(ValueError):
        build_sampling_vector(np.array([0.5]), -0.1, "incumbent")
    # 0.5 itself is reachable by the adaptive controller under preset 4.
    sv = build_sampling_vector(np.array([0.0, 1.0]), 0.5, "incumbent")
    assert sv.probs.tolist() == [0.5, 0.5]


def test_sampling_formulas_on_random_pairs():
    rng = np.random.default_rng(9)
    for _ in range(2000):
        n = int(rng.integers(1, 12))
        d = float(rng.uniform(0.01, 0.49))
        if rng.random() < 0.5:
            src = rng.integers(0, 2, size=n).astype(float)
            sv = build_sampling_vector(src, d, "incumbent")
            expect = np.where(src == 0.0, d, 1.0 - d)
        else:
            src = rng.random(n)
            sv = build_sampling_vector(src, d, "lp")
            expect = np.where(src < d, d, np.where(src > 1.0 - d, 1.0 - d, src))
        assert np.array_equal(sv.probs, expect)


# -- basic construction ----------------------------------------------------------


def test_basic_rounding_marginals():
    inst = make_instance([0.0, 0.0], [([(0, 1.0), (1, 1.0)], Sense.LE, 2.0)])
    sv = build_sampling_vector(np.array([0.9, 0.1]), 0.1, "lp")
    rng = np.random.default_rng(12345)
    count1 = 0
    count2 = 0
    trials = 100_000
    for _ in range(trials):
        cand = construct_basic(inst, sv, rng)
        count1 += int(cand.values[0])
        count2 += int(cand.values[1])
    assert count1 / trials == pytest.approx(0.9, abs=0.01)
    assert count2 / trials == pytest.approx(0.1, abs=0.01)


def test_incumbent_recovery_probability():
    # With d_rate d, a candidate reproduces the incumbent w.p. (1-d)^n.
    inst = make_instance([0.0] * 5, [([(0, 1.0)], Sense.LE, 1.0)])
    incumbent = np.array([1, 0, 1, 1, 0], dtype=np.int8)
    sv = build_sampling_vector(incumbent, 0.03, "incumbent")
    rng = np.random.default_rng(99)
    trials = 20_000
    hits = sum(
        int(np.array_equal(construct_basic(inst, sv, rng).values, incumbent))
        for _ in range(trials))
    assert hits / trials == pytest.approx(0.97 ** 5, abs=0.01)


def test_plan_requires_permutation():
    with pytest.raises(ValueError):
        ConstructionPlan(order=np.array([0, 0, 2]), cp_enabled=True)


# -- propagation-supported construction --------------------------------------------


def test_cp_construction_feasible_on_packing_row():
    # x1 + x2 <= 1 with aggressive probs: propagation or the flip always
    # rescues feasibility, whichever visiting order is drawn.
    inst = make_instance([0.0, 0.0], [([(0, 1.0), (1, 1.0)], Sense.LE, 1.0)])
    sv = build_sampling_vector(np.array([0.9, 0.9]), 0.1, "lp")
    state = init_propagation(inst)
    rng = np.random.default_rng(3)
    for _ in range(500):
        plan = sample_plan(2, rng)
        cand = construct_cp(inst, sv, plan, state, rng)
        assert cand.feasible


def test_cp_respects_root_fixings():
    # Root propagation pins x1 = 1; every candidate carries it.
    inst = make_instance([0.0, 0.0],
                         [([(0, 1.0)], Sense.GE, 1.0),
                          ([(0, 1.0), (1, 1.0)], Sense.LE, 2.0)])
    state = init_propagation(inst)
    assert state.domains[0] == 1
    sv = build_sampling_vector(np.array([0.05, 0.5]), 0.05, "lp")
    rng = np.random.default_rng(8)
    for _ in range(200):
        cand = construct_cp(inst, sv, sample_plan(2, rng), state, rng)
        assert cand.values[0] == 1


def test_cp_double_conflict_falls_back():
    # Three parity-coupled equality rows admit no 0/1 solution, but the root
    # is consistent, so the first decision always hits a double conflict.
    inst = make_instance([0.0] * 3,
                         [([(0, 1.0), (1, 1.0)], Sense.EQ, 1.0),
                          ([(0, 1.0), (2, 1.0)], Sense.EQ, 1.0),
                          ([(1, 1.0), (2, 1.0)], Sense.EQ, 1.0)])
    state = init_propagation(inst)
    snap = state_snapshot(state)
    sv = build_sampling_vector(np.array([0.5, 0.5, 0.5]), 0.4, "lp")
    rng = np.random.default_rng(21)
    for _ in range(50):
        cand = construct_cp(inst, sv, sample_plan(3, rng), state, rng)
        assert cand.values.tolist() is not None  # a candidate is always returned
        assert not cand.feasible  # the instance has no feasible point
        assert state_equals(state, snap)


def test_both_constructors_restore_state():
    rng = np.random.default_rng(44)
    for _ in range(20):
        inst = random_feasible_instance(rng, n_range=(5, 12))
        state = init_propagation(inst)
        if state.status.value != "consistent":
            continue
        snap = state_snapshot(state)
        sv = build_sampling_vector(rng.random(inst.n), 0.1, "lp")
        for _ in range(10):
            construct_cp(inst, sv, sample_plan(inst.n, rng), state, rng)
            assert state_equals(state, snap)


def test_cp_feasible_fraction_dominates_basic():
    # Paired-seed comparison on a tightly constrained partitioning instance.
    rng = np.random.default_rng(500)
    inst = partition_like_instance(rng, universe=12, blocks=24, planted_block=3)
    from cmsabip.lp_relaxation import solve_lp

    lp = solve_lp(inst, time_limit=10.0)
    sv = build_sampling_vector(lp.values, 0.1, "lp")
    state = init_propagation(inst)
    feas_basic = 0
    feas_cp = 0
    trials = 1000
    for k in range(trials):
        rng_b = np.random.default_rng(10_000 + k)
        rng_c = np.random.default_rng(10_000 + k)
        feas_basic += int(construct_basic(inst, sv, rng_b).feasible)
        cand = construct_cp(inst, sv, sample_plan(inst.n, rng_c), state, rng_c)
        feas_cp += int(cand.feasible)
    assert feas_cp >= feas_basic
    assert feas_cp > 0
