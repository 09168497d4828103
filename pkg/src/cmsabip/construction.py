"""Probabilistic candidate generation by randomized rounding.

The sampling vector holds per-variable probabilities of rounding to 1:
around the incumbent its entries are d_rate / 1 - d_rate, without an
incumbent the LP relaxation values are clamped into [d_rate, 1 - d_rate].
The basic constructor rounds all variables in index order. The
propagation-supported constructor visits a fresh random order, skips
variables already fixed by implications, flips a value that propagation
rejects, and after a second rejection finishes the remaining variables by
plain rounding with no further propagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cmsabip.model import BipInstance, Solution, evaluate
from cmsabip.propagation import (
    FREE,
    PropagationState,
    PropStatus,
    backtrack_to_mark,
    fix_and_propagate,
    push_mark,
)


@dataclass
class SamplingVector:
    probs: np.ndarray  # float64 (n,), each in [d_rate, 1 - d_rate]


@dataclass
class ConstructionPlan:
    order: np.ndarray  # permutation of 0..n-1
    cp_enabled: bool

    def __post_init__(self) -> None:
        order = np.asarray(self.order)
        if not np.array_equal(np.sort(order), np.arange(order.size)):
            raise ValueError("order must be a permutation")
        self.order = order.astype(np.int64)


def build_sampling_vector(source, d_rate: float, source_kind: str) -> SamplingVector:
    """Assemble rounding probabilities from the incumbent or the LP values.

    source_kind is "incumbent" (0/1 vector) or "lp" (values in [0, 1]).
    """
    if not 0.0 < d_rate <= 0.5:
        raise ValueError(f"d_rate must lie in (0, 0.5], got {d_rate}")
    source = np.asarray(source, dtype=np.float64)
    if source.ndim != 1:
        raise ValueError("source must be one-dimensional")
    if source_kind == "incumbent":
        if not np.all((source == 0.0) | (source == 1.0)):
            raise ValueError("incumbent source must be 0/1")
        probs = np.where(source == 1.0, 1.0 - d_rate, d_rate)
    elif source_kind == "lp":
        probs = np.clip(source, d_rate, 1.0 - d_rate)
    else:
        raise ValueError(f"unknown source kind {source_kind!r}")
    return SamplingVector(probs=probs)


def sample_plan(n: int, rng: np.random.Generator, cp_enabled: bool = True) -> ConstructionPlan:
    """Fresh uniform visiting order, one per construction."""
    return ConstructionPlan(order=rng.permutation(n), cp_enabled=cp_enabled)


def construct_basic(instance: BipInstance, sv: SamplingVector,
                    rng: np.random.Generator) -> Solution:
    """Independent randomized rounding in index order; may be infeasible."""
    draws = rng.random(instance.n)
    values = (draws < sv.probs).astype(np.int8)
    return construct_from_values(instance, values)


def construct_from_values(instance: BipInstance, values: np.ndarray) -> Solution:
    return evaluate(instance, values)


def construct_cp(instance: BipInstance, sv: SamplingVector, plan: ConstructionPlan,
                 state: PropagationState, rng: np.random.Generator) -> Solution:
    """Randomized rounding with propagation support.

    The shared state must be consistent (root-propagated) on entry and is
    restored to its entry snapshot before returning.
    """
    if state.instance is not instance:
        raise ValueError("propagation state belongs to a different instance")
    if state.status is not PropStatus.CONSISTENT:
        raise ValueError("construct_cp requires a consistent state")
    push_mark(state)
    try:
        pending: dict[int, int] = {}
        abandoned_at = None
        for pos, var in enumerate(plan.order):
            var = int(var)
            if state.domains[var] != FREE:
                continue  # fixed at the root or by an earlier implication
            value = 1 if rng.random() < sv.probs[var] else 0
            if fix_and_propagate(state, var, value).ok:
                continue
            if fix_and_propagate(state, var, 1 - value).ok:
                continue
            # Both values rejected: keep the sampled value and finish the
            # construction without further propagation support.
            pending[var] = value
            abandoned_at = pos
            break
        values = state.domains.copy()
        if abandoned_at is not None:
            for var in plan.order[abandoned_at + 1:]:
                var = int(var)
                if values[var] == FREE:
                    pending[var] = 1 if rng.random() < sv.probs[var] else 0
        for var, value in pending.items():
            values[var] = value
        return evaluate(instance, values)
    finally:
        backtrack_to_mark(state)
