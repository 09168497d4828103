"""Command-line front end and benchmark harness.

Single runs write an anytime trace CSV, a best-solution file, and a one-line
machine-readable summary on stdout. Campaigns sweep seed and preset lists,
optionally on a process pool; results are gathered in sorted order so serial
and parallel campaigns print identical tables.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cmsabip.model import BipInstance, reported_objective
from cmsabip.mps_io import MpsFormatError, load_mps
from cmsabip.orchestrator import (
    CmsaParams,
    RunResult,
    RunStats,
    RunStatus,
    TraceEvent,
    TracePoint,
    run,
)
from cmsabip.propagation import PropStatus, init_propagation
from cmsabip.subsolver import RestrictedProblem, search_restricted

# Table of determinism-rate bounds per configuration preset.
PRESETS = {
    1: (0.03, 0.08),
    2: (0.05, 0.15),
    3: (0.1, 0.3),
    4: (0.3, 0.5),
}

ALGORITHMS = ("cmsa", "cmsa-cp", "subsolver-only")

EXIT_OK = 0
EXIT_PARSE_ERROR = 2
EXIT_INFEASIBLE = 3


@dataclass
class RunConfig:
    instance_path: str
    algorithm: str = "cmsa"
    presets: list[int] = field(default_factory=lambda: [1])
    seeds: list[int] = field(default_factory=lambda: [1])
    total_budget: float = 1000.0
    n_a: int = 5
    age_max: int = 1
    t_lp: float = 10.0
    t_sub_lb: float = 30.0
    t_sub_ub: float = 100.0
    d_rate_lb: float | None = None  # explicit bounds override the preset
    d_rate_ub: float | None = None
    trace_path: str | None = None
    solution_path: str | None = None
    external_solver_cmd: str | None = None
    merge_infeasible: bool = True
    jobs: int = 1


def params_for(cfg: RunConfig, preset: int, seed: int) -> CmsaParams:
    lb, ub = PRESETS[preset]
    if cfg.d_rate_lb is not None:
        lb = cfg.d_rate_lb
    if cfg.d_rate_ub is not None:
        ub = cfg.d_rate_ub
    return CmsaParams(n_a=cfg.n_a, age_max=cfg.age_max, t_lp=cfg.t_lp,
                      d_rate_lb=lb, d_rate_ub=ub,
                      t_sub_lb=cfg.t_sub_lb, t_sub_ub=cfg.t_sub_ub,
                      total_budget=cfg.total_budget, seed=seed,
                      cp_enabled=cfg.algorithm == "cmsa-cp",
                      merge_infeasible=cfg.merge_infeasible,
                      external_solver_cmd=cfg.external_solver_cmd)


def run_subsolver_only(instance: BipInstance, budget: float) -> RunResult:
    """Apply the exact sub-solver to the unrestricted problem."""
    start = time.monotonic()
    stats = RunStats()
    state = init_propagation(instance)
    if state.status is PropStatus.INFEASIBLE:
        stats.status = RunStatus.INFEASIBLE_PROVEN
        stats.elapsed_s = time.monotonic() - start
        return RunResult(best=None, trace=[], stats=stats)
    rp = RestrictedProblem(base=instance, forced={},
                           free_vars=list(range(instance.n)))
    result = search_restricted(rp, budget)
    stats.subsolver_calls = 1
    stats.iterations = 1
    stats.elapsed_s = time.monotonic() - start
    trace = []
    if result.best is not None:
        trace.append(TracePoint(stats.elapsed_s, result.best.objective, 1,
                                TraceEvent.SUBSOLVER_IMPROVEMENT))
        stats.status = (RunStatus.PROVEN_OPTIMAL if result.proven
                        else RunStatus.BUDGET_EXHAUSTED)
    elif result.proven:
        stats.status = RunStatus.INFEASIBLE_PROVEN
    return RunResult(best=result.best, trace=trace, stats=stats)


def execute(instance: BipInstance, cfg: RunConfig, preset: int, seed: int) -> RunResult:
    if cfg.algorithm == "subsolver-only":
        return run_subsolver_only(instance, cfg.total_budget)
    return run(instance, params_for(cfg, preset, seed))


def write_trace_csv(path, trace: list[TracePoint]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("elapsed_s,objective,iteration,event\n")
        for p in trace:
            fh.write(f"{p.elapsed_s:.6f},{p.objective!r},{p.iteration},{p.event.value}\n")


def write_solution_file(path, instance: BipInstance, result: RunResult) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        if result.best is None:
            fh.write("# no feasible solution found\n")
            return
        fh.write(f"# objective {reported_objective(instance, result.best.objective)!r}\n")
        for name, value in zip(instance.var_names, result.best.values):
            fh.write(f"{name} {int(value)}\n")


def summary_line(instance: BipInstance, cfg: RunConfig, preset: int, seed: int,
                 result: RunResult) -> str:
    if result.best is not None:
        objective = repr(reported_objective(instance, result.best.objective))
        feasible = 1
    else:
        objective = "none"
        feasible = 0
    return (f"instance={Path(cfg.instance_path).name} algo={cfg.algorithm} "
            f"preset={preset} seed={seed} objective={objective} "
            f"feasible={feasible} iterations={result.stats.iterations} "
            f"status={result.stats.status.value}")


def run_single(cfg: RunConfig, out=None) -> int:
    try:
        instance = load_mps(cfg.instance_path)
    except MpsFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    out = sys.stdout if out is None else out
    preset = cfg.presets[0]
    seed = cfg.seeds[0]
    result = execute(instance, cfg, preset, seed)
    if cfg.trace_path:
        write_trace_csv(cfg.trace_path, result.trace)
    if cfg.solution_path:
        write_solution_file(cfg.solution_path, instance, result)
    print(summary_line(instance, cfg, preset, seed, result), file=out)
    if result.stats.status is RunStatus.INFEASIBLE_PROVEN:
        return EXIT_INFEASIBLE
    return EXIT_OK


def _campaign_task(task) -> dict:
    """One (preset, seed) run; module-level so a process pool can pickle it."""
    cfg_dict, preset, seed = task
    cfg = RunConfig(**cfg_dict)
    try:
        instance = load_mps(cfg.instance_path)
        result = execute(instance, cfg, preset, seed)
    except Exception as exc:  # recorded and excluded from aggregates
        return {"preset": preset, "seed": seed, "error": str(exc)}
    out = {
        "preset": preset,
        "seed": seed,
        "error": None,
        "status": result.stats.status.value,
        "iterations": result.stats.iterations,
        "objective": None if result.best is None else result.best.objective,
    }
    if cfg.trace_path:
        stem = Path(cfg.instance_path).stem
        name = f"{stem}_{cfg.algorithm}_p{preset}_s{seed}.csv"
        write_trace_csv(Path(cfg.trace_path) / name, result.trace)
    return out


def run_campaign(cfg: RunConfig, out=None) -> int:
    try:
        instance = load_mps(cfg.instance_path)
    except (MpsFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    out = sys.stdout if out is None else out
    cfg_dict = {**cfg.__dict__}
    tasks = [(cfg_dict, preset, seed) for preset in cfg.presets for seed in cfg.seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_campaign_task, tasks))
    else:
        results = [_campaign_task(t) for t in tasks]
    results.sort(key=lambda r: (r["preset"], r["seed"]))

    stem = Path(cfg.instance_path).stem
    print("instance,algorithm,preset,best,avg,seeds_ok,seeds_failed", file=out)
    per_preset: dict[int, tuple[float, float]] = {}
    statuses = []
    for preset in cfg.presets:
        rows = [r for r in results if r["preset"] == preset]
        ok = [r for r in rows if r["error"] is None and r["objective"] is not None]
        failed = [r for r in rows if r["error"] is not None or r["objective"] is None]
        for r in failed:
            reason = r["error"] or r.get("status", "no solution")
            print(f"warning: seed {r['seed']} preset {preset} excluded: {reason}",
                  file=sys.stderr)
        statuses.extend(r.get("status") for r in rows if r["error"] is None)
        if ok:
            best_norm = min(r["objective"] for r in ok)
            avg_norm = sum(r["objective"] for r in ok) / len(ok)
            per_preset[preset] = (best_norm, avg_norm)
            best = reported_objective(instance, best_norm)
            avg = reported_objective(instance, avg_norm)
            print(f"{stem},{cfg.algorithm},{preset},{best!r},{avg!r},"
                  f"{len(ok)},{len(failed)}", file=out)
        else:
            print(f"{stem},{cfg.algorithm},{preset},none,none,0,{len(failed)}",
                  file=out)
    if per_preset:
        winner = min(per_preset, key=lambda p: (per_preset[p][0], p))
        best, avg = per_preset[winner]
        print(f"# winner instance={stem} algo={cfg.algorithm} preset={winner} "
              f"best={reported_objective(instance, best)!r} "
              f"avg={reported_objective(instance, avg)!r}", file=out)
        return EXIT_OK
    if statuses and all(s == RunStatus.INFEASIBLE_PROVEN.value for s in statuses):
        return EXIT_INFEASIBLE
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmsabip",
        description="Generic construct-merge-solve-adapt solver for binary "
                    "integer programs in MPS format.")
    parser.add_argument("--instance", required=True, help="path to an MPS file")
    parser.add_argument("--algo", choices=ALGORITHMS, default="cmsa")
    parser.add_argument("--preset", type=_int_list, default=[1],
                        help="configuration presets 1-4, comma separated")
    parser.add_argument("--seeds", type=_int_list, default=[1],
                        help="seed list, comma separated")
    parser.add_argument("--budget", type=float, default=1000.0,
                        help="total wall-clock budget in seconds")
    parser.add_argument("--na", type=int, default=5,
                        help="candidate constructions per iteration")
    parser.add_argument("--age-max", type=int, default=1)
    parser.add_argument("--tlp", type=float, default=10.0,
                        help="LP relaxation budget in seconds")
    parser.add_argument("--tsub-lb", type=float, default=30.0)
    parser.add_argument("--tsub-ub", type=float, default=100.0)
    parser.add_argument("--drate-lb", type=float, default=None,
                        help="override the preset lower determinism rate")
    parser.add_argument("--drate-ub", type=float, default=None,
                        help="override the preset upper determinism rate")
    parser.add_argument("--trace-out", default=None,
                        help="trace CSV path (campaigns: directory)")
    parser.add_argument("--sol-out", default=None, help="solution file path")
    parser.add_argument("--external-solver-cmd", default=None,
                        help="command template with {mps} and {sol} placeholders")
    parser.add_argument("--merge-infeasible",
                        action=argparse.BooleanOptionalAction, default=True,
                        help="merge infeasible candidates into the pool")
    parser.add_argument("--jobs", type=int, default=1,
                        help="campaign worker processes")
    return parser


def config_from_args(args) -> RunConfig:
    for preset in args.preset:
        if preset not in PRESETS:
            raise SystemExit(f"error: unknown preset {preset}")
    return RunConfig(instance_path=args.instance, algorithm=args.algo,
                     presets=args.preset, seeds=args.seeds,
                     total_budget=args.budget, n_a=args.na, age_max=args.age_max,
                     t_lp=args.tlp, t_sub_lb=args.tsub_lb, t_sub_ub=args.tsub_ub,
                     d_rate_lb=args.drate_lb, d_rate_ub=args.drate_ub,
                     trace_path=args.trace_out, solution_path=args.sol_out,
                     external_solver_cmd=args.external_solver_cmd,
                     merge_infeasible=args.merge_infeasible, jobs=args.jobs)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    if len(cfg.seeds) > 1 or len(cfg.presets) > 1:
        return run_campaign(cfg)
    return run_single(cfg)


if __name__ == "__main__":
    sys.exit(main())
