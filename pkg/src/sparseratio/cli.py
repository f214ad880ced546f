"""Command-line harness: generate instances, run solver pipelines, and
reproduce the benchmark tables over seed batches.

Subcommands:

* ``gen {robust-cs,cauchy,badly-scaled} ...`` writes an instance file and
  prints its summary.
* ``solve --instance F --pipeline P ...`` runs one pipeline on a stored
  instance, prints recovery metrics, optionally writes a result file.
* ``bench --plan F | inline flags`` runs a (cells x seeds) grid, writes a
  per-run CSV and a per-cell aggregate CSV.
* ``check --instance F [--result F]`` re-verifies the invariants of stored
  artifacts.

Pipelines:

* ``mba_ratio``: ratio objective from the least-norm start.
* ``mba_l1``: plain l1 objective from the least-norm start.
* ``algorithm1``: the noiseless equality-constrained solver (ignores the
  instance's noise model; of interest on exact-measurement data).
* ``two_stage``: plain l1 warm start at ``warm_tol``, feasibility blend,
  then the ratio stage at ``tol``.

A bench plan file is a JSON document::

    {"family": "robust_cs",
     "cells": [{"n": 2560, "p": 720, "k": 80, "iota": 10}],
     "seeds": [0, 1, 2],
     "pipeline": "mba_ratio",
     "config": {"tol": 1e-6},
     "warm_tol": 1e-6}

``config`` holds SolverConfig fields and may be partial. Exit codes:
0 success, 1 runtime or solver failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import mean, median

import numpy as np

from .drivers import (
    OBJECTIVE_PLAIN_L1,
    OBJECTIVE_RATIO,
    STATUS_CONVERGED,
    STATUS_MAX_ITERS,
    InfeasibleStartError,
    InnerLoopError,
    IterateTrace,
    RunResult,
    SolverConfig,
    feasible_start,
    run_algorithm1,
    run_mba,
)
from .instances import (
    FAMILIES,
    FAMILY_BADLY_SCALED,
    FAMILY_CAUCHY,
    FAMILY_ROBUST_CS,
    GenSpec,
    ProblemInstance,
    gen_badly_scaled,
    gen_cauchy,
    gen_robust_cs,
    generate,
    load_instance,
    load_result,
    rec_err,
    residual_metric,
    save_instance,
    save_result,
)
from .models import q_value
from .subsolvers import SubsolverError, least_norm_solution

__all__ = [
    "PIPELINES",
    "BenchPlan",
    "BenchReport",
    "PipelineResult",
    "run_pipeline",
    "run_bench_plan",
    "write_rows_csv",
    "write_aggregate_csv",
    "build_parser",
    "main",
]

PIPELINE_MBA_RATIO = "mba_ratio"
PIPELINE_MBA_L1 = "mba_l1"
PIPELINE_ALGORITHM1 = "algorithm1"
PIPELINE_TWO_STAGE = "two_stage"
PIPELINES = (PIPELINE_MBA_RATIO, PIPELINE_MBA_L1, PIPELINE_ALGORITHM1,
             PIPELINE_TWO_STAGE)

# per-family cell parameters, in CSV column order
_FAMILY_PARAMS = {
    FAMILY_ROBUST_CS: ("n", "p", "k", "iota"),
    FAMILY_CAUCHY: ("n", "m", "k"),
    FAMILY_BADLY_SCALED: ("n", "m", "k", "F", "D"),
}

_OK_STATUSES = (STATUS_CONVERGED, STATUS_MAX_ITERS)

_ROW_TAIL = ("seed", "rec_err", "residual", "iters", "status",
             "t_gen", "t_warm", "t_main", "warm_rec_err")


@dataclass
class PipelineResult:
    """Everything a pipeline run produced, traces included."""

    x_final: np.ndarray
    status: str
    iterations: int
    warm_iterations: int
    warm_x: np.ndarray | None
    criticality_residual: float | None
    t_warm: float
    t_main: float
    warm_trace: IterateTrace | None
    main_trace: IterateTrace | None


@dataclass
class BenchPlan:
    family: str
    cells: list[dict]
    seeds: list[int]
    pipeline: str
    config: SolverConfig
    warm_tol: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.cells:
            raise ValueError("plan needs at least one cell")
        if not self.seeds:
            raise ValueError("plan needs at least one seed")
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        wanted = set(_FAMILY_PARAMS[self.family])
        for cell in self.cells:
            if set(cell) != wanted:
                raise ValueError(
                    f"cell {cell!r} must have exactly the keys {sorted(wanted)}"
                )


@dataclass
class BenchReport:
    plan: BenchPlan
    rows: list[dict]
    aggregates: list[dict]
    results: list[PipelineResult | None] | None = None


def run_pipeline(model, pipeline: str, cfg: SolverConfig,
                 warm_tol: float | None = None) -> PipelineResult:
    """Run one solve pipeline on a constraint model.

    Raises InfeasibleStartError / InnerLoopError / SubsolverError if the
    run cannot produce an iterate at all; a subproblem failure after the
    first accepted step surfaces as a status instead.
    """
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline!r}")

    if pipeline == PIPELINE_ALGORITHM1:
        t0 = time.perf_counter()
        x0 = least_norm_solution(model.A, model.b)
        res = run_algorithm1(model.A, model.b, x0, cfg)
        t_main = time.perf_counter() - t0
        return PipelineResult(
            x_final=res.x_final, status=res.status,
            iterations=res.iterations, warm_iterations=0, warm_x=None,
            criticality_residual=res.criticality_residual,
            t_warm=0.0, t_main=t_main, warm_trace=None, main_trace=res.trace)

    if pipeline in (PIPELINE_MBA_RATIO, PIPELINE_MBA_L1):
        objective = (OBJECTIVE_RATIO if pipeline == PIPELINE_MBA_RATIO
                     else OBJECTIVE_PLAIN_L1)
        t0 = time.perf_counter()
        x0 = feasible_start(model, None, cfg.feas_tol)
        res = run_mba(model, objective, x0, cfg)
        t_main = time.perf_counter() - t0
        return PipelineResult(
            x_final=res.x_final, status=res.status,
            iterations=res.iterations, warm_iterations=0, warm_x=None,
            criticality_residual=res.criticality_residual,
            t_warm=0.0, t_main=t_main, warm_trace=None, main_trace=res.trace)

    # two_stage
    warm_cfg = dataclasses.replace(
        cfg, tol=cfg.tol if warm_tol is None else warm_tol)
    t0 = time.perf_counter()
    x0 = feasible_start(model, None, cfg.feas_tol)
    warm = run_mba(model, OBJECTIVE_PLAIN_L1, x0, warm_cfg)
    t_warm = time.perf_counter() - t0

    t1 = time.perf_counter()
    x1 = feasible_start(model, warm.x_final, cfg.feas_tol)
    res = run_mba(model, OBJECTIVE_RATIO, x1, cfg)
    t_main = time.perf_counter() - t1
    return PipelineResult(
        x_final=res.x_final, status=res.status,
        iterations=warm.iterations + res.iterations,
        warm_iterations=warm.iterations, warm_x=warm.x_final,
        criticality_residual=res.criticality_residual,
        t_warm=t_warm, t_main=t_main,
        warm_trace=warm.trace, main_trace=res.trace)


def _bench_worker(family: str, cell: dict, seed: int, pipeline: str,
                  cfg: SolverConfig, warm_tol: float | None,
                  keep_result: bool):
    """One (cell, seed) run. Must stay module-level for process pools."""
    t0 = time.perf_counter()
    inst = generate(GenSpec(family=family, seed=seed, **cell))
    t_gen = time.perf_counter() - t0

    row = {"family": family, **cell, "seed": seed, "t_gen": t_gen}
    try:
        pres = run_pipeline(inst.model, pipeline, cfg, warm_tol)
    except (InfeasibleStartError, InnerLoopError, SubsolverError) as exc:
        row.update(rec_err=math.nan, residual=math.nan, iters=0,
                   status=_error_status(exc), t_warm=math.nan,
                   t_main=math.nan, warm_rec_err=math.nan)
        return row, None

    warm_re = (rec_err(pres.warm_x, inst.x_orig)
               if pres.warm_x is not None else math.nan)
    row.update(
        rec_err=rec_err(pres.x_final, inst.x_orig),
        residual=residual_metric(inst.model, pres.x_final),
        iters=pres.iterations, status=pres.status,
        t_warm=pres.t_warm, t_main=pres.t_main, warm_rec_err=warm_re)
    return row, (pres if keep_result else None)


def _error_status(exc: Exception) -> str:
    if isinstance(exc, InfeasibleStartError):
        return "infeasible_start"
    if isinstance(exc, InnerLoopError):
        return "inner_loop_failure"
    return "subsolver_failure"


def run_bench_plan(plan: BenchPlan, jobs: int = 1,
                   keep_results: bool = False,
                   progress=None) -> BenchReport:
    """Run every (cell, seed) pair of a plan.

    Results are assembled in plan order whatever the scheduling, so a rerun
    with the same plan reproduces the row list bitwise. ``progress`` is an
    optional callable fed each finished row.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    tasks = [(cell, seed) for cell in plan.cells for seed in plan.seeds]
    outputs: list[tuple[dict, PipelineResult | None]] = [None] * len(tasks)

    if jobs == 1:
        for i, (cell, seed) in enumerate(tasks):
            outputs[i] = _bench_worker(plan.family, cell, seed, plan.pipeline,
                                       plan.config, plan.warm_tol,
                                       keep_results)
            if progress is not None:
                progress(outputs[i][0])
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_bench_worker, plan.family, cell, seed,
                            plan.pipeline, plan.config, plan.warm_tol,
                            keep_results): i
                for i, (cell, seed) in enumerate(tasks)
            }
            for fut, i in futures.items():
                outputs[i] = fut.result()
                if progress is not None:
                    progress(outputs[i][0])

    rows = [out[0] for out in outputs]
    results = [out[1] for out in outputs] if keep_results else None
    aggregates = compute_aggregates(plan, rows)
    return BenchReport(plan=plan, rows=rows, aggregates=aggregates,
                       results=results)


def compute_aggregates(plan: BenchPlan, rows: list[dict]) -> list[dict]:
    """Per-cell mean/median summaries over the successful runs."""
    params = _FAMILY_PARAMS[plan.family]
    aggs = []
    for cell in plan.cells:
        cell_rows = [r for r in rows
                     if all(r[p] == cell[p] for p in params)]
        ok = [r for r in cell_rows if r["status"] in _OK_STATUSES]
        agg = {"family": plan.family, **cell, "pipeline": plan.pipeline,
               "n_ok": len(ok), "failures": len(cell_rows) - len(ok)}
        if ok:
            agg.update(
                rec_err_mean=mean(r["rec_err"] for r in ok),
                rec_err_median=median(r["rec_err"] for r in ok),
                residual_mean=mean(r["residual"] for r in ok),
                t_gen_mean=mean(r["t_gen"] for r in ok),
                t_warm_mean=mean(r["t_warm"] for r in ok),
                t_main_mean=mean(r["t_main"] for r in ok),
            )
            warm = [r["warm_rec_err"] for r in ok
                    if not math.isnan(r["warm_rec_err"])]
            agg["warm_rec_err_mean"] = mean(warm) if warm else math.nan
            agg["warm_rec_err_median"] = median(warm) if warm else math.nan
        else:
            for key in ("rec_err_mean", "rec_err_median", "residual_mean",
                        "t_gen_mean", "t_warm_mean", "t_main_mean",
                        "warm_rec_err_mean", "warm_rec_err_median"):
                agg[key] = math.nan
        aggs.append(agg)
    return aggs


def write_rows_csv(report: BenchReport, path):
    params = _FAMILY_PARAMS[report.plan.family]
    header = ["family", *params, *_ROW_TAIL]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in report.rows:
            writer.writerow([row[col] for col in header])


def write_aggregate_csv(report: BenchReport, path):
    params = _FAMILY_PARAMS[report.plan.family]
    header = ["family", *params, "pipeline", "n_ok", "failures",
              "rec_err_mean", "rec_err_median", "residual_mean",
              "t_gen_mean", "t_warm_mean", "t_main_mean",
              "warm_rec_err_mean", "warm_rec_err_median"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for agg in report.aggregates:
            writer.writerow([agg[col] for col in header])


# ---------------------------------------------------------------------------
# config / plan parsing

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(SolverConfig)}


def _config_from_dict(doc: dict) -> SolverConfig:
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise ValueError(f"unknown solver config fields: {sorted(unknown)}")
    return SolverConfig(**doc)


def load_plan(path) -> BenchPlan:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(doc) - {"family", "cells", "seeds", "pipeline", "config",
                          "warm_tol"}
    if unknown:
        raise ValueError(f"unknown plan fields: {sorted(unknown)}")
    for key in ("family", "cells", "seeds", "pipeline"):
        if key not in doc:
            raise ValueError(f"plan is missing the {key!r} field")
    return BenchPlan(
        family=doc["family"], cells=list(doc["cells"]),
        seeds=[int(s) for s in doc["seeds"]], pipeline=doc["pipeline"],
        config=_config_from_dict(doc.get("config", {})),
        warm_tol=doc.get("warm_tol"))


def _parse_seeds(text: str) -> list[int]:
    """'0:20' is the half-open range, '3,5,9' an explicit list."""
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        seeds = list(range(int(lo), int(hi)))
    else:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    if not seeds:
        raise ValueError(f"no seeds in {text!r}")
    return seeds


_SOLVER_FLAGS = ("alpha", "l_min", "l_max", "tol", "max_outer_iters",
                 "sub_tol", "sub_max_iter", "feas_tol")


def _config_from_args(args) -> SolverConfig:
    base = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(base) - _CONFIG_FIELDS
        if unknown:
            raise ValueError(
                f"unknown solver config fields: {sorted(unknown)}")
    for name in _SOLVER_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    return _config_from_dict(base)


# ---------------------------------------------------------------------------
# subcommands

def _print_instance_summary(inst: ProblemInstance, dest: str | None):
    model = inst.model
    spec = inst.gen_spec
    line = (f"{spec.family}: A {model.A.m}x{model.A.n}, k={spec.k}, "
            f"seed={spec.seed}, sigma={model.sigma:.6g}, "
            f"q(x_orig)={q_value(model, inst.x_orig):.6g}")
    if dest:
        line += f", wrote {dest}"
    print(line)


def _cmd_gen(args) -> int:
    if args.family == "robust-cs":
        inst = gen_robust_cs(args.n, args.p, args.k, args.iota, args.seed,
                             args.sigma_factor)
    elif args.family == "cauchy":
        inst = gen_cauchy(args.n, args.m, args.k, args.seed, args.gamma,
                          args.sigma_factor)
    else:
        inst = gen_badly_scaled(args.n, args.m, args.k, args.F, args.D,
                                args.seed, args.sigma_factor)
    if args.out:
        save_instance(inst, args.out)
    _print_instance_summary(inst, args.out)
    return 0


def _trace_to_dict(trace: IterateTrace | None) -> dict | None:
    if trace is None:
        return None
    doc = dataclasses.asdict(trace)
    doc.pop("iterates", None)  # full iterate history stays in memory only
    return doc


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    cfg = _config_from_args(args)
    pres = run_pipeline(inst.model, args.pipeline, cfg, args.warm_tol)

    re_final = rec_err(pres.x_final, inst.x_orig)
    residual = residual_metric(inst.model, pres.x_final)
    crit = pres.criticality_residual
    print(f"pipeline={args.pipeline} status={pres.status} "
          f"iters={pres.iterations} rec_err={re_final:.6g} "
          f"residual={residual:.6g}"
          + (f" criticality={crit:.6g}" if crit is not None else "")
          + f" t_warm={pres.t_warm:.3f}s t_main={pres.t_main:.3f}s")
    if pres.warm_x is not None:
        print(f"warm stage: iters={pres.warm_iterations} "
              f"rec_err={rec_err(pres.warm_x, inst.x_orig):.6g} "
              f"t={pres.t_warm:.3f}s")

    if args.out:
        metrics = {
            "rec_err": re_final,
            "residual": residual,
            "iterations": pres.iterations,
            "warm_iterations": pres.warm_iterations,
            "criticality_residual": crit,
            "t_warm": pres.t_warm,
            "t_main": pres.t_main,
        }
        if pres.warm_x is not None:
            metrics["warm_rec_err"] = rec_err(pres.warm_x, inst.x_orig)
        payload = {
            "run_config": {"pipeline": args.pipeline,
                           "warm_tol": args.warm_tol,
                           **dataclasses.asdict(cfg)},
            "status": pres.status,
            "metrics": metrics,
            "x_final": pres.x_final.tolist(),
        }
        if args.trace:
            payload["trace"] = {"warm": _trace_to_dict(pres.warm_trace),
                                "main": _trace_to_dict(pres.main_trace)}
        save_result(payload, args.out)
    return 0 if pres.status in _OK_STATUSES else 1


def _cmd_bench(args) -> int:
    if args.plan:
        plan = load_plan(args.plan)
    else:
        if args.family is None:
            raise ValueError("bench needs either --plan or --family")
        family = args.family.replace("-", "_")
        cell = {}
        for param in _FAMILY_PARAMS[family]:
            value = getattr(args, param)
            if value is None:
                raise ValueError(
                    f"family {args.family} needs --{param} (or use --plan)")
            cell[param] = value
        plan = BenchPlan(
            family=family, cells=[cell], seeds=_parse_seeds(args.seeds),
            pipeline=args.pipeline or PIPELINE_MBA_RATIO,
            config=_config_from_args(args), warm_tol=args.warm_tol)

    def progress(row: dict):
        if not args.quiet:
            print(f"  seed {row['seed']}: status={row['status']} "
                  f"rec_err={row['rec_err']:.6g} "
                  f"residual={row['residual']:.3g} iters={row['iters']}")

    report = run_bench_plan(plan, jobs=args.jobs, progress=progress)

    for agg in report.aggregates:
        cell_desc = ", ".join(
            f"{p}={agg[p]}" for p in _FAMILY_PARAMS[plan.family])
        print(f"{plan.family} [{cell_desc}] {plan.pipeline}: "
              f"ok={agg['n_ok']} failures={agg['failures']} "
              f"rec_err mean={agg['rec_err_mean']:.4g} "
              f"median={agg['rec_err_median']:.4g} "
              f"residual mean={agg['residual_mean']:.3g}")

    if args.out_rows:
        write_rows_csv(report, args.out_rows)
    if args.out_agg:
        write_aggregate_csv(report, args.out_agg)
    return 0 if all(a["failures"] == 0 for a in report.aggregates) else 1


def _check_line(name: str, ok: bool, detail: str = "") -> bool:
    mark = "ok" if ok else "FAIL"
    suffix = f" ({detail})" if detail and not ok else ""
    print(f"{mark}: {name}{suffix}")
    return ok


def _cmd_check(args) -> int:
    inst = load_instance(args.instance)
    model = inst.model
    spec = inst.gen_spec
    all_ok = True

    nnz = int(np.count_nonzero(inst.x_orig))
    all_ok &= _check_line("x_orig has exactly k nonzeros", nnz == spec.k,
                          f"{nnz} != {spec.k}")
    q0 = q_value(model, inst.x_orig)
    all_ok &= _check_line("ground truth feasible", q0 <= 0.0, f"q={q0:.3e}")

    if spec.family in (FAMILY_ROBUST_CS, FAMILY_CAUCHY):
        col_norms = np.linalg.norm(model.A.entries, axis=0)
        dev = float(np.abs(col_norms - 1.0).max())
        all_ok &= _check_line("unit matrix columns", dev <= 1e-12,
                              f"max deviation {dev:.3e}")

    regen = generate(spec)
    same = (np.array_equal(regen.model.A.entries, model.A.entries)
            and np.array_equal(regen.model.b, model.b)
            and np.array_equal(regen.x_orig, inst.x_orig))
    all_ok &= _check_line("regenerates bitwise from gen_spec", same)

    if args.result:
        doc = load_result(args.result)
        known = set(_OK_STATUSES) | {"subsolver_failure", "infeasible_start",
                                     "inner_loop_failure"}
        all_ok &= _check_line("result status known",
                              doc["status"] in known,
                              f"{doc['status']!r}")
        metrics = doc["metrics"]
        if "x_final" in doc:
            x_final = np.array(doc["x_final"], dtype=float)
            re_calc = rec_err(x_final, inst.x_orig)
            all_ok &= _check_line(
                "stored rec_err matches x_final",
                math.isclose(re_calc, metrics["rec_err"],
                             rel_tol=1e-9, abs_tol=1e-12),
                f"{re_calc!r} vs {metrics['rec_err']!r}")
            res_calc = residual_metric(model, x_final)
            all_ok &= _check_line(
                "stored residual matches x_final",
                math.isclose(res_calc, metrics["residual"],
                             rel_tol=1e-9, abs_tol=1e-12),
                f"{res_calc!r} vs {metrics['residual']!r}")
        if doc.get("trace"):
            all_ok &= _check_trace(doc)
    return 0 if all_ok else 1


def _check_trace(doc: dict) -> bool:
    """Monotonicity and feasibility of a stored trace."""
    ok = True
    pipeline = doc["run_config"].get("pipeline")
    feas_tol = doc["run_config"].get("feas_tol", 1e-10)
    for stage, trace in doc["trace"].items():
        if trace is None:
            continue
        plain = (pipeline == PIPELINE_MBA_L1
                 or (pipeline == PIPELINE_TWO_STAGE and stage == "warm"))
        vals = trace["objective"] if plain else trace["omega"]
        worst = max((vals[t + 1] - vals[t] for t in range(len(vals) - 1)),
                    default=0.0)
        ok &= _check_line(f"{stage} trace objective monotone", worst <= 1e-8,
                          f"max increase {worst:.3e}")
        if trace["q_vals"]:
            q_max = max(trace["q_vals"])
            ok &= _check_line(f"{stage} trace iterates feasible",
                              q_max <= feas_tol + 1e-15,
                              f"max q {q_max:.3e}")
    return ok


# ---------------------------------------------------------------------------
# parser

def _add_solver_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("solver options")
    group.add_argument("--tol", type=float, default=None,
                       help="outer relative-step tolerance")
    group.add_argument("--warm-tol", type=float, default=None, dest="warm_tol",
                       help="tolerance of the two_stage warm stage "
                            "(default: same as --tol)")
    group.add_argument("--alpha", type=float, default=None,
                       help="proximal weight of the l1 subproblem")
    group.add_argument("--l-min", type=float, default=None, dest="l_min")
    group.add_argument("--l-max", type=float, default=None, dest="l_max")
    group.add_argument("--max-outer-iters", type=int, default=None,
                       dest="max_outer_iters")
    group.add_argument("--sub-tol", type=float, default=None, dest="sub_tol")
    group.add_argument("--sub-max-iter", type=int, default=None,
                       dest="sub_max_iter")
    group.add_argument("--feas-tol", type=float, default=None,
                       dest="feas_tol")
    group.add_argument("--config", default=None,
                       help="JSON file of SolverConfig fields; "
                            "explicit flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparseratio",
        description="Sparse recovery via l1/l2-ratio minimization: "
                    "instance generators, solvers, benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a random instance")
    gen_sub = gen.add_subparsers(dest="family", required=True)

    g_rcs = gen_sub.add_parser("robust-cs",
                               help="Gaussian matrix, sparse outliers")
    g_rcs.add_argument("--n", type=int, required=True)
    g_rcs.add_argument("--p", type=int, required=True,
                       help="clean measurement count (rows are p + iota)")
    g_rcs.add_argument("--k", type=int, required=True)
    g_rcs.add_argument("--iota", type=int, required=True,
                       help="outlier count; the model budget is r = 2 iota")

    g_cau = gen_sub.add_parser("cauchy",
                               help="Gaussian matrix, Cauchy noise")
    g_cau.add_argument("--n", type=int, required=True)
    g_cau.add_argument("--m", type=int, required=True)
    g_cau.add_argument("--k", type=int, required=True)
    g_cau.add_argument("--gamma", type=float, default=0.02)

    g_bad = gen_sub.add_parser("badly-scaled",
                               help="cosine matrix, wide-dynamic-range signal")
    g_bad.add_argument("--n", type=int, required=True)
    g_bad.add_argument("--m", type=int, required=True)
    g_bad.add_argument("--k", type=int, required=True)
    g_bad.add_argument("--F", type=float, required=True)
    g_bad.add_argument("--D", type=float, required=True)

    for sp in (g_rcs, g_cau, g_bad):
        sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--sigma-factor", type=float, default=1.2,
                        dest="sigma_factor")
        sp.add_argument("--out", default=None, help="instance file to write")
        sp.set_defaults(func=_cmd_gen)

    solve = sub.add_parser("solve", help="run one pipeline on an instance")
    solve.add_argument("--instance", required=True)
    solve.add_argument("--pipeline", choices=PIPELINES,
                       default=PIPELINE_MBA_RATIO)
    solve.add_argument("--trace", action="store_true",
                       help="include the per-iteration trace in the result")
    solve.add_argument("--out", default=None, help="result file to write")
    _add_solver_flags(solve)
    solve.set_defaults(func=_cmd_solve)

    bench = sub.add_parser("bench", help="run a (cells x seeds) grid")
    bench.add_argument("--plan", default=None, help="JSON plan file")
    bench.add_argument("--family",
                       choices=["robust-cs", "cauchy", "badly-scaled"],
                       default=None)
    bench.add_argument("--n", type=int, default=None)
    bench.add_argument("--p", type=int, default=None)
    bench.add_argument("--m", type=int, default=None)
    bench.add_argument("--k", type=int, default=None)
    bench.add_argument("--iota", type=int, default=None)
    bench.add_argument("--F", type=float, default=None)
    bench.add_argument("--D", type=float, default=None)
    bench.add_argument("--seeds", default="0:20",
                       help="'0:20' half-open range or '3,5,9' list")
    bench.add_argument("--pipeline", choices=PIPELINES, default=None)
    bench.add_argument("--jobs", type=int, default=1,
                       help="worker processes (default 1, reproducible "
                            "timing)")
    bench.add_argument("--out-rows", default=None, dest="out_rows",
                       help="per-run CSV path")
    bench.add_argument("--out-agg", default=None, dest="out_agg",
                       help="per-cell aggregate CSV path")
    bench.add_argument("--quiet", action="store_true")
    _add_solver_flags(bench)
    bench.set_defaults(func=_cmd_bench)

    check = sub.add_parser("check",
                           help="re-verify a stored instance/result pair")
    check.add_argument("--instance", required=True)
    check.add_argument("--result", default=None)
    check.set_defaults(func=_cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InfeasibleStartError, InnerLoopError, SubsolverError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
