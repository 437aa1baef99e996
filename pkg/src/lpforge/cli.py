"""Command-line front door.

    lpforge instantiate model.glir.json model.data.json --out lp -o out.lp
    lpforge solve model.glir.json model.data.json
    lpforge decompose model.glir.json model.data.json model.seq.json \
        --method gfrh --h 4 --fine-tune-k 8
    lpforge gen flow --nodes 1000 --edges 5000 --seed 7 -o prefix
    lpforge bench flow --sizes 1e5,2e5 --repeat 3 --threads 1,4

Exit codes: 0 success, 1 validation failure, 2 data failure, 3 I/O failure,
4 decomposition infeasibility. Timing breakdowns go to stderr as JSON.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time

from . import __version__
from .assemble import build_canonical, instantiate_efficient, instantiate_exhaustive
from .audit import check_solution
from .data import DataBundle, check_bundle
from .decompose import (HorizonPlan, fine_tune, forward_rolling_horizon,
                        guided_frh, guided_rolling_horizon, rolling_horizon,
                        solve_whole)
from .errors import (DecompositionInfeasible, IrParseError, LpforgeError,
                     MasterInfeasible, ValidationError)
from .instantiate import block_terms, normalize
from .ir import normalized_sense, parse_ir, validate
from .lpformat import write_lp, write_triplets
from .modelgen import (gen_min_cost_flow, gen_p_median,
                       gen_production_planning, paper_flow_instance)
from .parallel import instantiate_parallel
from .sequential import SequentialMeta, build_sequential
from .solver import SolveOptions, make_solver

EXIT_VALIDATION = 1
EXIT_DATA = 2
EXIT_IO = 3
EXIT_INFEASIBLE = 4


def _load_model_data(ir_path, data_path):
    try:
        with open(ir_path, "r", encoding="utf-8") as f:
            model = parse_ir(f.read())
        with open(data_path, "r", encoding="utf-8") as f:
            data = DataBundle.from_json(f.read())
    except OSError as e:
        _fail(EXIT_DATA, f"cannot read input: {e}")
    except IrParseError as e:
        _fail(EXIT_DATA, f"parse error: {e}")
    rep = validate(model)
    if not rep.ok:
        _fail(EXIT_VALIDATION, f"model invalid: {rep}")
    problems = check_bundle(model, data)
    if problems:
        _fail(EXIT_DATA, "data problems: " + "; ".join(problems))
    return model, data


def _fail(code, message):
    print(f"lpforge: {message}", file=sys.stderr)
    raise SystemExit(code)


def cmd_instantiate(args) -> int:
    t0 = time.perf_counter()
    model, data = _load_model_data(args.ir, args.data)
    parse_s = time.perf_counter() - t0
    timings = {"parse_s": parse_s, "normalize_s": None}
    threads = args.threads or int(os.environ.get("LPFORGE_THREADS", "1"))
    t1 = time.perf_counter()
    try:
        if args.algorithm == "exhaustive":
            canon = instantiate_exhaustive(model, data,
                                           dense_columns=args.dense_columns,
                                           dense_rows=args.dense_rows)
        elif threads > 1:
            canon = instantiate_parallel(model, data, workers=threads,
                                         dense_columns=args.dense_columns,
                                         dense_rows=args.dense_rows)
        else:
            nmodel = normalized_sense(model)
            tn = time.perf_counter()
            blocks = []
            for bi, expr in [(0, nmodel.objective)] + [
                    (i, b.expr) for i, b in enumerate(nmodel.constraints, 1)]:
                blocks.append((bi, *normalize(nmodel, expr, data)))
            timings["normalize_s"] = time.perf_counter() - tn
            terms = [block_terms(nmodel, norm, data, extra, block=bi)
                     for bi, norm, extra in blocks]
            canon = build_canonical(nmodel, data, terms,
                                    dense_columns=args.dense_columns,
                                    dense_rows=args.dense_rows)
    except LpforgeError as e:
        _fail(EXIT_DATA, f"instantiation failed: {e}")
    timings["instantiate_s"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    out = args.output or (args.ir + (".lp" if args.out == "lp" else ".triplets"))
    try:
        if args.out == "lp":
            write_lp(canon, out)
        else:
            write_triplets(canon, out + ".csv", out + ".json")
    except OSError as e:
        _fail(EXIT_IO, f"cannot write output: {e}")
    timings["emit_s"] = time.perf_counter() - t2
    timings["rows"] = canon.num_rows
    timings["cols"] = canon.num_vars
    timings["nnz"] = canon.nnz
    print(json.dumps(timings), file=sys.stderr)
    return 0


def _write_solution(path, model, x):
    with open(path, "w", encoding="ascii") as f:
        for j in range(model.num_vars):
            f.write(f"{model.col_name(j)} {float(x[j])!r}\n")


def cmd_solve(args) -> int:
    model, data = _load_model_data(args.ir, args.data)
    canon = instantiate_efficient(model, data)
    solver = make_solver(args.solver)
    sol = solver(canon, SolveOptions(max_iters=args.max_iters))
    if sol.status != "Optimal":
        _fail(EXIT_INFEASIBLE, f"solve ended with status {sol.status}")
    rep = check_solution(canon, sol.x)
    out = args.solution_out or (args.ir + ".sol")
    _write_solution(out, canon, sol.x)
    print(json.dumps({"status": sol.status, "objective": sol.objective,
                      "iterations": sol.iterations,
                      "audit_violation": max(rep.max_violation,
                                             rep.bound_violation)}))
    return 0


_METHODS = {
    "rh": rolling_horizon,
    "frh": forward_rolling_horizon,
    "grh": guided_rolling_horizon,
    "gfrh": guided_frh,
}


def cmd_decompose(args) -> int:
    model, data = _load_model_data(args.ir, args.data)
    try:
        with open(args.seq, "r", encoding="utf-8") as f:
            meta = SequentialMeta.from_json(f.read())
    except OSError as e:
        _fail(EXIT_DATA, f"cannot read sequential metadata: {e}")
    except IrParseError as e:
        _fail(EXIT_DATA, f"bad sequential metadata: {e}")
    t0 = time.perf_counter()
    seq = build_sequential(model, data, meta)
    instantiate_s = time.perf_counter() - t0

    lambdas = [args.guidance_weight] * args.horizons \
        if args.guidance_weight is not None else None
    plan = HorizonPlan.even(seq.T, args.horizons, M=args.tail_periods,
                            lambdas=lambdas, overlap=args.overlap)
    solver = make_solver(args.solver)
    opts = SolveOptions(max_iters=args.max_iters)
    try:
        result = _METHODS[args.method](seq, plan, solver=solver, opts=opts)
    except DecompositionInfeasible as e:
        _fail(EXIT_INFEASIBLE, str(e))
    except MasterInfeasible as e:
        _fail(EXIT_INFEASIBLE, str(e))

    pre_ft = result.objective
    if args.fine_tune_k is not None:
        t1 = time.perf_counter()
        tuned = fine_tune(seq, result, args.fine_tune_k, solver=solver,
                          opts=opts)
        result.horizons.append({"fine_tune_k": args.fine_tune_k,
                                "solve_s": time.perf_counter() - t1,
                                "objective": tuned.objective})
        result.x = tuned.x
        result.objective = tuned.objective

    baseline = None
    if args.baseline:
        t2 = time.perf_counter()
        base_sol = solve_whole(seq, solver=solver, opts=opts)
        baseline = base_sol.objective
        result.horizons.append({"baseline_solve_s": time.perf_counter() - t2})
    manifest = result.manifest(plan, baseline)
    manifest["instantiate_s"] = instantiate_s
    manifest["pre_fine_tune_objective"] = pre_ft

    sol_out = args.solution_out or (args.ir + ".sol")
    _write_solution(sol_out, seq.base, result.x)
    man_out = args.manifest_out or (args.ir + ".manifest.json")
    with open(man_out, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    print(json.dumps({"status": result.status, "objective": result.objective,
                      "manifest": man_out, "solution": sol_out}))
    return 0


def cmd_gen(args) -> int:
    from .ir import emit_ir
    prefix = args.output
    meta = None
    if args.kind == "flow":
        if args.paper_instance:
            model, data = paper_flow_instance()
        else:
            model, data = gen_min_cost_flow(args.nodes, args.edges, args.seed,
                                            unit_costs=args.unit_costs)
    elif args.kind == "pmedian":
        model, data = gen_p_median(args.customers, args.candidates,
                                   args.facilities, args.seed)
    else:
        model, data, meta = gen_production_planning(
            args.periods, args.plants, args.items, args.seed)
    try:
        with open(prefix + ".glir.json", "w", encoding="utf-8") as f:
            f.write(emit_ir(model))
        with open(prefix + ".data.json", "w", encoding="utf-8") as f:
            f.write(data.to_json())
        if meta is not None:
            with open(prefix + ".seq.json", "w", encoding="utf-8") as f:
                f.write(meta.to_json())
    except OSError as e:
        _fail(EXIT_IO, f"cannot write outputs: {e}")
    print(json.dumps({"ir": prefix + ".glir.json",
                      "data": prefix + ".data.json",
                      "seq": (prefix + ".seq.json") if meta else None}))
    return 0


_SUITES = {"flow", "pmedian"}


def cmd_bench(args) -> int:
    if args.suite not in _SUITES:
        _fail(EXIT_VALIDATION, f"unknown suite {args.suite!r}; "
              f"known: {sorted(_SUITES)}")
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    threads = [int(t) for t in args.threads.split(",")]
    algos = ["efficient"] + (["exhaustive"] if args.exhaustive else [])
    print("suite,size,algorithm,threads,median_s,rows,nnz")
    for size in sizes:
        if args.suite == "flow":
            model, data = gen_min_cost_flow(max(size // 10, 4), size, args.seed)
        else:
            cand = 5
            model, data = gen_p_median(max(size // (3 * cand), 2), cand, 2,
                                       args.seed)
        for algo in algos:
            for th in threads:
                if algo == "exhaustive" and th > 1:
                    continue
                times = []
                canon = None
                for _ in range(args.repeat):
                    t0 = time.perf_counter()
                    if algo == "exhaustive":
                        canon = instantiate_exhaustive(model, data)
                    elif th > 1:
                        canon = instantiate_parallel(model, data, workers=th)
                    else:
                        canon = instantiate_efficient(model, data)
                    times.append(time.perf_counter() - t0)
                print(f"{args.suite},{size},{algo},{th},"
                      f"{statistics.median(times):.6f},{canon.num_rows},"
                      f"{canon.nnz}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lpforge", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("instantiate", help="build the canonical matrix form")
    p.add_argument("ir")
    p.add_argument("data")
    p.add_argument("--algorithm", choices=["efficient", "exhaustive"],
                   default="efficient")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--dense-columns", action="store_true")
    p.add_argument("--dense-rows", action="store_true")
    p.add_argument("--out", choices=["lp", "triplets"], default="lp")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_instantiate)

    p = sub.add_parser("solve", help="instantiate and solve")
    p.add_argument("ir")
    p.add_argument("data")
    p.add_argument("--solver", default="reference")
    p.add_argument("--max-iters", type=int, default=50_000)
    p.add_argument("--solution-out", default=None)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("decompose", help="rolling-horizon family solves")
    p.add_argument("ir")
    p.add_argument("data")
    p.add_argument("seq", help="sequential metadata JSON")
    p.add_argument("--method", choices=sorted(_METHODS), required=True)
    p.add_argument("--h", dest="horizons", type=int, required=True)
    p.add_argument("--M", dest="tail_periods", type=int, default=1)
    p.add_argument("--lambda", dest="guidance_weight", type=float,
                   default=None)
    p.add_argument("--overlap", type=int, default=0)
    p.add_argument("--fine-tune-k", type=int, default=None)
    p.add_argument("--solver", default="reference")
    p.add_argument("--max-iters", type=int, default=50_000)
    p.add_argument("--baseline", action="store_true",
                   help="also solve the whole model and report the gap")
    p.add_argument("--solution-out", default=None)
    p.add_argument("--manifest-out", default=None)
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("gen", help="write generator outputs as IR + data")
    p.add_argument("kind", choices=["flow", "pmedian", "production"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="output path prefix")
    p.add_argument("--nodes", type=int, default=100)
    p.add_argument("--edges", type=int, default=400)
    p.add_argument("--unit-costs", action="store_true")
    p.add_argument("--paper-instance", action="store_true",
                   help="the worked 4-node flow example")
    p.add_argument("--customers", type=int, default=50)
    p.add_argument("--candidates", type=int, default=5)
    p.add_argument("--facilities", type=int, default=2)
    p.add_argument("--periods", type=int, default=16)
    p.add_argument("--plants", type=int, default=1)
    p.add_argument("--items", type=int, default=5)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("bench", help="instantiation timing CSV")
    p.add_argument("suite")
    p.add_argument("--sizes", default="10000")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--threads", default="1")
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_bench)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as e:
        _fail(EXIT_VALIDATION, str(e))
    except LpforgeError as e:
        _fail(EXIT_DATA, str(e))


if __name__ == "__main__":
    raise SystemExit(main())
