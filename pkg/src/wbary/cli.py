"""``wbary`` command line: approximate barycenters, sweeps, comparisons, plots.

Exit codes: 0 success, 1 input or validation error, 2 solver failure.
Result JSON never contains timings, so identical runs give identical bytes;
wall times go to the printed summary only.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import barycenter as bary
from . import oracle, report
from .measures import (
    DiscreteMeasure,
    MeasureError,
    Problem,
    gen_nested_ellipses,
    gen_nested_ellipses_images,
    gen_sharpness_instance,
    gen_unit_disk_cloud,
    load_measure,
    save_measure,
    save_pgm,
    simplex_weights,
)
from .ot import SolverError, solve_ot, warm_up

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2

METHODS = ("reference", "pairwise", "fixed-point", "exact-oracle")
GEN_DEFAULTS = {"sharpness": (5, None), "disk": (10, 50), "ellipses": (10, 60)}


class InputError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is reserved for solver failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers

def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse number list {text!r}") from exc


def _user_weights(values) -> np.ndarray:
    return simplex_weights(values, clamp=True)


def build_problem(args) -> Problem:
    """Assemble the barycenter problem from input files or a generator."""
    if args.gen:
        if args.inputs:
            raise InputError("give input files or --gen, not both")
        n_default, size_default = GEN_DEFAULTS[args.gen]
        N = args.n if args.n is not None else n_default
        size = args.size if args.size is not None else size_default
        if args.gen == "sharpness":
            problem = gen_sharpness_instance(N, args.p)
        elif args.gen == "disk":
            problem = gen_unit_disk_cloud(N, size, args.seed, args.p)
        else:
            problem = gen_nested_ellipses(N, size, args.seed, args.p)
    else:
        if len(args.inputs) < 2:
            raise InputError("need at least two input measures (or --gen)")
        measures = [load_measure(path, args.format) for path in args.inputs]
        problem = Problem(tuple(measures), None, args.p, tuple(args.inputs))
    if args.weights:
        problem = problem.with_weights(_user_weights(_float_list(args.weights)))
    return problem


def _plan_cost(args):
    return 2 if args.plan_cost == "c2" else None


def run_method(problem: Problem, method: str, args) -> bary.BarycenterResult:
    compute = not getattr(args, "skip_objective", False)
    if method == "reference":
        return bary.reference_barycenter(problem, args.ref_index, args.eps, _plan_cost(args),
                                         compute_objective=compute)
    if method == "pairwise":
        return bary.pairwise_barycenter(problem, args.eps, _plan_cost(args),
                                        compute_objective=compute)
    if method == "fixed-point":
        return bary.fixed_point_barycenter(problem, None, args.rounds, args.eps, args.ref_index)
    if method == "exact-oracle":
        return oracle.exact_barycenter_result(problem)
    raise InputError(f"unknown method {method!r}")


def result_document(result: bary.BarycenterResult, problem: Problem) -> dict:
    doc = result.to_dict()
    doc["result"]["lambda"] = problem.weights.tolist()
    return doc


def _dump(doc) -> str:
    return json.dumps(doc, indent=1) + "\n"


def _summary(pairs, stream) -> None:
    for key, value in pairs:
        print(f"{key}\t{value}", file=stream)


def _need_planar(problem: Problem, what: str) -> None:
    if problem.d != 2:
        raise InputError(f"{what} needs d = 2 measures, got d = {problem.d}")


def _write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


# ------------------------------------------------------------ subcommands

def cmd_barycenter(args) -> int:
    problem = build_problem(args)
    if args.svg:
        _need_planar(problem, "--svg")
    if args.figure and args.method != "fixed-point":
        _need_planar(problem, "--figure")
    t0 = time.perf_counter()
    result = run_method(problem, args.method, args)
    wall = time.perf_counter() - t0

    text = _dump(result_document(result, problem))
    if args.out:
        _write_text(args.out, text)
        stream = sys.stdout
    else:
        sys.stdout.write(text)
        stream = sys.stderr
    if args.svg:
        _write_text(args.svg, report.measure_svg(result.measure))
    if args.figure:
        if result.history:
            report.plot_objective_history(result.history, args.figure, result.lower_bound)
        else:
            report.plot_measure(result.measure, args.figure, result.method, problem.measures)
    _summary([
        ("method", result.method),
        ("objective", repr(result.objective)),
        ("lower_bound", repr(result.lower_bound)),
        ("eta", repr(result.eta)),
        ("support_size", result.measure.n),
        ("wall_time_s", f"{wall:.3f}"),
    ], stream)
    return EXIT_OK


def sweep_weights(args, N: int) -> list:
    """Weight vectors for a sweep, zero entries clamped into the open simplex."""
    lams = []
    if args.grid is not None:
        if N != 4:
            raise InputError(f"the bilinear grid needs exactly 4 inputs, got {N}")
        if args.grid < 2:
            raise InputError("grid resolution must be at least 2")
        ticks = np.linspace(0.0, 1.0, args.grid)
        for t in ticks:
            for s in ticks:
                lams.append([(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t])
    for text in args.lam or ():
        lams.append(_float_list(text))
    if args.lambda_file:
        raw = Path(args.lambda_file).read_text()
        try:
            rows = json.loads(raw)
        except ValueError:
            rows = [_float_list(line) for line in raw.splitlines() if line.strip()]
        lams.extend(rows)
    if args.random:
        rng = np.random.default_rng(args.seed)
        lams.extend(rng.dirichlet(np.ones(N), args.random).tolist())
    if not lams:
        raise InputError("no weight vectors: use --grid, --lambda, --lambda-file or --random")
    out = []
    for lam in lams:
        lam = _user_weights(lam)
        if len(lam) != N:
            raise InputError(f"weight vector of length {len(lam)} for {N} measures")
        out.append(lam)
    return out


def run_sweep(problem: Problem, weight_list, eps=bary.DEFAULT_EPS, plan_cost=None,
              compute_objective=True) -> list:
    """Pairwise barycenters for many weight vectors from one set of pairwise plans."""
    pairwise = bary.compute_pairwise(problem, plan_cost)
    costs = pairwise.costs if pairwise.plan_cost == problem.p else bary.compute_pairwise(problem).costs
    return [
        bary.pairwise_barycenter(problem.with_weights(lam), eps, plan_cost, pairwise,
                                 compute_objective, bound_costs=costs)
        for lam in weight_list
    ]


def cmd_sweep(args) -> int:
    problem = build_problem(args)
    if args.figure or args.svg:
        _need_planar(problem, "figure output")
    weight_list = sweep_weights(args, problem.N)
    out_dir = Path(args.out_dir)
    t0 = time.perf_counter()
    results = run_sweep(problem, weight_list, args.eps, _plan_cost(args), not args.skip_objective)
    wall = time.perf_counter() - t0

    out_dir.mkdir(parents=True, exist_ok=True)
    table = io.StringIO()
    writer = csv.writer(table, lineterminator="\n")
    writer.writerow(["index", "file", "lambda", "objective", "lower_bound", "eta", "support_size"])
    for k, (lam, res) in enumerate(zip(weight_list, results)):
        name = f"lambda_{k:03d}.json"
        _write_text(out_dir / name, _dump(result_document(res, problem.with_weights(lam))))
        if args.svg:
            _write_text(out_dir / f"lambda_{k:03d}.svg", report.measure_svg(res.measure))
        writer.writerow([k, name, " ".join(repr(float(x)) for x in lam), repr(res.objective),
                         repr(res.lower_bound), repr(res.eta), res.measure.n])
    _write_text(out_dir / "summary.csv", table.getvalue())
    if args.figure:
        shape = (args.grid, args.grid) if args.grid else (1, len(results))
        report.plot_sweep([r.measure for r in results[:shape[0] * shape[1]]], shape,
                          args.figure, weight_list)
    _summary([
        ("results", len(results)),
        ("out_dir", str(out_dir)),
        ("eta_max", repr(max(r.eta for r in results))),
        ("wall_time_s", f"{wall:.3f}"),
    ], sys.stdout)
    return EXIT_OK


def _load_plot_measure(path) -> DiscreteMeasure:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: cannot read result JSON ({exc})") from exc
    if not isinstance(data, dict) or "points" not in data or "weights" not in data:
        raise InputError(f"{path}: not a measure or result file")
    points = np.asarray(data["points"], dtype=float)
    if points.size == 0:
        raise InputError(f"{path}: empty measure")
    return DiscreteMeasure(points, data["weights"])


def cmd_plot(args) -> int:
    measure = _load_plot_measure(args.result)
    if measure.d != 2:
        raise InputError(f"plot needs a planar measure, got d = {measure.d}")
    out = Path(args.out)
    if out.suffix.lower() == ".svg":
        _write_text(out, report.measure_svg(measure))
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        report.plot_measure(measure, out, args.title)
    print(f"wrote\t{out}")
    return EXIT_OK


def _oracle_feasible(problem: Problem) -> bool:
    tuples = int(np.prod([m.n for m in problem.measures]))
    return tuples <= oracle.BARYCENTER_SIZE_GUARD and (problem.p == 2 or problem.d <= 2)


def cmd_compare(args) -> int:
    problem = build_problem(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS[:3]:
            raise InputError(f"unknown method {m!r} in --methods")
    use_oracle = args.oracle == "always" or (args.oracle == "auto" and _oracle_feasible(problem))

    rows, results = [], []
    optimum = None
    if use_oracle:
        t0 = time.perf_counter()
        exact = oracle.exact_barycenter_result(problem)
        results.append(("exact-oracle", exact, time.perf_counter() - t0))
        optimum = exact.objective
    for m in methods:
        t0 = time.perf_counter()
        res = run_method(problem, m, args)
        results.append((m, res, time.perf_counter() - t0))

    for name, res, wall in results:
        denom = optimum if optimum is not None else res.lower_bound
        degenerate = denom <= 1e-14
        if degenerate:
            ratio = 1.0 if res.objective <= 1e-14 else float("inf")
        else:
            ratio = res.objective / denom
        rows.append({
            "method": name,
            "objective": res.objective,
            "ratio": ratio,
            "ratio_to": "oracle" if optimum is not None else "lower_bound",
            "eta": res.eta,
            "eta_worst_case": res.report.eta_worst_case if res.report else float("nan"),
            "degenerate": degenerate,
            "support_size": res.measure.n,
            "wall_time_s": round(wall, 4),
        })

    table = io.StringIO()
    writer = csv.DictWriter(table, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    if args.out:
        _write_text(args.out, table.getvalue())
        print(f"wrote\t{args.out}")
    else:
        sys.stdout.write(table.getvalue())
    if args.figure:
        Path(args.figure).parent.mkdir(parents=True, exist_ok=True)
        report.plot_compare(rows, args.figure)
    return EXIT_OK


def cmd_dist(args) -> int:
    mu = load_measure(args.a, args.format)
    nu = load_measure(args.b, args.format)
    t0 = time.perf_counter()
    plan, cost = solve_ot(mu, nu, args.p)
    wall = time.perf_counter() - t0
    if args.plan:
        _write_text(args.plan, _dump(plan.to_dict()))
    _summary([
        ("W_p^p", repr(cost)),
        ("W_p", repr(cost ** (1.0 / args.p))),
        ("plan_nnz", plan.nnz),
        ("wall_time_s", f"{wall:.3f}"),
    ], sys.stdout)
    return EXIT_OK


def cmd_gen(args) -> int:
    n_default, size_default = GEN_DEFAULTS[args.kind]
    N = args.n if args.n is not None else n_default
    size = args.size if args.size is not None else size_default
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.kind == "sharpness":
        problem = gen_sharpness_instance(N)
    elif args.kind == "disk":
        problem = gen_unit_disk_cloud(N, size, args.seed)
    else:
        images = gen_nested_ellipses_images(N, size, args.seed)
        problem = gen_nested_ellipses(N, size, args.seed)
        if args.pgm:
            for i, img in enumerate(images):
                save_pgm(img, out_dir / f"mu_{i:02d}.pgm")
    for i, mu in enumerate(problem.measures):
        path = out_dir / f"mu_{i:02d}.json"
        save_measure(mu, path)
        print(path)
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.ot:
        if len(args.inputs) != 2:
            raise InputError("--ot needs exactly two input files")
        mu, nu = (load_measure(p, args.format) for p in args.inputs)
        _, cost = oracle.solve_ot_lp(mu, nu, args.p)
        _summary([("W_p^p", repr(cost)), ("W_p", repr(cost ** (1.0 / args.p)))], sys.stdout)
        return EXIT_OK
    problem = build_problem(args)
    result = oracle.exact_barycenter_result(problem)
    text = _dump(result_document(result, problem))
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    _summary([("objective", repr(result.objective)), ("support_size", result.measure.n)],
             sys.stdout if args.out else sys.stderr)
    return EXIT_OK


# ----------------------------------------------------------------- parser

def _problem_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("inputs", nargs="*", help="measure files (JSON, CSV or PGM image)")
    parent.add_argument("--format", choices=("json", "csv", "image", "image-grid"),
                        help="input format (default: from the file suffix)")
    parent.add_argument("--gen", choices=tuple(GEN_DEFAULTS),
                        help="use a synthetic problem instead of input files")
    parent.add_argument("--n", type=int, help="number of generated measures")
    parent.add_argument("--size", type=int,
                        help="points per cloud (disk) or image resolution (ellipses)")
    parent.add_argument("--seed", type=int, default=0)
    parent.add_argument("--weights", help="barycenter weights, comma separated; zeros are "
                        "clamped to 1e-9 and the vector renormalized (default: uniform)")
    parent.add_argument("--p", type=int, choices=(1, 2), default=2, help="cost exponent")
    return parent


def _algorithm_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--eps", type=float, default=bary.DEFAULT_EPS,
                        help="geometric median accuracy for p=1 (default: 1e-6)")
    parent.add_argument("--plan-cost", choices=("match-p", "c2"), default="match-p",
                        help="c2: solve the plans under squared distances (only changes p=1)")
    parent.add_argument("--ref-index", type=int,
                        help="reference measure (default: largest weight, lowest index)")
    parent.add_argument("--rounds", type=int, default=10, help="fixed-point rounds")
    parent.add_argument("--skip-objective", action="store_true",
                        help="do not evaluate the exact objective of the result")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wbary", description="Approximate free-support Wasserstein "
                     "barycenters with certified error bounds.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    prob, algo = _problem_parent(), _algorithm_parent()

    p = sub.add_parser("barycenter", parents=[prob, algo], help="compute one barycenter")
    p.add_argument("--method", choices=METHODS, default="pairwise")
    p.add_argument("--out", help="result JSON (default: stdout)")
    p.add_argument("--svg", help="also write an SVG scatter plot of the result (d = 2)")
    p.add_argument("--figure", help="matplotlib figure: the result (d = 2) or, for "
                   "fixed-point, the objective per round")
    p.set_defaults(func=cmd_barycenter)

    p = sub.add_parser("sweep", parents=[prob, algo],
                       help="pairwise barycenters for many weight vectors, plans solved once")
    p.add_argument("--grid", type=int, help="R x R bilinear grid over 4 inputs")
    p.add_argument("--lambda", dest="lam", action="append", help="one weight vector (repeatable)")
    p.add_argument("--lambda-file", help="JSON list or CSV rows of weight vectors")
    p.add_argument("--random", type=int, help="K weight vectors drawn uniformly (uses --seed)")
    p.add_argument("--out-dir", default="sweep")
    p.add_argument("--svg", action="store_true", help="one SVG per result (d = 2)")
    p.add_argument("--figure", help="matplotlib panel grid of all results (d = 2)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="SVG (or matplotlib raster) scatter plot of a result")
    p.add_argument("result", help="result or measure JSON")
    p.add_argument("--out", required=True, help="output path; .svg gives plain SVG 1.1")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("compare", parents=[prob, algo],
                       help="CSV table of objective, error ratio and bound per method")
    p.add_argument("--methods", default="reference,pairwise")
    p.add_argument("--oracle", choices=("auto", "always", "never"), default="auto",
                   help="ratios against the exact optimum when feasible, else the lower bound")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--figure", help="bar chart of ratios and bounds")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dist", help="Wasserstein distance between two measures")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--p", type=int, choices=(1, 2), default=2)
    p.add_argument("--format", choices=("json", "csv", "image", "image-grid"))
    p.add_argument("--plan", help="write the optimal plan as JSON")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("gen", help="write a synthetic problem as measure files")
    p.add_argument("kind", choices=tuple(GEN_DEFAULTS))
    p.add_argument("--n", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--pgm", action="store_true", help="ellipses: also write the PGM images")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("oracle", parents=[prob])
    p.add_argument("--ot", action="store_true", help="dense-LP OT between two inputs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)
    # keep the debugging command out of the help listing
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "oracle"]
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.func is not cmd_gen and args.func is not cmd_plot:
            warm_up()  # kernel loading is not part of any reported wall time
        return args.func(args)
    except (SolverError, oracle.OracleError) as exc:
        print(f"wbary: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, MeasureError, oracle.OracleSizeError, ValueError, IndexError,
            OSError) as exc:
        print(f"wbary: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
