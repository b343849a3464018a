"""Command-line front end.

Every subcommand writes CSV (to ``--output`` or stdout) whose ``#`` header
lines carry the resolved configuration, so any row can be re-run from the
file alone. ``--plot`` additionally renders a figure; ``--log`` streams one
JSON object per time level.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, load
from .errors import NonlocalBSDEError
from .harness import NORMS, SweepResult, SweepSpec, run_sweep, write_csv
from .kernels import benchmark_problem
from .oracle import feynman_kac_estimates
from .stepper import AdaptiveSpec, ThetaScheme, TimeLevelResult
from .tables import TABLES, adaptive_study

logger = logging.getLogger("nonlocal_bsde")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _interval(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) == 1:
        return (vals[0], vals[0])
    if len(vals) != 2 or vals[0] > vals[1]:
        raise argparse.ArgumentTypeError(f"expected 'a,b' with a <= b, got {text!r}")
    return vals


@contextlib.contextmanager
def _open_out(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


class _LevelLog:
    """JSON-lines sink for per-level diagnostics."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self.fh = None

    def __enter__(self):
        if self.path == "-":
            self.fh = sys.stderr
        elif self.path:
            self.fh = open(self.path, "w", encoding="utf-8")
        return self

    def __exit__(self, *exc):
        if self.fh is not None and self.fh is not sys.stderr:
            self.fh.close()

    def __call__(self, level: TimeLevelResult) -> None:
        if self.fh is None:
            return
        rec = {
            "level": level.n,
            "time": level.field.time,
            "points": int(level.field.points.size),
            "iters_max": level.max_iterations,
            "wall_s": round(level.wall_time, 6),
        }
        self.fh.write(json.dumps(rec) + "\n")


# -- subcommands ---------------------------------------------------------

def cmd_solve(args, cfg: RunConfig) -> int:
    problem = benchmark_problem(cfg.problem_id, cfg.delta, cfg.T)
    scheme = ThetaScheme(problem, cfg.solver)
    with _LevelLog(args.log) as log:
        result = scheme.solve(log)
    x = result.field.points
    y = np.asarray(result.field.values)
    T = problem.horizon_T
    exact = problem.exact_solution(T, x) if problem.exact_solution is not None else None
    with _open_out(args.output) as out:
        out.write("# run: " + json.dumps({"command": "solve", **cfg.to_dict(), **result.metadata}, sort_keys=True, default=str) + "\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["x", "value", "exact", "abs_error"])
        for i in range(x.size):
            e = "" if exact is None else "%.17g" % exact[i]
            err = "" if exact is None else "%.17g" % abs(y[i] - exact[i])
            writer.writerow(["%.17g" % x[i], "%.17g" % y[i], e, err])
    if exact is not None:
        logger.info("max nodal error %.3e over %d points", float(np.max(np.abs(y - exact))), x.size)
    if args.plot:
        from .plotting import plot_solution

        ex = (lambda s: problem.exact_solution(T, s)) if problem.exact_solution is not None else None
        plot_solution(x, y, args.plot, ex, title=f"{cfg.problem_id}, T={T:g}")
    return 0


def _sweep_spec(args, cfg: RunConfig, varying: str, values) -> SweepSpec:
    return SweepSpec(
        varying=varying,
        values=tuple(values),
        problem_id=cfg.problem_id,
        delta=cfg.delta,
        T=cfg.T,
        config=cfg.solver,
        primary_norm=args.primary,
        window=args.window,
        window_trim_right=args.trim_right,
        exclusion=args.exclude,
        error_mode=args.error_mode,
        name=args.name or f"{cfg.problem_id},{varying}",
    )


def _emit_sweeps(args, results: Sequence[SweepResult], header: dict, varying: str, guide=None) -> int:
    with _open_out(args.output) as out:
        write_csv(results, out, args.primary, header)
    for r in results:
        rate = r.rate(args.primary)
        logger.info("%s: CR(%s) = %s", r.spec_name, args.primary, "n/a" if rate is None else f"{rate:.3f}")
    if args.plot:
        from .plotting import plot_sweeps

        plot_sweeps(results, args.plot, args.primary, varying, guide_rate=guide)
    return 0


def cmd_sweep(args, cfg: RunConfig, varying: str) -> int:
    cfg_solver = cfg.solver
    if varying in ("adaptive", "adaptive_dx") and cfg_solver.adaptive is None:
        cfg_solver = replace(cfg_solver, adaptive=AdaptiveSpec(), p=1)
    cfg = replace(cfg, solver=cfg_solver)
    spec = _sweep_spec(args, cfg, varying, args.values)
    result = run_sweep(spec, workers=args.workers)
    return _emit_sweeps(args, [result], {"command": f"sweep-{varying}"}, varying)


def cmd_sweep_adaptive(args, cfg: RunConfig) -> int:
    return cmd_sweep(args, cfg, "adaptive" if args.vary == "tolerance" else "adaptive_dx")


def cmd_oracle(args, cfg: RunConfig) -> int:
    problem = benchmark_problem(cfg.problem_id, cfg.delta, cfg.T)
    o = cfg.oracle
    samples = args.samples or o.samples
    seed = o.seed if args.seed is None else args.seed
    probes = args.probes or o.probes
    start = time.perf_counter()
    estimates = feynman_kac_estimates(problem, probes, samples, seed, batch_size=o.batch_size, workers=args.workers)
    mc_wall = time.perf_counter() - start
    solver_vals = None
    if not args.no_solve:
        field_ = ThetaScheme(problem, cfg.solver).solve().field
        solver_vals = np.asarray(field_(np.asarray(probes, dtype=float)))
    T = problem.horizon_T
    fails = 0
    with _open_out(args.output) as out:
        header = {"command": "oracle", **cfg.to_dict(), "samples": samples, "seed": seed, "mc_wall_s": round(mc_wall, 3)}
        out.write("# run: " + json.dumps(header, sort_keys=True, default=str) + "\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["x0", "mc_mean", "mc_std_error", "solver", "exact", "z_solver", "agree_3se"])
        for i, (x0, est) in enumerate(zip(probes, estimates)):
            exact = "" if problem.exact_solution is None else "%.17g" % float(problem.exact_solution(T, x0))
            if solver_vals is None:
                sv = z = agree = ""
            else:
                z_val = (solver_vals[i] - est.mean) / est.std_error if est.std_error > 0 else 0.0
                sv, z = "%.17g" % solver_vals[i], "%.4f" % z_val
                ok = est.agrees_with(float(solver_vals[i]))
                agree = "yes" if ok else "no"
                fails += not ok
            writer.writerow(["%.17g" % x0, "%.17g" % est.mean, "%.17g" % est.std_error, sv, exact, z, agree])
    return 1 if fails and args.strict else 0


def cmd_reproduce(args, cfg: RunConfig) -> int:
    table = args.table
    kwargs = {"N": args.N} if args.N is not None and table in (2, 4, 5) else {}
    specs = TABLES[table](**kwargs)
    if table == 5 and args.adaptive:
        specs = list(specs) + adaptive_study()
    if args.rows:
        specs = [s for s in specs if s.name in args.rows]
        if not specs:
            raise NonlocalBSDEError(f"no rows named {args.rows}; see --list")
    if args.list:
        for s in specs:
            print(s.name)
        return 0
    results = [run_sweep(s, workers=args.workers) for s in specs]
    primary = specs[0].primary_norm
    args.primary = primary
    for s, r in zip(specs, results):
        ref = s.reference
        for norm in NORMS:
            if f"CR_{norm}" in ref and r.rate(norm) is not None:
                logger.info("%-28s CR(%s) computed %.3f, published %.3f", s.name, norm, r.rate(norm), ref[f"CR_{norm}"])
    varying = specs[0].varying
    guide = {1: None, 2: None, 3: None, 4: 2.0, 5: 0.5}[table]
    return _emit_sweeps(args, results, {"command": f"reproduce-table {table}", "version": __version__}, varying, guide)


# -- parser --------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("overrides", nargs="*", metavar="KEY=VALUE", help="config overrides, e.g. scheme.N=32")
    p.add_argument("-c", "--config", help="flat key = value config file")
    p.add_argument("-o", "--output", help="CSV destination (default: stdout)")
    p.add_argument("--plot", metavar="PATH", help="also render a figure to PATH (png, pdf, svg)")


def _sweep_opts(p: argparse.ArgumentParser, values_help: str) -> None:
    p.add_argument("--values", type=_floats, required=True, help=values_help)
    p.add_argument("--primary", choices=NORMS, default="Linf", help="norm for the running-rate column")
    p.add_argument("--error-mode", choices=("nodal", "dense"), default="nodal")
    p.add_argument("--window", type=_interval, help="error window a,b (default: whole grid)")
    p.add_argument("--trim-right", type=int, default=0, help="drop this many grid spacings from the window's right end")
    p.add_argument("--exclude", type=_interval, help="skip elements meeting a,b (a single value excludes the element holding it)")
    p.add_argument("--name", help="series label")
    p.add_argument("--workers", type=int, default=1, help="sweep points run concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonlocal-bsde",
        description="Nonlocal diffusion solver via compound-Poisson BSDEs: solves, convergence sweeps, oracle checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="march one problem to t_0 and write nodal values")
    _common(p)
    p.add_argument("--log", metavar="PATH", help="JSON-lines per-level diagnostics ('-' for stderr)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep-time", help="errors and rate over a list of step counts N")
    _common(p)
    _sweep_opts(p, "step counts, e.g. 4,8,16,32,64")
    p.set_defaults(func=lambda a, c: cmd_sweep(a, c, "time"))

    p = sub.add_parser("sweep-space", help="errors and rate over a list of grid spacings")
    _common(p)
    _sweep_opts(p, "grid spacings, e.g. 0.125,0.0625,0.03125")
    p.set_defaults(func=lambda a, c: cmd_sweep(a, c, "space"))

    p = sub.add_parser("sweep-adaptive", help="adaptive-grid errors over tolerances or starting spacings")
    _common(p)
    _sweep_opts(p, "tolerances (--vary tolerance) or dyadic starting spacings (--vary dx)")
    p.add_argument("--vary", choices=("tolerance", "dx"), default="tolerance")
    p.set_defaults(func=cmd_sweep_adaptive)

    p = sub.add_parser("oracle", help="Monte Carlo cross-check of the solver at probe points")
    _common(p)
    p.add_argument("--samples", type=int, help="paths (default: oracle.samples)")
    p.add_argument("--seed", type=int, help="base seed (default: oracle.seed)")
    p.add_argument("--probes", type=_floats, help="start points (default: oracle.probes)")
    p.add_argument("--workers", type=int, default=1, help="path batches run concurrently")
    p.add_argument("--no-solve", action="store_true", help="only report the Monte Carlo estimates")
    p.add_argument("--strict", action="store_true", help="exit 1 unless every probe agrees within 3 standard errors")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("reproduce-table", help="rerun one of the published convergence tables")
    p.add_argument("table", type=int, choices=sorted(TABLES))
    _common(p)
    p.add_argument("--N", type=int, help="time steps for the grid tables 2, 4, 5 (reduced runs)")
    p.add_argument("--adaptive", action="store_true", help="table 5: append the adaptive-grid study")
    p.add_argument("--rows", nargs="+", help="only these series (names as printed by --list)")
    p.add_argument("--list", action="store_true", help="print the series names and exit")
    p.add_argument("--workers", type=int, default=1, help="sweep points run concurrently")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    # overrides may follow options, where argparse no longer routes them to the positional
    args, extra = parser.parse_known_args(argv)
    stray = [e for e in extra if e.startswith("-") or "=" not in e]
    if stray:
        parser.error("unrecognized arguments: " + " ".join(stray))
    args.overrides = list(getattr(args, "overrides", [])) + extra
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load(args.config, args.overrides)
        return args.func(args, cfg)
    except NonlocalBSDEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
