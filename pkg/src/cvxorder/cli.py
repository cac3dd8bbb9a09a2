"""Command-line front end: ``cvxorder {gen,test,project,experiment}``.

Exit codes: 0 success (``test``: Accept), 3 ``test`` rejected the null,
2 invalid input, 1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import InvalidInput
from .hypothesis import BoundedSupport, LogSobolev, run_test
from .measure import (
    Gaussian,
    GaussianConvolution,
    UniformBox,
    barycenter,
    diameter,
    empirical_from_samples,
    read_csv,
    sample,
    write_csv,
)
from .projection import SolverConfig, project_backward

log = logging.getLogger("cvxorder")

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_REJECT = 0, 1, 2, 3
FAMILIES = ("unif-box", "unif-gauss-conv", "gaussian")
EXPERIMENTS = ("fig1-distance-vs-n", "fig3-gaussian-fw")
FIG1_SIZES = (50, 100, 200, 400, 800, 1600)
TRACE_HEADER = ("k", "objective", "gap", "step", "epsilon")
# problems with at most this many cells use the exact oracle under --oracle auto
AUTO_LP_CELLS = 40_000

# the covariance pair of the Gaussian experiment
FIG3_MU = Gaussian([0.0, 0.0], [[2.0, -2.0], [-2.0, 3.0]])
FIG3_NU = Gaussian([1.0, 1.0], [[3.0, -2.0], [-2.0, 4.0]])


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- flag parsing helpers


def _vector(text: str) -> list:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _matrix(text: str) -> list:
    """``"3,-2;-2,4"`` -> ``[[3, -2], [-2, 4]]``."""
    try:
        return [[float(v) for v in row.split(",")] for row in text.split(";")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected rows like '1,0;0,1', got {text!r}") from None


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_solver_flags(p: argparse.ArgumentParser, oracle: str = "auto", max_iter: str = "2000") -> None:
    g = p.add_argument_group("solver")
    g.add_argument(
        "--oracle",
        choices=("auto", "lp", "entropic"),
        default=oracle,
        help="linear-subproblem oracle; auto picks lp for small problems (default: %(default)s)",
    )
    g.add_argument("--max-iter", type=int, default=None, help=f"Frank-Wolfe iteration cap (default: {max_iter})")
    g.add_argument("--gap-tol", type=float, default=None, help="absolute duality-gap tolerance")
    g.add_argument("--eps0", type=float, default=None, help="initial entropic regularisation")
    g.add_argument("--eps-decay", type=float, default=0.7, help="entropic decay per iteration (default: %(default)s)")
    g.add_argument(
        "--stall-tol", type=float, default=None, help="stop once the objective moves less than this over 5 iterations"
    )


def _add_regime_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("regime")
    g.add_argument("--alpha", type=float, default=0.05, help="test level (default: %(default)s)")
    g.add_argument("--regime", choices=("log-sobolev", "bounded"), default="log-sobolev")
    g.add_argument("--kappa", type=float, default=1.0, help="log-Sobolev constant (default: %(default)s)")
    g.add_argument("--diameter", type=float, default=None, help="support diameter bound; default: observed")
    g.add_argument("--k1", type=float, default=8.0, help="moment order for mu, > 4 (default: %(default)s)")
    g.add_argument("--k2", type=float, default=8.0, help="moment order for nu, > 4 (default: %(default)s)")
    g.add_argument("--c-const", type=float, default=1.0, help="constant C in C2(k) = C^(k/2) (default: %(default)s)")


def solver_config(args, n: int, m: int, max_iter: int = 2000) -> SolverConfig:
    oracle = args.oracle
    if oracle == "auto":
        oracle = "lp" if n * m <= AUTO_LP_CELLS else "entropic"
    return SolverConfig(
        oracle=oracle,
        max_iter=max_iter if args.max_iter is None else args.max_iter,
        gap_tol=args.gap_tol,
        eps0=args.eps0,
        eps_decay=args.eps_decay,
        stall_tol=args.stall_tol,
    )


def regime_from_args(args):
    if args.regime == "log-sobolev":
        return LogSobolev(args.kappa).validate()
    regime = BoundedSupport(args.diameter, args.k1, args.k2, args.c_const)
    if args.diameter is not None:
        regime.validate()
    return regime


# ---------------------------------------------------------------- output helpers


def _write_json(obj, out: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, allow_nan=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])


def _trace_rows(trace):
    return [(r.k, r.objective, r.gap, r.step, r.epsilon) for r in trace]


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    if args.family == "unif-box":
        family = UniformBox(args.lo, args.hi, args.d)
    elif args.family == "unif-gauss-conv":
        family = GaussianConvolution(UniformBox(args.lo, args.hi, args.d), args.cov)
    else:
        mean = args.mean if args.mean is not None else [0.0] * args.d
        cov = args.cov if args.cov is not None else np.eye(len(mean)).tolist()
        family = Gaussian(mean, cov)
    measure = empirical_from_samples(sample(family, args.n, args.seed))
    write_csv(measure, args.out)
    summary = {
        "n": measure.n,
        "d": measure.dim,
        "barycenter": barycenter(measure).tolist(),
        "diameter": diameter(measure, measure),
        "out": str(args.out),
    }
    print(json.dumps(summary))
    return EXIT_OK


def cmd_test(args) -> int:
    mu, nu = read_csv(args.mu), read_csv(args.nu)
    regime = regime_from_args(args)
    report = run_test(mu, nu, regime, args.alpha, solver_config(args, mu.n, nu.n))
    _write_json(report.to_dict(), args.out)
    if args.out is not None:
        print(f"{report.decision}: statistic={report.statistic:.6g} t_alpha={report.t_alpha:.6g}")
    return EXIT_REJECT if report.decision == "Reject" else EXIT_OK


def cmd_project(args) -> int:
    mu, nu = read_csv(args.mu), read_csv(args.nu)
    result = project_backward(mu, nu, solver_config(args, mu.n, nu.n))
    prefix = Path(args.out)
    doc = {"schema": "cvxorder/1", **result.to_json()}
    json_path = prefix.with_name(prefix.name + ".json")
    _write_json(doc, str(json_path))
    write_csv(result.projected, prefix.with_name(prefix.name + ".projected.csv"))
    _write_rows(prefix.with_name(prefix.name + ".trace.csv"), TRACE_HEADER, _trace_rows(result.trace))
    print(
        f"distance={result.distance:.6g} iterations={result.iterations} "
        f"converged={result.converged} stop={result.stop_reason}"
    )
    return EXIT_OK


def cell_seed(seed: int, n: int, rep: int) -> int:
    """Seed of one (n, replicate) cell, derived from the master seed."""
    return int(np.random.SeedSequence([seed, n, rep]).generate_state(1, dtype=np.uint64)[0])


def fig1_pair(n: int, seed: int):
    """``n`` samples each of ``Unif[0,1]^2`` and ``Unif[0,1]^2 * N(0, I)`` as empirical measures."""
    rng = np.random.default_rng(seed)
    mu = empirical_from_samples(sample(UniformBox(0.0, 1.0, 2), n, rng))
    nu = empirical_from_samples(sample(GaussianConvolution(UniformBox(0.0, 1.0, 2)), n, rng))
    return mu, nu


def _fig1_cell(job):
    n, seed, cfg = job
    res = project_backward(*fig1_pair(n, seed), cfg)
    return n, seed, res.distance, res.iterations, res.converged


def fig1_rows(seed: int, sizes=FIG1_SIZES, reps: int = 5, cfg: Optional[SolverConfig] = None, jobs: int = 1):
    """Statistic for the uniform pair, one row per (n, replicate), in grid order."""
    cfg = cfg or SolverConfig(oracle="entropic")
    work = [(n, cell_seed(seed, n, r), cfg) for n in sizes for r in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_fig1_cell, work))
    return [_fig1_cell(w) for w in work]


def fig3_trace(seed: int, n: int = 2000, cfg: Optional[SolverConfig] = None):
    rng = np.random.default_rng(seed)
    mu = empirical_from_samples(sample(FIG3_MU, n, rng))
    nu = empirical_from_samples(sample(FIG3_NU, n, rng))
    return project_backward(mu, nu, cfg or SolverConfig(oracle="entropic", max_iter=40))


def cmd_experiment(args) -> int:
    if args.oracle == "auto":
        args.oracle = "entropic"
    if args.name == "fig1-distance-vs-n":
        sizes = args.ns or list(FIG1_SIZES)
        cfg = solver_config(args, 1, 1)
        rows = fig1_rows(args.seed, sizes, args.reps, cfg, args.jobs)
        _write_rows(Path(args.out), ("n", "seed", "statistic", "iterations", "converged"), rows)
        for n in sizes:
            stats = [r[2] for r in rows if r[0] == n]
            print(f"n={n}: median statistic {float(np.median(stats)):.4f}")
    else:
        cfg = solver_config(args, 1, 1, max_iter=40)
        result = fig3_trace(args.seed, args.n, cfg)
        _write_rows(Path(args.out), TRACE_HEADER, _trace_rows(result.trace))
        print(f"J_final={result.objective:.6g} after {result.iterations} iterations ({result.stop_reason})")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cvxorder", description="Convex-order testing via Wasserstein projections.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="sample a dataset into a measure CSV")
    g.add_argument("--family", choices=FAMILIES, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--lo", type=float, default=0.0, help="box lower edge (unif families)")
    g.add_argument("--hi", type=float, default=1.0, help="box upper edge (unif families)")
    g.add_argument("--mean", type=_vector, default=None, help="gaussian mean, e.g. 1,1")
    g.add_argument(
        "--cov", type=_matrix, default=None, help="covariance, e.g. '3,-2;-2,4' (noise cov for unif-gauss-conv)"
    )
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("test", help="test mu <= nu in convex order")
    t.add_argument("--mu", required=True)
    t.add_argument("--nu", required=True)
    t.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    t.add_argument("--seed", type=int, default=0, help="accepted for uniformity; the test is deterministic")
    _add_regime_flags(t)
    _add_solver_flags(t)
    t.set_defaults(func=cmd_test)

    pr = sub.add_parser("project", help="project mu onto the measures dominated by nu")
    pr.add_argument("--mu", required=True)
    pr.add_argument("--nu", required=True)
    pr.add_argument("--out", required=True, help="prefix for <out>.json, <out>.projected.csv, <out>.trace.csv")
    _add_solver_flags(pr)
    pr.set_defaults(func=cmd_project)

    e = sub.add_parser("experiment", help="reproduce a figure's data as CSV")
    e.add_argument("name", choices=EXPERIMENTS)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.add_argument("--ns", type=_int_list, default=None, help="fig1 sample sizes (default: 50,...,1600)")
    e.add_argument("--reps", type=int, default=5, help="fig1 replicates per size (default: %(default)s)")
    e.add_argument("--jobs", type=int, default=1, help="fig1 worker processes (default: %(default)s)")
    e.add_argument("--n", type=int, default=2000, help="fig3 sample size (default: %(default)s)")
    _add_solver_flags(e, oracle="entropic", max_iter="2000 for fig1, 40 for fig3")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (InvalidInput, OSError, argparse.ArgumentTypeError) as exc:
        print(f"cvxorder: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # every other failure, solver ones included, maps to exit code 1
        print(f"cvxorder: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
