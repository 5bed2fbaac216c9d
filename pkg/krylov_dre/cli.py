"""
Command line
------------

::

    krylov-dre solve --config run.cfg --out results/
    krylov-dre convergence --config run.cfg --out study/
    krylov-dre report results/ --html table.html

``solve`` writes, into ``--out``:

* ``basis.mtx``: the basis ``V`` (n x d),
* ``factor_XXXX.mtx``: ``Yhat(t_j)`` (d x r) with ``X(t_j) ~ V Yhat Yhat^T V^T``,
* ``index.csv``: ``instant, time, rank, file``,
* ``history.csv``: ``iteration, basis_dim, backward_error, wall_seconds, phase,
  refined_error``; the refinement row repeats the stopping value in
  ``backward_error``,
* ``timings.csv``: ``phase, seconds`` for reduction, refinement and total.

``convergence`` runs both methods on one problem and writes
``convergence.csv`` (the history columns plus ``method``). ``report``
summarizes result directories.

Exit status: 0 converged, 1 not converged (outputs still written), 2 bad
configuration or usage, 3 missing file, 4 numerical failure. The log level
comes from ``DRE_LOG_LEVEL`` (error, warning, info, debug).
"""
import argparse
import csv
import logging
import os
from pathlib import Path
import sys

from .errors import KrylovDreError
from .matrix_market import read_shape, write_matrix_market
from .projection import solve_dre
from .settings import METHODS, build_from_settings, describe, read_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNCONVERGED = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4

LOG_LEVELS = {
    "error": logging.ERROR,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}
HISTORY_COLUMNS = [
    "iteration",
    "basis_dim",
    "backward_error",
    "wall_seconds",
    "phase",
    "refined_error",
]
TIMING_COLUMNS = ["phase", "seconds"]
INDEX_COLUMNS = ["instant", "time", "rank", "file"]
REPORT_COLUMNS = [
    "run",
    "vecs",
    "min rank",
    "max rank",
    "reduction (s)",
    "refinement (s)",
    "total (s)",
]


def configure_logging(environ=None):
    environ = os.environ if environ is None else environ
    name = environ.get("DRE_LOG_LEVEL", "warning").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(
        level=level or logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    if level is None:
        logger.warning("unknown DRE_LOG_LEVEL '%s', using warning", name)
    return level or logging.WARNING


def _overrides(args):
    return {
        ("solver", "method"): args.method,
        ("solver", "tol"): args.tol,
        ("solver", "timesteps"): args.timesteps,
        ("solver", "refine"): args.refine,
        ("solver", "max_dim"): args.max_dim,
        ("solver", "real_shifts_only"): True if args.real_shifts_only else None,
    }


def _settings(args):
    return read_config(args.config, _overrides(args))


def _history_rows(history, method=None):
    for record in history:
        row = [
            record.iteration,
            record.basis_dim,
            f"{record.backward_error:.6e}",
            f"{record.wall_seconds:.6f}",
            record.phase,
            "" if record.refined_error is None else f"{record.refined_error:.6e}",
        ]
        yield row + [method] if method else row


def write_history(path, history):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(HISTORY_COLUMNS)
        writer.writerows(_history_rows(history))


def write_solution(out, result):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_market(out / "basis.mtx", result.basis)
    with open(out / "index.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(INDEX_COLUMNS)
        for j, (t, factor) in enumerate(zip(result.times, result.factors)):
            name = f"factor_{j:04d}.mtx"
            write_matrix_market(out / name, factor)
            writer.writerow([j, f"{t:.17g}", factor.shape[1], name])
    write_history(out / "history.csv", result.history)
    with open(out / "timings.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TIMING_COLUMNS)
        writer.writerow(["reduction", f"{result.reduction_seconds:.6f}"])
        writer.writerow(["refinement", f"{result.refinement_seconds:.6f}"])
        writer.writerow(["total", f"{result.total_seconds:.6f}"])
    logger.info("wrote %d factors to %s", len(result.factors), out)


def _print_counters(result, problem):
    stats = problem.operator.cache_stats()
    print(
        f"basis dimension {result.basis.shape[1]}, "
        f"factorizations {stats.get('factorizations', 0)}, "
        f"reused {stats.get('reuses', 0)}, "
        f"reduction {result.reduction_seconds:.3f}s, "
        f"refinement {result.refinement_seconds:.3f}s"
    )


def cmd_solve(args):
    problem, config = build_from_settings(_settings(args))
    result = solve_dre(problem, config)
    write_solution(args.out, result)
    if args.verbose:
        _print_counters(result, problem)
    if not result.converged:
        logger.warning(
            "not converged: backward error %.3e at dimension %d",
            result.backward_error,
            result.basis.shape[1],
        )
        return EXIT_UNCONVERGED
    return EXIT_OK


def cmd_convergence(args):
    settings = _settings(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    with open(out / "convergence.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(HISTORY_COLUMNS + ["method"])
        for method in METHODS:
            problem, config = build_from_settings(settings, method)
            result = solve_dre(problem, config)
            writer.writerows(_history_rows(result.history, method))
            if args.verbose:
                _print_counters(result, problem)
            if not result.converged:
                logger.warning("%s did not converge", method)
                status = EXIT_UNCONVERGED
    return status


def _read_csv(path):
    if not path.is_file():
        raise FileNotFoundError(f"result file not found: {path}")
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def summarize(result_dir):
    """One report row for a ``solve`` output directory."""
    result_dir = Path(result_dir)
    basis = result_dir / "basis.mtx"
    if not basis.is_file():
        raise FileNotFoundError(f"result file not found: {basis}")
    vecs = read_shape(basis)[1]
    ranks = [int(row["rank"]) for row in _read_csv(result_dir / "index.csv")]
    timings = {
        row["phase"]: float(row["seconds"])
        for row in _read_csv(result_dir / "timings.csv")
    }
    return {
        "run": result_dir.name,
        "vecs": vecs,
        "min rank": min(ranks, default=0),
        "max rank": max(ranks, default=0),
        "reduction (s)": f"{timings.get('reduction', 0.0):.3f}",
        "refinement (s)": f"{timings.get('refinement', 0.0):.3f}",
        "total (s)": f"{timings.get('total', 0.0):.3f}",
    }


def report_table(rows):
    lines = [
        "| " + " | ".join(REPORT_COLUMNS) + " |",
        "|" + "|".join("---" for _ in REPORT_COLUMNS) + "|",
    ]
    for row in rows:
        lines.append("| " + " | ".join(str(row[c]) for c in REPORT_COLUMNS) + " |")
    return "\n".join(lines)


def cmd_report(args):
    dirs = args.results or [args.out]
    table = report_table([summarize(d) for d in dirs])
    print(table)
    if args.html:
        try:
            import markdown
        except ImportError:
            logger.error("--html needs the 'markdown' package (pip install markdown)")
            return EXIT_USAGE
        Path(args.html).write_text(
            markdown.markdown(table, extensions=["tables"]), encoding="utf-8"
        )
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [problem] and [solver]")
    common.add_argument("--method", choices=sorted(METHODS))
    common.add_argument("--tol", type=float)
    common.add_argument("--timesteps", type=int)
    common.add_argument("--refine", help="bdf<order>-<steps>, e.g. bdf2-100")
    common.add_argument("--max-dim", dest="max_dim", type=int)
    common.add_argument("--out", default="dre-output")
    common.add_argument(
        "--real-shifts-only", dest="real_shifts_only", action="store_true"
    )
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="krylov-dre",
        description="Large-scale differential Riccati equations by Krylov projection",
        epilog="configuration keys:\n" + describe(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True)
    solve = commands.add_parser("solve", parents=[common], help="solve one problem")
    solve.set_defaults(func=cmd_solve)
    convergence = commands.add_parser(
        "convergence", parents=[common], help="backward error history of both methods"
    )
    convergence.set_defaults(func=cmd_convergence)
    report = commands.add_parser("report", parents=[common], help="summary table")
    report.add_argument("results", nargs="*", help="solve output directories")
    report.add_argument("--html", help="also render the table to this HTML file")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_MISSING
    except ValueError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except KrylovDreError as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
