"""Command-line front end.

Subcommands:

* ``solve``  -- run the damped Newton iteration from one start point and
  emit a JSON-lines trace (manifest, per-iterate records, summary).
* ``grid``   -- run the solver from every node of a start grid and emit
  a CSV basin/classification table.
* ``field``  -- evaluate the singularity indicator on a grid and emit a
  CSV field table.
* ``verify`` -- run the randomized self-verification suites.

Exit codes: 0 success (root found / batch completed / all suites pass),
1 verification suite failure, 2 convergence to a singular point, 3 any
other termination, 64 usage errors, 65 unreadable input files, 70
internal errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .indicator import field_scan
from .plotting import save_field_figure, save_grid_figure, save_trajectory_figure
from .polynomials import DimensionMismatch, ParseError, load_polynomial_system
from .problems import ProblemDefinition, builtin_registry, get_problem
from .serialize import (
    build_manifest,
    field_csv_text,
    field_rows,
    fmt_float,
    grid_csv_text,
    grid_rows,
    jsonl_text,
    solve_report_lines,
)
from .solver import Rule, SolverConfig, Status, grid_run, solve
from .verify import run_all

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_SINGULAR = 2
EXIT_OTHER = 3
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_INTERNAL = 70

_RULE_FLAGS = {
    "full": Rule.FULL_STEP,
    "es": Rule.ES,
    "as": Rule.AS,
    "hybrid": Rule.HYBRID,
}

_STATUS_EXIT = {
    Status.CONVERGED_ROOT: EXIT_OK,
    Status.CONVERGED_SINGULAR: EXIT_SINGULAR,
}


class UsageError(Exception):
    """Bad flags or flag values (exit 64)."""


class DataError(Exception):
    """Bad input-file contents (exit 65)."""


class _Parser(argparse.ArgumentParser):
    """argparse's default error exit code collides with ours; remap."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._exit_with(message))

    def _exit_with(self, message: str) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_USAGE


_CONFIG_FIELDS = {
    "rule": str,
    "tol_root": float,
    "tol_singular_g": float,
    "tol_sigma_ratio": float,
    "lambda_min": float,
    "max_iter": int,
    "agreement_factor": float,
    "record_diagnostics": bool,
}

_RULE_NAMES = {**_RULE_FLAGS, **{r.value: r for r in Rule}}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into solver-config overrides.

    Blank lines and ``#`` comments are skipped.  Unknown keys and
    malformed values raise DataError.
    """
    overrides: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"line {line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_FIELDS:
            raise DataError(f"line {line_no}: unknown config key {key!r}")
        caster = _CONFIG_FIELDS[key]
        try:
            if key == "rule":
                overrides[key] = _RULE_NAMES[value.lower()] \
                    if value.lower() in _RULE_FLAGS else Rule(value)
            elif caster is bool:
                overrides[key] = _parse_bool(value)
            else:
                overrides[key] = caster(value)
        except (ValueError, KeyError) as exc:
            raise DataError(f"line {line_no}: bad value for {key!r}: {exc}") \
                from exc
    return overrides


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load_problem(args) -> ProblemDefinition:
    if getattr(args, "poly", None):
        text = _read_text(args.poly)
        try:
            return load_polynomial_system(text)
        except (ParseError, DimensionMismatch) as exc:
            raise DataError(f"{args.poly}: {exc}") from exc
    names = builtin_registry()
    if args.problem not in names:
        raise UsageError(
            f"unknown problem {args.problem!r}; choose from "
            f"{', '.join(sorted(names))} or pass --poly FILE")
    return get_problem(args.problem)


def _parse_floats(text: str, expect: Optional[int], what: str) -> np.ndarray:
    parts = [p.strip() for p in text.split(",")]
    try:
        values = np.array([float(p) for p in parts])
    except ValueError as exc:
        raise UsageError(f"bad {what} {text!r}: {exc}") from exc
    if expect is not None and values.size != expect:
        raise UsageError(
            f"{what} needs {expect} comma-separated numbers, got {values.size}")
    return values


def _parse_box(text: str) -> tuple[float, float, float, float]:
    vals = _parse_floats(text, 4, "box")
    x_min, x_max, y_min, y_max = (float(v) for v in vals)
    if not (x_min < x_max and y_min < y_max):
        raise UsageError("box must satisfy xmin < xmax and ymin < ymax")
    return x_min, x_max, y_min, y_max


def _build_config(args) -> SolverConfig:
    overrides: dict = {}
    if getattr(args, "config", None):
        overrides.update(load_config_text(_read_text(args.config)))
    # command-line flags win over the config file
    if getattr(args, "rule", None):
        overrides["rule"] = _RULE_FLAGS[args.rule]
    for flag, key in (
        ("tol_root", "tol_root"),
        ("tol_singular_g", "tol_singular_g"),
        ("tol_sigma_ratio", "tol_sigma_ratio"),
        ("lambda_min", "lambda_min"),
        ("max_iter", "max_iter"),
        ("agreement_factor", "agreement_factor"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "diagnostics", False):
        overrides["record_diagnostics"] = True
    try:
        return SolverConfig(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _config_fields(config: SolverConfig) -> dict:
    return {
        "rule": config.rule.value,
        "tol_root": config.tol_root,
        "tol_singular_g": config.tol_singular_g,
        "tol_sigma_ratio": config.tol_sigma_ratio,
        "lambda_min": config.lambda_min,
        "max_iter": config.max_iter,
        "agreement_factor": config.agreement_factor,
    }


def _emit(text: str, out: Optional[str], summary: Optional[str] = None) -> None:
    if out:
        _write_text(out, text)
        if summary:
            print(summary)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    problem = _load_problem(args)
    config = _build_config(args)
    x0 = _parse_floats(args.x0, problem.dimension, "start point")
    report = solve(problem, x0, config)
    manifest = build_manifest(
        "solve",
        problem=problem.name,
        x0=[float(v) for v in x0],
        **_config_fields(config),
    )
    text = jsonl_text(solve_report_lines(manifest, report))
    summary = (f"{report.status.value} after {report.iterations} iterations, "
               f"final x = [{', '.join(fmt_float(float(v)) for v in report.final_x)}]")
    _emit(text, args.out, summary)
    if args.fig:
        save_trajectory_figure(report, args.fig)
    return _STATUS_EXIT.get(report.status, EXIT_OTHER)


def cmd_grid(args) -> int:
    problem = _load_problem(args)
    if problem.dimension != 2:
        raise UsageError("grid requires a 2-D problem")
    config = _build_config(args)
    box = _parse_box(args.box)
    results = grid_run(problem, box, args.resolution, config)
    manifest = build_manifest(
        "grid",
        problem=problem.name,
        box=list(box),
        resolution=args.resolution,
        **_config_fields(config),
    )
    text = grid_csv_text(manifest, grid_rows(results))
    counts: dict = {}
    for cell in results:
        counts[cell.status.value] = counts.get(cell.status.value, 0) + 1
    summary = f"{len(results)} starts: " + ", ".join(
        f"{k}={v}" for k, v in sorted(counts.items()))
    _emit(text, args.out, summary)
    if args.fig:
        save_grid_figure(results, args.resolution, args.resolution, args.fig)
    return EXIT_OK


def cmd_field(args) -> int:
    problem = _load_problem(args)
    if problem.dimension != 2:
        raise UsageError("field requires a 2-D problem")
    box = _parse_box(args.box)
    result = field_scan(problem, box, args.resolution,
                        rank_tol=args.rank_tol)
    manifest = build_manifest(
        "field",
        problem=problem.name,
        box=list(box),
        resolution=args.resolution,
        rank_tol=args.rank_tol,
    )
    text = field_csv_text(manifest, field_rows(result))
    tags: dict = {}
    for cell in result.cells:
        tags[cell.case_tag] = tags.get(cell.case_tag, 0) + 1
    summary = f"{len(result.cells)} cells: " + ", ".join(
        f"{k}={v}" for k, v in sorted(tags.items()))
    _emit(text, args.out, summary)
    if args.fig:
        save_field_figure(result, args.fig)
    return EXIT_OK


def _verify_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NEWTON_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"NEWTON_SEED must be an integer, got {env!r}") \
                from exc
    return 0


def cmd_verify(args) -> int:
    seed = _verify_seed(args)
    results = run_all(seed=seed, trials=args.trials, es_fault=args.perturb)
    for res in results:
        print(f"{res.name:<20s} {'PASS' if res.passed else 'FAIL'}")
    all_passed = all(r.passed for r in results)
    print(f"verify: {'all suites passed' if all_passed else 'FAILURES'} "
          f"(seed={seed}, trials={args.trials})")
    if args.out:
        manifest = build_manifest("verify", seed=seed, trials=args.trials)
        lines = [manifest]
        for res in results:
            lines.append({
                "type": "suite",
                "name": res.name,
                "passed": res.passed,
                "details": _jsonable(res.details),
            })
        lines.append({"type": "summary", "all_passed": all_passed})
        _write_text(args.out, jsonl_text(lines))
    return EXIT_OK if all_passed else EXIT_VERIFY_FAILED


def _jsonable(obj):
    """Coerce numpy scalars/arrays in suite details into JSON-fit types."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _add_problem_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--problem", default="expsin",
                        help="built-in problem name (default: expsin)")
    parser.add_argument("--poly", metavar="FILE",
                        help="polynomial system file (overrides --problem)")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rule", choices=sorted(_RULE_FLAGS),
                        help="stepsize rule (default: hybrid)")
    parser.add_argument("--config", metavar="FILE",
                        help="solver config file with 'key = value' lines")
    parser.add_argument("--tol-root", dest="tol_root", type=float)
    parser.add_argument("--tol-singular-g", dest="tol_singular_g", type=float)
    parser.add_argument("--tol-sigma-ratio", dest="tol_sigma_ratio",
                        type=float)
    parser.add_argument("--lambda-min", dest="lambda_min", type=float)
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--agreement-factor", dest="agreement_factor",
                        type=float)


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", metavar="FILE",
                        help="write the delimited output here instead of stdout")
    parser.add_argument("--fig", metavar="FILE",
                        help="also render a figure (png/pdf by extension)")


def build_parser() -> _Parser:
    parser = _Parser(prog="snewton",
                     description="Damped Newton solver with singularity "
                                 "detection and stepsize control")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_solve = sub.add_parser("solve", help="run one damped Newton solve")
    _add_problem_flags(p_solve)
    p_solve.add_argument("--x0", required=True,
                         help="start point, comma separated (e.g. '-0.5,-1.5')")
    _add_config_flags(p_solve)
    p_solve.add_argument("--diagnostics", action="store_true",
                         help="record per-iterate sigma tracking diagnostics")
    _add_output_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_grid = sub.add_parser("grid", help="classify a grid of start points")
    _add_problem_flags(p_grid)
    p_grid.add_argument("--box", default="-2,2,-2,2",
                        help="xmin,xmax,ymin,ymax (default: -2,2,-2,2)")
    p_grid.add_argument("--resolution", type=int, default=31,
                        help="grid nodes per axis (default: 31)")
    _add_config_flags(p_grid)
    _add_output_flags(p_grid)
    p_grid.set_defaults(func=cmd_grid)

    p_field = sub.add_parser("field",
                             help="evaluate the singularity indicator on a grid")
    _add_problem_flags(p_field)
    p_field.add_argument("--box", default="-2,2,-2,2",
                         help="xmin,xmax,ymin,ymax (default: -2,2,-2,2)")
    p_field.add_argument("--resolution", type=int, default=101,
                         help="grid nodes per axis (default: 101)")
    p_field.add_argument("--rank-tol", dest="rank_tol", type=float,
                         default=1e-8, help="Jacobian rank tolerance")
    _add_output_flags(p_field)
    p_field.set_defaults(func=cmd_field)

    p_verify = sub.add_parser("verify",
                              help="run the randomized self-check suites")
    p_verify.add_argument("--seed", type=int, default=None,
                          help="RNG seed (default: NEWTON_SEED env var or 0)")
    p_verify.add_argument("--trials", type=int, default=40,
                          help="trial count per randomized suite")
    p_verify.add_argument("--out", metavar="FILE",
                          help="write a JSON-lines report here")
    p_verify.add_argument("--perturb", type=float, default=0.0,
                          help=argparse.SUPPRESS)
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version; remap everything else
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return EXIT_OK if code == 0 else code if code == EXIT_USAGE else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"snewton: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"snewton: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"snewton: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
