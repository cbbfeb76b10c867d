"""Command-line front end.

    poisson-control check    CONFIG
    poisson-control solve    CONFIG
    poisson-control value    CONFIG [--grid lo:hi:step]
    poisson-control sweep    CONFIG --lambdas 2,20,200,2000
    poisson-control simulate CONFIG [--x0 X] [--a A --b B] [--workers N]

Exit codes: 0 success, 1 bad config or usage, 2 assumption failure,
3 solver failure.  Diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict

import numpy as np

from . import config as config_mod
from .errors import ConfigError, ControlError
from .functionals import ControlProblem
from .montecarlo import PolicySpec, simulate
from .thresholds import lambda_sweep, singular_thresholds, solve_thresholds
from .value import build, evaluate

EXIT_OK, EXIT_USAGE, EXIT_ASSUMPTION, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _AssumptionFailure(Exception):
    pass


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--grid expects lo:hi:step, got {text!r}") from None
    if not (0 < lo <= hi and step > 0):
        raise UsageError("--grid needs 0 < lo <= hi and step > 0")
    n = int(np.floor((hi - lo) / step * (1 + 1e-12))) + 1
    return lo + step * np.arange(n)


def _parse_lambdas(text: str) -> list[float]:
    try:
        out = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--lambdas expects a comma list of numbers, got {text!r}") from None
    if not out or any(not v > 0 for v in out):
        raise UsageError("--lambdas needs at least one positive value")
    return out


def _require_assumptions(problem: ControlProblem):
    report = problem.check_assumptions()
    if not report.core_passed:
        raise _AssumptionFailure(f"assumption items failed: {', '.join(report.failed())}")
    return report


def _write(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _table(header: list[str], rows: list[list], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([dict(zip(header, row)) for row in rows], indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([["" if v is None else v for v in row] for row in rows])
    return buf.getvalue()


def _cmd_check(cfg, args) -> int:
    report = cfg.control_problem().check_assumptions()
    _write(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    if not report.core_passed:
        print(f"assumption items failed: {', '.join(report.failed())}", file=sys.stderr)
        return EXIT_ASSUMPTION
    return EXIT_OK


def _cmd_solve(cfg, args) -> int:
    problem = cfg.control_problem()
    report = _require_assumptions(problem)
    th = solve_thresholds(problem, report.critical_points)
    sing = singular_thresholds(problem, report.critical_points)
    cp = th.critical_points
    out = {
        "a_star": th.a_star,
        "b_star": th.b_star,
        "x_tilde": cp.x_tilde,
        "x_hat": cp.x_hat,
        "residuals": list(th.residuals),
        "singular": {"a_s": sing.a_s, "b_s": sing.b_s},
    }
    _write(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def _solved_value(problem):
    report = _require_assumptions(problem)
    return build(problem, solve_thresholds(problem, report.critical_points))


def _cmd_value(cfg, args) -> int:
    problem = cfg.control_problem()
    vf = _solved_value(problem)
    if args.grid:
        xs = _parse_grid(args.grid)
    else:
        xs = np.geomspace(vf.a_star / 10.0, 10.0 * vf.b_star, 200)
    vals = [evaluate(vf, xs, k) for k in range(3)]
    regions = np.atleast_1d(vf.region(xs))
    rows = [[float(x), float(v0), float(v1), float(v2), str(reg)]
            for x, v0, v1, v2, reg in zip(xs, *vals, regions)]
    _write(_table(["x", "V", "V1", "V2", "region"], rows, cfg.output.format), args.out)
    return EXIT_OK


def _cmd_sweep(cfg, args) -> int:
    lambdas = _parse_lambdas(args.lambdas)
    problem = cfg.control_problem()
    report = _require_assumptions(problem)
    sing = singular_thresholds(problem, report.critical_points)
    entries = lambda_sweep(problem, lambdas, workers=args.workers or cfg.sim.workers, singular=sing)
    rows = [[e.lam, e.a_star, e.b_star, e.a_gap, e.b_gap] for e in entries]
    _write(_table(["lambda", "a_star", "b_star", "a_gap", "b_gap"], rows, cfg.output.format), args.out)
    failed = [e for e in entries if e.error]
    for e in failed:
        print(f"lambda={e.lam!r}: {e.error}", file=sys.stderr)
    return EXIT_SOLVER if failed else EXIT_OK


def _cmd_simulate(cfg, args) -> int:
    problem = cfg.control_problem()
    vf = _solved_value(problem)
    overrides = {k: v for k, v in (("x0", args.x0), ("workers", args.workers),
                                   ("seed", args.seed), ("n_paths", args.n_paths)) if v is not None}
    sim_cfg = cfg.sim_config(**overrides)
    if (args.a is None) != (args.b is None):
        raise UsageError("--a and --b must be given together")
    policy = PolicySpec(vf.a_star, vf.b_star) if args.a is None else PolicySpec(args.a, args.b)
    grid = np.geomspace(vf.a_star / 10.0, 10.0 * vf.b_star, 2048)
    res = simulate(problem, policy, sim_cfg, value_bound=float(np.max(np.abs(evaluate(vf, grid)))))
    echo = asdict(sim_cfg)
    # worker count does not affect results and is left out so output is comparable across runs
    echo.pop("workers")
    echo["horizon"] = res.horizon
    echo["policy"] = {"a": policy.a, "b": policy.b}
    echo["model"] = asdict(cfg.model)
    echo["problem"] = cfg.to_dict()["problem"]
    out = {
        "estimate": res.estimate,
        "stderr": res.stderr,
        "components": res.components,
        "truncation_bound": res.truncation_bound,
        "config_echo": echo,
    }
    _write(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poisson-control", description="Poisson-constrained two-sided impulse control")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="path to the JSON run configuration")
        p.add_argument("--out", help="write output here instead of the config's output.path / stdout")
        p.set_defaults(fn=fn)
        return p

    add("check", _cmd_check, "evaluate the standing assumptions")
    add("solve", _cmd_solve, "solve for the optimal thresholds")
    p = add("value", _cmd_value, "tabulate the value function")
    p.add_argument("--grid", help="lo:hi:step (default: 200 log points over [a*/10, 10 b*])")
    p = add("sweep", _cmd_sweep, "solve over a list of signal intensities")
    p.add_argument("--lambdas", required=True, help="comma separated intensities")
    p.add_argument("--workers", type=int)
    p = add("simulate", _cmd_simulate, "Monte Carlo estimate of the objective")
    p.add_argument("--x0", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--workers", type=int)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_mod.load(args.config)
        if args.out is None:
            args.out = cfg.output.path
        return args.fn(cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _AssumptionFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except ControlError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())
