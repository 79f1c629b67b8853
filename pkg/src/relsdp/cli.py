"""Command-line entry point: ``relsdp solve|check|eval DOMAIN ...``.

Exit codes: 0 success, 2 usage error, 3 unreadable or invalid domain/state
file, 4 solver failure (no convergence, case cap), 5 unsupported operation or
failed approximation, 6 conformance failure, 7 instance too large for the
oracle.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import oracle, sdp
from .exo import ApproximationFailure
from .model import ACCUMULATE, GOAL, RmdpSpec
from .parser import ParseError, bundled_domain, domain_names, parse_domain, parse_state
from .relexpr import ExpressionError, UnsupportedCombination, evaluate, fmt_value

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SOLVER = 4
EXIT_UNSUPPORTED = 5
EXIT_MISMATCH = 6
EXIT_ORACLE = 7


class UsageError(Exception):
    pass


def parse_horizon(text: str) -> int | None:
    if text in ("inf", "infinity"):
        return None
    try:
        h = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"horizon must be an integer or 'inf', got {text!r}")
    if h < 0:
        raise argparse.ArgumentTypeError("horizon must be nonnegative")
    return h


def parse_fraction(text: str) -> Fraction:
    try:
        v = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}")
    if v <= 0:
        raise argparse.ArgumentTypeError("eps must be positive")
    return v


def parse_sizes(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        name, sep, n = part.partition("=")
        if not sep or not name.strip() or not n.strip().isdigit():
            raise argparse.ArgumentTypeError(f"sizes look like Box=2,City=3; got {text!r}")
        out[name.strip()] = int(n)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relsdp", description="Lifted value iteration for "
                                 "relational MDPs, with a brute-force ground checker.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, horizon_default: str) -> None:
        p.add_argument("domain", help="domain file, or the name of a bundled domain "
                       f"({', '.join(domain_names())})")
        p.add_argument("--horizon", type=parse_horizon, default=parse_horizon(horizon_default),
                       help="number of backups, or 'inf' to iterate to convergence")
        p.add_argument("--eps", type=parse_fraction, default=Fraction(1, 10000),
                       help="convergence threshold for --horizon inf (default 1e-4)")
        p.add_argument("--mode", choices=(GOAL, ACCUMULATE),
                       help="override the domain's backup mode")
        p.add_argument("--bare-exo-backup", action="store_true",
                       help="exogenous domains: no reward addition or discounting")
        p.add_argument("--max-cases", type=int, default=sdp.DEFAULT_MAX_CASES,
                       help="abort when a value function needs more cases than this")
        p.add_argument("--out", type=Path, help="directory for output files")

    p = sub.add_parser("solve", help="compute the value function and a decision-list policy")
    common(p, "inf")
    p = sub.add_parser("check", help="compare the lifted solution with tabular value iteration")
    common(p, "1")
    p.add_argument("--sizes", type=parse_sizes, required=True,
                   help="objects per sort, e.g. Box=2,Truck=1,City=2")
    p = sub.add_parser("eval", help="evaluate the value function on one state")
    common(p, "1")
    p.add_argument("--state", type=Path, required=True,
                   help="state file: 'objects Sort: a, b' lines, then one true atom per line")
    return ap


def load(domain: str) -> RmdpSpec:
    if os.path.exists(domain):
        return parse_domain(Path(domain).read_text(encoding="utf-8"))
    name = Path(domain).name
    if name in domain_names():
        return bundled_domain(name)
    raise FileNotFoundError(domain)


def resolve_mode(args, spec: RmdpSpec) -> str:
    if args.bare_exo_backup:
        if not spec.exogenous:
            raise UsageError("--bare-exo-backup needs a domain with an exogenous event")
        if args.mode == ACCUMULATE:
            raise UsageError("--bare-exo-backup conflicts with --mode accumulate")
        return GOAL
    return args.mode or spec.mode


def fmt(v: Fraction) -> str:
    return f"{fmt_value(v)} (~{float(v):.4f})"


def run_solve(args, spec: RmdpSpec, mode: str) -> int:
    if spec.exogenous and args.horizon is None:
        raise UsageError("exogenous domains need a finite --horizon")
    v = sdp.solve(spec, args.horizon, args.eps, mode, args.max_cases)
    text = sdp.render_value_function(v)
    policy = None
    if sdp.is_max_only(v.expression) and sdp.is_max_only(spec.reward):
        policy = sdp.render_policy(sdp.extract_policy(spec, v, args.max_cases))
    print("value function:")
    print(text, end="")
    if policy:
        print("\npolicy:")
        print(policy, end="")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "value.txt").write_text(text, encoding="utf-8")
        if policy:
            (args.out / "policy.txt").write_text(policy, encoding="utf-8")
    return EXIT_OK


def run_check(args, spec: RmdpSpec, mode: str) -> int:
    if args.horizon is None:
        raise UsageError("check needs a finite --horizon")
    v = sdp.solve(spec, args.horizon, args.eps, mode, args.max_cases)
    gi = oracle.GroundInstance(spec, args.sizes)
    report = oracle.conformance_check(spec, v, args.sizes, args.horizon, mode,
                                      lower_bound=bool(spec.exogenous),
                                      solver=oracle.TabularSolver(gi))
    print(report.text(), end="")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.txt").write_text(report.text(), encoding="utf-8")
        (args.out / "states.tsv").write_text(report.table(), encoding="utf-8")
    return EXIT_OK if report.ok else EXIT_MISMATCH


def run_eval(args, spec: RmdpSpec, mode: str) -> int:
    interp = parse_state(args.state.read_text(encoding="utf-8"), spec)
    if spec.exogenous and args.horizon is None:
        raise UsageError("exogenous domains need a finite --horizon")
    v = sdp.solve(spec, args.horizon, args.eps, mode, args.max_cases)
    print(fmt(evaluate(v.expression, interp)))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load(args.domain)
        mode = resolve_mode(args, spec)
        run = {"solve": run_solve, "check": run_check, "eval": run_eval}[args.command]
        return run(args, spec, mode)
    except UsageError as err:
        print(f"relsdp: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError) as err:
        print(f"relsdp: input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (ApproximationFailure, UnsupportedCombination) as err:
        print(f"relsdp: unsupported: {err}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (sdp.SolveError, ExpressionError) as err:
        print(f"relsdp: solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except oracle.OracleError as err:
        print(f"relsdp: oracle error: {err}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
