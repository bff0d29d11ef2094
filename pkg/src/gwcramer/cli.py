"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 domain error (bad law, overflow,
out-of-range argument), 4 unreliable grid point under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import branching, experiments, inference, offspring, stats
from .errors import GWError

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_UNRELIABLE = 0, 2, 3, 4
OUTPUT_DIR_ENV = "GWCRAMER_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _seed(value: str) -> int:
    seed = int(value, 0)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return seed


def _threads(value: str) -> int | str:
    if value == "auto":
        return value
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1 or 'auto'")
    return n


def _kv_csv(payload: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in payload.items():
        w.writerow([k, json.dumps(v) if isinstance(v, (dict, list)) else v])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gwcramer", description="Galton-Watson offspring-mean estimation toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, default_format):
        sp.add_argument("--output", "-o", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=default_format)

    def seeded(sp):
        sp.add_argument("--seed", type=_seed, help="master seed (default: drawn from OS entropy)")
        sp.add_argument("--threads", type=_threads, default=1, help="worker threads or 'auto'")

    sp = sub.add_parser("simulate", help="simulate one trajectory")
    sp.add_argument("--law", required=True)
    sp.add_argument("--n0", type=int, default=0)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--z-init", type=int, default=1)
    sp.add_argument("--fast", action="store_true", help="one draw per generation (poisson1 laws)")
    sp.add_argument("--seed", type=_seed)
    common(sp, "csv")

    sp = sub.add_parser("pgf", help="iterate the offspring generating function")
    sp.add_argument("--law", required=True)
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    common(sp, "json")

    sp = sub.add_parser("bound", help="Markov bound on P(Z_n <= n)")
    sp.add_argument("--law", required=True)
    sp.add_argument("--n", type=int, required=True)
    common(sp, "json")

    sp = sub.add_parser("qlimit", help="sequence f_n(s)/p1^n")
    sp.add_argument("--law", required=True)
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--n-max", type=int, required=True)
    common(sp, "json")

    sp = sub.add_parser("check", help="check a moment condition")
    sp.add_argument("condition", choices=("bernstein", "mgf", "linnik", "moment"))
    sp.add_argument("--law", required=True)
    sp.add_argument("--c", type=float, help="Bernstein constant (default: bounded-support constant)")
    sp.add_argument("--lmax", type=int, default=30)
    sp.add_argument("--kappa0", type=float)
    sp.add_argument("--iota0", type=float)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--rho", type=float)
    common(sp, "json")

    sp = sub.add_parser("estimate", help="estimators and statistics from a trajectory CSV")
    sp.add_argument("--input", "-i", required=True)
    sp.add_argument("--law", help="law supplying the true m and v")
    sp.add_argument("--m", type=float)
    sp.add_argument("--v", type=float)
    common(sp, "json")

    sp = sub.add_parser("ci", help="confidence interval for m")
    sp.add_argument("method", choices=("window", "single"))
    sp.add_argument("--input", "-i", help="trajectory CSV (window)")
    sp.add_argument("--zn", type=int)
    sp.add_argument("--znext", type=int)
    sp.add_argument("--v", type=float, required=True)
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--width-mode", choices=("derived", "literal"), default="derived")
    common(sp, "json")

    sp = sub.add_parser("tail-ratio", help="Monte Carlo tail ratios against the normal tail")
    sp.add_argument("--law", required=True)
    sp.add_argument("--statistic", choices=("H", "R", "h", "r"), default="H")
    sp.add_argument("--n0", type=int, default=0)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--replicates", "-N", type=int, required=True)
    sp.add_argument("--x-grid", type=_floats, default=list(experiments.DEFAULT_GRID))
    sp.add_argument("--strict", action="store_true", help="exit 4 if a grid point has count < 10")
    seeded(sp)
    common(sp, "csv")

    sp = sub.add_parser("mdp", help="Monte Carlo moderate-deviation rate sweep")
    sp.add_argument("--law", required=True)
    sp.add_argument("--n0", type=int, default=0)
    sp.add_argument("--n-sweep", type=_ints, required=True)
    sp.add_argument("--x0", type=float, default=1.0)
    sp.add_argument("--a-exponent", type=float, default=0.25)
    sp.add_argument("--two-sided", action="store_true")
    sp.add_argument("--replicates", "-N", type=int, required=True)
    sp.add_argument("--strict", action="store_true", help="exit 4 if some n has a zero count")
    seeded(sp)
    common(sp, "csv")

    sp = sub.add_parser("coverage", help="Monte Carlo interval coverage")
    sp.add_argument("--law", required=True)
    sp.add_argument("--method", choices=("window", "single"), default="window")
    sp.add_argument("--width-mode", choices=("derived", "literal"), default="derived")
    sp.add_argument("--kappa", type=float, default=0.05)
    sp.add_argument("--n0", type=int, default=0)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--replicates", "-N", type=int, required=True)
    seeded(sp)
    common(sp, "csv")

    sp = sub.add_parser("smallpop", help="empirical P(Z_n <= n) against its bound")
    sp.add_argument("--law", required=True)
    sp.add_argument("--n-sweep", type=_ints, required=True)
    sp.add_argument("--replicates", "-N", type=int, required=True)
    seeded(sp)
    common(sp, "csv")
    return p


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbits(64)
    return args.seed


def _write(args, text: str) -> None:
    path = args.output
    if path is None and os.environ.get(OUTPUT_DIR_ENV):
        path = str(Path(os.environ[OUTPUT_DIR_ENV]) / f"{args.command}.{args.format}")
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _emit_payload(args, payload: dict) -> None:
    if args.format == "json":
        _write(args, json.dumps(payload, indent=2) + "\n")
    else:
        _write(args, _kv_csv(payload))


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    rng = np.random.default_rng(seed)
    fn = branching.simulate_fast if args.fast else branching.simulate
    traj = fn(args.law, args.n0, args.n, rng, z_init=args.z_init)
    if args.format == "csv":
        _write(args, traj.to_csv())
    else:
        _emit_payload(args, {"law": args.law.spec, "seed": seed, "n0": traj.n0,
                             "z_init": args.z_init, "values": list(traj.values)})
    print(f"simulated {traj.n} transitions of {args.law.spec} from generation {traj.n0}, "
          f"seed {seed}; final size {traj.values[-1]}", file=sys.stderr)
    return EXIT_OK


def _cmd_pgf(args) -> int:
    value = branching.pgf_iterate(args.law, args.s, args.n)
    _emit_payload(args, {"law": args.law.spec, "s": args.s, "n": args.n, "f_n": value})
    print(f"f_{args.n}({args.s}) = {value!r}", file=sys.stderr)
    return EXIT_OK


def _cmd_bound(args) -> int:
    value = branching.small_pop_bound(args.law, args.n)
    _emit_payload(args, {"law": args.law.spec, "n": args.n, "p1": args.law.pmf(1), "bound": value})
    print(f"P(Z_{args.n} <= {args.n}) <= {value!r}", file=sys.stderr)
    return EXIT_OK


def _cmd_qlimit(args) -> int:
    seq = branching.q_limit_estimate(args.law, args.s, args.n_max)
    _emit_payload(args, {"law": args.law.spec, "s": args.s, "sequence": seq})
    print(f"f_n({args.s})/p1^n at n = {args.n_max}: {seq[-1]!r}", file=sys.stderr)
    return EXIT_OK


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise _UsageError(f"{args.command} {getattr(args, 'condition', '')}: missing "
                          + ", ".join("--" + n.replace("_", "-") for n in missing))


def _cmd_check(args) -> int:
    law = args.law
    if args.condition == "bernstein":
        c = args.c if args.c is not None else offspring.bernstein_constant_bounded(law)
        report = offspring.check_bernstein(law, c, args.lmax)
    elif args.condition == "mgf":
        _need(args, "kappa0")
        report = offspring.check_cramer_mgf(law, args.kappa0)
    elif args.condition == "linnik":
        _need(args, "iota0", "tau")
        report = offspring.check_linnik(law, args.iota0, args.tau)
    else:
        _need(args, "rho")
        report = offspring.check_moment_2_rho(law, args.rho)
    payload = {"law": law.spec, **report.to_dict()}
    if args.format == "csv" and report.per_order:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l", "lhs", "rhs", "ok"])
        for l, lhs, rhs in report.per_order:
            w.writerow([l, repr(lhs), repr(rhs), "true" if lhs <= rhs else "false"])
        _write(args, buf.getvalue())
    else:
        _emit_payload(args, payload)
    status = "passed" if report.passed else "failed"
    print(f"{report.condition_name} condition for {law.spec}: {status} "
          f"(parameters {report.parameters})", file=sys.stderr)
    return EXIT_OK


def _true_params(args) -> tuple[float, float]:
    if args.law is not None:
        return args.law.mean, math.sqrt(args.law.variance)
    _need(args, "m", "v")
    return args.m, args.v


def _cmd_estimate(args) -> int:
    traj = branching.Trajectory.read_csv(args.input)
    m, v = _true_params(args)
    ws = stats.h_statistic(traj, m, v)
    z_last, z_next = traj.values[-2], traj.values[-1]
    payload = {
        "input": args.input, "m": m, "v": v, "n0": traj.n0, "n": traj.n,
        "m_hat": ws.m_hat, "sqrt_sum": ws.sqrt_sum, "H": ws.h_value,
        "lotka_nagaev_last": stats.lotka_nagaev(z_last, z_next),
        "R_last": stats.r_statistic(z_last, z_next, m, v),
    }
    _emit_payload(args, payload)
    print(f"m_hat = {ws.m_hat:.6g}, H = {ws.h_value:.6g} over {traj.n} transitions", file=sys.stderr)
    return EXIT_OK


def _cmd_ci(args) -> int:
    if args.method == "window":
        _need(args, "input")
        ci = inference.ci_window(branching.Trajectory.read_csv(args.input), args.v, args.kappa)
    else:
        _need(args, "zn", "znext")
        ci = inference.ci_single(args.zn, args.znext, args.v, args.kappa, args.width_mode)
    _emit_payload(args, ci.to_dict())
    print(f"{100 * ci.level:g}% interval for m: [{ci.lo:.5f}, {ci.hi:.5f}]", file=sys.stderr)
    return EXIT_OK


def _config(args, **extra) -> experiments.ExperimentConfig:
    return experiments.ExperimentConfig(
        law=args.law, master_seed=_resolve_seed(args), threads=args.threads, **extra
    )


def _emit_report(args, report) -> None:
    _write(args, report.to_csv() if args.format == "csv" else report.to_json() + "\n")


def _cmd_tail_ratio(args) -> int:
    cfg = _config(args, statistic=args.statistic, n0=args.n0, n=args.n,
                  replicates=args.replicates, x_grid=args.x_grid)
    report = experiments.tail_ratio_experiment(cfg)
    _emit_report(args, report)
    worst = max((r.log_abs_ratio for r in report.rows if r.log_abs_ratio is not None), default=float("nan"))
    bad = [r.x for r in report.rows if not r.reliable]
    print(f"{cfg.statistic} tail ratios for {cfg.law.spec}, n = {cfg.n}, N = {cfg.replicates}, "
          f"seed {cfg.master_seed}: max |ln ratio| = {worst:.4f}; "
          f"{len(bad)} unreliable grid points; {report.wall_time:.2f}s", file=sys.stderr)
    return EXIT_UNRELIABLE if args.strict and bad else EXIT_OK


def _cmd_mdp(args) -> int:
    cfg = _config(args, n0=args.n0, replicates=args.replicates, a_exponent=args.a_exponent)
    report = experiments.mdp_experiment(cfg, args.x0, args.n_sweep, two_sided=args.two_sided)
    _emit_report(args, report)
    gaps = ", ".join(f"n={r.n}: {'n/a' if r.gap is None else format(r.gap, '.4f')}" for r in report.rows)
    print(f"rate gaps to {-0.5 * args.x0**2:g} (seed {cfg.master_seed}): {gaps}", file=sys.stderr)
    return EXIT_UNRELIABLE if args.strict and report.unestimable else EXIT_OK


def _cmd_coverage(args) -> int:
    cfg = _config(args, n0=args.n0, n=args.n, replicates=args.replicates, kappa=args.kappa)
    report = experiments.coverage_experiment(cfg, args.method, args.width_mode)
    _emit_report(args, report)
    print(f"{args.method} interval coverage {report.coverage:.4f} "
          f"[{report.band_lo:.4f}, {report.band_hi:.4f}] vs nominal {report.nominal:g}, "
          f"seed {cfg.master_seed}", file=sys.stderr)
    return EXIT_OK


def _cmd_smallpop(args) -> int:
    seed = _resolve_seed(args)
    report = experiments.small_pop_experiment(args.law, args.n_sweep, args.replicates, seed, args.threads)
    _emit_report(args, report)
    print(f"P(Z_n <= n) within bound at {sum(r.within_bound for r in report.rows)}"
          f"/{len(report.rows)} generations, seed {seed}", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate, "pgf": _cmd_pgf, "bound": _cmd_bound, "qlimit": _cmd_qlimit,
    "check": _cmd_check, "estimate": _cmd_estimate, "ci": _cmd_ci, "tail-ratio": _cmd_tail_ratio,
    "mdp": _cmd_mdp, "coverage": _cmd_coverage, "smallpop": _cmd_smallpop,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        # parsed here, not by argparse, so a bad law is a domain error (exit 3)
        if getattr(args, "law", None) is not None:
            args.law = offspring.parse_law(args.law)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (GWError, ValueError, OverflowError, OSError) as exc:
        print(f"gwcramer: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main() -> None:
    sys.exit(run())
