"""Command-line interface: ``rosa <command> [flags]`` (also ``python -m rosa``).

Exit codes: 0 on success, including solver non-convergence (reported in
the output's ``status``); 2 for invalid input or flags; 3 for I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from . import harness
from .constraints import build_constraint_system, residuals
from .io import load_model, load_policy, save_model, write_json
from .maze import build_maze_pomdp, generate_maze
from .pomdp import InvalidInput, reward_of_policy, state_action_frequency

EXIT_INVALID = 2
EXIT_IO = 3

_LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def configure_logging():
    level = os.environ.get("ROSA_LOG", "quiet").strip().lower()
    if level not in _LOG_LEVELS:
        raise InvalidInput(f"ROSA_LOG must be one of {', '.join(_LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=_LOG_LEVELS[level], stream=sys.stderr, format="%(message)s")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _gammas(text):
    if text.strip() == "sweep":
        return harness.gamma_sweep()
    vals = _float_list(text)
    if not vals or any(not 0 < g < 1 for g in vals):
        raise argparse.ArgumentTypeError("discount factors must lie in (0, 1)")
    return vals


def _n_range(text):
    """``2-6`` (inclusive range) or ``2,4,6``."""
    try:
        if "-" in text:
            lo, hi = (int(v) for v in text.split("-", 1))
            vals = list(range(lo, hi + 1))
        else:
            vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a range like 2-6 or a list like 2,3,5, got {text!r}")
    if not vals or min(vals) < 2:
        raise argparse.ArgumentTypeError("maze sizes must be integers >= 2")
    return vals


def _methods(text):
    vals = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in vals if v not in harness.METHODS]
    if not vals or bad:
        raise argparse.ArgumentTypeError(f"methods must be among {', '.join(harness.METHODS)}")
    return vals


def _quantiles(text):
    vals = _float_list(text)
    if any(not 0 <= q <= 1 for q in vals):
        raise argparse.ArgumentTypeError("quantiles must lie in [0, 1]")
    return vals


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def cmd_gen_maze(args):
    maze = generate_maze(args.n, args.seed)
    model = build_maze_pomdp(maze, args.gamma, reset=args.reset)
    save_model(model, args.out)
    if args.verbose:
        print(maze.render(), file=sys.stderr)
        print(f"states {model.n_states}  observations {model.n_obs}", file=sys.stderr)
    return 0


def cmd_solve(args):
    model = load_model(args.model)
    doc = harness.solve_report(args.method, model, tol=args.tol, max_iters=args.max_iters,
                               restarts=args.restarts, seed=args.seed, gtol=args.gtol)
    trace = doc.pop("trace", None)
    if args.trace_csv and trace is not None:
        with open(args.trace_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["iter", "reward", "grad_norm", "event"])
            w.writeheader()
            w.writerows(trace)
    if args.policy_out:
        write_json({"pi": doc["policy"]}, args.policy_out)
    write_json(doc, args.out)
    return 0


def cmd_eval(args):
    model = load_model(args.model)
    pi = load_policy(args.policy, model)
    eta = state_action_frequency(model, pi)
    lin, quad, min_entry = residuals(build_constraint_system(model), eta)
    marg = eta.sum(axis=1)
    doc = {"reward": reward_of_policy(model, pi), "linear_residual": lin,
           "quadratic_residual": quad, "min_entry": min_entry,
           "min_state_marginal": float(marg.min()), "positive_marginals": bool(marg.min() > 0)}
    write_json(doc, args.out)
    return 0


def cmd_dump_constraints(args):
    model = load_model(args.model)
    write_json(build_constraint_system(model).to_json(), args.out)
    return 0


def cmd_bench(args):
    method_reps = {"dpo": args.dpo_reps} if args.dpo_reps is not None else None
    records = harness.run_bench(args.methods, args.n_range, args.gammas, args.reps,
                                seed0=args.seed0, jobs=args.jobs, method_reps=method_reps,
                                tol=args.tol, max_iters=args.max_iters, gtol=args.gtol,
                                policy_dir=args.policy_dir)
    harness.write_csv(records, args.csv)
    rows = harness.summarize(records, args.quantiles)
    print(harness.format_summary(rows))
    if args.summary_csv:
        with open(args.summary_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else [])
            w.writeheader()
            w.writerows(rows)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="rosa", description="Memoryless POMDP policy optimisation "
                                "in state-action space, with DPO and BCP baselines.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-maze", help="write the navigation POMDP of a random maze")
    g.add_argument("--n", type=int, required=True, help="maze parameter, side length 2n-1")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gamma", type=float, default=0.9999)
    g.add_argument("--reset", choices=("all", "non_goal"), default="all",
                   help="where the goal state sends the agent")
    g.add_argument("--out", required=True)
    g.add_argument("--verbose", action="store_true", help="print the maze to stderr")
    g.set_defaults(func=cmd_gen_maze)

    def solver_flags(q):
        q.add_argument("--tol", type=_positive_float, default=1e-8, help="KKT tolerance")
        q.add_argument("--max-iters", type=int, default=None)
        q.add_argument("--gtol", type=_positive_float, default=1e-6,
                       help="gradient tolerance for dpo")

    s = sub.add_parser("solve", help="optimise a policy for a model file")
    s.add_argument("--method", choices=harness.METHODS, default="rosa")
    s.add_argument("--model", required=True)
    solver_flags(s)
    s.add_argument("--restarts", type=int, default=1, help="rosa multi-start count")
    s.add_argument("--seed", type=int, default=0, help="seed for rosa restarts")
    s.add_argument("--out", default="-")
    s.add_argument("--policy-out", help="also write the policy file")
    s.add_argument("--trace-csv", help="dpo per-iteration trace")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="maze sweep with CSV output and quantile summary")
    b.add_argument("--methods", type=_methods, default=list(harness.METHODS))
    b.add_argument("--n-range", type=_n_range, default=[2, 3, 4])
    b.add_argument("--gammas", type=_gammas, default=[0.9999],
                   help="comma list, or 'sweep' for 1 - 10^(-k/8), k = 8..40")
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--dpo-reps", type=int, default=None, help="fewer repetitions for dpo")
    b.add_argument("--seed0", type=int, default=0)
    b.add_argument("--quantiles", type=_quantiles, default=[0.16, 0.84])
    b.add_argument("--jobs", type=int, default=1)
    solver_flags(b)
    b.add_argument("--csv", required=True)
    b.add_argument("--summary-csv")
    b.add_argument("--policy-dir", help="write each returned policy here")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("eval", help="exact reward and feasibility checks of a policy")
    e.add_argument("--model", required=True)
    e.add_argument("--policy", required=True)
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("dump-constraints", help="write the explicit constraint system")
    d.add_argument("--model", required=True)
    d.add_argument("--out", default="-")
    d.set_defaults(func=cmd_dump_constraints)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging()
        if getattr(args, "reps", 1) < 1 or getattr(args, "jobs", 1) < 1:
            raise InvalidInput("--reps and --jobs must be positive")
        return args.func(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
