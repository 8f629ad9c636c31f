"""Command-line interface.

Exit codes: 0 on success, 1 on error, 2 when the estimator aborts.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings

import numpy as np

from admean import audit as au
from admean import harness
from admean.datagen import KINDS, DistSpec, paired_cov, sample
from admean.errors import AdmeanError, InsufficientSample
from admean.estimator import adamean, privmean, schedule
from admean.mechanisms import PrivacyBudget, Rng, laplace

EXIT_OK, EXIT_ERROR, EXIT_ABORT = 0, 1, 2
MIN_ROWS = 4

log = logging.getLogger("admean")


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list:
    return [int(float(v)) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="admean", description="Covariance-adaptive private mean estimation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output", default=None, help="output path (stdout when omitted)")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker processes (default ${harness.THREADS_ENV} or 1)")
    common.add_argument("--trials", type=int, default=None)

    budget = argparse.ArgumentParser(add_help=False)
    budget.add_argument("--eps", type=float, default=2.0)
    budget.add_argument("--delta", type=float, default=1e-3)

    e = sub.add_parser("estimate", parents=[common, budget], help="estimate the mean of a CSV dataset")
    e.add_argument("--input", required=True)
    e.add_argument("--header", action="store_true", help="skip the first CSV row")
    mode = e.add_mutually_exclusive_group(required=True)
    mode.add_argument("--bound", type=float, help="threshold B")
    mode.add_argument("--adaptive", action="store_true", help="search over B by doubling")
    e.add_argument("--t-max", type=int, default=64)

    g = sub.add_parser("gen", parents=[common], help="write a synthetic dataset as CSV")
    g.add_argument("--dist", choices=KINDS, default="gaussian")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, default=None)
    g.add_argument("--mu", type=_floats, default=None, help="comma-separated mean")
    g.add_argument("--sigma-diag", type=_floats, default=None, help="comma-separated covariance diagonal")
    g.add_argument("--dof", type=float, default=5.0)

    a = sub.add_parser("audit", parents=[common, budget], help="run a stability audit")
    a.add_argument("which", choices=["downdate", "matrix", "lognorm", "cov-char", "removal", "internal",
                                     "mean", "diameter", "laplace-tail", "epsilon-laplace"])
    a.add_argument("--n", type=int, default=None)

    b = sub.add_parser("bench", parents=[common, budget], help="time both phases over a grid of dimensions")
    b.add_argument("--n", type=int, default=100_000)
    b.add_argument("--dims", type=_ints, default=[16, 32, 64])
    b.add_argument("--repeats", type=int, default=3)

    s = sub.add_parser("sweep", parents=[common, budget], help="accuracy sweep over sample sizes")
    s.add_argument("--ns", type=_ints, default=[2**18, 2**19, 2**20])
    s.add_argument("--d", type=int, default=4)
    s.add_argument("--sigma-diag", type=_floats, default=None)
    s.add_argument("--bound", type=float, default=None, help="fixed B (default 4 (d + ln n))")
    s.add_argument("--dist", choices=KINDS, default="gaussian")
    s.add_argument("--dof", type=float, default=None)
    return p


def _emit(obj, path):
    if path:
        harness.write_json(path, obj)
    else:
        json.dump(obj, sys.stdout, indent=2, default=harness._json_default)
        sys.stdout.write("\n")


def cmd_estimate(args) -> int:
    x = harness.read_csv(args.input, header=args.header)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("input has no rows")
    if x.shape[0] % 2:
        warnings.warn("odd number of rows: dropped last row", UserWarning, stacklevel=1)
        x = x[:-1]
    if x.shape[0] < MIN_ROWS:
        raise ValueError(f"need at least {MIN_ROWS} rows after dropping, got {x.shape[0]}")
    budget = PrivacyBudget(args.eps, args.delta)
    rng = Rng(args.seed)
    config = {"command": "estimate", "input": args.input, "eps": args.eps, "delta": args.delta,
              "bound": args.bound, "adaptive": args.adaptive, "seed": args.seed, "n": int(x.shape[0])}
    if args.adaptive:
        try:
            est, records = adamean(x, budget, rng, t_max=args.t_max)
        except InsufficientSample as exc:
            _emit({"config": config, "error": str(exc), "records": [r.to_json() for r in exc.records]},
                  args.output)
            raise
        out = {"config": config, "estimate": None if est is None else est.tolist(),
               "records": [r.to_json() for r in records]}
    else:
        est, rec = privmean(x, args.bound, budget, rng)
        out = rec.to_json()
        out["config"] = config
    _emit(out, args.output)
    return EXIT_OK if est is not None else EXIT_ABORT


def cmd_gen(args) -> int:
    d = args.d or (len(args.mu) if args.mu else len(args.sigma_diag) if args.sigma_diag else 1)
    mu = np.asarray(args.mu if args.mu else np.zeros(d))
    sig = np.diag(args.sigma_diag if args.sigma_diag else np.ones(d))
    extra = {"dof": args.dof} if args.dist == "student_t" else {}
    x = sample(DistSpec(args.dist, mu, sig, extra), args.n, Rng(args.seed, harness.DATA_STREAM))
    if args.output:
        harness.write_csv(args.output, x)
    else:
        w = sys.stdout
        for row in x:
            w.write(",".join(repr(float(v)) for v in row) + "\n")
    return EXIT_OK


def cmd_audit(args) -> int:
    rng = Rng(args.seed)
    trials = args.trials
    w = args.which
    if w == "downdate":
        rep = au.audit_downdate_bound(trials or 200, rng)
    elif w == "matrix":
        rep = au.audit_matrix_stability(trials or 200, rng)
    elif w == "lognorm":
        rep = au.audit_log_norm_sensitivity(trials or 200, rng)
    elif w == "cov-char":
        rep = au.audit_cov_characterization(trials or 500, rng)
    elif w == "laplace-tail":
        rep = au.audit_laplace_sum_tail(1.0, 1.0, trials or 10**6, rng)
    elif w == "diameter":
        rep = au.audit_diameter_sampling(args.n or 64, 16, trials or 2000, rng)
    elif w == "removal":
        n = args.n or 64
        x = rng.gen.standard_normal((n, 3))
        x[:3] *= 8.0
        B = n / (2.0 * math.sqrt(math.e)) / 2.0
        rep = au.audit_removal_relations(au.AdjacentPair.zeroed(x, 0), B, n, rng, trials or 200)
    elif w == "internal":
        n = args.n or 2**16
        d = 4
        x = rng.gen.standard_normal((n, d))
        B = harness.default_bound(n, d)
        p = schedule(n, d, B, PrivacyBudget(args.eps, args.delta))
        rep = au.audit_internal_stability(x, B, p.m, p.sigma_z, trials or 500, rng)
    elif w == "mean":
        n = args.n or 512
        d = 2
        x = rng.gen.standard_normal((n, d))
        pair = au.AdjacentPair.raw_row(x, 0, np.full(d, 25.0))
        rep = au.audit_mean_stability(pair, paired_cov(x), 40.0, 8, 4, (0.3, 2.0, 0.0), trials or 200, rng)
    else:
        x = np.zeros((2, 1))
        pair = au.AdjacentPair.raw_row(x, 0, [1.0])

        def mech(data, r):
            return float(data[0, 0] + laplace(1.0 / args.eps, r))

        rep = au.audit_epsilon_1d(mech, pair, PrivacyBudget(args.eps, args.delta), 64, trials or 10**5, rng,
                                  delta_corr=0.0)
    _emit(rep.to_json(), args.output)
    return EXIT_OK if rep.passed else EXIT_ERROR


def cmd_bench(args) -> int:
    out = harness.run_bench(args.n, args.dims, args.eps, args.delta, args.seed, args.repeats)
    _emit(out, args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    threads = harness.resolve_threads(args.threads)
    seeds = list(range(args.seed, args.seed + (args.trials or 20)))
    res = harness.run_sweep(args.ns, args.d, args.eps, args.delta, seeds, args.sigma_diag, args.bound,
                            threads, args.dist, args.dof)
    if args.output:
        prefix = args.output[:-5] if args.output.endswith(".json") else args.output
        res.write(prefix)
    else:
        _emit(res.to_json(), None)
    return EXIT_OK


COMMANDS = {"estimate": cmd_estimate, "gen": cmd_gen, "audit": cmd_audit, "bench": cmd_bench, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (AdmeanError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
