"""Command-line entry point: ``kronlss <subcommand> ...``.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from .asymptotics import YpError
from .bootstrap import run_bootstrap_test
from .data import (
    EntryLaw,
    FormatError,
    KroneckerModel,
    block_sigma_v,
    from_spectrum,
    generate_dataset,
    load_dataset,
    load_matrix,
    sym_sqrt,
    uniform_spectrum,
    write_dataset,
    write_matrix,
)
from .engine import TestConfig, oriented, run_test
from .estimators import EstimationError, estimate_nuisance
from .harness import SimulationConfig, run_simulation
from .noise import IdentifiabilityError, estimate_sigma_beta, remove_common_noise, run_noised_test
from .rng import stream
from .spectral import ConvergenceError, whiten

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"\n{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--output", choices=("json", "csv"), default="json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def _add_test_args(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="MVDS observation file")
    p.add_argument("--sigma-u0", required=True, help="hypothesized covariance (matrix file)")
    p.add_argument("--sigma-v", help="covariance of the untested side; omit to estimate nuisance parameters")
    p.add_argument("--nu4", type=float, default=3.0, help="entry kurtosis when --sigma-v is given")
    p.add_argument("--f", default="x2", help="spectral function tag: x2, x3, exp, log_shift[:s], poly:c0,c1,...")
    p.add_argument("--alpha", type=float, action="append", help="significance level (repeatable)")
    p.add_argument("--side", choices=("rows", "columns"), default="rows")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kronlss", description="Spectral tests of Kronecker-product covariance structure.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("test", help="formula-calibrated test")
    _add_test_args(p)
    _add_common(p)

    p = sub.add_parser("boot", help="bootstrap-calibrated test")
    _add_test_args(p)
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--dump", help="write bootstrap replicates to this CSV")
    _add_common(p)

    p = sub.add_parser("noise-test", help="test under the noised model")
    p.add_argument("--data", required=True)
    p.add_argument("--sigma-u0", required=True)
    p.add_argument("--mode", choices=("FG", "PG", "FE"), default="FE")
    p.add_argument("--sigma-beta2", type=float)
    p.add_argument("--sigma-v")
    p.add_argument("--nu4", type=float, default=3.0)
    p.add_argument("--nu4-noise", type=float, default=3.0)
    p.add_argument("--alpha", type=float, action="append")
    _add_common(p)

    p = sub.add_parser("estimate", help="report nuisance estimates")
    p.add_argument("--data", required=True)
    p.add_argument("--sigma-u0", help="whiten with this covariance first")
    p.add_argument("--side", choices=("rows", "columns"), default="rows")
    _add_common(p)

    p = sub.add_parser("simulate", help="run a Monte Carlo config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="CSV table path (default: stdout)")
    p.add_argument("--json", help="JSON summary path")
    p.add_argument("--stats", help="per-replication statistics CSV path")
    p.add_argument("--replications", type=int, help="override the config's replication count")
    _add_common(p)

    p = sub.add_parser("gen", help="generate a dataset")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--law", default="normal", help="normal, bernoulli or pearson(k)")
    p.add_argument("--sigma-u", default="uniform", help="matrix file, 'identity' or 'uniform' (Haar-rotated U[1,2] spectrum)")
    p.add_argument("--sigma-v", default="identity", help="matrix file, 'identity' or 'block'")
    p.add_argument("--sigma-alpha", type=float, default=0.0)
    p.add_argument("--sigma-beta", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--write-sigma-u", help="also write the row covariance used")
    p.add_argument("--write-sigma-v", help="also write the column covariance used")
    _add_common(p)
    return ap


def _alphas(args):
    return tuple(args.alpha) if args.alpha else (0.05, 0.10)


def _emit_report(report, fmt: str):
    if fmt == "json":
        print(report.to_json(indent=2))
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "statistic", "mu", "sigma", "p_value", "alpha", "reject"])
    for a in report.alpha:
        pv = "" if report.p_value is None else repr(report.p_value)
        w.writerow([report.method, repr(report.statistic), repr(report.mu), repr(report.sigma), pv, f"{a:g}", int(report.reject[a])])
    sys.stdout.write(buf.getvalue())


def _test_config(args) -> TestConfig:
    if args.sigma_v:
        return TestConfig(f=args.f, alpha=_alphas(args), nuisance="known", sigma_v=load_matrix(args.sigma_v), nu4=args.nu4, side=args.side)
    return TestConfig(f=args.f, alpha=_alphas(args), nuisance="estimated", side=args.side)


def _cmd_test(args):
    rep = run_test(load_dataset(args.data), load_matrix(args.sigma_u0), _test_config(args), seed=args.seed)
    _emit_report(rep, args.output)


def _cmd_boot(args):
    if args.B < 1:
        raise UsageError("--B must be positive")
    rep = run_bootstrap_test(
        load_dataset(args.data), load_matrix(args.sigma_u0), _test_config(args), B=args.B, seed=args.seed, dump=args.dump
    )
    _emit_report(rep, args.output)


def _cmd_noise(args):
    sv = load_matrix(args.sigma_v) if args.sigma_v else None
    rep = run_noised_test(
        load_dataset(args.data),
        load_matrix(args.sigma_u0),
        args.mode,
        sigma_beta2=args.sigma_beta2,
        sigma_v=sv,
        nu4=args.nu4,
        nu4_noise=args.nu4_noise,
        alpha=_alphas(args),
        seed=args.seed,
    )
    _emit_report(rep, args.output)


def _cmd_estimate(args):
    raw = oriented(load_dataset(args.data), args.side)
    data = whiten(raw, load_matrix(args.sigma_u0)) if args.sigma_u0 else raw
    out = {"dims": data.dims}
    out["nuisance"] = estimate_nuisance(data).as_dict()
    # whitening flattens the diagonal structure that identifies sigma_beta, so use the raw data here
    centered, sa2 = remove_common_noise(raw)
    out["sigma_alpha2_hat"] = sa2
    try:
        out["sigma_beta2_hat"] = estimate_sigma_beta(centered, sa2).sigma_beta2_hat
    except IdentifiabilityError as exc:
        out["sigma_beta2_hat"] = None
        out["sigma_beta2_note"] = str(exc)
    if args.output == "json":
        print(json.dumps(out, indent=2))
    else:
        flat = {**out["nuisance"], "sigma_alpha2_hat": sa2, "sigma_beta2_hat": out["sigma_beta2_hat"]}
        print(",".join(flat))
        print(",".join("" if v is None else repr(float(v)) for v in flat.values()))


def _cmd_simulate(args):
    cfg = SimulationConfig.load(args.config)
    if args.replications:
        cfg.replications = args.replications
    if args.seed:
        cfg.seed = args.seed
    table = run_simulation(cfg, threads=args.threads, stats_path=args.stats, progress=lambda k: logging.info("done %s", k))
    text = table.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(table.to_json(cfg))
    if args.output == "json" and not args.out:
        print(table.to_json(cfg))
    elif not args.out:
        sys.stdout.write(text)


def _resolve_cov(spec: str, n: int, seed: int, which: int) -> np.ndarray:
    if spec == "identity":
        return np.eye(n)
    if spec == "block":
        return block_sigma_v(n)
    if spec == "uniform":
        g, lam = uniform_spectrum(n, stream(seed, 4, which))
        return from_spectrum(g, lam)
    if os.path.exists(spec):
        m = load_matrix(spec)
        if m.shape[0] != n:
            raise UsageError(f"{spec} is {m.shape[0]}x{m.shape[0]}, expected {n}")
        return m
    raise UsageError(f"unknown covariance recipe or missing file: {spec}")


def _cmd_gen(args):
    su = _resolve_cov(args.sigma_u, args.p, args.seed, 0)
    sv = _resolve_cov(args.sigma_v, args.q, args.seed, 1)
    law = EntryLaw.parse(args.law)
    model = KroneckerModel(sym_sqrt(su), sym_sqrt(sv), law, args.sigma_alpha, args.sigma_beta, law)
    write_dataset(generate_dataset(model, args.T, args.seed), args.out)
    if args.write_sigma_u:
        write_matrix(su, args.write_sigma_u)
    if args.write_sigma_v:
        write_matrix(sv, args.write_sigma_v)
    print(json.dumps({"out": args.out, "dims": {"T": args.T, "p": args.p, "q": args.q}, "law": law.name}))


COMMANDS = {
    "test": _cmd_test,
    "boot": _cmd_boot,
    "noise-test": _cmd_noise,
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "gen": _cmd_gen,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.cmd](args)
    except (UsageError, FormatError, FileNotFoundError) as exc:
        print(f"kronlss {args.cmd}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, YpError, EstimationError, IdentifiabilityError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"kronlss {args.cmd}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # invalid inputs that parsed fine (non-PD null, dimension mismatch, bad law) are numeric/model failures
        print(f"kronlss {args.cmd}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
