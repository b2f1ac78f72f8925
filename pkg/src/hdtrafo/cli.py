"""Command-line interface: estimate, test, simulate, qq.

Exit codes: 0 success, 2 invalid input, 3 estimation or study failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .estimator import SolverConfig, estimate, p_value, test_null
from .exceptions import ConfigError, DataParseError, HDTrafoError, TransformDomainError
from .io import qq_data, read_csv, read_result, sup_deviation, write_qq, write_result
from .lasso import LassoConfig
from .nuisance import NUISANCE_LASSO, fit_at_theta
from .simulate import load_configs, run_study, write_report_csv
from .transform import get_family

log = logging.getLogger("hdtrafo")

EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 2, 3


class InputError(Exception):
    """Invalid flags or data detected before estimation starts."""


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _data_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--response", required=True, help="name of the response column")
    p.add_argument("--drop", nargs="*", default=[], metavar="COL", help="columns to ignore")
    p.add_argument("--family", default="boxcox", choices=["boxcox", "yeo-johnson"])


def _estimation_args(p):
    _data_args(p)
    p.add_argument("--theta-min", type=float, help="lower end of the search interval")
    p.add_argument("--theta-max", type=float, help="upper end of the search interval")
    p.add_argument("--grid", type=int, default=41, help="grid points of the score scan (default 41)")
    p.add_argument("--bootstrap", type=int, default=100, help="bootstrap replicates; 0 skips inference")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument(
        "--plain-lasso",
        action="store_true",
        help="use penalized lasso coefficients instead of the least-squares refit on the selected support",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdtrafo",
        description="Estimation of and inference on the transformation parameter of a "
        "high-dimensional transformation model.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "estimate",
        help="estimate theta with a bootstrap confidence interval",
        description="The reported confidence interval is centered at the estimate.",
    )
    _estimation_args(p)
    p.add_argument("--out", required=True, help="JSON result file")

    p = sub.add_parser(
        "test",
        help="test H0: theta = NULL",
        description="Two-sided level-alpha test based on the bootstrap variance. "
        "H0 is rejected when NULL lies outside the interval centered at the estimate.",
    )
    _estimation_args(p)
    p.add_argument("--null", type=float, required=True, help="hypothesized theta")
    p.add_argument("--out", help="optional JSON result file")

    p = sub.add_parser("simulate", help="run Monte Carlo studies from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=_positive_int, help="override the number of replications")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True, help="CSV table; per-replication detail goes to the same name with .json")

    p = sub.add_parser("qq", help="QQ plot data of standardized residuals")
    _data_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta", type=float)
    g.add_argument("--theta-hat-from", metavar="RESULT.json", help="take theta from an estimate result")
    p.add_argument("--out-prefix", required=True)
    return parser


def _load(args, theta_bounds=None):
    family = get_family(args.family, theta_bounds)
    try:
        ds = read_csv(args.data, args.response, args.drop)
    except DataParseError as exc:
        raise InputError(f"reading data: {exc}") from exc
    try:
        family.check_y(ds.y)
    except TransformDomainError as exc:
        raise InputError(f"response not valid for {family.kind}: {exc}") from exc
    return family, ds


def _resolve_estimation(args):
    bounds = None
    if args.theta_min is not None or args.theta_max is not None:
        lo, hi = get_family(args.family).theta_domain
        lo = lo if args.theta_min is None else args.theta_min
        hi = hi if args.theta_max is None else args.theta_max
        bounds = (lo, hi)
    try:
        solver = SolverConfig(grid_points=args.grid, theta_bounds=bounds)
    except ValueError as exc:
        raise InputError(f"solver settings: {exc}") from exc
    if not 0 < args.alpha < 1:
        raise InputError("--alpha must lie in (0, 1)")
    if args.bootstrap < 0 or args.bootstrap == 1:
        raise InputError("--bootstrap must be 0 or at least 2")
    lasso = LassoConfig(loading_iters=2) if args.plain_lasso else NUISANCE_LASSO
    return solver, lasso


def _echo(args, **extra) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("quiet",)}
    cfg.update(extra)
    return cfg


def _run_estimate(args, need_test=False):
    solver, lasso = _resolve_estimation(args)
    family = get_family(args.family, solver.theta_bounds)
    if need_test:
        lo, hi = solver.bounds(family)
        if not lo <= args.null <= hi:
            raise InputError(f"--null {args.null} lies outside the search interval [{lo}, {hi}]")
        if args.bootstrap == 0:
            raise InputError("the test needs --bootstrap of at least 2")
    family, ds = _load(args, solver.theta_bounds)
    config = _echo(args, lasso=asdict(lasso), solver=asdict(solver), n=ds.n, p=ds.p, version=__version__)
    log.info("resolved configuration: %s", json.dumps(config, sort_keys=True))
    result = estimate(
        ds, family, lasso, solver, n_boot=args.bootstrap, alpha=args.alpha, seed=args.seed, threads=args.threads
    )
    print(f"theta_hat = {result.theta_hat:.8f}")
    print(f"mean score at theta_hat = {result.mean_psi_at_hat:.3e}")
    if result.ci is not None:
        print(f"bootstrap sd = {math.sqrt(result.sigma_boot):.6g}  ({result.n_boot} replicates, {result.boot_failures} failed)")
        print(f"{100 * (1 - args.alpha):g}% CI = [{result.ci[0]:.8f}, {result.ci[1]:.8f}]")
    if result.sigma_plug is not None:
        print(f"plug-in sd = {math.sqrt(result.sigma_plug):.6g}")
    if result.multi_root:
        print("warning: the score changes sign more than once on the grid")
    return result, config


def cmd_estimate(args) -> int:
    result, config = _run_estimate(args)
    write_result(result, args.out, extra={"cli": config})
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_test(args) -> int:
    result, config = _run_estimate(args, need_test=True)
    reject, z = test_null(result, args.null)
    pv = p_value(z)
    print(f"H0: theta = {args.null:g}  z = {z:.4f}  p-value = {pv:.4g}  -> {'reject' if reject else 'accept'}")
    if args.out:
        extra = {"cli": config, "test": {"null": args.null, "z": z, "p_value": pv, "reject": reject}}
        write_result(result, args.out, extra=extra)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        configs = load_configs(args.config)
    except ConfigError as exc:
        raise InputError(f"config: {exc}") from exc
    overrides = {}
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    configs = [c.replace(**overrides) for c in configs]
    log.info("resolved configuration: %s", json.dumps([asdict(c) for c in configs]))
    reports = []
    for cfg in configs:
        rep = run_study(cfg, threads=args.threads)
        reports.append(rep)
        row = rep.row()
        print(
            f"{cfg.name or cfg.family}: estimator={row['estimator']:.6f} acceptance={row['acceptance_rate']:.3f} "
            f"mae={row['mae']:.4f} rel_mse={row['rel_mse']:.4f} failures={row['failures']}"
        )
    write_report_csv(reports, args.out)
    detail = Path(args.out).with_suffix(".json")
    with detail.open("w", encoding="utf-8") as fh:
        json.dump({"version": __version__, "studies": [r.to_dict() for r in reports]}, fh, indent=2)
        fh.write("\n")
    print(f"wrote {args.out} and {detail}")
    return EXIT_OK


def cmd_qq(args) -> int:
    if args.theta_hat_from:
        try:
            theta = float(read_result(args.theta_hat_from)["theta_hat"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise InputError(f"cannot read theta_hat from {args.theta_hat_from}: {exc}") from exc
    else:
        theta = args.theta
    family, ds = _load(args)
    log.info("resolved configuration: %s", json.dumps(_echo(args, theta=theta, version=__version__), sort_keys=True))
    # theta = 1 is an affine map of y in both families, i.e. the untransformed scale
    out = {}
    for label, th in (("theta", theta), ("zero", 0.0), ("identity", 1.0)):
        nuis = fit_at_theta(ds, family, th)
        pts = qq_data(ds.y, family, th, nuis)
        path = f"{args.out_prefix}_{label}.csv"
        write_qq(pts, path)
        out[label] = sup_deviation(pts)
        print(f"theta = {th:g} ({label}): sup deviation = {out[label]:.4f}  -> {path}")
    return EXIT_OK


COMMANDS = {"estimate": cmd_estimate, "test": cmd_test, "simulate": cmd_simulate, "qq": cmd_qq}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DataParseError, ConfigError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HDTrafoError as exc:
        print(f"error: estimation failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
