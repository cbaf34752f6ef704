"""Command line entry point: ``wishart-mle {simulate,estimate,laplace,experiment,mse-table}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, laplace
from .exceptions import NumericalFailure, ValidationError, WishartError
from .io import dump_json, read_path_csv, stats_to_dict, write_path_csv
from .mle import VARIANTS, estimate, full_pipeline
from .model import WishartSpec
from .pathfun import path_functionals
from .sim import RngStream, path_sample

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


def _load_json(arg: str):
    """Inline JSON or a path to a JSON file."""
    p = Path(arg)
    text = p.read_text() if p.exists() else arg
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse JSON argument: {exc}") from None


def _matrix(arg: str) -> np.ndarray:
    return np.asarray(_load_json(arg), float)


def cmd_simulate(args) -> int:
    spec = WishartSpec.from_dict(_load_json(args.spec))
    path = path_sample(spec, args.T, args.N, RngStream(args.seed, args.stream))
    write_path_csv(path, args.out)
    if path.meta.get("euler_fallbacks"):
        print(f"euler fallback steps: {path.meta['euler_fallbacks']}", file=sys.stderr)
    return EXIT_OK


def cmd_estimate(args) -> int:
    path = read_path_csv(args.path)
    if args.variant == "pipeline":
        a = None if args.a is None else _matrix(args.a)
        est = full_pipeline(path, a)
    else:
        need_ito = args.variant in ("joint_gen", "b_gen")
        stats = path_functionals(path, qcov=False, ito=need_ito)
        est = estimate(stats, args.variant, alpha=args.alpha)
        if args.stats_out:
            dump_json(stats_to_dict(stats), args.stats_out)
    out = est.to_dict()
    if args.out:
        dump_json(out, args.out)
    else:
        print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_laplace(args) -> int:
    spec = WishartSpec.from_dict(_load_json(args.spec))
    v, w = _matrix(args.v), _matrix(args.w)
    cert = laplace.domain_check(v, w, spec.b, spec.a)
    out = {"certificate": None if cert is None else cert.kind}
    if spec.is_canonical:
        out["value"] = laplace.joint_laplace(spec, v, w, args.t)
    else:
        out["value"] = laplace.joint_laplace_general(spec, v, w, args.t)
    if args.oracle:
        out["riccati"] = laplace.riccati_oracle(spec, v, w, args.t)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_experiment(args) -> int:
    data = _load_json(args.config)
    if args.out:
        data["out_dir"] = args.out
    cfg = harness.ExperimentConfig.from_dict(data)
    report = harness.run_experiment(cfg)
    print(json.dumps({"failure_rate": report.failure_rate, "ks": report.ks,
                      "laplace_z": [r.get("z") for r in report.laplace_rows]}, sort_keys=True))
    return EXIT_NUMERIC if report.failure_rate > 0.5 else EXIT_OK


def cmd_mse_table(args) -> int:
    data = _load_json(args.config)
    data.setdefault("variant", "pipeline")
    data.setdefault("N", min(args.N))
    cfg = harness.ExperimentConfig.from_dict(data)
    result = harness.mse_table(cfg, args.N, out_dir=args.out)
    total = cfg.M * len(args.N)
    failures = sum(r["failures"] for r in result["rows"])
    print(json.dumps({"a_error_fit": result["a_error_fit"], "failures": failures}, sort_keys=True))
    return EXIT_NUMERIC if failures > 0.5 * total else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wishart-mle", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample one exact path and write it as CSV")
    s.add_argument("--spec", required=True, help="spec JSON (inline or file): x, alpha, b, a")
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate drift parameters from a path CSV")
    e.add_argument("--path", required=True)
    e.add_argument("--variant", choices=VARIANTS, default="joint_sym")
    e.add_argument("--alpha", type=float, help="known degree for the b-only variants")
    e.add_argument("--a", help="known diffusion factor for the pipeline variant (JSON)")
    e.add_argument("--stats-out")
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    lp = sub.add_parser("laplace", help="joint Laplace transform of (X_t, int X)")
    lp.add_argument("--spec", required=True)
    lp.add_argument("--v", required=True)
    lp.add_argument("--w", required=True)
    lp.add_argument("--t", type=float, required=True)
    lp.add_argument("--oracle", action="store_true", help="also integrate the Riccati system")
    lp.set_defaults(func=cmd_laplace)

    x = sub.add_parser("experiment", help="Monte Carlo experiment from a JSON config")
    x.add_argument("--config", required=True)
    x.add_argument("--out")
    x.set_defaults(func=cmd_experiment)

    m = sub.add_parser("mse-table", help="MSE against the number of time steps")
    m.add_argument("--config", required=True)
    m.add_argument("--N", type=int, nargs="+", required=True)
    m.add_argument("--out")
    m.set_defaults(func=cmd_mse_table)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, WishartError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
