"""Command-line front end.

Every subcommand writes its table to ``--out`` (or stdout) in CSV or JSON and,
when ``--out`` is given, a manifest ``<out>.manifest.json`` echoing the
resolved configuration.  Exit codes: 0 success, 2 usage, 3 error budget
exceeded (partial results still written), 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import geometry, halfspace, kernels, serialize, trace
from .errors import BudgetExceededError, FracHeatError, InvalidParameterError, NumericError
from .sampler import PathConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BUDGET = 3
EXIT_NUMERIC = 4

# options that change nothing in the output and stay out of the manifest
_RUNTIME_ONLY = {"threads", "out", "config", "func"}


def _alpha(text: str) -> float:
    a = float(text)
    if not 0.0 < a < 2.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 2), got {text}")
    return a


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def _positive_float(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return x


def _common(p: argparse.ArgumentParser, paths=True):
    p.add_argument("--config", help="JSON file of option defaults (flags override)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--threads", type=_positive_int, default=None, help="worker cap (default: $FRACHEAT_THREADS or 1)")
    if paths:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--n-paths", type=_positive_int, default=20000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracheat", description="Heat trace of killed isotropic stable processes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel", help="free transition density p_t(r)")
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--alpha", type=_alpha, default=1.0)
    p.add_argument("--r", type=float, nargs="+", default=[0.0])
    p.add_argument("--t", type=_positive_float, default=1.0)
    p.add_argument("--method", choices=["auto", "closed", "fourier", "subordination"], default="auto")
    p.add_argument("--check-normalization", action="store_true")
    _common(p, paths=False)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("profile", help="half-space remainder profile f(q)")
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--alpha", type=_alpha, default=1.0)
    p.add_argument("--q-min", type=_positive_float, default=1e-3)
    p.add_argument("--q-max", type=_positive_float, default=20.0)
    p.add_argument("--n-q", type=_positive_int, default=60)
    p.add_argument("--dt", type=_positive_float, default=5e-3)
    p.add_argument("--refine", type=int, default=0, help="extra coarsened time grids")
    _common(p)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("c2", help="boundary constant C2 with error budget")
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--alpha", type=_alpha, default=1.0)
    p.add_argument("--tol", type=_positive_float, default=0.01)
    p.add_argument("--dt", type=_positive_float, default=5e-3)
    p.add_argument("--refine", type=int, default=0)
    _common(p)
    p.set_defaults(func=cmd_c2)

    for name, func, text in (
        ("trace", cmd_trace, "heat trace Z_D(t) on a t grid"),
        ("fit", cmd_fit, "second-term slope of the heat trace"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--domain", default="square")
        p.add_argument("--d", type=_positive_int, default=2)
        p.add_argument("--alpha", type=_alpha, default=1.0)
        p.add_argument("--t", type=_positive_float, nargs="+", default=None, help="times (default: shell-fraction grid)")
        p.add_argument("--n-t", type=_positive_int, default=6)
        p.add_argument("--steps", type=_positive_int, default=200, help="time steps per t")
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("shell", help="boundary shell volume ratio g(s)/s")
    p.add_argument("--domain", default="square")
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--s", type=_positive_float, nargs="+", default=None)
    _common(p, paths=False)
    p.set_defaults(func=cmd_shell)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(defaults, dict):
            parser.error("config file must hold a JSON object")
        sp = _subparser(parser, args.command)
        known = {a.dest for a in sp._actions}
        unknown = set(defaults) - known
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        sp.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# output plumbing


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _RUNTIME_ONLY}


def _emit(args, text: str, status: str, results=None):
    if args.out:
        serialize.write_text(args.out, text)
        man = serialize.manifest(args.command, _config(args), [Path(args.out).name], status, results)
        serialize.write_text(args.out + ".manifest.json", serialize.json_text(man))
    else:
        sys.stdout.write(text)


def _params(args) -> kernels.StableParams:
    return kernels.StableParams(args.d, args.alpha)


def _paths(args, dt=1e-3, t_max=1.0, refine=0) -> PathConfig:
    return PathConfig(dt=dt, t_max=t_max, seed=args.seed, n_paths=args.n_paths, refinement_levels=refine, threads=args.threads)


# ---------------------------------------------------------------------------
# commands


def cmd_kernel(args) -> int:
    params = _params(args)
    rows = []
    for r in args.r:
        if r < 0:
            raise InvalidParameterError("radii must be nonnegative")
        x = np.zeros(params.d)
        x[0] = r
        kv = kernels.free_density(params, args.t, x, np.zeros(params.d), method=args.method)
        rows.append({"r": r, "t": args.t, "p": kv.value, "abs_error_bound": kv.abs_error_bound})
    results = {}
    if args.check_normalization:
        results["normalization_residual"] = kernels.normalization_residual(params)
        print(f"normalization residual: {results['normalization_residual']:.3e}", file=sys.stderr)
    if args.format == "csv":
        text = serialize.csv_text(rows, ["r", "t", "p", "abs_error_bound"])
    else:
        text = serialize.json_text({"params": params, "rows": rows, **results})
    _emit(args, text, "ok", results)
    return EXIT_OK


def cmd_profile(args) -> int:
    params = _params(args)
    if args.q_max <= args.q_min:
        raise InvalidParameterError("--q-max must exceed --q-min")
    q = halfspace.default_q_grid(args.q_min, args.q_max, args.n_q)
    curve = halfspace.f_profile(params, q, _paths(args, dt=args.dt, refine=args.refine))
    if args.format == "csv":
        text = serialize.csv_text(serialize.profile_rows(curve), ["q", "f", "stderr"])
    else:
        text = serialize.json_text(serialize.profile_to_dict(curve))
    _emit(args, text, "ok")
    return EXIT_OK


def _c2_text(args, res) -> str:
    if args.format == "csv":
        return serialize.csv_text([serialize.jsonable(res)], serialize.C2_COLUMNS)
    return serialize.json_text(res)


def cmd_c2(args) -> int:
    params = _params(args)
    cfg = _paths(args, dt=args.dt, refine=args.refine)
    try:
        res = halfspace.estimate_C2(params, args.tol, cfg)
    except BudgetExceededError as exc:
        _emit(args, _c2_text(args, exc.partial), "budget_exceeded", {"message": str(exc)})
        print(f"fracheat: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    _emit(args, _c2_text(args, res), "ok")
    return EXIT_OK


def _domain(args):
    dom = geometry.domain_from_spec(args.domain, args.d)
    if not dom.bounded:
        raise InvalidParameterError("this command needs a bounded domain")
    return dom


def _curve(args):
    params = _params(args)
    dom = _domain(args)
    if dom.d != params.d:
        raise InvalidParameterError(f"domain has dimension {dom.d}, --d is {params.d}")
    ts = args.t if args.t else trace.default_t_grid(params, dom, args.n_t)
    curve = trace.trace_curve(params, dom, ts, _paths(args), n_steps=args.steps)
    return params, dom, curve


def cmd_trace(args) -> int:
    _, _, curve = _curve(args)
    if args.format == "csv":
        text = serialize.csv_text(curve.rows(), serialize.TRACE_COLUMNS)
    else:
        text = serialize.json_text(serialize.trace_curve_to_dict(curve))
    _emit(args, text, "ok")
    return EXIT_OK


def cmd_fit(args) -> int:
    _, _, curve = _curve(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", trace.UnstableFitWarning)
        slope, diag = trace.extract_second_term(curve)
    first = trace.extrapolate_first_term(curve)
    summary = {
        "slope": slope.value,
        "slope_error": slope.error,
        "stat_error": slope.stat_error,
        "window_spread": slope.spread,
        "boundary_measure": curve.boundary_measure,
        "c2_per_boundary": diag["c2_per_boundary"],
        "c2_per_boundary_error": diag["c2_per_boundary_error"],
        "first_term": first.mean,
        "first_term_error": first.std_error,
        "c1_volume": curve.c1_volume,
        "unstable_fit": bool(caught),
    }
    for w in caught:
        print(f"fracheat: warning: {w.message}", file=sys.stderr)
    if args.format == "csv":
        text = serialize.csv_text([summary], list(summary))
    else:
        text = serialize.json_text({"summary": summary, "diagnostics": diag, "curve": serialize.trace_curve_to_dict(curve)})
    _emit(args, text, "ok", summary)
    return EXIT_OK


def cmd_shell(args) -> int:
    dom = _domain(args)
    s = np.sort(np.asarray(args.s, dtype=float))[::-1] if args.s else np.geomspace(0.1, 1e-3, 9)
    prof = geometry.minkowski_ratio_curve(dom, s)
    rows = [{"s": a, "g": b, "ratio": c} for a, b, c in zip(prof.s, prof.g, prof.ratio)]
    if args.format == "csv":
        text = serialize.csv_text(rows, ["s", "g", "ratio"])
    else:
        text = serialize.json_text({"boundary_measure": prof.boundary_measure, "rows": rows})
    _emit(args, text, "ok", {"final_ratio": float(prof.ratio[-1]), "boundary_measure": prof.boundary_measure})
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"fracheat: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidParameterError, FracHeatError, ValueError) as exc:
        print(f"fracheat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
