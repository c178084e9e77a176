"""Command-line front end: sweeps, figure data, comparisons and a quick self-test.

Exit codes: 0 success, 1 a trend or comparison check failed, 2 bad usage or config.
"""
from __future__ import annotations

import argparse
import contextlib
import math
import sys
import warnings

from . import __version__
from .params import (ParameterError, default_params, linear_to_db, load_params, render, validate,
                     with_overrides)
from .quadrature import QuadratureSettings
from .simulator import McSettings
from .stochgeom import Window
from .sweep import (LAPLACE_OUTPUTS, OUTPUTS, SweepSpec, compare_rows, parse_grid, parse_list,
                    read_csv, run_sweep, split_methods, write_csv)

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parse_set(items):
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            out[key.strip()] = int(val)
        except ValueError:
            try:
                out[key.strip()] = float(val)
            except ValueError:
                raise UsageError(f"--set {key}: {val!r} is not a number") from None
    return out


def _base_params(args):
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                params = load_params(fh.read().decode("utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    else:
        params = default_params()
    return with_overrides(params, _parse_set(args.set))


def _methods(name):
    return ("analytic", "mc") if name == "both" else (name,)


def _mc(args):
    return McSettings(trials=args.trials, seed=args.seed, window=Window(args.window_m),
                      workers=1)


def _settings(args):
    return QuadratureSettings(rtol=args.rtol)


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _report_stream(args):
    # keep stdout clean for CSV when no file was given
    return sys.stderr if args.out in (None, "-") else sys.stdout


def _params_header(params):
    return ["parameters (config units):"] + ["  " + line for line in render(params).splitlines()]


# --- sub-commands --------------------------------------------------------------------------

def cmd_sweep(args):
    base = _base_params(args)
    outputs = tuple(o.strip() for o in args.outputs.split(",") if o.strip())
    gammas = parse_list(args.gamma_db) if args.gamma_db else [linear_to_db(base.gamma)]
    spec = SweepSpec(base, args.key, tuple(parse_grid(args.grid)), outputs,
                     _methods(args.method), tuple(gammas), _mc(args),
                     vs=tuple(parse_list(args.v)) if args.v else (), w0=args.w0,
                     timing=args.timing, settings=_settings(args))
    rows = run_sweep(spec, workers=args.workers, quiet=True)
    header = [f"sweep of {spec.key} over {len(spec.grid)} points",
              f"methods: {', '.join(spec.methods)}; mc trials {spec.mc.trials}, seed "
              f"{spec.mc.seed}, window {spec.mc.window.radius:g} m"] + _params_header(base)
    with _output(args.out) as fh:
        write_csv(rows, fh, header)
    n_err = sum(1 for r in rows if r["error"])
    rep = _report_stream(args)
    print(f"{len(rows)} rows written" + (f", {n_err} with errors" if n_err else ""), file=rep)
    if "mc" in spec.methods and "analytic" in spec.methods:
        report = compare_rows(*split_methods(rows), abs_tol=args.abs_tol)
        print(report.summary(), file=rep)
        return EXIT_OK if report.passed else EXIT_CHECK
    return EXIT_OK


def cmd_figure(args):
    from .figures import RECIPES, header_lines, reproduce_figure

    ids = list(RECIPES) if args.fig_id == "all" else [args.fig_id]
    if args.fig_id != "all" and args.fig_id not in RECIPES:
        raise UsageError(f"unknown figure {args.fig_id!r}; choose from {', '.join(RECIPES)}")
    base = _base_params(args)
    methods = _methods(args.method)
    mc = _mc(args)
    rep = _report_stream(args)
    ok = True
    rows_all, header = [], []
    for fig_id in ids:
        res = reproduce_figure(fig_id, base, methods, mc, workers=args.workers,
                               settings=_settings(args), timing=args.timing)
        rows_all.extend(res.rows)
        header += header_lines(res.recipe, base, methods, mc)
        print(res.report(), file=rep)
        ok &= res.passed
    with _output(args.out) as fh:
        write_csv(rows_all, fh, header + _params_header(base))
    print("ALL TRENDS PASS" if ok else "SOME TRENDS FAIL", file=rep)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_compare(args):
    try:
        with open(args.analytic_csv, encoding="utf-8") as fa, \
                open(args.mc_csv, encoding="utf-8") as fm:
            a_rows, m_rows = read_csv(fa), read_csv(fm)
    except OSError as exc:
        raise UsageError(f"cannot read CSV: {exc}") from None
    report = compare_rows(a_rows, m_rows, abs_tol=args.abs_tol, rel_tol=args.rel_tol)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_validate_config(args):
    params = _base_params(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        validate(params)
    sys.stdout.write(render(params))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return EXIT_OK


def selftest_checks(params=None):
    """Fast trivial-limit checks as (name, passed, detail) tuples."""
    from . import analysis
    from .analysis import LaplaceKind
    from .channel import interferer_gain_pmf, serving_gain_pmf
    from .params import CELLULAR, D2D

    params = default_params() if params is None else params
    # the integrands are smooth here; a loose tolerance keeps the suite fast and
    # still resolves the limits to well below 1e-6
    q = QuadratureSettings(rtol=1e-3)
    results = []

    def add(name, ok, detail=""):
        results.append((name, bool(ok), detail))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p_val = analysis.p_d2d(params, settings=q)
        for kind in LaplaceKind:
            val = analysis.laplace(kind, 0.0, params, p_val, w0=params.sigma_d, settings=q)
            add(f"laplace {kind.name} at v=0 is 1", abs(val - 1) <= 1e-12, f"{val!r}")
        for mode, fn in (("cellular", analysis.outage_cellular), ("d2d", analysis.outage_d2d)):
            lo = fn(1e-12, params, p_val, settings=q).value
            hi = fn(1e14, params, p_val, settings=q).value
            add(f"{mode} outage at -120 dB threshold ~ 0", lo <= 1e-6, f"{lo:.3g}")
            add(f"{mode} outage at +140 dB threshold ~ 1", hi >= 1 - 1e-6, f"{1 - hi:.3g} short")
        val = analysis.p_d2d(params.replace(t_d=0.0), settings=q)
        add("p_d2d with zero bias is 0", val == 0.0, f"{val!r}")
        # the identities below compare two routes through the same integrals, so they
        # hold exactly at any quadrature tolerance; a coarse one saves time
        coarse = QuadratureSettings(rtol=1e-1)
        for mode, fn in (("cellular", analysis.outage_cellular), ("d2d", analysis.outage_d2d)):
            plain = fn(params.gamma, params, p_val, settings=coarse).value
            be = analysis.outage_with_beam_error(params.gamma, mode, params.replace(sigma_be=0.0),
                                                 p_val, settings=coarse).value
            add(f"{mode} beam-error outage at zero error equals plain outage",
                abs(plain - be) <= 1e-12, f"{abs(plain - be):.3g}")
        # no D2D transmitters -> the cross-mode factor is exactly 1 under underlay
        over = analysis.outage_cellular(params.gamma, params.replace(beta=0), p_val,
                                        settings=coarse).value
        pinned = analysis.outage_cellular(params.gamma, params.replace(beta=1), 0.0,
                                          settings=coarse).value
        add("overlay cellular outage equals underlay with cross-mode factor 1",
            abs(over - pinned) <= 1e-12, f"{abs(over - pinned):.3g}")
        for kind in (CELLULAR, D2D):
            s1 = sum(interferer_gain_pmf(kind, params).probs)
            s2 = sum(serving_gain_pmf(kind, math.radians(5), params).probs)
            add(f"{kind} gain pmfs sum to 1", abs(s1 - 1) <= 1e-12 and abs(s2 - 1) <= 1e-12,
                f"{s1!r}, {s2!r}")
    return results


def cmd_selftest(args):
    results = selftest_checks(_base_params(args))
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    ok = all(r[1] for r in results)
    print("SELFTEST PASS" if ok else "SELFTEST FAIL")
    return EXIT_OK if ok else EXIT_CHECK


# --- parser -------------------------------------------------------------------------------

def _common(p, mc=True):
    p.add_argument("--config", help="flat TOML file of config keys")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    if not mc:
        return
    p.add_argument("--method", choices=("analytic", "mc", "both"), default="analytic")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--window-m", type=float, default=1000.0,
                   help="simulation disc radius in metres")
    p.add_argument("--rtol", type=float, default=1e-6, help="quadrature relative tolerance")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--timing", action="store_true",
                   help="fill the wall_ms column (makes output run-dependent)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="d2dmmwave",
        description="Outage, mode selection and spectral efficiency of clustered D2D users "
                    "in a mmWave uplink.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="sweep one config key and write CSV rows")
    _common(p)
    p.add_argument("--key", required=True, help="config key to sweep, e.g. n_bar")
    p.add_argument("--grid", required=True, help="'1,2,3', 'lin:A:B:N' or 'log:A:B:N'")
    p.add_argument("--outputs", default="outage_c,outage_d",
                   help="comma list from: " + ", ".join(OUTPUTS))
    p.add_argument("--gamma-db", help="comma list of SINR thresholds in dB "
                                      "(default: the config's gamma_db)")
    p.add_argument("--v", help="comma list of Laplace arguments for "
                               + "/".join(o.split("_", 1)[1] for o in LAPLACE_OUTPUTS))
    p.add_argument("--w0", type=float,
                   help="receiver to cluster-centre distance for laplace_dd_intra (default sigma_d)")
    p.add_argument("--abs-tol", type=float, default=0.03)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("figure", help="regenerate a figure's data and check its trends")
    p.add_argument("fig_id", help="fig2 ... fig9, or 'all'")
    _common(p)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("compare", help="compare an analytic CSV with a simulated one")
    p.add_argument("analytic_csv")
    p.add_argument("mc_csv")
    p.add_argument("--abs-tol", type=float, default=0.03)
    p.add_argument("--rel-tol", type=float, default=0.03,
                   help="relative tolerance for ase and pf_objective rows")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate-config", help="check a config and print it in full")
    _common(p, mc=False)
    p.set_defaults(func=cmd_validate_config)

    p = sub.add_parser("selftest", help="run the fast limiting-case checks")
    _common(p, mc=False)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if hasattr(args, "trials") and (args.trials < 1 or args.workers < 1):
            raise UsageError("--trials and --workers must be >= 1")
        return args.func(args)
    except (UsageError, ParameterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
