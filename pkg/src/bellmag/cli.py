"""Command-line front end: ``bellmag <command> [options]``.

Exit codes: 0 success, 1 I/O failure, 2 usage or config error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

from . import core_model as cm
from . import dynamics as dyn
from . import feasibility as fz
from . import optimizer as opt
from . import oracle_suite

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3
DEFAULT_SEED = 20240601
SETTING_COLUMNS = ["alpha1_re", "alpha1_im", "alpha2_re", "alpha2_im", "beta1_re", "beta1_im", "beta2_re", "beta2_im"]


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return format(float(x) + 0.0, ".12g")  # + 0.0 folds -0 into 0


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def resolve_seed(arg_seed):
    if arg_seed is not None:
        return arg_seed
    env = os.environ.get("BELLMAG_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"BELLMAG_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _write_table(args, header, rows):
    """Serialise rows as CSV or JSON to ``--out`` (or stdout), all in one write."""
    buf = io.StringIO()
    if args.format == "json":
        json.dump([dict(zip(header, (float(v) if v != "" else None for v in map(_fmt, r)))) for r in rows], buf, indent=1)
        buf.write("\n")
    else:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    text = buf.getvalue()
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)


def _grid(lo, hi, step, name):
    try:
        return opt.SweepSpec(name, lo, hi, step).grid()
    except ValueError as exc:
        raise UsageError(f"--{name}-*: {exc}") from None


def _settings_cells(s: cm.MeasurementSettings):
    return list(s.as_real_imag())


def _check_budget(args):
    if args.parallel is not None and args.parallel < 1:
        raise UsageError("--parallel must be >= 1")


def cmd_sweep_g1tau(args) -> int:
    _check_budget(args)
    grid = _grid(args.g1tau_min, args.g1tau_max, args.g1tau_step, "g1tau")
    if any(not 0.0 <= T <= 1.0 for T in args.t_list):
        raise UsageError("--t-list values must lie in [0, 1]")
    if not 0.0 < args.eta <= 1.0:
        raise UsageError("--eta must lie in (0, 1]")
    try:
        rows = opt.sweep_g1tau(args.t_list, grid, eta=args.eta, budget=args.budget, parallel=args.parallel, warm_start=args.warm_start)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    header = ["g1tau", "T", "p", "S"] + SETTING_COLUMNS
    _write_table(args, header, [[r.g1tau, r.T, r.p, r.S] + _settings_cells(r.settings) for r in rows])
    best = max(rows, key=lambda r: r.S)
    print(f"max S = {best.S:.6f} at g1tau = {best.g1tau:g}, T = {best.T:g} (p = {best.p:.4f})", file=sys.stderr)
    return EXIT_OK


def cmd_sweep_g2tau(args) -> int:
    _check_budget(args)
    grid = _grid(args.g2tau_min, args.g2tau_max, args.g2tau_step, "g2tau")
    if any(not 0.0 <= p < 1.0 for p in args.p_list):
        raise UsageError("--p-list values must lie in [0, 1)")
    rows = opt.sweep_g2tau(args.p_list, grid, budget=args.budget, parallel=args.parallel, warm_start=args.warm_start)
    header = ["g2tau", "p", "T", "S"] + SETTING_COLUMNS
    _write_table(args, header, [[r.g2tau, r.p, r.T, r.S] + _settings_cells(r.settings) for r in rows])
    return EXIT_OK


def cmd_contour_eta(args) -> int:
    _check_budget(args)
    g1 = _grid(args.g1tau_min, args.g1tau_max, args.g1tau_step, "g1tau")
    etas = _grid(args.eta_min, args.eta_max, args.eta_step, "eta")
    if etas[0] <= 0 or etas[-1] > 1:
        raise UsageError("--eta-* must stay within (0, 1]")
    rows = opt.contour_eta(g1, etas, budget=args.budget, parallel=args.parallel, warm_start=args.warm_start)
    header = ["g1tau", "eta", "p", "S"] + SETTING_COLUMNS
    _write_table(args, header, [[r.g1tau, r.eta, r.p, r.S] + _settings_cells(r.settings) for r in rows])
    thr = opt.eta_threshold(rows)
    best_at_thr = max((r for r in rows if r.eta == thr), key=lambda r: r.S) if thr is not None else None
    summary = {
        "eta_threshold": thr,
        "S_at_threshold": None if best_at_thr is None else best_at_thr.S,
        "g1tau_at_threshold": None if best_at_thr is None else best_at_thr.g1tau,
        "max_S": max(r.S for r in rows),
    }
    line = "eta_threshold=" + ("none" if thr is None else f"{thr:g}")
    print(line, file=sys.stderr)
    if args.summary:
        with open(args.summary, "w") as fh:
            json.dump(summary, fh, indent=1)
            fh.write("\n")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    seed = resolve_seed(args.seed)
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    results = oracle_suite.run_suite(samples=args.samples, seed=seed, tol=args.tol)
    failed = False
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:18s} n={r.count:4d} max_dev={r.max_dev:.3e} tol={r.tol:.1e} {status}")
        if not r.passed:
            failed = True
            print(f"  failing tuple: {json.dumps({k: [v.real, v.imag] if isinstance(v, complex) else v for k, v in r.worst.items()})}")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_dynamics(args) -> int:
    kind = args.kind
    if args.g_ratio < 0 or args.kappa <= 0 or args.gamma < 0 or args.n_th < 0:
        raise UsageError("rates and n_th must be non-negative (kappa > 0)")
    m_occ0 = args.m_occ0 if args.m_occ0 is not None else (1.0 if kind == "beamsplitter" else 0.0)
    params = dyn.LangevinParams(G=args.g_ratio * args.kappa, kappa=args.kappa, gamma=args.gamma * args.kappa, n_th=args.n_th, pulse_kind=kind)
    if args.tau is not None:
        tau = args.tau / args.kappa
        gtau = params.G_eff * tau
    else:
        gtau = args.gtau if args.gtau is not None else (0.25 if kind == "squeezer" else 1.5)
        if params.G_eff == 0:
            raise UsageError("G = 0 needs an explicit --tau")
        tau = gtau / params.G_eff
    dt = None if args.dt is None else args.dt / args.kappa
    try:
        states = dyn.time_series(params, tau, samples=args.samples, dt=dt, m_occ0=m_occ0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    except dyn.DynamicsError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    _write_table(args, ["t", "occ_cav", "occ_mag", "out_mode_occ"], [[s.time, s.cav_occ, s.mag_occ, s.out_occ] for s in states])
    final = states[-1]
    mag_ref, out_ref = dyn.closed_form(kind, gtau, m_occ0)
    print(f"{kind}: G/kappa = {args.g_ratio:g}, G~tau = {gtau:.6g}, tau = {tau:.6g}", file=sys.stderr)
    for label, got, ref in (("magnon", final.mag_occ, mag_ref), ("output mode", final.out_occ, out_ref)):
        rel = abs(got - ref) / ref if ref else abs(got - ref)
        kind_dev = "relative" if ref else "absolute"
        print(f"  {label:12s} integrated {got:.6g}  adiabatic {ref:.6g}  {kind_dev} deviation {rel:.3e}", file=sys.stderr)
    return EXIT_OK


def cmd_feasibility(args) -> int:
    if (args.config is None) == (args.preset is None):
        raise UsageError("give exactly one of a config path or --preset")
    path = fz.preset_path(args.preset) if args.preset else args.config
    params = fz.load_config(path)
    report = fz.analyze(params, weak_max=args.weak_max, decoherence_max=args.decoherence_max, overcoupling_max=args.overcoupling_max, optimize=args.optimize)
    if args.json:
        sys.stdout.write(json.dumps(report.to_dict(), indent=1, default=_json_default) + "\n")
    else:
        print(report.format_text())
    return EXIT_OK


def _json_default(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(type(x))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default: $BELLMAG_SEED or a fixed value)")
    common.add_argument("--parallel", type=int, default=None, help="worker processes (default: logical cores)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", default=None, help="output file (default: stdout)")

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--budget", type=_positive_int, default=4000, help="Nelder-Mead evaluations per start")
    sweep.add_argument("--warm-start", action="store_true", help="seed each point with its neighbour's optimum")

    parser = argparse.ArgumentParser(prog="bellmag", description="CHSH violation with photon pairs from a two-pulse optomagnonic protocol.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-g1tau", parents=[common, sweep], help="optimal S versus the squeezing pulse area")
    p.add_argument("--t-list", type=_float_list, default=list(opt.DEFAULT_T_LIST))
    p.add_argument("--g1tau-min", type=float, default=opt.G1TAU_SPEC.min)
    p.add_argument("--g1tau-max", type=float, default=opt.G1TAU_SPEC.max)
    p.add_argument("--g1tau-step", type=float, default=opt.G1TAU_SPEC.step)
    p.add_argument("--eta", type=float, default=1.0, help="detection efficiency (only with T = 1)")
    p.set_defaults(func=cmd_sweep_g1tau)

    p = sub.add_parser("sweep-g2tau", parents=[common, sweep], help="optimal S versus the read-out pulse area")
    p.add_argument("--p-list", type=_float_list, default=list(opt.DEFAULT_P_LIST))
    p.add_argument("--g2tau-min", type=float, default=opt.G2TAU_SPEC.min)
    p.add_argument("--g2tau-max", type=float, default=opt.G2TAU_SPEC.max)
    p.add_argument("--g2tau-step", type=float, default=opt.G2TAU_SPEC.step)
    p.set_defaults(func=cmd_sweep_g2tau)

    p = sub.add_parser("contour-eta", parents=[common, sweep], help="optimal S on the (g1tau, eta) grid")
    p.add_argument("--g1tau-min", type=float, default=opt.G1TAU_SPEC.min)
    p.add_argument("--g1tau-max", type=float, default=opt.G1TAU_SPEC.max)
    p.add_argument("--g1tau-step", type=float, default=opt.G1TAU_SPEC.step)
    p.add_argument("--eta-min", type=float, default=opt.ETA_SPEC.min)
    p.add_argument("--eta-max", type=float, default=opt.ETA_SPEC.max)
    p.add_argument("--eta-step", type=float, default=opt.ETA_SPEC.step)
    p.add_argument("--summary", default=None, help="write the threshold summary as JSON here")
    p.set_defaults(func=cmd_contour_eta)

    p = sub.add_parser("oracle-check", parents=[common], help="closed forms against the Fock-basis oracle")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("dynamics", parents=[common], help="Langevin moment time series for one pulse")
    p.add_argument("--kind", choices=dyn.KINDS, default="squeezer")
    p.add_argument("--g-ratio", type=float, default=0.02, help="G/kappa")
    p.add_argument("--gtau", type=float, default=None, help="adiabatic pulse area G~tau (default 0.25 / 1.5)")
    p.add_argument("--tau", type=float, default=None, help="pulse length in units of 1/kappa (overrides --gtau)")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0, help="magnon decay in units of kappa")
    p.add_argument("--n-th", type=float, default=0.0)
    p.add_argument("--m-occ0", type=float, default=None, help="initial magnon occupation (default 0 / 1)")
    p.add_argument("--samples", type=_positive_int, default=200)
    p.add_argument("--dt", type=float, default=None, help="step in units of 1/kappa")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("feasibility", parents=[common], help="map experimental numbers to p and T")
    p.add_argument("config", nargs="?", default=None, help="experiment config JSON")
    p.add_argument("--preset", choices=("yig",), default=None)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--optimize", action="store_true", help="also report the optimal S")
    p.add_argument("--weak-max", type=float, default=fz.WEAK_COUPLING_MAX)
    p.add_argument("--decoherence-max", type=float, default=fz.DECOHERENCE_MAX)
    p.add_argument("--overcoupling-max", type=float, default=fz.OVERCOUPLING_MAX)
    p.set_defaults(func=cmd_feasibility)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bellmag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except fz.ConfigError as exc:
        print(f"bellmag: config error: {exc}", file=sys.stderr)
        if exc.keys:
            print(f"offending keys: {', '.join(exc.keys)}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"bellmag: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
