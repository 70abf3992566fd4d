"""Command-line front end: ``subrayleigh <command> [flags]``.

Exit codes: 0 success, 2 usage error, 3 domain or validation error,
4 acceptance failure.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import io as sio
from .chernoff import commute_check, qcb_commuting, qcb_faint, qcb_general
from .diffraction import GaussianPsf, hg_covariance_exact, position_covariance
from .errors import DomainError
from .source import GridSpec, center, make_source, normalize

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_ACCEPT = 0, 2, 3, 4


def _version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0.1.0"


class UsageError(Exception):
    pass


def _angle(text: str) -> float:
    """Radians; accepts plain numbers or expressions like 'pi/8', '3*pi/8'."""
    s = str(text).strip().replace(" ", "")
    if s.replace(".", "", 1).replace("-", "", 1).replace("e", "", 1).isdigit():
        return float(s)
    allowed = set("0123456789.+-*/()epi")
    if not set(s) <= allowed:
        raise argparse.ArgumentTypeError(f"cannot parse angle {text!r}")
    try:
        return float(eval(s, {"__builtins__": {}}, {"pi": math.pi}))
    except Exception:
        raise argparse.ArgumentTypeError(f"cannot parse angle {text!r}") from None


def _float_list(text):
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _angle_list(text):
    return [_angle(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _emit(args, name, columns, rows, manifest):
    text = sio.render_csv(columns, rows, manifest)
    out = getattr(args, "out", None)
    if out:
        path = out if os.path.isabs(out) or os.path.dirname(out) else os.path.join(sio.output_dir(), out)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    try:
        sys.stdout.write(text)
        sys.stdout.flush()
    except BrokenPipeError:
        # reader closed early (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return text


def _manifest(args, command, seed=None):
    skip = {"func", "config", "command"}
    params = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return sio.RunManifest(command, params, seed, _version())


def _scenario(args):
    from .subdiff import ScenarioParams
    try:
        return ScenarioParams(args.v1x, args.v1y, args.v2x, args.v2y, args.theta1, args.theta2, args.i0, args.chi)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


# -- qcb -------------------------------------------------------------------

def _source_cov(path, args):
    cfg = sio.read_config(path)
    kind = cfg.pop("kind", "point")
    n = int(cfg.pop("n", 65))
    extent = float(cfg.pop("extent", 4.0))
    intensity = float(cfg.pop("intensity", 1.0))
    params = {k: float(v) for k, v in cfg.items()}
    grid = make_source(kind, GridSpec(n, extent), intensity, **params)
    if args.basis == "position":
        return position_covariance(grid, GaussianPsf(args.sigma), n_out=args.n_out)
    img = center(normalize(grid, args.scale_theta))
    return hg_covariance_exact(img, args.sigma, args.max_order)


def cmd_qcb(args):
    if args.cov1 and args.cov2:
        g1, g2 = sio.read_cov_csv(args.cov1), sio.read_cov_csv(args.cov2)
    elif args.source1 and args.source2:
        g1, g2 = _source_cov(args.source1, args), _source_cov(args.source2, args)
    else:
        raise UsageError("give either --cov1/--cov2 or --source1/--source2")
    if g1.dim != g2.dim:
        raise DomainError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    commuting = commute_check(g1, g2)
    method = args.method
    if method == "auto":
        method = "commuting" if commuting else "general"
    res = {"general": qcb_general, "commuting": qcb_commuting, "faint": qcb_faint}[method](g1, g2)
    rec = res.as_record()
    rows = [(rec["exponent"], rec["s_star"], rec["method"], commuting)]
    _emit(args, "qcb", ("exponent", "s_star", "method", "commuting"), rows, _manifest(args, "qcb"))
    return EXIT_OK


# -- subdiff ---------------------------------------------------------------

SUBDIFF_COLUMNS = ("xi_q", "s_star_q", "xi_spade", "s_star_spade", "theta0", "gap")


def subdiff_row(p, theta0=None):
    from .subdiff import qcb_subdiff, spade_exponent, spade_optimal
    q = qcb_subdiff(p)
    sp = spade_optimal(p) if theta0 is None else spade_exponent(p, theta0)
    g = (q.exponent - sp.exponent) / q.exponent if q.exponent > 0 else float("nan")
    return (q.exponent, q.s_star, sp.exponent, sp.s_star, sp.theta0_star, g)


def cmd_subdiff(args):
    p = _scenario(args)
    _emit(args, "subdiff", SUBDIFF_COLUMNS, [subdiff_row(p, args.theta0)], _manifest(args, "subdiff"))
    return EXIT_OK


# -- sweep -----------------------------------------------------------------

def cmd_sweep(args):
    from .sweeps import PRESETS, SWEEP_COLUMNS, SweepCase, run_sweep, theta0_grid
    theta0s = None
    if args.theta0_list:
        theta0s = np.array(_angle_list(args.theta0_list))
        if theta0s.size == 0:
            raise UsageError("empty theta0 grid")
    if args.preset == "custom":
        p = _scenario(args)
        if theta0s is None:
            if not args.theta0_step > 0 or not args.theta0_max >= args.theta0_min:
                raise UsageError("empty theta0 grid")
            theta0s = theta0_grid(p, args.theta0_step, args.theta0_min, args.theta0_max)
        cases = [SweepCase("custom", p)]
    else:
        cases = PRESETS[args.preset]()
    rows = run_sweep(cases, theta0s, threads=args.threads)
    _emit(args, "sweep", SWEEP_COLUMNS, rows, _manifest(args, "sweep"))
    return EXIT_OK


# -- simulate --------------------------------------------------------------

SIM_COLUMNS = ("N", "trials", "errors_h1", "errors_h2", "p_hat", "slope_fit", "xi_theory")


def cmd_simulate(args):
    from .simulator import SimConfig, estimate_error_exponent
    from .subdiff import spade_optimal
    p = _scenario(args)
    theta0 = args.theta0 if args.theta0 is not None else spade_optimal(p).theta0_star
    try:
        cfg = SimConfig(1, args.trials, args.seed, args.sampling_mode)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    est = estimate_error_exponent(p, theta0, cfg, _int_list(args.n_list), args.prefactor_power)
    rows = [r + (est.slope, est.xi_theory) for r in est.rows]
    man = _manifest(args, "simulate", seed=args.seed)
    man.params["theta0_used"] = theta0
    _emit(args, "simulate", SIM_COLUMNS, rows, man)
    sys.stderr.write(f"slope {est.slope:.6g} [{est.ci_low:.6g}, {est.ci_high:.6g}], "
                     f"xi(theta0) {est.xi_theory:.6g}, ratio {est.ratio:.4f}\n")
    return EXIT_OK


# -- oracle-check ----------------------------------------------------------

ORACLE_COLUMNS = ("index", "means1_0", "means1_1", "means2_0", "means2_1", "theta", "cutoff",
                  "s_points", "qcb_fock", "s_star_fock", "qcb_general", "deviation")


def oracle_rows(cutoff, perturb=0.0, tail_eps=None):
    from .fock import ORACLE_S_POINTS, acceptance_family, oracle_exponent
    rows = []
    for i, e in enumerate(acceptance_family()):
        xf, sf = oracle_exponent(e, cutoff) if tail_eps is None else oracle_exponent(e, cutoff, tail_eps=tail_eps)
        xg = qcb_general(e["gamma1"], e["gamma2"]).exponent + perturb
        rows.append((i, *e["means1"], *e["means2"], e["theta"], cutoff, ORACLE_S_POINTS, xf, sf, xg, abs(xg - xf)))
    return rows


def cmd_oracle_check(args):
    rows = oracle_rows(args.cutoff, args.perturb)
    man = _manifest(args, "oracle-check")
    if args.write_goldens:
        sio.write_csv(args.write_goldens, ORACLE_COLUMNS, rows, man)
    _emit(args, "oracle-check", ORACLE_COLUMNS, rows, man)
    worst = max(rows, key=lambda r: r[-1])
    status = EXIT_OK
    for c in _int_list(args.cutoff_sweep) if args.cutoff_sweep else []:
        # coarse cutoffs are allowed here so that convergence is visible
        dev = max(r[-1] for r in oracle_rows(c, args.perturb, tail_eps=1.0))
        sys.stderr.write(f"cutoff {c}: max deviation {dev:.3e}\n")
    sys.stderr.write(f"max deviation {worst[-1]:.3e} (tolerance {args.tol:.1e})\n")
    if worst[-1] > args.tol:
        sys.stderr.write(f"FAIL: pair {worst[0]} means1={worst[1:3]} means2={worst[3:5]} "
                         f"theta={worst[5]:.6g}\n")
        status = EXIT_ACCEPT
    return status


# -- parser ----------------------------------------------------------------

def _add_scenario(sp):
    for name in ("v1x", "v1y", "v2x", "v2y"):
        sp.add_argument(f"--{name}", type=float, default=None)
    sp.add_argument("--theta1", type=_angle, default=0.0)
    sp.add_argument("--theta2", type=_angle, default=0.0)
    sp.add_argument("--i0", type=float, default=1.0)
    sp.add_argument("--chi", type=float, default=0.1)


def build_parser():
    ap = argparse.ArgumentParser(prog="subrayleigh", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=_version())
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file supplying defaults for any flag")
    common.add_argument("--out", help=f"also write the CSV here (relative to ${sio.OUTPUT_DIR_ENV})")
    common.add_argument("--threads", type=int, default=1)
    sub = ap.add_subparsers(dest="command", required=True)

    q = sub.add_parser("qcb", parents=[common], help="quantum Chernoff exponent of two thermal states")
    q.add_argument("--cov1")
    q.add_argument("--cov2")
    q.add_argument("--source1")
    q.add_argument("--source2")
    q.add_argument("--sigma", type=float, default=1.0)
    q.add_argument("--scale-theta", type=float, default=1.0)
    q.add_argument("--basis", choices=("hg", "position"), default="hg")
    q.add_argument("--max-order", type=int, default=2)
    q.add_argument("--n-out", type=int, default=24)
    q.add_argument("--method", choices=("auto", "general", "commuting", "faint"), default="auto")
    q.set_defaults(func=cmd_qcb)

    s = sub.add_parser("subdiff", parents=[common], help="subdiffraction exponents and TRISPADE gap")
    _add_scenario(s)
    s.add_argument("--theta0", type=_angle, default=None, help="fixed demultiplexer angle (default: optimize)")
    s.set_defaults(func=cmd_subdiff)

    w = sub.add_parser("sweep", parents=[common], help="gap curves over theta0")
    w.add_argument("--preset", choices=("fig2", "fig3", "custom"), default="custom")
    _add_scenario(w)
    w.add_argument("--theta0-min", type=_angle, default=-math.pi / 2)
    w.add_argument("--theta0-max", type=_angle, default=math.pi / 2)
    w.add_argument("--theta0-step", type=_angle, default=math.pi / 720)
    w.add_argument("--theta0-list", default=None, help="comma-separated theta0 values")
    w.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo error exponent")
    _add_scenario(m)
    m.add_argument("--theta0", type=_angle, default=None)
    m.add_argument("--trials", type=int, default=20000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--n-list", default="200,400,800,1600")
    m.add_argument("--sampling-mode", choices=("closed_form_probs", "p_function_exact"),
                   default="closed_form_probs")
    m.add_argument("--prefactor-power", type=float, default=0.0)
    m.set_defaults(func=cmd_simulate)

    o = sub.add_parser("oracle-check", parents=[common], help="Fock-space oracle on the preregistered family")
    o.add_argument("--cutoff", type=int, default=25)
    o.add_argument("--tol", type=float, default=1e-5)
    o.add_argument("--perturb", type=float, default=0.0, help="add to the engine result (negative control)")
    o.add_argument("--cutoff-sweep", default=None, help="comma-separated cutoffs to report")
    o.add_argument("--write-goldens", default=None)
    o.set_defaults(func=cmd_oracle_check)
    return ap, sub


def _apply_config(ap, sub, argv):
    """Re-parse with config-file values as defaults so explicit flags win."""
    pre, _ = ap.parse_known_args(argv)
    if not getattr(pre, "config", None):
        return ap.parse_args(argv)
    try:
        cfg = sio.read_config(pre.config)
    except OSError as exc:
        ap.error(f"cannot read config: {exc}")
    sp = sub.choices[pre.command]
    known = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, val in cfg.items():
        if key not in known or key in ("config", "help"):
            ap.error(f"unknown config key {key!r} for command {pre.command}")
        action = known[key]
        defaults[key] = action.type(val) if action.type is not None else val
    sp.set_defaults(**defaults)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    ap, sub = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(ap, sub, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command in ("subdiff", "sweep", "simulate") and not (args.command == "sweep" and args.preset != "custom"):
        missing = [n for n in ("v1x", "v1y", "v2x", "v2y") if getattr(args, n) is None]
        if missing:
            sys.stderr.write(f"usage error: missing {', '.join('--' + m for m in missing)}\n")
            return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except sio.ParseError as exc:
        sys.stderr.write(f"parse error: {exc}\n")
        return EXIT_DOMAIN
    except DomainError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
