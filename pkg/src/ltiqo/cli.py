"""Command-line interface: ``ltiqo <command> [flags]``.

Exit codes: 0 success, 1 non-convergence or failed check, 2 usage or
validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from .errors import LtiqoError
from .model import LtiqoSystem, PhqoSystem, build_error_system, phqo_to_ltiqo

__all__ = ["main", "build_parser"]

log = logging.getLogger("ltiqo")


class UsageError(Exception):
    pass


def _jobs(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("LTIQO_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"LTIQO_JOBS must be an integer, got {env!r}") from None
    return 1


def _load_fom(path) -> LtiqoSystem:
    from .io import load_system
    if not os.path.exists(path):
        raise UsageError(f"input file not found: {path}")
    sys_ = load_system(path)
    return phqo_to_ltiqo(sys_) if isinstance(sys_, PhqoSystem) else sys_


def _sampling(args):
    from .transfer import SamplingConfig
    cfg = SamplingConfig()
    cfg.omega_min, cfg.omega_max = args.omega_min, args.omega_max
    cfg.points_per_decade = args.points_per_decade
    cfg.grid_quad = tuple(args.grid_quad)
    cfg.refine_tol = args.refine_tol
    return cfg


def _add_sampling_flags(p):
    p.add_argument("--omega-min", type=float, default=1e-4, help="lower end of the frequency grid")
    p.add_argument("--omega-max", type=float, default=1e4, help="upper end of the frequency grid")
    p.add_argument("--points-per-decade", type=int, default=400)
    p.add_argument("--grid-quad", type=int, nargs=2, default=(120, 60), metavar=("N1", "N2"))
    p.add_argument("--refine-tol", type=float, default=1e-6)


# ------------------------------------------------------------------ commands

def cmd_reduce(args) -> int:
    from .io import dump_result
    from .optimizer import ReduceConfig, reduce, write_trace_csv

    fom = _load_fom(args.input)
    if not 1 <= args.order < fom.n:
        raise UsageError(f"--order must satisfy 1 <= r < n = {fom.n}")
    if args.config:
        with open(args.config) as fh:
            cfg = ReduceConfig.from_dict(json.load(fh))
    else:
        cfg = ReduceConfig()
    overrides = {"gamma_u_init": args.gamma_u, "gamma_l_init": args.gamma_l, "eps_gamma": args.eps_gamma,
                 "mode": args.mode, "N_r": args.retries, "seed": args.seed, "max_outer": args.max_outer,
                 "restarts": args.restarts, "eps_tol": args.eps_tol}
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    if args.literal_bisection:
        cfg.literal_bisection = True
    res = reduce(fom, args.order, args.scheme, cfg)
    if args.out:
        dump_result(res, args.out)
    if args.trace:
        write_trace_csv(res.trace, args.trace)
    print(f"order {args.order} ({res.scheme.value}): certified gamma = {res.gamma_certified:.6g}, "
          f"converged = {res.converged}, outer iterations = {len(res.trace)}, "
          f"|W1| = {res.freqs_final.sizes[0]}, |W2| = {res.freqs_final.sizes[1]}")
    return 0 if res.converged else 1


def cmd_hinf(args) -> int:
    from .io import load_system
    from .transfer import hinf_estimate

    sys_ = _load_fom(args.input)
    if args.rom:
        if not os.path.exists(args.rom):
            raise UsageError(f"ROM file not found: {args.rom}")
        rom = load_system(args.rom)
        rom = phqo_to_ltiqo(rom) if isinstance(rom, PhqoSystem) else rom
        sys_ = build_error_system(sys_, rom)
    est = hinf_estimate(sys_, _sampling(args))
    if args.json:
        print(json.dumps(est.as_dict(), default=lambda x: None if not math.isfinite(x) else x))
    else:
        print(f"linear part    {est.linear_part:.12g}  at w = {est.argmax_lin:.6g}")
        print(f"quadratic part {est.quadratic_part:.12g}  at (w1, w2) = "
              f"({est.argmax_quad[0]:.6g}, {est.argmax_quad[1]:.6g})")
        print(f"total          {est.total:.12g}")
        print(f"points sampled {est.certified_grid_size}")
    return 0


def _signal(args, m):
    from .timedomain import InputSignal, chirp_input, sine_product_input

    if args.input_signal == "sin":
        return sine_product_input(args.freq, m)
    if args.input_signal == "chirp":
        return chirp_input(args.T, args.chirp_f1, m)
    if not args.signal_file:
        raise UsageError("--input-signal file needs --signal-file")
    data = np.loadtxt(args.signal_file, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != m + 1:
        raise UsageError(f"signal file needs columns t,u0..u{m - 1}")
    t, U = data[:, 0], data[:, 1:]

    def u(tt):
        tt = np.atleast_1d(tt)
        return np.column_stack([np.interp(tt, t, U[:, k]) for k in range(m)])
    return InputSignal(u, 0.0, "file")


def cmd_simulate(args) -> int:
    from .io import load_system
    from .timedomain import check_gain_bound, l2_norm, simulate, write_signal_csv
    from .transfer import hinf_estimate

    fom = _load_fom(args.input)
    u = _signal(args, fom.m)
    _, y = simulate(fom, u, args.T, args.dt)
    print(f"||y||_2 = {l2_norm(y):.10g}")
    if args.out:
        write_signal_csv(y, args.out)
    if args.rom:
        rom = load_system(args.rom)
        rom = phqo_to_ltiqo(rom) if isinstance(rom, PhqoSystem) else rom
        est = hinf_estimate(build_error_system(fom, rom))
        rep = check_gain_bound(fom, rom, u, args.T, args.dt, est, args.tol)
        print(f"||y - y_r||_2 = {rep.lhs:.10g}  bound = {rep.rhs:.10g}  ratio = {rep.ratio:.4g}  "
              f"{'ok' if rep.ok else 'VIOLATED'}")
        return 0 if rep.ok else 1
    return 0


def cmd_grad_check(args) -> int:
    from .bench import random_ltiqo, random_phqo
    from .grad import GradContext, dKfrob2_full, dKfrob2_ph, dsigma1_full, dsigma1_ph, fd_gradient
    from .model import condense_ph
    from .param import Scheme, encode

    rng = np.random.default_rng(args.seed)
    scheme = Scheme.parse(args.scheme)
    worst: dict[str, float] = {}
    overall = 0.0
    for _ in range(args.instances):
        if scheme is Scheme.PH:
            fom = phqo_to_ltiqo(random_phqo(args.order + 3, args.inputs, rng))
            theta = encode(condense_ph(random_phqo(args.order, args.inputs, rng)), scheme)
            d_sig, d_k = dsigma1_ph, dKfrob2_ph
        else:
            fom = random_ltiqo(args.order + 3, args.inputs, 2, rng)
            rom = random_ltiqo(args.order, args.inputs, 2, rng)
            if scheme is Scheme.DIAGM:
                rom = LtiqoSystem(rom.A, rom.B, rom.C, rom.D, [np.diag(np.diag(X)) for X in rom.M], rom.P)
            theta = encode(rom, scheme)
            d_sig, d_k = dsigma1_full, dKfrob2_full
        ctx = GradContext(fom, theta)
        s = 1j * rng.uniform(0.1, 3.0)
        s1, s2 = 1j * rng.uniform(-3, 3), 1j * rng.uniform(0, 3)
        q = max(ctx.fom.quadratic_outputs())
        checks = [
            (d_sig(ctx, s, 0), lambda t: np.linalg.norm(GradContext(fom, t).error_G1(s), 2)),
            (d_k(ctx, s1, s2), lambda t: np.linalg.norm(GradContext(fom, t).error_K(q, s1, s2)) ** 2),
        ]
        for g, fun in checks:
            fd = fd_gradient(fun, theta, args.h)
            scale = max(np.linalg.norm(fd), 1e-300)
            overall = max(overall, np.linalg.norm(g - fd) / scale)
            for name, sl in theta.layout.segments:
                err = np.linalg.norm(g[sl] - fd[sl]) / scale
                key = name.rstrip("0123456789") if name[0] in "MP" else name
                worst[key] = max(worst.get(key, 0.0), err)
    print(f"scheme {scheme.value}, r = {args.order}, m = {args.inputs}, {args.instances} instances")
    print(f"{'segment':>8}  max relative error")
    for key, err in worst.items():
        print(f"{key:>8}  {err:.3e}")
    ok = overall < args.tol
    print(f"overall   {overall:.3e}  ({'pass' if ok else 'FAIL'} at tol {args.tol:g})")
    return 0 if ok else 1


def cmd_bench_msd(args) -> int:
    from .bench import ExperimentSpec, run_experiment

    if not os.path.exists(args.spec):
        raise UsageError(f"spec file not found: {args.spec}")
    spec = ExperimentSpec.load(args.spec)
    if args.dry_run:
        print(f"spec ok: {spec.system['generator']} n = {spec.system['n']}, scheme {spec.scheme}, "
              f"r = {spec.r_list}")
        return 0
    out = run_experiment(spec, args.out, figures=not args.no_figures and spec.figures, jobs=args.jobs)
    print(f"results written to {out['outdir']}")
    for row in out["sweep"]:
        print(f"  r = {row[0]:3d}  certified gamma = {row[1]:.6g}  estimated error = {row[4]:.6g}")
    return 0 if all(row[6] for row in out["sweep"]) else 1


def cmd_generate_msd(args) -> int:
    from .bench import MsdParams, msd_ltiqo, msd_phqo
    from .io import dump_system

    if args.n % 2:
        raise UsageError("--n must be even")
    params = MsdParams(args.mass, args.stiffness, args.damping, args.inputs)
    sys_ = msd_phqo(args.n // 2, params) if args.kind == "phqo" else msd_ltiqo(args.n // 2, params)
    dump_system(sys_, args.out)
    print(f"wrote {args.kind} system with n = {args.n} to {args.out}")
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ltiqo", description="H-infinity model reduction for quadratic-output systems")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="compute a reduced model")
    p.add_argument("--input", required=True, help="system JSON (ltiqo or phqo)")
    p.add_argument("--order", "-r", type=int, required=True)
    p.add_argument("--scheme", choices=["full", "diagm", "ph"], default="full")
    p.add_argument("--gamma-u", type=float, default=None, help="initial upper level (default 100)")
    p.add_argument("--gamma-l", type=float, default=None, help="initial lower level (default 0)")
    p.add_argument("--eps-gamma", type=float, default=None, help="relative bisection tolerance (default 0.01)")
    p.add_argument("--eps-tol", type=float, default=None, help="inner success threshold (default 1e-12)")
    p.add_argument("--mode", choices=["half", "sum"], default=None)
    p.add_argument("--retries", type=int, default=None, help="lower-level resets N_r (default 3)")
    p.add_argument("--max-outer", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--literal-bisection", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON file with reduce settings")
    p.add_argument("--out", help="result JSON")
    p.add_argument("--trace", help="trace CSV")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("hinf", help="sampled H-infinity norm")
    p.add_argument("--input", required=True)
    p.add_argument("--rom", help="reduced model (system or result JSON); estimates the error norm")
    p.add_argument("--json", action="store_true")
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_hinf)

    p = sub.add_parser("simulate", help="time-domain simulation")
    p.add_argument("--input", required=True)
    p.add_argument("--rom", help="also simulate this model and check the gain bound")
    p.add_argument("--input-signal", choices=["sin", "chirp", "file"], default="sin")
    p.add_argument("--freq", type=float, default=0.02, help="s in sin(st)cos(st)")
    p.add_argument("--chirp-f1", type=float, default=2.0, help="final chirp frequency in Hz")
    p.add_argument("--signal-file", help="CSV with columns t,u0,u1,...")
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--out", help="output CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grad-check", help="analytic vs finite-difference gradients")
    p.add_argument("--scheme", choices=["full", "diagm", "ph"], default="full")
    p.add_argument("--order", "-r", type=int, default=4)
    p.add_argument("--inputs", "-m", type=int, default=2)
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--h", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("bench-msd", help="mass-spring-damper order sweep")
    p.add_argument("--spec", required=True, help="bench spec JSON")
    p.add_argument("--out", help="output directory (default: spec 'outputs')")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_bench_msd)

    p = sub.add_parser("generate-msd", help="write a mass-spring-damper system JSON")
    p.add_argument("--n", type=int, default=100, help="state dimension (even)")
    p.add_argument("--kind", choices=["ltiqo", "phqo"], default="ltiqo")
    p.add_argument("--mass", type=float, default=4.0)
    p.add_argument("--stiffness", type=float, default=4.0)
    p.add_argument("--damping", type=float, default=1.0)
    p.add_argument("--inputs", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_msd)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if hasattr(args, "jobs"):
            args.jobs = _jobs(args.jobs) if args.jobs is not None or os.environ.get("LTIQO_JOBS") else None
        return args.func(args)
    except (UsageError, LtiqoError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
