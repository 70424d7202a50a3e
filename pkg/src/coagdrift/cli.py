"""Command-line interface: solve, verify, threshold, simulate, sweep.

Exit codes are a stable contract: 0 success, 2 usage/domain/malformed input,
3 numerical non-convergence or scheme failure, 4 uncertified forced output.
``verify`` additionally exits 1 when a recomputed check fails.  The
environment variable COAGDRIFT_OUTDIR supplies the default output directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import (
    CoagDriftError,
    ConvergenceError,
    ParameterDomainError,
    ProfileFormatError,
    SchemeFailureError,
    ThresholdExceededError,
)
from .evolution import default_domain_cutoff, init_from_profile, self_similar_error, simulate
from .grids import moment
from .model import ModelParams, admissible_threshold, derive_constants
from .profile_io import ProfileRecord, atomic_write_text, read_profile, write_json, write_profile
from .profiles import (
    OuterSolveOptions,
    outer_solve,
    residual_selfsimilar,
    tail_exponent_fit,
    weighted_residual_norm,
)
from .tau_iteration import InnerSolveOptions

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_UNCERTIFIED = 4

# verify reuses the solver's certification tolerances (the residual bound
# additionally comes from the file header)
from .profiles import (  # noqa: E402
    CERT_F0_RTOL as _VERIFY_F0_RTOL,
    CERT_M0_RTOL as _VERIFY_M0_RTOL,
    CERT_M1_RTOL as _VERIFY_M1_RTOL,
    CERT_TAIL_RTOL as _VERIFY_TAIL_RTOL,
    NON_POWER_LAW_DEVIATION as _NON_POWER_LAW_DEVIATION,
)


def _outdir() -> str:
    return os.environ.get("COAGDRIFT_OUTDIR", ".")


def _default_paths(args) -> tuple[str, str]:
    stem = f"profile_v{args.v:g}_m0{args.m0:g}"
    out = args.out or os.path.join(_outdir(), stem + ".csv")
    meta = args.meta or os.path.splitext(out)[0] + ".json"
    return out, meta


# ----------------------------------------------------------------------
# threshold
# ----------------------------------------------------------------------

def cmd_threshold(args) -> int:
    m0_bar = admissible_threshold(args.v)
    print(f"v      = {args.v:.17g}")
    print(f"a_0    = {(2 - args.v) / (1 - args.v):.17g}")
    print(f"m0_bar = {m0_bar:.17g}")
    if args.m0 is not None:
        try:
            constants = derive_constants(ModelParams(v=args.v, m0=args.m0))
        except ThresholdExceededError:
            print(f"m0     = {args.m0:.17g}  inadmissible (m0 > m0_bar)")
        else:
            print(f"m0         = {args.m0:.17g}")
            print(f"sigma_star = {constants.sigma_star:.17g}")
            print(f"tau_star   = {constants.tau_star:.17g}")
    return EXIT_OK


# ----------------------------------------------------------------------
# solve
# ----------------------------------------------------------------------

def _solve_options(args) -> OuterSolveOptions:
    return OuterSolveOptions(
        zmax=args.zmax,
        nodes=args.nodes,
        tol=args.tol_outer,
        max_outer=args.max_iter,
        inner=InnerSolveOptions(tol=args.tol_inner),
        tol_residual=args.tol_residual,
        force=args.force,
    )


def _record_from_solve(params, opts, F, tau, certified) -> ProfileRecord:
    try:
        constants = derive_constants(params)
        alpha, tau_star = constants.alpha, constants.tau_star
    except (ThresholdExceededError, ParameterDomainError):
        alpha, tau_star = (2 - params.v - 2 * params.m0) / (1 - params.v), math.nan
    return ProfileRecord(
        v=params.v,
        m0=params.m0,
        alpha=alpha,
        tau_star=tau_star,
        tau_inf=params.tau_inf,
        tail_exponent=F.tail_exponent,
        tol_inner=opts.inner.tol,
        tol_outer=opts.tol,
        tol_residual=opts.tol_residual,
        certified=certified,
        z=F.grid.nodes,
        F=F.values,
        tau=tau,
    )


def _gnuplot_script(csv_path: str) -> str:
    return (
        "set datafile separator ','\n"
        "set logscale xy\n"
        "set xlabel 'z'\n"
        "set ylabel 'F(z)'\n"
        f"plot '{csv_path}' every ::1 using 1:2 with lines title 'profile'\n"
    )


def cmd_solve(args) -> int:
    params = ModelParams(v=args.v, m0=args.m0)
    opts = _solve_options(args)
    if not args.force:
        try:
            derive_constants(params)
        except ThresholdExceededError as exc:
            print(
                f"m0 = {args.m0:g} exceeds the admissible threshold "
                f"m0_bar = {exc.m0_bar:.17g} at v = {args.v:g}; "
                "pass --force for an exploratory, uncertified run",
                file=sys.stderr,
            )
            return EXIT_USAGE

    out, meta = _default_paths(args)
    try:
        F, report = outer_solve(params, opts)
    except ConvergenceError as exc:
        print(f"solve did not converge: {exc}", file=sys.stderr)
        if exc.best is not None and exc.report is not None:
            from .profiles import recover_tau

            tau = recover_tau(exc.best).values
            record = _record_from_solve(params, opts, exc.best, tau, certified=False)
            write_profile(out, record)
            write_json(meta, _metadata(params, opts, exc.report))
            print(f"best iterate written to {out}", file=sys.stderr)
        return EXIT_NUMERICAL

    from .profiles import recover_tau

    tau_vals = recover_tau(F).values
    record = _record_from_solve(params, opts, F, tau_vals, certified=report.certified)
    write_profile(out, record)
    write_json(meta, _metadata(params, opts, report))
    if args.gnuplot:
        atomic_write_text(os.path.splitext(out)[0] + ".gnuplot", _gnuplot_script(out))
    print(f"profile  -> {out}")
    print(f"metadata -> {meta}")
    print(
        f"certified={report.certified} F0={report.F0:.17g} "
        f"residual={report.model_residual_norm:.3e} tail={report.tail_exponent_fit:.5f}"
    )
    if not report.certified:
        return EXIT_UNCERTIFIED
    return EXIT_OK


def _metadata(params: ModelParams, opts: OuterSolveOptions, report) -> dict:
    return {
        "v": params.v,
        "m0": params.m0,
        "zmax": opts.zmax,
        "nodes": opts.nodes,
        "tol_inner": opts.inner.tol,
        "tol_outer": opts.tol,
        "tol_residual": opts.tol_residual,
        "force": opts.force,
        "report": report.to_dict(),
    }


# ----------------------------------------------------------------------
# verify
# ----------------------------------------------------------------------

def _verify_checks(record: ProfileRecord) -> list[tuple[str, bool, str]]:
    params = record.params()
    F = record.grid_function()
    checks: list[tuple[str, bool, str]] = []

    rnorm = weighted_residual_norm(residual_selfsimilar(F, params), params)
    checks.append(
        ("residual", rnorm <= record.tol_residual, f"{rnorm:.3e} <= {record.tol_residual:.1e}")
    )

    m0 = moment(F, 0)
    rel = abs(m0 - record.m0) / record.m0
    checks.append(("M0", rel <= _VERIFY_M0_RTOL, f"M0={m0:.10g} rel_err={rel:.2e}"))

    m1 = moment(F, 1)
    m1_target = record.m0 / record.v
    rel = abs(m1 - m1_target) / m1_target
    checks.append(("M1", rel <= _VERIFY_M1_RTOL, f"M1={m1:.10g} rel_err={rel:.2e}"))

    f0_target = record.m0 * (1.0 - record.m0)
    rel = abs(record.F[0] - f0_target) / f0_target
    checks.append(("F0", rel <= _VERIFY_F0_RTOL, f"F0={record.F[0]:.10g} rel_err={rel:.2e}"))

    try:
        fit = tail_exponent_fit(F)
    except ParameterDomainError:
        checks.append(("tail", True, "non-power-law (fit not applicable)"))
    else:
        if fit.max_deviation > _NON_POWER_LAW_DEVIATION:
            checks.append(
                ("tail", True, f"non-power-law (log deviation {fit.max_deviation:.3f})")
            )
        else:
            rel = abs(fit.exponent - params.tau_inf) / params.tau_inf
            checks.append(
                ("tail", rel <= _VERIFY_TAIL_RTOL,
                 f"exponent={fit.exponent:.5f} target={params.tau_inf:.5f} rel_err={rel:.2e}")
            )
    return checks


def cmd_verify(args) -> int:
    record = read_profile(args.profile)
    checks = _verify_checks(record)
    all_ok = True
    for name, ok, detail in checks:
        all_ok &= ok
        print(f"{name:9s}: {'PASS' if ok else 'FAIL'}  {detail}")
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    record = read_profile(args.profile)
    F = record.grid_function()
    if args.t0 <= 0.0 or args.t1 <= args.t0:
        raise ParameterDomainError("need t1 > t0 > 0")
    xmax = args.xmax if args.xmax is not None else default_domain_cutoff(F, args.t1)
    state = init_from_profile(F, args.t0, args.cells, xmax, strict=not args.allow_truncation)
    snapshot_times = tuple(float(s) for s in args.snapshots.split(",")) if args.snapshots else ()
    z_window = args.z_window if args.z_window is not None else min(10.0, xmax / args.t1)

    outdir = args.out or _outdir()
    os.makedirs(outdir, exist_ok=True)

    failure = None
    try:
        state, diagnostics, snapshots = simulate(
            state,
            args.t1,
            cfl=args.cfl,
            convolution=args.convolution,
            profile=F,
            z_window=z_window,
            snapshot_times=snapshot_times,
            record_every=args.record_every,
        )
    except SchemeFailureError as exc:
        failure = exc
        state = getattr(exc, "state", state)
        diagnostics = getattr(exc, "diagnostics", [])
        snapshots = getattr(exc, "snapshots", {})
        print(f"scheme failure at t={state.t}: {exc}", file=sys.stderr)

    lines = ["t,m0,m1,u,self_similar_error"]
    for row in diagnostics:
        lines.append(",".join(f"{x:.17g}" for x in row))
    atomic_write_text(os.path.join(outdir, "diagnostics.csv"), "\n".join(lines) + "\n")

    snapshots = dict(snapshots)
    snapshots[state.t] = state  # final (or last-good) state
    for t_snap, snap in sorted(snapshots.items()):
        rows = ["x,f"]
        for x, f in zip(snap.centers, snap.f):
            rows.append(f"{x:.17g},{f:.17g}")
        atomic_write_text(
            os.path.join(outdir, f"snapshot_t{t_snap:g}.csv"), "\n".join(rows) + "\n"
        )
    print(f"diagnostics -> {os.path.join(outdir, 'diagnostics.csv')}")
    print(f"final self-similar deviation: {self_similar_error(state, F, z_window):.6e}"
          if failure is None else "run aborted; last-good state preserved")
    return EXIT_NUMERICAL if failure is not None else EXIT_OK


# ----------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------

def _sweep_worker(payload: dict) -> tuple[float, int, str]:
    ns = argparse.Namespace(**payload)
    code = cmd_solve(ns)
    out, _ = _default_paths(ns)
    return ns.m0, code, out


def cmd_sweep(args) -> int:
    m0_list = [float(x) for x in args.m0_list.split(",") if x.strip()]
    if not m0_list:
        raise ParameterDomainError("empty m0 list")
    jobs = []
    for m0 in m0_list:
        payload = dict(vars(args))
        payload.pop("func", None)
        payload.pop("m0_list", None)
        payload.pop("jobs", None)
        payload["m0"] = m0
        stem = f"profile_v{args.v:g}_m0{m0:g}"
        payload["out"] = os.path.join(args.out_dir or _outdir(), stem + ".csv")
        payload["meta"] = None
        jobs.append(payload)

    workers = args.jobs or len(jobs)
    results = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for m0, code, out in pool.map(_sweep_worker, jobs):
            results.append((m0, code, out))
            print(f"m0={m0:g}: exit {code}  ({out})")
    codes = {code for _, code, _ in results}
    for severity in (EXIT_USAGE, EXIT_NUMERICAL, EXIT_UNCERTIFIED):
        if severity in codes:
            return severity
    return EXIT_OK


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def _add_solve_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--zmax", type=float, default=1e6, help="grid cutoff (default 1e6)")
    parser.add_argument("--nodes", type=int, default=2049, help="grid nodes (default 2049)")
    parser.add_argument("--tol-inner", dest="tol_inner", type=float, default=1e-10)
    parser.add_argument("--tol-outer", dest="tol_outer", type=float, default=1e-9)
    parser.add_argument("--tol-residual", dest="tol_residual", type=float, default=1e-5,
                        help="certification bound on the weighted residual norm")
    parser.add_argument("--max-iter", dest="max_iter", type=int, default=80,
                        help="outer iteration cap")
    parser.add_argument("--force", action="store_true",
                        help="run above the admissibility threshold (uncertified)")
    parser.add_argument("--gnuplot", action="store_true",
                        help="emit a gnuplot script next to the CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coagdrift",
        description="Self-similar profiles for a coagulation model with mean-field drift",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="admissibility threshold and barrier constants")
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--m0", type=float, default=None)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("solve", help="solve a fat-tail profile and write CSV + JSON")
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--m0", type=float, required=True)
    _add_solve_flags(p)
    p.add_argument("--out", default=None, help="profile CSV path")
    p.add_argument("--meta", default=None, help="metadata JSON path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="recompute checks for a stored profile")
    p.add_argument("profile")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="evolve a profile with the time-dependent model")
    p.add_argument("--profile", required=True)
    p.add_argument("--t0", type=float, default=1.0)
    p.add_argument("--t1", type=float, default=2.0)
    p.add_argument("--cells", type=int, default=4096)
    p.add_argument("--xmax", type=float, default=None,
                   help="domain cutoff (default: 99.9%% volume coverage at t1)")
    p.add_argument("--cfl", type=float, default=0.5)
    p.add_argument("--snapshots", default="", help="comma list of snapshot times")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--convolution", choices=("direct", "fft"), default="direct")
    p.add_argument("--allow-truncation", action="store_true",
                   help="downgrade the 99.9%% coverage check to a warning")
    p.add_argument("--z-window", dest="z_window", type=float, default=None)
    p.add_argument("--record-every", dest="record_every", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="solve several m0 values in parallel")
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--m0-list", dest="m0_list", required=True)
    _add_solve_flags(p)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProfileFormatError, ParameterDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SchemeFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CoagDriftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
