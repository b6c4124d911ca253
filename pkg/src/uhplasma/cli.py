"""Command-line front end.

Exit codes: 0 success / smooth, 1 blow-up, 2 invalid input, 3 boundary case,
4 profile parse error, 5 checkpoint incompatible with the requested run.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import default_workers
from .breaking import EPS_Q, DerivTriple, DomainError, VerdictKind, blowup_verdict, critical_k
from .field import (DEFAULT_POINTS, ProfileError, PulseSpec, field_verdict,
                    read_profile, simulate_field, standard_pulse)
from .spectral import B0_BAR, InvalidParams, Params, eigenvalues, regime, regime_boundary
from .sweep import (Axis, CheckpointMismatch, blowup_plane, regime_plane,
                    smooth_domain_section)

EXIT_OK, EXIT_BLOWUP, EXIT_INVALID, EXIT_BOUNDARY, EXIT_PROFILE, EXIT_CHECKPOINT = range(6)
_VERDICT_EXIT = {VerdictKind.SMOOTH: EXIT_OK, VerdictKind.BLOWUP: EXIT_BLOWUP,
                 VerdictKind.BOUNDARY: EXIT_BOUNDARY}

_DECIMAL = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")
_RANGE = re.compile(_DECIMAL.pattern + r"\.\." + _DECIMAL.pattern)


class UsageError(Exception):
    pass


def decimal(text: str) -> float:
    """Plain decimal literal (``0.01``, ``-2``, ``1e-3``); no inf/nan/locale forms."""
    if not _DECIMAL.fullmatch(text.strip()):
        raise argparse.ArgumentTypeError(f"not a decimal number: {text!r}")
    return float(text)


def decimal_range(text: str) -> tuple[float, float]:
    """``min..max`` (inclusive) or a single value."""
    lo, sep, hi = text.partition("..")
    a = decimal(lo)
    b = decimal(hi) if sep else a
    if b < a:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return a, b


def number_list(text: str) -> list[float]:
    return [decimal(t) for t in text.split(",") if t.strip()]


def _resolution(text: str) -> float:
    """Half a unit in the last written decimal place of ``text``."""
    mant, _, exp = text.strip().lower().partition("e")
    places = len(mant.partition(".")[2])
    return 0.5 * 10.0 ** (-places + (int(exp) if exp else 0))


def _params(args) -> Params:
    try:
        return Params(args.nu, args.b0)
    except InvalidParams as exc:
        raise UsageError(str(exc)) from None


def _config(args, drop=("func", "threads", "resume", "out")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in drop and not callable(v)}


def _envelope(args, body: dict) -> dict:
    return {"tool_version": __version__, "config": _config(args, drop=("func",)), **body}


def _emit_json(obj):
    json.dump(obj, sys.stdout, indent=2, default=_jsonable)
    sys.stdout.write("\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(type(x).__name__)


def _csv_header(args) -> list[str]:
    return [f"tool_version={__version__}",
            "config=" + json.dumps(_config(args, drop=("func",)), default=_jsonable, sort_keys=True)]


# ---------------------------------------------------------------------------
# subcommands


def cmd_eigen(args) -> int:
    p = _params(args)
    es, ri = eigenvalues(p), regime(p)
    _emit_json(_envelope(args, {**es.to_dict(), **ri.to_dict()}))
    return EXIT_OK


def cmd_verdict(args) -> int:
    p = _params(args)
    try:
        w0 = DerivTriple(args.q1, args.q2, args.s0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    v = blowup_verdict(w0, p)
    _emit_json(_envelope(args, {"verdict": v.to_dict(), "tolerances": {"eps_q": EPS_Q}}))
    return _VERDICT_EXIT[v.kind]


def cmd_simulate(args) -> int:
    p = _params(args)
    if args.profile is not None:
        field = read_profile(args.profile)
    else:
        if args.k is None:
            raise UsageError("either --k or --profile is required")
        if not 0 < args.k < 1:
            raise UsageError("--k must lie in (0, 1) so the initial density 1 - k is positive")
        try:
            field = standard_pulse(PulseSpec(args.k, args.sigma), n=args.points)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    frames = sorted(set(args.frames or []))
    if any(t < 0 for t in frames):
        raise UsageError("frame times must be non-negative")
    predicted = field_verdict(field, p, workers=args.threads)
    horizon = args.horizon
    if horizon is None:
        horizon = max([20.0, *frames])
        if predicted.t_c is not None:
            horizon = max(1.05 * predicted.t_c + 0.1, max(frames, default=0.0))
    try:
        out, observed = simulate_field(field, p, horizon, frames, tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = _csv_header(args)
    written = []
    for i, fr in enumerate(out):
        path = out_dir / f"frame_{i:03d}.csv"
        fr.to_csv(path, header + [f"theta={fr.theta:.12g}"])
        written.append({"theta": fr.theta, "path": str(path), "mass": fr.mass(),
                        "min_density": float(np.min(fr.n))})
    report = _envelope(args, {
        "horizon": horizon,
        "predicted": predicted.to_dict(),
        "observed": observed.to_dict(),
        "frames": written,
    })
    with open(out_dir / "verdict.json", "w") as fh:
        json.dump(report, fh, indent=2, default=_jsonable)
        fh.write("\n")
    _emit_json(report)
    return EXIT_OK


def _sweep_paths(args):
    if args.resume is not None and args.out is not None and Path(args.resume) != Path(args.out):
        raise UsageError("--resume and --out name different files")
    out = Path(args.resume or args.out or f"sweep_{args.kind}.csv")
    ckpt = out if args.format == "csv" else out.with_name(out.name + ".ckpt.csv")
    return out, ckpt


def cmd_sweep(args) -> int:
    out, ckpt = _sweep_paths(args)
    common = dict(step=args.step, workers=args.threads, out=ckpt, resume=args.resume is not None,
                  config=_config(args))
    try:
        if args.kind == "blowup":
            grid = blowup_plane(args.k, args.nu, args.b0, **common)
        elif args.kind == "regime":
            grid = regime_plane(args.nu, args.b0, **common)
        else:
            grid = smooth_domain_section(_params(args), args.q2, args.q1, args.s, **common)
    except CheckpointMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.format == "matrix":
        grid.write(out, fmt="matrix")
    extra = {}
    if grid.overlay:
        ov = out.with_name(out.name + ".overlay.csv")
        with open(ov, "w", newline="") as fh:
            fh.write("b0,nu_minus,nu_plus\n")
            for b0, lo, hi in grid.overlay:
                fh.write("%.6f,%s,%s\n" % (b0, _fmt(lo), _fmt(hi)))
        extra["overlay"] = str(ov)
    codes, counts = np.unique(grid.codes, return_counts=True)
    _emit_json(_envelope(args, {
        "kind": args.kind, "out": str(out), "cells": grid.size,
        "counts": {str(int(c)): int(n) for c, n in zip(codes, counts)}, **extra,
    }))
    return EXIT_OK


def _fmt(x) -> str:
    return "inf" if math.isinf(x) else "%.12g" % x


def _rows(raw: str, step: float | None, name: str):
    """Values for a scalar or ``min..max`` option plus each value's input resolution."""
    lo, hi = decimal_range(raw)
    if lo == hi:
        return [lo], _resolution(raw.partition("..")[0])
    if step is None:
        raise UsageError(f"--step is required for a {name} range")
    return list(Axis(name, lo, hi, step).values()), 0.0


def cmd_boundary(args) -> int:
    if args.kcr:
        if args.nu is None:
            raise UsageError("--kcr needs --nu")
        nus, _ = _rows(args.nu, args.step, "nu")
        try:
            vals = [critical_k(nu) for nu in nus]
        except DomainError as exc:
            raise UsageError(str(exc)) from None
        rows = ["nu,k_cr"] + ["%.6f,%.12g" % (nu, k) for nu, k in zip(nus, vals)]
    else:
        if args.b0 is None:
            raise UsageError("give --b0 (value or range) or --kcr --nu")
        b0s, res = _rows(args.b0, args.step, "b0")
        rows = ["b0,nu_minus,nu_plus"]
        for b0 in b0s:
            b = abs(b0)
            # a rounded literal of the double point (e.g. 0.3536) is read as the point itself
            if B0_BAR < b <= B0_BAR + res:
                b = B0_BAR
            nb = regime_boundary(b)
            rows.append("%.6f,," % b0 if nb is None else "%.6f,%s,%s" % (b0, _fmt(nb[0]), _fmt(nb[1])))
    for line in _csv_header(args):
        print(f"# {line}")
    print("\n".join(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_params(p, required=True):
    p.add_argument("--nu", type=decimal, required=required, help="collision frequency nu >= 0")
    p.add_argument("--b0", type=decimal, required=required, help="magnetic field B0")


def _add_sweep_common(p):
    p.add_argument("--step", type=decimal, default=0.01, help="grid step for both axes")
    p.add_argument("--out", help="output CSV (sidecar written next to it as <out>.json)")
    p.add_argument("--resume", metavar="PATH", help="continue an interrupted run stored at PATH")
    p.add_argument("--format", choices=("csv", "matrix"), default="csv")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uhplasma", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", help="eigenvalues of M(nu, B0) and the regime invariant",
                       description="Roots of l^3 + 2 nu l^2 + (1 + B0^2 + nu^2) l + nu plus the zero "
                                   "eigenvalue, eigenvectors and K = -disc/4 "
                                   "(K > 0 oscillatory, K < 0 monotone).")
    _add_params(p)
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("verdict", help="blow-up verdict for one characteristic",
                       description="Blow-up iff Q(theta), the first component of exp(M theta) applied "
                                   "to (1, q1, q2, s), has a positive root. Exit 0 smooth, 1 blow-up, "
                                   "3 boundary case.")
    _add_params(p)
    p.add_argument("--q1", type=decimal, default=0.0, help="initial dV1/drho")
    p.add_argument("--q2", type=decimal, default=0.0, help="initial dV2/drho")
    p.add_argument("--s0", type=decimal, default=0.0, help="initial dE/drho")
    p.set_defaults(func=cmd_verdict)

    p = sub.add_parser("simulate", help="integrate a pulse or tabulated profile along characteristics",
                       description="Standard pulse E = k rho exp(-rho^2/sigma), V = 0, or a CSV profile "
                                   "with header rho,v1,v2,e. Writes frame_NNN.csv and verdict.json.")
    _add_params(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--k", type=decimal, help="pulse amplitude (density stays positive for k < 1)")
    src.add_argument("--profile", help="CSV profile file")
    p.add_argument("--sigma", type=decimal, default=1.0, help="pulse width parameter")
    p.add_argument("--points", type=int, default=DEFAULT_POINTS, help="characteristics for the pulse")
    p.add_argument("--frames", type=number_list, default=None, help="comma-separated frame times")
    p.add_argument("--horizon", type=decimal, default=None, help="end time (default: past t_c or 20)")
    p.add_argument("--tol", type=decimal, default=1e-9, help="integrator rtol=atol")
    p.add_argument("--out-dir", default=".", help="directory for frames and verdict.json")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="parameter-plane grids (blowup, regime, section)")
    kinds = p.add_subparsers(dest="kind", required=True)
    q = kinds.add_parser("blowup", help="(nu, B0) blow-up domain for the pulse peak (0, 0, k)")
    q.add_argument("--k", type=decimal, required=True)
    q.add_argument("--nu", type=decimal_range, default=(0.0, 1.2), help="min..max")
    q.add_argument("--b0", type=decimal_range, default=(-0.6, 0.6), help="min..max")
    _add_sweep_common(q)
    q = kinds.add_parser("regime", help="(nu, B0) oscillatory/monotone map with nu+- overlay")
    q.add_argument("--nu", type=decimal_range, default=(0.0, 4.0), help="min..max")
    q.add_argument("--b0", type=decimal_range, default=(-0.6, 0.6), help="min..max")
    _add_sweep_common(q)
    q = kinds.add_parser("section", help="smooth domain in (q1, s) at fixed q2")
    _add_params(q)
    q.add_argument("--q2", type=decimal, default=0.0)
    q.add_argument("--q1", type=decimal_range, default=(-1.0, 1.0), help="min..max")
    q.add_argument("--s", type=decimal_range, default=(-1.0, 1.0), help="min..max")
    _add_sweep_common(q)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("boundary", help="nu-(B0), nu+(B0) table or k_cr(nu) table as CSV",
                       description="Monotone lens |B0| <= sqrt(2)/4 between nu- and nu+; "
                                   "with --kcr, the critical pulse amplitude at B0 = 0 for 0 <= nu < 2.")
    p.add_argument("--b0", help="value or min..max")
    p.add_argument("--nu", help="value or min..max (with --kcr)")
    p.add_argument("--kcr", action="store_true")
    p.add_argument("--step", type=decimal, default=None)
    p.set_defaults(func=cmd_boundary)
    return ap


def _glue_negative_ranges(argv):
    # argparse takes "-0.6..0.6" for an option; pass it as "--b0=-0.6..0.6" instead
    out = []
    for tok in argv:
        if (out and out[-1].startswith("--") and "=" not in out[-1] and tok.startswith("-")
                and _RANGE.fullmatch(tok)):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_glue_negative_ranges(argv))
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_workers()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (argparse.ArgumentTypeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ProfileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROFILE


if __name__ == "__main__":
    sys.exit(main())
