"""Command-line entry point: every verification and synthesis pipeline with
reproducible file outputs.

Subcommands: eigs, verify, synthesize, observability, sweep, cutoff, weight.
Exit codes: 0 success, 1 verification or synthesis failure, 2 usage error.
Every output file embeds the generating parameters and the package version.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import __version__
from .legendre import default_npoints, eigenfunction_table, gauss_legendre
from .massbounds import (
    central_binomial_bound,
    christoffel_kernel,
    lambda_reindex_identity,
    mass_bound_grid,
    telescoping_step,
    verify_lemma_B1,
    write_mass_report_csv,
)
from .moments import ExponentialFamily, IllConditioned, ZeroMass, gap_audit, synthesize
from .observability import (
    InvariantViolated,
    SingularRegion,
    build_carleman_weight,
    observability_constant,
    sweep_minimal_time,
)
from .cutoff import CutoffConfig, SupportViolation, compose
from .spectral import Crown, HALF_PI, SpectralField, mode_eigenvalues

FAIL, USAGE = 1, 2


def _parse_t(spec: str):
    """Scalar or lo:hi:step horizon specification."""
    if ":" in spec:
        lo, hi, step = (float(s) for s in spec.split(":"))
        if step <= 0 or hi < lo:
            raise ValueError(f"bad grid {spec!r}")
        return np.arange(lo, hi + step / 2, step)
    return float(spec)


def _header(args, keys) -> list[str]:
    lines = [f"grushinctl {__version__}"]
    for k in keys:
        lines.append(f"{k}={getattr(args, k)}")
    return lines


def _emit_json(path, payload, args, keys):
    payload = dict(payload)
    payload["params"] = {k: getattr(args, k) for k in keys}
    payload["version"] = __version__
    text = json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_eigs(args) -> int:
    if args.ell_max < args.n:
        print("error: need ell-max >= n", file=sys.stderr)
        return USAGE
    n, ell_max = args.n, args.ell_max
    lams = mode_eigenvalues(n, n, ell_max)
    rule = gauss_legendre((-1.0, 1.0), default_npoints(ell_max, n))
    V = eigenfunction_table(n, ell_max, rule.nodes)
    G = (V * rule.weights) @ V.T
    resid = np.abs(G - np.eye(ell_max - n + 1)).max(axis=1)
    out = args.out or "eigs.csv"
    with open(out, "w", newline="") as fh:
        for line in _header(args, ("n", "ell_max")):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["ell", "n", "lambda", "orthonormality_residual"])
        for i, ell in enumerate(range(n, ell_max + 1)):
            w.writerow([ell, n, f"{lams[i]:.1f}", f"{resid[i]:.6e}"])
    print(f"wrote {out} ({ell_max - n + 1} rows, worst residual {resid.max():.3e})")
    return 0


def cmd_verify(args) -> int:
    failures = checked = 0
    a_values = (
        [args.a] if args.a is not None
        else [0.0, math.pi / 6, math.pi / 4, math.pi / 3, 1.4, HALF_PI]
    )
    rows = mass_bound_grid(args.ell_max, args.n_max, a_values)
    checked += len(rows)
    failures += sum(not r["holds"] for r in rows)
    for n in range(1, args.n_max + 1):
        for m in range(args.ell_max - n + 1):
            checked += 3
            try:
                christoffel_kernel(n + m, n)
            except AssertionError:
                failures += 1
                print(f"FAIL kernel identity ell={n+m} n={n}")
            if not verify_lemma_B1(n, m)["holds"]:
                failures += 1
                print(f"FAIL factorial bound n={n} m={m}")
            if not (telescoping_step(m, n) and lambda_reindex_identity(n, m)
                    and central_binomial_bound(n)):
                failures += 1
                print(f"FAIL exact identity n={n} m={m}")
        audit = gap_audit(ExponentialFamily.for_mode(n, min(20, args.ell_max - n + 1), 1.0))
        checked += 1
        if not audit["ok"]:
            failures += 1
            print(f"FAIL gap audit n={n}")
    if args.out:
        write_mass_report_csv(rows, args.out, _header(args, ("ell_max", "n_max")))
    _emit_json(args.json_out, {"checked": checked, "failures": failures},
               args, ("ell_max", "n_max"))
    if failures:
        print(f"{failures} of {checked} checks failed", file=sys.stderr)
        return FAIL
    print(f"all {checked} checks passed")
    return 0


def cmd_synthesize(args) -> int:
    crown = Crown(args.a, HALF_PI)
    field0 = SpectralField.single_mode(args.n, args.trunc)
    try:
        plan = synthesize(field0, crown, args.t, args.trunc, precision=args.precision)
    except (IllConditioned, ZeroMass) as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return FAIL
    _emit_json(args.out, plan.to_json_dict(), args, ("a", "n", "t", "trunc", "precision"))
    return 0


def cmd_observability(args) -> int:
    region = [(-args.b, args.b)] if args.a is None else [(args.a, args.b or HALF_PI)]
    rows = []
    try:
        for n in range(1, args.n_max + 1):
            C = observability_constant(n, n + args.ell_max, region, args.t)
            Cn = observability_constant(n, n + args.ell_max, region, args.t,
                                        normalize_dissipation=True)
            rows.append({"n": n, "C": C, "C_normalized": Cn})
    except SingularRegion as exc:
        print(f"observability failed: {exc}", file=sys.stderr)
        return FAIL
    _emit_json(args.out, {"rows": rows}, args, ("a", "b", "t", "n_max", "ell_max"))
    return 0


def cmd_sweep(args) -> int:
    grid = _parse_t(args.t)
    if np.isscalar(grid):
        print("error: sweep needs a lo:hi:step grid", file=sys.stderr)
        return USAGE
    report = sweep_minimal_time(args.a, grid, args.n_max, args.trunc,
                                precision=args.precision)
    out = args.out or "sweep.csv"
    report.to_csv(out, _header(args, ("a", "t", "n_max", "trunc", "precision")))
    _emit_json(args.json_out, report.to_json_dict(),
               args, ("a", "t", "n_max", "trunc", "precision"))
    ok = report.T_hat is not None
    print(f"wrote {out}; T_hat = {report.T_hat} "
          f"(theoretical {report.theoretical_T_min:.6f})")
    return 0 if ok else FAIL


def cmd_cutoff(args) -> int:
    crown = Crown(args.a, args.b)
    cfg = CutoffConfig(N=args.trunc, precision=args.precision)
    try:
        rep = compose(SpectralField.single_mode(args.n, args.trunc), crown, args.t, cfg)
    except (IllConditioned, ZeroMass, SupportViolation) as exc:
        print(f"composition failed: {exc}", file=sys.stderr)
        return FAIL
    _emit_json(args.out, rep.to_json_dict(),
               args, ("a", "b", "t", "n", "trunc", "precision"))
    if args.samples_out:
        t, x, U = rep.u_samples
        with open(args.samples_out, "w", newline="") as fh:
            for line in _header(args, ("a", "b", "t", "n")):
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", "x", "u"])
            for i, ti in enumerate(t):
                for j, xj in enumerate(x):
                    w.writerow([f"{ti:.10g}", f"{xj:.10g}", f"{U[i, j]:.10e}"])
    ok = rep.terminal_norm <= 1e-6 and rep.max_violation <= 1e-8
    return 0 if ok else FAIL


def cmd_weight(args) -> int:
    try:
        w = build_carleman_weight(args.b_prime)
    except InvariantViolated as exc:
        print(f"weight construction failed: {exc}", file=sys.stderr)
        return FAIL
    report = w.audit()
    _emit_json(args.out, report, args, ("b_prime",))
    return 0 if report["ok"] else FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="grushinctl",
        description="Spectral controllability laboratory for the spherical "
                    "Baouendi-Grushin heat equation.",
    )
    p.add_argument("--version", action="version", version=f"grushinctl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, a=False, b=False, t=False, n=False, n_max=False,
               ell_max=False, trunc=False, out=True):
        if a:
            sp.add_argument("--a", type=float, default=None, help="lower crown latitude")
        if b:
            sp.add_argument("--b", type=float, default=None, help="upper latitude")
        if t:
            sp.add_argument("--t", help="horizon, scalar or lo:hi:step")
        if n:
            sp.add_argument("--n", type=int, default=1, help="mode order")
        if n_max:
            sp.add_argument("--n-max", dest="n_max", type=int, default=12)
        if ell_max:
            sp.add_argument("--ell-max", dest="ell_max", type=int, default=30)
        if trunc:
            sp.add_argument("--trunc", type=int, default=12, help="truncation N")
        sp.add_argument("--eps", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--precision", choices=("double", "dd"), default="dd")
        if out:
            sp.add_argument("--out", default=None)

    sp = sub.add_parser("eigs", help="eigenvalue/orthonormality table")
    common(sp, n=True, ell_max=True)
    sp.set_defaults(func=cmd_eigs)

    sp = sub.add_parser("verify", help="exact combinatorial and mass-bound suite")
    common(sp, a=True, n_max=True, ell_max=True)
    sp.add_argument("--json-out", default=None)
    sp.set_defaults(func=cmd_verify, ell_max_default=30)

    sp = sub.add_parser("synthesize", help="moment control on the pole-touching crown")
    common(sp, a=True, t=False, n=True, trunc=True)
    sp.add_argument("--t", type=float, default=1.0)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("observability", help="finite-mode observability constants")
    common(sp, a=True, b=True, n_max=True)
    sp.add_argument("--t", type=float, default=0.25)
    sp.add_argument("--ell-max", dest="ell_max", type=int, default=10,
                    help="modes above n retained")
    sp.set_defaults(func=cmd_observability)

    sp = sub.add_parser("sweep", help="minimal-time cost sweep")
    common(sp, a=True, t=True, n_max=True, trunc=True)
    sp.add_argument("--json-out", default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("cutoff", help="cut-off composition on a general band")
    common(sp, a=True, b=True, n=True, trunc=True)
    sp.add_argument("--t", type=float, default=1.2)
    sp.add_argument("--samples-out", default=None)
    sp.set_defaults(func=cmd_cutoff)

    sp = sub.add_parser("weight", help="Carleman weight construction and audit")
    sp.add_argument("--b-prime", dest="b_prime", type=float, required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_weight)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    np.random.seed(args.seed if hasattr(args, "seed") else 0)
    try:
        return args.func(args)
    except (ValueError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
