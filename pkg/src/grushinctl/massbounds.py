"""Exact certification of the mass lower-bound constants and the cost series.

The combinatorial layer (kernel identity, telescoping step, central binomial
bound, factorial lower bound on the mass constants, eigenvalue reindexing) is
verified in integer and rational arithmetic with zero tolerance.  Floating
point appears only where an integral is intrinsically involved: the measured
crown masses and the series S_n built from them.
"""

from __future__ import annotations

import csv
import json
import math
from fractions import Fraction

import numpy as np

from .legendre import default_npoints, eigenfunction_table, gauss_legendre
from .spectral import HALF_PI, mode_eigenvalues

__all__ = [
    "c_constant",
    "verify_mass_bound",
    "mass_bound_grid",
    "christoffel_kernel",
    "telescoping_step",
    "central_binomial_bound",
    "verify_lemma_B1",
    "lambda_reindex_identity",
    "crown_masses",
    "s_series",
    "write_mass_report_csv",
    "write_summary_json",
]


def c_constant(ell: int, n: int) -> Fraction:
    """Exact mass constant (2l+1)(n+1)/2^(2n+2) * (l-n)!(l+n)!/((l+1)!)^2."""
    if not ell >= n >= 1:
        raise ValueError("need ell >= n >= 1")
    num = (2 * ell + 1) * (n + 1) * math.factorial(ell - n) * math.factorial(ell + n)
    den = (1 << (2 * n + 2)) * math.factorial(ell + 1) ** 2
    return Fraction(num, den)


def christoffel_kernel(ell: int, n: int) -> int:
    """Reproducing-kernel diagonal sum_k (2k+n+1) binom(k+n,k)^2, ell-n+1 terms.

    Evaluated twice, by direct summation and by the telescoped closed form
    (n+1) binom(ell+1, n+1)^2; the two integers must agree exactly.
    """
    if not ell >= n >= 1:
        raise ValueError("need ell >= n >= 1")
    direct = sum(
        (2 * k + n + 1) * math.comb(k + n, k) ** 2 for k in range(ell - n + 1)
    )
    closed = (n + 1) * math.comb(ell + 1, n + 1) ** 2
    if direct != closed:
        raise AssertionError(f"kernel identity failed at ell={ell}, n={n}")
    return direct


def telescoping_step(k: int, n: int) -> bool:
    """Single telescoping step: (2k+n+1) C(k+n,k)^2 == (n+1)(C(k+n+1,n+1)^2 - C(k+n,n+1)^2)."""
    lhs = (2 * k + n + 1) * math.comb(k + n, k) ** 2
    rhs = (n + 1) * (math.comb(k + n + 1, n + 1) ** 2 - math.comb(k + n, n + 1) ** 2)
    return lhs == rhs


def central_binomial_bound(n: int) -> bool:
    """Exact check of binom(2n, n) >= 4^n / (2n+1)."""
    return (2 * n + 1) * math.comb(2 * n, n) >= 1 << (2 * n)


def verify_lemma_B1(n: int, m: int) -> dict:
    """Exact rational check of the factorial lower bound on C_{n+m,n}.

    lhs = C_{n+m,n},
    rhs = (2n+2m+1)(n+1) / (4 (2n+1) (n+m+1)^2 (n+m)^m); (n+m)^m is 1 at m=0.
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    lhs = c_constant(n + m, n)
    rhs = Fraction(
        (2 * n + 2 * m + 1) * (n + 1),
        4 * (2 * n + 1) * (n + m + 1) ** 2 * (n + m) ** m,
    )
    return {"lhs": lhs, "rhs": rhs, "holds": lhs >= rhs}


def lambda_reindex_identity(n: int, m: int) -> bool:
    """(n+m)(n+m+1) - n^2 == n + (2n+1)m + m^2, exact integers."""
    ell = n + m
    return ell * (ell + 1) - n * n == n + (2 * n + 1) * m + m * m


def crown_masses(n: int, ell_max: int, a: float) -> np.ndarray:
    """Measured masses of v_{ell,n} on (a, pi/2), ell = n .. ell_max.

    Exact-degree quadrature after t = sin x; returns a vector of diagonal
    crown masses.
    """
    if a >= HALF_PI:
        return np.zeros(ell_max - n + 1)
    rule = gauss_legendre((math.sin(a), 1.0), default_npoints(ell_max, n))
    V = eigenfunction_table(n, ell_max, rule.nodes)
    return (V * V) @ rule.weights


def verify_mass_bound(ell: int, n: int, a: float, slack: float = 1e-13) -> dict:
    """Check the measured crown mass against C_{ell,n} cos^(2n+2) a."""
    if not ell >= n >= 1:
        raise ValueError("need ell >= n >= 1")
    if not 0 <= a <= HALF_PI:
        raise ValueError("need 0 <= a <= pi/2")
    lhs = float(crown_masses(n, ell, a)[-1])
    rhs = float(c_constant(ell, n)) * math.cos(a) ** (2 * n + 2)
    return {"ell": ell, "n": n, "a": a, "lhs": lhs, "rhs": rhs, "holds": lhs >= rhs - slack}


def mass_bound_grid(ell_max: int, n_max: int, a_values) -> list[dict]:
    """verify_mass_bound over a full (ell, n, a) grid; one report row each."""
    rows = []
    for a in a_values:
        for n in range(1, n_max + 1):
            lhs_all = crown_masses(n, ell_max, a)
            cosp = math.cos(a) ** (2 * n + 2)
            for ell in range(n, ell_max + 1):
                lhs = float(lhs_all[ell - n])
                rhs = float(c_constant(ell, n)) * cosp
                rows.append(
                    {"ell": ell, "n": n, "a": a, "lhs": lhs, "rhs": rhs,
                     "holds": lhs >= rhs - 1e-13}
                )
    return rows


def s_series(n: int, T: float, eps: float, a: float, m_max: int = 80) -> dict:
    """Cost series S_n = sum_m exp(-2 beta lambda_{n+m,n}) / mass_{n+m,n}(a).

    beta = T - eps.  Returns both the measured-mass series and the analytic
    majorant that replaces each mass by C_{ell,n} cos^(2n+2) a, together with
    partial sums and a convergence flag (successive partial sums within
    1e-10 relative).  beta <= 0 is reported as non-convergent.
    """
    beta = T - eps
    report = {"n": n, "beta": beta, "m_max": m_max}
    if beta <= 0:
        report.update(converged=False, total_true=math.inf, total_majorant=math.inf,
                      partial_true=[], partial_majorant=[])
        return report
    masses = crown_masses(n, n + m_max, a)
    lams = mode_eigenvalues(n, n, n + m_max)
    cosp = math.cos(a) ** (2 * n + 2)
    partial_true, partial_maj = [], []
    tot_t = tot_m = 0.0
    converged = False
    for m in range(m_max + 1):
        w = math.exp(-2.0 * beta * lams[m]) if 2 * beta * lams[m] < 745 else 0.0
        tot_t += w / masses[m]
        tot_m += w / (float(c_constant(n + m, n)) * cosp) if w else 0.0
        partial_true.append(tot_t)
        partial_maj.append(tot_m)
        if m >= 2 and w <= 1e-10 * tot_t * max(masses[m], 1.0):
            if abs(partial_true[-1] - partial_true[-2]) <= 1e-10 * abs(partial_true[-1]):
                converged = True
                break
    report.update(converged=converged, total_true=tot_t, total_majorant=tot_m,
                  partial_true=partial_true, partial_majorant=partial_maj)
    return report


def write_mass_report_csv(rows: list[dict], path, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["ell", "n", "a", "lhs", "rhs", "holds"])
        for r in rows:
            writer.writerow([r["ell"], r["n"], f"{r['a']:.12g}",
                             f"{r['lhs']:.16e}", f"{r['rhs']:.16e}", int(r["holds"])])


def write_summary_json(path, checked: int, failures: int, params: dict | None = None) -> None:
    payload = {"checked": checked, "failures": failures}
    if params:
        payload["params"] = params
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
