"""Finite-mode observability constants, dissipation audits, the Carleman
weight, and the minimal-time sweep.

The truncated observability constant of a mode family is the largest
generalized eigenvalue of (A, B) with A = diag(exp(-2 lambda T)) and
B = G o M (Hadamard product of the exponential time pairings and the region
mass matrix): it is the smallest C with ||g(T)||^2 <= C * observed energy
over the truncated span.  The raw constant carries the free dissipation
factor exp(-2 lambda_min T); the dissipation-normalized variant divides that
factor out, which is the quantity whose boundedness across n mirrors the
uniform observability of the strip.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
import scipy.linalg as sla

from .moments import IllConditioned, synthesize
from .spectral import Crown, HALF_PI, SpectralField, mode_eigenvalues, region_mass_matrix

__all__ = [
    "SingularRegion",
    "InvariantViolated",
    "observability_constant",
    "dissipation_audit",
    "CarlemanWeight",
    "build_carleman_weight",
    "SweepReport",
    "sweep_minimal_time",
    "extrapolated_slope",
]


class SingularRegion(RuntimeError):
    """Region mass matrix numerically singular for the requested truncation."""


class InvariantViolated(RuntimeError):
    """A constructed Carleman weight failed one of its structural invariants."""

    def __init__(self, which: str, x: float):
        self.which = which
        self.x = x
        super().__init__(f"weight invariant {which} violated near x = {x:.6g}")


def _normalize_region(region):
    if isinstance(region, Crown):
        return [(region.a, region.b)]
    region = list(region)
    if region and np.isscalar(region[0]):
        return [tuple(region)]
    return [tuple(p) for p in region]


def observability_constant(
    n: int,
    ell_max: int,
    region,
    T: float,
    normalize_dissipation: bool = False,
) -> float:
    """Largest generalized eigenvalue of (A, B) for the truncated mode system.

    ``region`` is a Crown, an (lo, hi) pair, or a list of at most two such
    pairs (the symmetric strip (-b, b) may be given as one interval or as the
    two crowns (-b, 0), (0, b)).  With ``normalize_dissipation`` the free
    decay exp(-2 lambda_min T) of the slowest retained mode is divided out.
    """
    pieces = _normalize_region(region)
    lams = mode_eigenvalues(n, n, ell_max)
    A = np.diag(np.exp(-2.0 * lams * T))
    S = np.add.outer(lams, lams)
    safe = np.where(S == 0, 1.0, S)
    Gt = np.where(S == 0, T, -np.expm1(-safe * T) / safe)
    M = region_mass_matrix(n, ell_max, pieces)
    B = Gt * M
    condB = np.linalg.cond(B)
    if not np.isfinite(condB) or condB > 1e15:
        raise SingularRegion(
            f"region mass matrix degenerate (cond {condB:.2e}); shrink the truncation"
        )
    try:
        if condB > 1e13:
            top = _top_gen_eig_mp(A, B)
        else:
            top = float(sla.eigh(A, B, eigvals_only=True)[-1])
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SingularRegion(str(exc)) from exc
    if normalize_dissipation:
        top *= math.exp(2.0 * lams[0] * T)
    return top


def _top_gen_eig_mp(A: np.ndarray, B: np.ndarray, dps: int = 50) -> float:
    """Generalized top eigenvalue by Cholesky whitening in extended precision."""
    N = A.shape[0]
    with mp.workdps(dps):
        Bm = mp.matrix([[mp.mpf(B[i, j]) for j in range(N)] for i in range(N)])
        Am = mp.matrix([[mp.mpf(A[i, j]) for j in range(N)] for i in range(N)])
        L = mp.cholesky(Bm)
        Li = L**-1
        S = Li * Am * Li.T
        for i in range(N):
            for j in range(i + 1, N):
                S[i, j] = S[j, i] = (S[i, j] + S[j, i]) / 2
        ev, _ = mp.eigsy(S)
        return float(max(ev))


def dissipation_audit(
    n: int, ell_max: int, t: float, T: float, n_random: int = 100, seed: int = 0
) -> dict:
    """Check the semigroup decay bound exp(-n (T-t)) on basis and random states."""
    if not 0 < t < T:
        raise ValueError("need 0 < t < T")
    dt = T - t
    lams = mode_eigenvalues(n, n, ell_max)
    decay = np.exp(-lams * dt)
    bound = math.exp(-n * dt)
    worst = float(decay.max())  # basis states: ratio is exactly exp(-lambda dt)
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        c = rng.standard_normal(lams.size)
        ratio = np.linalg.norm(decay * c) / np.linalg.norm(c)
        worst = max(worst, float(ratio))
    return {
        "n": n,
        "ell_max": ell_max,
        "dt": dt,
        "worst_ratio": worst,
        "bound": bound,
        "ok": worst <= bound * (1 + 1e-12),
    }


# ---------------------------------------------------------------------------
# Carleman weight
# ---------------------------------------------------------------------------

def _boundary_formula(y: np.ndarray, order: int) -> np.ndarray:
    """ln(sin y) + 2y + 2 and derivatives, for y in (0, pi/2]."""
    s, c = np.sin(y), np.cos(y)
    if order == 0:
        return np.log(s) + 2.0 * y + 2.0
    if order == 1:
        return c / s + 2.0
    csc2 = 1.0 / (s * s)
    cot = c / s
    if order == 2:
        return -csc2
    if order == 3:
        return 2.0 * csc2 * cot
    if order == 4:
        return -2.0 * csc2 * (2.0 * cot * cot + csc2)
    raise ValueError("order must be 0..4")


def _hermite_cardinal(k: int) -> np.ndarray:
    """Cardinal polynomial matching d^k/ds^k = 1 at s = 0 and derivatives
    0..4 = 0 at s = 1 (orders other than k vanish at 0 too); degree 9.

    Closed form (s^k / k!) (1-s)^5 sum_i binom(4+i, i) s^i, exact small-integer
    coefficients, so no ill-conditioned solve is involved.
    """
    P = np.polynomial.polynomial
    tail = np.zeros(5 - k)
    for i in range(5 - k):
        tail[i] = math.comb(4 + i, i)
    base = P.polypow([1.0, -1.0], 5)
    coef = P.polymul(base, tail) / math.factorial(k)
    return P.polymul(np.eye(1, k + 1, k).ravel(), coef)


_CARDINALS = None


def _hermite_scaled(h: float, f0, f1) -> np.ndarray:
    """Coefficients in s of the degree-9 interpolant p(s) on [0, 1] with
    p^(k)(0) = f0_k h^k and p^(k)(1) = f1_k h^k (k = 0..4)."""
    global _CARDINALS
    P = np.polynomial.polynomial
    if _CARDINALS is None:
        _CARDINALS = [_hermite_cardinal(k) for k in range(5)]
    coef = np.zeros(10)
    for k in range(5):
        c0 = _CARDINALS[k]
        c1 = np.zeros_like(c0)
        for j in range(c0.size):  # mirrored cardinal: (-1)^k c0(1 - s)
            term = P.polypow([1.0, -1.0], j) * c0[j] if j else np.array([c0[0]])
            c1[: term.size] += term
        if k % 2:
            c1 = -c1
        coef[: c0.size] += f0[k] * h**k * c0
        coef[: c1.size] += f1[k] * h**k * c1
    return coef


def _poly_derivs(coef: np.ndarray):
    polys = [np.asarray(coef, dtype=float)]
    for _ in range(4):
        polys.append(np.polynomial.polynomial.polyder(polys[-1]))
    return polys


@dataclass(frozen=True)
class CarlemanWeight:
    """Even C^4 weight: boundary formula outside |x| = b', plateau 1 inside b'/2.

    The matching ramp on [b'/2, b'] is a piecewise degree-9 Hermite
    interpolant.  Each piece is stored in scaled coordinates anchored at both
    of its endpoints and evaluated from the nearer anchor, so the one-sided
    junction values are exact Horner constants and the measured C^4 defect is
    the construction error, not evaluation cancellation.

    ``pieces`` holds (L, R, coef_from_left, coef_from_right) per ramp piece;
    coefficients are in s = (y-L)/h and tau = (R-y)/h respectively.
    """

    b_prime: float
    pieces: tuple
    _derivs: tuple = field(default=None, repr=False)

    def __post_init__(self):
        der = tuple(
            (_poly_derivs(cL), _poly_derivs(cR)) for (_, _, cL, cR) in self.pieces
        )
        object.__setattr__(self, "_derivs", der)

    @property
    def knots(self) -> tuple:
        return tuple(p[0] for p in self.pieces) + (self.pieces[-1][1],)

    def _ramp_eval(self, y: np.ndarray, order: int) -> np.ndarray:
        P = np.polynomial.polynomial
        out = np.empty_like(y)
        interior = [p[1] for p in self.pieces[:-1]]
        idx = np.searchsorted(interior, y, side="right")
        sgn = -1.0 if order % 2 else 1.0
        for p, (L, R, _, _) in enumerate(self.pieces):
            m = idx == p
            if not np.any(m):
                continue
            h = R - L
            s = (y[m] - L) / h
            dL, dR = self._derivs[p]
            near_left = s <= 0.5
            vals = np.empty_like(s)
            vals[near_left] = P.polyval(s[near_left], dL[order])
            vals[~near_left] = sgn * P.polyval(1.0 - s[~near_left], dR[order])
            out[m] = vals / h**order
        return out

    def _eval(self, x, order: int):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.abs(x)
        out = np.empty_like(y)
        plateau = y <= self.b_prime / 2
        bdy = y >= self.b_prime
        ramp = ~plateau & ~bdy
        out[plateau] = 1.0 if order == 0 else 0.0
        if np.any(bdy):
            out[bdy] = _boundary_formula(np.maximum(y[bdy], 1e-300), order)
        if np.any(ramp):
            out[ramp] = self._ramp_eval(y[ramp], order)
        if order % 2 == 1:
            out = out * np.sign(x)
        return float(out[0]) if scalar else out

    def beta(self, x):
        return self._eval(x, 0)

    def beta_d1(self, x):
        return self._eval(x, 1)

    def beta_d2(self, x):
        return self._eval(x, 2)

    def beta_d3(self, x):
        return self._eval(x, 3)

    def beta_d4(self, x):
        return self._eval(x, 4)

    def junction_mismatch(self) -> float:
        """Worst one-sided derivative jump (orders 0..4) across all junctions.

        Each adjoining representation is evaluated at the junction itself
        from its own anchor; by evenness the negative-side junctions carry
        the same defects.
        """
        worst = 0.0
        plateau = (1.0, 0.0, 0.0, 0.0, 0.0)
        hs = [R - L for (L, R, _, _) in self.pieces]
        for k in range(5):
            sgn = -1.0 if k % 2 else 1.0
            first = float(self._derivs[0][0][k][0]) / hs[0] ** k
            worst = max(worst, abs(first - plateau[k]))
            last = sgn * float(self._derivs[-1][1][k][0]) / hs[-1] ** k
            bdy_val = float(_boundary_formula(np.array([self.b_prime]), k)[0])
            worst = max(worst, abs(last - bdy_val))
            for p in range(len(self.pieces) - 1):  # interior knots, if split
                lo = sgn * float(self._derivs[p][1][k][0]) / hs[p] ** k
                hi = float(self._derivs[p + 1][0][k][0]) / hs[p + 1] ** k
                worst = max(worst, abs(hi - lo))
        return worst

    def audit(self, grid_points: int = 10_000) -> dict:
        """All structural invariants checked on a symmetric grid."""
        x = np.linspace(-HALF_PI, HALF_PI, grid_points)
        x = x[np.abs(np.abs(x) - HALF_PI) > 1e-12]  # ln|sin| is fine, avoid endpoints twice
        beta = self.beta(x)
        d1 = self.beta_d1(x)
        bp = self.b_prime
        ramp = (np.abs(x) >= bp / 2) & (np.abs(x) <= bp)
        inner = np.abs(x) <= bp
        report = {
            "b_prime": bp,
            "min_beta": float(beta.min()),
            "beta_ge_1": bool(beta.min() >= 1 - 1e-9),
            "ramp_sign_min": float((d1[ramp] * np.sign(x[ramp])).min()) if ramp.any() else 0.0,
            "ramp_sign_ok": bool((d1[ramp] * np.sign(x[ramp])).min() >= -1e-9) if ramp.any() else True,
            "inner_sin_min": float((d1[inner] * np.sin(x[inner])).min()) if inner.any() else 0.0,
            "inner_sin_ok": bool((d1[inner] * np.sin(x[inner])).min() >= -1e-9) if inner.any() else True,
            "junction_mismatch": self.junction_mismatch(),
        }
        report["junctions_ok"] = report["junction_mismatch"] <= 1e-8
        report["ok"] = (
            report["beta_ge_1"]
            and report["ramp_sign_ok"]
            and report["inner_sin_ok"]
            and report["junctions_ok"]
        )
        return report


def _make_piece(L: float, R: float, fL, fR):
    h = R - L
    coefL = _hermite_scaled(h, fL, fR)
    flip = lambda f: tuple((-1) ** k * f[k] for k in range(5))
    coefR = _hermite_scaled(h, flip(fR), flip(fL))
    return (L, R, coefL, coefR)


def _ramp_candidate(b_prime: float, split: bool):
    L, R = b_prime / 2, b_prime
    fL = (1.0, 0.0, 0.0, 0.0, 0.0)
    fR = tuple(float(_boundary_formula(np.array([R]), k)[0]) for k in range(5))
    if not split:
        return (_make_piece(L, R, fL, fR),)
    # midpoint knot with monotone data: halfway value, mean slope
    Mid = 0.5 * (L + R)
    fM = (0.5 * (fL[0] + fR[0]), 0.5 * (fR[0] - fL[0]) / (R - L), 0.0, 0.0, 0.0)
    return (_make_piece(L, Mid, fL, fM), _make_piece(Mid, R, fM, fR))


def build_carleman_weight(b_prime: float) -> CarlemanWeight:
    """Construct the C^4 weight for a given interior split point b'.

    The ramp on [b'/2, b'] is the degree-9 two-point Hermite interpolant; if
    its monotonicity invariant fails, the construction retries once with a
    midpoint knot carrying monotone interpolation data, then raises
    ``InvariantViolated``.
    """
    if not 0 < b_prime < HALF_PI:
        raise ValueError("need 0 < b' < pi/2")
    last = None
    for split in (False, True):
        w = CarlemanWeight(b_prime, _ramp_candidate(b_prime, split))
        report = w.audit(4001)
        if report["ok"]:
            return w
        last = report
    which = next(k for k in ("beta_ge_1", "ramp_sign_ok", "inner_sin_ok", "junctions_ok")
                 if not last[k])
    raise InvariantViolated(which, b_prime)


# ---------------------------------------------------------------------------
# Minimal-time sweep
# ---------------------------------------------------------------------------

def extrapolated_slope(ns: np.ndarray, vals: np.ndarray) -> float:
    """Asymptotic slope of vals against ns with the O(1/n) drift removed.

    The log-cost increments behave like s + g/n at finite truncation; the
    two-point Richardson extrapolation of the last two increments recovers s.
    Falls back to least squares when fewer than four points are available.
    """
    ns = np.asarray(ns, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if ns.size < 4:
        return float(np.polyfit(ns, vals, 1)[0])
    inc = np.diff(vals) / np.diff(ns)
    nm = ns[1:]
    i1, i2 = inc[-2], inc[-1]
    g = (i1 - i2) / (1.0 / nm[-2] - 1.0 / nm[-1])
    return float(i2 - g / nm[-1])


@dataclass(frozen=True)
class SweepReport:
    """Per-(T, n) costs of the minimal-time sweep with fitted slopes."""

    a: float
    theoretical_T_min: float
    T_values: np.ndarray
    slopes_ls: np.ndarray
    slopes_extrap: np.ndarray
    T_hat: float | None
    rows: tuple
    params: dict

    def to_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["T", "n", "cost", "cond", "residual", "ok"])
            for r in self.rows:
                writer.writerow([
                    f"{r['T']:.12g}", r["n"],
                    f"{r['cost']:.16e}", f"{r['cond']:.6e}",
                    f"{r['residual']:.6e}", int(r["ok"]),
                ])

    def to_json_dict(self) -> dict:
        return {
            "a": self.a,
            "T_hat": self.T_hat,
            "theoretical_T_min": self.theoretical_T_min,
            "T_values": list(map(float, self.T_values)),
            "slopes_ls": list(map(float, self.slopes_ls)),
            "slopes_extrap": list(map(float, self.slopes_extrap)),
            "params": self.params,
        }


def _zero_crossing(T_values: np.ndarray, slopes: np.ndarray) -> float | None:
    for i in range(len(T_values) - 1):
        s0, s1 = slopes[i], slopes[i + 1]
        if np.isfinite(s0) and np.isfinite(s1) and s0 > 0 >= s1:
            return float(T_values[i] + (T_values[i + 1] - T_values[i]) * s0 / (s0 - s1))
    return None


def sweep_minimal_time(
    a: float,
    T_grid,
    n_max: int,
    N: int,
    *,
    fit_n_min: int = 2,
    precision: str = "dd",
) -> SweepReport:
    """Cost phase transition scan over horizons straddling ln(1/cos a).

    For each horizon, per-mode controls are synthesized for the bottom states
    v_{n,n} on the pole-touching crown (a, pi/2); the slope of log cost in n
    changes sign at the minimal time, and its zero crossing is reported as
    the empirical threshold.  Ill-conditioned grid points are recorded, not
    fatal.
    """
    if not 0 < a < HALF_PI:
        raise ValueError("need a in (0, pi/2)")
    T_values = np.asarray(list(T_grid), dtype=float)
    crown = Crown(a, HALF_PI)
    rows = []
    slopes_ls = []
    slopes_ex = []
    for T in T_values:
        ns, lncosts = [], []
        for n in range(1, n_max + 1):
            try:
                plan = synthesize(
                    SpectralField.single_mode(n, N), crown, float(T), N,
                    precision=precision,
                )
                rows.append({
                    "T": float(T), "n": n, "cost": plan.cost,
                    "cond": plan.family.condition_estimate,
                    "residual": plan.terminal_residual, "ok": True,
                })
                if n >= fit_n_min and plan.cost > 0:
                    ns.append(n)
                    lncosts.append(math.log(plan.cost))
            except IllConditioned as exc:
                rows.append({
                    "T": float(T), "n": n, "cost": math.nan,
                    "cond": exc.cond, "residual": math.nan, "ok": False,
                })
        if len(ns) >= 2:
            slopes_ls.append(float(np.polyfit(ns, lncosts, 1)[0]))
            slopes_ex.append(extrapolated_slope(np.array(ns), np.array(lncosts)))
        else:
            slopes_ls.append(math.nan)
            slopes_ex.append(math.nan)
    slopes_ls = np.array(slopes_ls)
    slopes_ex = np.array(slopes_ex)
    return SweepReport(
        a=a,
        theoretical_T_min=math.log(1.0 / math.cos(a)),
        T_values=T_values,
        slopes_ls=slopes_ls,
        slopes_extrap=slopes_ex,
        T_hat=_zero_crossing(T_values, slopes_ex),
        rows=tuple(rows),
        params={"n_max": n_max, "N": N, "fit_n_min": fit_n_min, "precision": precision},
    )
