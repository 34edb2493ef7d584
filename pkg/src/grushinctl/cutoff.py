"""Cut-off composition: localizing two controls into a general latitude band.

A band (a, b) with b < pi/2 is controlled by gluing the moment control of the
pole-touching crown (a, pi/2) and the moment control of the symmetric strip
(-b, b) with a smooth step chi:

    u = (1 - chi) u_R 1_crown + chi u_L 1_strip + [L_n, chi](f_R - f_L),
    [L_n, chi] z = 2 chi' z_x + (chi'' - tan(x) chi') z,

so the three summands are supported in (a, c2], [c1, b), and (c1, c2)
respectively.  All trajectories are evaluated from closed forms; the sampled
time grid exists only for audits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import mpmath as mp
import numpy as np

from .legendre import derivative_table, eigenfunction_table, gauss_legendre
from .moments import ControlPlan, _synthesize_pieces
from .spectral import Crown, HALF_PI, SpectralField, mode_eigenvalues

__all__ = [
    "CutoffProfile",
    "CutoffConfig",
    "CompositionReport",
    "SupportViolation",
    "make_cutoff",
    "commutator_source",
    "compose",
]

_ULO = 1e-7  # below this, exp(-1/u) underflows to an exact 0.0 anyway


class SupportViolation(RuntimeError):
    def __init__(self, x: float, value: float):
        self.x = x
        self.value = value
        super().__init__(f"composed control leaks outside the band: u({x:.6g}) = {value:.3e}")


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth step: 0 left of c1, 1 right of c2, exp-based transition between."""

    c1: float
    c2: float

    def __post_init__(self):
        if not self.c1 < self.c2:
            raise ValueError("need c1 < c2")

    def _u(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.c1) / (self.c2 - self.c1)

    def chi(self, x) -> np.ndarray:
        u = np.atleast_1d(self._u(x))
        out = np.where(u >= 1.0 - _ULO, 1.0, 0.0)
        mid = (u > _ULO) & (u < 1.0 - _ULO)
        um = u[mid]
        A = np.exp(-1.0 / um)
        B = np.exp(-1.0 / (1.0 - um))
        out[mid] = A / (A + B)
        return out

    def chi_d1(self, x) -> np.ndarray:
        u = np.atleast_1d(self._u(x))
        out = np.zeros_like(u)
        mid = (u > _ULO) & (u < 1.0 - _ULO)
        um = u[mid]
        A = np.exp(-1.0 / um)
        B = np.exp(-1.0 / (1.0 - um))
        h = 1.0 / um**2 + 1.0 / (1.0 - um) ** 2
        out[mid] = A * B * h / (A + B) ** 2
        return out / (self.c2 - self.c1)

    def chi_d2(self, x) -> np.ndarray:
        u = np.atleast_1d(self._u(x))
        out = np.zeros_like(u)
        mid = (u > _ULO) & (u < 1.0 - _ULO)
        um = u[mid]
        A = np.exp(-1.0 / um)
        B = np.exp(-1.0 / (1.0 - um))
        ia2 = 1.0 / um**2
        ib2 = 1.0 / (1.0 - um) ** 2
        h = ia2 + ib2
        hp = -2.0 / um**3 + 2.0 / (1.0 - um) ** 3
        num = A * B * (((ia2 - ib2) * h + hp) * (A + B) - 2.0 * h * (A * ia2 - B * ib2))
        out[mid] = num / (A + B) ** 3
        return out / (self.c2 - self.c1) ** 2


def make_cutoff(c1: float, c2: float) -> CutoffProfile:
    """Smooth step with chi' supported in (c1, c2)."""
    return CutoffProfile(c1, c2)


def commutator_source(profile: CutoffProfile, w: SpectralField, x_grid) -> np.ndarray:
    """Samples of [L_n, chi] w = 2 chi' w_x + (chi'' - tan(x) chi') w."""
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    d1 = profile.chi_d1(x)
    d2 = profile.chi_d2(x)
    active = d1 != 0.0
    out = np.zeros_like(x)
    if np.any(active) or np.any(d2 != 0.0):
        t = np.sin(x)
        V = eigenfunction_table(w.n, w.n + w.truncation - 1, t)
        Dx = derivative_table(w.n, w.n + w.truncation - 1, t)
        wv = w.coeffs @ V
        wx = w.coeffs @ Dx
        out = 2.0 * d1 * wx + (d2 - np.tan(x) * d1) * wv
    return out


@dataclass(frozen=True)
class CutoffConfig:
    """Knobs of the composition; defaults follow the band geometry."""

    c1: float | None = None
    c2: float | None = None
    N: int = 12
    guard: int | None = None          # default 2N, keeps the audited tail small
    precision: str = "dd"
    time_samples: int = 400           # emission grid for u samples
    audit_samples: int = 2001         # internal grid for the FD residual audit
    audit_window: tuple = (0.02, 0.98)
    quad_points: int = 120
    audit_extra_modes: int = 12
    x_samples: int = 241


@dataclass(frozen=True)
class CompositionReport:
    n: int
    a: float
    b: float
    c1: float
    c2: float
    T: float
    N: int
    guard: int
    max_violation: float
    sup_u: float
    terminal_norm: float
    pde_residual: float
    cost_R: float
    cost_L: float
    plan_R: ControlPlan = field(repr=False)
    plan_L: ControlPlan = field(repr=False)
    u_samples: tuple = field(repr=False, default=())

    def to_json_dict(self) -> dict:
        return {
            "n": self.n, "a": self.a, "b": self.b,
            "c1": self.c1, "c2": self.c2, "T": self.T,
            "max_violation": self.max_violation,
            "terminal_norm": self.terminal_norm,
            "pde_residual": self.pde_residual,
            "cost_R": self.cost_R, "cost_L": self.cost_L,
            "N": self.N, "guard": self.guard,
        }


def _piecewise_quad(pieces, npts):
    """Concatenated Gauss-Legendre nodes and weights over smooth pieces."""
    xs, ws = [], []
    for lo, hi in pieces:
        if hi - lo < 1e-14:
            continue
        r = gauss_legendre((lo, hi), npts)
        xs.append(r.nodes)
        ws.append(r.weights)
    return np.concatenate(xs), np.concatenate(ws)


def _weighted_gram(n, ell_max, x, w, weight_vals, rows=None):
    """sum_i w_i weight(x_i) v_r(x_i) v_c(x_i) cos(x_i), all (r, c) pairs."""
    V = eigenfunction_table(n, ell_max, np.sin(x))
    WW = w * weight_vals * np.cos(x)
    R = V if rows is None else V[:rows]
    return (R * WW) @ V.T


def _trajectory_samples(plan: ControlPlan, field0: SpectralField, M_region, J, t):
    """Coefficient trajectories c_m(t) of the controlled flow, closed form.

    c_m(t) = exp(-lam_m t) c0_m + sum_j W_jm E_jm(t) with
    W_jm = sum_k alpha_k M_km D_kj and
    E_jm  = (exp(-lam_j (T-t)) - exp(-lam_j T - lam_m t)) / (lam_j + lam_m).
    """
    n = field0.n
    T = plan.T
    lamJ = mode_eigenvalues(n, n, n + J - 1)
    lamF = plan.family.family.lambdas
    D = plan.family.dual_hi + plan.family.dual_lo
    alphas = plan.alphas
    W = (alphas[:, None] * M_region[: plan.N, :J]).T @ D[: plan.N, :]  # (J, F)
    out = np.exp(-np.outer(lamJ, t)) * field0.padded(J).coeffs[:, None]
    S = lamF[None, :] + lamJ[:, None]  # (J, F)
    S = np.where(S == 0, 1.0, S)
    for i, ti in enumerate(t):
        E = (np.exp(-lamF[None, :] * (T - ti))
             - np.exp(-(lamF[None, :] * T + lamJ[:, None] * ti))) / S
        out[:, i] += (W * E).sum(axis=1)
    return out


def _terminal_coeffs(plan: ControlPlan, field0: SpectralField, M_region, J) -> np.ndarray:
    """Terminal coefficients at truncation J from extended-precision pairings."""
    n = field0.n
    lamJ = mode_eigenvalues(n, n, n + J - 1)
    out = np.exp(-lamJ * plan.T) * field0.padded(J).coeffs
    P = plan.family.pairings(lamJ)
    out += plan.alphas @ (P[: plan.N] * M_region[: plan.N, :J])
    return out


def compose(
    field0: SpectralField,
    crown: Crown,
    T: float,
    config: CutoffConfig | None = None,
) -> CompositionReport:
    """Control of the band (a, b), b < pi/2, by cut-off composition.

    Synthesizes the crown control u_R on (a, pi/2) and the strip control u_L
    on (-b, b), glues the trajectories with the smooth step, assembles the
    composed control on a space-time grid, and audits support, terminal norm
    and the PDE residual.  Raises ``SupportViolation`` if the support audit
    fails; synthesis errors propagate.
    """
    cfg = config or CutoffConfig()
    a, b = crown.a, crown.b
    if not b < HALF_PI:
        raise ValueError("composition targets b < pi/2; use synthesize for b = pi/2")
    if T <= crown.alpha_agmon:
        raise ValueError("need T > ln(1/cos a)")
    c1 = cfg.c1 if cfg.c1 is not None else a + (b - a) / 3
    c2 = cfg.c2 if cfg.c2 is not None else a + 2 * (b - a) / 3
    if not a <= c1 < c2 <= b:
        raise ValueError("need a <= c1 < c2 <= b")
    chi = make_cutoff(c1, c2)
    N = cfg.N
    guard = cfg.guard if cfg.guard is not None else 2 * N
    n = field0.n

    plan_R = _synthesize_pieces(field0, [(a, HALF_PI)], T, N, guard, cfg.precision, True)
    plan_L = _synthesize_pieces(field0, [(-b, b)], T, N, guard, cfg.precision, True)

    J = N + guard + cfg.audit_extra_modes
    ell_max = n + J - 1

    # region mass matrices at the audit truncation
    xR, wR = _piecewise_quad([(a, HALF_PI)], cfg.quad_points)
    M_R = _weighted_gram(n, ell_max, xR, wR, 1.0)
    xL, wL = _piecewise_quad([(-b, b)], cfg.quad_points)
    M_L = _weighted_gram(n, ell_max, xL, wL, 1.0)

    # terminal audit: f(T) = (1 - chi) f_R(T) + chi f_L(T), norm by quadrature
    termR = _terminal_coeffs(plan_R, field0, M_R, J)
    termL = _terminal_coeffs(plan_L, field0, M_L, J)
    xq, wq = _piecewise_quad(
        [(-HALF_PI, c1), (c1, c2), (c2, HALF_PI)], cfg.quad_points
    )
    Vq = eigenfunction_table(n, ell_max, np.sin(xq))
    chi_q = chi.chi(xq)
    gT = (1.0 - chi_q) * (termR @ Vq) + chi_q * (termL @ Vq)
    norm0 = field0.norm() or 1.0
    terminal_norm = math.sqrt(max(float(np.sum(wq * np.cos(xq) * gT * gT)), 0.0)) / norm0

    # trajectories on the audit grid
    t_audit = np.linspace(0.0, T, cfg.audit_samples)
    cR = _trajectory_samples(plan_R, field0, M_R, J, t_audit)
    cL = _trajectory_samples(plan_L, field0, M_L, J, t_audit)

    # composed control samples on the emission grid
    t_emit = np.linspace(0.0, T, cfg.time_samples)
    x_emit = np.linspace(-HALF_PI, HALF_PI, cfg.x_samples)
    iR = np.searchsorted(t_audit, t_emit).clip(0, len(t_audit) - 1)
    u_grid = _assemble_u(
        plan_R, plan_L, chi, a, b, n, ell_max, x_emit, t_emit, cR[:, iR], cL[:, iR]
    )
    sup_u = float(np.abs(u_grid).max())
    outside = (x_emit <= a) | (x_emit >= b)
    max_violation = float(np.abs(u_grid[:, outside]).max()) if outside.any() else 0.0
    if sup_u > 0 and max_violation > 1e-8 * sup_u:
        j = int(np.abs(u_grid[:, outside]).max(axis=0).argmax())
        raise SupportViolation(float(x_emit[outside][j]), max_violation)

    pde_residual = _pde_residual(
        plan_R, plan_L, chi, field0, M_R, M_L, J, t_audit, cR, cL, cfg
    ) / norm0

    return CompositionReport(
        n=n, a=a, b=b, c1=c1, c2=c2, T=T, N=N, guard=guard,
        max_violation=max_violation / sup_u if sup_u > 0 else 0.0,
        sup_u=sup_u,
        terminal_norm=terminal_norm,
        pde_residual=pde_residual,
        cost_R=plan_R.cost, cost_L=plan_L.cost,
        plan_R=plan_R, plan_L=plan_L,
        u_samples=(t_emit, x_emit, u_grid),
    )


def _assemble_u(plan_R, plan_L, chi, a, b, n, ell_max, x, t, cR_t, cL_t):
    """u(t_i, x_j) per the composition formula; rows time, columns space."""
    sin_x = np.sin(x)
    V = eigenfunction_table(n, ell_max, sin_x)
    Dx = derivative_table(n, ell_max, sin_x)
    chi_x = chi.chi(x)
    d1 = chi.chi_d1(x)
    d2 = chi.chi_d2(x)
    qR = plan_R.family.q_values(t)[: plan_R.N]
    qL = plan_L.family.q_values(t)[: plan_L.N]
    in_R = ((x > a) & (x < HALF_PI)).astype(float)
    in_L = ((x > -b) & (x < b)).astype(float)
    profR = plan_R.alphas[:, None] * V[: plan_R.N]  # (N, X)
    profL = plan_L.alphas[:, None] * V[: plan_L.N]
    U = (qR.T @ profR) * ((1.0 - chi_x) * in_R)[None, :]
    U += (qL.T @ profL) * (chi_x * in_L)[None, :]
    w_t = cR_t - cL_t  # (J, times)
    wv = w_t.T @ V
    wx = w_t.T @ Dx
    U += 2.0 * d1[None, :] * wx + (d2 - np.tan(x) * d1)[None, :] * wv
    return U


def _pde_residual(plan_R, plan_L, chi, field0, M_R, M_L, J, t, cR, cL, cfg) -> float:
    """L^2(dt, cos x dx) norm of d/dt f - L_n f - u over the audit window.

    The time derivative is a 4th-order central difference of the composed
    coefficients; the right-hand side is assembled spectrally from the
    chi-weighted mass matrices, so the only truncation in play is the mode
    cut at J (chi is smooth, its matrices decay fast off the diagonal).
    """
    n = field0.n
    ell_max = n + J - 1
    lamJ = mode_eigenvalues(n, n, ell_max)
    a, bb = plan_R.region_pieces[0][0], plan_L.region_pieces[0][1]
    c1, c2 = chi.c1, chi.c2

    xm, wm = _piecewise_quad([(c1, c2)], max(cfg.quad_points, 80))
    chi_m = chi.chi(xm)
    X = _weighted_gram(n, ell_max, xm, wm, chi_m)
    xq2, wq2 = _piecewise_quad([(c2, HALF_PI)], cfg.quad_points)
    X += _weighted_gram(n, ell_max, xq2, wq2, 1.0)

    M1 = _weighted_gram(n, ell_max, xm, wm, 1.0 - chi_m, rows=plan_R.N)
    xq1, wq1 = _piecewise_quad([(a, c1)], cfg.quad_points)
    M1 += _weighted_gram(n, ell_max, xq1, wq1, 1.0, rows=plan_R.N)

    M2 = _weighted_gram(n, ell_max, xm, wm, chi_m, rows=plan_L.N)
    xq3, wq3 = _piecewise_quad([(c2, bb)], cfg.quad_points)
    M2 += _weighted_gram(n, ell_max, xq3, wq3, 1.0, rows=plan_L.N)

    V = eigenfunction_table(n, ell_max, np.sin(xm))
    Dx = derivative_table(n, ell_max, np.sin(xm))
    d1 = chi.chi_d1(xm)
    d2 = chi.chi_d2(xm)
    ww = wm * np.cos(xm)
    K = ((2.0 * d1 * ww) * Dx) @ V.T + (((d2 - np.tan(xm) * d1) * ww) * V) @ V.T

    # composed coefficients and control coefficients on the grid
    comp = (np.eye(J) - X) @ cR + X @ cL            # (J, times)
    qR = plan_R.family.q_values(t)[: plan_R.N]
    qL = plan_L.family.q_values(t)[: plan_L.N]
    w_t = cR - cL
    b_t = M1.T @ (plan_R.alphas[:, None] * qR)
    b_t += M2.T @ (plan_L.alphas[:, None] * qL)
    b_t += K.T @ w_t

    h = t[1] - t[0]
    inner = slice(2, len(t) - 2)
    dcdt = (-comp[:, 4:] + 8 * comp[:, 3:-1] - 8 * comp[:, 1:-3] + comp[:, :-4]) / (12 * h)
    resid = dcdt + lamJ[:, None] * comp[:, inner] - b_t[:, inner]
    tt = t[inner]
    mask = (tt >= cfg.audit_window[0] * plan_R.T) & (tt <= cfg.audit_window[1] * plan_R.T)
    r2 = np.sum(resid[:, mask] ** 2, axis=0)
    return float(math.sqrt(np.sum(r2) * h))
