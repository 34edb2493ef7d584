"""Normalized associated Legendre eigenfunctions, shifted Jacobi polynomials,
and Gauss-Legendre quadrature.

The latitude modes of the spherical Baouendi-Grushin operator are, for each
integer order n >= 0, the functions

    v_{ell,n}(x) = sqrt((2*ell+1)/2 * (ell-n)!/(ell+n)!) * P_ell^n(sin x)

on x in [-pi/2, pi/2], orthonormal for the weight cos(x) dx.  P_ell^n is the
associated Legendre function of the first kind with the Condon-Shortley phase
(-1)^n.  Everything here evaluates through normalization-in-recurrence so
that no factorial is ever formed explicitly; values stay bounded up to
ell ~ 200 where the raw P_ell^n would overflow near ell ~ 85.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModeIndex",
    "QuadratureRule",
    "RootFindingError",
    "eigenvalue",
    "eval_eigenfunction",
    "eval_eigenfunction_dx",
    "eigenfunction_table",
    "derivative_table",
    "shifted_jacobi",
    "gauss_legendre",
    "default_npoints",
]


class RootFindingError(RuntimeError):
    """Newton iteration for quadrature nodes failed to converge."""


@dataclass(frozen=True)
class ModeIndex:
    """Index (ell, n) of one eigenpair of the mode operator of order n.

    Negative orders are mapped to |n| on construction; the eigenpair only
    depends on |n|.
    """

    ell: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "n", abs(int(self.n)))
        object.__setattr__(self, "ell", int(self.ell))
        if self.ell < 0 or self.n > self.ell:
            raise ValueError(f"need 0 <= n <= ell, got ell={self.ell}, n={self.n}")


def eigenvalue(m: ModeIndex) -> float:
    """Eigenvalue ell*(ell+1) - n^2, computed in integer arithmetic."""
    return float(m.ell * (m.ell + 1) - m.n * m.n)


def _seed_normalized(n: int, t: np.ndarray) -> np.ndarray:
    """v_{n,n} at t = sin x: (-1)^n sqrt((2n+1)/2) prod_k sqrt((2k-1)/(2k)) (1-t^2)^(n/2)."""
    c = math.sqrt((2 * n + 1) / 2.0)
    for k in range(1, n + 1):
        c *= math.sqrt((2 * k - 1) / (2.0 * k))
    if n % 2:
        c = -c
    if n == 0:
        return np.full_like(t, c)
    return c * (1.0 - t * t) ** (n / 2.0)


def eigenfunction_table(n: int, ell_max: int, t: np.ndarray) -> np.ndarray:
    """Rows v_{ell,n}(arcsin t) for ell = n .. ell_max, evaluated at points t.

    Upward three-term recurrence on the pre-normalized functions; stable for
    the full range used here (ell <= 200).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if n < 0 or ell_max < n:
        raise ValueError("need 0 <= n <= ell_max")
    rows = ell_max - n + 1
    out = np.empty((rows, t.size))
    vm1 = _seed_normalized(n, t)
    out[0] = vm1
    if rows == 1:
        return out
    v = math.sqrt(2 * n + 3.0) * t * vm1
    out[1] = v
    for ell in range(n + 1, ell_max):
        a = math.sqrt((2 * ell + 1) * (2 * ell + 3) / ((ell - n + 1) * (ell + n + 1.0)))
        b = math.sqrt(
            (2 * ell + 3) * (ell - n) * (ell + n)
            / ((2 * ell - 1) * (ell - n + 1) * (ell + n + 1.0))
        )
        vm1, v = v, a * t * v - b * vm1
        out[ell - n + 1] = v
    return out


def derivative_table(n: int, ell_max: int, t: np.ndarray) -> np.ndarray:
    """Rows d/dx v_{ell,n} at x = arcsin t, ell = n .. ell_max.

    Uses the order-mixing identity

        d/dx v_{ell,n} = ( sqrt((ell+n)(ell-n+1)) v_{ell,n-1}
                         - sqrt((ell-n)(ell+n+1)) v_{ell,n+1} ) / 2

    (for n = 0 this collapses to -sqrt(ell(ell+1)) v_{ell,1}), which is
    regular at the poles, unlike the same-order derivative recurrence.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    rows = ell_max - n + 1
    ells = np.arange(n, ell_max + 1, dtype=float)
    if n == 0:
        if ell_max == 0:
            return np.zeros((1, t.size))
        upper = eigenfunction_table(1, ell_max, t)  # ell = 1 .. ell_max
        out = np.zeros((rows, t.size))
        out[1:] = -np.sqrt(ells[1:] * (ells[1:] + 1))[:, None] * upper
        return out
    lower = eigenfunction_table(n - 1, ell_max, t)[1:]  # rows ell = n .. ell_max
    out = 0.5 * np.sqrt((ells + n) * (ells - n + 1))[:, None] * lower
    if ell_max >= n + 1:
        upper = eigenfunction_table(n + 1, ell_max, t)  # rows ell = n+1 ..
        out[1:] -= 0.5 * np.sqrt((ells[1:] - n) * (ells[1:] + n + 1))[:, None] * upper
    return out


def eval_eigenfunction(m: ModeIndex, x: float) -> float:
    """v_{ell,n}(x) for a single angle x in [-pi/2, pi/2]."""
    t = np.array([math.sin(x)])
    return float(eigenfunction_table(m.n, m.ell, t)[-1, 0])


def eval_eigenfunction_dx(m: ModeIndex, x: float) -> float:
    """d/dx v_{ell,n}(x) for a single angle."""
    t = np.array([math.sin(x)])
    return float(derivative_table(m.n, m.ell, t)[-1, 0])


def shifted_jacobi(k: int, n: int, u) -> float | np.ndarray:
    """Orthonormal shifted Jacobi polynomial p_k for the weight u^n on [0, 1].

    p_k(u) = sqrt(2k + n + 1) * P_k^{(0,n)}(2u - 1), three-term recurrence.
    """
    if k < 0 or n < 1:
        raise ValueError("need k >= 0 and n >= 1")
    u = np.asarray(u, dtype=float)
    z = 2.0 * u - 1.0
    pkm1 = np.ones_like(z)
    if k == 0:
        p = pkm1
    else:
        pk = 1.0 + (n + 2) * (z - 1.0) / 2.0
        for j in range(2, k + 1):
            # recurrence for P_j^{(a,b)} with a = 0, b = n
            c1 = 2 * j * (j + n) * (2 * j + n - 2)
            c2 = (2 * j + n - 1) * ((2 * j + n) * (2 * j + n - 2) * z - n * n)
            c3 = 2 * (j - 1) * (j + n - 1) * (2 * j + n)
            pkm1, pk = pk, (c2 * pk - c3 * pkm1) / c1
        p = pk
    out = math.sqrt(2 * k + n + 1) * p
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on [lo, hi], exact for polynomials up to exact_degree."""

    nodes: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __post_init__(self):
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    @property
    def length(self) -> float:
        return float(self.weights.sum())

    def integrate(self, f) -> float:
        return float(self.weights @ f(self.nodes))


def _legendre_newton(m: int, tol: float = 1e-15, max_iter: int = 100):
    """Nodes and weights of the m-point rule on [-1, 1] by Newton iteration."""
    i = np.arange(m)
    x = np.cos(math.pi * (i + 0.75) / (m + 0.5))
    for _ in range(max_iter):
        p0 = np.ones_like(x)
        p1 = x.copy()
        if m == 1:
            p0, p1 = p0, x.copy()
        for j in range(2, m + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        if m == 1:
            pm, pm1 = x, np.ones_like(x)
        else:
            pm, pm1 = p1, p0
        dp = m * (x * pm - pm1) / (x * x - 1.0)
        dx = pm / dp
        x -= dx
        if np.max(np.abs(dx)) < tol:
            break
    else:
        raise RootFindingError(f"Legendre nodes did not converge for npoints={m}")
    # final derivative at the converged nodes
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(2, m + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    pm, pm1 = (x, np.ones_like(x)) if m == 1 else (p1, p0)
    dp = m * (x * pm - pm1) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    # enforce the exact symmetry of the rule
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    order = np.argsort(x)
    return x[order], w[order]


def gauss_legendre(interval, npoints: int) -> QuadratureRule:
    """Gauss-Legendre rule with npoints nodes on interval = (lo, hi)."""
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError(f"need lo < hi, got ({lo}, {hi})")
    if npoints < 1:
        raise ValueError("npoints must be >= 1")
    x, w = _legendre_newton(npoints)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return QuadratureRule(mid + half * x, half * w, 2 * npoints - 1)


def default_npoints(ell_max: int, n: int) -> int:
    # exactness with margin for integrands of degree <= 2*ell_max + 2*n
    return ell_max + n + 4
