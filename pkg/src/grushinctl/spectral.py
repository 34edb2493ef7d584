"""Mode-wise spectral states, crown geometry, and exact semigroup evolution.

A state of the order-n mode system is a finite coefficient vector against the
orthonormal eigenfunctions v_{ell,n}, ell = n .. n+N-1.  The free evolution is
diagonal, c_ell -> exp(-lambda_ell * dt) * c_ell, so no time stepping is ever
performed; controlled evolution is evaluated through closed-form pairings
supplied by the moment machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .legendre import (
    default_npoints,
    derivative_table,
    eigenfunction_table,
    gauss_legendre,
)

__all__ = [
    "Crown",
    "DegenerateCrownError",
    "SpectralField",
    "TimeGrid",
    "mode_eigenvalues",
    "crown_mass_matrix",
    "region_mass_matrix",
    "evolve_free",
    "duhamel_terminal",
    "field_values",
    "field_derivative_values",
]

HALF_PI = math.pi / 2


class DegenerateCrownError(ValueError):
    """Crown with a >= b."""


@dataclass(frozen=True)
class Crown:
    """Latitude band a < x < b with 0 <= a < b <= pi/2.

    ``alpha_agmon`` is ln(1/cos a), the concentration rate that sets the
    minimal control time of the band.
    """

    a: float
    b: float

    def __post_init__(self):
        if not (0 <= self.a < self.b <= HALF_PI + 1e-12):
            raise DegenerateCrownError(f"need 0 <= a < b <= pi/2, got ({self.a}, {self.b})")

    @property
    def alpha_agmon(self) -> float:
        return math.log(1.0 / math.cos(self.a))

    @property
    def touches_pole(self) -> bool:
        return abs(self.b - HALF_PI) < 1e-12


@dataclass(frozen=True)
class SpectralField:
    """Coefficients of a mode-n state: coeffs[i] multiplies v_{n+i,n}."""

    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coeffs must be a non-empty 1-d array")
        if not np.all(np.isfinite(c)):
            raise ValueError("coeffs must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def truncation(self) -> int:
        return self.coeffs.size

    @property
    def ells(self) -> np.ndarray:
        return np.arange(self.n, self.n + self.truncation)

    def norm(self) -> float:
        # Parseval in the orthonormal basis of the mode space
        return float(np.linalg.norm(self.coeffs))

    def padded(self, N: int) -> "SpectralField":
        if N < self.truncation:
            raise ValueError("cannot pad to a smaller truncation")
        out = np.zeros(N)
        out[: self.truncation] = self.coeffs
        return SpectralField(self.n, out)

    @classmethod
    def single_mode(cls, n: int, N: int = 1) -> "SpectralField":
        c = np.zeros(N)
        c[0] = 1.0
        return cls(n, c)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    samples: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("horizon must be positive")
        s = self.samples
        if s is None:
            s = np.linspace(0.0, self.T, 401)
        s = np.asarray(s, dtype=float)
        if s[0] < 0 or s[-1] > self.T + 1e-15 or np.any(np.diff(s) <= 0):
            raise ValueError("samples must increase within [0, T]")
        object.__setattr__(self, "samples", s)

    @classmethod
    def uniform(cls, T: float, nsamples: int = 401) -> "TimeGrid":
        return cls(T, np.linspace(0.0, T, nsamples))


def mode_eigenvalues(n: int, ell_lo: int, ell_hi: int) -> np.ndarray:
    ells = np.arange(ell_lo, ell_hi + 1, dtype=np.int64)
    return (ells * (ells + 1) - n * n).astype(float)


def _interval_mass(n: int, ell_max: int, x_lo: float, x_hi: float) -> np.ndarray:
    """Gram of v_{ell,n} restricted to (x_lo, x_hi) for cos x dx.

    Substituting t = sin x makes every entry a polynomial integral of degree
    ell + k, so the mapped Gauss-Legendre rule is exact up to rounding.
    """
    lo, hi = math.sin(x_lo), math.sin(x_hi)
    rule = gauss_legendre((lo, hi), default_npoints(ell_max, n))
    V = eigenfunction_table(n, ell_max, rule.nodes)
    M = (V * rule.weights) @ V.T
    return 0.5 * (M + M.T)


def crown_mass_matrix(n: int, ell_max: int, crown: Crown) -> np.ndarray:
    """Entries (ell, k): integral of v_{ell,n} v_{k,n} cos x over the crown."""
    if ell_max < n:
        raise ValueError("need ell_max >= n")
    return _interval_mass(n, ell_max, crown.a, crown.b)


def region_mass_matrix(n: int, ell_max: int, pieces) -> np.ndarray:
    """Mass matrix of a union of up to two disjoint latitude intervals."""
    pieces = list(pieces)
    if not 1 <= len(pieces) <= 2:
        raise ValueError("region must be one or two intervals")
    M = None
    for lo, hi in pieces:
        if not (-HALF_PI - 1e-12 <= lo < hi <= HALF_PI + 1e-12):
            raise ValueError(f"bad interval ({lo}, {hi})")
        Mi = _interval_mass(n, ell_max, lo, hi)
        M = Mi if M is None else M + Mi
    return M


def evolve_free(f: SpectralField, dt: float) -> SpectralField:
    """Diagonal semigroup: c_ell -> exp(-lambda_ell dt) c_ell."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return f
    lams = mode_eigenvalues(f.n, f.n, f.n + f.truncation - 1)
    return SpectralField(f.n, np.exp(-lams * dt) * f.coeffs)


def duhamel_terminal(field0: SpectralField, plan, T: float) -> SpectralField:
    """Terminal state of the controlled mode system, in closed form.

    ``plan`` is a ControlPlan from the moment machinery.  The terminal
    coefficient on v_ell is

        exp(-lambda_ell T) c0_ell + sum_k alpha_k <q_k, e_ell> M_{k,ell}

    with the time pairings <q_k, e_ell> evaluated exactly from the dual
    coefficients (no time stepping) and M the region mass matrix.  The audit
    truncation is the truncation of ``field0``.
    """
    if plan.n != field0.n:
        raise ValueError("mode order mismatch between field and control plan")
    if abs(plan.T - T) > 1e-12:
        raise ValueError("control horizon differs from requested T")
    J = field0.truncation
    n = field0.n
    lams = mode_eigenvalues(n, n, n + J - 1)
    out = np.exp(-lams * T) * field0.coeffs
    alphas = np.asarray(plan.alphas, dtype=float)
    if np.any(alphas != 0.0):
        P = plan.family.pairings(lams)          # (family size, J)
        M = region_mass_matrix(n, n + J - 1, plan.region_pieces)
        K = min(alphas.size, P.shape[0])
        out = out + (alphas[:K] @ (P[:K] * M[:K, :]))
    return SpectralField(n, out)


def field_values(f: SpectralField, x) -> np.ndarray:
    """Pointwise values sum_ell c_ell v_{ell,n}(x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    V = eigenfunction_table(f.n, f.n + f.truncation - 1, np.sin(x))
    return f.coeffs @ V


def field_derivative_values(f: SpectralField, x) -> np.ndarray:
    """Pointwise values of the x-derivative of the reconstructed field."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    D = derivative_table(f.n, f.n + f.truncation - 1, np.sin(x))
    return f.coeffs @ D
