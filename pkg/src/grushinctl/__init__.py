"""Spectral controllability laboratory for the heat flow of the spherical
Baouendi-Grushin operator.

The package covers the full constructive chain: stable evaluation of the
normalized associated Legendre eigenfunctions, exact certification of their
crown-mass lower bounds, biorthogonal-family moment controls with cost
certificates, finite-mode observability Gramians, the C^4 Carleman weight,
cut-off composition onto general latitude bands, and the sweep that exhibits
ln(1/cos a) as a measurable cost phase transition.
"""

__version__ = "0.1.0"

from .legendre import (
    ModeIndex,
    QuadratureRule,
    eigenvalue,
    eval_eigenfunction,
    eval_eigenfunction_dx,
    eigenfunction_table,
    gauss_legendre,
    shifted_jacobi,
)
from .spectral import (
    Crown,
    SpectralField,
    TimeGrid,
    crown_mass_matrix,
    region_mass_matrix,
    duhamel_terminal,
    evolve_free,
)
from .massbounds import (
    c_constant,
    christoffel_kernel,
    s_series,
    verify_lemma_B1,
    verify_mass_bound,
)
from .moments import (
    BiorthogonalFamily,
    ControlPlan,
    ExponentialFamily,
    IllConditioned,
    ZeroMass,
    biorthogonal,
    gap_audit,
    gram_matrix,
    synthesize,
)
from .observability import (
    CarlemanWeight,
    InvariantViolated,
    SweepReport,
    build_carleman_weight,
    dissipation_audit,
    observability_constant,
    sweep_minimal_time,
)
from .cutoff import (
    CompositionReport,
    CutoffConfig,
    CutoffProfile,
    SupportViolation,
    commutator_source,
    compose,
    make_cutoff,
)

__all__ = [
    "__version__",
    "ModeIndex", "QuadratureRule", "eigenvalue", "eval_eigenfunction",
    "eval_eigenfunction_dx", "eigenfunction_table", "gauss_legendre",
    "shifted_jacobi",
    "Crown", "SpectralField", "TimeGrid", "crown_mass_matrix",
    "region_mass_matrix", "duhamel_terminal", "evolve_free",
    "c_constant", "christoffel_kernel", "s_series", "verify_lemma_B1",
    "verify_mass_bound",
    "BiorthogonalFamily", "ControlPlan", "ExponentialFamily", "IllConditioned",
    "ZeroMass", "biorthogonal", "gap_audit", "gram_matrix", "synthesize",
    "CarlemanWeight", "InvariantViolated", "SweepReport",
    "build_carleman_weight", "dissipation_audit", "observability_constant",
    "sweep_minimal_time",
    "CompositionReport", "CutoffConfig", "CutoffProfile", "SupportViolation",
    "commutator_source", "compose", "make_cutoff",
]
