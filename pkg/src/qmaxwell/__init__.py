"""Density-constrained quantum Gibbs states on the one-dimensional torus.

Plane-wave Galerkin discretization, penalized solves for the chemical
potential, gauge transforms for prescribed currents, global-energy matching and
numerical checks of the accompanying structural properties.
"""

__version__ = "0.1.0"

from .errors import (
    BracketError,
    CirculationError,
    ConfigError,
    DivergenceError,
    EigenSolverError,
    GibbsOverflowError,
    InfeasibleEnergyError,
    MaxIterationsError,
    NotPositiveSemidefiniteError,
    QMaxwellError,
    SolverError,
)
from .frechet import VarsigmaTable, apply_Z, density_response, varsigma_table, z_quadratic_form
from .lab import (
    TemperatureScan,
    check_energy_entropy_relation,
    inequality_suite,
    temperature_scan,
    zero_T_limit,
)
from .matching import ConstraintSet, compute_m0, match_energy, solve_two_moment
from .operators import (
    DensityOperator,
    Moments,
    density_from_hamiltonian,
    energy,
    entropy,
    free_energy,
    gauge_transform,
    moments,
)
from .solver import (
    PenalizedSolveOptions,
    SolveReport,
    chemical_potential_identity_check,
    continuation_solve,
    solve_penalized,
)
from .torus import FieldSample, SpectralGrid, build_grid, differentiate, integrate
