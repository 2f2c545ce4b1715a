"""Two-moment minimizers and global-energy matching by temperature bisection."""

from dataclasses import dataclass
import logging

import numpy as np

from .errors import BracketError, InfeasibleEnergyError, SolverError
from .operators import (
    DensityOperator,
    circulation_winding,
    energy,
    gauge_transform,
)
from .solver import PenalizedSolveOptions, SolveReport, continuation_solve, validate_density
from .torus import FieldSample, as_field, differentiate, integrate, project, realify

log = logging.getLogger(__name__)

DEFAULT_BRACKET = (0.05, 1.0)
MAX_BRACKET_STEPS = 40
PURE_STATE_RTOL = 1e-6


def default_options():
    return PenalizedSolveOptions(method="newton")


@dataclass(frozen=True)
class ConstraintSet:
    """Density, velocity and one of a temperature or a global energy target."""

    n0: FieldSample
    u0: FieldSample
    T: float = None
    e0: float = None

    def __post_init__(self):
        n0 = validate_density(self.n0)
        u0 = as_field(self.u0, n0.grid)
        if not u0.is_real:
            u0 = FieldSample(u0.grid, realify(u0.values, "velocity u0"))
        circulation_winding(u0)
        object.__setattr__(self, "n0", n0)
        object.__setattr__(self, "u0", u0)
        if (self.T is None) == (self.e0 is None):
            raise ValueError("exactly one of T and e0 must be given")
        if self.T is not None and not self.T > 0:
            raise ValueError(f"temperature must be positive, got {self.T}")
        if self.e0 is not None:
            m0 = compute_m0(n0, u0)
            if self.e0 < m0 - PURE_STATE_RTOL * max(1.0, abs(m0)):
                raise InfeasibleEnergyError(self.e0, m0)

    @property
    def grid(self):
        return self.n0.grid


def flow_energy(n0, u0):
    """1/2 int n0 |u0|^2, the energy carried by the gauge factor."""
    n0, u0 = as_field(n0), as_field(u0)
    return 0.5 * integrate(FieldSample(n0.grid, n0.values * u0.values**2))


def compute_m0(n0, u0):
    """Zero-temperature energy floor 1/2 (int |d sqrt(n0)|^2 + int n0 |u0|^2).

    The first term is evaluated as int |n0'|^2 / (8 n0), which only needs the
    derivative of n0 itself.
    """
    n0 = validate_density(n0)
    u0 = as_field(u0, n0.grid)
    dn = differentiate(n0).values
    return float(np.mean(dn**2 / (8.0 * n0.values))) + flow_energy(n0, u0)


def solve_two_moment(n0, u0, T, opts=None):
    """Minimizer with prescribed density n0 and velocity u0 at temperature T.

    Returns (rho, report); report.ungauged holds the density-only minimizer.
    """
    cs = ConstraintSet(n0, u0, T=T)
    rho0, A, report = continuation_solve(cs.n0, T, opts or default_options())
    report.ungauged = rho0
    rho = gauge_transform(rho0, cs.u0)
    report.notes["energy_ungauged"] = energy(rho0)
    report.notes["flow_energy"] = flow_energy(cs.n0, cs.u0)
    return rho, report


def pure_state(n0, u0):
    """Rank-one operator onto exp(i f) sqrt(n0), f = int_0^x u0."""
    n0 = validate_density(n0)
    root = FieldSample(n0.grid, np.sqrt(n0.values))
    rho = DensityOperator.pure(project(root), n0.grid)
    return gauge_transform(rho, as_field(u0, n0.grid))


def match_energy(n0, u0, e0, bracket=DEFAULT_BRACKET, tol_e=1e-6, opts=None):
    """Temperature T0 whose two-moment minimizer has energy e0.

    Returns (T0, rho, report). When e0 equals m0 up to a relative 1e-6 the
    zero-temperature pure state is returned with T0 = 0 and
    report.notes["pure_state"] set.
    """
    opts = opts or default_options()
    n0 = validate_density(n0)
    u0 = as_field(u0, n0.grid)
    circulation_winding(u0)
    m0 = compute_m0(n0, u0)
    scale = max(1.0, abs(m0))
    if e0 < m0 - PURE_STATE_RTOL * scale:
        raise InfeasibleEnergyError(e0, m0)
    if abs(e0 - m0) <= PURE_STATE_RTOL * scale:
        rho = pure_state(n0, u0)
        report = SolveReport(0.0, "pure_state", converged=True)
        report.notes.update(pure_state=True, m0=m0, e0=e0, energy=energy(rho), evaluations=[])
        return 0.0, rho, report

    shift = flow_energy(n0, u0)
    evaluations = []
    cache = {}

    def E(T):
        if T not in cache:
            rho, A, rep = continuation_solve(n0, T, opts)
            cache[T] = (rho, rep, energy(rho) + shift)
            evaluations.append((T, cache[T][2]))
        return cache[T][2]

    T_lo, T_hi = (float(b) for b in bracket)
    if not 0 < T_lo < T_hi:
        raise ValueError(f"bracket must satisfy 0 < T_lo < T_hi, got {bracket}")
    for _ in range(MAX_BRACKET_STEPS):
        if E(T_hi) >= e0:
            break
        T_lo, T_hi = T_hi, 4.0 * T_hi
    else:
        raise BracketError(f"E_T stayed below e0={e0} up to T={T_hi:g}")
    for _ in range(MAX_BRACKET_STEPS):
        if E(T_lo) <= e0:
            break
        T_hi, T_lo = T_lo, T_lo / 4.0
    else:
        raise BracketError(f"E_T stayed above e0={e0} down to T={T_lo:g}")

    T0 = T_hi if abs(E(T_hi) - e0) <= abs(E(T_lo) - e0) else T_lo
    while abs(E(T0) - e0) > tol_e:
        if T_hi - T_lo <= 4 * np.finfo(float).eps * T_hi:
            raise SolverError(
                f"bisection bracket [{T_lo!r}, {T_hi!r}] collapsed with |E - e0| = "
                f"{abs(E(T0) - e0):.3e} > tol_e={tol_e:g}; energy evaluations are too noisy"
            )
        T0 = 0.5 * (T_lo + T_hi)
        if E(T0) < e0:
            T_lo = T0
        else:
            T_hi = T0
    rho_ungauged, report, E0 = cache[T0]
    rho = gauge_transform(rho_ungauged, u0)
    report.ungauged = rho_ungauged
    report.notes.update(
        pure_state=False, m0=m0, e0=e0, energy=energy(rho), evaluations=sorted(evaluations)
    )
    log.info("matched e0=%g at T0=%.12g after %d solves", e0, T0, len(evaluations))
    return T0, rho, report


__all__ = [
    "ConstraintSet",
    "compute_m0",
    "flow_energy",
    "match_energy",
    "pure_state",
    "solve_two_moment",
]
