"""Penalized density-constrained Gibbs states with epsilon continuation.

For a target density n0 and temperature T, the penalized minimizer has the form
rho = exp(-(H0 + A) / T) with A = (n[rho] - n0) / eps. The solvers below find A
by descent on the penalized free energy

    Phi(A) = E(rho) + T S(rho) + ||n[rho] - n0||^2 / (2 eps),   rho = rho(A),

along either the fixed-point residual (n[rho] - n0) / eps - A or its Newton
correction built from the density response dn/dA.
"""

from dataclasses import dataclass, field, replace
import logging

import numpy as np

from .errors import DivergenceError, GibbsOverflowError, MaxIterationsError, SolverError
from .frechet import density_response
from .operators import (
    density,
    density_from_hamiltonian,
    energy,
    entropy,
    entropy_function,
    moments,
)
from .torus import FieldSample, as_field, l2_norm, realify

log = logging.getLogger(__name__)

MIN_DENSITY = 1e-8
DEFAULT_LADDER = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
METHODS = ("fixed_point", "newton")


@dataclass(frozen=True)
class PenalizedSolveOptions:
    """Knobs of the penalized solve.

    ``tol_fixed_point`` bounds the L2 norm of the residual (n - n0)/eps - A at
    acceptance. At small eps that residual cannot drop below the roundoff of
    n/eps, so the tolerance actually used is raised to
    ``roundoff_factor * machine_eps * max(n0) / eps`` when that is larger.
    """

    epsilon_ladder: tuple = DEFAULT_LADDER
    damping: float = 1.0
    max_iters: int = 20000
    tol_fixed_point: float = 1e-7
    tol_constraint: float = 1e-5
    method: str = "fixed_point"
    divergence_window: int = 50
    min_damping: float = 1e-10
    roundoff_factor: float = 64.0

    def __post_init__(self):
        ladder = tuple(float(e) for e in self.epsilon_ladder)
        if not ladder or any(e <= 0 for e in ladder):
            raise ValueError("epsilon ladder must be a nonempty sequence of positive numbers")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError(f"epsilon ladder must be strictly decreasing, got {ladder}")
        object.__setattr__(self, "epsilon_ladder", ladder)
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.max_iters < 1 or self.divergence_window < 2:
            raise ValueError("max_iters must be >= 1 and divergence_window >= 2")
        if self.tol_fixed_point <= 0 or self.tol_constraint <= 0:
            raise ValueError("tolerances must be positive")

    def effective_tolerance(self, eps, n0_max):
        floor = self.roundoff_factor * np.finfo(float).eps * n0_max / eps
        return max(self.tol_fixed_point, floor)

    def energy_tolerance(self, n0_max):
        """Energy uncertainty of an accepted solve at the last rung.

        A residual d is the exact answer for the target n0 - eps d, so to first
        order it moves E by at most eps * ||d|| times an O(1) sensitivity.
        """
        eps = self.epsilon_ladder[-1]
        return eps * self.effective_tolerance(eps, n0_max)


@dataclass
class RungRecord:
    """Outcome of one penalized solve."""

    eps: float
    iterations: int
    norm_A: float
    constraint_residual: float
    fixed_point_residual: float
    tolerance: float
    energy: float
    entropy: float
    free_energy_trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    converged: bool = False


@dataclass
class SolveReport:
    """Diagnostics of a (continuation) solve, one record per epsilon rung."""

    temperature: float
    method: str
    rungs: list = field(default_factory=list)
    converged: bool = False
    potential: FieldSample = None
    ungauged: object = None
    notes: dict = field(default_factory=dict)

    @property
    def eps(self):
        return [r.eps for r in self.rungs]

    @property
    def iterations(self):
        return [r.iterations for r in self.rungs]

    @property
    def norm_A(self):
        return [r.norm_A for r in self.rungs]

    @property
    def constraint_residuals(self):
        return [r.constraint_residual for r in self.rungs]

    @property
    def free_energy_trace(self):
        return [F for r in self.rungs for F in r.free_energy_trace]

    @property
    def final(self):
        return self.rungs[-1] if self.rungs else None

    def to_dict(self):
        return {
            "temperature": self.temperature,
            "method": self.method,
            "converged": self.converged,
            "notes": dict(self.notes),
            "rungs": [
                {
                    "eps": r.eps,
                    "iterations": r.iterations,
                    "norm_A": r.norm_A,
                    "constraint_residual": r.constraint_residual,
                    "fixed_point_residual": r.fixed_point_residual,
                    "tolerance": r.tolerance,
                    "energy": r.energy,
                    "entropy": r.entropy,
                    "converged": r.converged,
                }
                for r in self.rungs
            ],
        }


def validate_density(n0):
    n0 = as_field(n0)
    if not n0.is_real:
        n0 = FieldSample(n0.grid, realify(n0.values, "density n0"))
    if not np.all(np.isfinite(n0.values)):
        raise ValueError("density n0 has non-finite samples")
    if n0.values.min() < MIN_DENSITY:
        raise ValueError(f"density n0 must be >= {MIN_DENSITY} pointwise, min is {n0.values.min():.3e}")
    return n0


class _Objective:
    """Evaluates rho(A), the penalized free energy and the fixed-point residual."""

    def __init__(self, n0, T, eps):
        self.n0 = n0
        self.T = T
        self.eps = eps

    def __call__(self, A):
        rho = density_from_hamiltonian(FieldSample(self.n0.grid, A), self.T)
        n = density(rho).values
        gap = n - self.n0.values
        E, S = energy(rho), entropy(rho)
        # Wild trial steps may overflow here; phi = inf simply rejects them.
        with np.errstate(over="ignore"):
            phi = E + self.T * S + np.mean(gap**2) / (2 * self.eps)
            d = gap / self.eps - A
            res = float(np.sqrt(np.mean(d**2)))
        return _State(A, rho, n, E, S, phi, d, res)


@dataclass
class _State:
    A: np.ndarray
    rho: object
    n: np.ndarray
    E: float
    S: float
    phi: float
    d: np.ndarray
    res: float


def _newton_direction(state, n0, T, eps):
    rho = state.rho
    chi = density_response(rho.hamiltonian_eigenvalues, rho.eigenvectors, 1.0 / T, n0.grid)
    J = np.eye(n0.grid.N) - chi / eps
    return np.linalg.solve(J, state.d)


def solve_penalized(n0, T, eps, A_init=None, opts=None):
    """Penalized Gibbs state for one value of eps.

    Returns (rho, A, report). Raises DivergenceError when the step size
    collapses or the residual grows over a whole window, and MaxIterationsError
    when the budget runs out; both carry the best iterate seen.
    """
    opts = opts or PenalizedSolveOptions()
    n0 = validate_density(n0)
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    grid = n0.grid
    A = np.zeros(grid.N) if A_init is None else np.array(as_field(A_init, grid).values, dtype=float)
    objective = _Objective(n0, float(T), float(eps))
    tol = opts.effective_tolerance(eps, float(n0.values.max()))

    state = objective(A)
    best = state
    phi_trace, res_trace = [state.phi], [state.res]
    theta = opts.damping
    growth = 0
    report = SolveReport(float(T), opts.method)

    def record(converged, it):
        st = state
        rung = RungRecord(
            eps=float(eps),
            iterations=it,
            norm_A=l2_norm(st.A, grid),
            constraint_residual=l2_norm(st.n - n0.values, grid),
            fixed_point_residual=st.res,
            tolerance=tol,
            energy=st.E,
            entropy=st.S,
            free_energy_trace=phi_trace,
            residual_trace=res_trace,
            converged=converged,
        )
        report.rungs.append(rung)
        report.converged = converged
        report.potential = FieldSample(grid, st.A)
        return rung

    for it in range(opts.max_iters):
        if state.res < tol:
            record(True, it)
            return state.rho, FieldSample(grid, state.A), report
        if opts.method == "newton":
            direction = _newton_direction(state, n0, T, eps)
            theta = 1.0
        else:
            direction = state.d
        slack = 1e-12 * (1.0 + abs(state.phi))
        while True:
            try:
                trial = objective(state.A + theta * direction)
            except GibbsOverflowError:
                trial = None
            if trial is not None and trial.phi <= state.phi + slack:
                break
            theta *= 0.5
            if theta < opts.min_damping:
                record(False, it)
                raise DivergenceError(
                    f"step size collapsed below {opts.min_damping:g} at eps={eps:g}, "
                    f"residual {state.res:.3e} (tolerance {tol:.3e})",
                    report=report,
                    best=(best.rho, FieldSample(grid, best.A)),
                )
        if opts.method == "fixed_point":
            theta = min(1.0, 1.2 * theta) if trial.res < state.res else 0.5 * theta
        growth = growth + 1 if trial.res > state.res else 0
        state = trial
        phi_trace.append(state.phi)
        res_trace.append(state.res)
        if state.res < best.res:
            best = state
        if growth >= opts.divergence_window:
            record(False, it + 1)
            raise DivergenceError(
                f"fixed-point residual grew for {growth} consecutive steps at eps={eps:g}",
                report=report,
                best=(best.rho, FieldSample(grid, best.A)),
            )
    if state.res < tol:
        record(True, opts.max_iters)
        return state.rho, FieldSample(grid, state.A), report
    record(False, opts.max_iters)
    raise MaxIterationsError(
        f"no convergence in {opts.max_iters} iterations at eps={eps:g}: "
        f"residual {state.res:.3e}, tolerance {tol:.3e}",
        report=report,
        best=(best.rho, FieldSample(grid, best.A)),
    )


def continuation_solve(n0, T, opts=None, A_init=None):
    """Run solve_penalized down the epsilon ladder with warm starts.

    The first rung starts from A = 0 unless `A_init` is given. A failing rung
    raises its SolverError with the report extended by all completed rungs.
    """
    opts = opts or PenalizedSolveOptions()
    n0 = validate_density(n0)
    report = SolveReport(float(T), opts.method)
    A = A_init
    rho = None
    for eps in opts.epsilon_ladder:
        try:
            rho, A, rung_report = solve_penalized(n0, T, eps, A, opts)
        except SolverError as exc:
            if exc.report is not None:
                report.rungs.extend(exc.report.rungs)
            report.converged = False
            exc.report = report
            raise
        report.rungs.extend(rung_report.rungs)
        log.debug(
            "T=%g eps=%g: %d iterations, |A|=%.6g, |n-n0|=%.3e",
            T, eps, rung_report.final.iterations, rung_report.final.norm_A,
            rung_report.final.constraint_residual,
        )
    report.converged = True
    report.potential = A
    if report.final.constraint_residual > opts.tol_constraint:
        log.warning(
            "constraint residual %.3e exceeds tol_constraint %.3e at the last rung",
            report.final.constraint_residual, opts.tol_constraint,
        )
    return rho, A, report


def chemical_potential_identity_check(rho, A, T):
    """L2 mismatch between A and (Lap(n)/4 - k - T n[rho log rho]) / n.

    The identity follows from applying (H0 + A) phi_p = lambda_p phi_p with
    log rho_p = -lambda_p / T inside sum_p rho_p conj(phi_p) (...), so it holds
    for every Gibbs state regardless of how well n matches a target.
    """
    A = as_field(A, rho.grid)
    m = moments(rho)
    n = m.n.values
    lap_n = 8.0 * (m.k.values - m.w.values)
    r = rho.eigenvalues
    rlogr = entropy_function(r) + r
    phi = rho.grid.synthesis @ rho.eigenvectors
    n_rlogr = (np.abs(phi) ** 2) @ rlogr
    rhs = (0.25 * lap_n - m.k.values - T * n_rlogr) / n
    return l2_norm(rhs - A.values, rho.grid)


def with_ladder(opts, ladder):
    return replace(opts, epsilon_ladder=tuple(ladder))


__all__ = [
    "DEFAULT_LADDER",
    "PenalizedSolveOptions",
    "RungRecord",
    "SolveReport",
    "chemical_potential_identity_check",
    "continuation_solve",
    "solve_penalized",
    "validate_density",
]
