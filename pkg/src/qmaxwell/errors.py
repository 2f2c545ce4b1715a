"""Exception hierarchy shared by the solver, matcher and CLI."""


class QMaxwellError(Exception):
    """Base class for all package errors."""


class EigenSolverError(QMaxwellError):
    """The Hermitian eigensolver failed to converge."""


class GibbsOverflowError(QMaxwellError, ValueError):
    """exp(-(H0 + A) / T) exceeds the floating point range."""


class NotPositiveSemidefiniteError(QMaxwellError, ValueError):
    """A matrix meant as a density operator has a significantly negative eigenvalue."""


class CirculationError(QMaxwellError, ValueError):
    """The velocity field does not have a circulation in 2*pi*Z.

    On the torus the gauge factor exp(i f), f(x) = int_0^x u0, is single valued
    only when int_0^1 u0 dx is an integer multiple of 2*pi.
    """


class InfeasibleEnergyError(QMaxwellError, ValueError):
    """Requested global energy lies below the zero-temperature floor m0."""

    def __init__(self, e0, m0):
        self.e0 = e0
        self.m0 = m0
        super().__init__(
            f"energy target e0={e0!r} is below the minimal admissible energy m0={m0!r}"
        )


class SolverError(QMaxwellError):
    """Inner solve failure. Carries the partial report and the best iterate seen."""

    def __init__(self, message, report=None, best=None):
        super().__init__(message)
        self.report = report
        self.best = best


class DivergenceError(SolverError):
    """Fixed-point residual kept growing, or the damping collapsed."""


class MaxIterationsError(SolverError):
    """Iteration budget of a rung exhausted before reaching the tolerance."""


class BracketError(SolverError):
    """Temperature bracket could not be expanded around the energy target."""


class ConfigError(QMaxwellError, ValueError):
    """Invalid run configuration."""
