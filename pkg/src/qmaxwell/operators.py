"""Density operators in the plane-wave basis and their moments.

A density operator is stored through its eigendecomposition: eigenvalues in
descending order (clamped at zero) and the matching orthonormal eigenvectors,
whose columns hold the basis coefficients of the eigenfunctions phi_p.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft

from .errors import (
    CirculationError,
    EigenSolverError,
    GibbsOverflowError,
    NotPositiveSemidefiniteError,
)
from .torus import (
    FieldSample,
    SpectralGrid,
    as_field,
    build_grid,
    centered_spectrum,
    differentiate,
    evaluate_spectrum,
    integrate,
    multiplication_matrix,
    realify,
)

# Eigenvalues below this contribute exactly zero to the entropy.
ENTROPY_FLOOR = 1e-300
# Relative Hermitian tolerance for matrices handed to from_matrix.
HERMITIAN_TOL = 1e-10
# Accepted mismatch between int u0 and the nearest multiple of 2 pi.
CIRCULATION_TOL = 1e-8
# Target size of the neglected Fourier tail of the gauge factor.
GAUGE_TAIL_TOL = 1e-15


def psd_tolerance(eigenvalues):
    top = float(np.max(eigenvalues, initial=0.0))
    return 1e-12 * (1.0 + max(top, 0.0))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian positive semidefinite operator on the span of a grid's basis.

    Attributes
    ----------
    grid : SpectralGrid
    eigenvalues : ndarray
        rho_p >= 0, descending.
    eigenvectors : ndarray
        D x r matrix with orthonormal columns.
    hamiltonian_eigenvalues : ndarray or None
        For Gibbs states, the eigenvalues lambda_p of H0 + A matching the columns.
    temperature : float or None
        For Gibbs states, the temperature T with rho_p = exp(-lambda_p / T).
    """

    grid: SpectralGrid
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    hamiltonian_eigenvalues: np.ndarray = None
    temperature: float = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).copy()
        V = np.asarray(self.eigenvectors, dtype=complex).copy()
        if V.ndim != 2 or V.shape[0] != self.grid.D or V.shape[1] != lam.shape[0]:
            raise ValueError(
                f"eigenvectors of shape {V.shape} do not match D={self.grid.D} "
                f"and {lam.shape[0]} eigenvalues"
            )
        if lam.size and lam.min() < -psd_tolerance(lam):
            raise NotPositiveSemidefiniteError(
                f"eigenvalue {lam.min():.3e} is below -tol_psd={-psd_tolerance(lam):.3e}"
            )
        lam = np.maximum(lam, 0.0)
        order = np.argsort(-lam, kind="stable")
        lam, V = lam[order], V[:, order]
        hev = self.hamiltonian_eigenvalues
        if hev is not None:
            hev = np.asarray(hev, dtype=float)[order].copy()
            hev.setflags(write=False)
            object.__setattr__(self, "hamiltonian_eigenvalues", hev)
        lam.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", V)

    @classmethod
    def from_matrix(cls, matrix, grid):
        """Diagonalize a Hermitian PSD matrix given in the basis of `grid`."""
        M = np.asarray(matrix, dtype=complex)
        if M.shape != (grid.D, grid.D):
            raise ValueError(f"matrix has shape {M.shape}, expected ({grid.D}, {grid.D})")
        scale = max(1.0, np.linalg.norm(M))
        if np.linalg.norm(M - M.conj().T) > HERMITIAN_TOL * scale:
            raise ValueError("matrix is not Hermitian")
        lam, V = _eigh(0.5 * (M + M.conj().T))
        return cls(grid, lam, V)

    @classmethod
    def pure(cls, coefficients, grid, weight=None):
        """Rank-one operator |phi><phi| for phi given by basis coefficients.

        With `weight` the operator is weight * |phi><phi| / ||phi||^2, otherwise
        the unnormalized projector-like |phi><phi|.
        """
        c = np.asarray(coefficients, dtype=complex)
        norm2 = float(np.vdot(c, c).real)
        if norm2 == 0.0:
            return cls(grid, np.zeros(0), np.zeros((grid.D, 0)))
        lam = norm2 if weight is None else float(weight)
        return cls(grid, np.array([lam]), (c / np.sqrt(norm2))[:, None])

    @classmethod
    def mixture(cls, weights, states, grid):
        """sum_i w_i |phi_i><phi_i| for normalized coefficient vectors phi_i."""
        M = np.zeros((grid.D, grid.D), dtype=complex)
        for w, c in zip(weights, states):
            c = np.asarray(c, dtype=complex)
            c = c / np.linalg.norm(c)
            M += w * np.outer(c, c.conj())
        return cls.from_matrix(M, grid)

    @cached_property
    def matrix(self):
        V = self.eigenvectors
        M = (V * self.eigenvalues) @ V.conj().T
        M.setflags(write=False)
        return M

    @property
    def rank(self):
        return int(np.count_nonzero(self.eigenvalues > psd_tolerance(self.eigenvalues)))

    def trace(self):
        return float(np.sum(self.eigenvalues))

    def diagonal(self):
        """Diagonal of the matrix in the plane-wave basis."""
        return (np.abs(self.eigenvectors) ** 2) @ self.eigenvalues


@dataclass(frozen=True)
class Moments:
    """Local moments of a density operator sampled on a grid."""

    n: FieldSample
    current: FieldSample
    k: FieldSample
    w: FieldSample

    @property
    def grid(self):
        return self.n.grid

    def velocity(self):
        return FieldSample(self.grid, self.current.values / self.n.values)


def _eigh(H):
    try:
        return np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"Hermitian eigensolver failed: {exc}") from exc


def hamiltonian_matrix(A, grid=None):
    """Matrix of H0 + A in the plane-wave basis (A a real field)."""
    A = as_field(A, grid)
    if not A.is_real:
        A = FieldSample(A.grid, realify(A.values, "potential A"))
    return np.diag(A.grid.gamma).astype(complex) + multiplication_matrix(A)


def hamiltonian_spectrum(A, grid=None):
    """Ascending eigenvalues and eigenvectors of H0 + A."""
    return _eigh(hamiltonian_matrix(A, grid))


def density_from_hamiltonian(A, T, grid=None):
    """Gibbs state exp(-(H0 + A) / T).

    >>> g = build_grid(1, 8)
    >>> rho = density_from_hamiltonian(np.zeros(8), 1.0, g)
    >>> np.allclose(np.diag(rho.matrix).real, [1, np.exp(-2 * np.pi**2), np.exp(-2 * np.pi**2)])
    True
    """
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    A = as_field(A, grid)
    lam, V = hamiltonian_spectrum(A)
    with np.errstate(over="raise"):
        try:
            rho = np.exp(-lam / T)
        except FloatingPointError as exc:
            raise GibbsOverflowError(
                f"exp(-lambda/T) overflows: lowest eigenvalue {lam[0]:.3e} at T={T}"
            ) from exc
    return DensityOperator(A.grid, rho, V, hamiltonian_eigenvalues=lam, temperature=float(T))


def _basis_values(rho, grid):
    """Eigenfunctions phi_p and derivatives at the nodes of `grid`."""
    if grid is None or grid.same_as(rho.grid):
        B = rho.grid.synthesis
    else:
        B = np.exp(2j * np.pi * np.outer(grid.nodes, rho.grid.modes))
    ik = 2j * np.pi * rho.grid.modes
    V = rho.eigenvectors
    return B @ V, (B * ik) @ V, (B * ik**2) @ V


def density(rho, grid=None):
    """n[rho] = sum_p rho_p |phi_p|^2 at the nodes of `grid` (default: rho.grid)."""
    target = grid or rho.grid
    phi, _, _ = _basis_values(rho, grid)
    return FieldSample(target, (np.abs(phi) ** 2) @ rho.eigenvalues)


def moments(rho, grid=None):
    """Density, current, kinetic and total energy densities of rho.

    The eigenfunctions and their first two derivatives are synthesized exactly
    from the basis coefficients, so every moment is exact at the nodes.
    `grid` selects the nodes; it defaults to the operator's own grid.
    """
    target = grid or rho.grid
    phi, dphi, d2phi = _basis_values(rho, grid)
    r = rho.eigenvalues
    n = (np.abs(phi) ** 2) @ r
    nu = np.imag(phi.conj() * dphi) @ r
    k = 0.5 * (np.abs(dphi) ** 2) @ r
    # Laplacian of n is 2 Re(conj(phi) phi'') + 2 |phi'|^2 per eigenfunction.
    lap_n = 2.0 * (np.real(phi.conj() * d2phi) + np.abs(dphi) ** 2) @ r
    w = k - lap_n / 8.0
    return Moments(
        FieldSample(target, n),
        FieldSample(target, nu),
        FieldSample(target, k),
        FieldSample(target, w),
    )


def energy(rho):
    """Kinetic energy Tr(sqrt(H0) rho sqrt(H0)) = sum_j gamma_j rho_jj."""
    return float(np.dot(rho.grid.gamma, rho.diagonal()))


def entropy_function(x):
    """s(x) = x log x - x with s(0) = 0, applied elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x >= ENTROPY_FLOOR
    out[pos] = x[pos] * np.log(x[pos]) - x[pos]
    return out


def entropy(rho):
    return float(np.sum(entropy_function(rho.eigenvalues)))


def free_energy(rho, T):
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    return energy(rho) + T * entropy(rho)


def circulation_winding(u0, tol=CIRCULATION_TOL):
    """Integer m with int u0 = 2 pi m, or CirculationError."""
    u0 = as_field(u0)
    if not u0.is_real:
        raise ValueError("velocity u0 must be real")
    circ = integrate(u0)
    m = int(np.rint(circ / (2 * np.pi)))
    if abs(circ - 2 * np.pi * m) > tol:
        raise CirculationError(
            f"int u0 dx = {circ!r} is not a multiple of 2*pi (nearest {2 * np.pi * m!r}); "
            "exp(i f) with f = int_0^x u0 would not be periodic"
        )
    return m


def phase_field(u0, x):
    """Periodic part g of f(x) = int_0^x u0 = 2 pi m x + g(x), at points x."""
    u0 = as_field(u0)
    q, c = centered_spectrum(u0)
    nz = q != 0
    coef = np.zeros_like(c)
    coef[nz] = c[nz] / (2j * np.pi * q[nz])
    g = evaluate_spectrum(q, coef, x) - coef.sum()
    return realify(g, "phase")


def _gauge_factor_spectrum(u0):
    """Centered Fourier coefficients of exp(i g), resolved down to roundoff."""
    Nf = max(256, 8 * u0.grid.N)
    while True:
        x = np.arange(Nf) / Nf
        h = np.exp(1j * phase_field(u0, x))
        c = fft.fftshift(fft.fft(h)) / Nf
        q = np.arange(Nf) - Nf // 2
        # The coefficients near the fine-grid Nyquist must already be negligible.
        edge = np.abs(c[np.abs(q) > Nf // 2 - Nf // 8]).max()
        if edge < GAUGE_TAIL_TOL or Nf >= 2**16:
            return q, c
        Nf *= 2


def gauge_transform(rho, u0):
    """Conjugate rho by the multiplication operator exp(i f), f(x) = int_0^x u0.

    The result lives on an enlarged basis that holds the products exp(i f) phi_p
    up to a Fourier tail below 1e-15; its eigenvalues are those of rho.
    """
    u0 = as_field(u0)
    m = circulation_winding(u0)
    if not np.any(u0.values):
        return rho
    q, c = _gauge_factor_spectrum(u0)
    # Smallest P beyond which every coefficient is below the tail tolerance;
    # the decay is faster than geometric, so the neglected sum is of that size.
    big = np.abs(q[np.abs(c) >= GAUGE_TAIL_TOL])
    P = int(big.max()) if big.size else 0
    K_new = rho.grid.K + abs(m) + P
    new_grid = build_grid(K_new)
    # U[k', k] = (e_k', exp(i f) e_k) = c_{k' - k - m}
    shift = np.subtract.outer(new_grid.modes, rho.grid.modes) - m
    U = np.where(np.abs(shift) <= P, c[np.clip(shift - q[0], 0, q.size - 1)], 0.0)
    W = U @ rho.eigenvectors
    return DensityOperator(
        new_grid,
        rho.eigenvalues,
        W,
        hamiltonian_eigenvalues=rho.hamiltonian_eigenvalues,
        temperature=rho.temperature,
    )


def lower_energy_bound(n):
    """1/2 int |d sqrt(n)|^2 = int |n'|^2 / (8 n), for n > 0."""
    n = as_field(n)
    dn = differentiate(n).values
    pos = n.values > 0
    vals = np.zeros_like(dn)
    vals[pos] = dn[pos] ** 2 / (8.0 * n.values[pos])
    return float(np.mean(vals))


__all__ = [
    "DensityOperator",
    "Moments",
    "circulation_winding",
    "density",
    "density_from_hamiltonian",
    "energy",
    "entropy",
    "entropy_function",
    "free_energy",
    "gauge_transform",
    "hamiltonian_matrix",
    "hamiltonian_spectrum",
    "lower_energy_bound",
    "moments",
    "phase_field",
]
