"""Plane-wave discretization of the 1-torus [0, 1).

The Galerkin basis is e_k(x) = exp(2 pi i k x) for |k| <= K, stored in the fixed
order (0, +1, -1, +2, -2, ...). Every matrix in the package uses this ordering.
Fields live on the N equispaced collocation nodes x_j = j / N and are integrated
with the periodic trapezoid rule.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft

# Relative size of an imaginary part that is still treated as roundoff.
REAL_ROUNDOFF = 1e-10


def mode_order(K):
    """Integer wavenumbers in storage order: 0, 1, -1, 2, -2, ..., K, -K."""
    modes = np.zeros(2 * K + 1, dtype=int)
    modes[1::2] = np.arange(1, K + 1)
    modes[2::2] = -np.arange(1, K + 1)
    return modes


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Truncated plane-wave basis with its collocation grid.

    Attributes
    ----------
    K : int
        Mode cutoff; the basis has D = 2K + 1 functions.
    N : int
        Number of collocation nodes, at least 2D so that products of two
        band-limited basis functions are integrated exactly.
    """

    K: int
    N: int

    @property
    def D(self):
        return 2 * self.K + 1

    @cached_property
    def nodes(self):
        return np.arange(self.N) / self.N

    @cached_property
    def modes(self):
        return mode_order(self.K)

    @cached_property
    def gamma(self):
        """Eigenvalues of the free Hamiltonian -1/2 d^2/dx^2 per basis mode."""
        return 2.0 * np.pi**2 * self.modes.astype(float) ** 2

    @cached_property
    def synthesis(self):
        """N x D matrix of basis values e_k(x_j)."""
        return np.exp(2j * np.pi * np.outer(self.nodes, self.modes))

    @cached_property
    def synthesis_gradient(self):
        """N x D matrix of basis derivatives 2 pi i k e_k(x_j)."""
        return self.synthesis * (2j * np.pi * self.modes)

    def __repr__(self):
        return f"SpectralGrid(K={self.K}, N={self.N})"

    def same_as(self, other):
        return self.K == other.K and self.N == other.N


def build_grid(K, N=None):
    """Build the plane-wave grid with cutoff K.

    N defaults to 3D rounded up to an FFT-friendly length; anything below 2D is
    rejected because products of basis functions would alias.

    >>> g = build_grid(1, 8)
    >>> g.D, g.gamma.tolist() == [0.0, 2 * np.pi**2, 2 * np.pi**2]
    (3, True)
    """
    K = int(K)
    if K < 0:
        raise ValueError(f"mode cutoff K must be >= 0, got {K}")
    D = 2 * K + 1
    if N is None:
        N = fft.next_fast_len(3 * D)
    N = int(N)
    if N < 2 * D:
        raise ValueError(f"N={N} collocation points alias products of {D} modes; need N >= {2 * D}")
    return SpectralGrid(K, N)


@dataclass(frozen=True, eq=False)
class FieldSample:
    """A periodic function sampled on the collocation nodes of a grid.

    The parity tag is carried by the dtype: real fields are stored as float64,
    complex fields as complex128.
    """

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.N,):
            raise ValueError(f"field has shape {v.shape}, expected ({self.grid.N},)")
        v = v.astype(complex if np.iscomplexobj(v) else float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def kind(self):
        return "complex" if np.iscomplexobj(self.values) else "real"

    @property
    def is_real(self):
        return self.kind == "real"

    @classmethod
    def from_function(cls, grid, func):
        return cls(grid, np.asarray(func(grid.nodes)) * np.ones(grid.N))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.N, c))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.grid.N

    def real_part(self):
        return FieldSample(self.grid, self.values.real)


def as_field(f, grid=None):
    """Coerce an array or FieldSample to a FieldSample on `grid`."""
    if isinstance(f, FieldSample):
        if grid is not None and not f.grid.same_as(grid):
            raise ValueError(f"field lives on {f.grid}, expected {grid}")
        return f
    if grid is None:
        raise ValueError("a grid is required to interpret raw samples")
    return FieldSample(grid, np.asarray(f))


def realify(values, what="field"):
    """Drop an imaginary part that is pure roundoff; raise if it is not."""
    values = np.asarray(values)
    if not np.iscomplexobj(values):
        return values
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    if np.max(np.abs(values.imag), initial=0.0) > REAL_ROUNDOFF * scale:
        raise ValueError(f"{what} is not real (max |Im| = {np.max(np.abs(values.imag)):.3e})")
    return values.real.copy()


def _wavenumbers(N):
    return fft.fftfreq(N, 1.0 / N)


def differentiate(f, grid=None, order=1):
    """Spectral derivative of a sampled periodic field.

    Exact for fields band-limited to |q| < N/2. The Nyquist coefficient is
    dropped for odd orders, which keeps real fields real.
    """
    f = as_field(f, grid)
    N = f.grid.N
    q = _wavenumbers(N)
    mult = (2j * np.pi * q) ** order
    if N % 2 == 0 and order % 2 == 1:
        mult[N // 2] = 0.0
    out = fft.ifft(fft.fft(f.values) * mult)
    if f.is_real:
        out = realify(out, "derivative of a real field")
    return FieldSample(f.grid, out)


def integrate(f, grid=None):
    """Periodic trapezoid rule (1/N) sum_j f(x_j); exact for modes |q| < N."""
    f = as_field(f, grid)
    val = np.mean(f.values)
    return float(val) if f.is_real else complex(val)


def l2_norm(f, grid=None):
    f = as_field(f, grid)
    return float(np.sqrt(np.mean(np.abs(f.values) ** 2)))


def centered_spectrum(f, grid=None):
    """Fourier coefficients c_q with f(x_j) = sum_q c_q exp(2 pi i q x_j).

    Returns (q, c) with q running over a symmetric range. For even N the Nyquist
    coefficient is split evenly between +N/2 and -N/2, which is the band-limited
    interpolant that stays real for real data.
    """
    f = as_field(f, grid)
    N = f.grid.N
    c = fft.fft(f.values) / N
    if N % 2 == 1:
        M = N // 2
        q = np.arange(-M, M + 1)
        return q, np.concatenate([c[-M:], c[: M + 1]])
    M = N // 2
    q = np.arange(-M, M + 1)
    body = np.concatenate([c[-M + 1 :], c[:M]])
    nyq = c[M] / 2.0
    return q, np.concatenate([[nyq], body, [nyq]])


def evaluate_spectrum(q, c, x):
    """Evaluate sum_q c_q exp(2 pi i q x) at arbitrary points x."""
    return np.exp(2j * np.pi * np.outer(np.asarray(x), q)) @ c


def resample(f, grid):
    """Band-limited (spectral) interpolation of `f` onto the nodes of `grid`."""
    f = as_field(f)
    if f.grid.same_as(grid):
        return f
    q, c = centered_spectrum(f)
    out = evaluate_spectrum(q, c, grid.nodes)
    if f.is_real:
        out = realify(out, "resampled field")
    return FieldSample(grid, out)


def project(f, grid=None):
    """Galerkin coefficients (e_k, f) for the D basis modes, by quadrature."""
    f = as_field(f, grid)
    return f.grid.synthesis.conj().T @ f.values / f.grid.N


def synthesize(coefficients, grid):
    """Values at the nodes of sum_k c_k e_k(x) for coefficients in basis order."""
    return FieldSample(grid, grid.synthesis @ np.asarray(coefficients, dtype=complex))


def multiplication_matrix(A, grid=None):
    """Galerkin matrix of multiplication by A: entries (e_k, A e_m).

    Assembled by collocation: synthesize, multiply pointwise on the N >= 2D grid,
    project back. Exact whenever A is band-limited to |q| <= N - 2K - 1.
    """
    A = as_field(A, grid)
    B = A.grid.synthesis
    return (B.conj().T * A.values) @ B / A.grid.N
