"""Divided-difference kernel of lambda -> exp(-beta lambda) and the Frechet map Z.

For H = sum_p lambda_p |phi_p><phi_p| the derivative of exp(-beta (H + h S))
at h = 0 is Z = V (varsigma o M) V^*, where M = V^* S V and varsigma holds the
divided differences of exp(-beta .) between eigenvalue pairs.
"""

from dataclasses import dataclass

import numpy as np

from .torus import as_field, multiplication_matrix, realify

DEGENERACY_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class VarsigmaTable:
    """Divided differences varsigma_{m,k} of exp(-beta lambda)."""

    beta: float
    lambdas: np.ndarray
    table: np.ndarray

    def absolute_sum(self):
        return float(np.abs(self.table).sum())


def varsigma_table(lambdas, beta, degeneracy_threshold=DEGENERACY_THRESHOLD):
    """Table of (e^{-beta l_k} - e^{-beta l_m}) / (l_k - l_m).

    Pairs closer than threshold * (1 + |l_k| + |l_m|) use the midpoint
    derivative -beta exp(-beta (l_k + l_m) / 2).

    >>> float(varsigma_table([0.0, 0.0], 1.0).table[0, 1])
    -1.0
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    lam = np.asarray(lambdas, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalues must be finite")
    lk, lm = lam[:, None], lam[None, :]
    diff = lk - lm
    near = np.abs(diff) <= degeneracy_threshold * (1.0 + np.abs(lk) + np.abs(lm))
    # Anchor on the smaller eigenvalue so the exponential never overflows
    # relative to the difference; expm1 keeps the small-gap digits.
    lo = np.minimum(lk, lm)
    gap = np.abs(diff)
    safe_gap = np.where(near, 1.0, gap)
    table = np.exp(-beta * lo) * np.expm1(-beta * gap) / safe_gap
    table = np.where(near, -beta * np.exp(-0.5 * beta * (lk + lm)), table)
    table = 0.5 * (table + table.T)
    lam = lam.copy()
    lam.setflags(write=False)
    table.setflags(write=False)
    return VarsigmaTable(float(beta), lam, table)


def _sigma_matrix(sigma_density, grid=None):
    s = as_field(sigma_density, grid)
    if not s.is_real:
        s = type(s)(s.grid, realify(s.values, "n[sigma]"))
    return multiplication_matrix(s)


def apply_Z(beta, H_eig, sigma_density, table=None):
    """Directional derivative of exp(-beta H) along the multiplication by n[sigma].

    Parameters
    ----------
    beta : float
        Inverse temperature.
    H_eig : tuple
        (lambdas, V) eigendecomposition of H in the plane-wave basis.
    sigma_density : FieldSample
        Real field whose Galerkin matrix is the perturbation direction.
    table : VarsigmaTable, optional
        Precomputed divided differences for the same (lambdas, beta).

    Returns
    -------
    ndarray
        Hermitian D x D matrix in the plane-wave basis.
    """
    lam, V = H_eig
    S = _sigma_matrix(sigma_density)
    if S.shape[0] != V.shape[0]:
        raise ValueError(f"direction has dimension {S.shape[0]}, eigenbasis {V.shape[0]}")
    if table is None:
        table = varsigma_table(lam, beta)
    M = V.conj().T @ S @ V
    Z = V @ (table.table * M) @ V.conj().T
    return 0.5 * (Z + Z.conj().T)


def z_quadratic_form(Z, sigma_density):
    """Tr(Z S) for S the Galerkin matrix of n[sigma]; nonpositive for Z from apply_Z."""
    S = _sigma_matrix(sigma_density)
    return float(np.real(np.sum(Z * S.T)))


def density_response(lambdas, V, beta, grid):
    """Jacobian dn/dA of A -> n[exp(-beta (H0 + A))] at the nodes of `grid`.

    Entry (i, j) is the change of n(x_i) under a unit change of A(x_j), with A
    entering through its collocation Galerkin matrix. The matrix is symmetric
    negative semidefinite.
    """
    table = varsigma_table(lambdas, beta)
    P = grid.synthesis @ V
    Q = (P[:, :, None] * P.conj()[:, None, :]).reshape(grid.N, -1)
    chi = (Q * table.table.reshape(-1)) @ Q.conj().T / grid.N
    chi = np.real(chi)
    return 0.5 * (chi + chi.T)


__all__ = [
    "DEGENERACY_THRESHOLD",
    "VarsigmaTable",
    "apply_Z",
    "density_response",
    "varsigma_table",
    "z_quadratic_form",
]
