import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmaxwell.torus import (
    FieldSample,
    build_grid,
    centered_spectrum,
    differentiate,
    integrate,
    mode_order,
    multiplication_matrix,
    project,
    resample,
    synthesize,
)


def test_small_grid_spectrum():
    g = build_grid(1, 8)
    assert g.D == 3
    np.testing.assert_allclose(g.gamma, [0.0, 2 * np.pi**2, 2 * np.pi**2])


def test_constant_only_grid():
    g = build_grid(0, 4)
    assert g.D == 1
    assert g.gamma.tolist() == [0.0]


def test_largest_eigenvalue():
    g = build_grid(16, 96)
    assert g.D == 33
    assert g.gamma.max() == pytest.approx(2 * np.pi**2 * 256)


def test_mode_order_is_fixed():
    assert mode_order(3).tolist() == [0, 1, -1, 2, -2, 3, -3]


def test_sorted_gamma_pairs():
    g = build_grid(5)
    for k in range(1, 6):
        assert g.gamma[2 * k] == g.gamma[2 * k - 1] == pytest.approx(2 * (np.pi * k) ** 2)


def test_rejects_aliasing_grid():
    with pytest.raises(ValueError, match="alias"):
        build_grid(4, 17)
    assert build_grid(4, 18).N == 18


def test_default_N_is_at_least_3D():
    g = build_grid(16)
    assert g.N >= 3 * g.D


@pytest.mark.parametrize("K", [0, 1, 5, 12])
def test_basis_orthonormal_under_quadrature(K):
    g = build_grid(K, 2 * (2 * K + 1))
    B = g.synthesis
    np.testing.assert_allclose(B.conj().T @ B / g.N, np.eye(g.D), atol=1e-13)


def test_derivative_of_sine():
    g = build_grid(4)
    f = FieldSample(g, np.sin(2 * np.pi * g.nodes))
    np.testing.assert_allclose(differentiate(f).values, 2 * np.pi * np.cos(2 * np.pi * g.nodes), atol=1e-12)


def test_derivative_of_constant():
    g = build_grid(4)
    assert np.max(np.abs(differentiate(FieldSample.constant(g, 3.0)).values)) < 1e-14


def test_derivative_of_cos4pi():
    g = build_grid(2)
    f = FieldSample(g, np.cos(4 * np.pi * g.nodes))
    np.testing.assert_allclose(differentiate(f).values, -4 * np.pi * np.sin(4 * np.pi * g.nodes), atol=1e-12)


def test_derivative_keeps_real_tag():
    g = build_grid(3)
    f = FieldSample(g, np.cos(2 * np.pi * g.nodes))
    assert differentiate(f).is_real
    assert not differentiate(FieldSample(g, np.exp(2j * np.pi * g.nodes))).is_real


@pytest.mark.parametrize("k", [-3, -1, 0, 2, 4])
def test_second_derivative_matches_free_hamiltonian(k):
    g = build_grid(4)
    e = FieldSample(g, np.exp(2j * np.pi * k * g.nodes))
    d2 = differentiate(e, order=2).values
    gamma = 2 * np.pi**2 * k**2
    np.testing.assert_allclose(d2, -2 * gamma * e.values, atol=1e-10)


def test_integrals():
    g = build_grid(3)
    x = g.nodes
    assert integrate(FieldSample.constant(g, 1.0)) == pytest.approx(1.0)
    assert abs(integrate(FieldSample(g, np.cos(2 * np.pi * x)))) < 1e-15
    assert integrate(FieldSample(g, (1 + 0.5 * np.cos(2 * np.pi * x)) ** 2)) == pytest.approx(1.125, abs=1e-14)


band_limited = st.lists(
    st.floats(-2, 2, allow_nan=False), min_size=2 * 6 + 1, max_size=2 * 6 + 1
)


@settings(max_examples=50, deadline=None)
@given(band_limited)
def test_integral_of_derivative_vanishes(coeffs):
    g = build_grid(6)
    f = synthesize(np.array(coeffs), g)
    assert abs(integrate(differentiate(f))) < 1e-11


@settings(max_examples=50, deadline=None)
@given(band_limited)
def test_parseval(coeffs):
    g = build_grid(6)
    c = np.array(coeffs, dtype=complex)
    f = synthesize(c, g)
    energy = integrate(FieldSample(g, np.abs(f.values) ** 2))
    assert energy == pytest.approx(np.sum(np.abs(c) ** 2), rel=1e-12, abs=1e-13)
    np.testing.assert_allclose(project(f), c, atol=1e-12)


def test_centered_spectrum_even_grid_splits_nyquist():
    g = build_grid(1, 8)
    f = FieldSample(g, np.cos(8 * np.pi * g.nodes))
    q, c = centered_spectrum(f)
    assert q[0] == -4 and q[-1] == 4
    assert c[0] == pytest.approx(0.5) and c[-1] == pytest.approx(0.5)


def test_resample_band_limited_is_exact():
    fine, coarse = build_grid(10), build_grid(3)
    f = FieldSample(coarse, 1 + 0.3 * np.cos(2 * np.pi * coarse.nodes) - 0.1 * np.sin(6 * np.pi * coarse.nodes))
    g = resample(f, fine)
    x = fine.nodes
    np.testing.assert_allclose(g.values, 1 + 0.3 * np.cos(2 * np.pi * x) - 0.1 * np.sin(6 * np.pi * x), atol=1e-13)
    assert g.is_real


def test_multiplication_matrix_of_cosine():
    g = build_grid(3)
    M = multiplication_matrix(FieldSample(g, np.cos(2 * np.pi * g.nodes)))
    k = g.modes
    expected = 0.5 * (np.abs(np.subtract.outer(k, k)) == 1)
    np.testing.assert_allclose(M, expected, atol=1e-14)


def test_field_shape_checked():
    g = build_grid(2)
    with pytest.raises(ValueError, match="shape"):
        FieldSample(g, np.zeros(g.N + 1))


def test_field_values_are_read_only():
    g = build_grid(2)
    f = FieldSample.constant(g, 1.0)
    with pytest.raises(ValueError):
        f.values[0] = 2.0
