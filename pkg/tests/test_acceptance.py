"""Acceptance criteria 1-11, one test each.

Every test records (number, title, passed, detail) through the `record`
fixture before asserting, and the terminal summary prints one line per criterion.
"""

import numpy as np
import pytest
from scipy.integrate import simpson
from scipy.linalg import expm

from qmaxwell.frechet import apply_Z, varsigma_table
from qmaxwell.lab import (
    check_energy_entropy_relation,
    geometric_grid,
    inequality_suite,
    monotonicity,
    random_operator,
    temperature_scan,
    zero_T_limit,
)
from qmaxwell.matching import compute_m0, default_options, match_energy, solve_two_moment
from qmaxwell.operators import (
    energy,
    entropy,
    hamiltonian_matrix,
    hamiltonian_spectrum,
    lower_energy_bound,
    moments,
)
from qmaxwell.solver import continuation_solve, with_ladder
from qmaxwell.torus import (
    FieldSample,
    build_grid,
    differentiate,
    integrate,
    l2_norm,
    multiplication_matrix,
)

AMPLITUDE = 0.3


def cosine(grid, amplitude=AMPLITUDE):
    return FieldSample(grid, 1.0 + amplitude * np.cos(2 * np.pi * grid.nodes))


def dense_m0(amplitude=AMPLITUDE, points=20001):
    """1/2 int |d sqrt(n0)|^2 for n0 = 1 + a cos(2 pi x) by composite Simpson."""
    x = np.linspace(0.0, 1.0, points)
    d_sqrt = -np.pi * amplitude * np.sin(2 * np.pi * x) / np.sqrt(1 + amplitude * np.cos(2 * np.pi * x))
    return 0.5 * simpson(d_sqrt**2, x=x)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16)


@pytest.fixture(scope="session")
def zero16(grid16):
    return FieldSample.constant(grid16, 0.0)


@pytest.fixture(scope="session")
def scan_literal(grid16, zero16):
    """The 64-point geometric grid on [0.05, 5]."""
    return temperature_scan(cosine(grid16), zero16, np.geomspace(0.05, 5.0, 64))


@pytest.fixture(scope="session")
def scan_fine(grid16, zero16):
    """128 points per decade on [0.05, 5]; every other point gives 64 per decade."""
    return temperature_scan(cosine(grid16), zero16, geometric_grid(0.05, 5.0, 128))


@pytest.fixture(scope="session")
def suite():
    return inequality_suite(42, 1000)


def test_criterion_01_uniform_density_oracle(grid16, record):
    n0 = FieldSample.constant(grid16, 1.0)
    worst_A = worst_n = 0.0
    for T in (0.5, 1.0, 2.0):
        rho, A, _ = continuation_solve(n0, T, default_options())
        oracle = T * np.log(np.sum(np.exp(-grid16.gamma / T)))
        worst_A = max(worst_A, float(np.max(np.abs(A.values - oracle))))
        worst_n = max(worst_n, float(np.max(np.abs(moments(rho).n.values - 1.0))))
    ok = record(1, "uniform-density oracle", worst_A <= 1e-8 and worst_n <= 1e-8,
                f"max|A - T log theta| = {worst_A:.2e}, max|n - 1| = {worst_n:.2e}")
    assert ok


def test_criterion_02_gauge_decomposition(grid16, record):
    n0 = cosine(grid16)
    u0 = FieldSample.constant(grid16, 2 * np.pi)
    # The energy shift is exact for n[rho]; matching 1/2 int n0 u0^2 to 1e-10
    # needs |n[rho] - n0| ~ eps |A| below that level, hence the longer ladder.
    opts = with_ladder(default_options(), [10.0**-j for j in range(11)])
    rho, report = solve_two_moment(n0, u0, 1.0, opts)
    shift = 0.5 * integrate(FieldSample(grid16, n0.values * u0.values**2))
    rel = abs(energy(rho) - energy(report.ungauged) - shift) / shift
    dS = abs(entropy(rho) - entropy(report.ungauged))
    cur = l2_norm(FieldSample(grid16, moments(rho, grid16).current.values - n0.values * u0.values))
    ok = record(2, "gauge decomposition", rel <= 1e-10 and dS <= 1e-12 and cur <= 1e-5,
                f"energy shift rel err {rel:.2e}, |dS| = {dS:.2e}, current L2 err {cur:.2e}")
    assert ok


def test_criterion_03_moment_identities(record):
    grid = build_grid(8)
    worst = {"trace": 0.0, "energy": 0.0, "w": 0.0, "lower": -np.inf}
    for t in range(200):
        rng = np.random.default_rng([3, t])
        rho = random_operator(rng, grid, ("square", "gibbs", "mixture")[t % 3])
        m = moments(rho)
        E = energy(rho)
        scale = 1.0 + rho.trace() + E
        w_ref = m.k.values - differentiate(m.n, order=2).values / 8.0
        worst["trace"] = max(worst["trace"], abs(rho.trace() - integrate(m.n)) / scale)
        worst["energy"] = max(worst["energy"], abs(E - integrate(m.k)) / scale)
        worst["w"] = max(worst["w"], l2_norm(FieldSample(grid, m.w.values - w_ref)) / scale)
        worst["lower"] = max(worst["lower"], lower_energy_bound(m.n) - E)
    ok = (worst["trace"] <= 1e-12 and worst["energy"] <= 1e-12 and worst["w"] <= 1e-10
          and worst["lower"] <= 1e-12)
    record(3, "moment identities", ok,
           f"trace {worst['trace']:.1e}, energy {worst['energy']:.1e}, w {worst['w']:.1e} "
           f"(scaled); max(lower bound - E) = {worst['lower']:.2e}")
    assert ok


def test_criterion_04_monotonicity(scan_literal, record):
    assert not scan_literal.failures
    verdict = monotonicity(scan_literal)
    bad_E, bad_S = verdict.failing_E(), verdict.failing_S()
    detail = (f"margin {verdict.margin:.1e}; {bad_E.size}/{verdict.E_differences.size} E-secants "
              f"and {bad_S.size} S-secants fail")
    if bad_E.size:
        T_bad = scan_literal.T[bad_E]
        detail += (f" (T <= {T_bad.max():.3g}, |dE| <= "
                   f"{np.abs(verdict.E_differences[bad_E]).max():.1e})")
    ok = record(4, "monotonicity on 64-point grid [0.05, 5]", verdict.passed, detail)
    assert ok


def test_criterion_05_zero_temperature_limit(grid16, zero16, record):
    n0 = cosine(grid16)
    m0 = compute_m0(n0, zero16)
    m0_err = abs(m0 - dense_m0())
    table = zero_T_limit(n0, zero16, [2.0**-j for j in range(8)])
    complete = table.failure is None and table.T.size == 8
    final = float(table.gap[-1]) if table.gap.size else np.nan
    ok = (complete and table.positive() and table.decreasing() and final <= 1e-4
          and m0_err <= 1e-8)
    record(5, "T -> 0 limit", ok,
           f"m0 = {m0:.12g} (oracle err {m0_err:.1e}); gaps "
           + ", ".join(f"{g:.3e}" for g in table.gap)
           + f"; positive={table.positive()} decreasing={table.decreasing()}")
    assert ok


def test_criterion_06_energy_entropy_relation(scan_fine, scan_literal, record):
    assert not scan_fine.failures
    coarse = scan_fine.subsample(2)
    assert coarse.T.size == geometric_grid(0.05, 5.0, 64).size
    d64 = check_energy_entropy_relation(coarse).max_defect
    d128 = check_energy_entropy_relation(scan_fine).max_defect
    d_lit = check_energy_entropy_relation(scan_literal).max_defect
    ratio = d64 / d128 if d128 > 0 else np.inf
    ok = record(6, "energy-entropy relation", d64 <= 5e-3 and ratio >= 3.0,
                f"defect {d64:.2e} at 64/decade, {d128:.2e} at 128/decade (ratio {ratio:.2f}); "
                f"{d_lit:.2e} on the 64-point grid")
    assert ok


def test_criterion_07_frechet_kernel(record):
    grid = build_grid(8)
    x = grid.nodes
    worst = 0.0
    h = 1e-5
    for t in range(50):
        rng = np.random.default_rng([7, t])
        beta = float(np.exp(rng.uniform(np.log(0.2), np.log(2.0))))
        A = sum(rng.normal() * np.cos(2 * np.pi * q * x + rng.uniform(0, 2 * np.pi)) for q in (1, 2, 3))
        d = sum(rng.normal() * np.cos(2 * np.pi * q * x + rng.uniform(0, 2 * np.pi)) for q in (1, 2, 3, 4))
        A, d = FieldSample(grid, A), FieldSample(grid, d)
        H = hamiltonian_matrix(A)
        S = multiplication_matrix(d)
        fd = (expm(-beta * (H + h * S)) - expm(-beta * (H - h * S))) / (2 * h)
        Z = apply_Z(beta, hamiltonian_spectrum(A), d)
        worst = max(worst, np.linalg.norm(Z - fd) / np.linalg.norm(fd))
    lam, _ = hamiltonian_spectrum(FieldSample(grid, np.cos(2 * np.pi * x)))
    tab = varsigma_table(lam, 0.7).table
    symmetric = bool(np.array_equal(tab, tab.T))
    nonpositive = bool(np.all(tab <= 0))
    diagonal = bool(np.array_equal(np.diag(tab), -0.7 * np.exp(-0.7 * lam)))
    ok = record(7, "Frechet kernel", worst <= 1e-6 and symmetric and nonpositive and diagonal,
                f"max rel FD err {worst:.2e}; symmetric={symmetric} nonpositive={nonpositive} "
                f"diagonal exact={diagonal}")
    assert ok


def test_criterion_08_negZ(suite, record):
    again = inequality_suite(42, 1000, threads=1)
    reproducible = again.negz_max == suite.negz_max and again.max_ratios == suite.max_ratios
    ok = record(8, "negZ", suite.negz_verdict and reproducible,
                f"max Tr(Z n[sigma]) / scale = {suite.negz_max:.3g} over {suite.trials} trials; "
                f"seed-reproducible={reproducible}")
    assert ok


def test_criterion_09_penalization_rate(grid16, record):
    _, _, report = continuation_solve(cosine(grid16), 1.0, default_options())
    eps = np.array(report.eps)
    sq = np.array(report.constraint_residuals) ** 2
    slope = float(np.polyfit(np.log(eps), np.log(sq), 1)[0])
    a1, a2 = report.norm_A[-2:]
    dA = abs(a2 - a1) / abs(a2)
    ok = record(9, "penalization rate", abs(slope - 1.0) <= 0.2 and dA < 0.1,
                f"log-log slope of |n - n0|^2 vs eps = {slope:.3f}; "
                f"|A| change over last two rungs {dA:.1e}")
    assert ok


def test_criterion_10_energy_matching(grid16, zero16, record):
    n0 = cosine(grid16)
    rho1, _ = solve_two_moment(n0, zero16, 1.0)
    e0 = energy(rho1) + 0.5
    T0, rho, report = match_energy(n0, zero16, e0)
    e_err = abs(report.notes["energy"] - e0)

    u0 = FieldSample(grid16, 2 * np.pi + 0.5 * np.cos(2 * np.pi * grid16.nodes))
    m0 = compute_m0(n0, u0)
    _, pure, pure_report = match_energy(n0, u0, m0)
    second = float(pure.eigenvalues[1]) if pure.eigenvalues.size > 1 else 0.0
    # Independent target: e^{if} sqrt(n0), f = 2 pi x + sin(2 pi x) / (4 pi), on a fine grid.
    xf = np.arange(2048) / 2048
    psi = np.exp(1j * (2 * np.pi * xf + np.sin(2 * np.pi * xf) / (4 * np.pi)))
    psi *= np.sqrt(1 + AMPLITUDE * np.cos(2 * np.pi * xf))
    coeffs = np.array([np.mean(psi * np.exp(-2j * np.pi * k * xf)) for k in pure.grid.modes])
    phi = pure.eigenvectors[:, 0]
    overlap = abs(np.vdot(coeffs, phi)) ** 2 / (np.vdot(coeffs, coeffs).real * np.vdot(phi, phi).real)
    ok = (e_err <= 1e-6 and T0 > 1.0 and pure_report.notes["pure_state"]
          and second <= 1e-10 and overlap >= 1 - 1e-10)
    record(10, "energy matching", ok,
           f"T0 = {T0:.6g}, |E - e0| = {e_err:.1e} after {len(report.notes['evaluations'])} solves; "
           f"pure state second eigenvalue {second:.1e}, overlap defect {1 - overlap:.1e}")
    assert ok


def test_criterion_11_inequality_suite(suite, record):
    rows = suite.rows()
    detail = "; ".join(f"{name} {a:.3g}/{b:.3g}" for name, a, b, _ in rows[:5])
    s = suite.varsigma_sums
    detail += "; varsigma sums " + ", ".join(f"K={k}: {s[k]:.3f}" for k in sorted(s))
    ok = record(11, "inequality suite", all(suite.verdicts.values()) and suite.varsigma_verdict, detail)
    assert ok
