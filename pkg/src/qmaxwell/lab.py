"""Numerical experiments on temperature dependence and operator inequalities.

Everything here is deterministic: work items may run on a thread pool, but the
results are always merged in grid or trial order, and random draws are keyed
by (seed, K, trial) so they do not depend on scheduling.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import os

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import QMaxwellError, SolverError
from .frechet import apply_Z, varsigma_table
from .matching import compute_m0, default_options, flow_energy
from .operators import (
    DensityOperator,
    density_from_hamiltonian,
    energy,
    entropy,
    hamiltonian_spectrum,
    moments,
)
from .solver import continuation_solve, validate_density
from .torus import FieldSample, as_field, build_grid, differentiate, l2_norm, multiplication_matrix

log = logging.getLogger(__name__)

SCAN_CHUNK = 16
RATIO_NAMES = ("souslin", "estlog", "ninfty", "gradnl2", "lieb2")
FAMILIES = ("square", "gibbs", "mixture")


def resolve_threads(threads):
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


def _ordered_map(func, items, threads):
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


def geometric_grid(T_min, T_max, points_per_decade=64):
    """Geometric grid from T_min to T_max with the given density per decade."""
    if not 0 < T_min < T_max:
        raise ValueError("need 0 < T_min < T_max")
    count = int(round(points_per_decade * np.log10(T_max / T_min))) + 1
    return np.geomspace(T_min, T_max, max(count, 2))


@dataclass
class TemperatureScan:
    """Energies and entropies of two-moment minimizers along a temperature grid."""

    T: np.ndarray
    E: np.ndarray
    S: np.ndarray
    F: np.ndarray
    norm_A: np.ndarray
    iterations: list
    failures: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @property
    def ok(self):
        return np.isfinite(self.E) & np.isfinite(self.S)

    def rows(self):
        return [
            (float(t), float(e), float(s), float(f), float(a))
            for t, e, s, f, a in zip(self.T, self.E, self.S, self.F, self.norm_A)
        ]

    def subsample(self, step):
        """Every `step`-th point, e.g. to compare a grid with its refinement."""
        idx = np.arange(0, len(self.T), step)
        return TemperatureScan(
            self.T[idx], self.E[idx], self.S[idx], self.F[idx], self.norm_A[idx],
            [self.iterations[i] for i in idx],
            {i // step: m for i, m in self.failures.items() if i % step == 0},
            dict(self.tolerances),
        )


def _solve_chunk(n0, u0, temps, opts, warm_start):
    shift = flow_energy(n0, u0)
    out = []
    A = None
    last_rung = replace(opts, epsilon_ladder=opts.epsilon_ladder[-1:])
    for T in temps:
        try:
            rho = None
            if warm_start and A is not None:
                try:
                    rho, A, rep = continuation_solve(n0, T, last_rung, A_init=A)
                except SolverError:
                    rho = None
            if rho is None:
                rho, A, rep = continuation_solve(n0, T, opts)
            # The gauge factor shifts E by exactly the flow energy and leaves S alone.
            E = energy(rho) + shift
            S = entropy(rho)
            out.append((E, S, l2_norm(A), sum(rep.iterations), None))
        except QMaxwellError as exc:
            A = None
            out.append((np.nan, np.nan, np.nan, 0, f"{type(exc).__name__}: {exc}"))
    return out


def temperature_scan(n0, u0, T_grid, opts=None, threads=0, warm_start=True):
    """Solve the two-moment problem at each temperature of a strictly increasing grid.

    The grid is cut into fixed chunks of consecutive temperatures; inside a
    chunk each solve starts from the previous potential at the last epsilon of
    the ladder. Chunks are independent and may run concurrently. Failed points
    are recorded in ``failures`` and carry NaN entries.
    """
    opts = opts or default_options()
    n0 = validate_density(n0)
    u0 = as_field(u0, n0.grid)
    T_grid = np.asarray(T_grid, dtype=float)
    if T_grid.size < 3:
        raise ValueError("a temperature scan needs at least 3 temperatures")
    if np.any(T_grid <= 0) or np.any(np.diff(T_grid) <= 0):
        raise ValueError("temperature grid must be positive and strictly increasing")
    chunks = [T_grid[i : i + SCAN_CHUNK] for i in range(0, T_grid.size, SCAN_CHUNK)]
    results = _ordered_map(lambda c: _solve_chunk(n0, u0, c, opts, warm_start), chunks, threads)
    flat = [r for chunk in results for r in chunk]
    E = np.array([r[0] for r in flat])
    S = np.array([r[1] for r in flat])
    failures = {i: r[4] for i, r in enumerate(flat) if r[4] is not None}
    for i, msg in failures.items():
        log.warning("scan point T=%g failed: %s", T_grid[i], msg)
    return TemperatureScan(
        T=T_grid,
        E=E,
        S=S,
        F=E + T_grid * S,
        norm_A=np.array([r[2] for r in flat]),
        iterations=[r[3] for r in flat],
        failures=failures,
        tolerances={
            "tol_fixed_point": opts.tol_fixed_point,
            "energy_tolerance": opts.energy_tolerance(float(n0.values.max())),
            "final_eps": opts.epsilon_ladder[-1],
            "method": opts.method,
        },
    )


@dataclass
class MonotonicityVerdict:
    """Secant test of E increasing and S decreasing along a scan."""

    margin: float
    E_differences: np.ndarray
    S_differences: np.ndarray
    E_slopes: np.ndarray
    S_slopes: np.ndarray

    @property
    def E_increasing(self):
        return bool(np.all(self.E_differences > self.margin))

    @property
    def S_decreasing(self):
        return bool(np.all(-self.S_differences > self.margin))

    @property
    def passed(self):
        return self.E_increasing and self.S_decreasing

    def failing_E(self):
        return np.flatnonzero(~(self.E_differences > self.margin))

    def failing_S(self):
        return np.flatnonzero(~(-self.S_differences > self.margin))


def monotonicity(scan, margin=None):
    """Consecutive secants of E and S with a noise margin.

    The default margin is ten times the energy-level tolerance of the inner
    solves recorded in the scan.
    """
    if margin is None:
        margin = 10.0 * scan.tolerances.get("energy_tolerance", 0.0)
    dT = np.diff(scan.T)
    dE, dS = np.diff(scan.E), np.diff(scan.S)
    return MonotonicityVerdict(float(margin), dE, dS, dE / dT, dS / dT)


@dataclass
class RelationCheck:
    """Pairwise defects of E(T2) - E(T1) = -(T2 S2 - T1 S1 - int_T1^T2 S dT)."""

    rows: list
    normalization: float
    max_defect: float


def check_energy_entropy_relation(scan):
    """Evaluate the energy-entropy relation for every grid pair.

    Since rho_T minimizes E + T S, dE/dT = -T dS/dT; integrating by parts gives
    the relation above, with the integral of S taken by the composite trapezoid
    rule on the scan grid. Defects are normalized by the energy range of the
    scan, |E(T_last) - E(T_first)|. Returns a RelationCheck whose rows are
    (T1, T2, lhs, rhs, defect) for all pairs i < j, plus the degenerate
    pair (T1, T1).
    """
    ok = scan.ok
    T, E, S = scan.T[ok], scan.E[ok], scan.S[ok]
    if T.size < 2:
        raise ValueError("need at least two successful scan points")
    cum = cumulative_trapezoid(S, T, initial=0.0)
    norm = abs(E[-1] - E[0]) or 1.0
    lhs = E[None, :] - E[:, None]
    TS = T * S
    rhs = -(TS[None, :] - TS[:, None] - (cum[None, :] - cum[:, None]))
    defect = np.abs(lhs - rhs) / norm
    i, j = np.triu_indices(T.size, k=1)
    rows = [(float(T[0]), float(T[0]), 0.0, 0.0, 0.0)]
    rows += [
        (float(T[a]), float(T[b]), float(lhs[a, b]), float(rhs[a, b]), float(defect[a, b]))
        for a, b in zip(i, j)
    ]
    return RelationCheck(rows, float(norm), float(defect[i, j].max()) if i.size else 0.0)


@dataclass
class ZeroTemperatureTable:
    """E_T - m0 along a decreasing temperature sequence."""

    m0: float
    T: np.ndarray
    E: np.ndarray
    gap: np.ndarray
    failure: str = None

    def positive(self):
        return bool(np.all(self.gap > 0))

    def decreasing(self, tol=0.0):
        return bool(np.all(np.diff(self.gap) <= tol))


def zero_T_limit(n0, u0, T_sequence, opts=None):
    """Gaps E_T - m0 for decreasing T; stops at the first failed solve."""
    opts = opts or default_options()
    n0 = validate_density(n0)
    u0 = as_field(u0, n0.grid)
    T_sequence = np.asarray(T_sequence, dtype=float)
    if np.any(np.diff(T_sequence) >= 0):
        raise ValueError("temperature sequence must be strictly decreasing")
    m0 = compute_m0(n0, u0)
    shift = flow_energy(n0, u0)
    Ts, Es, failure = [], [], None
    A = None
    for T in T_sequence:
        try:
            rho, A, _ = continuation_solve(n0, T, opts)
        except QMaxwellError as exc:
            failure = f"T={T:g}: {type(exc).__name__}: {exc}"
            log.warning("zero-temperature sequence truncated at %s", failure)
            break
        Ts.append(T)
        Es.append(energy(rho) + shift)
    Ts, Es = np.array(Ts), np.array(Es)
    return ZeroTemperatureTable(m0, Ts, Es, Es - m0, failure)


# ----------------------------------------------------------------------------
# Randomized inequality suite


def _decay(grid):
    return 1.0 / (1.0 + np.abs(grid.modes)) ** 2


def _random_vectors(rng, grid, count):
    X = rng.normal(size=(grid.D, count)) + 1j * rng.normal(size=(grid.D, count))
    return X * _decay(grid)[:, None]


def _random_potential(rng, grid, n_modes=3):
    x = grid.nodes
    A = np.zeros(grid.N)
    for q in range(1, n_modes + 1):
        A += rng.normal() * np.cos(2 * np.pi * q * x + rng.uniform(0, 2 * np.pi))
    return FieldSample(grid, A)


def random_operator(rng, grid, family):
    """Draw a PSD operator of the named family with trace in (1, 10]."""
    if family == "square":
        X = _random_vectors(rng, grid, grid.D)
        rho = DensityOperator.from_matrix(X @ X.conj().T, grid)
    elif family == "gibbs":
        T = float(np.exp(rng.uniform(np.log(0.5), np.log(10.0))))
        rho = density_from_hamiltonian(_random_potential(rng, grid), T)
    elif family == "mixture":
        r = int(rng.integers(1, 6))
        V = _random_vectors(rng, grid, r)
        rho = DensityOperator.mixture(rng.dirichlet(np.ones(r)), V.T, grid)
    else:
        raise ValueError(f"unknown operator family {family!r}")
    trace = float(np.exp(rng.uniform(0.0, np.log(10.0))))
    return DensityOperator(grid, rho.eigenvalues * trace / rho.trace(), rho.eigenvectors)


def inequality_ratios(rho):
    """Left over right side of each functional inequality for one operator."""
    r = rho.eigenvalues
    E = energy(rho)
    tr = float(r.sum())
    norm_E = tr + E
    j2 = float(np.sqrt(np.sum(r**2)))
    m = moments(rho)
    grad_n = l2_norm(differentiate(m.n))
    rlogr = float(np.sum(r[r > 0] * np.log(r[r > 0])))
    return {
        "souslin": -entropy(rho) / norm_E**0.5,
        "estlog": rlogr / (tr * np.log(tr)),
        "ninfty": float(np.max(np.abs(m.n.values))) / (j2**0.25 * norm_E**0.75),
        "gradnl2": grad_n / (tr**0.25 * norm_E**0.75),
        "lieb2": float(np.sum(r ** (2.0 / 3.0))) / norm_E ** (2.0 / 3.0),
    }


def _negz_trial(rng, grid):
    A = _random_potential(rng, grid)
    beta = float(np.exp(rng.uniform(np.log(0.1), np.log(2.0))))
    sigma = random_operator(rng, grid, FAMILIES[int(rng.integers(0, 3))])
    n_sigma = moments(sigma).n
    lam, V = hamiltonian_spectrum(A)
    table = varsigma_table(lam, beta)
    Z = apply_Z(beta, (lam, V), n_sigma, table=table)
    S = multiplication_matrix(n_sigma)
    value = float(np.real(np.sum(Z * S.T)))
    M = V.conj().T @ S @ V
    scale = float(np.sum(np.abs(table.table) * np.abs(M) ** 2))
    return value, scale


@dataclass
class InequalityReport:
    """Maximum ratios per inequality and grid size, with verdicts."""

    seed: int
    trials: int
    K_values: tuple
    max_ratios: dict
    verdicts: dict
    negz_max: float
    negz_verdict: bool
    varsigma_sums: dict
    varsigma_verdict: bool
    anomalies: list = field(default_factory=list)

    @property
    def passed(self):
        return all(self.verdicts.values()) and self.negz_verdict and self.varsigma_verdict

    def rows(self):
        """(name, max_ratio_K, max_ratio_2K, verdict) rows for reporting."""
        K1, K2 = self.K_values
        out = [
            (name, self.max_ratios[name][K1], self.max_ratios[name][K2],
             "pass" if self.verdicts[name] else "fail")
            for name in RATIO_NAMES
        ]
        out.append(("negZ", self.negz_max, self.negz_max, "pass" if self.negz_verdict else "fail"))
        s = self.varsigma_sums
        ks = sorted(s)
        out.append((
            "varsigma_sum_growth",
            s[ks[1]] / s[ks[0]],
            s[ks[2]] / s[ks[1]],
            "pass" if self.varsigma_verdict else "fail",
        ))
        return out


def varsigma_growth(K_values=(8, 16, 32), beta=1.0):
    """Absolute sums of the divided-difference table for a fixed bounded potential."""
    sums = {}
    for K in K_values:
        grid = build_grid(K)
        x = grid.nodes
        A = FieldSample(grid, np.cos(2 * np.pi * x) + 0.5 * np.sin(4 * np.pi * x))
        lam, _ = hamiltonian_spectrum(A)
        sums[K] = varsigma_table(lam, beta).absolute_sum()
    return sums


def inequality_suite(seed, trials, K_values=(8, 16), threads=0, stability_factor=2.0,
                     negz_tol=1e-12):
    """Randomized check that each inequality ratio stays bounded as K doubles.

    Families cycle through random Hermitian squares, random Gibbs states and
    random low-rank mixtures. A ratio family passes when its maxima at the two
    grid sizes are positive and within `stability_factor` of each other.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    K1, K2 = K_values
    grids = {K: build_grid(K) for K in K_values}

    def trial(key):
        K, t = key
        rng = np.random.default_rng([seed, K, t])
        rho = random_operator(rng, grids[K], FAMILIES[t % len(FAMILIES)])
        return inequality_ratios(rho)

    keys = [(K, t) for K in K_values for t in range(trials)]
    results = dict(zip(keys, _ordered_map(trial, keys, threads)))
    max_ratios, verdicts, anomalies = {}, {}, []
    for name in RATIO_NAMES:
        max_ratios[name] = {}
        for K in K_values:
            vals = np.array([results[(K, t)][name] for t in range(trials)])
            bad = ~np.isfinite(vals)
            if bad.any():
                anomalies.append(f"{name}: {int(bad.sum())} non-finite ratios at K={K}")
            max_ratios[name][K] = float(np.max(vals[~bad])) if (~bad).any() else float("nan")
        a, b = max_ratios[name][K1], max_ratios[name][K2]
        verdicts[name] = bool(a > 0 and b > 0 and max(a, b) <= stability_factor * min(a, b))

    negz_keys = list(range(trials))
    negz = _ordered_map(
        lambda t: _negz_trial(np.random.default_rng([seed, 0, t]), grids[K1]), negz_keys, threads
    )
    negz_max = max(v / max(s, np.finfo(float).tiny) for v, s in negz)
    sums = varsigma_growth((K1, K2, 2 * K2))
    ks = sorted(sums)
    sublinear = all(sums[b] / sums[a] < 2.0 for a, b in zip(ks, ks[1:]))
    return InequalityReport(
        seed=int(seed),
        trials=int(trials),
        K_values=(K1, K2),
        max_ratios=max_ratios,
        verdicts=verdicts,
        negz_max=float(negz_max),
        negz_verdict=bool(negz_max <= negz_tol),
        varsigma_sums=sums,
        varsigma_verdict=bool(sublinear),
        anomalies=anomalies,
    )


__all__ = [
    "InequalityReport",
    "MonotonicityVerdict",
    "RelationCheck",
    "TemperatureScan",
    "ZeroTemperatureTable",
    "check_energy_entropy_relation",
    "geometric_grid",
    "inequality_ratios",
    "inequality_suite",
    "monotonicity",
    "random_operator",
    "temperature_scan",
    "varsigma_growth",
    "zero_T_limit",
]
