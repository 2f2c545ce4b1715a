"""Command-line front end: ``qmaxwell {solve,verify,scan,match-energy} --config run.json``.

The run configuration is a JSON document::

    {
      "grid": {"K": 16, "N": null},
      "constraints": {
        "n0": {"type": "cosine", "mean": 1.0, "amplitudes": [0.3]},
        "u0": {"type": "constant", "value": 0.0},
        "target": {"T": 1.0}                      # or {"e0": 0.5}
      },
      "solver": {"method": "newton", "epsilon_ladder": [1, 0.1, ...],
                 "tol_fixed_point": 1e-7, "tol_constraint": 1e-5,
                 "damping": 1.0, "max_iters": 20000},
      "lab": {"T_min": 1.0, "T_max": 5.0, "points_per_decade": 64,
              "trials": 1000, "seed": 42, "K_values": [8, 16],
              "relation_bound": 5e-3},
      "output": {"directory": "out", "format": "csv"}
    }

Field specs are ``{"type": "constant", "value": c}``,
``{"type": "cosine", "mean": m, "amplitudes": [a1, a2, ...], "sines": [...]}``
(m + sum_q a_q cos(2 pi q x) + b_q sin(2 pi q x)) or
``{"type": "file", "path": "samples.txt"}`` with one sample per line; paths are
relative to the config file and mismatched sample counts are resampled
spectrally.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    CirculationError,
    ConfigError,
    InfeasibleEnergyError,
    NotPositiveSemidefiniteError,
    SolverError,
)
from .lab import (
    check_energy_entropy_relation,
    geometric_grid,
    inequality_suite,
    monotonicity,
    temperature_scan,
)
from .matching import ConstraintSet, compute_m0, match_energy, solve_two_moment
from .operators import energy, entropy, moments
from .solver import PenalizedSolveOptions
from .torus import FieldSample, SpectralGrid, build_grid, resample

log = logging.getLogger("qmaxwell")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3

DEFAULT_LAB = {
    "T_min": 1.0,
    "T_max": 5.0,
    "points_per_decade": 64,
    "T_grid": None,
    "trials": 1000,
    "seed": 42,
    "K_values": [8, 16],
    "relation_bound": 5e-3,
    "margin": None,
    "tol_e": 1e-6,
}


@dataclass
class RunConfig:
    """Validated run configuration."""

    grid: dict
    constraints: dict
    solver: dict = field(default_factory=dict)
    lab: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: str = "."

    def spectral_grid(self):
        return build_grid(self.grid["K"], self.grid.get("N"))

    def solve_options(self):
        return PenalizedSolveOptions(**self.solver)

    def target(self):
        return self.constraints.get("target") or {}


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _number(value, name, positive=False):
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{name} must be a number, got {value!r}")
    _require(np.isfinite(value), f"{name} must be finite")
    if positive:
        _require(value > 0, f"{name} must be positive, got {value!r}")
    return float(value)


def _check_field_spec(spec, name):
    _require(isinstance(spec, dict), f"{name} must be an object with a 'type'")
    kind = spec.get("type")
    if kind == "constant":
        _number(spec.get("value"), f"{name}.value")
    elif kind == "cosine":
        _number(spec.get("mean", 0.0), f"{name}.mean")
        for key in ("amplitudes", "sines"):
            vals = spec.get(key, [])
            _require(isinstance(vals, list), f"{name}.{key} must be a list")
            for i, a in enumerate(vals):
                _number(a, f"{name}.{key}[{i}]")
    elif kind == "file":
        _require(isinstance(spec.get("path"), str), f"{name}.path must be a string")
    else:
        raise ConfigError(f"{name}.type must be 'constant', 'cosine' or 'file', got {kind!r}")


def parse_config(data, base_dir="."):
    """Validate a decoded JSON config and fill in defaults."""
    _require(isinstance(data, dict), "config must be a JSON object")
    unknown = set(data) - {"grid", "constraints", "solver", "lab", "output"}
    _require(not unknown, f"unknown config sections: {sorted(unknown)}")

    grid = dict(data.get("grid", {}))
    _require(isinstance(grid.get("K"), int) and grid["K"] >= 0, "grid.K must be an integer >= 0")
    N = grid.get("N")
    if N is not None:
        _require(isinstance(N, int), "grid.N must be an integer")
        _require(N >= 2 * (2 * grid["K"] + 1), f"grid.N={N} must be >= 2(2K+1)={2 * (2 * grid['K'] + 1)}")

    cons = dict(data.get("constraints", {}))
    _check_field_spec(cons.get("n0"), "constraints.n0")
    cons.setdefault("u0", {"type": "constant", "value": 0.0})
    _check_field_spec(cons["u0"], "constraints.u0")
    target = cons.get("target")
    if target is not None:
        _require(isinstance(target, dict) and len(target) == 1 and set(target) <= {"T", "e0"},
                 "constraints.target must be {'T': value} or {'e0': value}")
        if "T" in target:
            _number(target["T"], "constraints.target.T", positive=True)
        else:
            _number(target["e0"], "constraints.target.e0")

    solver = {"method": "newton"}
    solver.update(data.get("solver", {}))
    allowed = set(PenalizedSolveOptions.__dataclass_fields__)
    _require(set(solver) <= allowed, f"unknown solver options: {sorted(set(solver) - allowed)}")
    if "epsilon_ladder" in solver:
        _require(isinstance(solver["epsilon_ladder"], list), "solver.epsilon_ladder must be a list")
        solver["epsilon_ladder"] = tuple(solver["epsilon_ladder"])
    try:
        PenalizedSolveOptions(**solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc

    lab = dict(DEFAULT_LAB)
    lab_in = data.get("lab", {})
    _require(set(lab_in) <= set(DEFAULT_LAB), f"unknown lab options: {sorted(set(lab_in) - set(DEFAULT_LAB))}")
    lab.update(lab_in)
    if lab["T_grid"] is not None:
        Tg = lab["T_grid"]
        _require(isinstance(Tg, list) and len(Tg) >= 3, "lab.T_grid must list at least 3 temperatures")
        for i, t in enumerate(Tg):
            _number(t, f"lab.T_grid[{i}]", positive=True)
        _require(all(b > a for a, b in zip(Tg, Tg[1:])), "lab.T_grid must be strictly increasing")
    else:
        lo = _number(lab["T_min"], "lab.T_min", positive=True)
        hi = _number(lab["T_max"], "lab.T_max", positive=True)
        _require(hi > lo, "lab.T_max must exceed lab.T_min")
        _number(lab["points_per_decade"], "lab.points_per_decade", positive=True)
    _require(isinstance(lab["trials"], int) and lab["trials"] >= 1, "lab.trials must be an integer >= 1")
    _require(isinstance(lab["seed"], int) and lab["seed"] >= 0, "lab.seed must be a non-negative integer")
    _require(isinstance(lab["K_values"], list) and len(lab["K_values"]) == 2
             and all(isinstance(k, int) and k >= 1 for k in lab["K_values"]),
             "lab.K_values must list two mode cutoffs >= 1")
    _number(lab["relation_bound"], "lab.relation_bound", positive=True)
    _number(lab["tol_e"], "lab.tol_e", positive=True)
    if lab["margin"] is not None:
        _number(lab["margin"], "lab.margin")

    output = {"directory": "out", "format": "csv"}
    output.update(data.get("output", {}))
    _require(output["format"] in ("csv", "json"), "output.format must be 'csv' or 'json'")
    return RunConfig(grid, cons, solver, lab, output, str(base_dir))


def load_config(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data, path.parent)


def build_field(spec, grid, base_dir=".", name="field"):
    """Sample a field spec on the nodes of `grid`."""
    kind = spec["type"]
    x = grid.nodes
    if kind == "constant":
        return FieldSample.constant(grid, float(spec["value"]))
    if kind == "cosine":
        vals = np.full(grid.N, float(spec.get("mean", 0.0)))
        for q, a in enumerate(spec.get("amplitudes", []), start=1):
            vals += a * np.cos(2 * np.pi * q * x)
        for q, b in enumerate(spec.get("sines", []), start=1):
            vals += b * np.sin(2 * np.pi * q * x)
        return FieldSample(grid, vals)
    path = Path(base_dir) / spec["path"]
    try:
        samples = np.loadtxt(path, dtype=float, ndmin=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read samples for {name} from {path}: {exc}") from exc
    if samples.ndim != 1 or samples.size < 1:
        raise ConfigError(f"{path} must hold one sample per line")
    if samples.size == grid.N:
        return FieldSample(grid, samples)
    log.info("resampling %s from %d to %d nodes (spectral interpolation)", name, samples.size, grid.N)
    # Only the node count of the source grid matters for interpolation.
    return resample(FieldSample(SpectralGrid(0, samples.size), samples), grid)


def constraint_fields(cfg):
    grid = cfg.spectral_grid()
    n0 = build_field(cfg.constraints["n0"], grid, cfg.base_dir, "n0")
    u0 = build_field(cfg.constraints["u0"], grid, cfg.base_dir, "u0")
    return grid, n0, u0


def lab_temperatures(cfg):
    lab = cfg.lab
    if lab["T_grid"] is not None:
        return np.array(lab["T_grid"], dtype=float)
    return geometric_grid(lab["T_min"], lab["T_max"], lab["points_per_decade"])


# ----------------------------------------------------------------------------
# Output


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return f"{float(value):.17g}"


class OutputWriter:
    """Serialized writer for the result tables and JSON documents."""

    def __init__(self, directory, fmt="csv"):
        self.directory = Path(directory)
        self.fmt = fmt
        self.directory.mkdir(parents=True, exist_ok=True)
        self.written = []

    def table(self, name, header, rows):
        if self.fmt == "csv":
            path = self.directory / f"{name}.csv"
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_fmt(v) for v in row])
        else:
            path = self.directory / f"{name}.json"
            records = [dict(zip(header, (_jsonable(v) for v in row))) for row in rows]
            path.write_text(json.dumps(records, indent=1) + "\n")
        self.written.append(path.name)
        return path

    def document(self, name, payload):
        path = self.directory / name
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        self.written.append(path.name)
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _meta(cfg, command, extra):
    opts = cfg.solve_options()
    meta = {
        "command": command,
        "version": __version__,
        "grid": {"K": cfg.grid["K"], "N": cfg.spectral_grid().N},
        "constraints": cfg.constraints,
        "solver": {
            "method": opts.method,
            "epsilon_ladder": list(opts.epsilon_ladder),
            "tol_fixed_point": opts.tol_fixed_point,
            "tol_constraint": opts.tol_constraint,
            "damping": opts.damping,
            "max_iters": opts.max_iters,
            "roundoff_factor": opts.roundoff_factor,
        },
    }
    meta.update(extra)
    return meta


# ----------------------------------------------------------------------------
# Commands


def cmd_solve(cfg, out_dir=None, energy_target_only=False):
    """Solve the constrained problem for the configured target."""
    grid, n0, u0 = constraint_fields(cfg)
    target = cfg.target()
    if energy_target_only and "e0" not in target:
        raise ConfigError("match-energy needs constraints.target = {'e0': value}")
    _require(target, "constraints.target must be given for solve")
    opts = cfg.solve_options()
    if "T" in target:
        ConstraintSet(n0, u0, T=target["T"])
        T = float(target["T"])
        rho, report = solve_two_moment(n0, u0, T, opts)
        pure = False
    else:
        T, rho, report = match_energy(n0, u0, float(target["e0"]), tol_e=cfg.lab["tol_e"], opts=opts)
        pure = bool(report.notes.get("pure_state", False))

    writer = OutputWriter(out_dir or cfg.output["directory"], cfg.output["format"])
    m = moments(rho, grid)
    writer.table(
        "moments",
        ["x", "n", "nu", "k", "w"],
        zip(grid.nodes, m.n.values, m.current.values, m.k.values, m.w.values),
    )
    A = report.potential
    solution = {
        "target": target,
        "T": T,
        "pure_state": pure,
        "energy": energy(rho),
        "entropy": entropy(rho),
        "m0": compute_m0(n0, u0),
        "eigenvalues": rho.eigenvalues,
        "x": grid.nodes,
        "A": A.values if A is not None else None,
        "constraint_residual": float(np.sqrt(np.mean((m.n.values - n0.values) ** 2))),
        "current_residual": float(np.sqrt(np.mean((m.current.values - n0.values * u0.values) ** 2))),
        "report": report.to_dict(),
    }
    if "e0" in target:
        solution["T0"] = T
    writer.document("solution.json", solution)
    writer.document("meta.json", _meta(cfg, "match-energy" if energy_target_only else "solve", {
        "outputs": sorted(writer.written + ["meta.json"]),
        "verdicts": {"converged": bool(report.converged)},
    }))
    return EXIT_OK


def _scan(cfg, threads):
    grid, n0, u0 = constraint_fields(cfg)
    ConstraintSet(n0, u0, T=1.0)
    return temperature_scan(n0, u0, lab_temperatures(cfg), cfg.solve_options(), threads=threads)


def _write_scan(writer, scan):
    writer.table("scan", ["T", "E", "S", "F", "normA"], scan.rows())


def cmd_scan(cfg, out_dir=None, threads=0):
    scan = _scan(cfg, threads)
    writer = OutputWriter(out_dir or cfg.output["directory"], cfg.output["format"])
    _write_scan(writer, scan)
    mono = monotonicity(scan, cfg.lab["margin"])
    writer.document("meta.json", _meta(cfg, "scan", {
        "outputs": sorted(writer.written + ["meta.json"]),
        "failures": {str(scan.T[i]): msg for i, msg in scan.failures.items()},
        "verdicts": {
            "monotonicity_margin": mono.margin,
            "E_increasing": mono.E_increasing,
            "S_decreasing": mono.S_decreasing,
        },
    }))
    return EXIT_OK if not scan.failures else EXIT_SOLVER


def cmd_verify(cfg, out_dir=None, threads=0):
    """Temperature scan, energy-entropy relation and inequality suite."""
    scan = _scan(cfg, threads)
    writer = OutputWriter(out_dir or cfg.output["directory"], cfg.output["format"])
    _write_scan(writer, scan)
    relation = check_energy_entropy_relation(scan)
    writer.table("relation", ["T1", "T2", "lhs", "rhs", "defect"], relation.rows)
    lab = cfg.lab
    ineq = inequality_suite(lab["seed"], lab["trials"], tuple(lab["K_values"]), threads=threads)
    writer.table("inequalities", ["name", "max_ratio_K", "max_ratio_2K", "verdict"], ineq.rows())
    mono = monotonicity(scan, lab["margin"])
    verdicts = {
        "scan_complete": not scan.failures,
        "E_increasing": mono.E_increasing,
        "S_decreasing": mono.S_decreasing,
        "relation": relation.max_defect <= lab["relation_bound"],
        "inequalities": ineq.passed,
    }
    writer.document("meta.json", _meta(cfg, "verify", {
        "outputs": sorted(writer.written + ["meta.json"]),
        "lab": lab,
        "thresholds": {
            "monotonicity_margin": mono.margin,
            "relation_bound": lab["relation_bound"],
            "relation_normalization": relation.normalization,
            "inequality_stability_factor": 2.0,
            "negz_tolerance": 1e-12,
        },
        "diagnostics": {
            "relation_max_defect": relation.max_defect,
            "min_E_secant": float(np.min(mono.E_slopes)),
            "max_S_secant": float(np.max(mono.S_slopes)),
            "inequality_anomalies": ineq.anomalies,
            "failures": {str(scan.T[i]): msg for i, msg in scan.failures.items()},
        },
        "verdicts": verdicts,
    }))
    failed = [k for k, ok in verdicts.items() if not ok]
    if failed:
        log.error("verification failed: %s", ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


# ----------------------------------------------------------------------------
# Entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="qmaxwell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("solve", "solve at the configured temperature or energy target"),
        ("verify", "run the temperature scan, relation check and inequality suite"),
        ("scan", "temperature scan only"),
        ("match-energy", "find the temperature matching the configured energy e0"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="seed for randomized suites (overrides lab.seed)")
        p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = one per CPU")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            _require(args.seed >= 0, "--seed must be non-negative")
            cfg.lab["seed"] = args.seed
        _require(args.threads >= 0, "--threads must be >= 0")
        if args.command == "solve":
            return cmd_solve(cfg, args.out)
        if args.command == "match-energy":
            return cmd_solve(cfg, args.out, energy_target_only=True)
        if args.command == "scan":
            return cmd_scan(cfg, args.out, args.threads)
        return cmd_verify(cfg, args.out, args.threads)
    except (ConfigError, InfeasibleEnergyError, CirculationError, NotPositiveSemidefiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
