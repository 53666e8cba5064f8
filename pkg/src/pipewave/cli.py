"""Scenario-driven command line front end.

Subcommands build full and reduced models from a JSON config or flags and
write flat-file artifacts: simulation traces and summary tables as CSV,
bases and reduced matrices as CSV plus a metadata JSON, verification
reports as JSON. Every artifact carries the hash of the resolved config.
Exit codes: 0 success, 2 config/schema violation, 3 numerical failure; in
the failure cases a machine-readable error is printed to stderr and no
output file of the failing stage is written (writes happen only after the
whole pipeline succeeded, atomically via temp file plus rename).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .descriptor import (
    DescriptorSystem,
    SingularPencilError,
    build_descriptor,
    from_fem,
    lu_with_rcond,
)
from .diagnostics import (
    fit_decay_rate,
    reproduce_table_energy,
    reproduce_table_mass,
    verify_moment_matching,
)
from .fem import Mesh, assemble, check_A0, project_initial
from .mor import (
    DROP_TOL,
    ProjectionBasis,
    ReducedSystem,
    SurjectivityError,
    build_compatible_bases,
    check_compatibility,
    cs_split,
    krylov_iterate,
    project,
    project_initial_reduced,
    standard_bases,
)
from .network import Network, builtin_scenario, classify_vertices, network_from_dict
from .timeint import SingularStepError, ThetaScheme, hat_input, simulate

__all__ = ["main", "load_reduced", "ConfigError"]

PENCIL_SHIFTS = (0.0, 0.1, 1.0, 10.0)
BUILTIN_NAMES = ("tp1", "tp2", "tp3", "net7")
MATRIX_FILES = ("V1", "V2", "M1h", "M2h", "Dh", "Gh", "Nh", "B2h", "o1h")
TABLE_L_VALUES = (1, 3, 10)


class ConfigError(ValueError):
    """Invalid configuration: unknown keys, bad values or dangling references."""


# ---------------------------------------------------------------------------
# config resolution


def _default_config() -> dict:
    return {
        "network": "tp1",
        "d0": 1.0,
        "mesh": {"cells": 200},
        "reduction": {
            "s0": 0.0,
            "L": 10,
            "mode": "improved",
            "tol": None,
            "enforce_mass": False,
        },
        "time": {"theta": None, "tau": 1e-3, "T": 4.0},
        "initial": {"p0": 0.0, "q0": 0.0},
        "inputs": {},
        "outputs": ["trace", "report"],
    }


def _merge_section(base: dict, update, section: str) -> None:
    if not isinstance(update, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown key {key!r} in config section {section!r}")
        base[key] = value


def _load_config_file(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return doc


def _apply_document(config: dict, doc: dict) -> None:
    for key, value in doc.items():
        if key not in config:
            raise ConfigError(f"unknown top-level config key {key!r}")
        if key == "mesh" and isinstance(value, int):
            config["mesh"]["cells"] = value
        elif key in ("mesh", "reduction", "time", "initial"):
            _merge_section(config[key], value, key)
        else:
            config[key] = value


def _apply_flags(config: dict, args: argparse.Namespace) -> None:
    flag_map = {
        "mesh_cells": ("mesh", "cells"),
        "s0": ("reduction", "s0"),
        "L": ("reduction", "L"),
        "mode": ("reduction", "mode"),
        "tol": ("reduction", "tol"),
        "theta": ("time", "theta"),
        "tau": ("time", "tau"),
        "T": ("time", "T"),
        "d0": ("d0", None),
    }
    for attr, (section, key) in flag_map.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        if key is None:
            config[section] = value
        else:
            config[section][key] = value


def _require_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be a number, got {value!r}")
    return float(value)


def _validate_signal(spec, port: str):
    if spec in ("zero", "hat"):
        return spec
    if isinstance(spec, dict) and set(spec) == {"constant"}:
        return {"constant": _require_number(spec["constant"], f"inputs[{port}].constant")}
    if isinstance(spec, dict) and set(spec) == {"table"}:
        rows = spec["table"]
        if not isinstance(rows, list) or not rows:
            raise ConfigError(f"inputs[{port}].table must be a nonempty list of [t, value] pairs")
        clean = []
        for row in rows:
            if not isinstance(row, (list, tuple)) or len(row) != 2:
                raise ConfigError(f"inputs[{port}].table rows must be [t, value] pairs")
            clean.append([_require_number(row[0], "table time"), _require_number(row[1], "table value")])
        times = [r[0] for r in clean]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ConfigError(f"inputs[{port}].table times must be strictly increasing")
        return {"table": clean}
    raise ConfigError(
        f"invalid signal for port {port!r}: expected \"zero\", \"hat\", "
        f"{{\"constant\": c}} or {{\"table\": [[t, value], ...]}}"
    )


def _validate_initial(spec, what: str, size: int):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec)
    if isinstance(spec, list):
        values = [_require_number(v, f"{what} entry") for v in spec]
        if len(values) != size:
            raise ConfigError(f"{what} has {len(values)} entries, expected {size}")
        return values
    raise ConfigError(f"{what} must be a number or a list of {size} numbers")


def _build_network(config: dict) -> Network:
    spec = config["network"]
    d0 = config["d0"]
    if isinstance(spec, str):
        if spec.lower() not in BUILTIN_NAMES:
            raise ConfigError(
                f"unknown builtin network {spec!r}; expected one of {BUILTIN_NAMES}"
            )
        return builtin_scenario(spec, d0=d0)
    if isinstance(spec, dict):
        doc = json.loads(json.dumps(spec))
        for edge in doc.get("edges", []):
            if isinstance(edge, dict) and "d" in edge:
                edge["d"] = _require_number(edge["d"], "edge damping") * d0
        try:
            return network_from_dict(doc)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError("network must be a builtin name or an inline object")


def _resolve(config: dict, command: str) -> tuple[dict, Network]:
    d0 = _require_number(config["d0"], "d0")
    if not d0 > 0:
        raise ConfigError(f"d0 must be positive, got {d0}")
    config["d0"] = d0

    cells = config["mesh"]["cells"]
    if isinstance(cells, bool) or not isinstance(cells, int) or cells < 1:
        raise ConfigError(f"mesh.cells must be a positive integer, got {cells!r}")

    red = config["reduction"]
    red["s0"] = _require_number(red["s0"], "reduction.s0")
    if red["s0"] < 0:
        raise ConfigError("reduction.s0 must be nonnegative")
    if isinstance(red["L"], bool) or not isinstance(red["L"], int) or red["L"] < 1:
        raise ConfigError(f"reduction.L must be a positive integer, got {red['L']!r}")
    if red["mode"] not in ("improved", "standard"):
        raise ConfigError(f"reduction.mode must be improved or standard, got {red['mode']!r}")
    if red["tol"] is not None:
        red["tol"] = _require_number(red["tol"], "reduction.tol")
        if not red["tol"] > 0:
            raise ConfigError("reduction.tol must be positive")
    if not isinstance(red["enforce_mass"], bool):
        raise ConfigError("reduction.enforce_mass must be a boolean")

    tm = config["time"]
    tm["tau"] = _require_number(tm["tau"], "time.tau")
    if not tm["tau"] > 0:
        raise ConfigError("time.tau must be positive")
    tm["T"] = _require_number(tm["T"], "time.T")
    if tm["T"] < tm["tau"]:
        raise ConfigError("time.T must be at least one time step")
    if tm["theta"] is None:
        tm["theta"] = 0.5 + tm["tau"]
    else:
        tm["theta"] = _require_number(tm["theta"], "time.theta")
    if not 0.5 <= tm["theta"] <= 1.0:
        raise ConfigError(f"time.theta must lie in [1/2, 1], got {tm['theta']}")

    network = _build_network(config)
    interior, boundary = classify_vertices(network)
    port_names = [network.vertices[v] for v in boundary]

    if not isinstance(config["inputs"], dict):
        raise ConfigError("inputs must map port names to signals")
    if command == "compare" and not config["inputs"] and port_names:
        config["inputs"] = {port_names[0]: "hat"}
    for port, spec in list(config["inputs"].items()):
        if port not in port_names:
            raise ConfigError(f"input references unknown port {port!r}; ports are {port_names}")
        config["inputs"][port] = _validate_signal(spec, port)

    k1 = cells * len(network.edges)
    k2 = (cells + 1) * len(network.edges)
    config["initial"]["p0"] = _validate_initial(config["initial"]["p0"], "initial.p0", k1)
    config["initial"]["q0"] = _validate_initial(config["initial"]["q0"], "initial.q0", k2)

    outputs = config["outputs"]
    if not isinstance(outputs, list) or not outputs:
        raise ConfigError("outputs must be a nonempty list")
    allowed = {"trace", "report", "bases", "tables"}
    unknown = set(outputs) - allowed
    if unknown:
        raise ConfigError(f"unknown outputs {sorted(unknown)}; allowed: {sorted(allowed)}")
    is_tp1 = isinstance(config["network"], str) and config["network"].lower() == "tp1"
    wants_tables = "tables" in outputs or command in ("table-mass", "table-energy")
    if wants_tables and not is_tp1:
        raise ConfigError("the summary tables are defined for the tp1 scenario only")

    return config, network


def resolve_config(args: argparse.Namespace) -> tuple[dict, Network]:
    """Merge defaults, config file and flags; validate; build the network."""
    config = _default_config()
    path = getattr(args, "config", None)
    scenario = getattr(args, "scenario", None)
    if path is not None:
        _apply_document(config, _load_config_file(Path(path)))
    if scenario is not None:
        if scenario.lower() in BUILTIN_NAMES:
            config["network"] = scenario
        elif Path(scenario).exists():
            _apply_document(config, _load_config_file(Path(scenario)))
        else:
            raise ConfigError(
                f"--scenario {scenario!r} is neither a builtin name "
                f"{BUILTIN_NAMES} nor an existing config file"
            )
    _apply_flags(config, args)
    return _resolve(config, args.command)


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# signals and shared pipeline pieces


def _signal_function(spec):
    if spec == "zero":
        return lambda t: 0.0
    if spec == "hat":
        return hat_input
    if "constant" in spec:
        c = spec["constant"]
        return lambda t: c
    rows = np.asarray(spec["table"], dtype=float)
    ts, vs = rows[:, 0], rows[:, 1]
    return lambda t: float(np.interp(t, ts, vs))


def _input_function(config: dict, port_names: list[str]):
    specs = [config["inputs"].get(name, "zero") for name in port_names]
    if all(spec == "zero" for spec in specs):
        return None
    funcs = [_signal_function(spec) for spec in specs]
    return lambda t: np.array([f(t) for f in funcs])


def _make_scheme(config: dict) -> ThetaScheme:
    tm = config["time"]
    return ThetaScheme(theta=tm["theta"], tau=tm["tau"], T=tm["T"])


class _Context:
    """Everything the subcommands share: FEM system, full model, ports."""

    def __init__(self, config: dict, network: Network):
        self.config = config
        self.network = network
        self.mesh = Mesh.uniform(network, config["mesh"]["cells"])
        self.fem = assemble(network, self.mesh)
        self.full = from_fem(self.fem)
        self.port_names = list(self.fem.port_names())

    def initial(self) -> tuple[np.ndarray, np.ndarray]:
        return project_initial(
            self.fem, self.config["initial"]["p0"], self.config["initial"]["q0"]
        )

    @property
    def tol(self) -> float:
        explicit = self.config["reduction"]["tol"]
        return DROP_TOL if explicit is None else explicit

    def reduce(self) -> tuple[ProjectionBasis, ReducedSystem]:
        red = self.config["reduction"]
        W = krylov_iterate(self.full, red["s0"], red["L"], self.tol)
        W1, W2 = cs_split(W, self.fem, self.tol)
        if red["mode"] == "improved":
            basis = build_compatible_bases(W1, W2, self.fem, self.tol)
        else:
            basis = standard_bases(W1, W2, self.fem, self.tol)
        return basis, project(self.fem, basis, self.tol)


# ---------------------------------------------------------------------------
# artifact rendering


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def _render_csv(header: list[str] | None, rows, chash: str) -> str:
    lines = [f"# config_hash={chash}"]
    if header is not None:
        lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _trace_artifact(name: str, trace, port_names: list[str]):
    header = ["t", "mass", "energy", "dissipation"]
    header += [f"y_{p}" for p in port_names] + [f"u_{p}" for p in port_names]
    rows = (
        [trace.times[k], trace.mass[k], trace.energy[k], trace.dissipation[k]]
        + list(trace.outputs[k])
        + list(trace.inputs[k])
        for k in range(trace.times.shape[0])
    )
    return (name, "csv", (header, rows))


def _matrix_artifact(name: str, matrix: np.ndarray):
    arr = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.ndim == 1:
        arr = arr.T
    return (f"{name}.csv", "csv", (None, ([v for v in row] for row in arr)))


def _versions() -> dict:
    return {
        "pipewave": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
    }


def _pencil_report(sys: DescriptorSystem) -> list[dict]:
    out = []
    for s in PENCIL_SHIFTS:
        try:
            _, rcond = lu_with_rcond(s * sys.E + sys.A, f"pencil at s={s:g}")
            out.append({"s": s, "regular": True, "rcond": rcond})
        except SingularPencilError as exc:
            out.append({"s": s, "regular": False, "rcond": exc.rcond})
    return out


def _decay_section(config: dict, traces: dict) -> dict | None:
    T = config["time"]["T"]
    homogeneous = all(spec == "zero" for spec in config["inputs"].values()) or not config["inputs"]
    w0 = 1.0 if homogeneous else 2.0
    if T <= w0:
        return None
    section: dict = {"window": [w0, T]}
    for label, trace in traces.items():
        try:
            fit = fit_decay_rate(trace, (w0, T))
            section[label] = {
                "gamma": fit.gamma,
                "r_squared": fit.r_squared,
                "truncated": fit.truncated,
            }
        except ValueError:
            section[label] = None
    return section


def _report(ctx: _Context, basis, reduced, traces: dict, chash: str, with_moments: bool) -> dict:
    config = ctx.config
    red = config["reduction"]
    compat = None
    pencil = {"full": _pencil_report(ctx.full)}
    if basis is not None:
        compat = check_compatibility(basis, ctx.fem, ctx.tol)
        compat["mode"] = basis.mode
        compat["dims"] = {"V1": basis.V1.shape[1], "V2": basis.V2.shape[1]}
        compat["multiplier_eliminated"] = reduced.multiplier_eliminated
        pencil["reduced"] = _pencil_report(reduced.descriptor)
    moments = None
    if with_moments and reduced is not None:
        moments = verify_moment_matching(
            ctx.full, reduced.descriptor, red["s0"], red["L"], ctx.tol
        )
    return {
        "config_hash": chash,
        "config": config,
        "a0": check_A0(ctx.fem, ctx.tol),
        "compatibility": compat,
        "pencil": pencil,
        "moments": moments,
        "decay": _decay_section(config, traces) if traces else None,
        "versions": _versions(),
    }


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(ctx: _Context, chash: str):
    x0 = ctx.initial()
    u = _input_function(ctx.config, ctx.port_names)
    trace = simulate(ctx.full, x0, u, _make_scheme(ctx.config), keep_states=False)
    return [_trace_artifact("trace.csv", trace, ctx.port_names)]


def _reduce_artifacts(ctx: _Context, basis: ProjectionBasis, rs: ReducedSystem, chash: str):
    matrices = {
        "V1": basis.V1, "V2": basis.V2, "M1h": rs.M1h, "M2h": rs.M2h,
        "Dh": rs.Dh, "Gh": rs.Gh, "Nh": rs.Nh, "B2h": rs.B2h, "o1h": rs.o1_hat,
    }
    artifacts = [_matrix_artifact(name, matrices[name]) for name in MATRIX_FILES]
    red = ctx.config["reduction"]
    meta = {
        "config_hash": chash,
        "mode": basis.mode,
        "s0": red["s0"],
        "L": red["L"],
        "tol": ctx.tol,
        "ports": ctx.port_names,
        "multiplier_eliminated": rs.multiplier_eliminated,
        "shapes": {name: list(np.atleast_2d(matrices[name]).shape) if matrices[name].ndim > 1
                   else [matrices[name].shape[0], 1] for name in MATRIX_FILES},
        "dims": {"k1h": rs.M1h.shape[0], "k2h": rs.M2h.shape[0], "k3": rs.Nh.shape[0]},
    }
    artifacts.append(("reduced_meta.json", "json", meta))
    return artifacts


def _cmd_reduce(ctx: _Context, chash: str):
    basis, rs = ctx.reduce()
    return _reduce_artifacts(ctx, basis, rs, chash)


def _relative_l2(y_ref: np.ndarray, y: np.ndarray) -> float:
    denom = float(np.linalg.norm(y_ref))
    err = float(np.linalg.norm(y - y_ref))
    return err / denom if denom > 0 else err


def _cmd_compare(ctx: _Context, chash: str):
    basis, rs = ctx.reduce()
    x1, x2 = ctx.initial()
    u = _input_function(ctx.config, ctx.port_names)
    scheme = _make_scheme(ctx.config)
    fom_trace = simulate(ctx.full, (x1, x2), u, scheme, keep_states=False)
    z0 = project_initial_reduced(
        basis, ctx.fem, x1, x2, enforce_mass=ctx.config["reduction"]["enforce_mass"]
    )
    rom_trace = simulate(rs.simulation_form(), z0, u, scheme, keep_states=False)

    per_port = {
        name: _relative_l2(fom_trace.outputs[:, j], rom_trace.outputs[:, j])
        for j, name in enumerate(ctx.port_names)
    }
    comparison = {
        "config_hash": chash,
        "output_error": {
            "per_port": per_port,
            "all_ports": _relative_l2(fom_trace.outputs.ravel(), rom_trace.outputs.ravel()),
        },
        "energy_error_max": float(np.max(np.abs(fom_trace.energy - rom_trace.energy))),
        "mass_error_max": float(np.max(np.abs(fom_trace.mass - rom_trace.mass))),
    }
    report = _report(
        ctx, basis, rs, {"fom": fom_trace, "rom": rom_trace}, chash, with_moments=True
    )
    return [
        _trace_artifact("fom_trace.csv", fom_trace, ctx.port_names),
        _trace_artifact("rom_trace.csv", rom_trace, ctx.port_names),
        ("compare.json", "json", comparison),
        ("report.json", "json", report),
    ]


def _cmd_check(ctx: _Context, chash: str):
    basis, rs = ctx.reduce()
    report = _report(ctx, basis, rs, {}, chash, with_moments=False)
    return [("report.json", "json", report)]


def _cmd_table_mass(ctx: _Context, chash: str):
    red = ctx.config["reduction"]
    extra = {} if red["tol"] is None else {"tol": red["tol"]}
    grid = reproduce_table_mass(
        mesh_cells=ctx.config["mesh"]["cells"],
        L_values=TABLE_L_VALUES,
        s0=red["s0"],
        **extra,
    )
    header = ["L"]
    for mode in ("standard", "improved"):
        for variant in ("projection", "constraint"):
            header += [f"{mode}_{variant}_mass", f"{mode}_{variant}_energy"]
    rows = []
    for i, L in enumerate(grid["L"]):
        row = [L]
        for mode in ("standard", "improved"):
            for variant in ("projection", "constraint"):
                cell = grid[mode][variant][i]
                row += [cell["mass"], cell["energy"]]
        rows.append(row)
    return [("table_mass.csv", "csv", (header, rows))]


def _cmd_table_energy(ctx: _Context, chash: str):
    red = ctx.config["reduction"]
    extra = {} if red["tol"] is None else {"tol": red["tol"]}
    grid = reproduce_table_energy(
        mesh_cells=ctx.config["mesh"]["cells"],
        L_values=TABLE_L_VALUES,
        s0=red["s0"],
        **extra,
    )
    header = ["t", "exact"]
    header += [f"standard_L{L}" for L in TABLE_L_VALUES]
    header += [f"improved_L{L}" for L in TABLE_L_VALUES]
    rows = []
    for i, t in enumerate(grid["times"]):
        row = [t, grid["exact"][i]]
        row += [grid["standard"][L][i] for L in TABLE_L_VALUES]
        row += [grid["improved"][L][i] for L in TABLE_L_VALUES]
        rows.append(row)
    return [("table_energy.csv", "csv", (header, rows))]


def _cmd_run(ctx: _Context, chash: str):
    outputs = ctx.config["outputs"]
    artifacts = []
    basis = rs = None
    traces = {}
    if {"report", "bases"} & set(outputs):
        basis, rs = ctx.reduce()
    if "trace" in outputs or "report" in outputs:
        x0 = ctx.initial()
        u = _input_function(ctx.config, ctx.port_names)
        trace = simulate(ctx.full, x0, u, _make_scheme(ctx.config), keep_states=False)
        traces["fom"] = trace
        if "trace" in outputs:
            artifacts.append(_trace_artifact("trace.csv", trace, ctx.port_names))
    if "bases" in outputs:
        artifacts.extend(_reduce_artifacts(ctx, basis, rs, chash))
    if "tables" in outputs:
        artifacts.extend(_cmd_table_mass(ctx, chash))
        artifacts.extend(_cmd_table_energy(ctx, chash))
    if "report" in outputs:
        artifacts.append(
            ("report.json", "json", _report(ctx, basis, rs, traces, chash, with_moments=True))
        )
    return artifacts


_COMMANDS = {
    "simulate": _cmd_simulate,
    "reduce": _cmd_reduce,
    "compare": _cmd_compare,
    "check": _cmd_check,
    "table-mass": _cmd_table_mass,
    "table-energy": _cmd_table_energy,
    "run": _cmd_run,
}


# ---------------------------------------------------------------------------
# serialization of reduced models


def _load_matrix(path: Path, shape: list[int]) -> np.ndarray:
    rows, cols = shape
    if rows == 0 or cols == 0:
        return np.zeros((rows, cols))
    arr = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if arr.shape != (rows, cols):
        raise ValueError(f"{path.name}: expected shape {(rows, cols)}, found {arr.shape}")
    return arr


def load_reduced(directory) -> ReducedSystem:
    """Reload a reduced model written by the reduce subcommand."""
    directory = Path(directory)
    meta = json.loads((directory / "reduced_meta.json").read_text())
    arrays = {
        name: _load_matrix(directory / f"{name}.csv", meta["shapes"][name])
        for name in MATRIX_FILES
    }
    o1_hat = arrays["o1h"][:, 0] if arrays["o1h"].size else np.zeros(0)
    basis = ProjectionBasis(
        V1=arrays["V1"], V2=arrays["V2"], o1_hat=o1_hat, mode=meta["mode"]
    )
    descriptor = build_descriptor(
        arrays["M1h"], arrays["M2h"], arrays["Dh"], arrays["Gh"], arrays["Nh"],
        arrays["B2h"], o1_hat,
    )
    ode_form = None
    if meta["multiplier_eliminated"]:
        k2h = arrays["M2h"].shape[0]
        ode_form = build_descriptor(
            arrays["M1h"], arrays["M2h"], arrays["Dh"], arrays["Gh"],
            np.zeros((0, k2h)), arrays["B2h"], o1_hat,
        )
    return ReducedSystem(
        M1h=arrays["M1h"], M2h=arrays["M2h"], Dh=arrays["Dh"], Gh=arrays["Gh"],
        Nh=arrays["Nh"], B2h=arrays["B2h"], o1_hat=o1_hat, basis=basis,
        descriptor=descriptor, ode_form=ode_form,
        multiplier_eliminated=meta["multiplier_eliminated"],
    )


# ---------------------------------------------------------------------------
# top level


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _write_artifacts(artifacts, outdir: Path, chash: str) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for name, kind, payload in artifacts:
        if kind == "csv":
            header, rows = payload
            text = _render_csv(header, rows, chash)
        else:
            body = dict(payload)
            body.setdefault("config_hash", chash)
            text = json.dumps(_json_ready(body), indent=2, sort_keys=True) + "\n"
        _atomic_write(outdir / name, text)


def _emit_error(kind: str, exc: BaseException) -> None:
    doc = {"error": {"kind": kind, "type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(doc), file=sys.stderr)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="builtin name (tp1|tp2|net7) or path to a JSON config")
    p.add_argument("--mesh-cells", dest="mesh_cells", type=int, help="cells per edge")
    p.add_argument("--s0", type=float, help="expansion shift for the Krylov basis")
    p.add_argument("--L", type=int, help="number of Krylov levels")
    p.add_argument("--mode", choices=("improved", "standard"), help="reduction mode")
    p.add_argument("--theta", type=float, help="theta parameter in [1/2, 1]")
    p.add_argument("--tau", type=float, help="time step")
    p.add_argument("--T", type=float, help="final time")
    p.add_argument("--d0", type=float, help="damping scale factor for the whole network")
    p.add_argument("--tol", type=float, help="drop tolerance for basis construction")
    p.add_argument("--out", default=".", help="output directory (default: current)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipewave",
        description="Damped pressure waves on pipe networks: simulation, "
                    "structure-preserving model reduction, verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "simulate": "integrate the full model and write trace.csv",
        "reduce": "build a reduced model and write bases and matrices",
        "compare": "simulate full and reduced models and write traces and reports",
        "check": "write a structural report (assumptions, compatibility, pencil)",
        "table-mass": "initial mass/energy table of the reduced single-pipe models",
        "table-energy": "energy decay table of the single-pipe models",
    }
    for name, desc in descriptions.items():
        p = sub.add_parser(name, help=desc)
        _add_common_flags(p)
    runp = sub.add_parser("run", help="execute a full JSON config")
    runp.add_argument("config", help="path to the JSON config")
    _add_common_flags(runp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, network = resolve_config(args)
    except ConfigError as exc:
        _emit_error("config", exc)
        return 2

    chash = config_hash(config)
    try:
        ctx = _Context(config, network)
        artifacts = _COMMANDS[args.command](ctx, chash)
    except (SingularPencilError, SurjectivityError, SingularStepError) as exc:
        _emit_error("numerical", exc)
        return 3
    except (np.linalg.LinAlgError, ValueError) as exc:
        _emit_error("numerical", exc)
        return 3

    _write_artifacts(artifacts, Path(args.out), chash)
    return 0


if __name__ == "__main__":
    sys.exit(main())
