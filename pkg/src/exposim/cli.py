"""Command-line front end.

Usage::

    exposim <command> [--config FILE] [--key value ...]

Commands: simulate, accuracy, sweep, stability, expm-bench. A config file holds
flat ``key = value`` lines (``#`` starts a comment, lists are comma separated);
flags override file values. Exit status is 0 on success, 1 on usage or
configuration errors (and I/O failures), 2 when a simulation diverges.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from exposim.bench import (
    DEFAULT_K_GRID,
    DEFAULT_XI_GRID,
    SCENARIOS,
    BenchRecord,
    default_dt_grid,
    kernel_benchmark,
    make_scenario,
    speed_accuracy_sweep,
    stability_search,
    stiffness_damping_sweep,
)
from exposim.bench.runner import steps_per_control
from exposim.contact import project_friction_cone, spring_damper_force
from exposim.errors import ConfigError, DivergedGroundTruth, ExposimError, IntegrationDiverged
from exposim.expm_kernel import PadePolicy
from exposim.integrators import INTEGRATORS, step

__all__ = ["RunConfig", "parse_config", "run", "main", "CSV_COLUMNS", "read_records", "write_records"]

COMMANDS = ("simulate", "accuracy", "sweep", "stability", "expm-bench")
CSV_COLUMNS = (
    "scenario",
    "integrator",
    "mmm",
    "dt_ms",
    "dt_c_ms",
    "K",
    "B",
    "mu",
    "err_mean",
    "err_max",
    "ns_per_step",
    "realtime_factor",
)
OUTPUT_DIR_ENV = "EXPOSIM_OUTPUT_DIR"
DEFAULT_DT_C_MS = 10.0

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    scenario: str = "mass-drop"
    integrators: list[str] = field(default_factory=lambda: ["expo"])
    dt: list[float] = field(default_factory=list)  # ms; empty means the default grid
    dt_c: float | None = None  # ms
    K: float | None = None
    B: float | None = None
    damping_ratio: float | None = None
    mu: float = 1.0
    mmm: list[str] = field(default_factory=lambda: ["full"])
    duration: float | None = None  # s
    output: str | None = None
    repetitions: int = 3
    K_grid: list[float] = field(default_factory=lambda: list(DEFAULT_K_GRID))
    xi_grid: list[float] = field(default_factory=lambda: list(DEFAULT_XI_GRID))

    @property
    def dt_c_ms(self) -> float:
        return DEFAULT_DT_C_MS if self.dt_c is None else self.dt_c

    def scenario_obj(self):
        kw = {"K": self.K, "mu": self.mu, "dt_c": self.dt_c_ms * 1e-3}
        if self.damping_ratio is not None:
            kw["damping_ratio"] = self.damping_ratio
        else:
            kw["B"] = self.B
        if self.duration is not None:
            kw["duration"] = self.duration
        return make_scenario(self.scenario, **kw)

    def output_path(self) -> Path:
        name = self.output or f"{self.command}.csv"
        path = Path(name)
        root = os.environ.get(OUTPUT_DIR_ENV)
        if root and not path.is_absolute():
            path = Path(root) / path
        return path


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _strs(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


_CONVERTERS = {
    "scenario": str.strip,
    "integrators": _strs,
    "dt": _floats,
    "dt_c": float,
    "K": float,
    "B": float,
    "damping_ratio": float,
    "mu": float,
    "mmm": _strs,
    "duration": float,
    "output": str.strip,
    "repetitions": int,
    "K_grid": _floats,
    "xi_grid": _floats,
}
CONFIG_KEYS = tuple(_CONVERTERS)


def _parse_file(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in _CONVERTERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key!r}") from None
    return values


def _validate(cfg: RunConfig) -> None:
    problems = []
    if cfg.command not in COMMANDS:
        problems.append(f"unknown command {cfg.command!r}")
    if cfg.scenario not in SCENARIOS:
        problems.append(f"unknown scenario {cfg.scenario!r}")
    for name in cfg.integrators:
        if name not in INTEGRATORS:
            problems.append(f"unknown integrator {name!r}")
    if not cfg.integrators:
        problems.append("no integrator given")
    if cfg.K is None:
        problems.append("stiffness unspecified")
    elif not cfg.K > 0:
        problems.append("K must be positive")
    if cfg.B is not None and cfg.damping_ratio is not None:
        problems.append("give exactly one of B and damping_ratio")
    elif cfg.B is None and cfg.damping_ratio is None:
        problems.append("damping unspecified (give B or damping_ratio)")
    elif (cfg.B if cfg.B is not None else cfg.damping_ratio) < 0:
        problems.append("damping must be non-negative")
    if cfg.mu < 0:
        problems.append("mu must be non-negative")
    if not cfg.dt_c_ms > 0:
        problems.append("dt_c must be positive")
    else:
        for dt in cfg.dt:
            try:
                steps_per_control(cfg.dt_c_ms, dt)
            except ConfigError:
                problems.append(f"dt must divide dt_c (dt = {dt:g} ms, dt_c = {cfg.dt_c_ms:g} ms)")
    for m in cfg.mmm:
        try:
            PadePolicy.parse(m)
        except ValueError as exc:
            problems.append(str(exc))
    if cfg.duration is not None and not cfg.duration > 0:
        problems.append("duration must be positive")
    if cfg.repetitions < 1:
        problems.append("repetitions must be at least 1")
    if any(not k > 0 for k in cfg.K_grid) or any(not x > 0 for x in cfg.xi_grid):
        problems.append("sweep grids must be positive")
    if problems:
        raise ConfigError("; ".join(problems))


def parse_config(command: str, text: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a validated RunConfig from config-file text and flag overrides.

    Keys given in ``overrides`` (already converted, ``None`` meaning "not
    given") win over the file.
    """
    values = _parse_file(text) if text else {}
    for key, value in (overrides or {}).items():
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            values[key] = value
    cfg = RunConfig(command=command, **values)
    _validate(cfg)
    return cfg


# -- CSV ----------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_records(path: Path, records, extra_columns: tuple[str, ...] = (), extras=None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS + extra_columns)
        for i, rec in enumerate(records):
            row = [_fmt(getattr(rec, c)) for c in CSV_COLUMNS]
            if extras is not None:
                row += [_fmt(x) for x in extras[i]]
            w.writerow(row)


def read_records(path) -> list[BenchRecord]:
    """Parse a benchmark CSV back into BenchRecord objects (extra columns ignored)."""
    types = {f.name: f.type for f in fields(BenchRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for c in CSV_COLUMNS:
                kw[c] = row[c] if types[c] in ("str", str) else float(row[c])
            out.append(BenchRecord(**kw))
    return out


# -- commands -----------------------------------------------------------------------


def _dt_grid_s(cfg: RunConfig, scenario) -> list[float]:
    return [d * 1e-3 for d in cfg.dt] if cfg.dt else default_dt_grid(scenario.dt_c)


def _cmd_simulate(cfg: RunConfig, out) -> int:
    sc = cfg.scenario_obj()
    integrator = cfg.integrators[0]
    policy = PadePolicy.parse(cfg.mmm[0])
    dt = cfg.dt[0] * 1e-3 if cfg.dt else sc.dt_c
    n = steps_per_control(sc.dt_c, dt)
    model = sc.model
    state, contacts = sc.state0.copy(), sc.initial_contacts()

    def forces(contacts, kin):
        lam = np.zeros((model.nc, 3))
        for i, cp in enumerate(contacts):
            if cp.active:
                lam[i] = project_friction_cone(spring_damper_force(cp, kin.p[i], kin.pdot[i]), cp.mu).projected
        return lam

    header = ["t"] + [f"q{i}" for i in range(model.nq)] + [f"v{i}" for i in range(model.nv)]
    header += [f"lam_{name}_{ax}" for name in model.contact_names for ax in "xyz"]
    rows = [[0.0, *state.q, *state.v, *forces(contacts, model.contact_kinematics(state.q, state.v)).ravel()]]
    status = EXIT_OK
    try:
        for k in range(sc.n_ticks):
            tau = sc.control(k * sc.dt_c, state)
            for j in range(n):
                state, contacts, rep = step(integrator, model, contacts, state, tau, dt, policy)
                lam = np.zeros((model.nc, 3))
                for a, i in enumerate(rep.active):
                    lam[i] = rep.lam_applied[3 * a : 3 * a + 3]
                rows.append([(k * n + j + 1) * dt, *state.q, *state.v, *lam.ravel()])
    except IntegrationDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        status = EXIT_DIVERGED
    path = cfg.output_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows([[_fmt(float(x)) for x in r] for r in rows])
    print(f"wrote {len(rows)} rows to {path}", file=out)
    return status


def _cmd_accuracy(cfg: RunConfig, out) -> int:
    sc = cfg.scenario_obj()
    records = speed_accuracy_sweep(
        sc, cfg.integrators, _dt_grid_s(cfg, sc), policies=cfg.mmm, repetitions=cfg.repetitions
    )
    for r in records:
        print(f"{r.integrator:9s} mmm={r.mmm:4s} dt={r.dt_ms:g} ms  err_mean={r.err_mean:.3e}  rtf={r.realtime_factor:.3g}", file=out)
    write_records(cfg.output_path(), records)
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig, out) -> int:
    sc = cfg.scenario_obj()
    dts = [d * 1e-3 for d in cfg.dt] if cfg.dt else [sc.dt_c]
    records = []
    for integrator in cfg.integrators:
        for dt in dts:
            recs = stiffness_damping_sweep(
                sc, integrator, dt, cfg.K_grid, cfg.xi_grid, policy=cfg.mmm[0], repetitions=cfg.repetitions
            )
            for r in recs:
                print(f"{integrator:9s} dt={r.dt_ms:g} ms  K={r.K:.3g} xi={r.damping_ratio:.3g}  err_mean={r.err_mean:.3e}", file=out)
            records += recs
    write_records(cfg.output_path(), records)
    return EXIT_OK


def _cmd_stability(cfg: RunConfig, out) -> int:
    sc = cfg.scenario_obj()
    grid = _dt_grid_s(cfg, sc)
    records, extras = [], []
    for integrator in cfg.integrators:
        res = stability_search(sc, integrator, grid, policy=cfg.mmm[0])
        best = "none" if res.max_stable_dt is None else f"{res.max_stable_dt * 1e3:g} ms"
        print(f"{integrator:9s} max stable dt: {best}", file=out)
        for dt in sorted(res.stable, reverse=True):
            records.append(
                BenchRecord(
                    scenario=sc.name,
                    integrator=integrator,
                    mmm=PadePolicy.parse(cfg.mmm[0]).label if integrator == "expo" else "-",
                    dt_ms=dt * 1e3,
                    dt_c_ms=sc.dt_c * 1e3,
                    K=sc.K,
                    B=sc.B,
                    mu=sc.mu,
                    err_mean=math.nan,
                    err_max=math.nan,
                    ns_per_step=math.nan,
                    realtime_factor=math.nan,
                )
            )
            extras.append((int(res.stable[dt]),))
    write_records(cfg.output_path(), records, ("stable",), extras)
    return EXIT_OK


def _cmd_expm_bench(cfg: RunConfig, out) -> int:
    sc = cfg.scenario_obj()
    dt = cfg.dt[0] * 1e-3 if cfg.dt else sc.dt_c
    policies = cfg.mmm if cfg.mmm != ["full"] else ["full", "4", "3", "2", "1", "0"]
    timings = kernel_benchmark(sc, dt, policies)
    records = []
    for kt in timings:
        print(f"mmm={kt.mmm:4s} {kt.ns_per_call:10.0f} ns/call  rel_err_max={kt.rel_err_max:.3e}", file=out)
        records.append(
            BenchRecord(
                scenario=sc.name,
                integrator="expo",
                mmm=kt.mmm,
                dt_ms=dt * 1e3,
                dt_c_ms=sc.dt_c * 1e3,
                K=sc.K,
                B=sc.B,
                mu=sc.mu,
                err_mean=kt.rel_err_mean,
                err_max=kt.rel_err_max,
                ns_per_step=kt.ns_per_call,
                realtime_factor=math.nan,
            )
        )
    write_records(cfg.output_path(), records)
    return EXIT_OK


_DISPATCH = {
    "simulate": _cmd_simulate,
    "accuracy": _cmd_accuracy,
    "sweep": _cmd_sweep,
    "stability": _cmd_stability,
    "expm-bench": _cmd_expm_bench,
}


def run(cfg: RunConfig, out=None) -> int:
    """Execute a validated configuration and return the exit status."""
    out = sys.stdout if out is None else out
    try:
        return _DISPATCH[cfg.command](cfg, out)
    except (DivergedGroundTruth, IntegrationDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


# -- argument parsing ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exposim", description="Exponential-integrator contact simulation benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="file of 'key = value' lines")
        for key, conv in _CONVERTERS.items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=None, type=conv, metavar=key.upper())
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        text = None
        if args.config:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        overrides = {k: getattr(args, k) for k in CONFIG_KEYS}
        cfg = parse_config(args.command, text, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except ExposimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
