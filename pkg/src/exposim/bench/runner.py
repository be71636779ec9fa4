"""Ground truth, local error, sweeps and stability search."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from exposim.bench.scenarios import BenchScenario
from exposim.contact import ContactPointState, damping_regime
from exposim.errors import ConfigError, DivergedGroundTruth, ExposimError, IntegrationDiverged, StabilityNonMonotone
from exposim.expm_kernel import FULL, PadePolicy, compute_integrals
from exposim.integrators import INTEGRATORS, expo_step, step
from exposim.mechanics import RobotState

__all__ = [
    "GROUND_TRUTH_DT",
    "VELOCITY_BOUND",
    "Tick",
    "BenchRecord",
    "StabilityResult",
    "KernelTiming",
    "steps_per_control",
    "default_dt_grid",
    "rollout",
    "ground_truth",
    "local_error",
    "speed_accuracy_sweep",
    "stiffness_damping_sweep",
    "stability_search",
    "kernel_benchmark",
    "DEFAULT_K_GRID",
    "DEFAULT_XI_GRID",
]

GROUND_TRUTH_DT = 1e-3 / 64
VELOCITY_BOUND = 1e3

DEFAULT_K_GRID = (1e3, 1e4, 1e5, 1e6, 1e7, 1e8)
DEFAULT_XI_GRID = (0.1, 0.2, 0.5, 1.0, 2.0)


@dataclass
class Tick:
    """State, contact states and the held input at a controller tick."""

    t: float
    state: RobotState
    contacts: list[ContactPointState]
    tau: np.ndarray | None


@dataclass
class BenchRecord:
    """One benchmark measurement. Times are stored in ms to round-trip the CSV exactly."""

    scenario: str
    integrator: str
    mmm: str
    dt_ms: float
    dt_c_ms: float
    K: float
    B: float
    mu: float
    err_mean: float
    err_max: float
    ns_per_step: float
    realtime_factor: float

    @property
    def dt(self) -> float:
        return self.dt_ms * 1e-3

    @property
    def steps_per_control(self) -> int:
        return steps_per_control(self.dt_c_ms, self.dt_ms)

    @property
    def damping_ratio(self) -> float:
        return self.B / (2.0 * math.sqrt(self.K))

    @property
    def damping_regime(self) -> str:
        return damping_regime(self.damping_ratio)

    @property
    def ns_per_simulated_second(self) -> float:
        return self.ns_per_step / self.dt


@dataclass
class StabilityResult:
    integrator: str
    max_stable_dt: float | None
    stable: dict[float, bool] = field(default_factory=dict)


@dataclass
class KernelTiming:
    mmm: str
    ns_per_call: float
    rel_err_mean: float
    rel_err_max: float


def steps_per_control(dt_c: float, dt: float) -> int:
    """dt_c / dt as an integer; raises ConfigError when dt does not divide dt_c."""
    if not dt > 0 or dt > dt_c * (1 + 1e-12):
        raise ConfigError("dt must be positive and at most dt_c")
    ratio = dt_c / dt
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * ratio:
        raise ConfigError("dt must divide dt_c")
    return n


def default_dt_grid(dt_c: float, smallest: float = 1e-3 / 8) -> list[float]:
    """dt_c, dt_c / 2, ... down to ``smallest`` (descending powers of two)."""
    grid = []
    dt = dt_c
    while dt >= smallest * (1 - 1e-12):
        grid.append(dt)
        dt /= 2
    return grid


def _parse_policy(policy) -> PadePolicy:
    return PadePolicy.parse(policy)


def _vmax(state: RobotState) -> float:
    return float(np.max(np.abs(state.v))) if state.v.size else 0.0


def _advance(scenario, integrator, policy, state, contacts, tau, dt, n, bound):
    model = scenario.model
    for _ in range(n):
        state, contacts, _ = step(integrator, model, contacts, state, tau, dt, policy)
        if bound is not None and not _vmax(state) < bound:
            raise IntegrationDiverged("velocity bound exceeded")
    return state, contacts


def rollout(
    scenario: BenchScenario,
    integrator: str,
    dt: float,
    policy=FULL,
    bound: float | None = None,
) -> list[Tick]:
    """Closed-loop run over the whole scenario, recording every controller tick.

    Inputs are computed at each tick and held over the controller period.
    Raises IntegrationDiverged on a non-finite state or when ``bound`` on the
    velocity infinity-norm is reached.
    """
    if integrator not in INTEGRATORS:
        raise ConfigError(f"unknown integrator {integrator!r}")
    policy = _parse_policy(policy)
    n = steps_per_control(scenario.dt_c, dt)
    state = scenario.state0.copy()
    contacts = scenario.initial_contacts()
    ticks = []
    for k in range(scenario.n_ticks):
        t = k * scenario.dt_c
        tau = scenario.control(t, state)
        ticks.append(Tick(t, state, contacts, tau))
        state, contacts = _advance(scenario, integrator, policy, state, contacts, tau, dt, n, bound)
    ticks.append(Tick(scenario.n_ticks * scenario.dt_c, state, contacts, None))
    return ticks


def ground_truth(
    scenario: BenchScenario,
    integrator: str = "expo",
    policy=FULL,
    dt: float = GROUND_TRUTH_DT,
) -> list[Tick]:
    """Reference trajectory of ``integrator`` at a tiny step, one Tick per controller period."""
    try:
        return rollout(scenario, integrator, dt, policy, bound=VELOCITY_BOUND)
    except ConfigError:
        raise
    except (ExposimError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise DivergedGroundTruth(f"{scenario.name}/{integrator}: {exc}") from exc


def _local_errors(scenario, integrator, dt, policy, gt, ticks):
    model = scenario.model
    n = steps_per_control(scenario.dt_c, dt)
    errs = np.empty(len(ticks))
    for j, k in enumerate(ticks):
        start, target = gt[k - 1], gt[k]
        try:
            with np.errstate(over="raise", invalid="raise"):
                state, _ = _advance(
                    scenario, integrator, policy, start.state, start.contacts, start.tau, dt, n, VELOCITY_BOUND
                )
            e = float(np.max(np.abs(model.state_difference(state, target.state))))
            errs[j] = e if math.isfinite(e) else math.inf
        except (ExposimError, FloatingPointError, np.linalg.LinAlgError):
            errs[j] = math.inf
    return errs


def local_error(
    scenario: BenchScenario,
    integrator: str,
    dt: float,
    policy=FULL,
    gt: list[Tick] | None = None,
    ticks=None,
) -> np.ndarray:
    """Per-tick local error e(t_k), k = 1..n_ticks.

    Each entry restarts from the ground-truth tick k-1, integrates one
    controller period at ``dt`` and measures the infinity norm of the state
    difference to ground-truth tick k. Diverged sub-runs give +inf. ``ticks``
    selects a subset of tick indices (1-based, as in ``gt``).
    """
    policy = _parse_policy(policy)
    if gt is None:
        gt = ground_truth(scenario, integrator, FULL)
    idx = range(1, len(gt)) if ticks is None else list(ticks)
    return _local_errors(scenario, integrator, dt, policy, gt, idx)


def _timed_local_error(scenario, integrator, dt, policy, gt, repetitions, warmup):
    runs = []
    errs = None
    for r in range(repetitions + (1 if warmup else 0)):
        t0 = time.perf_counter_ns()
        e = local_error(scenario, integrator, dt, policy, gt)
        elapsed = time.perf_counter_ns() - t0
        if warmup and r == 0:
            errs = e
            continue
        runs.append(elapsed)
        errs = e
    return errs, statistics.median(runs)


def _record(scenario, integrator, policy, dt, errs, wall_ns) -> BenchRecord:
    n = steps_per_control(scenario.dt_c, dt)
    total_steps = n * len(errs)
    sim_time = len(errs) * scenario.dt_c
    return BenchRecord(
        scenario=scenario.name,
        integrator=integrator,
        mmm=policy.label if integrator == "expo" else "-",
        dt_ms=dt * 1e3,
        dt_c_ms=scenario.dt_c * 1e3,
        K=scenario.K,
        B=scenario.B,
        mu=scenario.mu,
        err_mean=float(np.mean(errs)) if len(errs) else 0.0,
        err_max=float(np.max(errs)) if len(errs) else 0.0,
        ns_per_step=wall_ns / total_steps,
        realtime_factor=sim_time / (wall_ns * 1e-9) if wall_ns > 0 else math.inf,
    )


def _inf_record(scenario, integrator, policy, dt) -> BenchRecord:
    rec = _record(scenario, integrator, policy, dt, np.array([math.inf]), 1)
    rec.ns_per_step = math.nan
    rec.realtime_factor = math.nan
    return rec


def speed_accuracy_sweep(
    scenario: BenchScenario,
    integrators=INTEGRATORS,
    dt_grid=None,
    policies=("full",),
    repetitions: int = 3,
    warmup: bool = True,
    gt_cache: dict | None = None,
) -> list[BenchRecord]:
    """One record per (integrator, policy, dt).

    Policies apply to ``expo`` only. Each integrator is compared with its own
    ground truth, generated once with the full policy. Wall time is the median
    over ``repetitions`` runs of the whole local-error evaluation.
    """
    dt_grid = default_dt_grid(scenario.dt_c) if dt_grid is None else list(dt_grid)
    for dt in dt_grid:
        steps_per_control(scenario.dt_c, dt)
    gt_cache = {} if gt_cache is None else gt_cache
    records = []
    for integrator in integrators:
        if integrator not in gt_cache:
            gt_cache[integrator] = ground_truth(scenario, integrator)
        gt = gt_cache[integrator]
        pols = [_parse_policy(p) for p in policies] if integrator == "expo" else [FULL]
        for policy in pols:
            for dt in dt_grid:
                errs, wall = _timed_local_error(scenario, integrator, dt, policy, gt, repetitions, warmup)
                records.append(_record(scenario, integrator, policy, dt, errs, wall))
    return records


def stiffness_damping_sweep(
    scenario: BenchScenario,
    integrator: str,
    dt: float,
    K_grid=DEFAULT_K_GRID,
    xi_grid=DEFAULT_XI_GRID,
    K_fixed: float | None = None,
    xi_fixed: float | None = None,
    policy=FULL,
    repetitions: int = 1,
    warmup: bool = False,
) -> list[BenchRecord]:
    """Records for a K sweep at fixed damping ratio, then a ratio sweep at fixed K.

    B = 2 xi sqrt(K) throughout. The ratio sweep always contains the ratio of
    the scenario's own (K, B). A point whose ground truth diverges is reported
    with infinite error.
    """
    policy = _parse_policy(policy)
    if any(not k > 0 for k in K_grid) or any(not x > 0 for x in xi_grid):
        raise ConfigError("sweep grids must be positive")
    xi0 = scenario.damping_ratio if xi_fixed is None else xi_fixed
    K0 = scenario.K if K_fixed is None else K_fixed
    points = [(K, xi0) for K in K_grid]
    xis = sorted(set(xi_grid) | {scenario.damping_ratio})
    points += [(K0, xi) for xi in xis]
    records = []
    for K, xi in points:
        sc = scenario.with_contact(K=K, damping_ratio=xi)
        try:
            gt = ground_truth(sc, integrator)
        except DivergedGroundTruth:
            records.append(_inf_record(sc, integrator, policy, dt))
            continue
        errs, wall = _timed_local_error(sc, integrator, dt, policy, gt, repetitions, warmup)
        records.append(_record(sc, integrator, policy, dt, errs, wall))
    return records


def stability_search(
    scenario: BenchScenario,
    integrator: str,
    dt_grid=None,
    policy=FULL,
    check_monotone: bool = True,
) -> StabilityResult:
    """Largest step in the grid for which a continuous run stays bounded.

    Stable means every state is finite and the velocity infinity-norm stays
    below VELOCITY_BOUND for the whole scenario. Raises StabilityNonMonotone if
    a step is stable while a smaller one in the grid is not.
    """
    policy = _parse_policy(policy)
    dt_grid = default_dt_grid(scenario.dt_c) if dt_grid is None else list(dt_grid)
    table = {}
    for dt in sorted(dt_grid, reverse=True):
        try:
            with np.errstate(over="raise", invalid="raise"):
                rollout(scenario, integrator, dt, policy, bound=VELOCITY_BOUND)
            table[dt] = True
        except (ExposimError, FloatingPointError, np.linalg.LinAlgError):
            table[dt] = False
    stable_dts = [dt for dt, ok in table.items() if ok]
    best = max(stable_dts) if stable_dts else None
    if check_monotone and best is not None:
        bad = [dt for dt, ok in table.items() if not ok and dt < best]
        if bad:
            raise StabilityNonMonotone(
                f"{scenario.name}/{integrator}: stable at {best} s but unstable at {sorted(bad)} s"
            )
    return StabilityResult(integrator, best, table)


def collect_contact_systems(scenario: BenchScenario, dt: float, max_samples: int = 50):
    """Contact linear systems met by a full-policy expo run, evenly subsampled."""
    n = steps_per_control(scenario.dt_c, dt)
    model = scenario.model
    state = scenario.state0.copy()
    contacts = scenario.initial_contacts()
    systems = []
    for k in range(scenario.n_ticks):
        tau = scenario.control(k * scenario.dt_c, state)
        for _ in range(n):
            state, contacts, rep = expo_step(model, contacts, state, tau, dt, FULL, keep_lds=True)
            if rep.lds is not None:
                systems.append(rep.lds)
    if len(systems) > max_samples:
        pick = np.linspace(0, len(systems) - 1, max_samples).round().astype(int)
        systems = [systems[i] for i in pick]
    return systems


def kernel_benchmark(
    scenario: BenchScenario,
    dt: float,
    policies=("full", 4, 3, 2, 1, 0),
    max_samples: int = 50,
    repeats: int = 15,
    systems=None,
) -> list[KernelTiming]:
    """Time and accuracy of compute_integrals per policy on the scenario's contact systems.

    Each (policy, system) call is timed ``repeats`` times, interleaving the
    policies so slow drifts of the machine hit them alike; the time per call is
    the mean over systems of the per-system minimum. Errors are relative to the
    full policy, in the 2-norm of the stacked integrals.
    """
    if systems is None:
        systems = collect_contact_systems(scenario, dt, max_samples)
    if not systems:
        raise ConfigError("scenario produced no contact systems to benchmark")
    pols = [_parse_policy(p) for p in policies]
    refs = [np.concatenate(compute_integrals(s.A, s.b, s.x0, dt, FULL)) for s in systems]
    errs = np.empty((len(pols), len(systems)))
    for i, policy in enumerate(pols):
        for j, (s, ref) in enumerate(zip(systems, refs)):
            try:
                got = np.concatenate(compute_integrals(s.A, s.b, s.x0, dt, policy))
                errs[i, j] = np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1e-300)
            except ExposimError:
                errs[i, j] = math.inf
    best = np.full((len(pols), len(systems)), np.inf)
    clock = time.perf_counter_ns
    for _ in range(repeats):
        for j, s in enumerate(systems):
            for i, policy in enumerate(pols):
                t0 = clock()
                try:
                    compute_integrals(s.A, s.b, s.x0, dt, policy)
                except ExposimError:
                    pass
                best[i, j] = min(best[i, j], clock() - t0)
    return [
        KernelTiming(p.label, float(best[i].mean()), float(errs[i].mean()), float(errs[i].max()))
        for i, p in enumerate(pols)
    ]
