"""Benchmark scenarios, controllers and the accuracy/speed/stability harness."""

from exposim.bench.controllers import (
    ConstantInput,
    HopperBalance,
    PDController,
    hopper_equilibrium,
    pd_controller,
)
from exposim.bench.runner import (
    DEFAULT_K_GRID,
    DEFAULT_XI_GRID,
    GROUND_TRUTH_DT,
    VELOCITY_BOUND,
    BenchRecord,
    KernelTiming,
    StabilityResult,
    Tick,
    collect_contact_systems,
    default_dt_grid,
    ground_truth,
    kernel_benchmark,
    local_error,
    rollout,
    speed_accuracy_sweep,
    stability_search,
    steps_per_control,
    stiffness_damping_sweep,
)
from exposim.bench.scenarios import SCENARIOS, BenchScenario, make_scenario

__all__ = [
    "BenchScenario",
    "BenchRecord",
    "ConstantInput",
    "DEFAULT_K_GRID",
    "DEFAULT_XI_GRID",
    "GROUND_TRUTH_DT",
    "HopperBalance",
    "KernelTiming",
    "PDController",
    "SCENARIOS",
    "StabilityResult",
    "Tick",
    "VELOCITY_BOUND",
    "collect_contact_systems",
    "default_dt_grid",
    "ground_truth",
    "hopper_equilibrium",
    "kernel_benchmark",
    "local_error",
    "make_scenario",
    "pd_controller",
    "rollout",
    "speed_accuracy_sweep",
    "stability_search",
    "steps_per_control",
    "stiffness_damping_sweep",
]
