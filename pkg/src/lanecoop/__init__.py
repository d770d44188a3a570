"""Cooperative lane-change coordination engine and benchmark harness."""

from .baselines import (
    BaselineConfig,
    IDMParams,
    IterativeResult,
    default_idm_params,
    idm_acceleration,
    run_iterative,
    step1_ego_plan,
    step2_select_pair,
)
from .bench import (
    ExperimentConfig,
    GeneratorConfig,
    MethodReport,
    SuiteResult,
    generate_scenario,
    run_suite,
)
from .coordination import (
    SlotAssignment,
    SolverConfig,
    TerminalPlan,
    build_constraints,
    slot_to_binaries,
    solve_problem1,
    solve_unified_p2,
)
from .disruption import (
    DisruptionConfig,
    DisruptionReport,
    DisruptionWeights,
    aggregate,
    compute_weights,
    total_disruption,
)
from .model import (
    ActuationLimits,
    SafetyParams,
    Scenario,
    VehicleState,
    predict_uncontrolled,
    validate_scenario,
)
from .planner import PlannerConfig, Trajectory, energy, plan_all, plan_min_energy
from .reachability import ReachabilityParams, contains, p_lower, p_upper

__version__ = "0.1.0"
