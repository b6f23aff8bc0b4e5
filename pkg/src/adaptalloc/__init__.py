"""Adaptive task allocation and constraint-based execution for robot teams.

A deterministic engine solving, at every step, a mixed-integer QP that
jointly picks each robot's prioritized task and its safe velocity command,
plus a 2D simulator that feeds actual-versus-nominal progress back into the
team's specialization matrix so the allocation adapts to disturbances.
"""

from .tasks import (
    ConstraintRow,
    CostEval,
    GammaConfig,
    GammaForm,
    TaskDef,
    barrier_row,
    barrier_value,
    cost,
)
from .qp import (
    KktReport,
    QpProblem,
    QpSettings,
    QpSolution,
    QpStatus,
    check_kkt,
    solve_qp,
)
from .allocation import (
    AllocationCache,
    AllocationInfeasible,
    AllocationNotConverged,
    AllocationSolution,
    Assignment,
    GlobalSpec,
    SearchSpaceTooLarge,
    SpecializationState,
    build_robot_qp,
    effective_projector,
    pi_h,
    solve_allocation,
)
from .adaptation import (
    AdaptationParams,
    DeviationMatrix,
    IntegralAccumulator,
    UpdateMode,
    delta_v,
    deviation_matrix,
    disturbance_occupancy,
    simulate_nominal_step,
    update_specialization,
)
from .world import (
    COMPLETION_V,
    Annulus,
    AnnularSector,
    Disk,
    DisturbanceRegion,
    Rect,
    RobotClass,
    RobotModel,
    RunMetrics,
    ScheduleEvent,
    SimulationError,
    TraceRecord,
    actual_step,
    mu_effective,
    run_scenario,
    summarize,
)
from .scenario import (
    ParseError,
    Scenario,
    Trace,
    TraceFormatError,
    ValidationError,
    load_scenario,
    load_scenario_file,
    read_trace,
    scenario_to_dict,
    write_trace,
)
from .oracles import (
    recompute_accumulator,
    run_adaptation_suite,
    run_miqp_suite,
    run_qp_suite,
    solve_allocation_reference,
    solve_qp_reference,
)

__version__ = "0.1.0"
