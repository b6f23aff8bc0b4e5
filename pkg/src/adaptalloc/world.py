"""Deterministic 2D world: disturbed dynamics, regions, and the main loop.

Robots follow single-integrator dynamics scaled by a mobility factor that
disturbance regions impose on affected robot classes. The stepping loop
interleaves motion, model-mismatch measurement, specialization updates,
scheduled environment switches, and the allocation solve, emitting one
trace record per step. Identical scenarios produce bit-identical traces.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .adaptation import (
    IntegralAccumulator,
    deviation_matrix,
    disturbance_occupancy,
    simulate_nominal_step,
    update_specialization,
)
from .allocation import (
    AllocationCache,
    Assignment,
    SpecializationState,
    solve_allocation,
)
from .tasks import cost

if TYPE_CHECKING:
    from .scenario import Scenario

COMPLETION_V = 2.5e-3  # squared distance (m^2) counting as task completion
DEFAULT_BOUNDS = ((-1.6, -1.0), (1.6, 1.0))  # arena footprint, 3.2 m x 2.0 m


class RobotClass(Enum):
    GROUND = "Ground"
    AERIAL = "Aerial"


@dataclass
class RobotModel:
    """One robot's identity and kinematic state."""

    id: int
    robot_class: RobotClass
    x_act: np.ndarray
    x_sim: np.ndarray
    u_last: np.ndarray

    @classmethod
    def at(cls, id: int, robot_class: RobotClass, position) -> "RobotModel":
        p = np.asarray(position, dtype=float)
        return cls(
            id=id,
            robot_class=robot_class,
            x_act=p.copy(),
            x_sim=p.copy(),
            u_last=np.zeros(2),
        )


@dataclass(frozen=True)
class Disk:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0.0:
            raise ValueError("disk radius must be > 0")

    def contains(self, p: np.ndarray) -> bool:
        return bool(np.linalg.norm(p - self.center) <= self.radius)

    def heading_ok(self, u: np.ndarray) -> bool:
        return True


@dataclass(frozen=True)
class Annulus:
    center: np.ndarray
    r_in: float
    r_out: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not 0.0 <= self.r_in < self.r_out:
            raise ValueError("annulus requires 0 <= r_in < r_out")

    def contains(self, p: np.ndarray) -> bool:
        r = np.linalg.norm(p - self.center)
        return bool(self.r_in <= r <= self.r_out)

    def heading_ok(self, u: np.ndarray) -> bool:
        return True


@dataclass(frozen=True)
class AnnularSector:
    """Annular band that only obstructs motion heading into a given arc.

    The band test uses the robot's position; angle_from / angle_to bound the
    commanded-velocity heading (radians, wrapped) for which the region
    applies. Zero commanded velocity has no heading, so the region never
    applies to it.
    """

    center: np.ndarray
    r_in: float
    r_out: float
    angle_from: float
    angle_to: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not 0.0 <= self.r_in < self.r_out:
            raise ValueError("annular sector requires 0 <= r_in < r_out")

    def contains(self, p: np.ndarray) -> bool:
        r = np.linalg.norm(p - self.center)
        return bool(self.r_in <= r <= self.r_out)

    def heading_ok(self, u: np.ndarray) -> bool:
        if u[0] == 0.0 and u[1] == 0.0:
            return False
        theta = math.atan2(u[1], u[0])
        width = (self.angle_to - self.angle_from) % (2.0 * math.pi)
        return (theta - self.angle_from) % (2.0 * math.pi) <= width


@dataclass(frozen=True)
class Rect:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", np.asarray(self.min_corner, dtype=float))
        object.__setattr__(self, "max_corner", np.asarray(self.max_corner, dtype=float))
        if not np.all(self.min_corner < self.max_corner):
            raise ValueError("rect requires min < max componentwise")

    def contains(self, p: np.ndarray) -> bool:
        return bool(np.all(p >= self.min_corner) and np.all(p <= self.max_corner))

    def heading_ok(self, u: np.ndarray) -> bool:
        return True


@dataclass
class DisturbanceRegion:
    """Named region scaling the velocity of affected robot classes by mu."""

    name: str
    geometry: Disk | Annulus | AnnularSector | Rect
    affected_classes: frozenset
    mu: float
    active: bool = True

    def __post_init__(self):
        self.affected_classes = frozenset(self.affected_classes)
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")

    def applies(self, robot_class: RobotClass, p: np.ndarray, u: np.ndarray) -> bool:
        return (
            self.active
            and robot_class in self.affected_classes
            and self.geometry.contains(p)
            and self.geometry.heading_ok(u)
        )


@dataclass(frozen=True)
class ScheduleEvent:
    """Environment switch applied at the step boundary covering its time.

    Any subset of {active, mu, affected_classes} may be given; present
    fields replace the named region's values just before that step's
    allocation solve.
    """

    time: float
    region: str
    active: bool | None = None
    mu: float | None = None
    affected_classes: frozenset | None = None

    def step(self, dt: float) -> int:
        return max(0, math.ceil(self.time / dt - 1e-9))


@dataclass
class TraceRecord:
    """Everything observable about one step of the closed loop."""

    k: int
    t: float
    x_act: np.ndarray      # (N, 2)
    x_sim: np.ndarray      # (N, 2)
    u: np.ndarray          # (N, 2)
    task_of: np.ndarray    # (N,)
    delta: np.ndarray      # (N, M)
    s: np.ndarray          # (N, M)
    v: np.ndarray          # (N, M) squared distance of each robot to each goal
    pi_h: np.ndarray       # (M,)
    objective: float
    reassigned: bool
    qp_iterations: int


@dataclass(frozen=True)
class RunMetrics:
    """Deterministic summary of one trace."""

    completion_steps: tuple     # per task: first step with assigned V < threshold, or None
    completion_times: tuple     # same, in seconds
    tasks_completed: int
    reassignments: int
    final_spec: np.ndarray
    occupancy: float | None


class SimulationError(RuntimeError):
    """Allocator failure inside the loop, annotated with the step index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step


def mu_effective(
    regions: list[DisturbanceRegion],
    robot_class: RobotClass,
    p: np.ndarray,
    u: np.ndarray,
) -> float:
    """Most restrictive mobility factor among the regions that apply."""
    mu = 1.0
    for reg in regions:
        if reg.applies(robot_class, p, u):
            mu = min(mu, reg.mu)
    return mu


def actual_step(
    robot: RobotModel,
    u: np.ndarray,
    regions: list[DisturbanceRegion],
    dt: float,
) -> np.ndarray:
    """Disturbed single-integrator step; returns the new position.

    The mobility factor is evaluated at the tentative destination
    x + u * dt, so a robot commanding into an impassable region stops at
    its boundary instead of entering and getting stuck inside. A robot
    already inside remains governed by the region.
    """
    u = np.asarray(u, dtype=float)
    dest = robot.x_act + u * dt
    mu = mu_effective(regions, robot.robot_class, dest, u)
    return robot.x_act + mu * u * dt


def _clip_bounds(p: np.ndarray, bounds) -> np.ndarray:
    (xmin, ymin), (xmax, ymax) = bounds
    return np.array([min(max(p[0], xmin), xmax), min(max(p[1], ymin), ymax)])


def n_steps(t_final: float, dt: float) -> int:
    return max(0, math.ceil(t_final / dt - 1e-9))


def run_scenario(scenario: "Scenario") -> list[TraceRecord]:
    """Execute the closed loop and return the full trace.

    Per step: move robots under the previous command and the current
    environment, measure the nominal-vs-actual deviation, update the
    specialization (gated by the assignment that produced the motion), fire
    schedule events due at this step, then solve the allocation and record.
    """
    robots = [copy.deepcopy(r) for r in scenario.robots]
    regions = [copy.deepcopy(r) for r in scenario.regions]
    tasks = list(scenario.tasks)
    n_robots = len(robots)
    n_tasks = len(tasks)
    if n_robots == 0:
        return []

    spec = SpecializationState(
        s=np.array(scenario.spec_init, dtype=float, copy=True),
        s_max=scenario.s_max,
        eps_s=scenario.eps_s,
    )
    acc = IntegralAccumulator.zeros(n_robots, n_tasks)
    total = n_steps(scenario.t_final, scenario.dt)
    events_at: dict[int, list[ScheduleEvent]] = {}
    for ev in scenario.schedule:
        events_at.setdefault(ev.step(scenario.dt), []).append(ev)
    by_name = {r.name: r for r in regions}

    cache = AllocationCache()
    records: list[TraceRecord] = []
    prev_assignment: Assignment | None = None
    prev_u: np.ndarray | None = None

    for k in range(total):
        if k > 0:
            x_prev = np.array([r.x_act for r in robots])
            for i, rob in enumerate(robots):
                new_p = actual_step(rob, prev_u[i], regions, scenario.dt)
                rob.x_act = _clip_bounds(new_p, scenario.world_bounds)
                rob.x_sim = simulate_nominal_step(
                    x_prev[i], prev_u[i], scenario.dt
                )
                rob.u_last = prev_u[i].copy()
            x_act = np.array([r.x_act for r in robots])
            x_sim = np.array([r.x_sim for r in robots])
            dev = deviation_matrix(x_sim, x_act, tasks)
            spec, acc = update_specialization(
                spec, prev_assignment, dev, scenario.adaptation, acc, k
            )
        else:
            x_act = np.array([r.x_act for r in robots])
            x_sim = x_act.copy()

        for ev in events_at.get(k, ()):
            reg = by_name[ev.region]
            if ev.active is not None:
                reg.active = ev.active
            if ev.mu is not None:
                reg.mu = ev.mu
            if ev.affected_classes is not None:
                reg.affected_classes = frozenset(ev.affected_classes)

        try:
            sol = solve_allocation(
                x_act,
                tasks,
                spec,
                scenario.global_spec,
                scenario.gamma,
                u_max=scenario.u_max,
                settings=scenario.qp_settings,
                cache=cache,
            )
        except Exception as e:
            raise SimulationError(k, e) from e

        v = np.array([[cost(x_act[i], t).value for t in tasks] for i in range(n_robots)])
        reassigned = prev_assignment is not None and bool(
            np.any(sol.assignment.task_of != prev_assignment.task_of)
        )
        records.append(
            TraceRecord(
                k=k,
                t=k * scenario.dt,
                x_act=x_act.copy(),
                x_sim=x_sim.copy(),
                u=sol.u.copy(),
                task_of=sol.assignment.task_of.copy(),
                delta=sol.delta.copy(),
                s=spec.s.copy(),
                v=v,
                pi_h=sol.pi_h.copy(),
                objective=sol.objective,
                reassigned=reassigned,
                qp_iterations=int(sol.qp_iterations.sum()),
            )
        )
        prev_assignment = sol.assignment
        prev_u = sol.u

    return records


def summarize(
    records: list[TraceRecord],
    dt: float | None = None,
    eps: float = 0.01,
) -> RunMetrics:
    """Completion, reassignment, final-spec, and occupancy metrics.

    dt defaults to the spacing of the first two records; occupancy is None
    when the trace is too short to measure it.
    """
    if not records:
        raise ValueError("cannot summarize an empty trace")
    if dt is None:
        dt = records[1].t - records[0].t if len(records) > 1 else 1.0

    n_tasks = records[0].v.shape[1]
    completion_steps: list[int | None] = [None] * n_tasks
    for rec in records:
        for m in range(n_tasks):
            if completion_steps[m] is not None:
                continue
            assigned = np.flatnonzero(rec.task_of == m)
            if assigned.size and np.min(rec.v[assigned, m]) < COMPLETION_V:
                completion_steps[m] = rec.k
    completion_times = tuple(
        None if s is None else s * dt for s in completion_steps
    )
    occupancy = (
        disturbance_occupancy(records, dt, eps) if len(records) > 1 else None
    )
    return RunMetrics(
        completion_steps=tuple(completion_steps),
        completion_times=completion_times,
        tasks_completed=sum(s is not None for s in completion_steps),
        reassignments=int(sum(r.reassigned for r in records)),
        final_spec=records[-1].s.copy(),
        occupancy=occupancy,
    )
