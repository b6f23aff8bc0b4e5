"""On-line specialization updates driven by execution-model mismatch.

After every step the world compares where each robot actually is against
where the nominal single-integrator model says it should be. The per-task
cost difference between the two states feeds a proportional update of the
specialization entry of the task the robot was executing; an optional
integral term pulls every entry back toward a baseline, restoring
specializations once the disturbance stops applying.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .tasks import TaskDef, cost
from .allocation import Assignment, SpecializationState


class UpdateMode(Enum):
    PROPORTIONAL_ONLY = "ProportionalOnly"
    WITH_INTEGRAL = "WithIntegral"


@dataclass(frozen=True)
class AdaptationParams:
    """Update-law gains and timing.

    beta1 scales the proportional (deviation-driven) term, beta2 the
    integral pull toward s_bar, dt is the interval between updates. leak in
    [0, 1) shrinks the accumulator each step; 0 keeps the plain running sum.
    """

    beta1: float
    beta2: float = 0.0
    dt: float = 0.033
    s_bar: np.ndarray | None = None
    mode: UpdateMode = UpdateMode.PROPORTIONAL_ONLY
    leak: float = 0.0

    def __post_init__(self):
        if not self.beta1 > 0.0:
            raise ValueError("beta1 must be > 0")
        if self.beta2 < 0.0:
            raise ValueError("beta2 must be >= 0")
        if self.mode is UpdateMode.WITH_INTEGRAL and not self.beta2 > 0.0:
            raise ValueError("WithIntegral mode requires beta2 > 0")
        if not self.dt > 0.0:
            raise ValueError("dt must be > 0")
        if not 0.0 <= self.leak < 1.0:
            raise ValueError("leak must lie in [0, 1)")
        if self.s_bar is not None:
            object.__setattr__(self, "s_bar", np.asarray(self.s_bar, dtype=float))

    def warnings(self) -> list[str]:
        """Soft-constraint violations; callers surface these, never raise."""
        out = []
        if self.beta2 > 0.0 and self.beta1 < 10.0 * self.beta2:
            out.append(
                f"beta1 ({self.beta1}) should be at least 10 * beta2 "
                f"({self.beta2}): proportional and integral dynamics may mix"
            )
        return out


@dataclass
class IntegralAccumulator:
    """Leaky running sum of (s_bar - s) * dt, one entry per (robot, task)."""

    acc: np.ndarray

    @classmethod
    def zeros(cls, n_robots: int, n_tasks: int) -> "IntegralAccumulator":
        return cls(acc=np.zeros((n_robots, n_tasks)))


@dataclass(frozen=True)
class DeviationMatrix:
    """Per-(robot, task) cost deviation between nominal and actual state.

    Every entry is computed; the update consumes only the assigned entries.
    """

    dv: np.ndarray


def simulate_nominal_step(x_act_prev: np.ndarray, u_prev: np.ndarray, dt: float) -> np.ndarray:
    """Nominal single-integrator step: where the robot should have gone."""
    return np.asarray(x_act_prev, dtype=float) + np.asarray(u_prev, dtype=float) * dt


def delta_v(task: TaskDef, x_sim: np.ndarray, x_act: np.ndarray) -> float:
    """V(x_sim) - V(x_act) for one robot and one task.

    Negative when the actual state lags the nominal one on the way to the
    goal, zero when the two coincide.
    """
    return cost(x_sim, task).value - cost(x_act, task).value


def deviation_matrix(
    x_sim: np.ndarray, x_act: np.ndarray, tasks: list[TaskDef]
) -> DeviationMatrix:
    """delta_v stacked over the whole team, shape (N, M)."""
    dv = np.array(
        [[delta_v(t, x_sim[i], x_act[i]) for t in tasks] for i in range(len(x_sim))]
    )
    return DeviationMatrix(dv=dv)


def update_specialization(
    spec: SpecializationState,
    assignment: Assignment,
    dev: DeviationMatrix,
    params: AdaptationParams,
    acc: IntegralAccumulator,
    step_k: int = 0,
):
    """One update of the specialization matrix.

    The proportional term applies only to the entry of each robot's assigned
    task. The integral term (WithIntegral mode) applies to every entry: the
    accumulator first appends (s_bar - s) * dt, is then scaled by (1 - leak),
    and the scaled value enters the update, so after k updates with leak = 0
    it equals the literal sum over l <= k of (s_bar - s[l]) * dt. Results are
    clamped to [0, s_max]. Returns (new_state, new_accumulator) without
    mutating the inputs. step_k is accepted for symmetry with the trace and
    not otherwise consumed; the caller owns the accumulator's lifetime.
    """
    s = spec.s
    n_robots = s.shape[0]
    gate = np.zeros_like(s)
    gate[np.arange(n_robots), assignment.task_of] = 1.0
    s_new = s + params.beta1 * gate * dev.dv

    if params.mode is UpdateMode.WITH_INTEGRAL:
        s_bar = params.s_bar if params.s_bar is not None else np.ones_like(s)
        acc_new = (acc.acc + (s_bar - s) * params.dt) * (1.0 - params.leak)
        s_new = s_new + params.beta2 * acc_new
    else:
        acc_new = acc.acc.copy()

    s_new = np.clip(s_new, 0.0, spec.s_max)
    return (
        SpecializationState(s=s_new, s_max=spec.s_max, eps_s=spec.eps_s),
        IntegralAccumulator(acc=acc_new),
    )


def disturbance_occupancy(records, dt: float, eps: float) -> float:
    """Fraction of (robot, step) pairs whose realized velocity deviates.

    records is any sequence of per-step objects exposing x_act (N, 2) and
    u (N, 2); the transition into records[k].x_act used records[k - 1].u. A
    pair counts as disturbed when the finite-difference velocity differs
    from the command by more than eps in the 2-norm.
    """
    if len(records) < 2:
        raise ValueError("need at least 2 recorded steps to measure occupancy")
    positions = np.asarray([r.x_act for r in records], dtype=float)
    commands = np.asarray([r.u for r in records], dtype=float)
    vel = (positions[1:] - positions[:-1]) / dt
    dev = np.linalg.norm(vel - commands[:-1], axis=2)
    return float(np.mean(dev > eps))
