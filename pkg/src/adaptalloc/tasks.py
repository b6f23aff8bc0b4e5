"""Go-to-goal task costs and the barrier constraint rows derived from them.

Each task is a goal point in the plane. A robot's cost for a task is the
squared distance to the goal. Execution is encoded as a linear inequality on
the velocity input: moving toward the goal at least as fast as a class-K
function of the cost demands, softened by a slack variable added by the
allocator.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

# Hardcoded single-integrator plant: xdot = u. Drift is zero and the input
# matrix is identity, so the barrier row coefficients reduce to -grad V.


class GammaForm(Enum):
    LINEAR = "Linear"
    CUBIC = "Cubic"


@dataclass(frozen=True)
class GammaConfig:
    """Extended class-K function used on the barrier value.

    form: Linear gives gamma(h) = gain * h, Cubic gives gamma(h) = gain * h**3.
    Both are strictly increasing with gamma(0) = 0 for gain > 0.
    """

    form: GammaForm = GammaForm.LINEAR
    gain: float = 1.0

    def __post_init__(self):
        if not self.gain > 0.0:
            raise ValueError(f"gamma gain must be > 0, got {self.gain}")

    def value(self, h: float) -> float:
        if self.form is GammaForm.LINEAR:
            return self.gain * h
        return self.gain * h ** 3


@dataclass(frozen=True)
class TaskDef:
    """A point task. id is the 0-based task index, label a display name."""

    id: int
    goal: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))
        if self.goal.shape != (2,):
            raise ValueError(f"task goal must be a 2-vector, got shape {self.goal.shape}")


@dataclass(frozen=True)
class CostEval:
    """Cost value and gradient of one (robot state, task) pair."""

    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class ConstraintRow:
    """One barrier inequality in the form coeff_u . u >= rhs_base - delta.

    coeff_u is -grad V (points toward the goal). rhs_base is -gamma(h) with
    h = -V, so for the Linear form rhs_base = gain * V.
    """

    coeff_u: np.ndarray
    rhs_base: float


def cost(state: np.ndarray, task: TaskDef) -> CostEval:
    """Squared-distance cost V = ||state - goal||^2 and its gradient."""
    state = np.asarray(state, dtype=float)
    d = state - task.goal
    return CostEval(value=float(d @ d), gradient=2.0 * d)


def barrier_value(state: np.ndarray, task: TaskDef) -> float:
    """Barrier h = -V; nonpositive everywhere, zero exactly at the goal."""
    return -cost(state, task).value


def barrier_row(state: np.ndarray, task: TaskDef, gamma: GammaConfig) -> ConstraintRow:
    """Linear row enforcing h_dot >= -gamma(h) for the single integrator.

    With h = -V and xdot = u the drift term vanishes and L_g h = -grad V,
    giving (-grad V) . u >= -gamma(-V) - delta once the allocator appends
    its slack.
    """
    ev = cost(state, task)
    return ConstraintRow(coeff_u=-ev.gradient, rhs_base=-gamma.value(-ev.value))
