"""Task allocation as a mixed-integer QP, solved exactly by decomposition.

For a hypothesized prioritized task m, each robot's continuous subproblem is
a small QP over its velocity and per-task slacks. The binary part (which task
each robot prioritizes) enters the continuous part only through the big-M
bound on the prioritization rows and enters the objective only through the
team mismatch term, so the joint problem separates: solve all N*M robot-task
QPs once, memoize their optimal costs, then scan all M^N assignments for the
exact argmin of

    C * || pi_star - pi_h(assignment) ||^2_T  +  sum_i Q_i(task_of[i]).

Ties are broken toward the lexicographically smallest assignment vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qp import QpProblem, QpSettings, QpSolution, QpStatus, solve_qp
from .tasks import GammaConfig, TaskDef, barrier_row

SEARCH_BITS_LIMIT = 24.0
_CHUNK = 1 << 16
_CACHE_LIMIT = 1 << 18


class SearchSpaceTooLarge(ValueError):
    """Raised when N * log2(M) exceeds the exact-enumeration guard."""


class AllocationInfeasible(RuntimeError):
    """A robot-task QP admitted no feasible point."""

    def __init__(self, robot: int, task: int):
        super().__init__(f"robot {robot} QP infeasible for hypothesized task {task}")
        self.robot = robot
        self.task = task


class AllocationNotConverged(RuntimeError):
    """A robot-task QP ran out of iterations; its iterate is untrusted."""

    def __init__(self, robot: int, task: int, solution):
        super().__init__(
            f"robot {robot} QP for hypothesized task {task} stopped at "
            f"{solution.iterations} iterations with residuals "
            f"(primal {solution.primal_residual:.2e}, "
            f"dual {solution.dual_residual:.2e})"
        )
        self.robot = robot
        self.task = task
        self.solution = solution


@dataclass
class SpecializationState:
    """Team specialization matrix s, entry (i, m) in [0, s_max].

    eps_s is the projector threshold: entries at or below it contribute
    nothing to the team allocation mix pi_h.
    """

    s: np.ndarray
    s_max: float = 1.0
    eps_s: float = 1e-3

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if self.s.ndim != 2:
            raise ValueError("specialization matrix must be 2-D (robots x tasks)")
        if np.any(self.s < 0.0) or np.any(self.s > self.s_max):
            raise ValueError("specialization entries must lie in [0, s_max]")

    @property
    def n_robots(self) -> int:
        return self.s.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.s.shape[1]


@dataclass(frozen=True)
class GlobalSpec:
    """Team-level allocation parameters.

    pi_star: desired fraction of the team prioritizing each task.
    task_weights: diagonal of the mismatch metric T.
    C: mismatch weight, l: slack weight, kappa: priority ratio (> 1),
    delta_max: slack bound (> 0).
    """

    pi_star: np.ndarray
    task_weights: np.ndarray
    C: float = 1e7
    l: float = 10.0
    kappa: float = 250.0
    delta_max: float = 60.0

    def __post_init__(self):
        ps = np.asarray(self.pi_star, dtype=float)
        tw = np.asarray(self.task_weights, dtype=float)
        if ps.ndim != 1 or tw.shape != ps.shape:
            raise ValueError("pi_star and task_weights must be 1-D with equal length")
        if np.any(ps < 0.0) or ps.sum() > 1.0 + 1e-9:
            raise ValueError("pi_star entries must be >= 0 and sum to at most 1")
        if not self.kappa > 1.0:
            raise ValueError("kappa must be > 1")
        if not self.delta_max > 0.0:
            raise ValueError("delta_max must be > 0")
        object.__setattr__(self, "pi_star", ps)
        object.__setattr__(self, "task_weights", tw)


@dataclass(frozen=True)
class Assignment:
    """task_of[i] is the 0-based task prioritized by robot i."""

    task_of: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "task_of", np.asarray(self.task_of, dtype=np.int64))


@dataclass(frozen=True)
class AllocationSolution:
    assignment: Assignment
    u: np.ndarray            # (N, 2) optimal velocities
    delta: np.ndarray        # (N, M) optimal slacks
    objective: float
    mismatch_cost: float
    robot_costs: np.ndarray  # (N,) Q_i at the chosen task
    pi_h: np.ndarray
    qp_iterations: np.ndarray  # (N, M) iteration counts of the memoized QPs


@dataclass
class AllocationCache:
    """Reusable mismatch table for repeated solves with unchanged projectors."""

    key: bytes | None = None
    mismatch: np.ndarray | None = None


def effective_projector(spec: SpecializationState, robot: int) -> np.ndarray:
    """Diagonal 0/1 matrix: task m is 1 iff s[robot, m] > eps_s.

    This is the threshold form of S_i S_i^+ for diagonal specialization.
    """
    d = (spec.s[robot] > spec.eps_s).astype(float)
    return np.diag(d)


def pi_h(spec: SpecializationState, assignment: Assignment) -> np.ndarray:
    """Fraction of the team effectively prioritizing each task.

    Robot i assigned task m contributes 1/N to entry m iff its
    specialization for m exceeds the projector threshold.
    """
    n, m = spec.n_robots, spec.n_tasks
    out = np.zeros(m)
    for i, task in enumerate(assignment.task_of):
        if spec.s[i, task] > spec.eps_s:
            out[task] += 1.0 / n
    return out


def build_robot_qp(
    state: np.ndarray,
    tasks: list[TaskDef],
    s_row: np.ndarray,
    gs: GlobalSpec,
    gamma: GammaConfig,
    hypothesized: int,
    u_max: float = 0.2,
) -> QpProblem:
    """QP for one robot under one hypothesized prioritized task.

    Decision vector z = (u_x, u_y, delta_1 .. delta_M). Rows, in order:
    M barrier rows, M*(M-1) prioritization rows over ordered task pairs
    (big-M deactivated except for the hypothesized task), 2M slack box rows,
    4 velocity box rows. Box bounds of the problem itself are left infinite;
    every bound is an explicit row.
    """
    M = len(tasks)
    n = 2 + M
    H = np.zeros((n, n))
    H[0, 0] = H[1, 1] = 2.0
    for j in range(M):
        H[2 + j, 2 + j] = 2.0 * gs.l * s_row[j]
    q = np.zeros(n)

    rows = []
    rhs = []
    for j, task in enumerate(tasks):
        cr = barrier_row(state, task, gamma)
        r = np.zeros(n)
        r[0:2] = -cr.coeff_u
        r[2 + j] = -1.0
        rows.append(r)
        rhs.append(-cr.rhs_base)
    big_m = (1.0 + 1.0 / gs.kappa) * gs.delta_max
    for mp in range(M):
        omega = 0.0 if mp == hypothesized else big_m
        for nn in range(M):
            if nn == mp:
                continue
            r = np.zeros(n)
            r[2 + mp] = 1.0
            r[2 + nn] = -1.0 / gs.kappa
            rows.append(r)
            rhs.append(omega)
    for j in range(M):
        r = np.zeros(n)
        r[2 + j] = 1.0
        rows.append(r)
        rhs.append(gs.delta_max)
    for j in range(M):
        r = np.zeros(n)
        r[2 + j] = -1.0
        rows.append(r)
        rhs.append(gs.delta_max)
    for sign in (1.0, -1.0):
        for axis in (0, 1):
            r = np.zeros(n)
            r[axis] = sign
            rows.append(r)
            rhs.append(u_max)

    inf = np.full(n, np.inf)
    return QpProblem(
        hessian=H,
        linear=q,
        ineq_matrix=np.array(rows),
        ineq_rhs=np.array(rhs),
        lower=-inf,
        upper=inf,
    )


def _assignment_digits(idx: np.ndarray, n_robots: int, n_tasks: int) -> np.ndarray:
    """Decode assignment indices into task digits, robot 0 most significant."""
    out = np.empty((idx.size, n_robots), dtype=np.int64)
    for i in range(n_robots):
        power = n_tasks ** (n_robots - 1 - i)
        out[:, i] = (idx // power) % n_tasks
    return out


def _mismatch_for(
    digits: np.ndarray, proj: np.ndarray, gs: GlobalSpec
) -> np.ndarray:
    """C-weighted mismatch cost for a block of decoded assignments."""
    L, n_robots = digits.shape
    M = gs.pi_star.size
    pih = np.zeros((L, M))
    rows = np.arange(L)
    w = 1.0 / n_robots
    for i in range(n_robots):
        cols = digits[:, i]
        pih[rows, cols] += w * proj[i, cols]
    diff = gs.pi_star[None, :] - pih
    return gs.C * (diff * diff * gs.task_weights[None, :]).sum(axis=1)


def search_assignments(
    qp_costs: np.ndarray,
    proj: np.ndarray,
    gs: GlobalSpec,
    cache: AllocationCache | None = None,
):
    """Exact argmin over all M^N assignments of mismatch + summed QP costs.

    Scans assignment indices in increasing order with a strict improvement
    test, which realizes the lexicographic tie-break. Returns
    (task_of, total, mismatch_at_best).
    """
    n_robots, n_tasks = qp_costs.shape
    total_count = n_tasks ** n_robots

    cached_mis = None
    if cache is not None and total_count <= _CACHE_LIMIT:
        key = (
            n_robots.to_bytes(4, "little")
            + n_tasks.to_bytes(4, "little")
            + proj.astype(np.float64).tobytes()
            + gs.pi_star.tobytes()
            + gs.task_weights.tobytes()
            + np.float64(gs.C).tobytes()
        )
        if cache.key == key and cache.mismatch is not None:
            cached_mis = cache.mismatch
        else:
            cache.key = key
            cache.mismatch = None

    best_val = np.inf
    best_idx = -1
    best_mis = 0.0
    store_mis = (
        cache is not None and cached_mis is None and total_count <= _CACHE_LIMIT
    )
    mis_store = np.empty(total_count) if store_mis else None

    for start in range(0, total_count, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total_count), dtype=np.int64)
        digits = _assignment_digits(idx, n_robots, n_tasks)
        qsum = np.zeros(idx.size)
        for i in range(n_robots):
            qsum += qp_costs[i, digits[:, i]]
        if cached_mis is not None:
            mis = cached_mis[start : start + idx.size]
        else:
            mis = _mismatch_for(digits, proj, gs)
            if store_mis:
                mis_store[start : start + idx.size] = mis
        tot = qsum + mis
        k = int(np.argmin(tot))
        if tot[k] < best_val:
            best_val = float(tot[k])
            best_idx = int(idx[k])
            best_mis = float(mis[k])

    if store_mis:
        cache.mismatch = mis_store

    task_of = _assignment_digits(
        np.array([best_idx], dtype=np.int64), n_robots, n_tasks
    )[0]
    return task_of, best_val, best_mis


def solve_allocation(
    states: np.ndarray,
    tasks: list[TaskDef],
    spec: SpecializationState,
    gs: GlobalSpec,
    gamma: GammaConfig,
    u_max: float = 0.2,
    settings: QpSettings | None = None,
    cache: AllocationCache | None = None,
) -> AllocationSolution:
    """Allocate tasks and compute each robot's velocity and slacks.

    Solves the N*M robot-task QPs once, then enumerates assignments exactly.
    Raises SearchSpaceTooLarge when N * log2(M) > 24, AllocationInfeasible
    (with the offending robot-task pair) when a subproblem has no feasible
    point, and AllocationNotConverged when a subproblem exhausts its
    iteration budget, since its iterate may violate the velocity bounds.
    """
    states = np.asarray(states, dtype=float)
    n_robots = states.shape[0]
    n_tasks = len(tasks)
    if n_robots < 1 or n_tasks < 1:
        raise ValueError("allocation requires at least one robot and one task")
    if n_robots * np.log2(n_tasks) > SEARCH_BITS_LIMIT + 1e-9:
        raise SearchSpaceTooLarge(
            f"N*log2(M) = {n_robots * np.log2(n_tasks):.1f} exceeds "
            f"{SEARCH_BITS_LIMIT}"
        )

    qp_costs = np.empty((n_robots, n_tasks))
    qp_iters = np.zeros((n_robots, n_tasks), dtype=np.int64)
    u_table = np.empty((n_robots, n_tasks, 2))
    delta_table = np.empty((n_robots, n_tasks, n_tasks))
    for i in range(n_robots):
        for m in range(n_tasks):
            prob = build_robot_qp(
                states[i], tasks, spec.s[i], gs, gamma, m, u_max
            )
            sol = solve_qp(prob, settings)
            if sol.status is QpStatus.INFEASIBLE:
                raise AllocationInfeasible(i, m)
            if sol.status is not QpStatus.OPTIMAL:
                raise AllocationNotConverged(i, m, sol)
            qp_costs[i, m] = sol.objective
            qp_iters[i, m] = sol.iterations
            u_table[i, m] = sol.z_star[0:2]
            delta_table[i, m] = sol.z_star[2:]

    proj = (spec.s > spec.eps_s).astype(float)
    task_of, total, mis = search_assignments(qp_costs, proj, gs, cache)

    u = np.array([u_table[i, task_of[i]] for i in range(n_robots)])
    delta = np.array([delta_table[i, task_of[i]] for i in range(n_robots)])
    robot_costs = np.array([qp_costs[i, task_of[i]] for i in range(n_robots)])
    assignment = Assignment(task_of)
    return AllocationSolution(
        assignment=assignment,
        u=u,
        delta=delta,
        objective=total,
        mismatch_cost=mis,
        robot_costs=robot_costs,
        pi_h=pi_h(spec, assignment),
        qp_iterations=qp_iters,
    )
