"""Per-robot QP assembly, assignment search, and the combined allocation."""

import numpy as np
import pytest

from adaptalloc import (
    AllocationCache,
    AllocationInfeasible,
    AllocationNotConverged,
    Assignment,
    GammaConfig,
    GammaForm,
    GlobalSpec,
    SearchSpaceTooLarge,
    SpecializationState,
    TaskDef,
    build_robot_qp,
    effective_projector,
    pi_h,
    solve_allocation,
)
from adaptalloc.allocation import search_assignments
from adaptalloc.oracles import solve_allocation_reference
from adaptalloc.qp import EPS_REG

LIN1 = GammaConfig(GammaForm.LINEAR, 1.0)


def _gs(m, **kw):
    kw.setdefault("pi_star", np.full(m, 1.0 / m))
    kw.setdefault("task_weights", np.ones(m))
    return GlobalSpec(**kw)


def test_effective_projector_thresholds():
    spec = SpecializationState(np.array([[1.0, 0.0]]))
    assert np.array_equal(effective_projector(spec, 0), np.diag([1.0, 0.0]))
    spec = SpecializationState(np.array([[0.5, 2e-4]]))
    assert np.array_equal(effective_projector(spec, 0), np.diag([1.0, 0.0]))
    spec = SpecializationState(np.array([[1.0, 1.0]]))
    assert np.array_equal(effective_projector(spec, 0), np.eye(2))


def test_pi_h_counts_effective_robots():
    spec = SpecializationState(np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert np.array_equal(pi_h(spec, Assignment([0, 1])), np.array([0.5, 0.5]))
    # robot 0 on task 1 has zero specialization there, so contributes nothing
    assert np.array_equal(pi_h(spec, Assignment([1, 0])), np.array([0.5, 0.0]))
    one = SpecializationState(np.array([[1.0, 1.0]]))
    assert np.array_equal(pi_h(one, Assignment([0])), np.array([1.0, 0.0]))


def test_build_robot_qp_structure():
    tasks = [TaskDef(0, (1.0, 0.0)), TaskDef(1, (0.0, 1.0))]
    gs = _gs(2, l=10.0, kappa=10.0, delta_max=5.0)
    prob = build_robot_qp(
        np.zeros(2), tasks, np.array([1.0, 0.0]), gs, LIN1, hypothesized=0
    )
    M = 2
    assert prob.n == 2 + M
    assert prob.ineq_matrix.shape == (M + M * (M - 1) + 2 * M + 4, 2 + M)
    # curvature: 2 on u, 2*l*s on each slack; exact zeros get regularized
    assert np.array_equal(np.diag(prob.hessian), np.array([2.0, 2.0, 20.0, 0.0]))
    assert prob.effective_hessian()[3, 3] == EPS_REG
    # hypothesized task's ratio row is tight (0), the other is released
    rhs = prob.ineq_rhs
    assert rhs[2] == 0.0
    assert rhs[3] == (1.0 + 1.0 / gs.kappa) * gs.delta_max
    row_hyp = prob.ineq_matrix[2]
    assert row_hyp[2] == 1.0 and row_hyp[3] == -1.0 / gs.kappa
    # slack and velocity box rows carry the configured bounds
    assert np.all(rhs[4:8] == gs.delta_max)
    assert np.all(rhs[8:12] == 0.2)
    assert np.all(np.isinf(prob.upper)) and np.all(np.isinf(prob.lower))


def test_build_robot_qp_barrier_rows_encode_tasks():
    tasks = [TaskDef(0, (1.0, 0.0))]
    prob = build_robot_qp(
        np.zeros(2), tasks, np.array([1.0]), _gs(1), LIN1, hypothesized=0
    )
    # -grad^T u - delta <= -gamma(V): grad = (-2, 0), V = 1
    assert np.array_equal(prob.ineq_matrix[0], np.array([-2.0, 0.0, -1.0]))
    assert prob.ineq_rhs[0] == -1.0


def test_solve_allocation_two_robot_split():
    # mirrored robots below mirrored goals; the specialized robot takes
    # task 0 and the generalist covers task 1
    states = np.array([[-0.15, -0.5], [0.15, -0.5]])
    tasks = [TaskDef(0, (-0.15, 0.0)), TaskDef(1, (0.15, 0.0))]
    spec = SpecializationState(np.array([[1.0, 0.0], [1.0, 1.0]]))
    gs = _gs(2, l=100.0, pi_star=np.array([0.5, 0.5]))
    sol = solve_allocation(states, tasks, spec, gs, GammaConfig(GammaForm.LINEAR, 0.5))
    assert np.array_equal(sol.assignment.task_of, np.array([0, 1]))
    assert np.array_equal(sol.pi_h, np.array([0.5, 0.5]))
    # both drive up toward their goals
    assert sol.u[0][1] > 0.0 and sol.u[1][1] > 0.0


def test_solve_allocation_single_robot_single_task():
    sol = solve_allocation(
        np.array([[0.0, 0.0]]),
        [TaskDef(0, (0.5, 0.0))],
        SpecializationState(np.array([[1.0]])),
        _gs(1, pi_star=np.array([1.0])),
        LIN1,
    )
    assert np.array_equal(sol.assignment.task_of, np.array([0]))
    assert sol.u[0][0] > 0.0


def test_solution_respects_bounds_and_rows():
    # geometry stays inside the reachable band: the prioritized slack cap
    # delta_max/kappa limits how far a goal may sit from a robot
    rng = np.random.default_rng(11)
    for _ in range(5):
        n, m = 2, 2
        states = rng.uniform(-0.25, 0.25, size=(n, 2))
        tasks = [TaskDef(j, rng.uniform(-0.25, 0.25, 2)) for j in range(m)]
        spec = SpecializationState(rng.uniform(0.2, 1.0, size=(n, m)))
        gs = _gs(m)
        sol = solve_allocation(states, tasks, spec, gs, LIN1)
        assert np.all(np.abs(sol.u) <= 0.2 + 1e-8)
        assert np.all(np.abs(sol.delta) <= gs.delta_max + 1e-8)
        for i in range(n):
            hyp = sol.assignment.task_of[i]
            prob = build_robot_qp(states[i], tasks, spec.s[i], gs, LIN1, hyp)
            z = np.concatenate([sol.u[i], sol.delta[i]])
            assert np.all(prob.ineq_matrix @ z <= prob.ineq_rhs + 1e-7)
            # prioritized slack is geared well below every other slack
            others = np.delete(sol.delta[i], hyp)
            if others.size:
                assert sol.delta[i][hyp] <= np.min(others) / gs.kappa + 1e-8


def test_matches_exhaustive_reference():
    rng = np.random.default_rng(12)
    for _ in range(4):
        n, m = 2, 2
        states = rng.uniform(-0.25, 0.25, size=(n, 2))
        tasks = [TaskDef(j, rng.uniform(-0.25, 0.25, 2)) for j in range(m)]
        spec = SpecializationState(rng.uniform(0.1, 1.0, size=(n, m)))
        gs = _gs(m)
        sol = solve_allocation(states, tasks, spec, gs, LIN1)
        ref = solve_allocation_reference(states, tasks, spec, gs, LIN1)
        assert np.array_equal(sol.assignment.task_of, ref.task_of)
        scale = 1.0 + abs(ref.objective)
        assert abs(sol.objective - ref.objective) <= 1e-5 * scale


def test_search_scale_invariance():
    # scaling every cost by one factor cannot change the argmin
    rng = np.random.default_rng(13)
    qp_costs = rng.uniform(0.0, 5.0, size=(3, 3))
    proj = np.ones((3, 3))
    gs1 = _gs(3, C=100.0)
    gs2 = _gs(3, C=700.0)
    t1, _, _ = search_assignments(qp_costs, proj, gs1)
    t2, _, _ = search_assignments(7.0 * qp_costs, proj, gs2)
    assert np.array_equal(t1, t2)


def test_search_tie_break_prefers_lowest_index():
    # all-zero projector makes the mismatch constant and the costs are
    # equal, so every assignment ties; the scan keeps the first one
    qp_costs = np.ones((2, 2))
    proj = np.zeros((2, 2))
    t, _, _ = search_assignments(qp_costs, proj, _gs(2))
    assert np.array_equal(t, np.array([0, 0]))


def test_search_cache_reuse_is_consistent():
    rng = np.random.default_rng(14)
    qp_costs = rng.uniform(0.0, 5.0, size=(3, 2))
    proj = (rng.uniform(size=(3, 2)) > 0.3).astype(float)
    gs = _gs(2)
    cache = AllocationCache()
    first = search_assignments(qp_costs, proj, gs, cache)
    assert cache.mismatch is not None
    second = search_assignments(qp_costs, proj, gs, cache)
    assert np.array_equal(first[0], second[0])
    assert first[1] == second[1] and first[2] == second[2]


def test_search_space_guard():
    states = np.zeros((9, 2))
    tasks = [TaskDef(j, (0.1 * j, 0.0)) for j in range(7)]
    spec = SpecializationState(np.ones((9, 7)))
    with pytest.raises(SearchSpaceTooLarge):
        solve_allocation(states, tasks, spec, _gs(7), LIN1)


def test_exhausted_iteration_budget_raises(monkeypatch):
    # a MaxIterations iterate may violate the velocity box, so the
    # allocation must refuse it instead of simulating with it
    import adaptalloc.allocation as alloc_mod
    from adaptalloc import QpSolution, QpStatus

    def fake_solve(prob, settings=None):
        z = np.zeros(prob.n)
        return QpSolution(z, 0.0, QpStatus.MAX_ITERATIONS, 20000, 1.0, 1.0)

    monkeypatch.setattr(alloc_mod, "solve_qp", fake_solve)
    with pytest.raises(AllocationNotConverged) as exc:
        solve_allocation(
            np.zeros((1, 2)),
            [TaskDef(0, (0.1, 0.0))],
            SpecializationState(np.ones((1, 1))),
            _gs(1, pi_star=np.array([1.0])),
            LIN1,
        )
    assert exc.value.robot == 0 and exc.value.task == 0
    assert "20000" in str(exc.value)


def test_infeasible_far_goal_reports_pair():
    # too far for the velocity budget: the prioritized slack would need
    # gamma*V - |grad|*u_max = 9 - 1.2, far beyond delta_max/kappa
    states = np.array([[1.5, 0.0]])
    tasks = [TaskDef(0, (-1.5, 0.0)), TaskDef(1, (1.5, 0.0))]
    spec = SpecializationState(np.ones((1, 2)))
    with pytest.raises(AllocationInfeasible) as exc:
        solve_allocation(states, tasks, spec, _gs(2), LIN1)
    assert exc.value.robot == 0
    assert exc.value.task == 0


def test_allocation_determinism():
    rng = np.random.default_rng(15)
    states = rng.uniform(-0.5, 0.5, size=(2, 2))
    tasks = [TaskDef(j, rng.uniform(-0.5, 0.5, 2)) for j in range(2)]
    spec = SpecializationState(rng.uniform(0.2, 1.0, size=(2, 2)))
    gs = _gs(2)
    a = solve_allocation(states, tasks, spec, gs, LIN1)
    b = solve_allocation(states, tasks, spec, gs, LIN1)
    assert np.array_equal(a.assignment.task_of, b.assignment.task_of)
    assert a.u.tobytes() == b.u.tobytes()
    assert a.delta.tobytes() == b.delta.tobytes()


def test_validation_errors():
    with pytest.raises(ValueError):
        SpecializationState(np.array([[1.2, 0.0]]))
    with pytest.raises(ValueError):
        SpecializationState(np.array([1.0, 0.0]))  # 1-D
    with pytest.raises(ValueError):
        _gs(2, kappa=1.0)
    with pytest.raises(ValueError):
        _gs(2, delta_max=0.0)
    with pytest.raises(ValueError):
        GlobalSpec(pi_star=np.array([0.7, 0.7]), task_weights=np.ones(2))
    with pytest.raises(ValueError):
        solve_allocation(
            np.zeros((0, 2)), [], SpecializationState(np.zeros((0, 0))), _gs(1), LIN1
        )
