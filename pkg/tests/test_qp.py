"""Dense convex QP solver: exact solutions, KKT checks, and edge cases."""

import numpy as np
import pytest

from adaptalloc import (
    QpProblem,
    QpSettings,
    QpStatus,
    check_kkt,
    solve_qp,
)
from adaptalloc.oracles import solve_qp_reference
from adaptalloc.qp import stacked_rows


def _random_problem(rng, n, m):
    # feasible by construction: rhs offset from a random interior point
    B = rng.normal(size=(n, n))
    H = B @ B.T + n * np.eye(n)
    q = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)
    b = A @ x0 + rng.uniform(0.1, 1.0, size=m)
    lo = np.full(n, -10.0)
    hi = np.full(n, 10.0)
    return QpProblem(H, q, A, b, lo, hi)


def test_unconstrained_minimum_at_origin():
    p = QpProblem(
        2.0 * np.eye(2),
        np.zeros(2),
        np.zeros((0, 2)),
        np.zeros(0),
        np.full(2, -np.inf),
        np.full(2, np.inf),
    )
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert np.max(np.abs(sol.z_star)) <= 1e-9
    assert abs(sol.objective) <= 1e-12


def test_two_variable_coupling_constraint():
    # min u^2 + d^2  s.t.  u + d >= 1  ->  (0.5, 0.5), objective 0.5
    p = QpProblem(
        2.0 * np.eye(2),
        np.zeros(2),
        np.array([[-1.0, -1.0]]),
        np.array([-1.0]),
        np.full(2, -np.inf),
        np.full(2, np.inf),
    )
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert np.max(np.abs(sol.z_star - 0.5)) <= 1e-8
    assert abs(sol.objective - 0.5) <= 1e-8


def test_random_problems_satisfy_kkt():
    rng = np.random.default_rng(42)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 2 * n))
        p = _random_problem(rng, n, m)
        sol = solve_qp(p)
        assert sol.status is QpStatus.OPTIMAL
        rep = check_kkt(p, sol.z_star)
        assert rep.passed(1e-6), (rep.stationarity, rep.primal, rep.complementarity)


def test_agrees_with_reference_solver():
    rng = np.random.default_rng(43)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 2 * n))
        p = _random_problem(rng, n, m)
        sol = solve_qp(p)
        ref = solve_qp_reference(p)
        ref_obj = p.objective(ref.z_star)
        scale = 1.0 + abs(ref_obj)
        assert abs(sol.objective - ref_obj) <= 1e-5 * scale


def test_objective_scaling_invariance():
    rng = np.random.default_rng(44)
    p = _random_problem(rng, 4, 5)
    c = 7.3
    p_scaled = QpProblem(
        c * p.hessian, c * p.linear, p.ineq_matrix, p.ineq_rhs, p.lower, p.upper
    )
    z1 = solve_qp(p).z_star
    z2 = solve_qp(p_scaled).z_star
    assert np.max(np.abs(z1 - z2)) <= 1e-8


def test_redundant_constraint_leaves_objective_unchanged():
    H = 2.0 * np.eye(2)
    q = np.array([-2.0, -2.0])
    lo = np.full(2, -np.inf)
    hi = np.full(2, np.inf)
    base = QpProblem(H, q, np.array([[1.0, 1.0]]), np.array([1.0]), lo, hi)
    # second row is implied by the first
    wide = QpProblem(
        H, q, np.array([[1.0, 1.0], [2.0, 2.0]]), np.array([1.0, 2.5]), lo, hi
    )
    s1 = solve_qp(base)
    s2 = solve_qp(wide)
    assert abs(s1.objective - s2.objective) <= QpSettings().tol_obj
    assert abs(s1.objective - (-1.5)) <= 1e-8


def test_repeat_solve_is_bitwise_identical():
    rng = np.random.default_rng(45)
    p = _random_problem(rng, 5, 7)
    z1 = solve_qp(p).z_star
    z2 = solve_qp(p).z_star
    assert z1.tobytes() == z2.tobytes()


def test_detects_infeasible_rows():
    # z <= -1 and z >= 1 cannot both hold
    p = QpProblem(
        2.0 * np.eye(1),
        np.zeros(1),
        np.array([[1.0], [-1.0]]),
        np.array([-1.0, -1.0]),
        np.full(1, -np.inf),
        np.full(1, np.inf),
    )
    sol = solve_qp(p)
    assert sol.status is QpStatus.INFEASIBLE
    assert sol.objective == float("inf")


def test_bounds_and_rows_infeasible_combination():
    # row demands z >= 5 but the box caps z at 1
    p = QpProblem(
        2.0 * np.eye(1),
        np.zeros(1),
        np.array([[-1.0]]),
        np.array([-5.0]),
        np.array([-1.0]),
        np.array([1.0]),
    )
    sol = solve_qp(p)
    assert sol.status is QpStatus.INFEASIBLE


def test_large_multiplier_cascade_polishes_quickly():
    # One binding row feeds a 1:250 ratio row into a heavy quadratic term,
    # so the optimal multipliers reach ~1e6. Regression guard: this class
    # of problem must finish in few iterations with clean residuals.
    H = np.diag([2.0, 0.0, 80.0])
    q = np.zeros(3)
    A = np.array(
        [
            [-1.0, -1.0, 0.0],  # u + d0 >= 0.4
            [0.0, 1.0, -1.0 / 250.0],  # d0 <= d1 / 250
        ]
    )
    b = np.array([-0.4, 0.0])
    lo = np.array([-0.2, -60.0, -60.0])
    hi = np.array([0.2, 60.0, 60.0])
    p = QpProblem(H, q, A, b, lo, hi)
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert sol.iterations < 3000
    # analytic optimum: u = 0.2, d0 = 0.2, d1 = 50
    assert np.max(np.abs(sol.z_star - np.array([0.2, 0.2, 50.0]))) <= 1e-6
    assert abs(sol.objective - 100000.04) <= 1e-3
    rep = check_kkt(p, sol.z_star)
    assert rep.stationarity <= 1e-6
    assert rep.primal <= 1e-8


def test_zero_hessian_direction_is_regularized():
    # exact-zero curvature plus a pushing linear term still solves cleanly
    p = QpProblem(
        np.diag([2.0, 0.0]),
        np.array([0.0, -1.0]),
        np.zeros((0, 2)),
        np.zeros(0),
        np.array([-1.0, -1.0]),
        np.array([1.0, 1.0]),
    )
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert abs(sol.z_star[1] - 1.0) <= 1e-6


def test_stacked_rows_appends_box():
    p = QpProblem(
        2.0 * np.eye(2),
        np.zeros(2),
        np.array([[1.0, 0.0]]),
        np.array([3.0]),
        np.array([-1.0, -np.inf]),
        np.array([1.0, 2.0]),
    )
    A, lo, hi = stacked_rows(p)
    assert A.shape == (3, 2)
    assert np.array_equal(A[1:], np.eye(2))
    assert hi[0] == 3.0 and lo[0] == -np.inf
    assert lo[1] == -1.0 and hi[1] == 1.0
    assert lo[2] == -np.inf and hi[2] == 2.0


def test_check_kkt_flags_violation():
    p = QpProblem(
        2.0 * np.eye(1),
        np.zeros(1),
        np.array([[1.0]]),
        np.array([1.0]),
        np.full(1, -np.inf),
        np.full(1, np.inf),
    )
    rep = check_kkt(p, np.array([1.1]))
    assert rep.primal >= 0.1 - 1e-12
    assert not rep.passed(1e-6)


def test_check_kkt_exact_unconstrained_point():
    p = QpProblem(
        2.0 * np.eye(2),
        np.array([-2.0, 0.0]),
        np.zeros((0, 2)),
        np.zeros(0),
        np.full(2, -np.inf),
        np.full(2, np.inf),
    )
    rep = check_kkt(p, np.array([1.0, 0.0]))
    assert rep.passed(1e-9)


def test_problem_validation():
    H_bad = np.array([[2.0, 1.0], [0.0, 2.0]])  # not symmetric
    with pytest.raises(ValueError):
        QpProblem(
            H_bad,
            np.zeros(2),
            np.zeros((0, 2)),
            np.zeros(0),
            np.full(2, -np.inf),
            np.full(2, np.inf),
        )
    with pytest.raises(ValueError):
        QpProblem(
            2.0 * np.eye(2),
            np.zeros(2),
            np.zeros((0, 2)),
            np.zeros(0),
            np.array([1.0, 0.0]),
            np.array([-1.0, 1.0]),  # lower > upper
        )
