"""Independent reference implementations used to cross-check the solvers.

Nothing here shares numerical machinery with the production code paths: the
QP reference works in the dual with an accelerated projected-gradient
iteration, the allocation reference brute-forces one monolithic QP per
assignment with its own constraint assembly, and the accumulator reference
evaluates the literal weighted summation instead of the recurrence. The
suite runners at the bottom generate randomized instances, run production
and reference side by side, and report disagreements; they back both the
test suite and the command-line selftest.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linprog

from .adaptation import (
    AdaptationParams,
    DeviationMatrix,
    IntegralAccumulator,
    UpdateMode,
    update_specialization,
)
from .allocation import (
    Assignment,
    GlobalSpec,
    SpecializationState,
    solve_allocation,
)
from .qp import QpProblem, QpStatus, check_kkt, solve_qp, stacked_rows
from .tasks import GammaConfig, GammaForm, TaskDef


@dataclass(frozen=True)
class OracleQpResult:
    z_star: np.ndarray
    y: np.ndarray
    iterations: int
    primal_residual: float
    complementarity: float


def _le_form(A, l, u):
    """Two-sided rows as one-sided G z <= h with a map back to (row, side)."""
    rows = []
    rhs = []
    origin = []
    for i in range(A.shape[0]):
        if np.isfinite(u[i]):
            rows.append(A[i])
            rhs.append(u[i])
            origin.append((i, +1))
        if np.isfinite(l[i]):
            rows.append(-A[i])
            rhs.append(-l[i])
            origin.append((i, -1))
    return np.array(rows), np.array(rhs), origin


def _feasible_start(G, h, n):
    """Any feasible point, from an external LP solve with a zero objective."""
    res = linprog(
        c=np.zeros(n),
        A_ub=G,
        b_ub=h,
        bounds=[(None, None)] * n,
        method="highs",
    )
    if not res.success:
        raise RuntimeError(
            f"reference QP phase 1 found no feasible point (status {res.status})"
        )
    return np.asarray(res.x, dtype=float)


def _primal_active_set(H, q, G, h, z0, tol):
    """Textbook primal active-set iteration from a feasible start.

    Works on one-sided rows G z <= h with strictly convex H: alternate
    equality-constrained steps on the working set, ratio tests that add the
    first blocking row, and drops of the most negative multiplier. Returns
    (z, working multipliers dict) at the optimum; raises if the iteration
    budget is exhausted, which for these problem sizes indicates a bug
    rather than hardness.
    """
    n = H.shape[0]
    mg = G.shape[0]
    z = z0.copy()
    slack = h - G @ z
    work = set(np.flatnonzero(slack <= 1e-9 * (1.0 + np.abs(h))).tolist())

    for _ in range(1000):
        w_idx = np.array(sorted(work), dtype=int)
        k = w_idx.size
        Gw = G[w_idx] if k else np.zeros((0, n))
        K = np.zeros((n + k, n + k))
        K[:n, :n] = H
        K[:n, n:] = Gw.T
        K[n:, :n] = Gw
        g = H @ z + q
        rhs = np.concatenate([-g, np.zeros(k)])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        sol = sol + np.linalg.lstsq(K, rhs - K @ sol, rcond=None)[0]
        p = sol[:n]
        nu = sol[n:]

        if float(np.max(np.abs(p), initial=0.0)) <= 1e-11 * (
            1.0 + float(np.max(np.abs(z), initial=0.0))
        ):
            if k and float(nu.min(initial=0.0)) < -1e-9:
                work.discard(int(w_idx[int(np.argmin(nu))]))
                continue
            return z, dict(zip(w_idx.tolist(), np.maximum(nu, 0.0).tolist()))

        Gp = G @ p
        slack = h - G @ z
        alpha = 1.0
        blocker = -1
        for i in range(mg):
            if i in work or Gp[i] <= 1e-14:
                continue
            a_i = max(slack[i], 0.0) / Gp[i]
            if a_i < alpha - 1e-15:
                alpha = a_i
                blocker = i
        z = z + alpha * p
        if blocker >= 0:
            work.add(blocker)

    raise RuntimeError("reference active-set phase exceeded its iteration budget")


def solve_qp_reference(
    problem: QpProblem, tol: float = 1e-10, max_iterations: int = 1_000_000
) -> OracleQpResult:
    """Accelerated projected gradient on the dual, run to tight KKT residuals.

    The dual objective splits into a smooth quadratic plus the separable
    support function of the constraint interval, whose proximal step has a
    closed form. Rows are rescaled so the dual Hessian has unit diagonal
    (plain Jacobi preconditioning), and momentum restarts keep the final
    phase linearly convergent. Degenerate instances where the dual Hessian
    is singular are handed to a primal active-set finish started from an LP
    feasible point; that phase terminates finitely for the strictly convex
    Hessians used here. The problem must be feasible; failure to converge
    raises instead of returning a bad certificate.
    """
    H = problem.effective_hessian()
    q = problem.linear
    fac = cho_factor(H)
    A, l, u = stacked_rows(problem)
    m = A.shape[0]
    if m == 0:
        z = cho_solve(fac, -q)
        return OracleQpResult(z, np.zeros(0), 0, 0.0, 0.0)

    HiAt = cho_solve(fac, A.T)
    gdiag = np.einsum("ij,ji->i", A, HiAt)
    d = 1.0 / np.sqrt(np.maximum(gdiag, 1e-300))
    As = A * d[:, None]
    ls = l * d
    us = u * d
    HiAs = HiAt * d[None, :]
    G = As @ HiAs
    step = 1.0 / float(np.linalg.eigvalsh(G)[-1])
    zq = cho_solve(fac, q)

    fin_u = np.isfinite(u)
    fin_l = np.isfinite(l)

    def kkt(mu_vec):
        z = -(zq + HiAs @ mu_vec)
        y_true = d * mu_vec
        Az = A @ z
        r_p = float(
            max(
                np.maximum(Az - u, 0.0).max(initial=0.0),
                np.maximum(l - Az, 0.0).max(initial=0.0),
            )
        )
        comp_u = np.abs(np.maximum(y_true[fin_u], 0.0) * (u[fin_u] - Az[fin_u]))
        comp_l = np.abs(np.minimum(y_true[fin_l], 0.0) * (Az[fin_l] - l[fin_l]))
        r_c = float(max(comp_u.max(initial=0.0), comp_l.max(initial=0.0)))
        scale_c = 1.0 + float(np.max(np.abs(y_true), initial=0.0))
        return z, y_true, r_p, r_c, scale_c

    y_prev = np.zeros(m)
    y_cur = np.zeros(m)
    t_prev = t_cur = 1.0

    z, y_true, r_p, r_c, sc = kkt(y_cur)
    if r_p <= tol and r_c <= tol * sc:
        return OracleQpResult(z, y_true, 0, r_p, r_c)

    budget = min(max_iterations, 3000)
    last_it = 0
    for it in range(1, budget + 1):
        beta = (t_prev - 1.0) / t_cur
        w = y_cur + beta * (y_cur - y_prev)
        grad = As @ (zq + HiAs @ w)
        v = w - step * grad
        y_new = np.where(
            v - step * us > 0.0,
            v - step * us,
            np.where(v - step * ls < 0.0, v - step * ls, 0.0),
        )
        if np.dot(w - y_new, y_new - y_cur) > 0.0:
            t_prev = t_cur = 1.0
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_cur * t_cur))
            t_prev, t_cur = t_cur, t_next
        y_prev, y_cur = y_cur, y_new
        last_it = it

        if it % 100 == 0:
            z, y_true, r_p, r_c, sc = kkt(y_cur)
            if r_p <= tol and r_c <= tol * sc:
                return OracleQpResult(z, y_true, it, r_p, r_c)

    G_le, h_le, origin = _le_form(A, l, u)
    z0 = _feasible_start(G_le, h_le, H.shape[0])
    z_f, mults = _primal_active_set(H, q, G_le, h_le, z0, tol)
    y_f = np.zeros(m)
    for j, nu in mults.items():
        i, side = origin[j]
        y_f[i] += side * nu

    Az_f = A @ z_f
    r_p = float(
        max(
            np.maximum(Az_f - u, 0.0).max(initial=0.0),
            np.maximum(l - Az_f, 0.0).max(initial=0.0),
        )
    )
    comp_u = np.abs(np.maximum(y_f[fin_u], 0.0) * (u[fin_u] - Az_f[fin_u]))
    comp_l = np.abs(np.minimum(y_f[fin_l], 0.0) * (Az_f[fin_l] - l[fin_l]))
    r_c = float(max(comp_u.max(initial=0.0), comp_l.max(initial=0.0)))
    r_stat = float(np.max(np.abs(H @ z_f + q + A.T @ y_f), initial=0.0))
    stat_scale = 1.0 + float(np.max(np.abs(H @ z_f), initial=0.0)) + float(
        np.max(np.abs(q), initial=0.0)
    )
    feas_scale = 1.0 + float(np.max(np.abs(h_le), initial=0.0))
    if r_p > tol * feas_scale or r_stat > max(tol * stat_scale, 1e-9):
        raise RuntimeError(
            f"reference QP solver failed verification: primal {r_p:.3e}, "
            f"stationarity {r_stat:.3e}"
        )
    return OracleQpResult(z_f, y_f, last_it, r_p, r_c)


@dataclass(frozen=True)
class OracleAllocationResult:
    task_of: np.ndarray
    u: np.ndarray
    delta: np.ndarray
    objective: float
    mismatch_cost: float


def solve_allocation_reference(
    states: np.ndarray,
    tasks: list[TaskDef],
    spec: SpecializationState,
    gs: GlobalSpec,
    gamma: GammaConfig,
    u_max: float = 0.2,
    tol: float = 1e-10,
) -> OracleAllocationResult:
    """Brute force over assignments, one monolithic QP each.

    All robots' variables are stacked into a single joint problem whose
    constraint matrix is assembled here from scratch (velocity and slack
    bounds go through the box-bound channel rather than explicit rows, so
    even the encoding differs from the production path). Ties break toward
    the lexicographically smallest assignment vector.
    """
    states = np.asarray(states, dtype=float)
    n_robots = states.shape[0]
    n_tasks = len(tasks)
    nb = 2 + n_tasks
    n_joint = n_robots * nb

    H = np.zeros((n_joint, n_joint))
    lower = np.empty(n_joint)
    upper = np.empty(n_joint)
    for i in range(n_robots):
        off = i * nb
        H[off, off] = H[off + 1, off + 1] = 2.0
        lower[off : off + 2] = -u_max
        upper[off : off + 2] = u_max
        for j in range(n_tasks):
            H[off + 2 + j, off + 2 + j] = 2.0 * gs.l * spec.s[i, j]
            lower[off + 2 + j] = -gs.delta_max
            upper[off + 2 + j] = gs.delta_max
    q = np.zeros(n_joint)

    barrier_rows = []
    barrier_rhs = []
    prio_rows = []
    prio_owner = []  # (robot, prioritized task) per priority row
    for i in range(n_robots):
        off = i * nb
        x = states[i]
        for j, task in enumerate(tasks):
            diff = task.goal - x
            V = float(diff @ diff)
            if gamma.form is GammaForm.LINEAR:
                need = gamma.gain * V
            else:
                need = gamma.gain * V ** 3
            row = np.zeros(n_joint)
            row[off : off + 2] = -2.0 * diff
            row[off + 2 + j] = -1.0
            barrier_rows.append(row)
            barrier_rhs.append(-need)
        for mp in range(n_tasks):
            for nn in range(n_tasks):
                if nn == mp:
                    continue
                row = np.zeros(n_joint)
                row[off + 2 + mp] = 1.0
                row[off + 2 + nn] = -1.0 / gs.kappa
                prio_rows.append(row)
                prio_owner.append((i, mp))
    A = np.array(barrier_rows + prio_rows)
    big_m = (1.0 + 1.0 / gs.kappa) * gs.delta_max

    best = None
    for combo in itertools.product(range(n_tasks), repeat=n_robots):
        rhs = list(barrier_rhs)
        for (i, mp) in prio_owner:
            rhs.append(0.0 if mp == combo[i] else big_m)
        prob = QpProblem(
            hessian=H,
            linear=q,
            ineq_matrix=A,
            ineq_rhs=np.array(rhs),
            lower=lower,
            upper=upper,
        )
        sol = solve_qp_reference(prob, tol=tol)
        cont = prob.objective(sol.z_star)

        pih = np.zeros(n_tasks)
        for i in range(n_robots):
            if spec.s[i, combo[i]] > spec.eps_s:
                pih[combo[i]] += 1.0 / n_robots
        mismatch = 0.0
        for mtask in range(n_tasks):
            dv = gs.pi_star[mtask] - pih[mtask]
            mismatch += gs.task_weights[mtask] * dv * dv
        mismatch *= gs.C
        total = mismatch + cont

        if best is None or total < best[0]:
            best = (total, combo, sol.z_star, mismatch)

    total, combo, z, mismatch = best
    u = np.array([z[i * nb : i * nb + 2] for i in range(n_robots)])
    delta = np.array([z[i * nb + 2 : (i + 1) * nb] for i in range(n_robots)])
    return OracleAllocationResult(
        task_of=np.array(combo, dtype=np.int64),
        u=u,
        delta=delta,
        objective=total,
        mismatch_cost=mismatch,
    )


def recompute_accumulator(
    s_history: list[np.ndarray], s_bar: np.ndarray, dt: float, leak: float = 0.0
) -> np.ndarray:
    """Accumulator after len(s_history) updates, from the literal summation.

    Entry l of the history is the specialization matrix the l-th update saw.
    With leak 0 this is the plain sum of (s_bar - s[l]) * dt; with leak it
    is the geometrically weighted sum the recurrence unrolls to.
    """
    if not s_history:
        return np.zeros_like(np.asarray(s_bar, dtype=float))
    K = len(s_history)
    weights = (1.0 - leak) ** np.arange(K, 0, -1)
    terms = np.stack([(np.asarray(s_bar) - np.asarray(s)) * dt for s in s_history])
    return np.tensordot(weights, terms, axes=1)


@dataclass
class SuiteReport:
    """Outcome of one oracle suite run."""

    name: str
    total: int
    failures: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> int:
        return self.total - len(self.failures)

    @property
    def ok(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = [f"{self.name} suite: {self.passed}/{self.total} cases passed"]
        for key, val in self.stats.items():
            out.append(f"  {key}: {val:.3e}")
        out.extend(f"  FAIL {msg}" for msg in self.failures)
        return out


def run_qp_suite(n_cases: int = 100, seed: int = 20240817) -> SuiteReport:
    """Random feasible QPs: production solver vs the dual-gradient oracle.

    Feasibility is guaranteed by construction: each instance is built around
    a point that satisfies every row, with a mix of tight and slack rows,
    one-sided rows, and finite or infinite boxes. Diagonal Hessians with
    exact-zero entries exercise the regularization path.
    """
    rng = np.random.default_rng(seed)
    report = SuiteReport("qp", n_cases)
    worst_obj = 0.0
    worst_kkt = 0.0
    worst_z = 0.0
    for case in range(n_cases):
        n = int(rng.integers(2, 11))
        mrows = int(rng.integers(1, 21))
        diagonal = case % 10 < 3
        if diagonal:
            dvec = rng.uniform(0.5, 3.0, n)
            dvec[rng.random(n) < 0.3] = 0.0
            H = np.diag(dvec)
        else:
            B = rng.normal(size=(n, n))
            Hm = B.T @ B + (0.2 + rng.uniform()) * np.eye(n)
            H = (Hm + Hm.T) / 2.0
        q = rng.normal(size=n)
        z0 = 0.5 * rng.normal(size=n)
        A = rng.normal(size=(mrows, n))
        slack = rng.uniform(0.0, 2.0, mrows)
        slack[rng.random(mrows) < 0.3] = 0.0
        b = A @ z0 + slack
        if diagonal or rng.random() < 0.5:
            lo = z0 - rng.uniform(0.1, 2.0, n)
            hi = z0 + rng.uniform(0.1, 2.0, n)
        else:
            lo = np.full(n, -np.inf)
            hi = np.full(n, np.inf)
        prob = QpProblem(
            hessian=H, linear=q, ineq_matrix=A, ineq_rhs=b, lower=lo, upper=hi
        )

        ref = solve_qp_reference(prob)
        sol = solve_qp(prob)
        msgs = []
        if sol.status is not QpStatus.OPTIMAL:
            msgs.append(f"status {sol.status.value}")
        obj_diff = abs(sol.objective - prob.objective(ref.z_star))
        worst_obj = max(worst_obj, obj_diff)
        if obj_diff > 1e-5:
            msgs.append(f"objective differs by {obj_diff:.2e}")
        rep = check_kkt(prob, sol.z_star, tol=1e-6)
        worst_kkt = max(worst_kkt, rep.stationarity, rep.primal, rep.complementarity)
        if not rep.passed(1e-6):
            msgs.append(
                f"KKT residuals stat={rep.stationarity:.2e} "
                f"primal={rep.primal:.2e} comp={rep.complementarity:.2e}"
            )
        z_diff = float(np.max(np.abs(sol.z_star - ref.z_star), initial=0.0))
        worst_z = max(worst_z, z_diff)
        if msgs:
            report.failures.append(f"case {case}: " + "; ".join(msgs))
    report.stats = {
        "max objective deviation": worst_obj,
        "max KKT residual": worst_kkt,
        "max solution deviation": worst_z,
    }
    return report


def run_miqp_suite(n_cases: int = 20, seed: int = 20240818) -> SuiteReport:
    """Random small allocation instances: decomposed vs monolithic solve.

    Geometry stays within the feasibility radius of the hypothesized-task
    rows (slack ratio bound times delta_max) so every subproblem admits a
    point. Slack values under exact-zero specializations sit in nearly flat
    directions of the objective, so the comparison covers assignment,
    objective, and velocities, not raw slacks.
    """
    rng = np.random.default_rng(seed)
    report = SuiteReport("miqp", n_cases)
    worst_obj = 0.0
    worst_u = 0.0
    for case in range(n_cases):
        n_robots = int(rng.integers(2, 4))
        n_tasks = int(rng.integers(2, 4))
        states = rng.uniform(-0.35, 0.35, size=(n_robots, 2))
        tasks = [
            TaskDef(id=j, goal=rng.uniform(-0.35, 0.35, size=2))
            for j in range(n_tasks)
        ]
        s = rng.uniform(0.0, 1.0, size=(n_robots, n_tasks))
        s[rng.random((n_robots, n_tasks)) < 0.3] = 0.0
        spec = SpecializationState(s=s)
        pi_star = rng.dirichlet(np.ones(n_tasks))
        weights = (
            np.ones(n_tasks)
            if rng.random() < 0.5
            else rng.uniform(0.5, 2.0, n_tasks)
        )
        gs = GlobalSpec(
            pi_star=pi_star,
            task_weights=weights,
            C=float(rng.choice([1e4, 1e5])),
        )
        gamma = GammaConfig(
            form=GammaForm.LINEAR if case % 2 == 0 else GammaForm.CUBIC,
            gain=0.5,
        )

        mono = solve_allocation_reference(states, tasks, spec, gs, gamma)
        deco = solve_allocation(states, tasks, spec, gs, gamma)

        msgs = []
        if not np.array_equal(deco.assignment.task_of, mono.task_of):
            msgs.append(
                f"assignment {deco.assignment.task_of.tolist()} != "
                f"{mono.task_of.tolist()}"
            )
        obj_diff = abs(deco.objective - mono.objective)
        worst_obj = max(worst_obj, obj_diff)
        if obj_diff > 1e-8:
            msgs.append(f"objective differs by {obj_diff:.2e}")
        u_diff = float(np.max(np.abs(deco.u - mono.u), initial=0.0))
        worst_u = max(worst_u, u_diff)
        if u_diff > 1e-6:
            msgs.append(f"velocities differ by {u_diff:.2e}")
        if msgs:
            report.failures.append(f"case {case}: " + "; ".join(msgs))
    report.stats = {
        "max objective deviation": worst_obj,
        "max velocity deviation": worst_u,
    }
    return report


def run_adaptation_suite(n_streams: int = 10000, seed: int = 20240819) -> SuiteReport:
    """Adversarial update streams: clamp safety plus accumulator recomputation.

    Each stream drives update_specialization with heavy-tailed random
    deviations and random gains; every intermediate state must stay in
    [0, s_max], and for integral streams the recurrence must match the
    literal summation to 1e-12.
    """
    rng = np.random.default_rng(seed)
    report = SuiteReport("adaptation", n_streams)
    worst_acc = 0.0
    for stream in range(n_streams):
        n_robots = int(rng.integers(1, 4))
        n_tasks = int(rng.integers(1, 4))
        length = int(rng.integers(4, 17))
        integral = stream % 2 == 1
        leak = float(rng.choice([0.0, 0.0, 0.05]))
        s_bar = rng.uniform(0.0, 1.0, size=(n_robots, n_tasks))
        params = AdaptationParams(
            beta1=float(rng.uniform(0.1, 5.0)),
            beta2=float(rng.uniform(0.01, 0.5)) if integral else 0.0,
            dt=float(rng.choice([0.033, 0.1])),
            s_bar=s_bar,
            mode=UpdateMode.WITH_INTEGRAL if integral else UpdateMode.PROPORTIONAL_ONLY,
            leak=leak if integral else 0.0,
        )
        spec = SpecializationState(s=rng.uniform(0.0, 1.0, size=(n_robots, n_tasks)))
        acc = IntegralAccumulator.zeros(n_robots, n_tasks)
        history = []
        bad = None
        for k in range(length):
            assignment = Assignment(rng.integers(0, n_tasks, size=n_robots))
            dv = rng.normal(size=(n_robots, n_tasks)) * 10.0 ** rng.uniform(-2, 2)
            history.append(spec.s.copy())
            spec, acc = update_specialization(
                spec, assignment, DeviationMatrix(dv=dv), params, acc, k
            )
            if np.any(spec.s < 0.0) or np.any(spec.s > spec.s_max):
                bad = f"clamp violated at step {k}"
                break
        if bad is None and integral:
            expect = recompute_accumulator(history, s_bar, params.dt, leak)
            acc_diff = float(np.max(np.abs(acc.acc - expect), initial=0.0))
            worst_acc = max(worst_acc, acc_diff)
            if acc_diff > 1e-12:
                bad = f"accumulator deviates by {acc_diff:.2e}"
        if bad is not None:
            report.failures.append(f"stream {stream}: {bad}")
    report.stats = {"max accumulator deviation": worst_acc}
    return report
