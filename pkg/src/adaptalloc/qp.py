"""Dense convex QP solver used by the allocator.

Solves

    minimize    0.5 * z' H z + q' z
    subject to  A z <= b,  lower <= z <= upper

with an over-relaxed operator-splitting (ADMM) iteration in the style of
operator-splitting QP solvers, followed by an active-set polish step that
tightens the iterate to machine precision once the active set has settled.
The solver is deterministic: identical inputs produce bit-identical outputs.

Problems are tiny (a dozen variables, a few dozen rows), so everything is
dense and factorizations are recomputed per solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

EPS_REG = 1e-8  # added to exact-zero Hessian diagonal entries


class QpStatus(Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


class QpInfeasible(Exception):
    """Raised by callers that treat an Infeasible status as an error."""


@dataclass(frozen=True)
class QpSettings:
    """Termination tolerances and iteration caps.

    tol_primal / tol_dual are absolute residual tolerances; tol_obj is the
    objective agreement expected against a reference solution (used by the
    test suites, carried here so callers share one source of truth).
    """

    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    tol_obj: float = 1e-5
    max_iterations: int = 20000
    sigma: float = 1e-6
    rho: float = 1.0
    over_relaxation: float = 1.6
    check_interval: int = 25


@dataclass(frozen=True)
class QpProblem:
    """Data of one QP. The Hessian must be symmetric (exactly, entrywise).

    Box bounds may be infinite. Feasibility of the box (lower <= upper) is
    validated at construction; feasibility of the row constraints is the
    solver's job to determine.
    """

    hessian: np.ndarray
    linear: np.ndarray
    ineq_matrix: np.ndarray
    ineq_rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.hessian, dtype=float)
        q = np.asarray(self.linear, dtype=float)
        A = np.asarray(self.ineq_matrix, dtype=float)
        b = np.asarray(self.ineq_rhs, dtype=float)
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        n = q.shape[0]
        if H.shape != (n, n):
            raise ValueError(f"hessian shape {H.shape} does not match n={n}")
        if not np.array_equal(H, H.T):
            raise ValueError("hessian must be exactly symmetric")
        if A.size == 0:
            A = A.reshape(0, n)
        if A.shape[1] != n or b.shape != (A.shape[0],):
            raise ValueError("inequality system shapes are inconsistent")
        if lo.shape != (n,) or hi.shape != (n,):
            raise ValueError("box bound shapes must be (n,)")
        if np.any(lo > hi):
            raise ValueError("box bounds require lower <= upper componentwise")
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "linear", q)
        object.__setattr__(self, "ineq_matrix", A)
        object.__setattr__(self, "ineq_rhs", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return self.linear.shape[0]

    def effective_hessian(self) -> np.ndarray:
        """Hessian with EPS_REG added to exact-zero diagonal entries."""
        H = self.hessian.copy()
        d = np.diagonal(H).copy()
        d[d == 0.0] += EPS_REG
        np.fill_diagonal(H, d)
        return H

    def objective(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.hessian @ z + self.linear @ z)


@dataclass(frozen=True)
class QpSolution:
    z_star: np.ndarray
    objective: float
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float


@dataclass(frozen=True)
class KktReport:
    """Residuals of the KKT conditions at a candidate point.

    Multipliers are recovered by nonnegative least squares on the rows that
    are active at the candidate, so the report is self-contained: it does not
    need the solver's internal dual iterate.
    """

    stationarity: float
    primal: float
    complementarity: float

    def passed(self, tol: float) -> bool:
        return (
            self.stationarity <= tol
            and self.primal <= tol
            and self.complementarity <= tol
        )


def stacked_rows(problem: QpProblem):
    """All constraints as two-sided rows l <= A z <= u.

    Inequality rows get l = -inf; each variable with a finite bound
    contributes one identity row carrying both of its bounds.
    """
    n = problem.n
    m = problem.ineq_matrix.shape[0]
    box_idx = np.flatnonzero(
        np.isfinite(problem.lower) | np.isfinite(problem.upper)
    )
    A = np.zeros((m + box_idx.size, n))
    A[:m] = problem.ineq_matrix
    A[m:][np.arange(box_idx.size), box_idx] = 1.0
    l = np.concatenate([np.full(m, -np.inf), problem.lower[box_idx]])
    u = np.concatenate([problem.ineq_rhs, problem.upper[box_idx]])
    return A, l, u


def _residuals(H, q, A, l, u, x, y):
    """Unscaled primal / dual residuals (inf norms)."""
    if A.shape[0] == 0:
        return 0.0, float(np.max(np.abs(H @ x + q), initial=0.0))
    Ax = A @ x
    viol_hi = np.maximum(Ax - u, 0.0)
    viol_lo = np.maximum(l - Ax, 0.0)
    r_p = float(max(viol_hi.max(initial=0.0), viol_lo.max(initial=0.0)))
    r_d = float(np.max(np.abs(H @ x + q + A.T @ y), initial=0.0))
    return r_p, r_d


def _polish(H, q, A, l, u, x, y, tol_p, tol_d):
    """Solve the equality-constrained KKT system on the guessed active set.

    The guess from the iterate can miss weakly active rows or include extra
    ones, so a short correction loop adds the most violated row and drops
    the worst wrong-signed multiplier before giving up. Returns
    (x, y_full, r_p, r_d) on success, None if the set does not settle.
    Rank-deficient active sets are handled by a small negative
    regularization block plus iterative refinement.
    """
    m = A.shape[0]
    n = H.shape[0]
    Ax = A @ x
    act_tol = 1e-7 * (1.0 + np.abs(u, where=np.isfinite(u), out=np.ones_like(u)))
    up = set(np.flatnonzero((u - Ax <= act_tol) | (y > 1e-10)).tolist())
    lo = set(np.flatnonzero((Ax - l <= act_tol) & (y < -1e-10)).tolist()) - up
    sign_tol = 1e-9

    for _ in range(12):
        up_act = np.array(sorted(up), dtype=int)
        lo_act = np.array(sorted(lo), dtype=int)
        act = np.concatenate([up_act, lo_act])
        if act.size > 0:
            A_act = A[act]
            b_act = np.concatenate([u[up_act], l[lo_act]])
            if not np.all(np.isfinite(b_act)):
                return None
        else:
            A_act = np.zeros((0, n))
            b_act = np.zeros(0)
        k = act.size
        reg = 1e-9
        M = np.zeros((n + k, n + k))
        M[:n, :n] = H
        M[:n, n:] = A_act.T
        M[n:, :n] = A_act
        M[n:, n:] = -reg * np.eye(k)
        rhs = np.concatenate([-q, b_act])
        try:
            fac = lu_factor(M)
        except Exception:
            return None
        sol = lu_solve(fac, rhs)
        # refinement against the unregularized system; large multipliers make
        # the reg perturbation reg*nu significant, so iterate until the
        # residual is negligible or stops contracting
        M0 = M.copy()
        M0[n:, n:] = 0.0
        rhs_scale = 1.0 + float(np.max(np.abs(rhs), initial=0.0))
        prev_norm = np.inf
        for _ in range(8):
            resid = rhs - M0 @ sol
            rnorm = float(np.max(np.abs(resid), initial=0.0))
            if rnorm <= 1e-12 * rhs_scale or rnorm > 0.5 * prev_norm:
                break
            sol = sol + lu_solve(fac, resid)
            prev_norm = rnorm
        x_p = sol[:n]
        nu = sol[n:]

        worst = None
        for pos, row in enumerate(act):
            signed = nu[pos] if pos < up_act.size else -nu[pos]
            if signed < -sign_tol and (worst is None or signed < worst[0]):
                worst = (signed, int(row))
        if worst is not None:
            up.discard(worst[1])
            lo.discard(worst[1])
            continue

        Axp = A @ x_p
        viol_u = np.where(np.isfinite(u), Axp - u, -np.inf)
        viol_l = np.where(np.isfinite(l), l - Axp, -np.inf)
        if up_act.size:
            viol_u[up_act] = -np.inf
            viol_l[up_act] = -np.inf
        if lo_act.size:
            viol_u[lo_act] = -np.inf
            viol_l[lo_act] = -np.inf
        cand_u = int(np.argmax(viol_u))
        cand_l = int(np.argmax(viol_l))
        if max(viol_u[cand_u], viol_l[cand_l]) > tol_p:
            if viol_u[cand_u] >= viol_l[cand_l]:
                up.add(cand_u)
                lo.discard(cand_u)
            else:
                lo.add(cand_l)
            continue

        y_p = np.zeros(m)
        y_p[up_act] = np.maximum(nu[: up_act.size], 0.0)
        y_p[lo_act] = np.minimum(nu[up_act.size:], 0.0)
        r_p, r_d = _residuals(H, q, A, l, u, x_p, y_p)
        if r_p <= tol_p and r_d <= tol_d:
            return x_p, y_p, r_p, r_d
        return None
    return None


def _certificate(A, l, u, dy, strict: float) -> bool:
    """Farkas-style primal infeasibility test on a normalized dual direction."""
    dy_norm = float(np.max(np.abs(dy), initial=0.0))
    if dy_norm <= 1e-12:
        return False
    dyn = dy / dy_norm
    if not (
        np.all(dyn[~np.isfinite(l)] >= -strict)
        and np.all(dyn[~np.isfinite(u)] <= strict)
    ):
        return False
    pos = np.maximum(dyn, 0.0)
    neg = np.minimum(dyn, 0.0)
    support = float(
        np.sum(u[np.isfinite(u)] * pos[np.isfinite(u)])
        + np.sum(l[np.isfinite(l)] * neg[np.isfinite(l)])
    )
    return support < -strict and float(np.max(np.abs(A.T @ dyn))) <= strict


def solve_qp(problem: QpProblem, settings: QpSettings | None = None) -> QpSolution:
    """Solve one QP. Always returns a solution object; inspect status.

    Optimal guarantees primal and dual residuals within tolerance (the
    primal residual is the consensus residual ||A x - z||, which bounds the
    constraint violation). The penalty parameter adapts to the residual
    ratio, and an active-set polish is attempted as soon as the iterate is
    close, snapping the answer to machine precision. Infeasible is detected
    through the divergence certificate of the dual iterate, with a relaxed
    certificate after long stagnation as backstop. MaxIterations returns
    the current iterate with its residuals for diagnosis.
    """
    st = settings or QpSettings()
    H = problem.effective_hessian()
    q = problem.linear
    n = problem.n
    A_u, l_u, u_u = stacked_rows(problem)
    m = A_u.shape[0]

    if m == 0:
        x = cho_solve(cho_factor(H), -q)
        r_d = float(np.max(np.abs(H @ x + q), initial=0.0))
        return QpSolution(x, problem.objective(x), QpStatus.OPTIMAL, 0, 0.0, r_d)

    # row equilibration; duals map back as y = E y_scaled
    norms = np.linalg.norm(A_u, axis=1)
    E = 1.0 / np.maximum(norms, 1e-12)
    A = A_u * E[:, None]
    l = l_u * E
    u = u_u * E

    rho = st.rho
    sigma = st.sigma
    alpha = st.over_relaxation
    eye = np.eye(n)
    AtA = A.T @ A
    fac = cho_factor(H + sigma * eye + rho * AtA)

    x = cho_solve(cho_factor(H + sigma * eye), -q)
    z = np.clip(A @ x, l, u)
    y = np.zeros(m)

    bscale = 1.0 + max(
        np.abs(u_u[np.isfinite(u_u)]).max(initial=0.0),
        np.abs(l_u[np.isfinite(l_u)]).max(initial=0.0),
    )
    y_prev_check = y.copy()
    best_rp = np.inf
    stall_counter = 0
    polish_after = 0
    iters_done = 0
    r_p = r_d = np.inf

    for it in range(1, st.max_iterations + 1):
        rhs = sigma * x - q + A.T @ (rho * z - y)
        x_t = cho_solve(fac, rhs)
        Ax_t = A @ x_t
        x = alpha * x_t + (1.0 - alpha) * x
        v = alpha * Ax_t + (1.0 - alpha) * z
        z_new = np.clip(v + y / rho, l, u)
        y = y + rho * (v - z_new)
        z = z_new
        iters_done = it

        if it % st.check_interval == 0 or it == st.max_iterations:
            y_u = E * y
            diff = (A @ x - z) / E
            r_p = float(np.max(np.abs(diff), initial=0.0))
            grad = H @ x + q + A_u.T @ y_u
            r_d = float(np.max(np.abs(grad), initial=0.0))

            converged = r_p <= st.tol_primal and r_d <= st.tol_dual
            if converged or (r_p <= 1e-2 * bscale and it >= polish_after):
                pol = _polish(H, q, A_u, l_u, u_u, x, y_u, st.tol_primal, st.tol_dual)
                if pol is not None:
                    x_p, _, rp_p, rd_p = pol
                    return QpSolution(
                        x_p, problem.objective(x_p), QpStatus.OPTIMAL, it, rp_p, rd_p
                    )
                polish_after = it + 200
            if converged:
                return QpSolution(
                    x, problem.objective(x), QpStatus.OPTIMAL, it, r_p, r_d
                )

            dy = y - y_prev_check
            if _certificate(A, l, u, dy, 1e-8):
                return QpSolution(x, float("inf"), QpStatus.INFEASIBLE, it, r_p, r_d)
            y_prev_check = y.copy()

            # stagnation backstop: far from feasible, not improving, and the
            # dual direction weakly certifies a contradiction
            if r_p < best_rp * 0.999:
                best_rp = min(best_rp, r_p)
                stall_counter = 0
            else:
                stall_counter += st.check_interval
            if (
                stall_counter >= 6000
                and r_p > 1e3 * st.tol_primal
                and _certificate(A, l, u, dy, 1e-5)
            ):
                return QpSolution(x, float("inf"), QpStatus.INFEASIBLE, it, r_p, r_d)

            # penalty adaptation toward balanced residuals
            scale_p = max(
                float(np.max(np.abs(A_u @ x), initial=0.0)),
                float(np.max(np.abs(z / E), initial=0.0)),
                1e-10,
            )
            scale_d = max(
                float(np.max(np.abs(H @ x), initial=0.0)),
                float(np.max(np.abs(q), initial=0.0)),
                float(np.max(np.abs(A_u.T @ y_u), initial=0.0)),
                1e-10,
            )
            ratio = math.sqrt((r_p / scale_p) / max(r_d / scale_d, 1e-16))
            rho_new = min(max(rho * ratio, 1e-6), 1e6)
            if rho_new > 5.0 * rho or rho_new < rho / 5.0:
                rho = rho_new
                fac = cho_factor(H + sigma * eye + rho * AtA)

    return QpSolution(
        x, problem.objective(x), QpStatus.MAX_ITERATIONS, iters_done, r_p, r_d
    )


def check_kkt(problem: QpProblem, candidate: np.ndarray, tol: float = 1e-6) -> KktReport:
    """KKT residual report at a candidate primal point.

    Multipliers for the active rows are recovered by nonnegative least
    squares against the stationarity equation of the regularized problem
    (the one the solver actually minimizes).
    """
    from scipy.optimize import nnls

    z = np.asarray(candidate, dtype=float)
    H = problem.effective_hessian()
    g = H @ z + problem.linear
    A, l, u = stacked_rows(problem)
    if A.shape[0] == 0:
        s = float(np.max(np.abs(g), initial=0.0))
        return KktReport(s, 0.0, 0.0)

    Az = A @ z
    viol = np.maximum(
        np.maximum(Az - u, 0.0), np.maximum(l - Az, 0.0)
    )
    primal = float(viol.max(initial=0.0))

    act_tol = max(10.0 * tol, 1e-7)
    up_act = np.flatnonzero(u - Az <= act_tol * (1.0 + np.minimum(np.abs(u), 1e12)))
    lo_act = np.flatnonzero(Az - l <= act_tol * (1.0 + np.minimum(np.abs(l), 1e12)))
    # signed active rows: +a for upper-active, -a for lower-active
    rows = []
    slacks = []
    for i in up_act:
        rows.append(A[i])
        slacks.append(abs(u[i] - Az[i]))
    for i in lo_act:
        rows.append(-A[i])
        slacks.append(abs(Az[i] - l[i]))
    if rows:
        G = np.array(rows).T
        lam, _ = nnls(G, -g)
        stat_vec = g + G @ lam
        comp = float(np.max(lam * np.array(slacks), initial=0.0))
    else:
        stat_vec = g
        comp = 0.0
    stationarity = float(np.max(np.abs(stat_vec), initial=0.0))
    return KktReport(stationarity, primal, comp)
