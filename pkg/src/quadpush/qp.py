"""Dense convex QP solver.

Solves ``min 1/2 x'Px + q'x  s.t.  lo <= Cx <= hi`` with a dual active-set
method in the style of Goldfarb and Idnani: start from the unconstrained
minimizer and add the most violated constraint, dropping active constraints
whose multipliers would change sign. All linear algebra is done on the
precomputed dual Hessian ``C P^-1 C' = Y'Y`` with ``Y = L^-1 C'``, which stays
cheap for MPC-sized problems (tens to a few hundred rows).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError
from scipy.linalg.lapack import dpotrf, dtrtrs

REGULARIZATION = 1e-9


class _ActiveFactor:
    """Lower Cholesky factor of ``H[A, A]`` kept in step with an ordered working set.

    Calls LAPACK directly; the validated scipy wrappers cost more than the
    arithmetic at these sizes.
    """

    def __init__(self, H):
        self.H = H
        self.rows: list[int] = []
        self.L = np.zeros((0, 0), order="F")

    def forward(self, j):
        """``(w, z)`` with ``L w = H[A, j]`` and Schur complement ``z = H_jj - w'w``."""
        if not self.rows:
            return np.zeros(0), float(self.H[j, j])
        w = dtrtrs(self.L, self.H[self.rows, j], lower=1)[0]
        return w, float(self.H[j, j] - w @ w)

    def back(self, w):
        if not self.rows:
            return np.zeros(0)
        return dtrtrs(self.L, w, lower=1, trans=1)[0]

    def solve(self, b):
        if not self.rows:
            return np.zeros(0)
        return self.back(dtrtrs(self.L, b, lower=1)[0])

    def append(self, j, w, z):
        m = len(self.rows)
        L = np.zeros((m + 1, m + 1), order="F")
        L[:m, :m] = self.L
        L[m, :m] = w
        L[m, m] = np.sqrt(z)
        self.L = L
        self.rows.append(j)

    def pop(self, pos) -> int:
        j = self.rows.pop(pos)
        if self.rows:
            idx = self.rows
            L, info = dpotrf(self.H[np.ix_(idx, idx)], lower=1, clean=1)
            if info != 0:
                raise LinAlgError("working set lost positive definiteness")
            self.L = L
        else:
            self.L = np.zeros((0, 0), order="F")
        return j


class QpStatus(enum.Enum):
    SOLVED = "Solved"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


class QpProblem:
    """Problem data. ``P`` is symmetrized on construction; equality rows use ``lo == hi``."""

    def __init__(self, P, q, C=None, lo=None, hi=None):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        n = P.shape[0]
        if P.shape != (n, n):
            raise ValueError("P must be square")
        self.P = 0.5 * (P + P.T)
        self.q = np.asarray(q, dtype=float).reshape(n)
        if C is None:
            C = np.zeros((0, n))
        self.C = np.asarray(C, dtype=float).reshape(-1, n)
        k = self.C.shape[0]
        self.lo = np.full(k, -np.inf) if lo is None else np.asarray(lo, dtype=float).reshape(k)
        self.hi = np.full(k, np.inf) if hi is None else np.asarray(hi, dtype=float).reshape(k)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def k(self) -> int:
        return self.C.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    y: np.ndarray  # signed multipliers: > 0 on an active upper bound, < 0 on a lower bound

    @property
    def solved(self) -> bool:
        return self.status is QpStatus.SOLVED


class QpSolver:
    """Reusable solver. Holds the last solution so callers can warm start from it."""

    def __init__(self, max_iter: int = 4000, feas_tol: float = 1e-9, warm_tol: float = 1e-7):
        self.max_iter = max_iter
        self.feas_tol = feas_tol
        self.warm_tol = warm_tol
        self.last: QpSolution | None = None

    def solve(self, problem: QpProblem, warm_start=None) -> QpSolution:
        sol = _solve(problem, warm_start, self.max_iter, self.feas_tol, self.warm_tol)
        self.last = sol
        return sol


def solve(problem: QpProblem, warm_start=None, max_iter: int = 4000) -> QpSolution:
    return _solve(problem, warm_start, max_iter, 1e-9, 1e-7)


def _residuals(problem: QpProblem, x, y):
    Cx = problem.C @ x
    primal = 0.0
    if problem.k:
        viol = np.maximum(Cx - problem.hi, problem.lo - Cx)
        primal = float(max(0.0, np.max(viol)))
    dual = float(np.max(np.abs(problem.P @ x + problem.q + problem.C.T @ y))) if problem.n else 0.0
    return primal, dual


def _solve(problem, warm_start, max_iter, feas_tol, warm_tol) -> QpSolution:
    n, k = problem.n, problem.k
    lo, hi, C = problem.lo, problem.hi, problem.C

    def result(x, y, status, it):
        pr, du = _residuals(problem, x, y)
        return QpSolution(x=x, status=status, iterations=it, primal_residual=pr, dual_residual=du, y=y)

    if np.any(lo > hi):
        return result(np.zeros(n), np.zeros(k), QpStatus.INFEASIBLE, 0)

    Pr = problem.P + REGULARIZATION * np.eye(n)
    Lp, info = dpotrf(Pr, lower=1, clean=1)
    if info != 0:
        # not PSD beyond what regularization can fix; treat as unsolvable
        return result(np.zeros(n), np.zeros(k), QpStatus.INFEASIBLE, 0)
    x0 = -dtrtrs(Lp, dtrtrs(Lp, problem.q, lower=1)[0], lower=1, trans=1)[0]
    if k == 0:
        return result(x0, np.zeros(0), QpStatus.SOLVED, 0)

    Y = dtrtrs(Lp, np.asfortranarray(C.T), lower=1)[0]     # L^-1 C'
    H = Y.T @ Y                                             # dual Hessian C P^-1 C'

    def primal(lam):
        return x0 - dtrtrs(Lp, Y @ lam, lower=1, trans=1)[0]

    c0 = C @ x0
    scale = np.maximum(1.0, np.maximum(np.where(np.isfinite(lo), np.abs(lo), 0.0),
                                       np.where(np.isfinite(hi), np.abs(hi), 0.0)))
    tol = feas_tol * scale
    is_eq = np.isfinite(lo) & np.isfinite(hi) & ((hi - lo) <= tol)

    lam = np.zeros(k)
    sign = np.zeros(k)                  # +1 upper active, -1 lower active
    bound = np.zeros(k)
    fac = _ActiveFactor(H)
    active = fac.rows                   # shared list, ordered like the factor
    iterations = 0
    indep_tol = 1e-12 * max(1.0, float(np.max(np.abs(np.diag(H)))))

    def set_side(j, s):
        sign[j] = s
        bound[j] = hi[j] if s > 0 else lo[j]

    def solve_active():
        """Multipliers making every active row tight (no pending row)."""
        if not active:
            return np.zeros(0)
        return fac.solve(c0[active] - bound[active])

    if warm_start is not None and len(warm_start) == n:
        xw = np.asarray(warm_start, dtype=float)
        cw = C @ xw
        with np.errstate(invalid="ignore"):
            at_hi = np.abs(cw - hi) <= warm_tol * scale
            at_lo = np.abs(cw - lo) <= warm_tol * scale
        for j in np.flatnonzero(at_hi | at_lo):
            # keep the working set linearly independent
            w, z = fac.forward(j)
            if z > indep_tol:
                set_side(j, 1.0 if at_hi[j] else -1.0)
                fac.append(j, w, z)
        while active:
            lam_a = solve_active()
            signed = sign[active] * lam_a
            signed[is_eq[active]] = 0.0
            worst = int(np.argmin(signed))
            if signed[worst] >= 0:
                lam[:] = 0.0
                lam[active] = lam_a
                break
            j = fac.pop(worst)
            sign[j] = 0.0
            iterations += 1
        else:
            lam[:] = 0.0

    cx = c0 - H @ lam if active else c0.copy()

    while True:
        if iterations >= max_iter:
            x = primal(lam)
            return result(x, lam.copy(), QpStatus.MAX_ITER, iterations)
        viol_hi = cx - hi
        viol_lo = lo - cx
        viol = np.maximum(viol_hi, viol_lo) - tol
        if active:
            viol[active] = -np.inf
        p = int(np.argmax(viol))
        if viol[p] <= 0.0:
            break
        set_side(p, 1.0 if viol_hi[p] >= viol_lo[p] else -1.0)
        sp = sign[p]

        # add p, possibly after several partial steps that drop blocking rows
        while True:
            idx = np.array(active, dtype=int)
            w, z = fac.forward(p)
            r = fac.back(w)
            remaining = sp * (cx[p] - bound[p])
            t_full = remaining / z if z > indep_tol else np.inf
            t_part, block = np.inf, -1
            if len(idx):
                rate = sign[idx] * sp * r
                ok = (rate > 0) & ~is_eq[idx]
                if np.any(ok):
                    ratio = np.full(len(idx), np.inf)
                    ratio[ok] = sign[idx][ok] * lam[idx][ok] / rate[ok]
                    block = int(np.argmin(ratio))
                    t_part = float(ratio[block])
            if not np.isfinite(t_full) and not np.isfinite(t_part):
                x = primal(lam)
                return result(x, lam.copy(), QpStatus.INFEASIBLE, iterations)
            t = max(min(t_full, t_part), 0.0)
            lam[p] += sp * t
            # H is symmetric: gather rows, which is cheaper than gathering columns
            if len(idx):
                lam[idx] -= sp * t * r
                cx -= sp * t * (H[p] - r @ H[idx])
            else:
                cx -= sp * t * H[p]
            iterations += 1
            if t_full <= t_part:
                fac.append(p, w, z)
                # refresh to limit drift
                lam_a = solve_active()
                lam[:] = 0.0
                lam[active] = lam_a
                cx = c0 - lam_a @ H[active]
                break
            j = fac.pop(block)
            lam[j] = 0.0
            sign[j] = 0.0
            if iterations >= max_iter:
                break

    x = primal(lam)
    return result(x, lam.copy(), QpStatus.SOLVED, iterations)
