"""Revised simplex with bounded variables.

Every row ``i`` gets a slack column ``s_i e_i`` (``s_i = +1`` for <= and =,
``-1`` for >=; fixed at zero for equalities) and an artificial column used
only by phase 1 and fixed at zero afterwards, so the basis is always square
and nonsingular even when rows are redundant. The basis inverse is kept
explicitly and refactored periodically.

Row duals follow ``d(objective)/d(rhs)``: for a minimization, duals of >= rows
are nonnegative and duals of <= rows nonpositive.

Warm starts reuse a previous :class:`Basis`. If it is still dual feasible (the
usual case after a right-hand-side or bound change) the dual simplex restores
primal feasibility; otherwise a primal feasible basis goes straight to phase 2
and anything else falls back to a cold start.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .milp import EQ, GE, LE, LinearModel

TOL_FEAS = 1e-7
TOL_GAP = 1e-7
TOL_CS = 1e-6
_TOL_PIV = 1e-9
_REFACTOR_EVERY = 50
_DEGENERATE_STREAK = 30

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


class LpError(RuntimeError):
    pass


class Infeasible(LpError):
    pass


class Unbounded(LpError):
    pass


class IterationLimit(LpError):
    pass


@dataclass(frozen=True)
class Basis:
    """Basic columns (row order) and the nonbasic-at-upper flags, extended column space."""

    basic: tuple[int, ...]
    at_upper: tuple[int, ...]
    n_struct: int
    n_rows: int

    def dump(self, model: LinearModel) -> str:
        n = self.n_struct
        names = []
        for j in self.basic:
            if j < n:
                names.append(model.var_names[j])
            elif j < n + self.n_rows:
                names.append(f"slack[{model.row_names[j - n]}]")
            else:
                names.append(f"art[{model.row_names[j - n - self.n_rows]}]")
        return "\n".join(f"{r:4d} {name}" for r, name in enumerate(names))


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    reduced_costs: np.ndarray | None
    basis: Basis | None
    iterations: int

    def raise_for_status(self) -> "LpSolution":
        if self.status == INFEASIBLE:
            raise Infeasible("LP is infeasible")
        if self.status == UNBOUNDED:
            raise Unbounded("LP is unbounded")
        if self.status == ITERATION_LIMIT:
            raise IterationLimit(f"iteration limit hit after {self.iterations} iterations")
        return self


class _Simplex:
    def __init__(self, model: LinearModel):
        if model.is_mip:
            raise ValueError("solve_lp needs a model without integrality flags; use lp_relaxation")
        self.model = model
        A = model.A
        self.m, self.n = A.shape
        m, n = self.m, self.n
        self.A = A
        self.b = model.rhs.astype(float)
        self.slack_sign = np.where(model.sense == GE, -1.0, 1.0)
        self.art_sign = np.ones(m)
        N = n + 2 * m
        self.N = N
        self.lb = np.concatenate([model.lb, np.zeros(m), np.zeros(m)])
        slack_ub = np.where(model.sense == EQ, 0.0, np.inf)
        self.ub = np.concatenate([model.ub, slack_ub, np.zeros(m)])
        self.c_real = np.concatenate([model.cost, np.zeros(2 * m)])
        self.c = self.c_real
        self.cscale = max(1.0, float(np.abs(model.cost).max(initial=0.0)))
        self.tol_d = 1e-9 * self.cscale
        self.iterations = 0
        self.is_basic = np.zeros(N, bool)
        self.at_upper = np.zeros(N, bool)

    # ---- column helpers -------------------------------------------------
    def column(self, j: int) -> np.ndarray:
        if j < self.n:
            return self.A[:, j]
        col = np.zeros(self.m)
        i = (j - self.n) % self.m
        col[i] = self.slack_sign[i] if j < self.n + self.m else self.art_sign[i]
        return col

    def basis_matrix(self) -> np.ndarray:
        return np.column_stack([self.column(j) for j in self.basic])

    def refactor(self) -> bool:
        try:
            self.Binv = np.linalg.inv(self.basis_matrix())
        except np.linalg.LinAlgError:
            return False
        return bool(np.all(np.isfinite(self.Binv)))

    def nonbasic_values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.ub, self.lb)
        x = np.where(np.isfinite(x), x, 0.0)
        x[self.is_basic] = 0.0
        return x

    def residual(self, xn: np.ndarray) -> np.ndarray:
        n, m = self.n, self.m
        return (self.b - self.A @ xn[:n] - self.slack_sign * xn[n:n + m]
                - self.art_sign * xn[n + m:])

    def primal(self) -> tuple[np.ndarray, np.ndarray]:
        xn = self.nonbasic_values()
        xb = self.Binv @ self.residual(xn)
        return xn, xb

    def duals(self) -> np.ndarray:
        return self.c[self.basic] @ self.Binv

    def reduced_costs(self, pi: np.ndarray) -> np.ndarray:
        n, m = self.n, self.m
        d = self.c.copy()
        d[:n] -= self.A.T @ pi
        d[n:n + m] -= self.slack_sign * pi
        d[n + m:] -= self.art_sign * pi
        d[self.is_basic] = 0.0
        return d

    def row_alpha(self, r: int) -> np.ndarray:
        rho = self.Binv[r]
        n, m = self.n, self.m
        alpha = np.empty(self.N)
        alpha[:n] = self.A.T @ rho
        alpha[n:n + m] = self.slack_sign * rho
        alpha[n + m:] = self.art_sign * rho
        alpha[self.is_basic] = 0.0
        return alpha

    def set_basis(self, basic, at_upper=()) -> None:
        self.basic = np.array(basic, dtype=int)
        self.is_basic[:] = False
        self.is_basic[self.basic] = True
        self.at_upper[:] = False
        self.at_upper[list(at_upper)] = True
        self.at_upper &= ~self.is_basic
        self.at_upper &= np.isfinite(self.ub)
        # Variables with no finite lower bound sit at their upper bound if any.
        flip = ~self.is_basic & ~np.isfinite(self.lb) & np.isfinite(self.ub)
        self.at_upper |= flip
        self.pivots_since_refactor = 0

    def pivot(self, r: int, q: int, w: np.ndarray, leave_upper: bool) -> None:
        p = self.basic[r]
        self.is_basic[p] = False
        self.at_upper[p] = leave_upper and np.isfinite(self.ub[p])
        self.basic[r] = q
        self.is_basic[q] = True
        self.at_upper[q] = False
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= _REFACTOR_EVERY:
            self.pivots_since_refactor = 0
            if self.refactor():
                return
        piv = self.Binv[r] / w[r]
        self.Binv -= np.outer(w, piv)
        self.Binv[r] = piv

    # ---- primal simplex -------------------------------------------------
    def run_primal(self, max_iter: int) -> str:
        fixed = self.lb == self.ub
        streak = 0
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            _, xb = self.primal()
            pi = self.duals()
            d = self.reduced_costs(pi)
            free = ~self.is_basic & ~fixed
            lower_free = ~np.isfinite(self.lb) & ~np.isfinite(self.ub)
            inc = free & (~self.at_upper | lower_free) & (d < -self.tol_d)
            dec = free & (self.at_upper | lower_free) & (d > self.tol_d)
            cand = np.flatnonzero(inc | dec)
            if cand.size == 0:
                return OPTIMAL
            bland = streak >= _DEGENERATE_STREAK
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if inc[q] else -1.0
            w = self.Binv @ self.column(q)
            delta = direction * w
            lbB, ubB = self.lb[self.basic], self.ub[self.basic]
            ratios = np.full(self.m, np.inf)
            down = delta > _TOL_PIV
            up = delta < -_TOL_PIV
            ratios[down] = np.maximum(xb[down] - lbB[down], 0.0) / delta[down]
            ratios[up] = np.maximum(ubB[up] - xb[up], 0.0) / -delta[up]
            theta = ratios.min()
            flip = self.ub[q] - self.lb[q]
            self.iterations += 1
            if flip <= theta:
                if not np.isfinite(flip):
                    return UNBOUNDED
                self.at_upper[q] = not self.at_upper[q]
                streak = 0
                continue
            ties = np.flatnonzero(ratios <= theta + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basic[ties])])
            else:
                mag = np.abs(delta[ties])
                best = ties[mag >= mag.max() - 1e-12]
                r = int(best[np.argmin(self.basic[best])])
            streak = streak + 1 if theta <= 1e-12 else 0
            self.pivot(r, q, w, leave_upper=bool(up[r]))

    # ---- dual simplex ---------------------------------------------------
    def dual_feasible(self, d: np.ndarray) -> bool:
        nb = ~self.is_basic & (self.lb < self.ub)
        lower = nb & ~self.at_upper & np.isfinite(self.lb)
        upper = nb & self.at_upper
        freev = nb & ~np.isfinite(self.lb) & ~np.isfinite(self.ub)
        tol = 1e-7 * self.cscale
        return not (np.any(d[lower] < -tol) or np.any(d[upper] > tol) or np.any(np.abs(d[freev]) > tol))

    def run_dual(self, max_iter: int) -> str:
        fixed = self.lb == self.ub
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            _, xb = self.primal()
            lbB, ubB = self.lb[self.basic], self.ub[self.basic]
            below = lbB - xb
            above = xb - ubB
            infeas = np.maximum(below, above)
            if infeas.max(initial=0.0) <= TOL_FEAS:
                return OPTIMAL
            worst = infeas.max()
            rows = np.flatnonzero(infeas >= worst - 1e-12)
            r = int(rows[np.argmin(self.basic[rows])])
            to_lower = below[r] > above[r]
            alpha = self.row_alpha(r)
            d = self.reduced_costs(self.duals())
            nb = ~self.is_basic & ~fixed
            lower_free = ~np.isfinite(self.lb) & ~np.isfinite(self.ub)
            at_lo = nb & (~self.at_upper | lower_free)
            at_up = nb & (self.at_upper | lower_free)
            if to_lower:
                elig = (at_lo & (alpha < -_TOL_PIV)) | (at_up & (alpha > _TOL_PIV))
            else:
                elig = (at_lo & (alpha > _TOL_PIV)) | (at_up & (alpha < -_TOL_PIV))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return INFEASIBLE
            ratios = np.abs(d[cand]) / np.abs(alpha[cand])
            theta = ratios.min()
            ties = cand[ratios <= theta + 1e-12]
            mag = np.abs(alpha[ties])
            best = ties[mag >= mag.max() - 1e-12]
            q = int(best.min())
            w = self.Binv @ self.column(q)
            self.iterations += 1
            self.pivot(r, q, w, leave_upper=not to_lower)

    # ---- drivers --------------------------------------------------------
    def cold_start(self, max_iter: int) -> str:
        m, n = self.m, self.n
        # Phase 1: artificials carry any residual the slacks cannot absorb.
        self.ub[n + m:] = np.inf
        self.set_basis([], ())
        self.is_basic[:] = False
        xn = self.nonbasic_values()
        res = self.residual(xn)
        basic = []
        for i in range(m):
            slack_val = res[i] * self.slack_sign[i]
            if self.ub[n + i] > 0 and slack_val >= 0:
                basic.append(n + i)
            else:
                self.art_sign[i] = 1.0 if res[i] >= 0 else -1.0
                basic.append(n + m + i)
        at_up = np.flatnonzero(self.at_upper)
        self.set_basis(basic, at_up)
        self.Binv = np.diag([1.0 / self.column(j)[i] for i, j in enumerate(basic)])
        self.c = np.concatenate([np.zeros(n + m), np.ones(m)])
        self.tol_d = 1e-9
        status = self.run_primal(max_iter)
        if status != OPTIMAL:
            return status
        _, xb = self.primal()
        art_total = float(np.sum(xb[self.basic >= n + m]))
        if art_total > TOL_FEAS * max(1.0, float(np.abs(self.b).max(initial=0.0))):
            return INFEASIBLE
        self.ub[n + m:] = 0.0
        self.c = self.c_real
        self.tol_d = 1e-9 * self.cscale
        return self.run_primal(max_iter)

    def warm_start(self, basis: Basis, max_iter: int) -> str | None:
        if basis.n_struct != self.n or basis.n_rows != self.m or len(basis.basic) != self.m:
            return None
        self.set_basis(basis.basic, basis.at_upper)
        if not self.refactor():
            return None
        d = self.reduced_costs(self.duals())
        if self.dual_feasible(d):
            status = self.run_dual(max_iter)
            if status == OPTIMAL:
                status = self.run_primal(max_iter)
            return status
        _, xb = self.primal()
        lbB, ubB = self.lb[self.basic], self.ub[self.basic]
        if np.all(xb >= lbB - TOL_FEAS) and np.all(xb <= ubB + TOL_FEAS):
            return self.run_primal(max_iter)
        return None

    def solution(self, status: str) -> LpSolution:
        if status != OPTIMAL:
            return LpSolution(status, None, np.nan, None, None, None, self.iterations)
        xn, xb = self.primal()
        x = xn.copy()
        x[self.basic] = xb
        pi = self.duals()
        d = self.reduced_costs(pi)
        xs = x[:self.n]
        basis = Basis(tuple(int(j) for j in self.basic), tuple(int(j) for j in np.flatnonzero(self.at_upper)),
                      self.n, self.m)
        obj = float(self.model.cost @ xs) + self.model.objective_offset
        return LpSolution(OPTIMAL, xs, obj, pi, d[:self.n], basis, self.iterations)


def solve_lp(model: LinearModel, warm_start: Basis | None = None, max_iter: int | None = None) -> LpSolution:
    """Solve ``model`` to optimality; returns primal values, row duals and the final basis.

    The result is a deterministic function of the model (and warm-start basis):
    Dantzig pricing with lowest-index tie breaks, switching to Bland's rule after
    a run of degenerate pivots.
    """
    if max_iter is None:
        max_iter = 50 * (model.n_rows + model.n_vars) + 1000
    if model.n_rows == 0:
        return _solve_unconstrained(model)
    s = _Simplex(model)
    status = None
    if warm_start is not None:
        status = s.warm_start(warm_start, max_iter)
        if status is None or status == ITERATION_LIMIT:
            s = _Simplex(model)
            status = None
    if status is None:
        status = s.cold_start(max_iter)
    return s.solution(status)


def _solve_unconstrained(model: LinearModel) -> LpSolution:
    c = model.cost
    x = np.where(c >= 0, model.lb, model.ub)
    if not np.all(np.isfinite(x[c != 0])):
        return LpSolution(UNBOUNDED, None, np.nan, None, None, None, 0)
    x = np.where(np.isfinite(x), x, 0.0)
    return LpSolution(OPTIMAL, x, float(c @ x) + model.objective_offset, np.zeros(0), c.copy(), None, 0)


def dual_objective(model: LinearModel, sol: LpSolution) -> float:
    """b'pi plus bound terms from the reduced costs; equals the primal value at optimality."""
    d = sol.reduced_costs
    bound = np.where(d > 0, model.lb, np.where(d < 0, model.ub, 0.0))
    bound = np.where(np.isfinite(bound), bound, 0.0)
    return float(model.rhs @ sol.duals + d @ bound) + model.objective_offset


def check_optimality(model: LinearModel, sol: LpSolution, tol_feas: float = TOL_FEAS,
                     tol_gap: float = TOL_GAP, tol_cs: float = TOL_CS) -> list[str]:
    """Certificate check: primal feasibility, dual sign conditions, slackness, gap."""
    issues = list(model.violations(sol.x, tol_feas))
    pi, d, x = sol.duals, sol.reduced_costs, sol.x
    act = model.A @ x
    for r in range(model.n_rows):
        s = model.sense[r]
        if (s == GE and pi[r] < -tol_cs) or (s == LE and pi[r] > tol_cs):
            issues.append(f"dual sign wrong on row {model.row_names[r]}: {pi[r]}")
        if s != EQ and abs(pi[r]) > tol_cs and abs(act[r] - model.rhs[r]) > tol_cs:
            issues.append(f"slackness fails on row {model.row_names[r]}")
    for j in range(model.n_vars):
        at_lb = abs(x[j] - model.lb[j]) <= tol_cs
        at_ub = abs(x[j] - model.ub[j]) <= tol_cs
        if d[j] > tol_cs and not at_lb:
            issues.append(f"reduced cost {d[j]} > 0 but {model.var_names[j]} off its lower bound")
        if d[j] < -tol_cs and not at_ub:
            issues.append(f"reduced cost {d[j]} < 0 but {model.var_names[j]} off its upper bound")
    gap = abs(sol.objective - dual_objective(model, sol))
    if gap > tol_gap * max(1.0, abs(sol.objective)):
        issues.append(f"duality gap {gap}")
    return issues
