"""Dense two-phase simplex with Bland's anti-cycling rule and certificates.

Solves desk-scale linear programs in standard form (equality constraints,
nonnegative variables; inequality rows are converted via slacks).  Every
terminal status carries a checkable certificate:

* ``optimal``    -> primal solution and row duals,
* ``infeasible`` -> a Farkas vector y with  y'A <= 0  and  y'b > 0,
* ``unbounded``  -> a ray d >= 0 with  A d = 0  and improving objective.

Sizes are bounded by the dense tableau (a few thousand variables); this is
deliberate — certificate transparency over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LPProblem", "LPSolution", "LPError", "solve_lp"]

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8


class LPError(Exception):
    pass


@dataclass(frozen=True)
class LPProblem:
    """min (or max) c'x subject to a_eq x = b_eq, a_ub x <= b_ub, x >= 0."""

    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "c", np.atleast_1d(np.asarray(self.c, dtype=float)))
        for name in ("a_eq", "a_ub"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.atleast_2d(np.asarray(v, dtype=float)))
        for name in ("b_eq", "b_ub"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.atleast_1d(np.asarray(v, dtype=float)))
        n = self.c.size
        if (self.a_eq is None) != (self.b_eq is None) or (self.a_ub is None) != (
            self.b_ub is None
        ):
            raise LPError("constraint matrix and rhs must be given together")
        if self.a_eq is not None:
            if self.a_eq.shape[1] != n:
                raise LPError("a_eq shape does not match objective length")
            if self.b_eq.size != self.a_eq.shape[0]:
                raise LPError("b_eq length does not match a_eq rows")
        if self.a_ub is not None:
            if self.a_ub.shape[1] != n:
                raise LPError("a_ub shape does not match objective length")
            if self.b_ub.size != self.a_ub.shape[0]:
                raise LPError("b_ub length does not match a_ub rows")
        for name in ("c", "a_eq", "b_eq", "a_ub", "b_ub"):
            v = getattr(self, name)
            if v is not None and not np.all(np.isfinite(v)):
                raise LPError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class LPSolution:
    """Terminal state of a solve.

    ``duals`` multiply the rows in their posed order (equalities first,
    then inequalities); at an optimum they satisfy duals . b = objective,
    for minimize and maximize alike.
    """

    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    farkas: np.ndarray | None = None
    ray: np.ndarray | None = None
    iterations: int = 0
    residual: float = 0.0


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    for i in range(tableau.shape[0]):
        if i != row and tableau[i, col] != 0.0:
            tableau[i] -= tableau[i, col] * tableau[row]
    basis[row] = col


def _run_simplex(tableau, basis, costs, allowed, max_iter):
    """Bland-rule primal simplex on [B^-1 A | B^-1 b].

    Returns (status, iterations, entering_col); entering_col is set only
    for status 'unbounded'.
    """
    n = tableau.shape[1] - 1
    for it in range(max_iter):
        reduced = costs - costs[basis] @ tableau[:, :n]
        reduced[~allowed] = 0.0
        candidates = np.nonzero(reduced < -PIVOT_TOL)[0]
        if candidates.size == 0:
            return "optimal", it, -1
        j = int(candidates[0])  # Bland: smallest index enters
        col = tableau[:, j]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded", it, j
        ratios = tableau[rows, n] / col[rows]
        best = float(np.min(ratios))
        ties = rows[ratios <= best + PIVOT_TOL * (1.0 + abs(best))]
        r = int(ties[np.argmin(basis[ties])])  # Bland: smallest basis index leaves
        _pivot(tableau, basis, r, j)
    raise LPError(f"simplex did not terminate in {max_iter} iterations")


def solve_lp(problem: LPProblem, max_iter: int = 20000) -> LPSolution:
    """Solve an LP, returning a solution with a checkable certificate."""
    n0 = problem.c.size
    blocks, rhs = [], []
    if problem.a_eq is not None:
        blocks.append(problem.a_eq)
        rhs.append(problem.b_eq)
    n_ub = 0 if problem.a_ub is None else problem.a_ub.shape[0]
    if n_ub:
        blocks.append(problem.a_ub)
        rhs.append(problem.b_ub)
    if not blocks:
        raise LPError("problem has no constraints")
    a_posed = np.vstack(blocks)
    b_posed = np.concatenate(rhs)
    m = a_posed.shape[0]

    # Standard form: slack columns for the inequality rows.
    n = n0 + n_ub
    full = np.zeros((m, n))
    full[:, :n0] = a_posed
    if n_ub:
        full[m - n_ub :, n0:] = np.eye(n_ub)
    costs = np.zeros(n)
    costs[:n0] = -problem.c if problem.maximize else problem.c

    # Normalize to b >= 0; row flips are tracked to map duals back.
    b = b_posed.copy()
    flip = b < 0
    full[flip] *= -1.0
    b[flip] *= -1.0
    sign = np.where(flip, -1.0, 1.0)

    # ---- Phase 1: artificial start ----
    tableau = np.zeros((m, n + m + 1))
    tableau[:, :n] = full
    tableau[:, n : n + m] = np.eye(m)
    tableau[:, -1] = b
    basis = np.arange(n, n + m)
    costs1 = np.concatenate([np.zeros(n), np.ones(m)])
    status, it1, _ = _run_simplex(
        tableau, basis, costs1, np.ones(n + m, dtype=bool), max_iter
    )
    if status != "optimal":  # pragma: no cover - phase 1 is always bounded
        raise LPError("phase 1 terminated abnormally")
    scale_b = 1.0 + float(np.max(np.abs(b), initial=0.0))
    phase1_obj = float(costs1[basis] @ tableau[:, -1])
    if phase1_obj > FEAS_TOL * scale_b:
        # Farkas certificate from the phase-1 duals.
        bmat = np.zeros((m, m))
        eye = np.eye(m)
        for i, col in enumerate(basis):
            bmat[:, i] = full[:, col] if col < n else eye[:, col - n]
        y = sign * np.linalg.solve(bmat.T, costs1[basis])
        scale_a = 1.0 + float(np.max(np.abs(a_posed)))
        viol = float(np.max(y @ a_posed, initial=0.0))
        if n_ub:  # slack columns require y <= 0 on inequality rows
            viol = max(viol, float(np.max(y[m - n_ub :], initial=0.0)))
        gain = float(y @ b_posed)
        if gain <= 0.0 or viol > FEAS_TOL * scale_a:
            raise LPError("failed to certify infeasibility")
        return LPSolution(status="infeasible", farkas=y, iterations=it1)

    # Drive leftover artificials out of the basis; rows where that is
    # impossible are redundant and dropped.
    keep = np.ones(m, dtype=bool)
    in_basis = set(basis.tolist())
    for r in range(m):
        if basis[r] >= n:
            eligible = [
                j
                for j in np.nonzero(np.abs(tableau[r, :n]) > PIVOT_TOL)[0]
                if j not in in_basis
            ]
            if eligible:
                in_basis.discard(int(basis[r]))
                _pivot(tableau, basis, r, int(eligible[0]))
                in_basis.add(int(basis[r]))
            else:
                keep[r] = False
    row_index = np.nonzero(keep)[0]
    tableau = np.concatenate([tableau[keep, :n], tableau[keep, -1:]], axis=1)
    basis = basis[keep]

    # ---- Phase 2 ----
    status, it2, j_enter = _run_simplex(
        tableau, basis, costs, np.ones(n, dtype=bool), max_iter
    )
    iterations = it1 + it2

    if status == "unbounded":
        d = np.zeros(n)
        d[j_enter] = 1.0
        d[basis] = -tableau[:, j_enter]
        d[np.abs(d) < PIVOT_TOL] = 0.0
        if float(np.min(d)) < -FEAS_TOL or float(costs @ d) >= 0.0:
            raise LPError("failed to certify unboundedness")
        ray = d[:n0]
        return LPSolution(status="unbounded", ray=ray, iterations=iterations)

    # Recompute the basic solution and duals directly from the basis so
    # tableau drift does not accumulate into the output.
    x_full = np.zeros(n)
    y = np.zeros(m)
    if basis.size:
        bmat = full[row_index][:, basis]
        x_full[basis] = np.linalg.solve(bmat, b[row_index])
        y[row_index] = np.linalg.solve(bmat.T, costs[basis])
    tiny = (x_full < 0.0) & (x_full > -FEAS_TOL)
    x_full[tiny] = 0.0
    y = sign * y

    x = x_full[:n0]
    residual = 0.0
    if problem.a_eq is not None:
        residual = float(np.max(np.abs(problem.a_eq @ x - problem.b_eq), initial=0.0))
    if n_ub:
        residual = max(
            residual, float(np.max(problem.a_ub @ x - problem.b_ub, initial=0.0))
        )
    if residual > FEAS_TOL * scale_b or float(np.min(x_full, initial=0.0)) < -FEAS_TOL:
        raise LPError(f"optimal basis fails feasibility check (residual {residual:.3g})")

    objective = float(problem.c @ x)
    if problem.maximize:
        y = -y
    return LPSolution(
        status="optimal",
        x=x,
        objective=objective,
        duals=y,
        iterations=iterations,
        residual=residual,
    )
