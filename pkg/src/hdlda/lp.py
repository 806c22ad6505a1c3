"""Dense two-phase primal simplex and the l1-minimization front end.

The solver is deliberately deterministic: Dantzig pricing with
lowest-index tie breaks, switching to Bland's rule after a run of
degenerate pivots, so identical inputs produce identical pivot sequences
and bit-identical solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_OPT_TOL = 1e-9
_FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-9
_DEGEN_TOL = 1e-9


@dataclass(frozen=True)
class StandardLp:
    """min c'z subject to a_ub z <= b_ub and z >= 0."""

    c: np.ndarray  # (q,)
    a_ub: np.ndarray  # (m, q)
    b_ub: np.ndarray  # (m,)


@dataclass(frozen=True)
class LpSolution:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    z: np.ndarray | None
    objective: float | None
    iterations: int


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    column = tableau[:, col].copy()
    column[row] = 0.0
    tableau -= np.outer(column, tableau[row])
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0


def _iterate(
    tableau: np.ndarray,
    basis: np.ndarray,
    enterable: np.ndarray,
    iterations: int,
    max_iters: int,
    bland_trigger: int,
) -> tuple[str, int]:
    """Run simplex pivots in place until optimal, unbounded, or the limit."""
    m = tableau.shape[0] - 1
    degenerate_run = 0
    bland = False
    while True:
        cost = tableau[-1, :-1]
        if bland:
            negative = np.flatnonzero(enterable & (cost < -_OPT_TOL))
            if negative.size == 0:
                return "optimal", iterations
            col = int(negative[0])
        else:
            masked = np.where(enterable, cost, np.inf)
            col = int(np.argmin(masked))
            if masked[col] >= -_OPT_TOL:
                return "optimal", iterations
        if iterations >= max_iters:
            return "iteration_limit", iterations
        direction = tableau[:m, col]
        positive = direction > _PIVOT_TOL
        if not positive.any():
            return "unbounded", iterations
        rows = np.flatnonzero(positive)
        ratios = tableau[rows, -1] / direction[rows]
        best = float(ratios.min())
        if bland:
            near = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
            row = int(near[np.argmin(basis[near])])
        else:
            row = int(rows[int(np.argmin(ratios))])
        _pivot(tableau, row, col)
        basis[row] = col
        iterations += 1
        if best <= _DEGEN_TOL:
            degenerate_run += 1
            if degenerate_run >= bland_trigger:
                bland = True
        else:
            degenerate_run = 0


def solve_standard(problem: StandardLp, max_iters: int | None = None) -> LpSolution:
    """Two-phase primal simplex on a dense tableau.

    Phase I adds artificial variables only on rows whose slack basis is
    infeasible (negative right-hand side) and minimizes their sum; phase II
    minimizes the true objective with artificial columns barred from
    entering. The iteration budget spans both phases.
    """
    a = np.asarray(problem.a_ub, dtype=np.float64)
    b = np.asarray(problem.b_ub, dtype=np.float64)
    c = np.asarray(problem.c, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("a_ub must be a matrix")
    m, q = a.shape
    if b.shape != (m,) or c.shape != (q,):
        raise ValueError("c, a_ub, b_ub dimensions are inconsistent")
    if max_iters is None:
        max_iters = 50 * (m + q)
    bland_trigger = 2 * (m + q)

    negative_rows = np.flatnonzero(b < 0)
    n_art = negative_rows.size
    ncols = q + m + n_art + 1
    tableau = np.zeros((m + 1, ncols))
    tableau[:m, :q] = a
    tableau[:m, q:q + m] = np.eye(m)
    tableau[:m, -1] = b
    basis = np.arange(q, q + m)
    for idx, i in enumerate(negative_rows):
        tableau[i, :] *= -1.0
        tableau[i, q + m + idx] = 1.0
        basis[i] = q + m + idx

    enterable = np.ones(ncols - 1, dtype=bool)
    enterable[q + m:] = False
    iterations = 0

    if n_art:
        # phase I reduced costs: minimize the artificial sum
        tableau[-1, :] = 0.0
        tableau[-1, q + m:q + m + n_art] = 1.0
        for i in negative_rows:
            tableau[-1, :] -= tableau[i, :]
        status, iterations = _iterate(
            tableau, basis, enterable, iterations, max_iters, bland_trigger
        )
        if status == "iteration_limit":
            return LpSolution("iteration_limit", None, None, iterations)
        if -tableau[-1, -1] > _FEAS_TOL:
            return LpSolution("infeasible", None, None, iterations)
        # drive any artificial still basic (at zero level) out of the basis
        for i in np.flatnonzero(basis >= q + m):
            candidates = np.flatnonzero(
                enterable & (np.abs(tableau[i, :-1]) > _PIVOT_TOL)
            )
            if candidates.size:
                _pivot(tableau, int(i), int(candidates[0]))
                basis[i] = int(candidates[0])
                iterations += 1
            # otherwise the row is redundant; the artificial stays basic at 0

    # phase II reduced costs for the true objective
    tableau[-1, :] = 0.0
    tableau[-1, :q] = c
    for i in range(m):
        if basis[i] < q and c[basis[i]] != 0.0:
            tableau[-1, :] -= c[basis[i]] * tableau[i, :]
    status, iterations = _iterate(
        tableau, basis, enterable, iterations, max_iters, bland_trigger
    )
    if status != "optimal":
        return LpSolution(status, None, None, iterations)

    z = np.zeros(q)
    for i in range(m):
        if basis[i] < q:
            z[basis[i]] = max(0.0, tableau[i, -1])
    return LpSolution("optimal", z, float(c @ z), iterations)


def solve_l1_linf(
    a: np.ndarray, d: np.ndarray, lam: float, max_iters: int | None = None
) -> tuple[str, np.ndarray | None]:
    """min ||beta||_1 subject to ||a beta - d||_inf <= lam.

    Standard positive split beta = u - v turns the problem into a
    standard-form LP with 2p variables and 2m inequality rows. Returns
    (status, beta) with beta None unless status is "optimal".
    """
    a = np.asarray(a, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if a.ndim != 2 or d.shape != (a.shape[0],):
        raise ValueError("a must be (m, p) with d of length m")
    p = a.shape[1]
    a_ub = np.block([[a, -a], [-a, a]])
    b_ub = np.concatenate([d + lam, lam - d])
    c = np.ones(2 * p)
    solution = solve_standard(StandardLp(c=c, a_ub=a_ub, b_ub=b_ub), max_iters)
    if solution.status != "optimal":
        return solution.status, None
    return "optimal", solution.z[:p] - solution.z[p:]
