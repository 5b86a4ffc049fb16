"""Dense simplex solver with Bland's rule.

Small and deterministic: all LPs in this package (Chebyshev centers,
feasibility phase-1, redundancy tests) have a handful of rows, so a
textbook dense tableau is adequate and keeps the dependency surface flat.
"""
from __future__ import annotations

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpError(RuntimeError):
    pass


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    piv = T[row]
    colvals = T[:, col].copy()
    colvals[row] = 0.0
    T -= np.outer(colvals, piv)
    T[row] = piv
    basis[row] = col


def _bland_iterate(T: np.ndarray, basis: np.ndarray, ncols: int,
                   tol: float = 1e-10, max_iter: int = 20000) -> str:
    """Run simplex pivots on tableau T until optimal or unbounded.

    T layout: rows 0..m-1 are [B^-1 A | B^-1 b], last row is
    [reduced costs | -objective]. Bland's rule on both the entering
    column (smallest eligible index) and the ratio-test tie-break
    (smallest basis variable), which excludes cycling.
    """
    m = T.shape[0] - 1
    for _ in range(max_iter):
        red = T[-1, :ncols]
        negative = np.flatnonzero(red < -tol)
        if negative.size == 0:
            return OPTIMAL
        col = int(negative[0])
        colvals = T[:m, col]
        rows = np.flatnonzero(colvals > tol)
        if rows.size == 0:
            return UNBOUNDED
        ratios = T[rows, -1] / colvals[rows]
        best = ratios.min()
        cand = rows[ratios <= best + 1e-12]
        row = int(cand[np.argmin(basis[cand])])
        _pivot(T, basis, row, col)
    raise LpError("simplex did not converge (cycling guard tripped)")


def solve_standard(c: np.ndarray, A: np.ndarray, b: np.ndarray,
                   tol: float = 1e-10):
    """Solve min c'y s.t. Ay = b, y >= 0 by two-phase simplex.

    Returns (status, y, value, pi) where pi are the equality-row
    multipliers (dual solution) at optimality, indexed against the
    original rows of A (redundant rows get multiplier 0).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # phase 1: artificial basis
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n, n + m)
    status = _bland_iterate(T, basis, n + m, tol)
    if status != OPTIMAL or -T[-1, -1] > 1e-8:
        return INFEASIBLE, None, None, None

    # drive surviving artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= n:
            pivots = np.flatnonzero(np.abs(T[i, :n]) > tol)
            if pivots.size:
                _pivot(T, basis, i, int(pivots[0]))
    keep_rows = np.flatnonzero(basis < n)  # rows basic in an artificial are redundant
    mr = keep_rows.size
    basis = basis[keep_rows]

    # phase 2 objective row on the reduced tableau
    T2 = np.zeros((mr + 1, n + 1))
    T2[:mr, :n] = T[keep_rows, :n]
    T2[:mr, -1] = T[keep_rows, -1]
    T2[-1, :n] = c - c[basis] @ T2[:mr, :n]
    T2[-1, -1] = -c[basis] @ T2[:mr, -1]
    status = _bland_iterate(T2, basis, n, tol)
    if status == UNBOUNDED:
        return UNBOUNDED, None, None, None

    y = np.zeros(n)
    y[basis] = T2[:mr, -1]
    value = float(-T2[-1, -1])
    # multipliers: solve B_kept' pi_kept = c_B against retained rows,
    # then scatter back (sign-restoring the flipped rows)
    B = A[keep_rows][:, basis]
    pi_kept = np.linalg.solve(B.T, c[basis]) if mr else np.zeros(0)
    pi = np.zeros(m)
    pi[keep_rows] = pi_kept
    pi[flip] *= -1.0
    return OPTIMAL, y, value, pi


def max_linear(objective: np.ndarray, A_ub: np.ndarray, b_ub: np.ndarray,
               tol: float = 1e-10):
    """Maximize objective'x over {x : A_ub x <= b_ub} with x free.

    Solved through the standard-form dual (min b'y over A'y = objective,
    y >= 0); the primal optimizer is recovered from the dual equality
    multipliers. A dual that is INFEASIBLE means the primal maximum is
    unbounded; a dual that is UNBOUNDED means the primal is infeasible.
    Returns (status, x, value).
    """
    A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.asarray(b_ub, dtype=float)
    objective = np.asarray(objective, dtype=float)
    status, y, value, pi = solve_standard(b_ub, A_ub.T, objective, tol)
    if status == INFEASIBLE:
        return UNBOUNDED, None, None
    if status == UNBOUNDED:
        return INFEASIBLE, None, None
    return OPTIMAL, pi, float(value)


def feasible_point(A_ub: np.ndarray, b_ub: np.ndarray, tol: float = 1e-9):
    """Find x with A_ub x <= b_ub (x free), or report infeasibility.

    Minimizes the total constraint violation sum(s), s >= 0, over
    A_ub x - s <= b_ub; feasible iff the optimum is ~0. Free variables
    are split into positive and negative parts. Returns (feasible, x).
    """
    A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.asarray(b_ub, dtype=float)
    m, n = A_ub.shape
    if m == 0:
        return True, np.zeros(n)
    # columns: x+ (n), x- (n), violation s (m), slack t (m)
    A = np.hstack([A_ub, -A_ub, -np.eye(m), np.eye(m)])
    c = np.concatenate([np.zeros(2 * n), np.ones(m), np.zeros(m)])
    status, y, value, _ = solve_standard(c, A, b_ub)
    if status != OPTIMAL:
        raise LpError(f"phase-1 feasibility LP returned {status}")
    x = y[:n] - y[n:2 * n]
    return value <= tol, x
