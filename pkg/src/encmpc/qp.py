"""Primal active-set solver for strictly convex QPs.

Solves min 1/2 z'Hz + g'z s.t. Gz <= w directly for a given right-hand
side. This is the implicit controller: the explicit PWA law must agree
with it pointwise, and tests lean on that as an independent route to the
same optimizer (the two share no code beyond the problem data).
"""
from __future__ import annotations

import numpy as np

from . import lp
from .config import DEFAULT_TOL, Tolerances


class QpInfeasible(RuntimeError):
    pass


class QpNoConvergence(RuntimeError):
    pass


def solve_qp(H: np.ndarray, g: np.ndarray, G: np.ndarray, w: np.ndarray,
             tol: Tolerances = DEFAULT_TOL, max_iter: int = 500):
    """Return (z, lam, active) for the inequality-constrained QP.

    Starts from a phase-1 feasible point with an empty working set; each
    added blocking row is automatically independent of the current ones
    (its inner product with the step is nonzero while working rows are
    orthogonal to it), so the KKT systems stay nonsingular. Smallest
    index breaks ties both when adding and when dropping rows.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    g = np.asarray(g, dtype=float).reshape(-1)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    w = np.asarray(w, dtype=float).reshape(-1)
    nz = H.shape[0]
    q = G.shape[0]

    feasible, z = lp.feasible_point(G, w, tol=tol.feasibility)
    if not feasible:
        raise QpInfeasible("constraint set is empty for this parameter")

    work: list = []
    for _ in range(max_iter):
        k = len(work)
        grad = H @ z + g
        if k:
            GW = G[work]
            KKT = np.block([[H, GW.T], [GW, np.zeros((k, k))]])
            rhs = np.concatenate([-grad, np.zeros(k)])
            sol = np.linalg.solve(KKT, rhs)
            d = sol[:nz]
            lam_w = sol[nz:]
        else:
            d = np.linalg.solve(H, -grad)
            lam_w = np.zeros(0)

        if np.linalg.norm(d) <= 1e-11:
            neg = [i for i, lv in enumerate(lam_w) if lv < -tol.dual_feas]
            if not neg:
                lam = np.zeros(q)
                for i, row in enumerate(work):
                    lam[row] = max(lam_w[i], 0.0)
                return z, lam, tuple(sorted(work))
            drop = min(neg, key=lambda i: work[i])
            work.pop(drop)
            continue

        # ratio test over rows outside the working set
        alpha = 1.0
        blocker = -1
        for i in range(q):
            if i in work:
                continue
            gd = G[i] @ d
            if gd <= 1e-12:
                continue
            ratio = max((w[i] - G[i] @ z) / gd, 0.0)
            if ratio < alpha - 1e-12:
                alpha = ratio
                blocker = i
            elif blocker >= 0 and abs(ratio - alpha) <= 1e-12 and i < blocker:
                blocker = i
        z = z + alpha * d
        if blocker >= 0:
            work.append(blocker)
    raise QpNoConvergence("active-set iteration limit reached")


def solve_qp_oracle(qp, x, tol: Tolerances = DEFAULT_TOL):
    """(z_star, active_set, multipliers) for the condensed QP at x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    z, lam, active = solve_qp(qp.H, qp.F @ x, qp.G, qp.h + qp.E @ x, tol=tol)
    return z, active, lam


def implicit_control(qp, x, tol: Tolerances = DEFAULT_TOL):
    """First input of the optimal horizon at parameter x.

    Returns (u0, z, active). qp is a CondensedQp; raising QpInfeasible
    marks x outside the feasible set.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    z, lam, active = solve_qp(qp.H, qp.F @ x, qp.G, qp.h + qp.E @ x, tol=tol)
    return z[:qp.m], z, active


def kkt_residuals(qp, x, z, lam):
    """Stationarity and complementarity residuals at (z, lam) for x.

    Used by tests to certify a claimed optimizer: stationarity
    ||Hz + Fx + G'lam||_inf, worst primal violation, worst negative
    multiplier, and worst complementarity product.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    slack = qp.h + qp.E @ x - qp.G @ z
    stat = np.linalg.norm(qp.H @ z + qp.F @ x + qp.G.T @ lam, ord=np.inf)
    primal = float(max(0.0, -slack.min())) if slack.size else 0.0
    dual = float(max(0.0, -lam.min())) if lam.size else 0.0
    comp = float(np.abs(lam * slack).max()) if slack.size else 0.0
    return {"stationarity": float(stat), "primal": primal,
            "dual": dual, "complementarity": comp}
