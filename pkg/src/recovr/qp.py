"""Primal active-set solver for strictly convex quadratic programs.

Solves

    minimize    0.5 * x' A x - b' x
    subject to  G x >= h

for symmetric positive-definite ``A``, starting from a feasible point with
an empty working set.  Each iteration solves the equality-constrained
subproblem on the current working set through the KKT block system

    [ A   Gw' ] [ p  ]   [ b - A x ]
    [ Gw  0   ] [ nu ] = [ 0       ]

(the inequality multipliers are ``lambda = -nu``).  A zero step with all
multipliers nonnegative is optimal; otherwise the most negative multiplier
is dropped (lowest index on ties).  A nonzero step is cut at the nearest
blocking constraint (again lowest index on ties), which is then added.
Everything is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .errors import ConditioningError, ConvergenceError, InfeasibleError

__all__ = ["QpResult", "solve_qp"]

#: Feasibility slack allowed in the starting point and maintained thereafter.
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class QpResult:
    x: npt.NDArray[np.float64]
    iterations: int
    active: tuple[int, ...]
    #: max of relative stationarity residual, feasibility violation and
    #: complementarity residual at the returned point
    kkt_residual: float
    objective: float


def _refined_solve(
    M: npt.NDArray[np.float64], rhs: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    """Solve ``M sol = rhs`` with two passes of iterative refinement.

    The KKT systems here can reach cond ~ 1e14 (noise-free fits), where a
    plain solve leaves a residual far above the stationarity tolerance;
    refinement restores a near-machine backward error at trivial cost.
    """
    try:
        lu = scipy.linalg.lu_factor(M)
        sol = scipy.linalg.lu_solve(lu, rhs)
        for _ in range(2):
            sol = sol + scipy.linalg.lu_solve(lu, rhs - M @ sol)
    except (scipy.linalg.LinAlgError, ValueError):
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    if not np.all(np.isfinite(sol)):
        raise ConditioningError("KKT system produced non-finite step")
    return sol


def _kkt_solve(
    A: npt.NDArray[np.float64],
    Gw: npt.NDArray[np.float64],
    g: npt.NDArray[np.float64],
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    n = A.shape[0]
    k = Gw.shape[0]
    if k == 0:
        return _refined_solve(A, -g), np.empty(0)
    M = np.zeros((n + k, n + k))
    M[:n, :n] = A
    M[:n, n:] = Gw.T
    M[n:, :n] = Gw
    rhs = np.concatenate([-g, np.zeros(k)])
    sol = _refined_solve(M, rhs)
    return sol[:n], sol[n:]


def kkt_residual(
    A: npt.NDArray[np.float64],
    b: npt.NDArray[np.float64],
    G: npt.NDArray[np.float64],
    h: npt.NDArray[np.float64],
    x: npt.NDArray[np.float64],
    active: tuple[int, ...],
    lam_active: npt.NDArray[np.float64],
) -> float:
    """Scaled KKT residual of a candidate solution with given active set.

    Stationarity is measured against the magnitude of the terms entering the
    sum ``A x - b - G_Wᵀ λ`` (not the cancelled result), so the tolerance
    stays attainable when ``A`` is ill-conditioned and ``A x`` cancels
    heavily; this is the usual backward-error denominator.
    """
    g = A @ x - b
    terms = np.abs(A) @ np.abs(x)
    if len(active):
        g = g - G[list(active)].T @ lam_active
        terms = terms + np.abs(G[list(active)]).T @ np.abs(lam_active)
    scale = max(1.0, float(terms.max()) + float(np.abs(b).max()))
    stationarity = float(np.abs(g).max()) / scale
    slack = G @ x - h if G.size else np.zeros(0)
    feasibility = max(0.0, float(-slack.min())) if slack.size else 0.0
    if len(active):
        comp = float(np.abs(slack[list(active)] * lam_active).max()) / scale
        dual = max(0.0, float(-lam_active.min())) / scale
    else:
        comp = 0.0
        dual = 0.0
    return max(stationarity, feasibility, comp, dual)


def _polish(
    A: npt.NDArray[np.float64],
    b: npt.NDArray[np.float64],
    G: npt.NDArray[np.float64],
    h: npt.NDArray[np.float64],
    x: npt.NDArray[np.float64],
    work: list[int],
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Re-solve the EQP on the final working set for clean KKT residuals.

    The polished point is kept only if it stays feasible for the inactive
    constraints; otherwise the iterate (and its least-squares multipliers)
    stand.
    """
    n = x.size
    if not work:
        x_new = _refined_solve(A, b)
        return (x_new, np.empty(0)) if np.all(np.isfinite(x_new)) else \
            (x, np.empty(0))
    Gw = G[work]
    k = Gw.shape[0]
    M = np.zeros((n + k, n + k))
    M[:n, :n] = A
    M[:n, n:] = Gw.T
    M[n:, :n] = Gw
    rhs = np.concatenate([b, h[work]])
    try:
        sol = _refined_solve(M, rhs)
    except ConditioningError:
        lam, *_ = np.linalg.lstsq(Gw.T, A @ x - b, rcond=None)
        return x, lam
    x_new, lam_new = sol[:n], -sol[n:]
    slack = G @ x_new - h if G.size else np.zeros(0)
    if slack.size == 0 or float(slack.min()) >= -FEAS_TOL:
        return x_new, lam_new
    lam, *_ = np.linalg.lstsq(Gw.T, A @ x - b, rcond=None)
    return x, lam


def solve_qp(
    A: npt.NDArray[np.float64],
    b: npt.NDArray[np.float64],
    G: npt.NDArray[np.float64],
    h: npt.NDArray[np.float64],
    x0: npt.NDArray[np.float64],
    max_iter: int,
) -> QpResult:
    """Minimize ``0.5 x'Ax - b'x`` over ``Gx >= h`` from feasible ``x0``.

    Raises a convergence error when ``max_iter`` iterations do not reach
    optimality, and an infeasibility error if ``x0`` violates the
    constraints by more than the feasibility slack.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    G = np.asarray(G, dtype=float).reshape(-1, A.shape[0])
    h = np.asarray(h, dtype=float).ravel()
    x = np.asarray(x0, dtype=float).ravel().copy()
    n = x.size
    n_con = G.shape[0]

    if n_con and float((G @ x - h).min()) < -FEAS_TOL:
        worst = float((G @ x - h).min())
        raise InfeasibleError(f"starting point violates constraints by {-worst:.3e}")

    work: list[int] = []
    lam = np.empty(0)
    # True right after an unblocked (alpha = 1) step: x then sits at the
    # working set's equality-constrained optimum, so the next pass must go
    # straight to the multiplier test -- at high cond(A) the recomputed
    # step is pure fp noise and its predicted decrease may never round to
    # zero, which would otherwise loop full steps until the iteration cap.
    at_eqp_optimum = False
    for it in range(1, max_iter + 1):
        g = A @ x - b
        Gw = G[work] if work else np.zeros((0, n))
        p, nu = _kkt_solve(A, Gw, g)
        lam = -nu
        # A step is "zero" when its predicted objective decrease 0.5 p'Ap is
        # below the fp noise floor of the objective itself; an absolute test
        # on |p| would never fire for badly scaled A (noise-free fits have
        # ||A|| ~ 1e10, so gradient rounding alone produces |p| ~ 1e-6).
        pred_decrease = 0.5 * float(p @ (A @ p))
        obj_scale = abs(float(0.5 * x @ (A @ x))) + abs(float(b @ x)) + 1.0
        dual_tol = FEAS_TOL * max(1.0, float(np.abs(g).max(initial=0.0)))
        if at_eqp_optimum or pred_decrease <= 1e-12 * obj_scale:
            at_eqp_optimum = False
            if work:
                # the step solve's multipliers carry the fp noise of p;
                # refit them against the actual gradient instead
                lam, *_ = np.linalg.lstsq(Gw.T, g, rcond=None)
            if lam.size == 0 or float(lam.min()) >= -dual_tol:
                x, lam = _polish(A, b, G, h, x, work)
                active = tuple(work)
                res = kkt_residual(A, b, G, h, x, active, lam)
                obj = float(0.5 * x @ A @ x - b @ x)
                return QpResult(x=x, iterations=it, active=active,
                                kkt_residual=res, objective=obj)
            # drop the most negative multiplier; np.argmin takes the first
            # (lowest position == lowest constraint index since the working
            # set is kept sorted)
            drop = int(np.argmin(lam))
            work.pop(drop)
            continue
        # ratio test over non-working constraints that the step decreases
        alpha = 1.0
        block = -1
        if n_con:
            outside = [i for i in range(n_con) if i not in work]
            if outside:
                Go = G[outside]
                denom = Go @ p
                slack = Go @ x - h[outside]
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratios = np.where(denom < -1e-13, slack / -denom, np.inf)
                ratios = np.maximum(ratios, 0.0)  # clip fp noise on active rows
                j = int(np.argmin(ratios))  # first minimum -> lowest index
                if ratios[j] < alpha:
                    alpha = float(ratios[j])
                    block = outside[j]
        x = x + alpha * p
        if block >= 0:
            work.append(block)
            work.sort()
        else:
            at_eqp_optimum = True
    raise ConvergenceError(f"active-set QP did not converge in {max_iter} iterations")
