"""Revised primal simplex for standard-form LPs.

Solves ``min c @ x  s.t.  A @ x == b, x >= 0`` starting from a caller-supplied
feasible basis. ``A`` is kept sparse; the basis inverse is dense and updated by
elementary row operations, with periodic refactorization.

Pricing is Dantzig (most negative reduced cost). After a run of degenerate
pivots the solver switches to Bland's rule, which cannot cycle, and switches
back once the objective moves again. The ratio test is Harris's two-pass
variant: among rows within a small feasibility tolerance of the minimum ratio
it pivots on the largest entry, which keeps the basis well conditioned.
Basic values are not clipped between refactorizations; instead each update is
followed by one step of iterative refinement against ``b``, so small negative
values stay visible and the tracked point never drifts off the basis. At
apparent optimality the basis is refactorized and optimality rechecked.
"""
import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger

REFACTOR_EVERY = 256
DEGENERATE_STREAK = 30
PIVOT_TOL = 1e-7
FEAS_TOL = 1e-9
MAX_RECHECKS = 5
LOST_TOL = 1e-7


class SimplexError(RuntimeError):
    pass


class Unbounded(SimplexError):
    pass


def solve(c, A, b, basis, tol=1e-9, max_iter=None):
    """Return ``(x, objective, iterations)`` for the LP.

    ``basis`` lists one column per row of ``A`` such that the basic solution
    ``B^-1 b`` is nonnegative.
    """
    A = sp.csc_matrix(A, dtype=float)
    A.sort_indices()
    AT = A.T.tocsr()
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    basis = np.array(basis, dtype=np.int64)
    if basis.shape != (m,):
        raise SimplexError("basis must have one column per row")
    if max_iter is None:
        max_iter = 50 * (m + n)

    def refactor():
        B = A[:, basis].toarray()
        try:
            return np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SimplexError("singular basis") from exc

    Binv = np.asfortranarray(refactor())
    xB = Binv @ b
    if np.any(xB < -FEAS_TOL):
        raise SimplexError("starting basis is infeasible")

    bland = False
    streak = 0
    since_refactor = 0
    rechecks = 0
    is_basic = np.zeros(n, dtype=bool)
    is_basic[basis] = True

    for it in range(max_iter):
        cB = c[basis]
        nz = np.flatnonzero(cB)
        y = cB[nz] @ Binv[nz]
        d = c - AT @ y
        d[is_basic] = 0.0
        if bland:
            neg = np.flatnonzero(d < -tol)
            q = int(neg[0]) if neg.size else -1
        else:
            q = int(np.argmin(d))
            if d[q] >= -tol:
                q = -1
        if q < 0:
            if since_refactor == 0 or rechecks >= MAX_RECHECKS:
                break
            # confirm optimality on a fresh factorization
            rechecks += 1
            Binv, xB = _fresh(refactor, b)
            since_refactor = 0
            continue

        lo, hi = A.indptr[q], A.indptr[q + 1]
        u = Binv[:, A.indices[lo:hi]] @ A.data[lo:hi]
        pos = np.flatnonzero(u > PIVOT_TOL)
        if pos.size == 0:
            raise Unbounded("objective is unbounded below")
        up = u[pos]
        xp = np.maximum(xB[pos], 0.0)
        if bland:
            ratios = xp / up
            theta = ratios.min()
            tied = pos[ratios <= theta + FEAS_TOL * max(1.0, theta)]
            # lowest basic variable index among ties (Bland's leaving rule)
            r = int(tied[np.argmin(basis[tied])])
        else:
            bound = ((xp + FEAS_TOL) / up).min()
            cand = pos[xp / up <= bound]
            r = int(cand[np.argmax(u[cand])])
        theta = max(xB[r], 0.0) / u[r]

        if theta <= 1e-12:
            streak += 1
            if streak >= DEGENERATE_STREAK:
                bland = True
        else:
            streak = 0
            bland = False

        xB -= theta * u
        xB[r] = theta
        is_basic[basis[r]] = False
        basis[r] = q
        is_basic[q] = True

        pivot_row = Binv[r] / u[r]
        Binv = dger(-1.0, u, pivot_row, a=Binv, overwrite_a=True)
        Binv[r] = pivot_row

        since_refactor += 1
        if since_refactor >= REFACTOR_EVERY:
            Binv, xB = _fresh(refactor, b)
            since_refactor = 0
        else:
            # one step of iterative refinement keeps xB consistent with the basis
            xfull = np.zeros(n)
            xfull[basis] = xB
            xB += Binv @ (b - A @ xfull)
    else:
        raise SimplexError(f"no convergence after {max_iter} iterations")

    x = np.zeros(n)
    x[basis] = np.maximum(xB, 0.0)
    return x, float(c @ x), it


def _fresh(refactor, b):
    Binv = np.asfortranarray(refactor())
    xB = Binv @ b
    if np.any(xB < -LOST_TOL * max(1.0, np.abs(xB).max())):
        raise SimplexError("basis lost primal feasibility")
    return Binv, xB
