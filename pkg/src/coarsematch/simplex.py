"""Dense revised simplex for maximization over two-nonzero column LPs.

Solves  max  obj @ x   s.t.  A x <= rhs,  x >= 0,  rhs >= 0,
where every structural column j has at most two nonzeros, at
(row_a[j], coef_a[j]) and (row_b[j], coef_b[j]). This covers dispatch LPs:
one capacity row per matched node (coefficient = success probability) and
one rate row per donor type (coefficient = 1).

The all-slack basis is feasible because rhs >= 0, so no phase-1 is needed.
The basis inverse is kept explicitly and updated in product form, with
periodic refactorization for numerical hygiene. Pricing is Dantzig
(most-positive reduced cost, lowest index on ties); after a long run of
degenerate pivots the entering rule switches to Bland's until the objective
moves again, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverLimitError

FEAS_TOL = 1e-9  # reduced-cost / ratio-test tolerance
REFACTOR_EVERY = 200
STALL_LIMIT = 120  # degenerate pivots tolerated before switching to Bland


@dataclass
class SimplexResult:
    x: np.ndarray  # structural variable values
    objective: float
    duals: np.ndarray  # one multiplier per row, nonnegative at optimum
    iterations: int


def solve_two_nonzero_lp(
    obj: np.ndarray,
    row_a: np.ndarray,
    coef_a: np.ndarray,
    row_b: np.ndarray,
    coef_b: np.ndarray,
    n_rows: int,
    rhs: np.ndarray,
    *,
    max_iter: int | None = None,
) -> SimplexResult:
    obj = np.asarray(obj, dtype=np.float64)
    row_a = np.asarray(row_a, dtype=np.int64)
    coef_a = np.asarray(coef_a, dtype=np.float64)
    row_b = np.asarray(row_b, dtype=np.int64)
    coef_b = np.asarray(coef_b, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = obj.size
    m = n_rows
    if np.any(rhs < 0):
        raise ValueError("rhs must be nonnegative")
    if max_iter is None:
        max_iter = 50 * m + 20_000

    # basis bookkeeping: variable ids 0..n-1 structural, n..n+m-1 slack for row i
    basis = np.arange(n, n + m, dtype=np.int64)
    in_basis = np.zeros(n + m, dtype=bool)
    in_basis[basis] = True
    binv = np.eye(m)
    xb = rhs.copy()

    def column(j: int) -> np.ndarray:
        col = np.zeros(m)
        if j >= n:
            col[j - n] = 1.0
        else:
            col[row_a[j]] += coef_a[j]
            col[row_b[j]] += coef_b[j]
        return col

    def refactor() -> None:
        nonlocal binv, xb
        B = np.zeros((m, m))
        for pos, j in enumerate(basis):
            B[:, pos] = column(int(j))
        binv = np.linalg.solve(B, np.eye(m))
        xb = binv @ rhs

    last_objective = 0.0
    stall = 0
    use_bland = False
    iterations = 0

    while True:
        if iterations >= max_iter:
            cb = obj_of(obj, basis, n)
            primal = float(cb @ xb)
            y = cb @ binv
            dual = float(y @ rhs)
            raise SolverLimitError(
                f"simplex iteration limit {max_iter} exceeded",
                best_objective=primal,
                gap=abs(dual - primal),
            )

        cb = obj_of(obj, basis, n)
        y = cb @ binv

        # structural reduced costs under the two-nonzero column structure
        rc = obj - coef_a * y[row_a] - coef_b * y[row_b]
        rc[in_basis[:n]] = -np.inf
        rc_slack = -y
        rc_slack[in_basis[n:]] = -np.inf

        if use_bland:
            ent = -1
            cand = np.flatnonzero(rc > FEAS_TOL)
            cand_s = np.flatnonzero(rc_slack > FEAS_TOL)
            if cand.size:
                ent = int(cand[0])
            if cand_s.size and (ent < 0 or n + int(cand_s[0]) < ent):
                ent = n + int(cand_s[0])
        else:
            best_j = int(np.argmax(rc)) if n else -1
            best_s = int(np.argmax(rc_slack))
            ent = -1
            best_val = FEAS_TOL
            if n and rc[best_j] > best_val:
                ent, best_val = best_j, rc[best_j]
            if rc_slack[best_s] > best_val:
                ent = n + best_s
        if ent < 0:
            break  # optimal

        d = binv @ column(ent)
        pos = d > FEAS_TOL
        if not np.any(pos):
            # cannot happen for these LPs (feasible set is bounded); guard anyway
            raise SolverLimitError("unbounded direction", best_objective=float(cb @ xb), gap=np.inf)
        ratios = np.full(m, np.inf)
        ratios[pos] = xb[pos] / d[pos]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + FEAS_TOL)
        leave_pos = int(ties[np.argmin(basis[ties])])  # smallest basic id on ties

        # pivot: product-form update of the explicit inverse
        piv = d[leave_pos]
        binv[leave_pos] /= piv
        others = np.arange(m) != leave_pos
        binv[others] -= np.outer(d[others], binv[leave_pos])
        xb = xb - theta * d
        xb[leave_pos] = theta
        np.maximum(xb, 0.0, out=xb)

        in_basis[basis[leave_pos]] = False
        in_basis[ent] = True
        basis[leave_pos] = ent
        iterations += 1

        if iterations % REFACTOR_EVERY == 0:
            refactor()

        current = float(obj_of(obj, basis, n) @ xb)
        if current > last_objective + FEAS_TOL:
            last_objective = current
            stall = 0
            use_bland = False
        else:
            stall += 1
            if stall >= STALL_LIMIT:
                use_bland = True

    refactor()  # clean xb and duals at the claimed optimum
    cb = obj_of(obj, basis, n)
    y = cb @ binv
    x = np.zeros(n)
    struct = basis < n
    x[basis[struct]] = np.maximum(xb[struct], 0.0)
    return SimplexResult(
        x=x,
        objective=float(obj @ x),
        duals=np.maximum(y, 0.0),
        iterations=iterations,
    )


def obj_of(obj: np.ndarray, basis: np.ndarray, n: int) -> np.ndarray:
    """Objective coefficients of the basic variables (slacks contribute 0)."""
    cb = np.zeros(basis.size)
    struct = basis < n
    cb[struct] = obj[basis[struct]]
    return cb
