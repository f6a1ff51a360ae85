"""Dense two-phase primal simplex for small linear programs.

Minimizes ``c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``
and ``x >= 0``. Entering variable is chosen by the most negative reduced
cost with lowest-index tie-breaking; after 500 degenerate pivots without
strict improvement the rule switches to Bland's (lowest eligible index)
to guarantee termination. All comparisons use a 1e-9 tolerance and the
algorithm is fully deterministic for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import Infeasible, NonConvergence, Unbounded

TOL = 1e-9
DEGENERATE_PIVOT_LIMIT = 500
MAX_ITERATIONS = 200_000


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    iterations: int


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int):
    tableau[row] /= tableau[row, col]
    pivot_row = tableau[row]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, pivot_row)
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0
    basis[row] = col


def _choose_leaving(tableau: np.ndarray, basis: np.ndarray,
                    col: int, n_rows: int) -> int:
    """Min-ratio row; ties broken by the lowest basic-variable index."""
    column = tableau[:n_rows, col]
    positive = column > TOL
    if not positive.any():
        return -1
    ratios = np.full(n_rows, np.inf)
    ratios[positive] = tableau[:n_rows, -1][positive] / column[positive]
    best = ratios.min()
    tied = np.where(ratios <= best + TOL)[0]
    return int(tied[np.argmin(basis[tied])])


def _optimize(tableau: np.ndarray, basis: np.ndarray, n_rows: int,
              enterable: np.ndarray, iterations: int) -> int:
    """Run pivots until the cost row has no negative reduced cost."""
    degenerate = 0
    bland = False
    cost = tableau[n_rows]
    while True:
        if iterations >= MAX_ITERATIONS:
            raise NonConvergence("simplex iteration limit reached")
        eligible = np.where(enterable & (cost[:-1] < -TOL))[0]
        if eligible.size == 0:
            return iterations
        if bland:
            col = int(eligible[0])
        else:
            reduced = cost[eligible]
            col = int(eligible[int(np.argmin(reduced))])
        row = _choose_leaving(tableau, basis, col, n_rows)
        if row < 0:
            raise Unbounded("objective is unbounded below")
        if tableau[row, -1] <= TOL:
            degenerate += 1
            if degenerate > DEGENERATE_PIVOT_LIMIT:
                bland = True
        else:
            degenerate = 0
        _pivot(tableau, basis, row, col)
        iterations += 1


def solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    blocks = []
    rhs_parts = []
    n_ub = 0
    if A_ub is not None and len(A_ub):
        A_ub = np.asarray(A_ub, dtype=float).reshape(-1, n)
        b_ub = np.asarray(b_ub, dtype=float).ravel()
        n_ub = A_ub.shape[0]
        blocks.append(A_ub)
        rhs_parts.append(b_ub)
    if A_eq is not None and len(A_eq):
        A_eq = np.asarray(A_eq, dtype=float).reshape(-1, n)
        b_eq = np.asarray(b_eq, dtype=float).ravel()
        blocks.append(A_eq)
        rhs_parts.append(b_eq)
    if not blocks:
        if np.any(c < -TOL):
            raise Unbounded("objective is unbounded below")
        return SimplexResult(np.zeros(n), 0.0, 0)

    A = np.vstack(blocks)
    b = np.concatenate(rhs_parts)
    m = A.shape[0]

    # Slack columns for the inequality rows.
    slack = np.zeros((m, n_ub))
    for i in range(n_ub):
        slack[i, i] = 1.0
    A = np.hstack([A, slack])

    # Flip rows so every right-hand side is nonnegative.
    negative = b < 0
    A[negative] *= -1.0
    b = np.where(negative, -b, b)

    # Rows whose slack still forms an identity column start basic;
    # the rest receive an artificial variable.
    needs_artificial = [i for i in range(m)
                        if i >= n_ub or negative[i]]
    n_art = len(needs_artificial)
    art = np.zeros((m, n_art))
    art_start = A.shape[1]
    basis = np.zeros(m, dtype=int)
    for j, i in enumerate(needs_artificial):
        art[i, j] = 1.0
        basis[i] = art_start + j
    for i in range(m):
        if i not in needs_artificial:
            basis[i] = n + i  # its own slack column
    A = np.hstack([A, art])
    total = A.shape[1]

    tableau = np.zeros((m + 1, total + 1))
    tableau[:m, :total] = A
    tableau[:m, -1] = b

    iterations = 0
    if n_art:
        # Phase 1: minimize the sum of artificials.
        phase1 = np.zeros(total + 1)
        phase1[art_start:total] = 1.0
        tableau[m] = phase1
        for i in range(m):
            if basis[i] >= art_start:
                tableau[m] -= tableau[i]
        enterable = np.ones(total, dtype=bool)
        iterations = _optimize(tableau, basis, m, enterable, iterations)
        if -tableau[m, -1] > 1e-7:
            raise Infeasible("constraints admit no feasible point")
        # Drive surviving artificials out of the basis where possible.
        for i in range(m):
            if basis[i] >= art_start:
                pivots = np.where(np.abs(tableau[i, :art_start]) > TOL)[0]
                if pivots.size:
                    _pivot(tableau, basis, i, int(pivots[0]))
                    iterations += 1

    # Phase 2: original objective, artificial columns barred.
    cost = np.zeros(total + 1)
    cost[:n] = c
    tableau[m] = cost
    for i in range(m):
        coeff = cost[basis[i]]
        if coeff != 0.0:
            tableau[m] -= coeff * tableau[i]
    enterable = np.zeros(total, dtype=bool)
    enterable[:art_start] = True
    iterations = _optimize(tableau, basis, m, enterable, iterations)

    x_full = np.zeros(total)
    x_full[basis] = tableau[:m, -1]
    x = np.where(np.abs(x_full[:n]) < TOL, 0.0, x_full[:n])
    return SimplexResult(x, float(c @ x), iterations)
