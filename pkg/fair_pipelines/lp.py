"""Small dense linear programs.

The exact solver is a two-phase tableau simplex over Fractions using Bland's rule, so it
terminates on degenerate problems and returns rational optima. The float solver hands the same
problem to scipy's HiGHS backend for instances too large for rational pivoting.

Problems are stated as::

    optimize   c . x
    subject to A_ub x <= b_ub,  A_eq x == b_eq,  x_j >= 0 unless j is free
"""

import logging
from collections import namedtuple
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from utility_funcs import parse_number

logger = logging.getLogger(__name__)

# tableaux with more entries than this go to the float solver under solver="auto"
AUTO_EXACT_LIMIT = 6000

SOLVERS = ("exact", "float", "auto")

LPResult = namedtuple("LPResult", ["status", "x", "objective", "solver"])


class InfeasibleError(ValueError):
    """An LP has no feasible point; constraints holds an irreducible infeasible subset."""

    def __init__(self, message, constraints=()):
        super().__init__(message)
        self.constraints = list(constraints)


class SimplexTableau(object):
    """Tableau in canonical form for min c.x, Ax = b, x >= 0 with b >= 0."""

    def __init__(self, A, b, c):
        self.m = len(A)
        self.n = len(c)
        self.rows = [list(row) + [rhs] for row, rhs in zip(A, b)]
        self.c = list(c)
        self.basis = [None] * self.m
        self.cost = None
        self.pivots = 0

    def set_basis(self, basis):
        self.basis = list(basis)
        self.price_out()

    def price_out(self):
        """Reduced-cost row for the current basis; cost[-1] holds minus the objective."""
        cost = list(self.c) + [Fraction(0)]
        for i, j in enumerate(self.basis):
            cj = cost[j]
            if cj != 0:
                row = self.rows[i]
                cost = [a - cj * r for a, r in zip(cost, row)]
        self.cost = cost

    def pivot(self, i, j):
        row = self.rows[i]
        piv = row[j]
        row = [a / piv for a in row]
        self.rows[i] = row
        for k in range(self.m):
            if k != i:
                f = self.rows[k][j]
                if f != 0:
                    self.rows[k] = [a - f * r for a, r in zip(self.rows[k], row)]
        f = self.cost[j]
        if f != 0:
            self.cost = [a - f * r for a, r in zip(self.cost, row)]
        self.basis[i] = j
        self.pivots += 1

    def bland_step(self, allowed):
        entering = None
        for j in range(self.n):
            if allowed[j] and self.cost[j] < 0:
                entering = j
                break
        if entering is None:
            return "optimal"
        best = None
        for i in range(self.m):
            a = self.rows[i][entering]
            if a > 0:
                key = (self.rows[i][-1] / a, self.basis[i])
                if best is None or key < best[0]:
                    best = (key, i)
        if best is None:
            return "unbounded"
        self.pivot(best[1], entering)
        return "go_on"

    def run(self, allowed):
        while True:
            status = self.bland_step(allowed)
            if status != "go_on":
                return status

    def solution(self):
        x = [Fraction(0)] * self.n
        for i, j in enumerate(self.basis):
            x[j] = self.rows[i][-1]
        return x

    def objective(self):
        return -self.cost[-1]


def _as_rows(A, width):
    if A is None:
        return []
    rows = [[parse_number(a) for a in row] for row in A]
    for row in rows:
        if len(row) != width:
            raise ValueError(f"constraint row has {len(row)} coefficients, expected {width}")
    return rows


def _solve_exact(c, A_ub, b_ub, A_eq, b_eq, free, maximize):
    n = len(c)
    free = set(free)
    # column map: original j -> (positive column, negative column or None)
    columns = []
    width = 0
    for j in range(n):
        if j in free:
            columns.append((width, width + 1))
            width += 2
        else:
            columns.append((width, None))
            width += 1

    def expand(row):
        out = [Fraction(0)] * width
        for j, a in enumerate(row):
            pos, neg = columns[j]
            out[pos] = a
            if neg is not None:
                out[neg] = -a
        return out

    rows, rhs = [], []
    n_slack = len(A_ub)
    for r, (row, b) in enumerate(zip(A_ub, b_ub)):
        slack = [Fraction(0)] * n_slack
        slack[r] = Fraction(1)
        rows.append(expand(row) + slack)
        rhs.append(b)
    for row, b in zip(A_eq, b_eq):
        rows.append(expand(row) + [Fraction(0)] * n_slack)
        rhs.append(b)
    for r in range(len(rows)):
        if rhs[r] < 0:
            rows[r] = [-a for a in rows[r]]
            rhs[r] = -rhs[r]

    m = len(rows)
    n_struct = width + n_slack
    cost = [Fraction(0)] * width
    for j, cj in enumerate(c):
        cj = -cj if maximize else cj
        pos, neg = columns[j]
        cost[pos] = cj
        if neg is not None:
            cost[neg] = -cj
    cost += [Fraction(0)] * n_slack

    # phase 1: one artificial per row
    art_rows = [row + [Fraction(1) if i == r else Fraction(0) for i in range(m)] for r, row in enumerate(rows)]
    phase1 = SimplexTableau(art_rows, rhs, [Fraction(0)] * n_struct + [Fraction(1)] * m)
    phase1.set_basis(range(n_struct, n_struct + m))
    phase1.run([True] * (n_struct + m))
    if phase1.objective() > 0:
        logger.debug("phase 1 ended at %s after %d pivots", phase1.objective(), phase1.pivots)
        return LPResult("infeasible", None, None, "exact")

    # drive artificials out of the basis, dropping redundant rows
    keep = []
    for i in range(m):
        j = phase1.basis[i]
        if j < n_struct:
            keep.append(i)
            continue
        row = phase1.rows[i]
        entering = next((jj for jj in range(n_struct) if row[jj] != 0), None)
        if entering is None:
            continue
        phase1.pivot(i, entering)
        keep.append(i)

    tableau = SimplexTableau(
        [phase1.rows[i][:n_struct] for i in keep],
        [phase1.rows[i][-1] for i in keep],
        cost,
    )
    tableau.set_basis([phase1.basis[i] for i in keep])
    status = tableau.run([True] * n_struct)
    logger.debug("exact simplex: %d + %d pivots, %s", phase1.pivots, tableau.pivots, status)
    if status == "unbounded":
        return LPResult("unbounded", None, None, "exact")
    y = tableau.solution()
    x = []
    for pos, neg in columns:
        x.append(y[pos] - (y[neg] if neg is not None else 0))
    objective = sum((cj * xj for cj, xj in zip(c, x)), Fraction(0))
    return LPResult("optimal", x, objective, "exact")


def _solve_float(c, A_ub, b_ub, A_eq, b_eq, free, maximize):
    n = len(c)
    c_arr = np.array([float(a) for a in c])
    if maximize:
        c_arr = -c_arr
    bounds = [(None, None) if j in set(free) else (0, None) for j in range(n)]
    kwargs = {}
    if A_ub:
        kwargs["A_ub"] = np.array([[float(a) for a in row] for row in A_ub])
        kwargs["b_ub"] = np.array([float(b) for b in b_ub])
    if A_eq:
        kwargs["A_eq"] = np.array([[float(a) for a in row] for row in A_eq])
        kwargs["b_eq"] = np.array([float(b) for b in b_eq])
    res = linprog(c_arr, bounds=bounds, method="highs", **kwargs)
    if res.status == 2:
        return LPResult("infeasible", None, None, "float")
    if res.status == 3:
        return LPResult("unbounded", None, None, "float")
    if res.status != 0:
        raise RuntimeError(f"linprog failed: {res.message}")
    x = [float(v) for v in res.x]
    objective = float(np.dot([float(a) for a in c], x))
    return LPResult("optimal", x, objective, "float")


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=(), maximize=False, solver="exact"):
    """Solve a small LP.

    Parameters
    ----------
    c: list
        objective coefficients
    A_ub, b_ub, A_eq, b_eq: lists, optional
        constraint rows and right-hand sides
    free: iterable of int
        indices of variables without a sign constraint
    maximize: bool
        maximize instead of minimize
    solver: str
        "exact" (rational simplex), "float" (HiGHS) or "auto"

    Returns
    -------
    LPResult with status "optimal", "infeasible" or "unbounded"
    """
    if solver not in SOLVERS:
        raise ValueError(f"solver must be one of {', '.join(SOLVERS)}, not {solver}")
    c = [parse_number(a) for a in c]
    n = len(c)
    A_ub = _as_rows(A_ub, n)
    A_eq = _as_rows(A_eq, n)
    b_ub = [parse_number(b) for b in (b_ub or [])]
    b_eq = [parse_number(b) for b in (b_eq or [])]
    if len(A_ub) != len(b_ub) or len(A_eq) != len(b_eq):
        raise ValueError("constraint rows and right-hand sides differ in length")
    free = tuple(free)
    if solver == "auto":
        rows = len(A_ub) + len(A_eq)
        cols = n + len(free) + len(A_ub) + rows
        solver = "exact" if rows * cols <= AUTO_EXACT_LIMIT else "float"
    logger.debug(
        "solving LP with %d variables, %d+%d rows (%s)", n, len(A_ub), len(A_eq), solver
    )
    if solver == "exact":
        return _solve_exact(c, A_ub, b_ub, A_eq, b_eq, free, maximize)
    return _solve_float(c, A_ub, b_ub, A_eq, b_eq, free, maximize)


def irreducible_infeasible_subset(
    n, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=(), solver="exact"
):
    """Deletion filter over the constraints of an infeasible system.

    Returns indices into the concatenation of the inequality rows and the equality rows; the
    returned rows are infeasible together and feasible once any one of them is dropped.
    """
    A_ub, b_ub = list(A_ub or []), list(b_ub or [])
    A_eq, b_eq = list(A_eq or []), list(b_eq or [])
    n_ub = len(A_ub)
    active = list(range(n_ub + len(A_eq)))

    def feasible(indices):
        ub = [i for i in indices if i < n_ub]
        eq = [i - n_ub for i in indices if i >= n_ub]
        res = solve_lp(
            [0] * n,
            [A_ub[i] for i in ub],
            [b_ub[i] for i in ub],
            [A_eq[i] for i in eq],
            [b_eq[i] for i in eq],
            free=free,
            solver=solver,
        )
        return res.status != "infeasible"

    if feasible(active):
        raise ValueError("system is feasible, there is no infeasible subset")
    for index in list(active):
        trial = [i for i in active if i != index]
        if not feasible(trial):
            active = trial
    return active


def solve_or_raise(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=(), maximize=False, solver="exact", labels=None):
    """solve_lp that raises InfeasibleError naming an irreducible infeasible subset.

    :param labels: optional name per constraint row (inequalities first, then equalities)
    """
    result = solve_lp(c, A_ub, b_ub, A_eq, b_eq, free=free, maximize=maximize, solver=solver)
    if result.status == "infeasible":
        subset = irreducible_infeasible_subset(
            len(c), A_ub, b_ub, A_eq, b_eq, free=free, solver=result.solver
        )
        named = [labels[i] for i in subset] if labels is not None else subset
        raise InfeasibleError(f"LP is infeasible; conflicting constraints: {named}", named)
    if result.status == "unbounded":
        raise ValueError("LP is unbounded")
    return result
