"""Self-contained linear programming (two-phase simplex) and small-scale
branch-and-bound mixed-integer solver.

Double precision with post-solve residual checks; Dantzig pivoting with a
Bland's-rule fallback for anti-cycling. Built for the small, well-scaled
instances this toolkit produces, not for industrial MILP workloads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

EPS_FEAS = 1e-9
EPS_PIVOT = 1e-10
EPS_COST = 1e-9
EPS_INT = 1e-6

LE, GE, EQ = "<=", ">=", "="


class LpError(ValueError):
    pass


class NumericalInstability(RuntimeError):
    """Pivoting stalled beyond the iteration cap."""


@dataclass
class LinearProgram:
    """min objective . x  subject to rows (coeffs, relation, rhs), bounds per var.

    Lower bounds default to 0; upper bounds default to None (free above).
    """

    objective: Sequence
    rows: list = field(default_factory=list)      # (coeff dict or array, rel, rhs)
    lower: Optional[Sequence] = None
    upper: Optional[Sequence] = None

    def add_row(self, coeffs, rel, rhs) -> None:
        if rel not in (LE, GE, EQ):
            raise LpError(f"unknown relation {rel!r}")
        self.rows.append((coeffs, rel, float(rhs)))

    @property
    def num_vars(self) -> int:
        return len(self.objective)


@dataclass
class MilpModel:
    lp: LinearProgram
    integral: Sequence  # bool per variable

    def validate(self) -> None:
        n = self.lp.num_vars
        if len(self.integral) != n:
            raise LpError("integrality mask length mismatch")
        upper = self.lp.upper if self.lp.upper is not None else [None] * n
        for j in range(n):
            if self.integral[j] and (upper[j] is None or not math.isfinite(upper[j])):
                raise LpError(f"integral variable {j} must have a finite upper bound")


@dataclass
class Solution:
    status: str                  # optimal | infeasible | unbounded | node_limit | no_incumbent
    values: Optional[np.ndarray] = None
    objective: Optional[float] = None
    dual_values: Optional[np.ndarray] = None
    nodes: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _dense_row(coeffs, n: int) -> np.ndarray:
    if isinstance(coeffs, dict):
        row = np.zeros(n)
        for j, v in coeffs.items():
            row[j] = v
        return row
    row = np.asarray(coeffs, dtype=float)
    if row.shape != (n,):
        raise LpError(f"row has {row.shape} coefficients, expected {n}")
    return row


def _standardise(lp: LinearProgram, extra_bounds=None):
    """Shift lower bounds to zero and materialise finite upper bounds as rows.

    Returns (A, rel, b, c, shift) over the original variable order.
    """
    n = lp.num_vars
    c = np.asarray(lp.objective, dtype=float)
    lower = np.zeros(n) if lp.lower is None else np.asarray(lp.lower, dtype=float)
    upper = [None] * n if lp.upper is None else list(lp.upper)
    if extra_bounds:
        lower = lower.copy()
        for j, (lo, hi) in extra_bounds.items():
            if lo is not None:
                lower[j] = max(lower[j], lo)
            if hi is not None:
                upper[j] = hi if upper[j] is None else min(upper[j], hi)
    if not np.all(np.isfinite(c)):
        raise LpError("objective coefficients must be finite")

    rows = []
    rels = []
    rhs = []
    for coeffs, rel, b in lp.rows:
        row = _dense_row(coeffs, n)
        if not np.all(np.isfinite(row)) or not math.isfinite(b):
            raise LpError("constraint coefficients must be finite")
        rows.append(row)
        rels.append(rel)
        rhs.append(b - row @ lower)
    for j in range(n):
        if upper[j] is not None and math.isfinite(upper[j]):
            if upper[j] - lower[j] < -EPS_FEAS:
                # Empty box: emit a trivially infeasible row.
                row = np.zeros(n)
                rows.append(row)
                rels.append(GE)
                rhs.append(1.0)
                continue
            row = np.zeros(n)
            row[j] = 1.0
            rows.append(row)
            rels.append(LE)
            rhs.append(upper[j] - lower[j])

    A = np.vstack(rows) if rows else np.zeros((0, n))
    return A, rels, np.asarray(rhs, dtype=float), c, lower


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    colvals = tableau[:, col].copy()
    colvals[row] = 0.0
    tableau -= np.outer(colvals, tableau[row])
    basis[row] = col


def _run_simplex(tableau, basis, ncols, iteration_cap, dantzig_budget):
    """Minimise the objective encoded in the last tableau row. Returns status."""
    it = 0
    while True:
        costs = tableau[-1, :ncols]
        if it < dantzig_budget:
            col = int(np.argmin(costs))
            if costs[col] >= -EPS_COST:
                return "optimal"
        else:  # Bland: first improving column
            neg = np.nonzero(costs < -EPS_COST)[0]
            if neg.size == 0:
                return "optimal"
            col = int(neg[0])
        colvals = tableau[:-1, col]
        pos = colvals > EPS_PIVOT
        if not np.any(pos):
            return "unbounded"
        ratios = np.full(colvals.shape, np.inf)
        ratios[pos] = tableau[:-1, -1][pos] / colvals[pos]
        best = np.min(ratios)
        candidates = np.nonzero(ratios <= best + EPS_PIVOT)[0]
        # tie-break on smallest basis index for determinism / anti-cycling
        row = int(min(candidates, key=lambda r: basis[r]))
        _pivot(tableau, basis, row, col)
        it += 1
        if it > iteration_cap:
            raise NumericalInstability(f"simplex exceeded {iteration_cap} pivots")


def _solve_standard(A, rels, b, c):
    """Two-phase simplex on A x (rel) b, x >= 0. Returns Solution in shifted space
    plus dual values for the original rows."""
    m, n = A.shape
    if m == 0:
        if np.any(c < -EPS_COST):
            return Solution("unbounded"), None
        return Solution("optimal", values=np.zeros(n), objective=0.0), np.zeros(0)

    A = A.copy()
    b = b.copy()
    rels = list(rels)
    flip = b < 0
    for i in np.nonzero(flip)[0]:
        A[i] = -A[i]
        b[i] = -b[i]
        rels[i] = {LE: GE, GE: LE, EQ: EQ}[rels[i]]

    slack_cols = []
    art_rows = []
    for i, rel in enumerate(rels):
        if rel == LE:
            slack_cols.append((i, 1.0))
        elif rel == GE:
            slack_cols.append((i, -1.0))
            art_rows.append(i)
        else:
            art_rows.append(i)

    n_slack = len(slack_cols)
    n_art = len(art_rows)
    ncols = n + n_slack + n_art
    tableau = np.zeros((m + 1, ncols + 1))
    tableau[:m, :n] = A
    tableau[:m, -1] = b
    basis = np.full(m, -1, dtype=int)
    for k, (i, sign) in enumerate(slack_cols):
        tableau[i, n + k] = sign
        if sign > 0:
            basis[i] = n + k
    for k, i in enumerate(art_rows):
        tableau[i, n + n_slack + k] = 1.0
        basis[i] = n + n_slack + k

    cap = 2000 + 60 * (m + n)
    dantzig = 500 + 10 * m

    # Phase 1: minimise the sum of artificials.
    if n_art:
        tableau[-1, :] = 0.0
        for k, i in enumerate(art_rows):
            tableau[-1, :] -= tableau[i, :]
        tableau[-1, n + n_slack:n + n_slack + n_art] = 0.0
        status = _run_simplex(tableau, basis, ncols, cap, dantzig)
        if status != "optimal":
            raise NumericalInstability("phase-1 simplex did not converge")
        if tableau[-1, -1] < -1e-7:
            return Solution("infeasible"), None
        # Pivot any basic artificials out (or drop redundant rows).
        art_set = set(range(n + n_slack, ncols))
        for i in range(m):
            if basis[i] in art_set and tableau[i, -1] > 1e-7:
                return Solution("infeasible"), None
            if basis[i] in art_set:
                for col in range(n + n_slack):
                    if abs(tableau[i, col]) > 1e-7:
                        _pivot(tableau, basis, i, col)
                        break

    # Phase 2 with the real costs; artificial columns are frozen out.
    tableau[-1, :] = 0.0
    tableau[-1, :n] = c
    for i in range(m):
        if basis[i] < n + n_slack and abs(tableau[-1, basis[i]]) > 0:
            tableau[-1, :] -= tableau[-1, basis[i]] * tableau[i, :]
    if n_art:
        # Artificial columns are excluded from pricing below; zero them so they
        # stay inert through later pivots.
        tableau[:, n + n_slack:ncols] = 0.0
    status = _run_simplex(tableau, basis, n + n_slack, cap, dantzig)
    if status == "unbounded":
        return Solution("unbounded"), None

    x = np.zeros(ncols)
    x[basis] = tableau[:m, -1]
    values = x[:n]
    objective = float(c @ values)

    # Dual values from the final reduced costs of slack columns; equality rows
    # get theirs from a direct basis solve below when needed.
    duals = np.zeros(m)
    for k, (i, sign) in enumerate(slack_cols):
        duals[i] = -sign * tableau[-1, n + k]
    for i in np.nonzero(flip)[0]:
        duals[i] = -duals[i]
    return Solution(status="optimal", values=values, objective=objective), duals


def solve_lp(lp: LinearProgram, extra_bounds=None) -> Solution:
    """Solve a linear program; optimal solutions are re-checked for primal
    feasibility within EPS_FEAS before being reported."""
    A, rels, b, c, lower = _standardise(lp, extra_bounds)
    sol, duals = _solve_standard(A, rels, b, c)
    if not sol.ok:
        return sol
    values = sol.values + lower[: len(sol.values)]
    objective = float(np.asarray(lp.objective, dtype=float) @ values)
    _check_residuals(lp, values)
    return Solution("optimal", values=values, objective=objective, dual_values=duals)


def _check_residuals(lp: LinearProgram, values: np.ndarray) -> None:
    n = lp.num_vars
    scale = 1.0 + float(np.max(np.abs(values))) if len(values) else 1.0
    tol = EPS_FEAS * scale * 10 + 1e-7
    for coeffs, rel, rhs in lp.rows:
        lhs = float(_dense_row(coeffs, n) @ values)
        if rel == LE and lhs > rhs + tol:
            raise NumericalInstability(f"residual check failed: {lhs} <= {rhs}")
        if rel == GE and lhs < rhs - tol:
            raise NumericalInstability(f"residual check failed: {lhs} >= {rhs}")
        if rel == EQ and abs(lhs - rhs) > tol:
            raise NumericalInstability(f"residual check failed: {lhs} == {rhs}")


def duality_gap(lp: LinearProgram, sol: Solution) -> float:
    """|primal - dual| objective gap reconstructed from the reported duals."""
    if not sol.ok or sol.dual_values is None:
        raise LpError("duality gap needs an optimal solution with duals")
    A, rels, b, c, lower = _standardise(lp)
    y = sol.dual_values
    dual_obj = float(y @ b) + float(c @ lower)
    return abs(dual_obj - sol.objective)


def solve_milp(model: MilpModel, node_limit: int = 10000) -> Solution:
    """Exhaustive branch-and-bound with LP relaxation bounding.

    Branches on the most-fractional variable (ties to the lowest index),
    exploring the floor branch first. Returns the proven optimum, or the best
    incumbent with status 'node_limit' when the node budget runs out.
    """
    model.validate()
    int_idx = [j for j, flag in enumerate(model.integral) if flag]

    best: Optional[Solution] = None
    nodes = 0
    stack = [dict()]
    while stack:
        if nodes >= node_limit:
            if best is not None:
                return Solution("node_limit", best.values, best.objective, nodes=nodes)
            return Solution("no_incumbent", nodes=nodes)
        bounds = stack.pop()
        nodes += 1
        relax = solve_lp(model.lp, extra_bounds=bounds)
        if relax.status == "infeasible":
            continue
        if relax.status == "unbounded":
            return Solution("unbounded", nodes=nodes)
        if best is not None and relax.objective >= best.objective - 1e-9:
            continue
        frac_var = None
        frac_dist = -1.0
        for j in int_idx:
            v = relax.values[j]
            dist = abs(v - round(v))
            if dist > EPS_INT and dist > frac_dist + 1e-12:
                frac_var = j
                frac_dist = dist
        if frac_var is None:
            values = relax.values.copy()
            for j in int_idx:
                values[j] = round(values[j])
            objective = float(np.asarray(model.lp.objective, dtype=float) @ values)
            if best is None or objective < best.objective - 1e-9:
                best = Solution("optimal", values, objective)
            continue
        v = relax.values[frac_var]
        lo, hi = bounds.get(frac_var, (None, None))
        down = dict(bounds)
        down[frac_var] = (lo, math.floor(v))
        up = dict(bounds)
        up[frac_var] = (math.ceil(v), hi)
        stack.append(up)
        stack.append(down)  # explored first

    if best is None:
        return Solution("infeasible", nodes=nodes)
    return Solution("optimal", best.values, best.objective, nodes=nodes)


def solve_cycle_lp(rates: np.ndarray, demand: Sequence) -> Solution:
    """min sum(K) s.t. rates @ K >= demand, K >= 0.

    `rates` has one column per service vector and one row per O-D pair. The
    returned assignment is re-checked componentwise against the demand.
    """
    rates = np.asarray(rates, dtype=float)
    q = np.asarray(demand, dtype=float)
    if rates.ndim != 2:
        raise LpError("rates must be a P x R matrix")
    n_pairs, n_vec = rates.shape
    if q.shape != (n_pairs,):
        raise LpError("demand length must match the number of O-D pairs")
    if np.any(rates < 0) or np.any(q < 0):
        raise LpError("rates and demand must be non-negative")

    for p in range(n_pairs):
        if q[p] > 0 and (n_vec == 0 or np.all(rates[p] <= 0)):
            return Solution("infeasible")

    if n_vec == 0 or not np.any(q > 0):
        return Solution("optimal", values=np.zeros(n_vec), objective=0.0,
                        dual_values=np.zeros(n_pairs))

    lp = LinearProgram(objective=np.ones(n_vec))
    for p in range(n_pairs):
        if np.any(rates[p] > 0):
            lp.add_row(rates[p], GE, q[p])
        # rows that are all-zero with q[p] == 0 are vacuous
    sol = solve_lp(lp)
    if sol.ok:
        served = rates @ sol.values
        if np.any(served < q - 1e-7):
            raise NumericalInstability("cycle LP result does not cover the demand")
    return sol
