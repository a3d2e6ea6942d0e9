"""Small dense linear-program solver with exact-rational and float modes.

The finite mechanism solver builds tiny LPs (a few dozen variables for the
hand-worked instances, a few thousand for discretization cross-checks).  Two
solution modes are offered:

* ``exact`` -- a two-phase tableau simplex over ``fractions.Fraction`` with
  Bland's anti-cycling rule.  Optima are exact rationals.  This is the mode
  the golden-value tests run in.
* ``float`` -- delegated to scipy's HiGHS backend, which handles the larger
  discretized instances without any dense-tableau memory blowup.

Every optimal solve also produces a dual certificate: a vector of row
multipliers whose implied objective bound is checked against the primal
value (exactly in rational mode, to 1e-8 relative in float mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

__all__ = [
    "LinearProgram",
    "LpSolution",
    "LpError",
    "solve_lp",
    "dual_bound",
]

LESS, EQUAL, GREATER = "<=", "=", ">="
_RELATIONS = (LESS, EQUAL, GREATER)

DEFAULT_ITERATION_CAP = 10**6


class LpError(ValueError):
    """Structural problem with an LP (dimension mismatch, bad relation...)."""


@dataclass(frozen=True)
class LinearProgram:
    """maximize objective . x  subject to rows and per-variable bounds.

    Constraint rows may be given densely (a sequence as long as the
    objective) or sparsely (a mapping from variable index to coefficient).
    Bounds default to [0, +inf); ``None`` stands for an infinite upper bound.
    """

    objective: Sequence
    constraints: Sequence[tuple]  # (row, relation, rhs)
    bounds: Sequence[tuple] | None = None

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    def row_items(self, row) -> list[tuple[int, object]]:
        """Sparse (index, coefficient) view of a constraint row."""
        if isinstance(row, Mapping):
            items = []
            for j, a in row.items():
                if not 0 <= j < self.n_vars:
                    raise LpError(f"row index {j} out of range")
                if a != 0:
                    items.append((j, a))
            return items
        if len(row) != self.n_vars:
            raise LpError(
                f"row has {len(row)} coefficients, expected {self.n_vars}")
        return [(j, a) for j, a in enumerate(row) if a != 0]

    def bound(self, j: int) -> tuple:
        if self.bounds is None:
            return (0, None)
        return self.bounds[j]

    def validate(self) -> None:
        for row, rel, _ in self.constraints:
            if rel not in _RELATIONS:
                raise LpError(f"unknown relation {rel!r}")
            self.row_items(row)
        if self.bounds is not None:
            if len(self.bounds) != self.n_vars:
                raise LpError("bounds length does not match objective")
            for lo, hi in self.bounds:
                if lo is None:
                    raise LpError("lower bounds must be finite")
                if hi is not None and hi < lo:
                    raise LpError(f"bound [{lo}, {hi}] is empty")


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    value: object = None
    assignment: list = field(default_factory=list)
    dual: list = field(default_factory=list)  # one multiplier per row
    certified: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(lp: LinearProgram, mode: str = "exact",
             iteration_cap: int = DEFAULT_ITERATION_CAP) -> LpSolution:
    """Solve ``lp``, maximizing, in the requested arithmetic mode."""
    lp.validate()
    if mode == "exact":
        sol = _solve_exact(lp, iteration_cap)
    elif mode == "float":
        sol = _solve_float(lp, iteration_cap)
    else:
        raise LpError(f"unknown mode {mode!r}")
    if sol.optimal:
        sol.certified = _certify(lp, sol, exact=(mode == "exact"))
    return sol


def dual_bound(lp: LinearProgram, dual: Sequence, tol=0):
    """Objective bound implied by row multipliers ``dual``.

    Multipliers must be >= 0 on <= rows and <= 0 on >= rows (within
    ``tol``).  Returns None if the bound is infinite: a reduced cost more
    than ``tol`` above zero on a variable with no upper bound.  Positive
    reduced costs within ``tol`` on unbounded variables are round-off and
    contribute nothing.
    """
    n = lp.n_vars
    reduced = list(lp.objective)
    total = 0
    for y, (row, rel, rhs) in zip(dual, lp.constraints):
        if y == 0:
            continue
        if rel == LESS and y < -tol:
            raise LpError("multiplier on <= row must be nonnegative")
        if rel == GREATER and y > tol:
            raise LpError("multiplier on >= row must be nonpositive")
        total += y * rhs
        for j, a in lp.row_items(row):
            reduced[j] -= y * a
    for j in range(n):
        r = reduced[j]
        lo, hi = lp.bound(j)
        if r > 0:
            if hi is None:
                if r > tol:
                    return None
                continue
            total += r * hi
        elif r < 0:
            total += r * lo
    return total


def _exact_view(lp: LinearProgram) -> LinearProgram:
    """The same LP with every number coerced to Fraction."""
    frac = Fraction

    def conv_row(row):
        return {j: frac(a) for j, a in lp.row_items(row)}

    return LinearProgram(
        objective=[frac(v) for v in lp.objective],
        constraints=[(conv_row(row), rel, frac(rhs))
                     for row, rel, rhs in lp.constraints],
        bounds=None if lp.bounds is None else [
            (frac(lo), None if hi is None else frac(hi))
            for lo, hi in lp.bounds],
    )


def _certify(lp: LinearProgram, sol: LpSolution, exact: bool) -> bool:
    if len(sol.dual) != len(lp.constraints):
        return False
    try:
        if exact:
            bound = dual_bound(_exact_view(lp), sol.dual)
            return bound == sol.value
        bound = dual_bound(lp, sol.dual, tol=1e-7)
    except LpError:
        return False
    if bound is None:
        return False
    scale = max(1.0, abs(float(sol.value)))
    return abs(float(bound) - float(sol.value)) <= 1e-8 * scale


# ---------------------------------------------------------------------------
# float mode (HiGHS)
# ---------------------------------------------------------------------------

def _solve_float(lp: LinearProgram, iteration_cap: int) -> LpSolution:
    n = lp.n_vars
    c = -np.asarray([float(v) for v in lp.objective])  # linprog minimizes

    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    row_kind = []  # (bucket, position, sign) to map duals back
    for row, rel, rhs in lp.constraints:
        items = lp.row_items(row)
        if rel == EQUAL:
            row_kind.append(("eq", len(eq_rows), 1.0))
            eq_rows.append(items)
            eq_rhs.append(float(rhs))
        else:
            sign = 1.0 if rel == LESS else -1.0
            row_kind.append(("ub", len(ub_rows), sign))
            ub_rows.append([(j, sign * float(a)) for j, a in items])
            ub_rhs.append(sign * float(rhs))

    def to_csr(rows):
        data, indices, indptr = [], [], [0]
        for items in rows:
            for j, a in items:
                indices.append(j)
                data.append(float(a))
            indptr.append(len(indices))
        return sp.csr_matrix((data, indices, indptr), shape=(len(rows), n))

    bounds = [(float(lp.bound(j)[0]),
               None if lp.bound(j)[1] is None else float(lp.bound(j)[1]))
              for j in range(n)]
    res = linprog(
        c,
        A_ub=to_csr(ub_rows) if ub_rows else None,
        b_ub=np.asarray(ub_rhs) if ub_rows else None,
        A_eq=to_csr(eq_rows) if eq_rows else None,
        b_eq=np.asarray(eq_rhs) if eq_rows else None,
        bounds=bounds,
        method="highs",
        options={"maxiter": iteration_cap},
    )
    if res.status == 2:
        return LpSolution(status="infeasible")
    if res.status == 3:
        return LpSolution(status="unbounded")
    if res.status == 1:
        return LpSolution(status="iteration_limit")
    if res.status != 0:
        return LpSolution(status="iteration_limit")

    # HiGHS marginals are for the minimization form; flip back to max form.
    dual = []
    for bucket, pos, sign in row_kind:
        if bucket == "eq":
            y = -res.eqlin.marginals[pos]
        else:
            y = -sign * res.ineqlin.marginals[pos]
        dual.append(float(y))
    # Clean round-off that would wreck the sign conditions.
    for i, (row, rel, _) in enumerate(lp.constraints):
        if rel == LESS and -1e-7 < dual[i] < 0:
            dual[i] = 0.0
        if rel == GREATER and 0 < dual[i] < 1e-7:
            dual[i] = 0.0
    return LpSolution(status="optimal", value=-float(res.fun),
                      assignment=[float(x) for x in res.x], dual=dual)


# ---------------------------------------------------------------------------
# exact mode (two-phase Fraction tableau, Bland's rule)
# ---------------------------------------------------------------------------

class _IterationLimit(Exception):
    pass


def _solve_exact(lp: LinearProgram, iteration_cap: int) -> LpSolution:
    n = lp.n_vars
    frac = Fraction

    # Shift x = lo + x' so every variable has lower bound 0; finite upper
    # bounds become extra <= rows.
    lo = [frac(lp.bound(j)[0]) for j in range(n)]
    extra_rows = []
    for j in range(n):
        hi = lp.bound(j)[1]
        if hi is not None:
            extra_rows.append(([(j, frac(1))], LESS, frac(hi) - lo[j]))

    rows = []
    for row, rel, rhs in lp.constraints:
        items = [(j, frac(a)) for j, a in lp.row_items(row)]
        shift = sum(a * lo[j] for j, a in items)
        rows.append((items, rel, frac(rhs) - shift))
    rows.extend(extra_rows)

    obj = [frac(v) for v in lp.objective]
    obj_shift = sum(obj[j] * lo[j] for j in range(n))

    m = len(rows)
    # Normalize so every rhs is nonnegative, then append slack/surplus and
    # artificial columns: A x = b, x >= 0.
    slack_of_row = [None] * m
    art_of_row = [None] * m
    ncols = n
    norm_rows = []
    flip = []
    for items, rel, rhs in rows:
        # flip to make rhs nonnegative; also flip >= rows with zero rhs so
        # their slack can start basic (saves an artificial variable)
        s = -1 if (rhs < 0 or (rhs == 0 and rel == GREATER)) else 1
        flip.append(s)
        if s == -1:
            items = [(j, -a) for j, a in items]
            rhs = -rhs
            rel = {LESS: GREATER, GREATER: LESS, EQUAL: EQUAL}[rel]
        norm_rows.append((items, rel, rhs))
    for i, (items, rel, rhs) in enumerate(norm_rows):
        if rel == LESS:
            slack_of_row[i] = ncols
            ncols += 1
        elif rel == GREATER:
            slack_of_row[i] = ncols
            ncols += 1
            art_of_row[i] = ncols
            ncols += 1
        else:
            art_of_row[i] = ncols
            ncols += 1

    zero = frac(0)
    tableau = [[zero] * (ncols + 1) for _ in range(m)]
    basis = [None] * m
    for i, (items, rel, rhs) in enumerate(norm_rows):
        trow = tableau[i]
        for j, a in items:
            trow[j] = a
        trow[ncols] = rhs
        if rel == LESS:
            trow[slack_of_row[i]] = frac(1)
            basis[i] = slack_of_row[i]
        elif rel == GREATER:
            trow[slack_of_row[i]] = frac(-1)
            trow[art_of_row[i]] = frac(1)
            basis[i] = art_of_row[i]
        else:
            trow[art_of_row[i]] = frac(1)
            basis[i] = art_of_row[i]

    artificials = {a for a in art_of_row if a is not None}
    counter = [0]
    zrow = [zero] * ncols  # maintained c_B B^-1 A_j - c_j for the phase

    def pivot(ti, tj):
        piv = tableau[ti][tj]
        row = tableau[ti]
        inv = frac(1) / piv
        tableau[ti] = [v * inv for v in row]
        row = tableau[ti]
        for k in range(m):
            if k == ti:
                continue
            factor = tableau[k][tj]
            if factor != 0:
                rk = tableau[k]
                tableau[k] = [rv - factor * pv for rv, pv in zip(rk, row)]
        factor = zrow[tj]
        if factor != 0:
            zrow[:] = [zv - factor * pv for zv, pv in zip(zrow, row[:-1])]
        basis[ti] = tj

    def load_cost(cost):
        cb = [(cost[b], i) for i, b in enumerate(basis) if cost[b] != 0]
        for j in range(ncols):
            zrow[j] = sum(c * tableau[i][j] for c, i in cb) - cost[j]

    def run_simplex(allowed):
        """Maximize the loaded cost over the tableau; Bland's rule."""
        basic = set(basis)
        while True:
            counter[0] += 1
            if counter[0] > iteration_cap:
                raise _IterationLimit
            entering = -1
            for j in allowed:
                if zrow[j] < 0 and j not in basic:
                    entering = j
                    break
            if entering < 0:
                return True  # optimal
            leaving = -1
            best = None
            for i in range(m):
                a = tableau[i][entering]
                if a > 0:
                    ratio = tableau[i][ncols] / a
                    if best is None or ratio < best or (
                            ratio == best and basis[i] < basis[leaving]):
                        best = ratio
                        leaving = i
            if leaving < 0:
                return False  # unbounded
            basic.discard(basis[leaving])
            basic.add(entering)
            pivot(leaving, entering)

    try:
        # Phase 1: drive artificials to zero.
        if artificials:
            cost1 = [zero] * ncols
            for a in artificials:
                cost1[a] = frac(-1)
            load_cost(cost1)
            bounded = run_simplex(sorted(range(ncols)))
            assert bounded, "phase-1 objective is bounded by construction"
            infeas = -sum(tableau[i][ncols] for i in range(m)
                          if basis[i] in artificials)
            if infeas != 0:
                return LpSolution(status="infeasible")
            # Pivot remaining (degenerate) artificials out of the basis.
            for i in range(m):
                if basis[i] in artificials:
                    for j in range(ncols):
                        if j not in artificials and tableau[i][j] != 0:
                            pivot(i, j)
                            break
                    # A row with no eligible pivot is redundant; harmless to
                    # leave the artificial basic at value zero.

        # Phase 2.
        cost2 = [zero] * ncols
        for j in range(n):
            cost2[j] = obj[j]
        load_cost(cost2)
        bounded = run_simplex(sorted(set(range(ncols)) - artificials))
        if not bounded:
            return LpSolution(status="unbounded")
    except _IterationLimit:
        return LpSolution(status="iteration_limit")

    x = [zero] * ncols
    for i, b in enumerate(basis):
        x[b] = tableau[i][ncols]
    assignment = [x[j] + lo[j] for j in range(n)]
    value = sum(obj[j] * x[j] for j in range(n)) + obj_shift

    dual_std = _basis_dual(lp, flip, slack_of_row, art_of_row, basis,
                           tableau, cost2, m)
    return LpSolution(status="optimal", value=value, assignment=assignment,
                      dual=dual_std)


def _basis_dual(lp, flip, slack_of_row, art_of_row, basis, tableau, cost, m):
    """Row multipliers y = c_B B^{-1}, mapped back to the caller's rows.

    y_i is read off the final tableau as the reduced cost of row i's
    slack/artificial column (negated for +1 columns), which avoids
    refactorizing the basis.
    """
    cb = [cost[b] for b in basis]

    def reduced(j):
        return cost[j] - sum(cb[i] * tableau[i][j] for i in range(m))

    y_std = []
    for i in range(m):
        if art_of_row[i] is not None:
            # artificial column is the i-th identity column
            y = -reduced(art_of_row[i])
        else:
            y = -reduced(slack_of_row[i])
        y_std.append(y)

    n_orig = len(lp.constraints)
    dual = []
    for i in range(n_orig):
        dual.append(flip[i] * y_std[i])
    # Fold upper-bound rows' multipliers into nothing: dual_bound() recovers
    # their effect through the reduced costs, so they are simply dropped.
    return dual
