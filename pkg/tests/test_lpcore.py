import random
from fractions import Fraction as F

import pytest

from scoremech.lpcore import LinearProgram, LpError, dual_bound, solve_lp


def test_textbook_max():
    lp = LinearProgram(objective=[1, 1], constraints=[([1, 1], "<=", 1)])
    for mode in ("exact", "float"):
        sol = solve_lp(lp, mode=mode)
        assert sol.status == "optimal"
        assert abs(float(sol.value) - 1.0) < 1e-12
        assert sol.certified
    assert solve_lp(lp, mode="exact").value == F(1)


def test_infeasible():
    lp = LinearProgram(objective=[1], constraints=[([1], "<=", -1)])
    for mode in ("exact", "float"):
        assert solve_lp(lp, mode=mode).status == "infeasible"


def test_unbounded():
    lp = LinearProgram(objective=[1], constraints=[([-1], "<=", 0)])
    for mode in ("exact", "float"):
        assert solve_lp(lp, mode=mode).status == "unbounded"


def test_equality_and_ge_rows():
    lp = LinearProgram(
        objective=[3, -1, 0],
        constraints=[([1, 1, 1], "=", 1),
                     ([1, 0, 0], "<=", F(3, 5)),
                     ([0, 1, 0], ">=", F(1, 5))])
    sol = solve_lp(lp, mode="exact")
    assert sol.value == F(3, 5) * 3 - F(1, 5)
    assert sol.certified


def test_variable_bounds():
    lp = LinearProgram(objective=[1, -2], constraints=[],
                       bounds=[(2, 5), (1, None)])
    sol = solve_lp(lp, mode="exact")
    assert sol.value == F(5) - 2
    assert sol.assignment == [F(5), F(1)]
    assert sol.certified


def test_dimension_mismatch():
    lp = LinearProgram(objective=[1, 1], constraints=[([1], "<=", 1)])
    with pytest.raises(LpError):
        solve_lp(lp)


def test_unknown_relation():
    lp = LinearProgram(objective=[1], constraints=[([1], "<", 1)])
    with pytest.raises(LpError):
        solve_lp(lp)


def test_iteration_limit():
    lp = LinearProgram(
        objective=[1, 2, 3],
        constraints=[([1, 1, 1], "<=", 1), ([1, 2, 0], "<=", 2)])
    assert solve_lp(lp, mode="exact", iteration_cap=1).status \
        == "iteration_limit"


def test_sparse_rows_match_dense():
    dense = LinearProgram(objective=[2, 1], constraints=[([1, 3], "<=", 6)])
    sparse = LinearProgram(objective=[2, 1], constraints=[({0: 1, 1: 3}, "<=", 6)])
    for mode in ("exact", "float"):
        assert abs(float(solve_lp(dense, mode).value)
                   - float(solve_lp(sparse, mode).value)) < 1e-12


def test_dual_bound_rejects_bad_signs():
    lp = LinearProgram(objective=[1], constraints=[([1], "<=", 1)])
    with pytest.raises(LpError):
        dual_bound(lp, [-1])


def _random_lp(rng):
    nv = rng.randint(2, 8)
    nc = rng.randint(1, 8)
    objective = [F(rng.randint(-4, 6), rng.randint(1, 3)) for _ in range(nv)]
    constraints = []
    for _ in range(nc):
        row = [F(rng.randint(-2, 4)) for _ in range(nv)]
        rel = rng.choice(["<=", "<=", ">=", "="])
        if rel == "<=":
            rhs = F(rng.randint(0, 8))
        elif rel == ">=":
            rhs = F(rng.randint(-8, 0))
        else:
            row = [abs(a) for a in row]
            rhs = F(0)
        constraints.append((row, rel, rhs))
    bounds = [(F(0), F(2)) for _ in range(nv)]
    return LinearProgram(objective=objective, constraints=constraints,
                         bounds=bounds)


def test_exact_and_float_agree_on_random_lps():
    """x = 0 is feasible and bounds are finite, so every draw is optimal."""
    rng = random.Random(20240817)
    for _ in range(60):
        lp = _random_lp(rng)
        exact = solve_lp(lp, "exact")
        approx = solve_lp(lp, "float")
        assert exact.status == approx.status == "optimal"
        assert abs(float(exact.value) - approx.value) <= 1e-6
        assert exact.certified, "exact dual certificate failed"
        assert approx.certified, "float dual certificate failed"


def test_exact_certificate_is_tight():
    rng = random.Random(99)
    for _ in range(20):
        lp = _random_lp(rng)
        sol = solve_lp(lp, "exact")
        assert dual_bound(lp, sol.dual) == sol.value
