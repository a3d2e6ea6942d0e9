import math

import numpy as np
import pytest
from scipy.integrate import quad

from scoremech.continuous import (
    ContinuousError,
    MonotonicityError,
    RegimeError,
    Tabulated,
    Triangular,
    TruncatedExponential,
    Uniform,
    check_mhr,
    compute_t0,
    discretize,
    read_solution_table,
    solve_continuous,
    solve_first_best,
    solve_linear,
    solve_quadratic,
    write_solution_table,
)
from scoremech.model import CostModel
from scoremech.finite import build_drm_lp
from scoremech.lpcore import solve_lp

UNIFORM = Uniform(-2.0, 1.0)
TEXP = TruncatedExponential(-2.0, 1.0, rate=1.0)
TRIANGULAR = Triangular(-2.0, 1.0, mode=-0.5)
ALL_DISTS = [UNIFORM, TEXP, TRIANGULAR]

# analytic cap for uniform[-2, 1], quadratic, gamma = 4:
# (1/2) * (-2/9 + ln(3)/2 + 8/9) = 1/3 + ln(3)/4
P_STAR_UNIFORM_QUAD_4 = 1.0 / 3.0 + math.log(3.0) / 4.0


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("dist", ALL_DISTS, ids=lambda d: type(d).__name__)
def test_distribution_self_consistency(dist):
    assert dist.validate() == []
    assert dist.cdf(dist.s_max) == pytest.approx(1.0, abs=1e-12)
    # cdf matches quadrature of the density
    for t in np.linspace(dist.s_min, dist.s_max, 7):
        ref, _ = quad(dist.pdf, dist.s_min, float(t))
        assert dist.cdf(float(t)) == pytest.approx(ref, abs=1e-9)
    # tail expectations match quadrature of z f(z)
    for t in np.linspace(dist.s_min, dist.s_max, 7):
        ref, _ = quad(lambda z: z * dist.pdf(z), float(t), dist.s_max)
        assert dist.tail_expectation(float(t)) == pytest.approx(ref,
                                                                abs=1e-9)
    # quantile inverts the cdf
    for p in (0.05, 0.25, 0.5, 0.75, 0.95):
        assert dist.cdf(dist.quantile(p)) == pytest.approx(p, abs=1e-10)


def test_tabulated_matches_quadrature():
    xs = np.linspace(-2.0, 1.0, 25)
    dist = Tabulated(xs, 1.0 + 0.5 * np.sin(xs))
    assert dist.validate() == []
    for t in (-1.7, -0.4, 0.3, 0.9):
        ref, _ = quad(dist.pdf, t, 1.0, points=list(xs), limit=200)
        assert 1.0 - dist.cdf(t) == pytest.approx(ref, abs=1e-9)
        ref, _ = quad(lambda z: z * dist.pdf(z), t, 1.0, points=list(xs),
                      limit=200)
        assert dist.tail_expectation(t) == pytest.approx(ref, abs=1e-9)


# ---------------------------------------------------------------------------
# t0
# ---------------------------------------------------------------------------

def test_t0_uniform():
    # integral_t0^1 z dz = (1 - t0^2)/2 = 0  =>  t0 = -1
    assert compute_t0(UNIFORM) == pytest.approx(-1.0, abs=1e-10)


def test_t0_independent_of_lower_endpoint():
    assert compute_t0(Uniform(-3.0, 1.0)) == pytest.approx(-1.0, abs=1e-10)


def test_t0_symmetric_tabulated():
    # symmetric about 0 on [-1, 1]; the extra mass below -1 cannot matter
    dist = Tabulated([-2.0, -1.0, 0.0, 1.0], [0.4, 0.3, 0.5, 0.3])
    assert compute_t0(dist) == pytest.approx(-1.0, abs=1e-9)


def test_t0_requires_negative_mean():
    with pytest.raises(ContinuousError):
        compute_t0(Uniform(-1.0, 2.0))


# ---------------------------------------------------------------------------
# regime detection / first best
# ---------------------------------------------------------------------------

def test_first_best_quadratic_matches_left_panel():
    sol = solve_first_best(UNIFORM, CostModel.quadratic(1.0, (-2.0, 1.0)))
    assert sol is not None and sol.regime == "first_best"
    assert sol.a_star(0.0) == pytest.approx(1.0)  # falsify to sqrt(gamma)
    for t in np.linspace(-2.0, 1.0, 301):
        expected_q = 1.0 if t >= 0 else 0.0
        assert sol.Q(t) == pytest.approx(expected_q, abs=1e-10)
        if t >= 0:
            assert sol.cost(t) == pytest.approx((1.0 - t) ** 2, abs=1e-10)


def test_first_best_linear_below_threshold():
    sol = solve_first_best(UNIFORM, CostModel.linear(0.9, (-2.0, 1.0)))
    assert sol is not None and sol.regime == "first_best"
    assert sol.a_star(0.5) == pytest.approx(0.9)
    assert sol.U(0.0) == pytest.approx(0.0, abs=1e-12)


def test_first_best_none_when_gaming_is_cheap():
    assert solve_first_best(UNIFORM, CostModel.linear(4.0, (-2.0, 1.0))) \
        is None
    assert solve_first_best(UNIFORM, CostModel.quadratic(4.0, (-2.0, 1.0))) \
        is None


def test_boundary_gamma_counts_as_first_best():
    sol = solve_first_best(UNIFORM, CostModel.quadratic(1.0, (-2.0, 1.0)))
    assert sol is not None
    sol = solve_first_best(UNIFORM, CostModel.linear(1.0, (-2.0, 1.0)))
    assert sol is not None


def test_interior_solvers_reject_first_best_gamma():
    with pytest.raises(RegimeError):
        solve_linear(UNIFORM, 0.5)
    with pytest.raises(RegimeError):
        solve_quadratic(UNIFORM, 0.9)


def test_solve_continuous_dispatch():
    assert solve_continuous(
        UNIFORM, CostModel.quadratic(0.8, (-2, 1))).regime == "first_best"
    assert solve_continuous(
        UNIFORM, CostModel.quadratic(4.0, (-2, 1))).regime == "interior"


# ---------------------------------------------------------------------------
# linear solver
# ---------------------------------------------------------------------------

def test_linear_uniform_gamma4():
    sol = solve_linear(UNIFORM, 4.0)
    assert sol.p_star == pytest.approx(0.5, abs=1e-12)
    assert sol.t_star == pytest.approx(-1.0, abs=1e-10)
    assert sol.Q(-0.5) == pytest.approx(0.125, abs=1e-12)


def test_linear_uniform_gamma15():
    sol = solve_linear(UNIFORM, 1.5)
    assert sol.p_star == pytest.approx(1.0)
    assert sol.t_star == pytest.approx(-0.5, abs=1e-12)
    assert sol.Q(-0.25) == pytest.approx(1.0 - 1.25 / 1.5, abs=1e-12)


@pytest.mark.parametrize("dist", ALL_DISTS, ids=lambda d: type(d).__name__)
@pytest.mark.parametrize("gamma", [1.5, 4.0, 8.0])
def test_linear_top_type_pays_nothing(dist, gamma):
    sol = solve_linear(dist, gamma)
    assert sol.a_star(dist.s_max) == dist.s_max
    assert sol.cost(dist.s_max) == 0.0
    assert sol.Q(dist.s_max) == pytest.approx(sol.p_star)
    assert sol.U(dist.s_max) == pytest.approx(sol.p_star)


# ---------------------------------------------------------------------------
# quadratic solver
# ---------------------------------------------------------------------------

def test_quadratic_uniform_gamma4_closed_forms():
    sol = solve_quadratic(UNIFORM, 4.0)
    assert sol.t0 == pytest.approx(-1.0, abs=1e-10)
    assert sol.t_star == pytest.approx(-1.0, abs=1e-10)
    assert sol.t_dagger == pytest.approx(-1.0 / 3.0, abs=1e-8)
    for t in np.linspace(-1.0, -1.0 / 3.0, 100):
        assert sol.a_star(t) == pytest.approx(1.5 * t - 0.5 / t, abs=1e-10)
    assert sol.p_star == pytest.approx(P_STAR_UNIFORM_QUAD_4, abs=1e-4)
    # consistent with the worked figure's constant level 2.43 / gamma
    assert sol.p_star == pytest.approx(2.43 / 4.0, abs=1e-3)


def test_quadratic_plateau_above_t_dagger():
    sol = solve_quadratic(UNIFORM, 4.0)
    for t in np.linspace(sol.t_dagger, 1.0, 50):
        assert sol.Q(t) == pytest.approx(sol.p_star, abs=1e-10)
        assert sol.a_star(t) == 1.0


def test_quadratic_clamps_cap_at_one():
    sol = solve_quadratic(UNIFORM, 1.5)
    assert sol.p_star == 1.0
    # U(t*) = 0 pins (s_max - t*)^2 = gamma here
    assert sol.t_star == pytest.approx(1.0 - math.sqrt(1.5), abs=1e-10)
    assert sol.U(sol.t_star) == pytest.approx(0.0, abs=1e-10)
    assert sol.t_star <= sol.t_dagger


def test_quadratic_refuses_non_mhr_distribution():
    xs = np.linspace(-2.0, 1.0, 31)
    bimodal = Tabulated(xs, 0.5 + 0.45 * np.cos(4.0 * xs))
    assert not check_mhr(bimodal).passes
    with pytest.raises(MonotonicityError, match="monotonicity unverified"):
        solve_quadratic(bimodal, 4.0)


# ---------------------------------------------------------------------------
# hazard-rate check
# ---------------------------------------------------------------------------

def test_mhr_uniform_passes():
    report = check_mhr(UNIFORM)
    assert report.passes
    # hazard of the uniform is 1/(1-t): spot check
    i = len(report.grid) // 2
    t = report.grid[i]
    assert report.hazard[i] == pytest.approx(1.0 / (1.0 - t), rel=1e-9)
    assert report.sufficient_quantity[i] == pytest.approx(2.0)


def test_mhr_truncated_exponential_passes():
    assert check_mhr(TEXP).passes


def test_mhr_bimodal_valley_fails():
    xs = np.linspace(-2.0, 1.0, 31)
    report = check_mhr(Tabulated(xs, 0.5 + 0.45 * np.cos(4.0 * xs)))
    assert not report.passes
    assert report.min_hazard_slope < -1e-8


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def test_discretize_uniform_quantiles():
    inst = discretize(UNIFORM, CostModel.linear(4.0, (-2.0, 1.0)), 3)
    values = [inst.space.score_value(t.score) for t in inst.space.types]
    assert values == pytest.approx([-1.5, -0.5, 0.5])
    assert all(inst.space.mass(t) == pytest.approx(1 / 3)
               for t in inst.space.types)
    top = inst.space.scores[-1]
    assert inst.space.score_value(top) == pytest.approx(1.0)
    # tabulated costs reproduce |a - t| / gamma
    t0 = inst.space.types[0]
    assert inst.costs.cost(top, t0) == pytest.approx(2.5 / 4.0)


def test_discretize_median_split():
    inst = discretize(TEXP, CostModel.linear(4.0, (-2.0, 1.0)), 2)
    values = [inst.space.score_value(t.score) for t in inst.space.types]
    assert values == pytest.approx([TEXP.quantile(0.25),
                                    TEXP.quantile(0.75)])


def test_discretize_lp_tracks_continuous_value():
    """13-type grid lands within 0.05 of the quadrature value; the gap
    shrinks monotonically along 7 -> 13 -> 25."""
    costs = CostModel.linear(4.0, (-2.0, 1.0))
    continuous_value = solve_linear(UNIFORM, 4.0).designer_value()
    # analytic check of the oracle itself: 5/72
    assert continuous_value == pytest.approx(5.0 / 72.0, abs=1e-10)
    gaps = []
    for n in (7, 13, 25):
        inst = discretize(UNIFORM, costs, n)
        lp = build_drm_lp(inst.space, inst.costs, inst.agent, inst.designer)
        sol = solve_lp(lp, mode="float")
        assert sol.status == "optimal" and sol.certified
        gaps.append(abs(sol.value - continuous_value))
    assert gaps[1] < 0.05
    assert gaps[0] > gaps[1] > gaps[2]


def test_discretize_rejects_tiny_grids():
    with pytest.raises(ContinuousError):
        discretize(UNIFORM, CostModel.linear(4.0, (-2.0, 1.0)), 1)


# ---------------------------------------------------------------------------
# solution export
# ---------------------------------------------------------------------------

def test_solution_table_roundtrip(tmp_path):
    sol = solve_quadratic(UNIFORM, 4.0)
    ts = np.linspace(-2.0, 1.0, 37)
    path = tmp_path / "solution.tsv"
    write_solution_table(sol, ts, path)
    data = read_solution_table(path)
    assert set(data) == {"t", "a_star", "Q_star", "C", "U", "cost"}
    np.testing.assert_allclose(data["t"], ts, atol=1e-10)
    np.testing.assert_allclose(data["Q_star"],
                               [sol.Q(t) for t in ts], atol=1e-10)
