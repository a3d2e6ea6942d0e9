"""Closed-form solvers for binary approval with a continuum of types.

Types equal natural scores on [s_min, s_max] with s_min < 0 < s_max and a
negative mean; the designer approves (value t) or rejects (value 0) and the
agent, regardless of type, wants approval.  Falsification costs are
|a-t|/gamma or (a-t)^2/gamma.

When falsifying from 0 to the top score costs more than the prize
(gamma <= raw cost of s_max from 0) the first-best is attainable; otherwise
the optimal mechanism caps approval at p* and screens with costly
falsification.  The interior quadratic solution needs a nondecreasing
hazard rate, which `check_mhr` verifies on a grid.

The envelope derivative C is kept in original-cost form, C(t) =
2(a*(t)-t)/gamma for quadratic costs, which is the actual derivative of the
agent's equilibrium value and reproduces the worked example's constant
approval level.  The truth-telling monotonicity requirement lives on the
modified-cost derivative 2 a*(t)/gamma, exposed separately as `C_ic`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._numerics import NumericsError, bisect, simpson
from .model import (
    AgentPayoff,
    AgentType,
    CostModel,
    DesignerPayoff,
    FiniteTypeSpace,
    Instance,
)

__all__ = [
    "Distribution",
    "Uniform",
    "TruncatedExponential",
    "Triangular",
    "Tabulated",
    "ContinuousSolution",
    "ContinuousError",
    "RegimeError",
    "MonotonicityError",
    "MhrReport",
    "compute_t0",
    "check_mhr",
    "solve_first_best",
    "solve_linear",
    "solve_quadratic",
    "solve_continuous",
    "discretize",
    "write_solution_table",
]

QUAD_TOL = 1e-10
ROOT_XTOL = 1e-12


class ContinuousError(ValueError):
    """Bad input to a continuous solver."""


class RegimeError(ContinuousError):
    """Solver called outside its gamma regime."""


class MonotonicityError(ContinuousError):
    """Hazard-rate check failed; the quadratic solution is refused."""


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

class Distribution:
    """Type distribution on [s_min, s_max] with full-support density."""

    s_min: float
    s_max: float

    def pdf(self, t: float) -> float:
        raise NotImplementedError

    def cdf(self, t: float) -> float:
        raise NotImplementedError

    def quantile(self, p: float) -> float:
        return bisect(lambda t: self.cdf(t) - p, self.s_min, self.s_max,
                      xtol=1e-13)

    @property
    def mean(self) -> float:
        return self.tail_expectation(self.s_min)

    def tail_expectation(self, t: float) -> float:
        """integral of z f(z) dz from t to s_max."""
        return simpson(lambda z: z * self.pdf(z), t, self.s_max, tol=1e-12)

    def pdf_derivative(self, t: float) -> float:
        h = 1e-4 * (self.s_max - self.s_min)
        lo = max(self.s_min, t - h)
        hi = min(self.s_max, t + h)
        return (self.pdf(hi) - self.pdf(lo)) / (hi - lo)

    def validate(self) -> list[str]:
        problems = []
        if not self.s_min < 0 < self.s_max:
            problems.append(
                f"support [{self.s_min}, {self.s_max}] must straddle 0")
        grid = np.linspace(self.s_min, self.s_max, 203)[1:-1]
        if min(self.pdf(float(t)) for t in grid) <= 0:
            problems.append("density must be strictly positive on support")
        total = self.cdf(self.s_max)
        if abs(total - 1.0) > 1e-10:
            problems.append(f"density integrates to {total}, not 1")
        return problems


@dataclass(frozen=True)
class Uniform(Distribution):
    s_min: float
    s_max: float

    def pdf(self, t):
        return 1.0 / (self.s_max - self.s_min)

    def cdf(self, t):
        w = self.s_max - self.s_min
        return min(1.0, max(0.0, (t - self.s_min) / w))

    def quantile(self, p):
        return self.s_min + p * (self.s_max - self.s_min)

    @property
    def mean(self):
        return 0.5 * (self.s_min + self.s_max)

    def tail_expectation(self, t):
        return (self.s_max ** 2 - t ** 2) / (2.0 * (self.s_max - self.s_min))

    def pdf_derivative(self, t):
        return 0.0


@dataclass(frozen=True)
class TruncatedExponential(Distribution):
    """Density proportional to exp(-rate * (t - s_min)) on the support."""

    s_min: float
    s_max: float
    rate: float = 1.0

    @property
    def _z(self) -> float:
        return 1.0 - math.exp(-self.rate * (self.s_max - self.s_min))

    def pdf(self, t):
        return self.rate * math.exp(-self.rate * (t - self.s_min)) / self._z

    def cdf(self, t):
        t = min(max(t, self.s_min), self.s_max)
        return (1.0 - math.exp(-self.rate * (t - self.s_min))) / self._z

    def quantile(self, p):
        return self.s_min - math.log(1.0 - p * self._z) / self.rate

    @property
    def mean(self):
        return self.tail_expectation(self.s_min)

    def tail_expectation(self, t):
        lam = self.rate

        def antiderivative(z):
            return -(z + 1.0 / lam) * math.exp(-lam * (z - self.s_min))

        return (antiderivative(self.s_max) - antiderivative(t)) / self._z

    def pdf_derivative(self, t):
        return -self.rate * self.pdf(t)


@dataclass(frozen=True)
class Triangular(Distribution):
    s_min: float
    s_max: float
    mode: float

    def __post_init__(self):
        if not self.s_min < self.mode < self.s_max:
            raise ContinuousError("mode must lie strictly inside the support")

    def _norms(self):
        w = self.s_max - self.s_min
        return w * (self.mode - self.s_min), w * (self.s_max - self.mode)

    def pdf(self, t):
        n1, n2 = self._norms()
        if t <= self.mode:
            return 2.0 * (t - self.s_min) / n1
        return 2.0 * (self.s_max - t) / n2

    def cdf(self, t):
        t = min(max(t, self.s_min), self.s_max)
        n1, n2 = self._norms()
        if t <= self.mode:
            return (t - self.s_min) ** 2 / n1
        return 1.0 - (self.s_max - t) ** 2 / n2

    def quantile(self, p):
        n1, n2 = self._norms()
        split = self.cdf(self.mode)
        if p <= split:
            return self.s_min + math.sqrt(p * n1)
        return self.s_max - math.sqrt((1.0 - p) * n2)

    @property
    def mean(self):
        return (self.s_min + self.mode + self.s_max) / 3.0

    def tail_expectation(self, t):
        n1, n2 = self._norms()
        hi = self.s_max

        def upper_piece(x):  # integral of z*(hi-z)*2/n2 from x to hi
            return 2.0 * (hi ** 3 / 6.0 - hi * x ** 2 / 2.0 + x ** 3 / 3.0) / n2

        if t >= self.mode:
            return upper_piece(t)
        lo = self.s_min

        def lower_antiderivative(z):  # of z*(z-lo)*2/n1
            return 2.0 * (z ** 3 / 3.0 - lo * z ** 2 / 2.0) / n1

        return (upper_piece(self.mode)
                + lower_antiderivative(self.mode) - lower_antiderivative(t))

    def pdf_derivative(self, t):
        n1, n2 = self._norms()
        return 2.0 / n1 if t < self.mode else -2.0 / n2


class Tabulated(Distribution):
    """Grid density with linear interpolation; normalized at construction.

    The cdf accumulates trapezoids and tail expectations integrate the
    piecewise-linear density cell-exactly.
    """

    def __init__(self, grid: Sequence[float], density: Sequence[float]):
        ts = np.asarray(grid, dtype=float)
        fs = np.asarray(density, dtype=float)
        if ts.ndim != 1 or ts.shape != fs.shape or len(ts) < 2:
            raise ContinuousError("grid and density must be 1-d, same length")
        if np.any(np.diff(ts) <= 0):
            raise ContinuousError("grid must be strictly increasing")
        if np.any(fs <= 0):
            raise ContinuousError("tabulated density must be positive")
        total = float(np.trapezoid(fs, ts))
        self._ts = ts
        self._fs = fs / total
        self._cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self._fs[1:] + self._fs[:-1])
                              * np.diff(ts))])
        self.s_min = float(ts[0])
        self.s_max = float(ts[-1])

    def pdf(self, t):
        return float(np.interp(t, self._ts, self._fs))

    def cdf(self, t):
        t = min(max(t, self.s_min), self.s_max)
        i = int(np.searchsorted(self._ts, t, side="right") - 1)
        i = min(i, len(self._ts) - 2)
        t0, t1 = self._ts[i], self._ts[i + 1]
        f0, f1 = self._fs[i], self._fs[i + 1]
        dt = t - t0
        slope = (f1 - f0) / (t1 - t0)
        return float(self._cum[i] + f0 * dt + 0.5 * slope * dt * dt)

    def tail_expectation(self, t):
        t = min(max(t, self.s_min), self.s_max)

        def cell(lo, hi, flo, fhi):
            # integral of z * (linear density) over [lo, hi]
            if hi <= lo:
                return 0.0
            slope = (fhi - flo) / (hi - lo)
            inter = flo - slope * lo

            def anti(z):
                return inter * z * z / 2.0 + slope * z ** 3 / 3.0

            return anti(hi) - anti(lo)

        i = int(np.searchsorted(self._ts, t, side="right") - 1)
        i = min(i, len(self._ts) - 2)
        total = cell(t, self._ts[i + 1], self.pdf(t), self._fs[i + 1])
        for j in range(i + 1, len(self._ts) - 1):
            total += cell(self._ts[j], self._ts[j + 1],
                          self._fs[j], self._fs[j + 1])
        return float(total)

    @property
    def mean(self):
        return self.tail_expectation(self.s_min)


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------

def _require_negative_mean(dist: Distribution) -> None:
    if not dist.mean < 0:
        raise ContinuousError(
            f"solver assumes a negative mean type; got {dist.mean}")


def compute_t0(dist: Distribution) -> float:
    """Type above which the conditional mean is zero.

    Root of g(t) = integral_t^{s_max} z f(z) dz, which is strictly
    increasing on [s_min, 0] with g(s_min) = mean < 0 and g(0) > 0.
    """
    _require_negative_mean(dist)
    return bisect(dist.tail_expectation, dist.s_min, 0.0,
                  xtol=ROOT_XTOL, ftol=1e-12)


@dataclass
class MhrReport:
    passes: bool
    min_hazard_slope: float
    grid: np.ndarray
    hazard: np.ndarray
    sufficient_quantity: np.ndarray  # 2 + f'(t)(1-F(t))/f(t)^2


def check_mhr(dist: Distribution, step: float = 1e-3,
              slope_tol: float = -1e-8) -> MhrReport:
    """Grid check that the hazard rate f/(1-F) never decreases.

    Points where 1-F underflows are dropped from the top of the grid.
    """
    n = max(3, int(round((dist.s_max - dist.s_min) / step)) + 1)
    grid = np.linspace(dist.s_min, dist.s_max, n)
    keep, hazard, suff = [], [], []
    for t in grid:
        t = float(t)
        surv = 1.0 - dist.cdf(t)
        if surv <= 1e-12:
            break
        f = dist.pdf(t)
        if f <= 1e-300:  # density vanishing at an endpoint (triangular)
            continue
        keep.append(t)
        hazard.append(f / surv)
        suff.append(2.0 + dist.pdf_derivative(t) * surv / (f * f))
    keep = np.asarray(keep)
    hazard = np.asarray(hazard)
    slopes = np.diff(hazard) / np.diff(keep)
    min_slope = float(slopes.min()) if len(slopes) else 0.0
    return MhrReport(passes=bool(min_slope >= slope_tol),
                     min_hazard_slope=min_slope,
                     grid=keep, hazard=hazard,
                     sufficient_quantity=np.asarray(suff))


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

@dataclass
class ContinuousSolution:
    """Optimal mechanism in piecewise closed form.

    ``a_star``/``Q``/``C``/``U``/``cost`` are scalar functions of the type;
    ``C`` is the envelope derivative of U (original-cost form) and ``C_ic``
    the modified-cost derivative whose monotonicity truth-telling needs.
    """

    regime: str  # first_best | interior
    cost_kind: str  # linear | quadratic
    gamma: float
    dist: Distribution
    t0: float
    t_star: float
    t_dagger: float | None
    p_star: float
    a_star: Callable[[float], float] = field(repr=False)
    C: Callable[[float], float] = field(repr=False)
    U: Callable[[float], float] = field(repr=False)
    Q: Callable[[float], float] = field(repr=False)
    C_ic: Callable[[float], float] = field(repr=False)

    def cost(self, t: float) -> float:
        """Scaled falsification cost on path: c(a*(t), t)/gamma-scaled."""
        a = self.a_star(t)
        if self.cost_kind == "linear":
            return abs(a - t) / self.gamma
        return (a - t) ** 2 / self.gamma

    def sample(self, ts: Sequence[float]) -> dict[str, np.ndarray]:
        ts = np.asarray(ts, dtype=float)
        u = np.array([self.U(t) for t in ts])
        cost = np.array([self.cost(t) for t in ts])
        q = np.where(ts < self.t_star, 0.0, u + cost)
        return {
            "t": ts,
            "a_star": np.array([self.a_star(t) for t in ts]),
            "Q_star": q,
            "C": np.array([self.C(t) for t in ts]),
            "U": u,
            "cost": cost,
        }

    def designer_value(self) -> float:
        """integral of Q(t) t f(t) dt over the support."""
        pieces = sorted({self.dist.s_min, self.t_star, 0.0,
                         self.t_dagger if self.t_dagger is not None else 0.0,
                         self.dist.s_max})

        def integrand(t):
            return self.Q(t) * t * self.dist.pdf(t)

        total = 0.0
        for lo, hi in zip(pieces, pieces[1:]):
            if hi > lo:
                total += simpson(integrand, lo, hi, tol=QUAD_TOL)
        return total


def _regime_threshold(cost_kind: str, s_max: float) -> float:
    return s_max if cost_kind == "linear" else s_max ** 2


def solve_first_best(dist: Distribution, costs: CostModel
                     ) -> ContinuousSolution | None:
    """First-best solution, or None when gamma makes it unattainable.

    Attainable iff falsifying from 0 to the top score costs at least the
    prize: gamma <= s_max (linear) or gamma <= s_max^2 (quadratic).  The
    boundary gamma is classified first-best (type 0 exactly indifferent).
    """
    if not costs.parametric:
        raise ContinuousError("continuous solvers need a parametric cost")
    _require_negative_mean(dist)
    gamma = float(costs.gamma)
    s_max = dist.s_max
    if gamma > _regime_threshold(costs.kind, s_max):
        return None
    t0 = compute_t0(dist)
    prize_score = gamma if costs.kind == "linear" else math.sqrt(gamma)

    def a_star(t):
        if 0.0 <= t < prize_score:
            return prize_score
        return t

    def Q(t):
        return 1.0 if t >= 0.0 else 0.0

    if costs.kind == "linear":
        def C(t):
            return 1.0 / gamma if 0.0 <= t < prize_score else 0.0

        def U(t):
            if t < 0.0:
                return 0.0
            return min(t, prize_score) / gamma

        def C_ic(t):
            return C(t)
    else:
        def C(t):
            if 0.0 <= t < prize_score:
                return 2.0 * (prize_score - t) / gamma
            return 0.0

        def U(t):
            if t < 0.0:
                return 0.0
            if t >= prize_score:
                return 1.0
            return 1.0 - (prize_score - t) ** 2 / gamma

        def C_ic(t):
            return 2.0 * a_star(t) / gamma

    return ContinuousSolution(
        regime="first_best", cost_kind=costs.kind, gamma=gamma, dist=dist,
        t0=t0, t_star=0.0, t_dagger=None, p_star=1.0,
        a_star=a_star, C=C, U=U, Q=Q, C_ic=C_ic)


def solve_linear(dist: Distribution, gamma: float) -> ContinuousSolution:
    """Interior optimal mechanism for cost |a - t| / gamma.

    All positive types pool at the top score with approval p* =
    min(1, (s_max - t0)/gamma); negative types above t* are approved with
    probability p* - (s_max - t)/gamma at their natural score.
    """
    gamma = float(gamma)
    _require_negative_mean(dist)
    s_max = dist.s_max
    if gamma <= _regime_threshold("linear", s_max):
        raise RegimeError(
            f"gamma={gamma} <= s_max={s_max}: first-best regime; "
            "use solve_first_best")
    t0 = compute_t0(dist)
    if s_max - t0 <= gamma:
        p_star, t_star = (s_max - t0) / gamma, t0
    else:
        p_star, t_star = 1.0, s_max - gamma

    def a_star(t):
        return s_max if t >= 0.0 else t

    def C(t):
        return 1.0 / gamma if t >= t_star else 0.0

    def U(t):
        if t < t_star:
            return 0.0
        return p_star - (s_max - t) / gamma

    def Q(t):
        if t < t_star:
            return 0.0
        if t >= 0.0:
            return p_star
        return p_star - (s_max - t) / gamma

    def C_ic(t):
        return C(t)

    return ContinuousSolution(
        regime="interior", cost_kind="linear", gamma=gamma, dist=dist,
        t0=t0, t_star=t_star, t_dagger=None, p_star=p_star,
        a_star=a_star, C=C, U=U, Q=Q, C_ic=C_ic)


def solve_quadratic(dist: Distribution, gamma: float) -> ContinuousSolution:
    """Interior optimal mechanism for cost (a - t)^2 / gamma.

    The pointwise optimal target a*(t) = t - tail(t)/(t f(t)) is
    gamma-free; it crosses s_max at t_dagger < 0.  The approval cap p* is
    the integral of the envelope derivative from t*; if the candidate with
    t* = t0 exceeds 1, p* is clamped to 1 and t* solves U(t*) = 0 (which
    can land above the raw crossing point, in which case every approved
    type is sent straight to the top score).
    """
    gamma = float(gamma)
    _require_negative_mean(dist)
    s_max = dist.s_max
    if gamma <= _regime_threshold("quadratic", s_max):
        raise RegimeError(
            f"gamma={gamma} <= s_max^2={s_max ** 2}: first-best regime; "
            "use solve_first_best")
    report = check_mhr(dist)
    if not report.passes:
        raise MonotonicityError(
            "monotonicity unverified: hazard rate decreases "
            f"(min slope {report.min_hazard_slope:.3g}); solution refused")
    t0 = compute_t0(dist)

    def a_point(t):
        return t - dist.tail_expectation(t) / (t * dist.pdf(t))

    # raw crossing of the falsification target with the top score
    hi_bracket = -1e-9 * max(1.0, abs(dist.s_min))
    if a_point(hi_bracket) <= s_max:
        raise ContinuousError("falsification target never reaches the top "
                              "score; cannot locate t_dagger")
    try:
        t_dag_raw = bisect(lambda t: a_point(t) - s_max, t0, hi_bracket,
                           xtol=ROOT_XTOL)
    except NumericsError as exc:
        raise ContinuousError(f"no root for t_dagger: {exc}") from None
    # the bracketing function must be single-crossing; spot-check it
    samples = np.linspace(t0, t_dag_raw, 7)[1:-1]
    values = [a_point(float(t)) for t in samples]
    if any(values[i] > values[i + 1] + 1e-7 for i in range(len(values) - 1)):
        raise MonotonicityError("falsification target is not monotone on "
                                "[t0, t_dagger] despite the hazard check")

    def gap(t):  # a*(t) - t, capped at the top score
        if t >= t_dag_raw:
            return s_max - t
        return -dist.tail_expectation(t) / (t * dist.pdf(t))

    def integral_C(t):
        """integral of C from t to s_max (original-cost envelope)."""
        if t >= t_dag_raw:
            return (s_max - t) ** 2 / gamma
        head = simpson(lambda z: 2.0 * gap(z) / gamma, t, t_dag_raw,
                       tol=QUAD_TOL)
        return head + (s_max - t_dag_raw) ** 2 / gamma

    candidate = integral_C(t0)
    if candidate <= 1.0:
        p_star, t_star = candidate, t0
    else:
        p_star = 1.0
        t_star = bisect(lambda t: integral_C(t) - 1.0, t0, s_max,
                        xtol=ROOT_XTOL)
    t_dagger = max(t_dag_raw, t_star)

    def a_star(t):
        if t < t_star:
            return t
        if t >= t_dag_raw:
            return s_max
        return a_point(t)

    def C(t):
        if t < t_star:
            return 0.0
        return 2.0 * gap(t) / gamma

    def U(t):
        if t < t_star:
            return 0.0
        return p_star - integral_C(t)

    def Q(t):
        if t < t_star:
            return 0.0
        return p_star - integral_C(t) + gap(t) ** 2 / gamma

    def C_ic(t):
        return 2.0 * a_star(t) / gamma

    return ContinuousSolution(
        regime="interior", cost_kind="quadratic", gamma=gamma, dist=dist,
        t0=t0, t_star=t_star, t_dagger=t_dagger, p_star=p_star,
        a_star=a_star, C=C, U=U, Q=Q, C_ic=C_ic)


def solve_continuous(dist: Distribution, costs: CostModel
                     ) -> ContinuousSolution:
    """Regime-detecting front end over the three solvers."""
    solution = solve_first_best(dist, costs)
    if solution is not None:
        return solution
    if costs.kind == "linear":
        return solve_linear(dist, float(costs.gamma))
    return solve_quadratic(dist, float(costs.gamma))


# ---------------------------------------------------------------------------
# discretization bridge to the finite LP
# ---------------------------------------------------------------------------

def discretize(dist: Distribution, costs: CostModel, n_types: int,
               n_scores: int | None = None) -> Instance:
    """Equal-mass finite instance for cross-checking against the LP.

    Types sit at the (2i-1)/(2n) quantiles with mass 1/n each; the score
    grid is the type grid plus the top score (plus further quantile points
    when ``n_scores`` asks for more).  Decision values are t for approval,
    0 for rejection, without a loss term, and the agent values approval
    at 1.
    """
    if n_types < 2 or (n_scores is not None and n_scores < n_types + 1):
        raise ContinuousError("need n_types >= 2 and n_scores > n_types")
    if not costs.parametric:
        raise ContinuousError("discretize needs a parametric cost model")
    from fractions import Fraction

    points = [dist.quantile((2 * i + 1) / (2 * n_types))
              for i in range(n_types)]
    score_vals = list(points)
    if n_scores is not None and n_scores > n_types + 1:
        extra = n_scores - n_types - 1
        for j in range(extra):
            q = (j + 1) / (extra + 1)
            v = dist.quantile(q)
            score_vals.append(v)
    score_vals = sorted(set(score_vals) | {dist.s_max})

    def sid(v: float) -> str:
        return f"s{score_vals.index(v):03d}"

    types = tuple(AgentType(f"t{i:03d}", sid(points[i]))
                  for i in range(n_types))
    space = FiniteTypeSpace(
        types=types,
        scores=tuple(sid(v) for v in score_vals),
        outcomes=("reject", "approve"),
        prior={t: Fraction(1, n_types) for t in types},
        score_values={sid(v): v for v in score_vals},
    )
    table = {}
    for t, tv in zip(types, points):
        for a, av in zip(space.scores, score_vals):
            table[(a, t)] = costs.raw_cost(av, tv) / float(costs.gamma)
    agent = AgentPayoff.unit_approval(space, approve="approve")
    designer = DesignerPayoff(
        decision_value={(x, t): (tv if x == "approve" else 0.0)
                        for t, tv in zip(types, points)
                        for x in space.outcomes},
        loss_coefficient=None)
    return Instance(space=space, costs=CostModel.tabulated(table),
                    agent=agent, designer=designer)


# ---------------------------------------------------------------------------
# solution export (the data behind the worked example's figure)
# ---------------------------------------------------------------------------

def write_solution_table(solution: ContinuousSolution, ts: Sequence[float],
                         path) -> None:
    cols = solution.sample(ts)
    names = ["t", "a_star", "Q_star", "C", "U", "cost"]
    lines = ["\t".join(names)]
    for i in range(len(cols["t"])):
        lines.append("\t".join(
            format(float(cols[n][i]), ".12g") for n in names))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_solution_table(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        names = fh.readline().strip().split("\t")
        rows = [[float(v) for v in line.split("\t")]
                for line in fh if line.strip()]
    data = np.asarray(rows)
    return {name: data[:, i] for i, name in enumerate(names)}
