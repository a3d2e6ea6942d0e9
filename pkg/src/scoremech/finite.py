"""Finite-type mechanism design as a linear program, plus canonicalizations.

The designer's problem over direct recommendation mechanisms is bilinear in
the decomposition (q, rho).  The solver therefore works in joint variables

    z(x, a | t) = rho(a | t) * q(x | a, t)

under which the per-type normalization, ex-post participation, truth-telling
and the objective are all linear.  Truth-telling carries a positive part
(the deviator may quit after each recommendation), encoded with one
auxiliary variable w(a; t, t') per deviation pair and score:

    U(t) >= sum_a w(a; t, t')
    w(a; t, t') >= sum_x z(x, a | t') v(x, t) - c(a, t) sum_x z(x, a | t')
    w(a; t, t') >= outside(t) * sum_x z(x, a | t')

Minimal feasible w reproduces the sum of positive parts exactly, so the
projection of the feasible set onto z is precisely the set of incentive
compatible mechanisms.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Sequence

from .lpcore import EQUAL, GREATER, LinearProgram, LpSolution, solve_lp
from .model import (
    SUPPORT_TOL,
    AgentPayoff,
    AgentType,
    CostModel,
    DesignerPayoff,
    FiniteMechanism,
    FiniteTypeSpace,
    Instance,
    ModelError,
    ScoreBasedRule,
)

__all__ = [
    "JointVariableIndex",
    "build_drm_lp",
    "extract_mechanism",
    "evaluate_mechanism",
    "solve_drm",
    "derandomize_decision_rules",
    "derive_drm",
    "reduce_to_score_based",
    "monotone_rebalance",
    "joint_law_drm",
    "joint_law_indirect",
    "write_mechanism_table",
    "read_mechanism_table",
]


def _on_support(r) -> bool:
    if isinstance(r, (int, Fraction)):
        return r > 0
    return r > SUPPORT_TOL


class JointVariableIndex:
    """Bijection between LP columns and the z / w variable blocks."""

    def __init__(self, space: FiniteTypeSpace):
        self.space = space
        self._ti = {t: i for i, t in enumerate(space.types)}
        self._ai = {a: i for i, a in enumerate(space.scores)}
        self._xi = {x: i for i, x in enumerate(space.outcomes)}
        self.pairs = [(t, tp) for t in space.types
                      for tp in space.types if tp != t]
        self._pi = {p: i for i, p in enumerate(self.pairs)}
        self.n_z = len(space.types) * len(space.scores) * len(space.outcomes)
        self.n_vars = self.n_z + len(self.pairs) * len(space.scores)

    def z(self, x: str, a: str, t: AgentType) -> int:
        s = self.space
        return ((self._ti[t] * len(s.scores) + self._ai[a])
                * len(s.outcomes) + self._xi[x])

    def w(self, a: str, t: AgentType, tp: AgentType) -> int:
        return (self.n_z + self._pi[(t, tp)] * len(self.space.scores)
                + self._ai[a])

    def z_triple(self, idx: int) -> tuple[str, str, AgentType]:
        s = self.space
        xi = idx % len(s.outcomes)
        ai = (idx // len(s.outcomes)) % len(s.scores)
        ti = idx // (len(s.outcomes) * len(s.scores))
        return s.outcomes[xi], s.scores[ai], s.types[ti]


def build_drm_lp(space: FiniteTypeSpace, costs: CostModel,
                 agent: AgentPayoff, designer: DesignerPayoff,
                 outside_option: Mapping[AgentType, object] | None = None
                 ) -> LinearProgram:
    """LP over z(x,a|t) >= 0 whose optimum is the designer's best DRM value."""
    if costs.kind != "tabulated":
        raise ModelError("the DRM solver needs a finite (tabulated) cost model")
    idx = JointVariableIndex(space)
    outside = outside_option or {}

    def ubar(t):
        return outside.get(t, 0)

    objective = [0] * idx.n_vars
    for t in space.types:
        f = space.mass(t)
        for a in space.scores:
            loss = designer.loss(costs.cost(a, t))
            for x in space.outcomes:
                objective[idx.z(x, a, t)] = f * (designer.dv(x, t) - loss)

    constraints: list[tuple] = []
    # one unit of joint mass per type report
    for t in space.types:
        row = {idx.z(x, a, t): 1 for a in space.scores for x in space.outcomes}
        constraints.append((row, EQUAL, 1))
    # ex-post participation, multiplied through by rho(a|t)
    for t in space.types:
        for a in space.scores:
            gate = costs.cost(a, t) + ubar(t)
            row = {}
            for x in space.outcomes:
                row[idx.z(x, a, t)] = agent.v(x, t) - gate
            constraints.append((row, GREATER, 0))
    # truth-telling with per-recommendation quitting
    for t, tp in idx.pairs:
        row = {}
        for a in space.scores:
            c = costs.cost(a, t)
            for x in space.outcomes:
                row[idx.z(x, a, t)] = agent.v(x, t) - c
            row[idx.w(a, t, tp)] = -1
        constraints.append((row, GREATER, 0))
        for a in space.scores:
            c = costs.cost(a, t)
            row = {idx.w(a, t, tp): 1}
            for x in space.outcomes:
                row[idx.z(x, a, tp)] = -(agent.v(x, t) - c)
            constraints.append((row, GREATER, 0))
            if ubar(t) != 0:
                row = {idx.w(a, t, tp): 1}
                for x in space.outcomes:
                    row[idx.z(x, a, tp)] = -ubar(t)
                constraints.append((row, GREATER, 0))

    return LinearProgram(objective=objective, constraints=constraints)


def extract_mechanism(space: FiniteTypeSpace,
                      solution: LpSolution) -> FiniteMechanism:
    """Recover (q, rho) from an optimal joint-variable assignment."""
    if not solution.optimal:
        raise ModelError(f"cannot extract from a {solution.status} solution")
    idx = JointVariableIndex(space)
    z = solution.assignment
    decision = {}
    recommendation = {}
    for t in space.types:
        total = 0
        for a in space.scores:
            r = sum(z[idx.z(x, a, t)] for x in space.outcomes)
            recommendation[(a, t)] = r
            total += r
            if _on_support(r):
                for x in space.outcomes:
                    decision[(x, a, t)] = z[idx.z(x, a, t)] / r
        if not _on_support(total):
            raise ModelError(f"degenerate all-zero joint row for {t}")
    return FiniteMechanism(decision=decision, recommendation=recommendation)


def evaluate_mechanism(space: FiniteTypeSpace, costs: CostModel,
                       agent: AgentPayoff, designer: DesignerPayoff,
                       mech: FiniteMechanism):
    """Exact expectations under the prior.

    Returns (designer value, {t: U(t)}, {t: expected falsification cost}).
    """
    value = 0
    utilities = {}
    exp_costs = {}
    for t in space.types:
        u = 0
        ec = 0
        contrib = 0
        for a in space.scores:
            r = mech.rho(a, t)
            if not _on_support(r):
                continue
            c = costs.cost(a, t)
            ev_agent = sum(mech.q(x, a, t) * agent.v(x, t)
                           for x in space.outcomes)
            ev_designer = sum(mech.q(x, a, t) * designer.dv(x, t)
                              for x in space.outcomes)
            u += r * (ev_agent - c)
            ec += r * c
            contrib += r * (ev_designer - designer.loss(c))
        utilities[t] = u
        exp_costs[t] = ec
        value += space.mass(t) * contrib
    return value, utilities, exp_costs


def solve_drm(inst: Instance, mode: str = "exact"):
    """Build, solve and extract in one call.

    Returns (lp solution, mechanism).  Raises ModelError when the LP is not
    solvable to optimality.
    """
    lp = build_drm_lp(inst.space, inst.costs, inst.agent, inst.designer,
                      inst.outside_option)
    sol = solve_lp(lp, mode=mode)
    if not sol.optimal:
        raise ModelError(f"DRM solve failed: {sol.status}")
    return sol, extract_mechanism(inst.space, sol)


# ---------------------------------------------------------------------------
# canonicalization constructions
# ---------------------------------------------------------------------------

def derandomize_decision_rules(
        randomized: Mapping[AgentType, Sequence[tuple]]) -> FiniteMechanism:
    """Collapse a randomization over (score-based rule, score) pairs.

    ``randomized`` maps each type to a finite mixture given as
    (weight, ScoreBasedRule, score) triples.  The collapsed mechanism keeps
    the score marginal as its recommendation and averages the rules'
    decisions at each recommended score; it is payoff-equivalent to the
    input type by type.  A zero-mass score contributes no decision entry
    (its rules' rows are dropped).
    """
    decision = {}
    recommendation = {}
    for t, mixture in randomized.items():
        t = AgentType(*t)
        total = sum(w for w, _, _ in mixture)
        if abs(float(total) - 1.0) > 1e-12:
            raise ModelError(f"mixture for {t} has total mass {total}")
        by_score: dict[str, list[tuple]] = {}
        for w, rule, a in mixture:
            if not any(aa == a for _, aa in rule.decision):
                raise ModelError(
                    f"rule recommended at {a!r} defines no decision there")
            by_score.setdefault(a, []).append((w, rule))
        for a, parts in by_score.items():
            mass = sum(w for w, _ in parts)
            recommendation[(a, t)] = mass
            if not _on_support(mass):
                continue
            outcomes = {x for _, rule in parts for (x, aa) in rule.decision}
            for x in outcomes:
                decision[(x, a, t)] = sum(
                    w * rule.decision.get((x, a), 0)
                    for w, rule in parts) / mass
    return FiniteMechanism(decision=decision, recommendation=recommendation)


def derive_drm(indirect: Mapping[object, Sequence[tuple]],
               reporting: Mapping[AgentType, Mapping[object, object]],
               action: Mapping[object, Mapping[str, object]]
               ) -> FiniteMechanism:
    """Compose reporting, indirect mechanism and action rule into a DRM.

    ``indirect`` maps an input report to a mixture of (weight,
    ScoreBasedRule, output message); ``reporting`` maps types to
    distributions over reports; ``action`` maps output messages to
    distributions over submitted scores.  The returned direct mechanism
    induces exactly the same joint law over outcomes, types and scores.
    """
    for mixture in indirect.values():
        for _, _, msg in mixture:
            if msg not in action:
                raise ModelError(f"message {msg!r} has no action rule")
    randomized: dict[AgentType, list[tuple]] = {}
    for t, reports in reporting.items():
        t = AgentType(*t)
        mixture = []
        for r, pr in reports.items():
            if pr == 0:
                continue
            if r not in indirect:
                raise ModelError(f"report {r!r} not handled by the mechanism")
            for w, rule, msg in indirect[r]:
                for a, pa in action[msg].items():
                    if w * pr * pa != 0:
                        mixture.append((pr * w * pa, rule, a))
        randomized[t] = mixture
    return derandomize_decision_rules(randomized)


def joint_law_drm(space: FiniteTypeSpace, mech: FiniteMechanism) -> dict:
    """Per-type law over (outcome, score): P(x, a | t) = rho * q."""
    law = {}
    for t in space.types:
        for a in space.scores:
            r = mech.rho(a, t)
            if not _on_support(r):
                continue
            for x in space.outcomes:
                if (x, a, t) in mech.decision:
                    p = r * mech.q(x, a, t)
                    if p != 0:
                        law[(x, a, t)] = law.get((x, a, t), 0) + p
    return law


def joint_law_indirect(types: Sequence[AgentType],
                       indirect: Mapping[object, Sequence[tuple]],
                       reporting: Mapping[AgentType, Mapping[object, object]],
                       action: Mapping[object, Mapping[str, object]]) -> dict:
    """Per-type law over (outcome, score) induced by (pi, sigma, delta)."""
    law = {}
    for t in types:
        t = AgentType(*t)
        for r, pr in reporting[t].items():
            if pr == 0:
                continue
            for w, rule, msg in indirect[r]:
                for a, pa in action[msg].items():
                    mass = pr * w * pa
                    if mass == 0:
                        continue
                    for (x, aa), q in rule.decision.items():
                        if aa == a and q != 0:
                            key = (x, a, t)
                            law[key] = law.get(key, 0) + mass * q
    return law


def reduce_to_score_based(space: FiniteTypeSpace, costs: CostModel,
                          agent: AgentPayoff, designer: DesignerPayoff,
                          mech: FiniteMechanism, tol: float = 1e-9):
    """Collapse an IC mechanism with deterministic recommendations.

    Binary outcomes only.  Types sharing a recommended score are forced
    indifferent by truth-telling, so their on-path lotteries coincide (up
    to ``tol``); the returned rule keeps, per score, the candidate lottery
    the designer prefers.  Scores nobody is sent to get the deterrent null
    row (all mass on the agent-worst outcome), which preserves incentive
    compatibility.  Returns (rule, {type: submitted score}).
    """
    if len(space.outcomes) != 2:
        raise ModelError("score-based reduction requires binary outcomes")
    assignment: dict[AgentType, str] = {}
    for t in space.types:
        target = None
        for a in space.scores:
            if mech.rho(a, t) >= 1 - SUPPORT_TOL:
                target = a
                break
        if target is None:
            raise ModelError(
                f"recommendation for {t} is not deterministic")
        assignment[t] = target

    # agent-worst outcome (the null/deterrent row for unused scores)
    def avg_agent_value(x):
        return sum(space.mass(t) * agent.v(x, t) for t in space.types)

    null_outcome = min(space.outcomes, key=lambda x: float(avg_agent_value(x)))
    top_outcome = [x for x in space.outcomes if x != null_outcome][0]
    for t in space.types:
        if not agent.v(top_outcome, t) > agent.v(null_outcome, t):
            raise ModelError(
                f"{t} does not strictly prefer {top_outcome!r}; the binary "
                "reduction needs a common preferred outcome")

    decision = {}
    for a in space.scores:
        users = [t for t in space.types if assignment[t] == a]
        if not users:
            decision[(null_outcome, a)] = 1
            decision[(top_outcome, a)] = 0
            continue
        approvals = [mech.q(top_outcome, a, t) for t in users]
        spread = max(approvals) - min(approvals)
        if float(spread) > tol:
            raise ModelError(
                f"input not IC: types sharing score {a!r} are not "
                f"indifferent (approval spread {float(spread)})")
        best = max(users, key=lambda t: float(
            sum(mech.q(x, a, t) * designer.dv(x, t) for x in space.outcomes)))
        for x in space.outcomes:
            decision[(x, a)] = mech.q(x, a, best)
    return ScoreBasedRule(decision=decision), assignment


def monotone_rebalance(scores: Sequence[float], rho: Sequence,
                       alpha: Sequence, cost: Sequence) -> list:
    """Payoff-equivalent nondecreasing approval probabilities.

    For one type: ``scores`` ascending with recommendation weights ``rho``
    (positive, summing to 1), current approval probabilities ``alpha`` and
    per-score costs ``cost`` (nondecreasing, with obedience alpha_i >=
    cost_i).  Already-nondecreasing inputs are returned unchanged;
    otherwise interior levels drop to cost, the freed mass moves to the top
    score, and any overflow past probability 1 cascades back down with
    d_i * rho_i mass conservation.  The rho-weighted approval total is
    preserved exactly.
    """
    n = len(scores)
    if not (len(rho) == len(alpha) == len(cost) == n):
        raise ModelError("scores, rho, alpha, cost must share a length")
    if n == 0:
        return []
    if any(scores[i] >= scores[i + 1] for i in range(n - 1)):
        raise ModelError("scores must be strictly increasing")
    if any(r <= 0 for r in rho):
        raise ModelError("support weights must be positive")
    if abs(float(sum(rho)) - 1.0) > 1e-12:
        raise ModelError("support weights must sum to 1")
    if any(cost[i] > cost[i + 1] for i in range(n - 1)):
        raise ModelError("costs must be nondecreasing in score")
    for i in range(n):
        if alpha[i] < cost[i]:
            raise ModelError(
                f"obedience violated at score {scores[i]}: "
                f"alpha={alpha[i]} < cost={cost[i]}")
        if alpha[i] < 0 or alpha[i] > 1:
            raise ModelError("approval probabilities must lie in [0, 1]")

    if all(alpha[i] <= alpha[i + 1] for i in range(n - 1)):
        return list(alpha)

    levels = list(cost[:-1])
    slack = sum(rho[i] * (alpha[i] - cost[i]) for i in range(n - 1))
    levels.append(alpha[-1] + slack / rho[-1])
    one = 1.0 if isinstance(levels[-1], float) else Fraction(1)
    i = n - 1
    while levels[i] > 1:
        overflow = (levels[i] - 1) * rho[i]
        levels[i] = one
        i -= 1
        if i < 0:
            raise ModelError("rebalance overflow: total mass exceeds 1")
        levels[i] = cost[i] + overflow / rho[i]
    return levels


# ---------------------------------------------------------------------------
# mechanism tables (flat delimiter-separated export)
# ---------------------------------------------------------------------------

_HEADER = "type_label\ttype_score\tscore\toutcome\tz\trho\tq"


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".12g")


def _parse_num(s: str):
    if "/" in s:
        num, den = s.split("/")
        return Fraction(int(num), int(den))
    if s in ("0", "1") or (s.lstrip("-").isdigit()):
        return Fraction(int(s))
    return float(s)


def write_mechanism_table(space: FiniteTypeSpace, mech: FiniteMechanism,
                          path) -> None:
    lines = [_HEADER]
    for t in space.types:
        for a in space.scores:
            r = mech.rho(a, t)
            for x in space.outcomes:
                if (x, a, t) in mech.decision:
                    q = mech.decision[(x, a, t)]
                    z = r * q
                elif not _on_support(r):
                    continue
                else:
                    raise ModelError(f"q undefined on support at ({a}, {t})")
                lines.append("\t".join(
                    [t.label, t.score, a, x, _fmt(z), _fmt(r), _fmt(q)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mechanism_table(path) -> FiniteMechanism:
    decision = {}
    recommendation = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != _HEADER.strip():
            raise ModelError(f"unexpected mechanism table header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            label, tscore, a, x, _z, r, q = line.split("\t")
            t = AgentType(label, tscore)
            recommendation[(a, t)] = _parse_num(r)
            decision[(x, a, t)] = _parse_num(q)
    return FiniteMechanism(decision=decision, recommendation=recommendation)
