"""Independent incentive verification and brute-force oracles.

Best responses are computed by direct maximization, never through the LP,
so they can certify solver output.  The deviator may quit after each score
recommendation (taking the outside option), matching the positive part in
the truth-telling constraint; disobedience maps to the null outcome, so
richer off-path behavior never pays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .continuous import ContinuousSolution
from .model import (
    AgentPayoff,
    AgentType,
    CostModel,
    DesignerPayoff,
    FiniteMechanism,
    FiniteTypeSpace,
    ModelError,
    ScoreBasedRule,
)
from .finite import _on_support, evaluate_mechanism

__all__ = [
    "AuditReport",
    "best_response_finite",
    "best_response_score_rule",
    "best_response_continuous",
    "audit_ic",
    "brute_force_optimum",
]


@dataclass
class AuditReport:
    max_tt_violation: float
    max_pc_violation: float
    tolerance: float
    best_responses: dict = field(default_factory=dict)
    # per type: {"report": t', "plan": {score: obey|quit}, "value": v,
    #            "gain": v - U(t)}

    @property
    def passes(self) -> bool:
        return (self.max_tt_violation <= self.tolerance
                and self.max_pc_violation <= self.tolerance)

    def to_config(self) -> dict:
        return {
            "passes": self.passes,
            "tolerance": self.tolerance,
            "max_tt_violation": float(self.max_tt_violation),
            "max_pc_violation": float(self.max_pc_violation),
            "best_responses": {
                str(t): {
                    "report": str(info["report"]),
                    "plan": dict(info["plan"]),
                    "value": float(info["value"]),
                    "gain": float(info["gain"]),
                }
                for t, info in self.best_responses.items()
            },
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_config(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _deviation_value(space: FiniteTypeSpace, costs: CostModel,
                     agent: AgentPayoff, mech: FiniteMechanism,
                     t: AgentType, report: AgentType, outside):
    """Value and per-recommendation plan for type t reporting ``report``."""
    value = 0
    plan = {}
    for a in space.scores:
        r = mech.rho(a, report)
        if not _on_support(r):
            continue
        cont = sum(mech.q(x, a, report) * agent.v(x, t)
                   for x in space.outcomes) - costs.cost(a, t)
        if cont >= outside:
            plan[a] = "obey"
            value += r * cont
        else:
            plan[a] = "quit"
            value += r * outside
    return value, plan


def best_response_finite(space: FiniteTypeSpace, costs: CostModel,
                         agent: AgentPayoff, mech: FiniteMechanism,
                         t: AgentType,
                         outside_option: Mapping | None = None):
    """Exact best deviation for one type.

    Maximizes over all reports (truth included) with per-recommendation
    quitting.  Ties break toward the truthful report, then declaration
    order.  Returns (best report, plan, value).
    """
    t = AgentType(*t)
    outside = (outside_option or {}).get(t, 0)
    order = [t] + [tp for tp in space.types if tp != t]
    best = None
    for report in order:
        value, plan = _deviation_value(space, costs, agent, mech, t,
                                       report, outside)
        if best is None or value > best[2]:
            best = (report, plan, value)
    return best


def best_response_score_rule(scores: Sequence, costs: CostModel,
                             rule, t, value=1, approve: str | None = None):
    """Best score against a score-based rule.

    ``rule`` may be a mapping score -> approval probability, a callable, or
    a ScoreBasedRule (then ``approve`` names the approval outcome).  The
    payoff of score a is approval(a) * value - cost(a, t).  Ties break
    toward the natural score, then the earlier (lower) score in ``scores``.
    """
    if isinstance(rule, ScoreBasedRule):
        if approve is None:
            raise ModelError(
                "pass approve=<outcome> when auditing a ScoreBasedRule")
        approval = {a: rule.q(approve, a) for a in scores}.__getitem__
    elif callable(rule):
        approval = rule
    else:
        approval = rule.__getitem__

    natural = t.score if isinstance(t, AgentType) else t
    best_a, best_u = None, None
    for a in scores:
        u = approval(a) * value - costs.cost(a, t)
        better = best_u is None or u > best_u
        tie = best_u is not None and u == best_u
        if better or (tie and a == natural and best_a != natural):
            best_a, best_u = a, u
    return best_a, best_u


def best_response_continuous(solution: ContinuousSolution,
                             types: Sequence[float],
                             reports: Sequence[float]):
    """Largest (report, obey) deviation gain over a grid of types.

    The deviator of type t mimicking report t' obeys the recommendation
    a*(t'), receiving Q(t') at cost c(a*(t'), t).  Returns
    (max gain, (type, report)); incentive compatibility means the gain
    stays within quadrature tolerance of zero.
    """
    reports = list(reports)
    q_of = [solution.Q(r) for r in reports]
    a_of = [solution.a_star(r) for r in reports]
    gamma = solution.gamma
    worst = (-float("inf"), (None, None))
    for t in types:
        u_truth = solution.U(t)
        for rp, q, a in zip(reports, q_of, a_of):
            if solution.cost_kind == "linear":
                c = abs(a - t) / gamma
            else:
                c = (a - t) ** 2 / gamma
            gain = q - c - u_truth
            if gain > worst[0]:
                worst = (gain, (t, rp))
    return worst


def audit_ic(space: FiniteTypeSpace, costs: CostModel, agent: AgentPayoff,
             mech: FiniteMechanism,
             outside_option: Mapping | None = None,
             tolerance: float = 1e-9) -> AuditReport:
    """Certify truth-telling and ex-post participation of a mechanism."""
    outside = outside_option or {}
    max_tt = 0
    max_pc = 0
    best_responses = {}
    for t in space.types:
        ubar = outside.get(t, 0)
        truthful, _ = _deviation_value(space, costs, agent, mech, t, t, ubar)
        # truthful payoff without the quit option
        u_t = 0
        for a in space.scores:
            r = mech.rho(a, t)
            if not _on_support(r):
                continue
            cont = sum(mech.q(x, a, t) * agent.v(x, t)
                       for x in space.outcomes) - costs.cost(a, t)
            u_t += r * cont
            gap = ubar - cont
            if gap > max_pc:
                max_pc = gap
        report, plan, value = best_response_finite(
            space, costs, agent, mech, t, outside_option)
        best_responses[t] = {"report": report, "plan": plan,
                             "value": value, "gain": value - u_t}
        for tp in space.types:
            if tp == t:
                continue
            dev, _ = _deviation_value(space, costs, agent, mech, t, tp, ubar)
            if dev - u_t > max_tt:
                max_tt = dev - u_t
    return AuditReport(max_tt_violation=float(max_tt),
                       max_pc_violation=float(max_pc),
                       tolerance=tolerance,
                       best_responses=best_responses)


# ---------------------------------------------------------------------------
# grid brute force
# ---------------------------------------------------------------------------

def _grid_menus(space, costs, agent, designer, t, grid, outside, tol):
    """All PC-feasible grid menus for one type.

    A menu is a tuple of (score, rho, approval) rows; rows exist only on
    the recommendation's support, so menus differing off-support are not
    enumerated twice.  Returns parallel lists (menus, val, own U,
    deviation value per evaluating type).
    """
    x0, x1 = space.outcomes
    denom = len(grid) - 1
    scores = space.scores
    menus, vals, owns = [], [], []
    devs = {tp: [] for tp in space.types}

    def conts(rows, tp):
        ubar = outside.get(tp, 0)
        total = 0
        for a, r, q1 in rows:
            c = costs.cost(a, tp)
            cont = q1 * agent.v(x1, tp) + (1 - q1) * agent.v(x0, tp) - c
            total += r * max(cont, ubar)
        return total

    for comp in _compositions(denom, len(scores)):
        support = [i for i, k in enumerate(comp) if k]
        for qs in product(range(denom + 1), repeat=len(support)):
            rows = tuple((scores[i], grid[comp[i]], grid[q])
                         for i, q in zip(support, qs))
            ubar = outside.get(t, 0)
            ok = True
            u = 0
            val = 0
            for a, r, q1 in rows:
                c = costs.cost(a, t)
                cont = (q1 * agent.v(x1, t)
                        + (1 - q1) * agent.v(x0, t) - c)
                if cont < ubar - tol:
                    ok = False
                    break
                u += r * cont
                val += r * (q1 * designer.dv(x1, t)
                            + (1 - q1) * designer.dv(x0, t)
                            - designer.loss(c))
            if not ok:
                continue
            menus.append(rows)
            owns.append(u)
            vals.append(val)
            for tp in space.types:
                if tp == t:
                    devs[tp].append(0)
                else:
                    devs[tp].append(conts(rows, tp))
    return menus, vals, owns, devs


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def brute_force_optimum(space: FiniteTypeSpace, costs: CostModel,
                        agent: AgentPayoff, designer: DesignerPayoff,
                        probability_grid_step, outside_option=None,
                        tolerance: float = 1e-9):
    """Exhaustive grid search over mechanisms; lower-bounds the LP optimum.

    q and rho entries range over multiples of the step; only mechanisms
    passing the incentive audit (at ``tolerance``) count.  Branch and bound
    over per-type menus with pairwise truth-telling feasibility masks.
    """
    if len(space.types) > 4 or len(space.scores) > 3:
        raise ModelError("brute force is limited to <=4 types, <=3 scores")
    if len(space.outcomes) != 2:
        raise ModelError("brute force requires binary outcomes")
    step = Fraction(probability_grid_step)
    if step < Fraction(1, 16):
        raise ModelError("grid step below 1/16 is not supported")
    denom = int(1 / step)
    if step * denom != 1:
        raise ModelError("grid step must divide 1")
    grid = [Fraction(i, denom) for i in range(denom + 1)]
    outside = outside_option or {}

    types = list(space.types)
    per_type = [
        _grid_menus(space, costs, agent, designer, t, grid, outside,
                    tolerance)
        for t in types]

    # float views for the search; prior-weighted values
    vals = [np.array([float(space.mass(t)) * float(v) for v in vs])
            for t, (_, vs, _, _) in zip(types, per_type)]
    owns = [np.array([float(u) for u in us])
            for (_, _, us, _) in per_type]
    devs = [{tp: np.array([float(d) for d in dv[tp]]) for tp in dv}
            for (_, _, _, dv) in per_type]
    orders = [np.argsort(-v) for v in vals]

    k = len(types)
    tol = float(tolerance)
    best_value = -float("inf")
    best_choice = None

    def dfs(depth, chosen, masks, bound_rest):
        nonlocal best_value, best_choice
        if depth == k:
            total = sum(vals[i][j] for i, j in enumerate(chosen))
            if total > best_value:
                best_value = total
                best_choice = list(chosen)
            return
        t = types[depth]
        cand = orders[depth][masks[depth][orders[depth]]]
        rest = bound_rest[depth + 1] if depth + 1 <= k else 0.0
        for j in cand:
            v = vals[depth][j]
            if sum(vals[i][c] for i, c in enumerate(chosen)) + v + rest \
                    <= best_value + 1e-15:
                break  # candidates sorted by value; nothing better remains
            new_masks = list(masks)
            ok = True
            for later in range(depth + 1, k):
                tp = types[later]
                # tp's future menu must leave tp no profitable deviation to
                # menu j, and must not tempt the current type past U(j)
                m2 = masks[later] & (owns[later] >= devs[depth][tp][j] - tol)
                m2 = m2 & (devs[later][t] <= owns[depth][j] + tol)
                if not m2.any():
                    ok = False
                    break
                new_masks[later] = m2
            if not ok:
                continue
            chosen.append(j)
            dfs(depth + 1, chosen, new_masks, bound_rest)
            chosen.pop()

    masks = [np.ones(len(vals[i]), dtype=bool) for i in range(k)]
    # optimistic per-depth remainder bounds
    bound_rest = [0.0] * (k + 1)
    for i in range(k - 1, -1, -1):
        bound_rest[i] = bound_rest[i + 1] + float(vals[i].max())
    dfs(0, [], masks, bound_rest)

    if best_choice is None:
        raise ModelError("no grid-feasible IC mechanism found")

    # exact re-evaluation of the winner
    decision = {}
    recommendation = {}
    x0, x1 = space.outcomes
    for t, (menus, _, _, _), j in zip(types, per_type, best_choice):
        for a in space.scores:
            recommendation[(a, t)] = Fraction(0)
        for a, r, q1 in menus[j]:
            recommendation[(a, t)] = r
            decision[(x1, a, t)] = q1
            decision[(x0, a, t)] = 1 - q1
    mech = FiniteMechanism(decision=decision, recommendation=recommendation)
    value, _, _ = evaluate_mechanism(space, costs, agent, designer, mech)
    return value
