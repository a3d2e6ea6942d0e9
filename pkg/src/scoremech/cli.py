"""Command-line front end.

Commands: ``example``, ``solve-finite``, ``solve-continuous``, ``audit``,
``canonicalize``.  Every artifact is plain delimiter-separated text or JSON
with reals at 12 significant digits and rationals as "p/q", so reruns are
byte-identical and diff-friendly.

Exit codes: 0 success, 2 config error, 3 infeasible/regime error,
4 numerical failure.

Instance config schema (JSON; rationals may be written "p/q"):

    types           [[label, natural_score], ...]
    scores          [score, ...]           declaration order is the order
    outcomes        [outcome, ...]
    prior           {"label|score": mass}
    score_values    {score: number}        optional numeric score values
    cost            {"kind": "tabulated", "table": {"score|label|tscore": c}}
                    or {"kind": "linear"|"quadratic", "gamma": g,
                        "domain": [s_min, s_max]}
    agent_value     {"outcome|label|score": v}
    decision_value  {"outcome|label|score": v}
    loss_coefficient  lam                  optional; loss is lam * c^2
    outside_option  {"label|score": u}     optional, defaults to 0

A run config passed via ``--config`` is a JSON object whose keys mirror
the command's flags (``dist``, ``cost``, ``gamma``, ``mode``, ``tol``,
``out``, ``instance``, ``mechanism``, ...); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from . import continuous as cont
from . import finite, lpcore, model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_NUMERIC = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return f"{format(float(v), '.12g')} = {v.numerator}/{v.denominator}"
    if v is None:
        return "none"
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def _write_summary(path: Path, entries: list[tuple[str, object]]) -> str:
    text = "\n".join(f"{k} = {_fmt(v)}" for k, v in entries) + "\n"
    path.write_text(text)
    return text


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name, None) in (None, ""):
            flag = "--" + name.replace("_", "-")
            raise CliError(f"{flag} is required (flag or config file)",
                           EXIT_CONFIG)


def _load_instance(path: str) -> model.Instance:
    try:
        inst = model.load_instance(path)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read instance config {path}: {exc}",
                       EXIT_CONFIG)
    problems = model.validate(inst.space, inst.costs, inst.designer,
                              inst.agent)
    if problems:
        raise CliError("invalid instance: " + "; ".join(problems),
                       EXIT_CONFIG)
    return inst


def _parse_dist(spec: str) -> cont.Distribution:
    kind, _, rest = spec.partition(":")
    try:
        if kind == "uniform":
            lo, hi = (float(v) for v in rest.split(","))
            return cont.Uniform(lo, hi)
        if kind == "texp":
            parts = [float(v) for v in rest.split(",")]
            lo, hi = parts[0], parts[1]
            rate = parts[2] if len(parts) > 2 else 1.0
            return cont.TruncatedExponential(lo, hi, rate)
        if kind == "triangular":
            lo, hi, mode = (float(v) for v in rest.split(","))
            return cont.Triangular(lo, hi, mode=mode)
        if kind == "grid":
            rows = np.loadtxt(rest, ndmin=2)
            return cont.Tabulated(rows[:, 0], rows[:, 1])
    except (OSError, ValueError) as exc:
        raise CliError(f"bad distribution spec {spec!r}: {exc}", EXIT_CONFIG)
    raise CliError(f"unknown distribution kind {kind!r}", EXIT_CONFIG)


def _solve_lp_instance(inst: model.Instance, mode: str):
    lp = finite.build_drm_lp(inst.space, inst.costs, inst.agent,
                             inst.designer, inst.outside_option)
    sol = lpcore.solve_lp(lp, mode=mode)
    if sol.status in ("infeasible", "unbounded"):
        raise CliError(f"LP is {sol.status}", EXIT_REGIME)
    if sol.status == "iteration_limit":
        raise CliError("LP hit the iteration limit", EXIT_NUMERIC)
    if not sol.certified:
        raise CliError("dual certificate failed verification", EXIT_NUMERIC)
    return sol


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_example(args) -> int:
    if args.name != "college":
        raise CliError(f"unknown example {args.name!r}", EXIT_CONFIG)
    lines = []
    for scenario, internalize in ((1, False), (2, True)):
        inst = model.college_instance(internalize_costs=internalize)
        sol = _solve_lp_instance(inst, args.mode)
        mech = finite.extract_mechanism(inst.space, sol)
        report = audit_mod.audit_ic(inst.space, inst.costs, inst.agent, mech,
                                    inst.outside_option)
        lines.append((f"scenario{scenario} value", sol.value))
        lines.append((f"scenario{scenario} audit passes", report.passes))
    menu = model.college_menu_mechanism()
    inst2 = model.college_instance(internalize_costs=True)
    menu_value, menu_u, _ = finite.evaluate_mechanism(
        inst2.space, inst2.costs, inst2.agent, inst2.designer, menu)
    lines.append(("scenario2 reference menu value", menu_value))
    for t in inst2.space.types:
        lines.append((f"reference menu U({t})", menu_u[t]))
    text = "\n".join(f"{k} = {_fmt(v)}" for k, v in lines)
    print(text)
    if args.out:
        out = _out_dir(args)
        (out / "college.txt").write_text(text + "\n")
        model.save_instance(inst2, out / "college_scenario2.json")
    return EXIT_OK


def cmd_solve_finite(args) -> int:
    _require(args, "instance")
    inst = _load_instance(args.instance)
    sol = _solve_lp_instance(inst, args.mode)
    mech = finite.extract_mechanism(inst.space, sol)
    report = audit_mod.audit_ic(inst.space, inst.costs, inst.agent, mech,
                                inst.outside_option, tolerance=args.tol)
    out = _out_dir(args)
    finite.write_mechanism_table(inst.space, mech, out / "mechanism.tsv")
    report.save(out / "audit.json")
    _write_summary(out / "summary.txt", [
        ("status", sol.status),
        ("mode", args.mode),
        ("value", sol.value),
        ("certified", sol.certified),
        ("audit_passes", report.passes),
        ("max_tt_violation", report.max_tt_violation),
        ("max_pc_violation", report.max_pc_violation),
    ])
    print(f"value = {_fmt(sol.value)}")
    return EXIT_OK


def cmd_solve_continuous(args) -> int:
    _require(args, "dist", "cost", "gamma")
    dist = _parse_dist(args.dist)
    problems = dist.validate()
    if problems:
        raise CliError("invalid distribution: " + "; ".join(problems),
                       EXIT_CONFIG)
    if args.cost == "linear":
        costs = model.CostModel.linear(args.gamma, (dist.s_min, dist.s_max))
    elif args.cost == "quadratic":
        costs = model.CostModel.quadratic(args.gamma,
                                          (dist.s_min, dist.s_max))
    else:
        raise CliError("solve-continuous needs --cost linear|quadratic",
                       EXIT_CONFIG)
    solution = cont.solve_continuous(dist, costs)
    out = _out_dir(args)
    ts = np.linspace(dist.s_min, dist.s_max, args.samples)
    cont.write_solution_table(solution, ts, out / "solution.tsv")
    entries = [
        ("regime", solution.regime),
        ("cost", solution.cost_kind),
        ("gamma", solution.gamma),
        ("t0", solution.t0),
        ("t_star", solution.t_star),
        ("t_dagger", solution.t_dagger),
        ("p_star", solution.p_star),
        ("designer_value", solution.designer_value()),
    ]
    if args.grid_types:
        inst = cont.discretize(dist, costs, args.grid_types,
                               args.grid_scores)
        lp_sol = _solve_lp_instance(inst, "float")
        entries.append(("lp_value", lp_sol.value))
        entries.append(("lp_gap", abs(lp_sol.value
                                      - solution.designer_value())))
    text = _write_summary(out / "summary.txt", entries)
    print(text, end="")
    return EXIT_OK


def cmd_audit(args) -> int:
    _require(args, "instance", "mechanism")
    inst = _load_instance(args.instance)
    try:
        mech = finite.read_mechanism_table(args.mechanism)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read mechanism table: {exc}", EXIT_CONFIG)
    problems = model.validate_mechanism(inst.space, mech)
    if problems:
        raise CliError("invalid mechanism: " + "; ".join(problems),
                       EXIT_CONFIG)
    report = audit_mod.audit_ic(inst.space, inst.costs, inst.agent, mech,
                                inst.outside_option, tolerance=args.tol)
    out = _out_dir(args)
    report.save(out / "audit.json")
    print(f"passes = {report.passes} "
          f"(tt = {report.max_tt_violation:.3g}, "
          f"pc = {report.max_pc_violation:.3g})")
    return EXIT_OK


def cmd_canonicalize(args) -> int:
    _require(args, "op", "instance")
    inst = _load_instance(args.instance)
    out = _out_dir(args)
    if args.op == "derandomize":
        if not args.mixture:
            raise CliError("--op derandomize needs --mixture", EXIT_CONFIG)
        mixture = read_mixture_table(args.mixture)
        mech = finite.derandomize_decision_rules(mixture)
        finite.write_mechanism_table(inst.space, mech, out / "mechanism.tsv")
        print("wrote mechanism.tsv")
        return EXIT_OK
    if not args.mechanism:
        raise CliError(f"--op {args.op} needs --mechanism", EXIT_CONFIG)
    try:
        mech = finite.read_mechanism_table(args.mechanism)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read mechanism table: {exc}", EXIT_CONFIG)
    if args.op == "score-based":
        rule, falsification = finite.reduce_to_score_based(
            inst.space, inst.costs, inst.agent, inst.designer, mech,
            tol=args.tol)
        lines = ["score\toutcome\tq"]
        for a in inst.space.scores:
            for x in inst.space.outcomes:
                lines.append(f"{a}\t{x}\t{finite._fmt(rule.q(x, a))}")
        (out / "scorerule.tsv").write_text("\n".join(lines) + "\n")
        lines = ["type_label\ttype_score\tscore"]
        for t in inst.space.types:
            lines.append(f"{t.label}\t{t.score}\t{falsification[t]}")
        (out / "falsification.tsv").write_text("\n".join(lines) + "\n")
        print("wrote scorerule.tsv, falsification.tsv")
        return EXIT_OK
    if args.op == "rebalance":
        mech2 = rebalance_mechanism(inst, mech)
        finite.write_mechanism_table(inst.space, mech2,
                                     out / "mechanism.tsv")
        print("wrote mechanism.tsv")
        return EXIT_OK
    raise CliError(f"unknown canonicalize op {args.op!r}", EXIT_CONFIG)


def rebalance_mechanism(inst: model.Instance,
                        mech: model.FiniteMechanism) -> model.FiniteMechanism:
    """Monotone-rebalance every type's approval schedule in place.

    Needs numeric score values and binary outcomes; approval is the
    prior-preferred outcome of the agent payoff.
    """
    space = inst.space
    if len(space.outcomes) != 2:
        raise CliError("rebalance requires binary outcomes", EXIT_CONFIG)

    def avg(x):
        return float(sum(space.mass(t) * inst.agent.v(x, t)
                         for t in space.types))

    x1 = max(space.outcomes, key=avg)
    x0 = [x for x in space.outcomes if x != x1][0]
    decision = dict(mech.decision)
    recommendation = dict(mech.recommendation)
    for t in space.types:
        support = mech.support(t, space.scores)
        support.sort(key=space.score_value)
        if len(support) < 2:
            continue
        rho = [mech.rho(a, t) for a in support]
        alpha = [mech.q(x1, a, t) for a in support]
        cost = [inst.costs.cost(a, t) for a in support]
        try:
            new_alpha = finite.monotone_rebalance(
                [space.score_value(a) for a in support], rho, alpha, cost)
        except model.ModelError as exc:
            raise CliError(f"rebalance precondition failed for {t}: {exc}",
                           EXIT_CONFIG)
        for a, na in zip(support, new_alpha):
            decision[(x1, a, t)] = na
            decision[(x0, a, t)] = 1 - na
    return model.FiniteMechanism(decision=decision,
                                 recommendation=recommendation)


# ---------------------------------------------------------------------------
# mixture tables (derandomize input)
# ---------------------------------------------------------------------------

MIXTURE_HEADER = "type_label\ttype_score\tcomponent\tweight\trec_score\tscore\toutcome\tq"


def write_mixture_table(randomized, path) -> None:
    """Flatten {type: [(weight, rule, score), ...]} to one TSV."""
    lines = [MIXTURE_HEADER]
    for t, mixture in randomized.items():
        t = model.AgentType(*t)
        for ci, (w, rule, rec) in enumerate(mixture):
            for (x, a), q in sorted(rule.decision.items(),
                                    key=lambda kv: (kv[0][1], kv[0][0])):
                lines.append("\t".join([
                    t.label, t.score, str(ci), finite._fmt(w), rec, a, x,
                    finite._fmt(q)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mixture_table(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != MIXTURE_HEADER:
            raise CliError(f"unexpected mixture header {header!r}",
                           EXIT_CONFIG)
        for line in fh:
            line = line.rstrip("\n")
            if line:
                rows.append(line.split("\t"))
    grouped: dict = {}
    for label, tscore, comp, w, rec, a, x, q in rows:
        key = (model.AgentType(label, tscore), int(comp))
        entry = grouped.setdefault(
            key, {"weight": finite._parse_num(w), "rec": rec, "decision": {}})
        entry["decision"][(x, a)] = finite._parse_num(q)
    randomized: dict = {}
    for (t, _), entry in sorted(grouped.items(),
                                key=lambda kv: (str(kv[0][0]), kv[0][1])):
        rule = model.ScoreBasedRule(decision=entry["decision"])
        randomized.setdefault(t, []).append(
            (entry["weight"], rule, entry["rec"]))
    return randomized


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scoremech",
        description="Optimal approval mechanisms under costly score "
                    "falsification")
    parser.add_argument("--config", help="JSON file whose keys mirror the "
                                         "flags; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--mode", choices=("exact", "float"), default="exact")
        p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("example", help="run a built-in instance")
    p.add_argument("name", nargs="?", default="college")
    common(p)
    p.set_defaults(func=cmd_example, out=None)

    p = sub.add_parser("solve-finite", help="solve a finite instance by LP")
    p.add_argument("--instance")
    common(p)
    p.set_defaults(func=cmd_solve_finite)

    p = sub.add_parser("solve-continuous",
                       help="closed-form continuum solver")
    p.add_argument("--dist",
                   help="uniform:a,b | texp:a,b[,rate] | triangular:a,b,mode"
                        " | grid:path")
    p.add_argument("--cost", choices=("linear", "quadratic"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--samples", type=int, default=401,
                   help="rows in the solution table")
    p.add_argument("--grid-types", type=int, default=0,
                   help="also cross-check against a discretized LP")
    p.add_argument("--grid-scores", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_solve_continuous)

    p = sub.add_parser("audit", help="audit a mechanism table")
    p.add_argument("--instance")
    p.add_argument("--mechanism")
    common(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("canonicalize",
                       help="derandomize / rebalance / score-based reduce")
    p.add_argument("--op",
                   choices=("derandomize", "rebalance", "score-based"))
    p.add_argument("--instance")
    p.add_argument("--mechanism")
    p.add_argument("--mixture")
    common(p)
    p.set_defaults(func=cmd_canonicalize)
    return parser


def _merge_config(parser, argv):
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}",
                           EXIT_CONFIG)
        explicit = {a.lstrip("-").replace("-", "_").split("=")[0]
                    for a in argv if a.startswith("--")}
        for key, value in overrides.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                raise CliError(f"unknown config key {key!r}", EXIT_CONFIG)
            if attr not in explicit:
                setattr(args, attr, value)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _merge_config(parser, argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (cont.RegimeError, cont.MonotonicityError, cont.ContinuousError
            ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (model.ModelError, lpcore.LpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
