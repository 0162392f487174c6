"""Command-line front end.

Exit codes: 0 when every check passes, 2 when a mathematical verdict is
negative, 1 on usage or parse errors.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from itertools import product

from .expr import ContextMismatch
from .gamma import (
    AnsatzBoundTooSmall,
    GammaFamily,
    NotStrongCompatible,
    check_linear_compatibility,
    check_strong_compatibility,
    compare_families,
    extract_gamma,
    operator_bracket,
    structural_constants,
    symmetry_classify,
    transform_gamma,
    verify_defining_identity,
)
from .jetcalc import Section
from .magri import InversionUnsupported, RecursionObstruction, build_hierarchy, verify_hierarchy
from .operators import InverseCheckFailed, OperatorError
from .parse import ParseError
from .scenario import ScenarioError, load_scenario, load_transform

OK, NEGATIVE, USAGE = 0, 2, 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors map to the usage exit code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


def _emit(args, text_lines, payload) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, ensure_ascii=False))
    else:
        print("\n".join(text_lines))


def _selected(args, scenario) -> list:
    if args.ops is None:
        return list(scenario.default_ops)
    names = [n.strip() for n in args.ops.split(",") if n.strip()]
    if not names:
        raise UsageError("the operator list is empty")
    return names


def _spec(args, scenario, ops, **extra):
    return scenario.spec(ops, order=args.order, degree=args.degree, on_shell=True if args.on_shell else None, **extra)


def _family_lines(family: GammaFamily) -> list:
    names = family.ops.names
    return [
        f"  Gamma^{names[k]}_{{{names[i]},{names[j]}}} = {g.symbol()}"
        for (i, j, k), g in family.items()
    ]


def _random_section(ctx, space, rng) -> Section:
    jets = [ctx.jet(f, mi) for f in ctx.dependents for mi in [ctx.zero_index] + [
        tuple(1 if d == i else 0 for d in range(ctx.n)) for i in range(ctx.n)]]
    comps = []
    for _ in range(space.dim):
        e = ctx.const(rng.randint(-3, 3))
        for _ in range(2):
            e = e + rng.choice(jets) * rng.randint(-3, 3) * rng.choice(jets + [ctx.one])
        comps.append(e)
    return Section(comps, space)


# -- subcommands ------------------------------------------------------------------


def cmd_check_involutive(args) -> int:
    scenario = load_scenario(args.scenario)
    ops = scenario.tuple_of(_selected(args, scenario))
    base = _spec(args, scenario, ops)
    orders = range(1, base.sigma_order + 1) if args.scan else [base.sigma_order]
    verdicts = []
    for order in orders:
        verdicts.append(check_strong_compatibility(ops, base.with_order(order)))
        if verdicts[-1].compatible:
            break
    final = verdicts[-1]
    lines = [f"scenario: {scenario.name}", f"operators: {', '.join(ops.names)}"]
    for order, v in zip(orders, verdicts):
        lines.append(f"order {order}: {_status_text(v)}")
    if final.compatible:
        lines.append("symbols:")
        lines.extend(_family_lines(final.family))
    payload = {
        "scenario": scenario.name,
        "operators": ops.names,
        "verdicts": [v.to_json() for v in verdicts],
    }
    if final.compatible:
        payload["family"] = final.family.to_json()
    _emit(args, lines, payload)
    return OK if final.compatible else NEGATIVE


def _status_text(v) -> str:
    if v.compatible:
        return f"strong compatible (gauge dimension {v.gauge_dim})"
    if v.status == "not compatible":
        return f"not strong compatible (inconsistent through saturated order {v.order_bound})"
    return f"undetermined: {v.error}"


def cmd_extract_gamma(args) -> int:
    scenario = load_scenario(args.scenario)
    names = _selected(args, scenario)
    ops = scenario.tuple_of(names)
    spec = _spec(args, scenario, ops)
    try:
        family, report = extract_gamma(ops, spec)
    except (NotStrongCompatible, AnsatzBoundTooSmall) as exc:
        _emit(args, [f"scenario: {scenario.name}", f"verdict: {exc}"],
              {"scenario": scenario.name, "verdict": {"status": "not compatible", "message": str(exc)}})
        return NEGATIVE
    n = len(ops)
    rng = random.Random(args.seed)
    sc = structural_constants(family)
    P = _random_section(scenario.ctx, ops.domain, rng)
    Q = _random_section(scenario.ctx, ops.domain, rng)
    identity_ok = verify_defining_identity(family) and all(
        sc.check_identity(i, j, P, Q) for i, j in product(range(n), repeat=2)
    )
    sym = symmetry_classify(family)
    lines = [
        f"scenario: {scenario.name}",
        f"operators: {', '.join(ops.names)}",
        f"ansatz: order {spec.sigma_order}, degree {spec.degree}, on-shell {'yes' if spec.equation else 'no'}",
        "symbols:",
        *_family_lines(family),
        "gauge dimensions:",
        *(f"  ({ops.names[i]},{ops.names[j]}): {report.dim(i, j)}" for i, j in product(range(n), repeat=2)),
        f"defining identity: {'pass' if identity_ok else 'FAIL'} (seed {args.seed})",
        "symmetry:",
        *(f"  Gamma^{ops.names[r.k]}_{{{ops.names[r.i]},{ops.names[r.j]}}}: {r.label} {'pass' if r.holds else 'fail'}"
          for r in sym),
    ]
    payload = {
        "scenario": scenario.name,
        "verdict": {"status": "compatible", "order_bound": spec.sigma_order, "gauge_dim": report.total_dim()},
        "family": family.to_json(),
        "gauge": [{"i": ops.names[i], "j": ops.names[j], "dim": report.dim(i, j)} for i, j in product(range(n), repeat=2)],
        "defining_identity": identity_ok,
        "symmetry": [
            {"i": ops.names[r.i], "j": ops.names[r.j], "k": ops.names[r.k], "label": r.label, "holds": r.holds}
            for r in sym
        ],
    }
    status = OK if identity_ok else NEGATIVE
    if args.transform:
        tr = load_transform(args.transform, scenario)
        transformed = transform_gamma(family, tr.g, tr.g_inverse)
        spec_t = _spec(args, scenario, transformed.ops, base_functions=spec.base_functions + tr.base_functions)
        try:
            direct, direct_report = extract_gamma(transformed.ops, spec_t)
        except (NotStrongCompatible, AnsatzBoundTooSmall) as exc:
            lines.append(f"transform: direct extraction failed: {exc}")
            payload["transform"] = {"consistent": False, "message": str(exc)}
            _emit(args, lines, payload)
            return NEGATIVE
        cmp = compare_families(direct, direct_report, transformed)
        lines += ["transformed symbols:", *_family_lines(transformed),
                  f"transform law vs direct extraction: {'consistent' if cmp.equivalent else 'INCONSISTENT'}"
                  f" (exact on {sum(cmp.exact.values())}/{len(cmp.exact)} pairs)"]
        payload["transform"] = {
            "family": transformed.to_json(),
            "consistent": cmp.equivalent,
            "exact_pairs": sum(cmp.exact.values()),
        }
        if not cmp.equivalent:
            status = NEGATIVE
    _emit(args, lines, payload)
    return status


def cmd_linear_compat(args) -> int:
    scenario = load_scenario(args.scenario)
    ops = scenario.tuple_of(_selected(args, scenario))
    spec = _spec(args, scenario, ops)
    v = check_linear_compatibility(ops, spec)
    lines = [f"scenario: {scenario.name}", f"operators: {', '.join(ops.names)}"]
    if v.linear:
        lines.append("verdict: linear compatible" + (" (exact)" if v.exact else " (modulo gauge)"))
        lines.append(f"  bracket of A_lambda: {v.bracket}")
        for i, b in sorted(v.individual.items()):
            lines.append(f"  bracket of {ops.names[i]}: {b}")
    else:
        lines.append(f"verdict: not linear compatible ({v.error or 'bracket is not linear in lambda'})")
    if len(ops) >= 3:
        for (i, j), ok in sorted(v.pairwise.items()):
            lines.append(f"  pair ({ops.names[i]},{ops.names[j]}): {'linear' if ok else 'not linear'}")
    _emit(args, lines, {"scenario": scenario.name, **v.to_json()})
    return OK if v.linear else NEGATIVE


def cmd_magri(args) -> int:
    scenario = load_scenario(args.scenario)
    if scenario.magri_pair is None:
        raise UsageError("the scenario declares no [magri] pair")
    a1, a2 = (scenario.operators[n] for n in scenario.magri_pair)
    try:
        state = build_hierarchy(a1, a2, args.steps)
    except RecursionObstruction as exc:
        _emit(args, [f"scenario: {scenario.name}", f"obstruction at step {exc.step}: {exc.reason}"],
              {"scenario": scenario.name, "obstruction": {"step": exc.step, "reason": exc.reason}})
        return NEGATIVE
    cert = verify_hierarchy(state)
    lines = [f"scenario: {scenario.name}", f"pair: {', '.join(scenario.magri_pair)}"]
    for row in state.to_json():
        lines += [f"H{row['k']} = int {row['density']} dx", f"  covector: {row['covector']}", f"  flow: {row['flow']}"]
    lines.append("certificate:")
    lines += [f"  {'pass' if ok else 'FAIL'}  {name}" for name, ok in cert.checks]
    _emit(args, lines, {"scenario": scenario.name, "hierarchy": state.to_json(), "certificate": cert.to_json()})
    return OK if cert.passed else NEGATIVE


def cmd_bracket(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.op not in scenario.operators:
        raise UsageError(f"unknown operator {args.op!r}")
    ops = scenario.tuple_of([args.op])
    try:
        b = operator_bracket(ops[0], _spec(args, scenario, ops), args.op)
    except (NotStrongCompatible, AnsatzBoundTooSmall) as exc:
        _emit(args, [f"{args.op}: {exc}"], {"operator": args.op, "status": "not involutive", "message": str(exc)})
        return NEGATIVE
    _emit(args, [f"[p,q]_{args.op} = {b}", f"symbol: {b.symbol()}"],
          {"operator": args.op, "bracket": str(b), "terms": b.to_json_terms()})
    return OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit JSON instead of text")
    common.add_argument("--order", type=int, help="derivative order bound of the ansatz")
    common.add_argument("--degree", type=int, help="coefficient degree bound of the ansatz")
    common.add_argument("--on-shell", action="store_true", help="reduce modulo the scenario equation")
    common.add_argument("--seed", type=int, default=0, help="seed for randomised cross-checks")

    parser = _Parser(prog="jetgamma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check-involutive", parents=[common], help="strong compatibility of an operator tuple")
    p.add_argument("scenario")
    p.add_argument("--ops", help="comma-separated operator names")
    p.add_argument("--scan", action="store_true", help="try every order from 1 up to the bound")
    p.set_defaults(func=cmd_check_involutive)

    p = sub.add_parser("extract-gamma", parents=[common], help="bi-differential symbols and gauge report")
    p.add_argument("scenario")
    p.add_argument("--ops", help="comma-separated operator names")
    p.add_argument("--transform", help="TOML file with g and its inverse")
    p.set_defaults(func=cmd_extract_gamma)

    p = sub.add_parser("linear-compat", parents=[common], help="linearity of the bracket in lambda")
    p.add_argument("scenario")
    p.add_argument("--ops", help="comma-separated operator names")
    p.set_defaults(func=cmd_linear_compat)

    p = sub.add_parser("magri", parents=[common], help="bi-Hamiltonian recursion")
    p.add_argument("scenario")
    p.add_argument("--steps", type=int, default=3)
    p.set_defaults(func=cmd_magri)

    p = sub.add_parser("bracket", parents=[common], help="bracket induced by one operator")
    p.add_argument("scenario")
    p.add_argument("--op", required=True)
    p.set_defaults(func=cmd_bracket)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "steps", 0) < 0:
        parser.error("--steps must be non-negative")
    try:
        return args.func(args)
    except (UsageError, ScenarioError, ParseError, OperatorError, InverseCheckFailed,
            InversionUnsupported, ContextMismatch, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
