"""Acceptance suite; the summary hook in conftest prints one line per criterion."""

import json
import random
import time

import pytest

from jetgamma.cli import main
from jetgamma.gamma import (
    check_linear_compatibility,
    compare_families,
    default_spec,
    extract_gamma,
    kernel_image,
    transform_gamma,
)
from jetgamma.jetcalc import Equation, Section, evolutionary, reduce_on_shell
from jetgamma.magri import build_hierarchy, jacobi_functional_check, random_functional
from jetgamma.operators import (
    OperatorTuple,
    TotalOperator,
    adjoin_parameters,
    apply,
    image_commutator_section,
    invert_Dx_on_image,
    reparametrize,
)
from kernel_properties import SUITES

LIOUVILLE_SYMBOLS = {
    ("box", "box", "box"): "D_x⊗1 - 1⊗D_x",
    ("boxbar", "boxbar", "boxbar"): "D_y⊗1 - 1⊗D_y",
    ("box", "boxbar", "box"): "D_y⊗1",
    ("box", "boxbar", "boxbar"): "-1⊗D_x",
    ("boxbar", "box", "box"): "-1⊗D_y",
    ("boxbar", "box", "boxbar"): "D_x⊗1",
}


def _run_cli(capsys, *argv):
    code = main([*argv, "--json"])
    return code, json.loads(capsys.readouterr().out)


def _restricted_equation(ctx, domain):
    """Liouville plus ``p = p(x, ...)`` and ``q = q(y, ...)`` on the parameter fibres."""
    pctx, p, q = adjoin_parameters(ctx, domain)
    return pctx, p, q, Equation.from_strings(pctx, ["u_xy = exp(2*u)", "p_y = 0", "q_x = 0"])


@pytest.mark.criterion(1, "Liouville symbols reproduced exactly")
def test_liouville_symbols(capsys):
    t0 = time.perf_counter()
    code, out = _run_cli(capsys, "extract-gamma", "liouville", "--on-shell")
    assert time.perf_counter() - t0 < 60
    assert code == 0
    assert out["defining_identity"]
    found = {(s["i"], s["j"], s["k"]): s["symbol"] for s in out["family"]["symbols"] if s["terms"]}
    assert found == LIOUVILLE_SYMBOLS


@pytest.mark.criterion(1, "Liouville symbols reproduced exactly")
def test_liouville_symbols_api(liouville):
    family, _ = extract_gamma(liouville["ops"], default_spec(liouville["ops"], exp_atoms=("exp(2*u)",),
                                                              equation=liouville["eq"]))
    names = family.ops.names
    found = {(names[i], names[j], names[k]): g.symbol() for (i, j, k), g in family.items() if not g.is_zero()}
    assert found == LIOUVILLE_SYMBOLS


@pytest.mark.criterion(2, "images of box and boxbar commute on shell")
def test_liouville_commutation(liouville):
    t0 = time.perf_counter()
    section = image_commutator_section(liouville["box"], liouville["boxbar"])
    *_, eq = _restricted_equation(liouville["ctx"], liouville["domain"])
    reduced = section.map(lambda c: reduce_on_shell(c.lift(eq.ctx), eq))
    assert reduced.is_zero()
    assert time.perf_counter() - t0 < 10


@pytest.mark.criterion(3, "box(p) and boxbar(q) are symmetries of the Liouville equation")
def test_liouville_symmetries(liouville):
    pctx, p, q, eq = _restricted_equation(liouville["ctx"], liouville["domain"])
    F = pctx.parse("u_xy - exp(2*u)")
    for op, arg in ((liouville["box"], p), (liouville["boxbar"], q)):
        phi = apply(op, arg)
        assert reduce_on_shell(evolutionary(phi, F), eq) == 0


@pytest.mark.criterion(4, "KdV Magri chain to three steps with a full certificate")
def test_kdv_magri_chain(capsys, kdv):
    t0 = time.perf_counter()
    code, out = _run_cli(capsys, "magri", "kdv", "--steps", "3")
    assert time.perf_counter() - t0 < 120
    assert code == 0
    assert [row["k"] for row in out["hierarchy"]] == [0, 1, 2, 3]
    assert out["hierarchy"][0]["density"] == "u"
    checks = {c["check"]: c["passed"] for c in out["certificate"]}
    assert checks["casimir H0"]
    assert all(checks[f"recursion {k - 1}->{k}"] for k in (1, 2, 3))
    assert all(checks.values())
    assert any(name.startswith("{H2,H3}") for name in checks)
    assert any(name.startswith("[phi0,phi3]") for name in checks)
    assert any("conserved" in name for name in checks)

    state = build_hierarchy(kdv["A1"], kdv["A2"], 3)
    for k in (1, 2, 3):
        assert apply(kdv["A2"], state.covectors[k - 1]) == apply(kdv["A1"], state.covectors[k])


@pytest.mark.criterion(5, "A2 applied to the hierarchy stays in the image of A1")
def test_kdv_image_inclusion(kdv):
    state = build_hierarchy(kdv["A1"], kdv["A2"], 3)
    for k in range(3):
        theta = apply(kdv["A2"], state.covectors[k])
        preimage = Section([invert_Dx_on_image(c) for c in theta], kdv["domain"])
        assert apply(kdv["A1"], preimage) == theta


@pytest.mark.criterion(6, "unrestricted KdV pair is not strong compatible up to order 3")
def test_kdv_incompatible(capsys):
    t0 = time.perf_counter()
    for order in (1, 2, 3):
        code, out = _run_cli(capsys, "check-involutive", "kdv", "--order", str(order))
        assert code == 2
        assert out["verdicts"][-1]["status"] == "not compatible"
    assert time.perf_counter() - t0 < 120


@pytest.mark.criterion(7, "bracket of A_lambda is linear in lambda for KdV")
def test_kdv_linear_bracket(kdv):
    verdict = check_linear_compatibility(kdv["ops"])
    assert verdict.linear
    lam_ctx = verdict.bracket.ctx
    lam1, lam2 = lam_ctx.scalar("lam1"), lam_ctx.scalar("lam2")
    expected = verdict.individual[0].map(lambda c: c.lift(lam_ctx)).scale(lam1) \
        + verdict.individual[1].map(lambda c: c.lift(lam_ctx)).scale(lam2)
    diff = verdict.bracket - expected
    lifted = [A.map_coefficients(lambda c: c.lift(lam_ctx)) for A in kdv["ops"]]
    combo = OperatorTuple([lifted[0].scale(lam1) + lifted[1].scale(lam2)], ["A_lambda"])
    assert kernel_image(combo, [diff]).is_zero()


@pytest.mark.criterion(8, "transformation law agrees with direct extraction under g = (1+x)")
def test_transformation_law(liouville):
    ctx, dom = liouville["ctx"], liouville["domain"]
    spec = default_spec(liouville["ops"], exp_atoms=("exp(2*u)",), equation=liouville["eq"],
                        base_functions=("inv(x+1)", "inv(x+1)^2"))
    family, report = extract_gamma(liouville["ops"], spec)

    ident = TotalOperator.identity(ctx, dom)
    same = transform_gamma(family, ident, ident)
    assert all(same[key] == g for key, g in family.items())

    g = TotalOperator.parse(ctx, "x + 1", dom, dom)
    gi = TotalOperator.parse(ctx, "inv(x+1)", dom, dom)
    moved = transform_gamma(family, g, gi)
    new_ops = OperatorTuple([reparametrize(A, g, gi) for A in liouville["ops"]], liouville["ops"].names)
    direct, direct_report = extract_gamma(new_ops, spec)
    assert compare_families(direct, direct_report, moved).equivalent


@pytest.mark.criterion(9, "kernel property suites")
def test_property_suites_timed():
    t0 = time.perf_counter()
    for suite in SUITES.values():
        suite()
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(10, "Jacobi identity for both KdV structures on random functionals")
def test_jacobi(kdv):
    rng = random.Random(20240611)
    for _ in range(5):
        H, F, G = (random_functional(kdv["ctx"], rng) for _ in range(3))
        assert jacobi_functional_check(kdv["A1"], H, F, G)
        assert jacobi_functional_check(kdv["A2"], H, F, G)
