import random
from dataclasses import replace

import pytest

from jetgamma.jetcalc import Functional, euler_operator, homotopy_inverse
from jetgamma.magri import (
    InversionUnsupported,
    NotSkewAdjoint,
    RecursionObstruction,
    build_hierarchy,
    is_casimir,
    jacobi_functional_check,
    magri_step,
    poisson_bracket,
    random_functional,
    start_hierarchy,
    verify_hierarchy,
)
from jetgamma.operators import TotalOperator, apply


def F(ctx, text):
    return Functional(ctx.parse(text))


class TestCasimir:
    def test_mass(self, kdv):
        assert is_casimir(kdv["A1"], F(kdv["ctx"], "u"))

    def test_not_casimir(self, kdv):
        assert not is_casimir(kdv["A1"], F(kdv["ctx"], "u^2"))

    def test_zero(self, kdv):
        assert is_casimir(kdv["A2"], F(kdv["ctx"], "0"))


class TestRecursion:
    def test_first_step(self, kdv):
        state = magri_step(start_hierarchy(kdv["A1"], kdv["A2"]))
        assert state.covectors[0][0] == 1
        assert apply(kdv["A2"], state.covectors[0])[0] == kdv["ctx"].parse("u_x")
        assert state.covectors[1][0] == kdv["ctx"].parse("u")
        assert state.hamiltonians[1].density == kdv["ctx"].parse("1/2*u^2")

    def test_second_step(self, kdv):
        state = build_hierarchy(kdv["A1"], kdv["A2"], 2)
        ctx = kdv["ctx"]
        assert apply(kdv["A2"], state.covectors[1])[0] == ctx.parse("-1/2*u_xxx + 3*u*u_x")
        assert state.covectors[2][0] == ctx.parse("-1/2*u_xx + 3/2*u^2")
        assert state.hamiltonians[2].density == ctx.parse("1/2*u^3 + 1/4*u_x^2")

    def test_third_step(self, kdv):
        state = build_hierarchy(kdv["A1"], kdv["A2"], 3)
        assert state.hamiltonians[3].density == kdv["ctx"].parse("5/8*u^4 + 5/4*u*u_x^2 + 1/8*u_xx^2")
        for k in range(1, 4):
            assert apply(kdv["A2"], state.covectors[k - 1]) == apply(kdv["A1"], state.covectors[k])
            assert euler_operator(homotopy_inverse(state.covectors[k]).density) == state.covectors[k]

    def test_json(self, kdv):
        rows = build_hierarchy(kdv["A1"], kdv["A2"], 1).to_json()
        assert rows == [
            {"k": 0, "density": "u", "covector": "1", "flow": "0"},
            {"k": 1, "density": "1/2*u^2", "covector": "u", "flow": "u_x"},
        ]

    def test_non_gradient_obstruction(self, kdv):
        """Seeding with a non-Casimir is rejected at step 0."""
        with pytest.raises(RecursionObstruction) as info:
            start_hierarchy(kdv["A1"], kdv["A2"], F(kdv["ctx"], "u^2"))
        assert info.value.step == 0

    def test_image_obstruction(self, kdv):
        """A second operator without the image inclusion stops the chain."""
        bad = TotalOperator.parse(kdv["ctx"], "u", kdv["domain"])
        with pytest.raises(RecursionObstruction) as info:
            build_hierarchy(kdv["A1"], bad, 2)
        assert info.value.step == 1

    def test_first_operator_must_be_derivative(self, kdv):
        with pytest.raises(InversionUnsupported):
            start_hierarchy(kdv["A2"], kdv["A1"])


class TestCertificate:
    def test_kdv_depth_two(self, kdv):
        cert = verify_hierarchy(build_hierarchy(kdv["A1"], kdv["A2"], 2))
        assert cert.passed and not cert.failures

    def test_casimir_only(self, kdv):
        cert = verify_hierarchy(build_hierarchy(kdv["A1"], kdv["A2"], 0))
        assert cert.passed
        assert [name for name, _ in cert.checks] == ["gradient H0", "casimir H0", "H0 conserved along phi0"]

    def test_corrupt_state(self, kdv):
        state = build_hierarchy(kdv["A1"], kdv["A2"], 2)
        hams = list(state.hamiltonians)
        hams[1] = F(kdv["ctx"], "u^3")
        cert = verify_hierarchy(replace(state, hamiltonians=hams))
        assert not cert.passed
        assert "gradient H1" in cert.failures
        assert "{H1,H2}_A1 = 0" in cert.failures


class TestPoisson:
    def test_self_bracket(self, kdv):
        H = F(kdv["ctx"], "u^3 + u*u_x^2")
        assert poisson_bracket(H, H, kdv["A2"]).is_zero()

    def test_casimir_bracket(self, kdv):
        assert poisson_bracket(F(kdv["ctx"], "u"), F(kdv["ctx"], "u_xx^2*u"), kdv["A1"]).is_zero()

    def test_hierarchy_members(self, kdv):
        ctx = kdv["ctx"]
        assert poisson_bracket(F(ctx, "1/2*u^2"), F(ctx, "1/2*u^3 + 1/4*u_x^2"), kdv["A1"]).is_zero()
        assert not poisson_bracket(F(ctx, "u^2"), F(ctx, "u_x^2*u^2"), kdv["A2"]).is_zero()

    def test_requires_skew(self, kdv):
        with pytest.raises(NotSkewAdjoint):
            poisson_bracket(F(kdv["ctx"], "u"), F(kdv["ctx"], "u"), TotalOperator.parse(kdv["ctx"], "u", kdv["domain"]))


class TestJacobi:
    @pytest.mark.parametrize("op", ["A1", "A2"])
    def test_fixed_triple(self, kdv, op):
        ctx = kdv["ctx"]
        assert jacobi_functional_check(kdv[op], F(ctx, "1/2*u^2"), F(ctx, "1/6*u^3"), F(ctx, "1/2*u_x^2"))

    def test_with_casimir(self, kdv):
        ctx = kdv["ctx"]
        assert jacobi_functional_check(kdv["A1"], F(ctx, "u"), F(ctx, "u^2*u_x^2"), F(ctx, "u_xx^2"))

    def test_random_functionals_are_seeded(self, kdv):
        a = random_functional(kdv["ctx"], random.Random(4))
        b = random_functional(kdv["ctx"], random.Random(4))
        assert a.density == b.density
