import pytest

from jetgamma.expr import JetContext, total_derivative
from jetgamma.jetcalc import (
    Equation,
    Functional,
    HomotopyUnsupported,
    NotVariational,
    ProlongationDepthExceeded,
    Section,
    SpaceMismatch,
    commutator,
    covectors,
    euler_operator,
    evolutionary,
    homotopy_inverse,
    is_helmholtz,
    is_total_divergence,
    kappa,
    linearization,
    reduce_on_shell,
)
from jetgamma.operators import TotalOperator


@pytest.fixture
def line():
    return JetContext(("x",), ("u",))


@pytest.fixture
def plane():
    return JetContext(("x", "y"), ("u",))


def sec(ctx, *texts):
    return Section([ctx.parse(t) for t in texts], kappa(ctx))


def grad(ctx, *texts):
    return Section([ctx.parse(t) for t in texts], covectors(ctx))


class TestEvolutionary:
    def test_on_coordinates(self, line):
        phi = sec(line, "u*u_x + u_xxx")
        assert evolutionary(phi, line.parse("u_x")) == total_derivative(phi[0], "x")
        assert evolutionary(phi, line.parse("u")) == phi[0]

    def test_translation(self, line):
        assert evolutionary(sec(line, "u_x"), line.parse("u_xx")) == line.parse("u_xxx")

    def test_constants(self, line):
        assert evolutionary(sec(line, "u^2"), line.parse("7/2")) == 0

    def test_exponentials(self, plane):
        assert evolutionary(sec(plane, "u_x"), plane.parse("exp(2*u)")) == plane.parse("2*u_x*exp(2*u)")

    def test_requires_a_vector(self, line):
        with pytest.raises(SpaceMismatch):
            evolutionary(grad(line, "u"), line.parse("u"))

    def test_commutator(self, line):
        phi = sec(line, "u*u_x")
        assert commutator(phi, phi).is_zero()
        # the first two nontrivial KdV flows commute
        assert commutator(sec(line, "u_x"), sec(line, "u_xxx")).is_zero()
        assert commutator(sec(line, "u_x"), sec(line, "-1/2*u_xxx + 3*u*u_x")).is_zero()
        assert not commutator(sec(line, "u"), sec(line, "u^2")).is_zero()


class TestLinearization:
    def test_conserved_density(self, line):
        assert linearization(line.parse("u_x^2 - u_xx")) == TotalOperator.parse(line, "2*u_x*D_x - D_xx")

    def test_identity(self, line):
        ell = linearization(line.parse("u"))
        assert ell.entries == TotalOperator.identity(line, kappa(line)).entries

    def test_exponential(self, plane):
        ell = linearization(plane.parse("exp(2*u)"))
        assert ell.entries == [[{(0, 0): plane.parse("2*exp(2*u)")}]]


class TestEuler:
    def test_single_integration_by_parts(self, line):
        assert euler_operator(line.parse("u_x^2")) == grad(line, "-2*u_xx")

    def test_divergence(self, line):
        assert euler_operator(total_derivative(line.parse("u^3*u_xx"), "x")).is_zero()

    def test_kdv_gradient(self, line):
        assert euler_operator(line.parse("1/2*u^3 + 1/4*u_x^2")) == grad(line, "3/2*u^2 - 1/2*u_xx")

    def test_exponential_density(self, plane):
        assert euler_operator(plane.parse("u_x*u_y + exp(2*u)")) == grad(plane, "-2*u_xy + 2*exp(2*u)")

    @pytest.mark.parametrize("text,expected", [
        ("u_x*u_xx", True),
        ("u^2", False),
        ("u*u_xxx + 3*u_x*u_xx", True),
        ("x*u_x + u", True),
        ("x*u", False),
    ])
    def test_is_total_divergence(self, line, text, expected):
        assert is_total_divergence(line.parse(text)) is expected

    def test_divergence_in_two_directions(self, plane):
        a = plane.parse("u_x*u_yy + u_xy*u_y")
        assert is_total_divergence(a)


class TestHomotopy:
    def test_casimir(self, line):
        assert homotopy_inverse(grad(line, "1")).density == line.parse("u")

    def test_quadratic(self, line):
        assert homotopy_inverse(grad(line, "u")).density == line.parse("1/2*u^2")

    def test_kdv_density(self, line):
        H = homotopy_inverse(grad(line, "3/2*u^2 - 1/2*u_xx"))
        assert H == Functional(line.parse("1/2*u^3 + 1/4*u_x^2"))
        assert H.normalized().density == line.parse("1/2*u^3 + 1/4*u_x^2")

    def test_not_variational(self, line):
        assert not is_helmholtz(grad(line, "u_x"))
        with pytest.raises(NotVariational):
            homotopy_inverse(grad(line, "u_x"))

    def test_exponential_unsupported(self, plane):
        with pytest.raises(HomotopyUnsupported):
            homotopy_inverse(grad(plane, "exp(2*u)"))


class TestFunctional:
    def test_equality_modulo_divergence(self, line):
        assert Functional(line.parse("u*u_xx")) == Functional(line.parse("-u_x^2"))
        assert Functional(line.parse("u_x")).is_zero()

    def test_normalized_density(self, line):
        assert Functional(line.parse("u*u_xx")).normalized().density == line.parse("-u_x^2")
        assert Functional(line.parse("u^2*u_xxx")).normalized().density == Functional(
            line.parse("u^2*u_xxx")).normalized().density


class TestOnShell:
    def test_liouville(self, plane):
        eq = Equation.from_strings(plane, ["u_xy = exp(2*u)"])
        assert reduce_on_shell(plane.parse("u_xy - exp(2*u)"), eq) == 0
        assert reduce_on_shell(plane.parse("u_xx"), eq) == plane.parse("u_xx")
        assert reduce_on_shell(plane.parse("u_xxy"), eq) == plane.parse("2*u_x*exp(2*u)")

    def test_conservation_on_shell(self, plane):
        eq = Equation.from_strings(plane, ["u_xy = exp(2*u)"])
        w = plane.parse("u_x^2 - u_xx")
        assert reduce_on_shell(total_derivative(w, "y"), eq) == 0
        assert reduce_on_shell(total_derivative(w, "x"), eq) != 0

    def test_idempotent(self, plane):
        eq = Equation.from_strings(plane, ["u_xy = exp(2*u)"])
        a = reduce_on_shell(plane.parse("u_xxyy*u_xy + u_yyy"), eq)
        assert reduce_on_shell(a, eq) == a

    def test_depth_cap(self, line):
        eq = Equation.from_strings(line, ["u_x = u_xx"], max_depth=5)
        with pytest.raises(ProlongationDepthExceeded):
            reduce_on_shell(line.parse("u_x"), eq)

    def test_malformed_rules(self, plane):
        with pytest.raises(ValueError):
            Equation.from_strings(plane, ["u_xy"])
        with pytest.raises(ValueError):
            Equation.from_strings(plane, ["x = u"])
        with pytest.raises(ValueError):
            Equation.from_strings(plane, ["u_x = 0", "u_xy = 0"])
