"""Seeded property suites for the exact kernel.

Each suite is a hypothesis test with 100 derandomised examples; the unit
test module runs them individually and the acceptance module times them.
"""

from fractions import Fraction

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from jetgamma.expr import Fibre, JetContext, eval_at, format_expr, total_derivative
from jetgamma.jetcalc import (
    Section,
    commutator,
    euler_operator,
    evolutionary,
    homotopy_inverse,
    is_total_divergence,
    kappa,
)
from jetgamma.operators import TotalOperator, adjoint, apply, compose
from jetgamma.jetcalc import Space

SUITE = settings(
    max_examples=100,
    derandomize=True,
    deadline=None,
    database=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)

CTX = JetContext(("x", "y"), ("u", "v"), ("lam",))
LINE = JetContext(("x",), ("u",))
ATOMS = ["u", "u_x", "u_y", "u_xy", "u_xx", "v", "v_x", "v_yy", "x", "y", "lam", "exp(u)", "exp(-u)", "exp(2*v)"]
POLY_ATOMS = ["u", "u_x", "u_y", "u_xy", "u_xx", "v", "v_x", "v_yy", "x", "lam"]
LINE_JETS = ["u", "u_x", "u_xx", "u_xxx"]

coeffs = st.fractions(min_value=-5, max_value=5, max_denominator=3)


def _expr(ctx, atoms, max_terms=4, max_factors=3):
    term = st.tuples(coeffs, st.lists(st.sampled_from(atoms), max_size=max_factors))

    def build(terms):
        out = ctx.zero
        for c, factors in terms:
            t = ctx.const(c)
            for a in factors:
                t = t * ctx.parse(a)
            out = out + t
        return out

    return st.lists(term, max_size=max_terms).map(build)


exprs = _expr(CTX, ATOMS)
polys = _expr(CTX, POLY_ATOMS)
line_polys = _expr(LINE, LINE_JETS, max_terms=3, max_factors=3)
directions = st.sampled_from(["x", "y"])


def _sections(ctx, atoms):
    e = _expr(ctx, atoms, max_terms=2, max_factors=2)
    return st.tuples(e, e).map(lambda c: Section(c, kappa(ctx)))


sections = _sections(CTX, POLY_ATOMS)

_POINT_KEYS = ["u", "u_x", "u_y", "u_xy", "u_xx", "u_xxx", "u_xxy", "u_xyy", "u_yy",
               "v", "v_x", "v_y", "v_xx", "v_xy", "v_yy", "v_xyy", "v_yyy", "x", "y", "lam"]
points = st.fixed_dictionaries({k: st.fractions(min_value=-4, max_value=4, max_denominator=5) for k in _POINT_KEYS})
exp_vals = st.fixed_dictionaries({
    "exp(u)": st.fractions(min_value=Fraction(1, 4), max_value=4, max_denominator=5),
    "exp(v)": st.fractions(min_value=Fraction(1, 4), max_value=4, max_denominator=5),
})


# -- suites ------------------------------------------------------------------------


@SUITE
@given(exprs, exprs, exprs)
def ring_axioms(a, b, c):
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a + b == b + a
    assert a * b == b * a
    assert a * (b + c) == a * b + a * c
    assert a - a == 0 and a * 1 == a


@SUITE
@given(exprs, directions, directions)
def derivatives_commute(a, i, j):
    assert total_derivative(total_derivative(a, i), j) == total_derivative(total_derivative(a, j), i)


@SUITE
@given(exprs, exprs, directions)
def leibniz(a, b, i):
    assert total_derivative(a * b, i) == total_derivative(a, i) * b + a * total_derivative(b, i)


@SUITE
@given(exprs, exprs, points, exp_vals)
def numeric_consistency(a, b, point, ev):
    assert eval_at(a + b, point, ev) == eval_at(a, point, ev) + eval_at(b, point, ev)
    assert eval_at(a * b, point, ev) == eval_at(a, point, ev) * eval_at(b, point, ev)


@SUITE
@given(sections, sections, exprs, exprs, directions)
def evolutionary_fields(phi, psi, f, g, i):
    # derivation, commutation with total derivatives, and the Lie bracket of fields
    assert evolutionary(phi, f * g) == evolutionary(phi, f) * g + f * evolutionary(phi, g)
    assert evolutionary(phi, total_derivative(f, i)) == total_derivative(evolutionary(phi, f), i)
    lhs = evolutionary(phi, evolutionary(psi, f)) - evolutionary(psi, evolutionary(phi, f))
    assert lhs == evolutionary(commutator(phi, psi), f)


@SUITE
@given(exprs, directions)
def euler_kills_divergences(a, i):
    assert euler_operator(total_derivative(a, i)).is_zero()
    assert is_total_divergence(total_derivative(a, i))


@SUITE
@given(line_polys)
def homotopy_right_inverse(density):
    psi = euler_operator(density)
    h = homotopy_inverse(psi)
    assert euler_operator(h.density) == psi
    assert (h - Functional_of(density)).is_zero()


def Functional_of(density):
    from jetgamma.jetcalc import Functional

    return Functional(density)


PQ = JetContext(("x", "y"), ("u", Fibre("p", parameter=True), Fibre("q", parameter=True)))
_op_entries = st.dictionaries(
    st.sampled_from([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1)]),
    _expr(PQ, ["u", "u_x", "u_y", "x"], max_terms=2, max_factors=2),
    max_size=3,
)
_SCALAR = Space("xi", 1, "even")


def _operator(entry):
    return TotalOperator([[entry]], _SCALAR, Space("kappa", 1, "even"), PQ)


@SUITE
@given(_op_entries)
def adjoint_divergence(entry):
    A = _operator(entry)
    p, q = PQ.jet("p"), PQ.jet("q")
    Aq = apply(A, Section([q], _SCALAR))[0]
    At = adjoint(A)
    Atp = apply(At, Section([p], At.domain))[0]
    assert is_total_divergence(p * Aq - Atp * q)
    assert adjoint(At) == A


@SUITE
@given(_op_entries, _op_entries)
def composition_laws(e1, e2):
    A, B = _operator(e1), _operator(e2)
    B = TotalOperator(B.entries, _SCALAR, _SCALAR, PQ)
    p = Section([PQ.jet("p")], _SCALAR)
    assert apply(compose(A, B), p) == apply(A, apply(B, p))
    assert adjoint(compose(A, B)).entries == compose(adjoint(B), adjoint(A)).entries


@SUITE
@given(exprs)
def parse_print_round_trip(a):
    text = format_expr(a)
    assert CTX.parse(text) == a
    assert format_expr(CTX.parse(text)) == text


SUITES = {
    "ring axioms": ring_axioms,
    "total derivatives commute": derivatives_commute,
    "Leibniz rule": leibniz,
    "symbolic/numeric consistency": numeric_consistency,
    "evolutionary fields": evolutionary_fields,
    "Euler annihilates divergences": euler_kills_divergences,
    "homotopy right inverse": homotopy_right_inverse,
    "adjoint divergence identity": adjoint_divergence,
    "composition laws": composition_laws,
    "parse/print round trip": parse_print_round_trip,
}
