"""Parser for the expression and operator-literal grammar.

Expressions::

    expr   := ['+'|'-'] term (('+'|'-') term)*
    term   := signed ('*' signed)*
    signed := '-' signed | power
    power  := atom ['^' INT]
    atom   := INT ['/' INT] | IDENT | ('exp'|'inv') '(' expr ')' | '(' expr ')'

Identifiers are fibre names with an optional derivative suffix (``u_xy``),
independent variables, or scalar parameters.  Operator literals add the
tokens ``D_x`` (``D_xy`` is ``D_x D_y``), read products as composition, and
allow a matrix ``[[a, b], [c, d]]`` at top level.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .expr import BASE, JET, DiffExpr, JetContext

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<id>[A-Za-z][A-Za-z0-9]*(?:_[A-Za-z]+)?)|(?P<op>[-+*/^(),\[\]]))"
)


class ParseError(ValueError):
    """Syntax error; ``pos`` is the character offset in the input."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


class UnknownIdentifier(ParseError):
    pass


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = len(text) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, operators: bool):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.operators = operators

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.next()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def at_end(self):
        kind, _, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {self.peek()[1]!r}", pos)

    # grammar ---------------------------------------------------------------

    def expr(self):
        terms = []
        sign = 1
        if self.peek()[1] in "+-" and self.peek()[0] == "op":
            sign = -1 if self.next()[1] == "-" else 1
        terms.append((sign, self.term()))
        while self.peek()[0] == "op" and self.peek()[1] in ("+", "-"):
            sign = -1 if self.next()[1] == "-" else 1
            terms.append((sign, self.term()))
        return terms[0][1] if len(terms) == 1 and terms[0][0] == 1 else ("add", terms)

    def term(self):
        factors = [self.signed()]
        while self.peek()[1] == "*" and self.peek()[0] == "op":
            self.next()
            factors.append(self.signed())
        return factors[0] if len(factors) == 1 else ("mul", factors)

    def signed(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.next()
            return ("neg", self.signed())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.next()
            kind, val, pos = self.next()
            if kind != "num":
                raise ParseError("exponent must be a positive integer literal", pos)
            k = int(val)
            if k < 1:
                raise ParseError("exponent must be a positive integer literal", pos)
            return ("pow", base, k)
        return base

    def atom(self):
        kind, val, pos = self.next()
        if kind == "num":
            if self.peek()[1] == "/" and self.peek()[0] == "op":
                self.next()
                k2, v2, p2 = self.next()
                if k2 != "num":
                    raise ParseError("division is only allowed between integer literals", p2)
                if int(v2) == 0:
                    raise ParseError("division by zero", p2)
                return ("num", Fraction(int(val), int(v2)))
            return ("num", Fraction(int(val)))
        if kind == "id":
            if val in ("exp", "inv"):
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return ("call", val, arg, pos)
            if val.startswith("D_"):
                if not self.operators:
                    raise ParseError("derivative operator in a plain expression", pos)
                return ("D", val[2:], pos)
            return ("id", val, pos)
        if val == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected token {val!r}", pos)

    def matrix(self):
        self.expect("[")
        rows = [self.row()]
        while self.peek()[1] == ",":
            self.next()
            rows.append(self.row())
        self.expect("]")
        return rows

    def row(self):
        self.expect("[")
        cells = [self.expr()]
        while self.peek()[1] == ",":
            self.next()
            cells.append(self.expr())
        self.expect("]")
        return cells


# -- evaluation -------------------------------------------------------------------


def _eval_expr(ctx: JetContext, node) -> DiffExpr:
    tag = node[0]
    if tag == "num":
        return ctx.const(node[1])
    if tag == "id":
        return _resolve(ctx, node[1], node[2])
    if tag == "add":
        out = ctx.zero
        for sign, t in node[1]:
            v = _eval_expr(ctx, t)
            out = out + v if sign > 0 else out - v
        return out
    if tag == "mul":
        out = ctx.one
        for f in node[1]:
            out = out * _eval_expr(ctx, f)
        return out
    if tag == "neg":
        return -_eval_expr(ctx, node[1])
    if tag == "pow":
        return _eval_expr(ctx, node[1]) ** node[2]
    if tag == "call":
        return _call(ctx, node[1], _eval_expr(ctx, node[2]), node[3])
    raise ParseError("derivative operator in a plain expression", node[2])


def _resolve(ctx: JetContext, name: str, pos: int) -> DiffExpr:
    try:
        return ctx.var(name)
    except (KeyError, ValueError):
        raise UnknownIdentifier(f"unknown identifier {name!r}", pos) from None


def _call(ctx: JetContext, fname: str, arg: DiffExpr, pos: int) -> DiffExpr:
    if fname == "exp":
        if not arg:
            return ctx.one
        if len(arg.terms) == 1:
            (m, c), = arg.terms.items()
            if len(m) == 1 and m[0][1] == 1 and m[0][0][0] == JET and m[0][0][2] == ctx.zero_index:
                return ctx.exp(c, m[0][0][1])
        raise ParseError("exp() takes a rational multiple of a fibre variable", pos)
    # inv(a*x + b)
    lin = None
    shift = Fraction(0)
    for m, c in arg.terms.items():
        if not m:
            shift = Fraction(c)
        elif len(m) == 1 and m[0][1] == 1 and m[0][0][0] == BASE and lin is None:
            lin = (m[0][0][1], Fraction(c))
        else:
            lin = False
            break
    if not lin:
        raise ParseError("inv() takes an affine function a*x + b of one independent variable", pos)
    i, a = lin
    return ctx.recip(i, shift / a).scale(1 / a)


def parse_expr(ctx: JetContext, text: str) -> DiffExpr:
    """Parse ``text`` into a normal-form :class:`DiffExpr` over ``ctx``."""
    p = _Parser(text, operators=False)
    node = p.expr()
    p.at_end()
    return _eval_expr(ctx, node)


def parse_operator_entries(ctx: JetContext, text: str):
    """Parse an operator literal into a matrix of entries ``{sigma: coeff}``."""
    p = _Parser(text, operators=True)
    if p.peek()[1] == "[":
        cells = p.matrix()
        p.at_end()
        width = {len(r) for r in cells}
        if len(width) != 1:
            raise ParseError("matrix rows have different lengths", 0)
        return [[_eval_op(ctx, c) for c in row] for row in cells]
    node = p.expr()
    p.at_end()
    return [[_eval_op(ctx, node)]]


def _eval_op(ctx: JetContext, node) -> dict:
    from .operators import compose_entries

    tag = node[0]
    if tag == "D":
        letters, pos = node[1], node[2]
        try:
            mi = ctx.multi_index(letters)
        except ValueError:
            raise UnknownIdentifier(f"unknown direction in 'D_{letters}'", pos) from None
        return {mi: ctx.one}
    if tag == "add":
        out: dict = {}
        for sign, t in node[1]:
            for mi, c in _eval_op(ctx, t).items():
                v = out.get(mi, ctx.zero) + (c if sign > 0 else -c)
                if v:
                    out[mi] = v
                else:
                    out.pop(mi, None)
        return out
    if tag == "mul":
        out = {ctx.zero_index: ctx.one}
        for f in node[1]:
            out = compose_entries(out, _eval_op(ctx, f))
        return out
    if tag == "neg":
        return {mi: -c for mi, c in _eval_op(ctx, node[1]).items()}
    if tag == "pow":
        base = _eval_op(ctx, node[1])
        out = {ctx.zero_index: ctx.one}
        for _ in range(node[2]):
            out = compose_entries(out, base)
        return out
    value = _eval_expr(ctx, node)
    return {ctx.zero_index: value} if value else {}
