"""Exact differential polynomials over an infinite jet space.

A :class:`DiffExpr` is a finite sum ``coef * monomial``.  Coefficients are
exact rationals (``int`` or :class:`~fractions.Fraction`); a monomial is a
product of

* formal scalar parameters (``lam1``, ...),
* independent variables ``x, y, ...`` and reciprocals ``inv(x + c)``,
* jet variables ``u, u_x, u_xy, ...`` of the fibres, and
* exponentials ``exp(c*u)`` of zero-order fibre variables.

Values are immutable and kept in normal form, so equality is structural.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Iterable, Mapping, Union

# Factor kinds; the integer leads every factor key and fixes the monomial order.
SCALAR, BASE, RECIP, JET, EXP = range(5)

Key = tuple
Monomial = tuple  # sorted tuple of (key, power)
Number = Union[int, Fraction]

_NAME = re.compile(r"[A-Za-z][A-Za-z0-9]*\Z")
RESERVED = frozenset({"exp", "inv", "D"})


class ContextMismatch(ValueError):
    """Operands live over unrelated jet contexts."""


class UnassignedVariable(KeyError):
    """``eval_at`` met a variable without a value."""


@dataclass(frozen=True)
class Fibre:
    """A dependent fibre coordinate.

    ``parity`` is ``"even"`` for vector-like and ``"odd"`` for covector-like
    sections; ``parameter`` marks the formal argument fibres ``p, q``.
    """

    name: str
    parity: str = "even"
    parameter: bool = False

    def __post_init__(self):
        if self.parity not in ("even", "odd"):
            raise ValueError(f"parity must be 'even' or 'odd', got {self.parity!r}")


@dataclass(frozen=True)
class JetContext:
    """Independent variables, fibres and scalar parameters of a jet space."""

    independents: tuple
    fibres: tuple
    scalars: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "independents", tuple(self.independents))
        fibres = tuple(f if isinstance(f, Fibre) else Fibre(f) for f in self.fibres)
        object.__setattr__(self, "fibres", fibres)
        object.__setattr__(self, "scalars", tuple(self.scalars))
        if not self.independents:
            raise ValueError("at least one independent variable is required")
        for x in self.independents:
            if len(x) != 1 or not x.isalpha():
                raise ValueError(f"independent variable names must be single letters: {x!r}")
        names = list(self.independents) + [f.name for f in fibres] + list(self.scalars)
        for name in names:
            if not _NAME.match(name) or name in RESERVED:
                raise ValueError(f"invalid identifier {name!r}")
        if len(set(names)) != len(names):
            raise ValueError(f"names must be unique: {names}")

    # -- lookup --------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.independents)

    @cached_property
    def zero_index(self) -> tuple:
        return (0,) * self.n

    @cached_property
    def _fibre_pos(self) -> dict:
        return {f.name: i for i, f in enumerate(self.fibres)}

    @cached_property
    def dependents(self) -> tuple:
        """Indices of the non-parameter fibres (the coordinates of J^inf)."""
        return tuple(i for i, f in enumerate(self.fibres) if not f.parameter)

    @cached_property
    def parameters(self) -> tuple:
        return tuple(i for i, f in enumerate(self.fibres) if f.parameter)

    def fibre_index(self, name) -> int:
        if isinstance(name, int):
            return name
        try:
            return self._fibre_pos[name]
        except KeyError:
            raise KeyError(f"unknown fibre {name!r}") from None

    def direction(self, d) -> int:
        if isinstance(d, int):
            if not 0 <= d < self.n:
                raise ValueError(f"unknown direction {d!r}")
            return d
        try:
            return self.independents.index(d)
        except ValueError:
            raise ValueError(f"unknown direction {d!r}") from None

    def multi_index(self, spec) -> tuple:
        """Normalise ``"xxy"``, ``{"x": 2, "y": 1}`` or a tuple to a tuple."""
        if spec is None:
            return self.zero_index
        if isinstance(spec, str):
            mi = [0] * self.n
            for ch in spec:
                mi[self.direction(ch)] += 1
            return tuple(mi)
        if isinstance(spec, Mapping):
            mi = [0] * self.n
            for k, v in spec.items():
                if v < 0:
                    raise ValueError("multi-index entries must be non-negative")
                mi[self.direction(k)] += v
            return tuple(mi)
        mi = tuple(int(v) for v in spec)
        if len(mi) != self.n or min(mi) < 0:
            raise ValueError(f"bad multi-index {spec!r}")
        return mi

    def index_letters(self, mi) -> str:
        return "".join(x * k for x, k in zip(self.independents, mi))

    # -- extension -----------------------------------------------------------

    def extends(self, other: "JetContext") -> bool:
        """True if ``other`` is a prefix of this context."""
        return (
            self.independents == other.independents
            and self.fibres[: len(other.fibres)] == other.fibres
            and self.scalars[: len(other.scalars)] == other.scalars
        )

    def with_fibres(self, *fibres: Fibre) -> "JetContext":
        return JetContext(self.independents, self.fibres + tuple(fibres), self.scalars)

    def with_scalars(self, *names: str) -> "JetContext":
        return JetContext(self.independents, self.fibres, self.scalars + tuple(names))

    # -- atoms ---------------------------------------------------------------

    def const(self, c) -> "DiffExpr":
        c = _rational(c)
        return DiffExpr(self, {(): c} if c else {})

    @property
    def zero(self) -> "DiffExpr":
        return DiffExpr(self, {})

    @property
    def one(self) -> "DiffExpr":
        return self.const(1)

    def jet(self, fibre, index=None) -> "DiffExpr":
        f = self.fibre_index(fibre)
        return _atom(self, (JET, f, self.multi_index(index)))

    def coordinate(self, name) -> "DiffExpr":
        return _atom(self, (BASE, self.direction(name)))

    def scalar(self, name) -> "DiffExpr":
        return _atom(self, (SCALAR, self.scalars.index(name)))

    def exp(self, c, fibre) -> "DiffExpr":
        """``exp(c * u_fibre)``."""
        c = _rational(c)
        if c == 0:
            return self.one
        return DiffExpr(self, {(((EXP, self.fibre_index(fibre)), c),): 1})

    def recip(self, name, c=0) -> "DiffExpr":
        """``1 / (x + c)`` for an independent variable ``x``."""
        return _atom(self, (RECIP, self.direction(name), Fraction(c)))

    def var(self, name: str) -> "DiffExpr":
        """Resolve an identifier such as ``u_xy``, ``x`` or ``lam1``."""
        if "_" in name:
            fibre, _, letters = name.partition("_")
            if not letters:
                raise KeyError(f"unknown identifier {name!r}")
            return self.jet(fibre, letters)
        if name in self.independents:
            return self.coordinate(name)
        if name in self.scalars:
            return self.scalar(name)
        return self.jet(name)

    def parse(self, text: str) -> "DiffExpr":
        from .parse import parse_expr

        return parse_expr(self, text)


def _rational(c) -> Number:
    if isinstance(c, bool):
        return int(c)
    if isinstance(c, int):
        return c
    if isinstance(c, Rational):
        c = Fraction(c)
        return c.numerator if c.denominator == 1 else c
    if isinstance(c, str):
        return _rational(Fraction(c))
    raise TypeError(f"expected an exact rational, got {type(c).__name__}")


def _atom(ctx, key) -> "DiffExpr":
    return DiffExpr(ctx, {((key, 1),): 1})


def unify(a: JetContext, b: JetContext) -> JetContext:
    if a is b or a == b:
        return a
    if a.extends(b):
        return a
    if b.extends(a):
        return b
    raise ContextMismatch("expressions live over unrelated jet contexts")


# -- monomial arithmetic ----------------------------------------------------------


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for k, p in b:
        q = d.get(k, 0) + p
        if q:
            d[k] = q
        else:
            del d[k]
    return tuple(sorted(d.items()))


def _mono_without(m: Monomial, pos: int) -> Monomial:
    key, p = m[pos]
    if p == 1:
        return m[:pos] + m[pos + 1:]
    return m[:pos] + ((key, p - 1),) + m[pos + 1:]


def _recip_rewrite(m: Monomial):
    """One reduction step for reciprocal atoms, or ``None`` if ``m`` is reduced.

    Uses ``x * inv(x+c) = 1 - c*inv(x+c)`` and the partial fraction
    ``inv(x+a)*inv(x+b) = (inv(x+a) - inv(x+b)) / (b - a)``.
    """
    recips = [(pos, k) for pos, (k, _) in enumerate(m) if k[0] == RECIP]
    if not recips:
        return None
    for pos, key in recips:
        for pos2, (k2, _) in enumerate(m):
            if k2 == (BASE, key[1]):
                c = key[2]
                rest = _mono_without(_mono_without(m, max(pos, pos2)), min(pos, pos2))
                return [(rest, 1), (_mono_mul(rest, ((key, 1),)), -c)]
    for (p1, k1), (p2, k2) in zip(recips, recips[1:]):
        if k1[1] == k2[1]:
            a, b = k1[2], k2[2]
            rest = _mono_without(_mono_without(m, p2), p1)
            s = Fraction(1) / (b - a)
            return [(_mono_mul(rest, ((k1, 1),)), s), (_mono_mul(rest, ((k2, 1),)), -s)]
    return None


def _reduce_recips(terms: dict) -> dict:
    out: dict = {}
    stack = list(terms.items())
    while stack:
        m, c = stack.pop()
        step = _recip_rewrite(m)
        if step is None:
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        else:
            stack.extend((m2, c * c2) for m2, c2 in step if c2)
    return out


def _has_recip(terms) -> bool:
    return any(k[0] == RECIP for m in terms for k, _ in m)


def _acc(out: dict, m: Monomial, c) -> None:
    v = out.get(m, 0) + c
    if v:
        out[m] = v
    else:
        out.pop(m, None)


# -- the expression type ----------------------------------------------------------


class DiffExpr:
    """An element of the differential polynomial ring of a :class:`JetContext`."""

    __slots__ = ("ctx", "_terms", "_hash")

    def __init__(self, ctx: JetContext, terms: dict):
        self.ctx = ctx
        self._terms = terms
        self._hash = None

    # -- coercion -------------------------------------------------------------

    def _coerce(self, other) -> "DiffExpr":
        if isinstance(other, DiffExpr):
            return other
        return self.ctx.const(other)

    @property
    def terms(self) -> dict:
        """Read-only view ``{monomial: coefficient}``; do not mutate."""
        return self._terms

    def items(self):
        """Terms in the canonical printing order."""
        return sorted(self._terms.items(), key=lambda t: monomial_sort_key(t[0]))

    def lift(self, ctx: JetContext) -> "DiffExpr":
        if ctx is self.ctx:
            return self
        if not ctx.extends(self.ctx):
            raise ContextMismatch("target context does not extend the source")
        return DiffExpr(ctx, self._terms)

    # -- ring operations -------------------------------------------------------

    def __add__(self, other):
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        ctx = unify(self.ctx, other.ctx)
        if len(other._terms) > len(self._terms):
            big, small = other._terms, self._terms
        else:
            big, small = self._terms, other._terms
        t = dict(big)
        for m, c in small.items():
            _acc(t, m, c)
        return DiffExpr(ctx, t)

    __radd__ = __add__

    def __neg__(self):
        return DiffExpr(self.ctx, {m: -c for m, c in self._terms.items()})

    def __pos__(self):
        return self

    def __sub__(self, other):
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.scale(other)
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        ctx = unify(self.ctx, other.ctx)
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                _acc(out, _mono_mul(m1, m2), c1 * c2)
        if _has_recip(out):
            out = _reduce_recips(out)
        return DiffExpr(ctx, out)

    __rmul__ = __mul__

    def scale(self, c) -> "DiffExpr":
        c = _rational(c)
        if not c:
            return DiffExpr(self.ctx, {})
        return DiffExpr(self.ctx, {m: c * v for m, v in self._terms.items()})

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.scale(Fraction(1) / Fraction(other))
        return NotImplemented

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = self.ctx.one
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # -- comparison ------------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, DiffExpr):
            return self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            if not other:
                return not self._terms
            return self._terms == {(): other}
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __bool__(self):
        return bool(self._terms)

    def is_constant(self) -> bool:
        return all(not m for m in self._terms)

    def constant_value(self) -> Number:
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return self._terms.get((), 0)

    def __str__(self):
        return format_expr(self)

    def __repr__(self):
        return f"DiffExpr({format_expr(self)!r})"

    # -- structure -------------------------------------------------------------

    def variables(self) -> set:
        return {k for m in self._terms for k, _ in m}

    def jet_keys(self, fibres: Iterable[int] | None = None) -> set:
        keys = {k for m in self._terms for k, _ in m if k[0] == JET}
        if fibres is not None:
            fs = set(fibres)
            keys = {k for k in keys if k[1] in fs}
        return keys

    def has_exp(self) -> bool:
        return any(k[0] == EXP for m in self._terms for k, _ in m)


# -- derivations ------------------------------------------------------------------


def _bump(mi: tuple, i: int, by: int = 1) -> tuple:
    return mi[:i] + (mi[i] + by,) + mi[i + 1:]


def total_derivative(a: DiffExpr, direction) -> DiffExpr:
    """The total derivative ``D_direction(a)``."""
    ctx = a.ctx
    i = ctx.direction(direction)
    zero = ctx.zero_index
    out: dict = {}
    for mono, coef in a._terms.items():
        for pos, (key, p) in enumerate(mono):
            kind = key[0]
            if kind == JET:
                nk = (JET, key[1], _bump(key[2], i))
                _acc(out, _mono_mul(_mono_without(mono, pos), ((nk, 1),)), coef * p)
            elif kind == BASE:
                if key[1] == i:
                    _acc(out, _mono_without(mono, pos), coef * p)
            elif kind == RECIP:
                if key[1] == i:
                    nm = mono[:pos] + ((key, p + 1),) + mono[pos + 1:]
                    _acc(out, nm, -coef * p)
            elif kind == EXP:
                nk = (JET, key[1], _bump(zero, i))
                _acc(out, _mono_mul(mono, ((nk, 1),)), coef * p)
    return DiffExpr(ctx, out)


def total_derivative_multi(a: DiffExpr, index) -> DiffExpr:
    """``D^sigma(a)`` for a multi-index ``sigma``."""
    mi = a.ctx.multi_index(index)
    for i, k in enumerate(mi):
        for _ in range(k):
            a = total_derivative(a, i)
    return a


def partial(a: DiffExpr, key: Key) -> DiffExpr:
    """Partial derivative with respect to a single atom key.

    For the zero-order jet of a fibre the exponentials ``exp(c*u)`` of that
    fibre are differentiated as well.
    """
    ctx = a.ctx
    exp_key = None
    if key[0] == JET and key[2] == ctx.zero_index:
        exp_key = (EXP, key[1])
    out: dict = {}
    for mono, coef in a._terms.items():
        for pos, (k, p) in enumerate(mono):
            if k == key:
                if k[0] == RECIP:
                    raise ValueError("partial derivatives in reciprocal atoms are not supported")
                _acc(out, _mono_without(mono, pos), coef * p)
            elif k == exp_key:
                _acc(out, mono, coef * p)
    return DiffExpr(ctx, out)


def substitute(a: DiffExpr, assignment: Mapping) -> DiffExpr:
    """Simultaneous substitution of atoms (jet variables, coordinates, scalars)."""
    ctx = a.ctx
    mapping = {}
    for k, v in assignment.items():
        key = atom_key(k) if isinstance(k, DiffExpr) else (atom_key(ctx.var(k)) if isinstance(k, str) else k)
        if not isinstance(v, DiffExpr):
            v = ctx.const(v)
        ctx = unify(ctx, v.ctx)
        mapping[key] = v
    if not mapping:
        return a.lift(ctx) if ctx is not a.ctx else a
    zero = a.ctx.zero_index
    blocked = {(EXP, k[1]) for k in mapping if k[0] == JET and k[2] == zero}
    powers: dict = {}
    out = ctx.zero
    for mono, coef in a._terms.items():
        keep = []
        factor = None
        for k, p in mono:
            if k in blocked:
                raise ValueError("cannot substitute a fibre variable that sits inside exp()")
            if k in mapping:
                pw = powers.get((k, p))
                if pw is None:
                    pw = powers[(k, p)] = mapping[k] ** p
                factor = pw if factor is None else factor * pw
            else:
                keep.append((k, p))
        term = DiffExpr(ctx, {tuple(keep): coef})
        out = out + (term if factor is None else term * factor)
    return out


def atom_key(e: DiffExpr) -> Key:
    """The key of a single atom such as ``u_x`` or ``x``."""
    if len(e._terms) == 1:
        (m, c), = e._terms.items()
        if c == 1 and len(m) == 1 and m[0][1] == 1 and m[0][0][0] != EXP:
            return m[0][0]
    raise ValueError(f"{e} is not a single variable")


def eval_at(a: DiffExpr, point: Mapping, exp_values: Mapping | None = None) -> Fraction:
    """Evaluate at an exact rational point.

    ``point`` maps atoms (``DiffExpr`` or identifier strings) to rationals;
    ``exp_values`` maps ``exp(c*u)`` atoms to rationals.  An exponential
    whose exact rate is not given is derived from a given rate when the
    ratio is an integer.
    """
    ctx = a.ctx
    values = {}
    for k, v in point.items():
        e = ctx.var(k) if isinstance(k, str) else k
        values[atom_key(e)] = Fraction(v)
    exps = {}
    for k, v in (exp_values or {}).items():
        e = ctx.parse(k) if isinstance(k, str) else k
        ((m, c),) = e._terms.items()
        if c != 1 or len(m) != 1 or m[0][0][0] != EXP:
            raise ValueError(f"{e} is not an exponential atom")
        exps[(m[0][0][1], Fraction(m[0][1]))] = Fraction(v)

    def exp_value(f, rate):
        if (f, rate) in exps:
            return exps[(f, rate)]
        for (g, r), v in exps.items():
            if g == f and r and (rate / r).denominator == 1:
                return v ** int(rate / r)
        raise UnassignedVariable(f"no value for exp({rate}*{ctx.fibres[f].name})")

    total = Fraction(0)
    for mono, coef in a._terms.items():
        val = Fraction(coef)
        for k, p in mono:
            if k[0] == EXP:
                val *= exp_value(k[1], Fraction(p))
            elif k[0] == RECIP:
                x = values.get((BASE, k[1]))
                if x is None:
                    raise UnassignedVariable(f"no value for {ctx.independents[k[1]]}")
                val /= (x + k[2]) ** p
            else:
                if k not in values:
                    raise UnassignedVariable(f"no value for {format_factor(ctx, k, 1)}")
                val *= values[k] ** p
        total += val
    return total


# -- printing ---------------------------------------------------------------------


def _factor_sort_key(key):
    if key[0] == JET:
        mi = key[2]
        return (JET, key[1], sum(mi), tuple(-v for v in mi))
    return key


def monomial_sort_key(m: Monomial):
    """Printing order: higher degree first, then fibre, then graded-lex index."""
    deg = sum(p for k, p in m if k[0] != EXP)
    return (-deg, tuple((_factor_sort_key(k), -p if k[0] != EXP else p) for k, p in m))


def format_rational(c) -> str:
    c = Fraction(c)
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def format_factor(ctx: JetContext, key, p) -> str:
    kind = key[0]
    if kind == EXP:
        name = ctx.fibres[key[1]].name
        if p == 1:
            return f"exp({name})"
        if p == -1:
            return f"exp(-{name})"
        return f"exp({format_rational(p)}*{name})"
    if kind == SCALAR:
        s = ctx.scalars[key[1]]
    elif kind == BASE:
        s = ctx.independents[key[1]]
    elif kind == RECIP:
        x, c = ctx.independents[key[1]], key[2]
        if c == 0:
            s = f"inv({x})"
        elif c > 0:
            s = f"inv({x}+{format_rational(c)})"
        else:
            s = f"inv({x}-{format_rational(-c)})"
    else:
        f, mi = key[1], key[2]
        s = ctx.fibres[f].name
        if any(mi):
            s += "_" + ctx.index_letters(mi)
    return s if p == 1 else f"{s}^{p}"


def format_monomial(ctx: JetContext, m: Monomial) -> str:
    ordered = sorted(m, key=lambda kp: _factor_sort_key(kp[0]))
    return "*".join(format_factor(ctx, k, p) for k, p in ordered)


def format_expr(a: DiffExpr) -> str:
    if not a._terms:
        return "0"
    parts = []
    for m, c in a.items():
        c = Fraction(c)
        body = format_monomial(a.ctx, m)
        mag = abs(c)
        if not body:
            s = format_rational(mag)
        elif mag == 1:
            s = body
        else:
            s = f"{format_rational(mag)}*{body}"
        if not parts:
            parts.append(("-" if c < 0 else "") + s)
        else:
            parts.append((" - " if c < 0 else " + ") + s)
    return "".join(parts)
