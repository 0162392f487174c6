"""Variational calculus on the jet space.

Sections of horizontal modules, evolutionary derivations, linearisations,
the Euler operator and its homotopy inverse, divergence tests, and
reduction modulo a differential equation and its prolongations.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .expr import (
    EXP,
    JET,
    DiffExpr,
    JetContext,
    _bump,
    atom_key,
    partial,
    substitute,
    total_derivative,
    total_derivative_multi,
    unify,
)


class SpaceMismatch(ValueError):
    """A section was passed where a different module was expected."""


class NotVariational(ValueError):
    """The section fails the Helmholtz test, so it is not an Euler image."""


class HomotopyUnsupported(ValueError):
    """Homotopy integration left the polynomial ring (exponential atoms)."""


class ProlongationDepthExceeded(RuntimeError):
    """On-shell reduction did not terminate within the depth cap."""


@dataclass(frozen=True)
class Space:
    """A horizontal module: a name, the fibre dimension and a parity.

    ``kappa`` is the module of generating sections of evolutionary fields;
    its dual ``kappa*`` holds the variational covectors.
    """

    name: str
    dim: int
    parity: str = "even"

    def dual(self) -> "Space":
        name = self.name[:-1] if self.name.endswith("*") else self.name + "*"
        return Space(name, self.dim, "odd" if self.parity == "even" else "even")


def kappa(ctx: JetContext) -> Space:
    return Space("kappa", len(ctx.dependents), "even")


def covectors(ctx: JetContext) -> Space:
    return kappa(ctx).dual()


class Section:
    """A tuple of :class:`DiffExpr` components living in a :class:`Space`."""

    __slots__ = ("components", "space")

    def __init__(self, components: Iterable, space: Space, ctx: JetContext | None = None):
        comps = []
        for c in components:
            if not isinstance(c, DiffExpr):
                if ctx is None:
                    raise TypeError("a context is needed to coerce constants")
                c = ctx.const(c)
            comps.append(c)
        if len(comps) != space.dim:
            raise SpaceMismatch(f"{space.name} has dimension {space.dim}, got {len(comps)} components")
        self.components = tuple(comps)
        self.space = space

    @classmethod
    def zero(cls, ctx: JetContext, space: Space) -> "Section":
        return cls([ctx.zero] * space.dim, space)

    @property
    def ctx(self) -> JetContext:
        ctx = self.components[0].ctx
        for c in self.components[1:]:
            ctx = unify(ctx, c.ctx)
        return ctx

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def _check(self, other: "Section"):
        if not isinstance(other, Section):
            raise TypeError("expected a Section")
        if other.space != self.space:
            raise SpaceMismatch(f"{self.space.name} vs {other.space.name}")

    def __add__(self, other):
        self._check(other)
        return Section([a + b for a, b in zip(self, other)], self.space)

    def __sub__(self, other):
        self._check(other)
        return Section([a - b for a, b in zip(self, other)], self.space)

    def __neg__(self):
        return Section([-a for a in self], self.space)

    def scale(self, c) -> "Section":
        return Section([a * c for a in self], self.space)

    def map(self, fn) -> "Section":
        return Section([fn(a) for a in self], self.space)

    def __eq__(self, other):
        if not isinstance(other, Section):
            return NotImplemented
        return self.space == other.space and self.components == other.components

    __hash__ = None

    def is_zero(self) -> bool:
        return not any(self.components)

    def __repr__(self):
        body = ", ".join(str(c) for c in self.components)
        return f"Section[{self.space.name}]({body})"


def _require_kappa(phi: Section, ctx: JetContext):
    if phi.space.name != "kappa" or phi.space.parity != "even":
        raise SpaceMismatch(
            f"evolutionary fields need a generating section in kappa, got {phi.space.name}"
        )
    if phi.space.dim != len(ctx.dependents):
        raise SpaceMismatch("generating section does not match the dependent fibres")


def _jet_keys_with_exp(a: DiffExpr, fibres) -> list:
    fs = set(fibres)
    keys = {k for m in a.terms for k, _ in m if k[0] == JET and k[1] in fs}
    zero = a.ctx.zero_index
    keys |= {(JET, k[1], zero) for m in a.terms for k, _ in m if k[0] == EXP and k[1] in fs}
    return sorted(keys)


class _Prolonger:
    """Memoised ``D^sigma`` of a fixed expression, built one step at a time."""

    def __init__(self, base: DiffExpr):
        self.cache = {base.ctx.zero_index: base}

    def __call__(self, mi: tuple) -> DiffExpr:
        got = self.cache.get(mi)
        if got is None:
            i = next(j for j, v in enumerate(mi) if v)
            got = total_derivative(self(_bump(mi, i, -1)), i)
            self.cache[mi] = got
        return got


def evolutionary(phi: Section, a: DiffExpr) -> DiffExpr:
    """``E_phi(a) = sum D^sigma(phi^f) * da/du^f_sigma`` over dependent fibres."""
    ctx = unify(a.ctx, phi.ctx)
    _require_kappa(phi, ctx)
    deps = ctx.dependents
    prolong = {f: _Prolonger(phi[n]) for n, f in enumerate(deps)}
    out = ctx.zero
    for key in _jet_keys_with_exp(a, deps):
        out = out + partial(a, key) * prolong[key[1]](key[2])
    return out


def commutator(phi: Section, psi: Section) -> Section:
    """Generating section of ``[E_phi, E_psi]``."""
    ctx = unify(phi.ctx, psi.ctx)
    _require_kappa(phi, ctx)
    _require_kappa(psi, ctx)
    return Section(
        [evolutionary(phi, b) - evolutionary(psi, a) for a, b in zip(phi, psi)], phi.space
    )


def linearization(F):
    """The operator ``l_F`` with ``l_F(phi) = E_phi(F)``."""
    from .operators import TotalOperator

    if isinstance(F, DiffExpr):
        F = Section([F], Space("scalar", 1, "even"))
    ctx = F.ctx
    deps = ctx.dependents
    rows = []
    for comp in F:
        row = []
        for f in deps:
            entry = {}
            for key in _jet_keys_with_exp(comp, [f]):
                entry[key[2]] = partial(comp, key)
            row.append(entry)
        rows.append(row)
    return TotalOperator(rows, kappa(ctx), F.space, ctx)


def euler_operator(density: DiffExpr, fibres: Sequence | None = None) -> Section:
    """Variational derivative ``sum_sigma (-D)^sigma d/du_sigma`` per fibre.

    By default the dependent fibres are used and the result is a covector;
    pass ``fibres`` (names or indices) to include parameter fibres.
    """
    ctx = density.ctx
    if fibres is None:
        fs = ctx.dependents
        space = covectors(ctx)
    else:
        fs = tuple(ctx.fibre_index(f) for f in fibres)
        space = Space("fibres*", len(fs), "odd")
    keys = _jet_keys_with_exp(density, fs)
    comps = []
    for f in fs:
        total = ctx.zero
        for key in keys:
            if key[1] != f:
                continue
            term = total_derivative_multi(partial(density, key), key[2])
            total = total - term if sum(key[2]) % 2 else total + term
        comps.append(total)
    return Section(comps, space)


def is_total_divergence(a: DiffExpr) -> bool:
    """True iff the Euler operator in every fibre annihilates ``a``."""
    return euler_operator(a, range(len(a.ctx.fibres))).is_zero()


def is_helmholtz(psi: Section) -> bool:
    """Self-adjointness of the linearisation (membership in the Euler image)."""
    from .operators import adjoint

    lin = linearization(psi)
    return adjoint(lin).entries == lin.entries


class Functional:
    """A density modulo total divergences."""

    __slots__ = ("density",)

    def __init__(self, density: DiffExpr):
        self.density = density

    @property
    def ctx(self) -> JetContext:
        return self.density.ctx

    def gradient(self) -> Section:
        return euler_operator(self.density)

    def __add__(self, other):
        return Functional(self.density + other.density)

    def __sub__(self, other):
        return Functional(self.density - other.density)

    def scale(self, c) -> "Functional":
        return Functional(self.density * c)

    def is_zero(self) -> bool:
        return is_total_divergence(self.density)

    def __eq__(self, other):
        if not isinstance(other, Functional):
            return NotImplemented
        return is_total_divergence(self.density - other.density)

    __hash__ = None

    def normalized(self) -> "Functional":
        return Functional(normalize_density(self.density))

    def __repr__(self):
        return f"Functional(∫ {self.density})"


def normalize_density(a: DiffExpr) -> DiffExpr:
    """Integrate by parts until no monomial is linear in its unique top jet.

    Only acts for one independent variable; the class of ``a`` is unchanged.
    """
    ctx = a.ctx
    if ctx.n != 1:
        return a
    done: dict = {}
    todo = dict(a.terms)
    for _ in range(10_000):
        if not todo:
            break
        m, c = todo.popitem()
        jets = [(k, p) for k, p in m if k[0] == JET and k[2][0] > 0]
        top = max((k[2][0] for k, _ in jets), default=0)
        tops = [(k, p) for k, p in jets if k[2][0] == top]
        if len(tops) != 1 or tops[0][1] != 1:
            v = done.get(m, 0) + c
            if v:
                done[m] = v
            else:
                done.pop(m, None)
            continue
        key = tops[0][0]
        lower = (JET, key[1], (top - 1,))
        rest = dict(m)
        del rest[key]
        p = rest.pop(lower, 0) + 1
        r = DiffExpr(ctx, {tuple(sorted(rest.items())): Fraction(c) / p})
        # r * u_{k-1}^(p-1) * u_k = D(r * u_{k-1}^p / p) - D(r) * u_{k-1}^p / p
        for m2, c2 in (-(total_derivative(r, 0) * ctx.jet(key[1], (top - 1,)) ** p)).terms.items():
            v = todo.get(m2, 0) + c2
            if v:
                todo[m2] = v
            else:
                todo.pop(m2, None)
    else:
        return a
    return DiffExpr(ctx, done)


def homotopy_inverse(psi: Section) -> Functional:
    """A functional whose variational derivative is ``psi``.

    Integrates ``sum_f u^f * psi_f[lambda*u]`` over ``lambda`` in ``[0, 1]``
    from the zero section; each monomial of jet degree ``d`` picks up
    ``1/(d+1)``.
    """
    ctx = psi.ctx
    deps = ctx.dependents
    if len(psi) != len(deps):
        raise SpaceMismatch("covector does not match the dependent fibres")
    if any(c.has_exp() for c in psi):
        raise HomotopyUnsupported("exponential atoms are not supported by the homotopy formula")
    if not is_helmholtz(psi):
        raise NotVariational("linearisation is not self-adjoint; not a variational derivative")
    dep_set = set(deps)
    density = ctx.zero
    for f, comp in zip(deps, psi):
        scaled = {}
        for m, c in comp.terms.items():
            deg = sum(p for k, p in m if k[0] == JET and k[1] in dep_set)
            scaled[m] = Fraction(c) / (deg + 1)
        density = density + ctx.jet(f) * DiffExpr(comp.ctx, scaled)
    h = Functional(density)
    if euler_operator(density).components != tuple(c.lift(density.ctx) if c.ctx is not density.ctx else c for c in psi):
        raise NotVariational("homotopy reconstruction failed; gradient mismatch")
    return h


# -- equations --------------------------------------------------------------------


@dataclass(frozen=True)
class Rule:
    fibre: int
    index: tuple
    rhs: DiffExpr


class Equation:
    """Oriented rewrite rules ``u_sigma -> rhs``, closed under prolongation."""

    def __init__(self, ctx: JetContext, rules: Sequence[Rule], max_depth: int = 20):
        self.ctx = ctx
        self.rules = tuple(rules)
        self.max_depth = max_depth
        for a in self.rules:
            for b in self.rules:
                if a is not b and a.fibre == b.fibre and all(x >= y for x, y in zip(a.index, b.index)):
                    raise ValueError("a rule's left-hand side is a prolongation of another rule's")

    @classmethod
    def from_strings(cls, ctx: JetContext, lines: Iterable[str], max_depth: int = 20) -> "Equation":
        rules = []
        for line in lines:
            lhs, sep, rhs = line.partition("=")
            if not sep:
                raise ValueError(f"rule {line!r} has no '='")
            key = atom_key(ctx.parse(lhs))
            if key[0] != JET:
                raise ValueError(f"left-hand side of {line!r} is not a jet variable")
            rules.append(Rule(key[1], key[2], ctx.parse(rhs)))
        return cls(ctx, rules, max_depth)

    def extended(self, other: "Equation") -> "Equation":
        ctx = unify(self.ctx, other.ctx)
        return Equation(ctx, self.rules + other.rules, max(self.max_depth, other.max_depth))

    def match(self, key) -> Rule | None:
        if key[0] != JET:
            return None
        for r in self.rules:
            if r.fibre == key[1] and all(x >= y for x, y in zip(key[2], r.index)):
                return r
        return None

    def is_internal(self, key) -> bool:
        return self.match(key) is None

    def __repr__(self):
        parts = []
        for r in self.rules:
            lhs = self.ctx.jet(r.fibre, r.index)
            parts.append(f"{lhs} = {r.rhs}")
        return f"Equation({'; '.join(parts)})"


def reduce_on_shell(a: DiffExpr, eq: Equation | None, max_depth: int | None = None) -> DiffExpr:
    """Rewrite ``a`` until only internal coordinates of ``eq`` remain."""
    if eq is None or not eq.rules:
        return a
    cap = eq.max_depth if max_depth is None else max_depth
    memo: dict = {}

    def reduce_var(key, depth):
        got = memo.get(key)
        if got is not None:
            return got
        if depth > cap:
            raise ProlongationDepthExceeded(f"prolongation depth exceeded {cap}")
        rule = eq.match(key)
        if key[2] == rule.index:
            val = reduce_expr(rule.rhs, depth + 1)
        else:
            i = next(j for j, (x, y) in enumerate(zip(key[2], rule.index)) if x > y)
            parent = (JET, key[1], _bump(key[2], i, -1))
            val = reduce_expr(total_derivative(reduce_var(parent, depth + 1), i), depth + 1)
        memo[key] = val
        return val

    def reduce_expr(e, depth):
        keys = [k for k in e.jet_keys() if eq.match(k) is not None]
        if not keys:
            return e
        ctx = e.ctx
        return substitute(e, {k: reduce_var(k, depth).lift(unify(ctx, eq.ctx)) for k in keys})

    return reduce_expr(a, 0)
