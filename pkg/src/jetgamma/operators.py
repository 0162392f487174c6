"""Matrix total-differential operators.

An entry is a dict ``{sigma: c_sigma}`` meaning ``sum c_sigma * D^sigma`` with
coefficients on the left.  Composition renormalises through the Leibniz rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import comb
from typing import Sequence

from .expr import BASE, EXP, JET, SCALAR, DiffExpr, Fibre, JetContext, _bump, total_derivative, unify
from .jetcalc import Section, Space, _Prolonger, evolutionary, is_total_divergence, kappa


class OperatorError(ValueError):
    pass


class InverseCheckFailed(OperatorError):
    """The supplied pair ``g, g^-1`` does not compose to the identity."""


class NotInImage(ValueError):
    """``invert_Dx_on_image`` found that the input is not a total x-derivative."""


class ParameterClash(ValueError):
    """The parameter fibre names are already taken in the context."""


# -- entry algebra ----------------------------------------------------------------


def _entry_add(a: dict, b: dict, sign: int = 1) -> dict:
    out = dict(a)
    for mi, c in b.items():
        c = c if sign > 0 else -c
        v = out[mi] + c if mi in out else c
        if v:
            out[mi] = v
        else:
            out.pop(mi, None)
    return out


def _sub_indices(sigma: tuple):
    return product(*(range(k + 1) for k in sigma))


def _binom(sigma: tuple, rho: tuple) -> int:
    out = 1
    for s, r in zip(sigma, rho):
        out *= comb(s, r)
    return out


def compose_entries(a: dict, b: dict) -> dict:
    """``(sum a_s D^s) o (sum b_t D^t)`` in left normal form."""
    out: dict = {}
    for sigma, c in a.items():
        for tau, d in b.items():
            prolong = _Prolonger(d)
            for rho in _sub_indices(sigma):
                deriv = prolong(rho)
                if not deriv:
                    continue
                mi = tuple(s - r + t for s, r, t in zip(sigma, rho, tau))
                term = c * deriv * _binom(sigma, rho)
                v = out[mi] + term if mi in out else term
                if v:
                    out[mi] = v
                else:
                    out.pop(mi, None)
    return out


def entry_apply(entry: dict, a: DiffExpr) -> DiffExpr:
    """``sum c_sigma * D^sigma(a)``."""
    prolong = _Prolonger(a)
    out = None
    for mi, c in entry.items():
        term = c * prolong(mi)
        out = term if out is None else out + term
    return a.ctx.zero if out is None else out


def adjoint_entry(entry: dict) -> dict:
    """``(sum c_s D^s)^dagger = sum (-D)^s o c_s``."""
    out: dict = {}
    for sigma, c in entry.items():
        sign = -1 if sum(sigma) % 2 else 1
        for mi, v in compose_entries({sigma: c.ctx.const(sign)}, {c.ctx.zero_index: c}).items():
            w = out[mi] + v if mi in out else v
            if w:
                out[mi] = w
            else:
                out.pop(mi, None)
    return out


def _entry_order(entry: dict) -> int:
    return max((sum(mi) for mi in entry), default=-1)


def _format_entry(ctx: JetContext, entry: dict) -> str:
    if not entry:
        return "0"
    parts = []
    for mi in sorted(entry, key=lambda m: (-sum(m), tuple(-v for v in m))):
        c = entry[mi]
        d = "D_" + ctx.index_letters(mi) if any(mi) else ""
        cs = str(c)
        if not d:
            s = cs
        elif c == 1:
            s = d
        elif c == -1:
            s = "-" + d
        elif len(c.terms) == 1:
            s = f"{cs}*{d}"
        else:
            s = f"({cs})*{d}"
        parts.append(s)
    out = parts[0]
    for s in parts[1:]:
        out += " - " + s[1:] if s.startswith("-") else " + " + s
    return out


# -- operators --------------------------------------------------------------------


class TotalOperator:
    """A ``rows x cols`` matrix of total differential operators."""

    __slots__ = ("entries", "domain", "codomain", "ctx")

    def __init__(self, entries: Sequence[Sequence[dict]], domain: Space, codomain: Space, ctx: JetContext):
        rows = [[{mi: c for mi, c in e.items() if c} for e in row] for row in entries]
        if len(rows) != codomain.dim or any(len(r) != domain.dim for r in rows):
            raise OperatorError(
                f"entry matrix does not match {codomain.name}({codomain.dim}) <- {domain.name}({domain.dim})"
            )
        for row in rows:
            for e in row:
                for c in e.values():
                    ctx = unify(ctx, c.ctx)
        self.entries = rows
        self.domain = domain
        self.codomain = codomain
        self.ctx = ctx

    # construction ----------------------------------------------------------

    @classmethod
    def parse(cls, ctx: JetContext, text: str, domain: Space | None = None, codomain: Space | None = None):
        from .parse import parse_operator_entries

        entries = parse_operator_entries(ctx, text)
        rows, cols = len(entries), len(entries[0])
        domain = domain or Space("xi", cols, "even")
        codomain = codomain or (kappa(ctx) if rows == len(ctx.dependents) else Space("kappa", rows, "even"))
        return cls(entries, domain, codomain, ctx)

    @classmethod
    def identity(cls, ctx: JetContext, space: Space) -> "TotalOperator":
        return cls.multiplication(ctx, [[1 if i == j else 0 for j in range(space.dim)] for i in range(space.dim)], space, space)

    @classmethod
    def multiplication(cls, ctx: JetContext, matrix, domain: Space, codomain: Space) -> "TotalOperator":
        zero = ctx.zero_index
        rows = []
        for row in matrix:
            out = []
            for c in row:
                c = c if isinstance(c, DiffExpr) else ctx.const(c)
                out.append({zero: c} if c else {})
            rows.append(out)
        return cls(rows, domain, codomain, ctx)

    @classmethod
    def zero(cls, ctx: JetContext, domain: Space, codomain: Space) -> "TotalOperator":
        return cls([[{} for _ in range(domain.dim)] for _ in range(codomain.dim)], domain, codomain, ctx)

    # structure -------------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return (self.codomain.dim, self.domain.dim)

    @property
    def order(self) -> int:
        return max((_entry_order(e) for row in self.entries for e in row), default=-1)

    def is_zero(self) -> bool:
        return not any(e for row in self.entries for e in row)

    def map_coefficients(self, fn) -> "TotalOperator":
        rows = [[{mi: fn(c) for mi, c in e.items()} for e in row] for row in self.entries]
        return TotalOperator(rows, self.domain, self.codomain, self.ctx)

    def __eq__(self, other):
        if not isinstance(other, TotalOperator):
            return NotImplemented
        return self.shape == other.shape and self.entries == other.entries

    __hash__ = None

    def _check_same(self, other):
        if self.shape != other.shape:
            raise OperatorError(f"shape mismatch {self.shape} vs {other.shape}")

    def __add__(self, other):
        self._check_same(other)
        rows = [[_entry_add(a, b) for a, b in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)]
        return TotalOperator(rows, self.domain, self.codomain, unify(self.ctx, other.ctx))

    def __neg__(self):
        return self.map_coefficients(lambda c: -c)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "TotalOperator":
        """Left multiplication by a rational or a :class:`DiffExpr`."""
        return self.map_coefficients(lambda v: v * c)

    def __str__(self):
        cells = [[_format_entry(self.ctx, e) for e in row] for row in self.entries]
        if self.shape == (1, 1):
            return cells[0][0]
        return "[" + ", ".join("[" + ", ".join(r) + "]" for r in cells) + "]"

    def __repr__(self):
        return f"TotalOperator({str(self)!r})"


def apply(A: TotalOperator, p: Section) -> Section:
    """``A(p)`` componentwise."""
    if p.space.dim != A.domain.dim or p.space.parity != A.domain.parity:
        raise OperatorError(f"section in {p.space.name} does not fit the domain {A.domain.name}")
    comps = []
    for row in A.entries:
        total = None
        for e, comp in zip(row, p):
            if e:
                v = entry_apply(e, comp)
                total = v if total is None else total + v
        comps.append(total if total is not None else A.ctx.zero)
    return Section(comps, A.codomain)


def compose(A: TotalOperator, B: TotalOperator) -> TotalOperator:
    """``A o B``."""
    if A.domain.dim != B.codomain.dim:
        raise OperatorError(f"cannot compose: {A.domain.dim} columns vs {B.codomain.dim} rows")
    ctx = unify(A.ctx, B.ctx)
    rows = []
    for arow in A.entries:
        out = []
        for k in range(B.domain.dim):
            acc: dict = {}
            for j, a in enumerate(arow):
                if a and B.entries[j][k]:
                    acc = _entry_add(acc, compose_entries(a, B.entries[j][k]))
            out.append(acc)
        rows.append(out)
    return TotalOperator(rows, B.domain, A.codomain, ctx)


def adjoint(A: TotalOperator) -> TotalOperator:
    """Formal adjoint: entrywise adjoint of the transposed matrix."""
    rows = [
        [adjoint_entry(A.entries[r][c]) for r in range(A.codomain.dim)]
        for c in range(A.domain.dim)
    ]
    return TotalOperator(rows, A.codomain.dual(), A.domain.dual(), A.ctx)


def evolutionary_on_coefficients(A: TotalOperator, phi: Section) -> TotalOperator:
    """The operator ``E_phi(A)`` obtained by differentiating coefficients."""
    return A.map_coefficients(lambda c: evolutionary(phi, c))


class OperatorTuple:
    """Named operators sharing context, domain and codomain."""

    def __init__(self, operators: Sequence[TotalOperator], names: Sequence[str] | None = None):
        ops = list(operators)
        if not ops:
            raise OperatorError("an operator tuple needs at least one operator")
        names = list(names) if names is not None else [f"A{i + 1}" for i in range(len(ops))]
        if len(names) != len(ops) or len(set(names)) != len(names):
            raise OperatorError("operator names must be unique, one per operator")
        ctx = ops[0].ctx
        for op in ops[1:]:
            ctx = unify(ctx, op.ctx)
            if op.domain != ops[0].domain or op.codomain != ops[0].codomain:
                raise OperatorError("all operators must share domain and codomain")
        if ops[0].codomain.dim != len(ctx.dependents):
            raise OperatorError("operators must take values in generating sections")
        self.operators = ops
        self.names = names
        self.ctx = ctx

    def __len__(self):
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)

    def __getitem__(self, i):
        return self.operators[i]

    @property
    def domain(self) -> Space:
        return self.operators[0].domain

    @property
    def codomain(self) -> Space:
        return self.operators[0].codomain

    @property
    def order(self) -> int:
        return max(op.order for op in self.operators)


# -- parameter fibres and image commutators ---------------------------------------


def parameter_names(stem: str, dim: int) -> list:
    return [stem] if dim == 1 else [f"{stem}{i + 1}" for i in range(dim)]


def adjoin_parameters(ctx: JetContext, domain: Space, stems=("p", "q")):
    """Extend ``ctx`` by parameter fibres; return the context and one section per stem."""
    taken = set(ctx.independents) | {f.name for f in ctx.fibres} | set(ctx.scalars)
    new = []
    for stem in stems:
        names = parameter_names(stem, domain.dim)
        clash = taken.intersection(names)
        if clash:
            raise ParameterClash(f"parameter fibres already in use: {sorted(clash)}")
        new.append(names)
    ext = ctx.with_fibres(*(Fibre(n, domain.parity, True) for names in new for n in names))
    sections = [Section([ext.jet(n) for n in names], domain) for names in new]
    return (ext, *sections)


def image_commutator_section(A: TotalOperator, B: TotalOperator, stems=("p", "q")) -> Section:
    """Generating section of ``[E_{A(p)}, E_{B(q)}]`` on fresh parameter fibres."""
    if A.domain != B.domain:
        raise OperatorError("operators must share a domain")
    ctx = unify(A.ctx, B.ctx)
    _, p, q = adjoin_parameters(ctx, A.domain, stems)
    ap, bq = apply(A, p), apply(B, q)
    return Section([evolutionary(ap, b) - evolutionary(bq, a) for a, b in zip(ap, bq)], ap.space)


def reparametrize(A: TotalOperator, g: TotalOperator, g_inverse: TotalOperator) -> TotalOperator:
    """``A o g^-1`` after checking that ``g`` and ``g_inverse`` are mutually inverse."""
    verify_inverse_pair(g, g_inverse)
    return compose(A, g_inverse)


def verify_inverse_pair(g: TotalOperator, g_inverse: TotalOperator) -> None:
    ctx = unify(g.ctx, g_inverse.ctx)
    for left, right, space in ((g, g_inverse, g_inverse.domain), (g_inverse, g, g.domain)):
        if compose(left, right) != TotalOperator.identity(ctx, space):
            raise InverseCheckFailed("g and its proposed inverse do not compose to the identity")


# -- inversion of D_x -------------------------------------------------------------


def _integrate_in(a: DiffExpr, key) -> DiffExpr:
    """Antiderivative of a polynomial with respect to one atom."""
    exp_key = (EXP, key[1]) if key[0] == JET and key[2] == a.ctx.zero_index else None
    out: dict = {}
    for m, c in a.terms.items():
        d = dict(m)
        if exp_key in d:
            if key in d:
                raise NotInImage("cannot integrate a product of a fibre variable and its exponential")
            out[m] = Fraction(c) / d[exp_key]
            continue
        p = d.get(key, 0) + 1
        d[key] = p
        out[tuple(sorted(d.items()))] = Fraction(c) / p
    return DiffExpr(a.ctx, out)


def invert_Dx_on_image(phi: DiffExpr, direction=0, max_steps: int = 10_000) -> DiffExpr:
    """Return ``psi`` with ``D_x(psi) = phi`` (no integration constant)."""
    ctx = phi.ctx
    i = ctx.direction(direction)
    if ctx.n != 1 and any(sum(v for j, v in enumerate(k[2]) if j != i) for k in phi.jet_keys()):
        raise OperatorError("inversion of D_x needs expressions in one independent variable")
    if ctx.n == 1 and not is_total_divergence(phi):
        raise NotInImage(f"{phi} is not in the image of D_{ctx.independents[i]}")
    rest, psi = phi, ctx.zero
    for _ in range(max_steps):
        if not rest:
            return psi
        jets = [k for k in rest.jet_keys() if k[2][i] > 0]
        if jets:
            top = max(jets, key=lambda k: (k[2][i], -k[1]))
            lower = (JET, top[1], _bump(top[2], i, -1))
            coeff = _linear_coefficient(rest, top)
            step = _integrate_in(coeff, lower)
        else:
            step = _integrate_base(rest, i)
        psi = psi + step
        rest = rest - total_derivative(step, i)
    raise NotInImage(f"stripping did not terminate after {max_steps} steps")


def _linear_coefficient(a: DiffExpr, key) -> DiffExpr:
    out: dict = {}
    for m, c in a.terms.items():
        d = dict(m)
        p = d.get(key, 0)
        if p > 1:
            raise NotInImage("top-order jet appears nonlinearly")
        if p == 1:
            del d[key]
            out[tuple(sorted(d.items()))] = c
    return DiffExpr(a.ctx, out)


def _integrate_base(a: DiffExpr, i: int) -> DiffExpr:
    allowed = {SCALAR, BASE}
    for m in a.terms:
        for k, _ in m:
            if k[0] not in allowed or (k[0] == BASE and k[1] != i):
                raise NotInImage(f"{a} is not in the image of D_{a.ctx.independents[i]}")
    return _integrate_in(a, (BASE, i))


# -- normality --------------------------------------------------------------------


@dataclass(frozen=True)
class NormalityReport:
    normal: bool
    direction: str | None
    order: int | None

    @property
    def status(self) -> str:
        return "normal (sufficient condition)" if self.normal else "inconclusive"


def _det(matrix: list) -> DiffExpr:
    n = len(matrix)
    if n == 1:
        return matrix[0][0]
    total = None
    for j in range(n):
        if not matrix[0][j]:
            continue
        minor = [row[:j] + row[j + 1:] for row in matrix[1:]]
        term = matrix[0][j] * _det(minor)
        term = -term if j % 2 else term
        total = term if total is None else total + term
    return total if total is not None else matrix[0][0].ctx.zero


def is_normal_heuristic(A: TotalOperator) -> NormalityReport:
    """Leading-symbol test: an invertible top-order matrix in some direction."""
    rows, cols = A.shape
    if rows != cols or A.is_zero():
        return NormalityReport(False, None, None)
    ctx = A.ctx
    for d in range(ctx.n):
        top = max(
            (mi[d] for row in A.entries for e in row for mi in e if sum(mi) == mi[d]),
            default=-1,
        )
        if top < 0:
            continue
        key = _bump(ctx.zero_index, d, top)
        matrix = [[e.get(key, ctx.zero) for e in row] for row in A.entries]
        if _det(matrix):
            return NormalityReport(True, ctx.independents[d], top)
    return NormalityReport(False, None, None)
