"""Strong compatibility of operator tuples and their bi-differential symbols.

For an operator tuple ``A_1, ..., A_N`` with values in generating sections,
the commutator of two image fields decomposes as

    [A_i(p), A_j(q)] = A_j(E_{A_i(p)} q) - A_i(E_{A_j(q)} p) + sum_k A_k(Gamma^k_ij(p, q)).

With free parameter fibres ``p, q`` the evolutionary terms drop out of the
bilinear part and ``Gamma`` is found by solving

    sum_k A_k(Gamma^k_ij(p, q)) = (E_{A_i(p)} A_j)(q) - (E_{A_j(q)} A_i)(p)

exactly over an ansatz of bi-differential operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import combinations_with_replacement, product
from typing import Sequence

from .expr import JET, DiffExpr, JetContext, monomial_sort_key, substitute, total_derivative_multi, unify
from .jetcalc import Equation, Section, Space, evolutionary, reduce_on_shell
from .linsolve import RHS, Inconsistent, Solution, solve
from .operators import (
    OperatorTuple,
    TotalOperator,
    adjoin_parameters,
    apply,
    evolutionary_on_coefficients,
    entry_apply,
    parameter_names,
    reparametrize,
    verify_inverse_pair,
)


class NotStrongCompatible(ArithmeticError):
    """No bi-differential symbols exist within the (saturated) ansatz."""

    def __init__(self, pair, spec: "AnsatzSpec", certificate: Inconsistent):
        i, j = pair
        super().__init__(
            f"not strong compatible up to order {spec.sigma_order}/{spec.tau_order}, "
            f"degree {spec.degree} (pair {i + 1},{j + 1})"
        )
        self.pair = pair
        self.spec = spec
        self.certificate = certificate


class AnsatzBoundTooSmall(ArithmeticError):
    """Inconsistent at the requested bound but solvable after raising it."""

    def __init__(self, pair, spec: "AnsatzSpec", suggested: "AnsatzSpec"):
        i, j = pair
        super().__init__(
            f"ansatz bound {spec.sigma_order}/{spec.tau_order} too small for pair "
            f"{i + 1},{j + 1}; order {suggested.sigma_order} suffices"
        )
        self.pair = pair
        self.spec = spec
        self.suggested = suggested


# -- bi-differential operators ----------------------------------------------------


def _tensor_symbol(ctx: JetContext, sigma, tau) -> str:
    left = "D_" + ctx.index_letters(sigma) if any(sigma) else "1"
    right = "D_" + ctx.index_letters(tau) if any(tau) else "1"
    return f"{left}⊗{right}"


class BiDiffOperator:
    """``(p, q) -> sum c * D^sigma(p_a) * D^tau(q_b)``, one expression per output component.

    Stored as its value on the parameter fibres ``p, q`` of ``ctx``, which
    is bilinear in their jets; this is a normal form.
    """

    __slots__ = ("ctx", "components", "p_fibres", "q_fibres", "domain")

    def __init__(self, ctx: JetContext, components: Sequence[DiffExpr], p_fibres, q_fibres, domain: Space):
        for c in components:
            ctx = unify(ctx, c.ctx)
        self.ctx = ctx
        self.components = tuple(c.lift(ctx) if c.ctx is not ctx else c for c in components)
        self.p_fibres = tuple(p_fibres)
        self.q_fibres = tuple(q_fibres)
        self.domain = domain

    @classmethod
    def zero_like(cls, other: "BiDiffOperator") -> "BiDiffOperator":
        return other._with([other.ctx.zero] * len(other.components))

    def _with(self, comps) -> "BiDiffOperator":
        return BiDiffOperator(self.ctx, comps, self.p_fibres, self.q_fibres, self.domain)

    def __add__(self, other):
        return self._with([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other):
        return self._with([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self):
        return self._with([-a for a in self.components])

    def scale(self, c) -> "BiDiffOperator":
        return self._with([a * c for a in self.components])

    def map(self, fn) -> "BiDiffOperator":
        return self._with([fn(a) for a in self.components])

    def __eq__(self, other):
        if not isinstance(other, BiDiffOperator):
            return NotImplemented
        return self.components == other.components

    __hash__ = None

    def is_zero(self) -> bool:
        return not any(self.components)

    def as_section(self) -> Section:
        return Section(self.components, self.domain)

    # -- structure -------------------------------------------------------------

    def terms(self) -> list:
        """``[(r, a, b, sigma, tau, coeff)]`` sorted deterministically."""
        pset, qset = set(self.p_fibres), set(self.q_fibres)
        out = {}
        for r, comp in enumerate(self.components):
            for m, c in comp.terms.items():
                pk = [k for k, _ in m if k[0] == JET and k[1] in pset]
                qk = [k for k, _ in m if k[0] == JET and k[1] in qset]
                if len(pk) != 1 or len(qk) != 1 or dict(m)[pk[0]] != 1 or dict(m)[qk[0]] != 1:
                    raise ValueError(f"{comp} is not bilinear in the parameter fibres")
                rest = tuple(kp for kp in m if kp[0] not in (pk[0], qk[0]))
                key = (r, self.p_fibres.index(pk[0][1]), self.q_fibres.index(qk[0][1]), pk[0][2], qk[0][2])
                coeff = out.get(key, self.ctx.zero) + DiffExpr(self.ctx, {rest: c})
                out[key] = coeff
        keys = sorted(out, key=lambda k: (k[0], k[1], k[2], -sum(k[3]), tuple(-v for v in k[3]), -sum(k[4]), tuple(-v for v in k[4])))
        return [(*k, out[k]) for k in keys if out[k]]

    def apply(self, P: Section, Q: Section) -> Section:
        """Evaluate on arbitrary sections (not only on the parameter fibres)."""
        ctx = self.ctx
        for s in (*P, *Q):
            ctx = unify(ctx, s.ctx)
        comps = []
        for r, comp in enumerate(self.components):
            total = ctx.zero
            for _, a, b, sigma, tau, coeff in (t for t in self.terms() if t[0] == r):
                total = total + coeff * total_derivative_multi(P[a], sigma) * total_derivative_multi(Q[b], tau)
            comps.append(total)
        return Section(comps, self.domain)

    def swapped(self) -> "BiDiffOperator":
        """``(p, q) -> self(q, p)``."""
        mapping = {}
        for comp in self.components:
            for k in comp.jet_keys(self.p_fibres + self.q_fibres):
                if k[1] in self.p_fibres:
                    other = self.q_fibres[self.p_fibres.index(k[1])]
                else:
                    other = self.p_fibres[self.q_fibres.index(k[1])]
                mapping[k] = self.ctx.jet(other, k[2])
        return self._with([substitute(c, mapping) for c in self.components])

    def symbol(self) -> str:
        """Printed as ``c*D_x⊗1 - 1⊗D_x``; component prefixes for matrix domains."""
        parts = []
        for r, a, b, sigma, tau, coeff in self.terms():
            sym = _tensor_symbol(self.ctx, sigma, tau)
            if self.domain.dim > 1:
                sym = f"{sym}[{r + 1}|{a + 1},{b + 1}]"
            if coeff == 1:
                s = sym
            elif coeff == -1:
                s = "-" + sym
            elif len(coeff.terms) == 1:
                s = f"{coeff}*{sym}"
            else:
                s = f"({coeff})*{sym}"
            parts.append(s)
        if not parts:
            return "0"
        out = parts[0]
        for s in parts[1:]:
            out += " - " + s[1:] if s.startswith("-") else " + " + s
        return out

    def to_json_terms(self) -> list:
        out = []
        for r, a, b, sigma, tau, coeff in self.terms():
            item = {
                "coeff": str(coeff),
                "sigma": {x: n for x, n in zip(self.ctx.independents, sigma) if n},
                "tau": {x: n for x, n in zip(self.ctx.independents, tau) if n},
            }
            if self.domain.dim > 1:
                item.update(component=r + 1, p=a + 1, q=b + 1)
            out.append(item)
        return out

    def __str__(self):
        if len(self.components) == 1:
            return str(self.components[0])
        return "(" + ", ".join(str(c) for c in self.components) + ")"

    def __repr__(self):
        return f"BiDiffOperator({self.symbol()})"


# -- ansatz -----------------------------------------------------------------------


@dataclass(frozen=True)
class AnsatzSpec:
    """Bounds of the bi-differential ansatz.

    ``sigma_order``/``tau_order`` bound the total derivative order on each
    argument, ``degree`` the degree of coefficient monomials in jets of the
    dependent fibres (order at most ``jet_order``) and ``exp_atoms``.
    ``base_functions`` are extra multipliers (``1`` is always included).
    """

    sigma_order: int = 2
    tau_order: int = 2
    degree: int = 2
    jet_order: int | None = None
    exp_atoms: tuple = ()
    base_functions: tuple = ()
    equation: Equation | None = None

    def __post_init__(self):
        if min(self.sigma_order, self.tau_order, self.degree) < 0:
            raise ValueError("ansatz bounds must be non-negative")
        if self.jet_order is not None and self.jet_order < 0:
            raise ValueError("jet order must be non-negative")

    @property
    def coefficient_jet_order(self) -> int:
        return self.jet_order if self.jet_order is not None else max(self.sigma_order, self.tau_order)

    def raised(self) -> "AnsatzSpec":
        return replace(
            self,
            sigma_order=self.sigma_order + 1,
            tau_order=self.tau_order + 1,
            jet_order=None if self.jet_order is None else self.jet_order + 1,
        )

    def with_order(self, order: int) -> "AnsatzSpec":
        return replace(self, sigma_order=order, tau_order=order)

    def describe(self) -> dict:
        return {
            "sigma_order": self.sigma_order,
            "tau_order": self.tau_order,
            "degree": self.degree,
            "jet_order": self.coefficient_jet_order,
        }


def default_spec(ops: OperatorTuple, **overrides) -> AnsatzSpec:
    order = ops.order + 1
    return AnsatzSpec(sigma_order=order, tau_order=order, **overrides)


def _multi_indices(n: int, max_order: int) -> list:
    out = [mi for mi in product(range(max_order + 1), repeat=n) if sum(mi) <= max_order]
    return sorted(out, key=lambda mi: (sum(mi), tuple(-v for v in mi)))


def _coefficient_monomials(ctx: JetContext, spec: AnsatzSpec) -> list:
    """``[(jet_degree, base_index, expr)]`` spanning the coefficient space."""
    eq = spec.equation
    atoms = []
    for f in ctx.dependents:
        for mi in _multi_indices(ctx.n, spec.coefficient_jet_order):
            key = (JET, f, mi)
            if eq is None or eq.is_internal(key):
                atoms.append(ctx.jet(f, mi))
    for e in spec.exp_atoms:
        atoms.append(ctx.parse(e) if isinstance(e, str) else e)
    bases = [ctx.one] + [ctx.parse(b) if isinstance(b, str) else b for b in spec.base_functions]
    monos = [(0, ctx.one)]
    for d in range(1, spec.degree + 1):
        for combo in combinations_with_replacement(range(len(atoms)), d):
            m = ctx.one
            for i in combo:
                m = m * atoms[i]
            monos.append((d, m))
    return [(d, bi, b * m) for bi, b in enumerate(bases) for d, m in monos]


@dataclass(frozen=True)
class _Column:
    k: int
    r: int
    a: int
    b: int
    sigma: tuple
    tau: tuple
    coeff: DiffExpr
    cost: tuple


@dataclass
class _Frame:
    """Parameter context shared by one extraction run."""

    ctx: JetContext
    p: Section
    q: Section
    p_fibres: tuple
    q_fibres: tuple
    domain: Space

    def bidiff(self, comps) -> BiDiffOperator:
        return BiDiffOperator(self.ctx, comps, self.p_fibres, self.q_fibres, self.domain)

    def zero(self) -> BiDiffOperator:
        return self.bidiff([self.ctx.zero] * self.domain.dim)


def _frame(ctx: JetContext, domain: Space) -> _Frame:
    pctx, p, q = adjoin_parameters(ctx, domain)
    pf = tuple(pctx.fibre_index(n) for n in parameter_names("p", domain.dim))
    qf = tuple(pctx.fibre_index(n) for n in parameter_names("q", domain.dim))
    return _Frame(pctx, p, q, pf, qf, domain)


def _build_columns(frame: _Frame, n_ops: int, spec: AnsatzSpec, multipliers=None) -> list:
    ctx = frame.ctx
    monos = _coefficient_monomials(ctx, spec)
    multipliers = multipliers or [(0, None)]
    s_idx = _multi_indices(ctx.n, spec.sigma_order)
    t_idx = _multi_indices(ctx.n, spec.tau_order)
    dim = frame.domain.dim
    cols = []
    for k in range(n_ops):
        for li, lam in multipliers:
            for r, a, b in product(range(dim), repeat=3):
                for sigma in s_idx:
                    for tau in t_idx:
                        for deg, bi, m in monos:
                            coeff = m if lam is None else m * lam
                            order = sum(sigma) + sum(tau)
                            mono_key = monomial_sort_key(next(iter(m.terms)))
                            cost = (deg, order, bi, max(sum(sigma), sum(tau)), k, li, r, a, b,
                                    tuple(-v for v in sigma), tuple(-v for v in tau), mono_key)
                            cols.append(_Column(k, r, a, b, sigma, tau, coeff, cost))
    cols.sort(key=lambda c: c.cost)
    return cols


def _column_term(frame: _Frame, col: _Column) -> DiffExpr:
    ctx = frame.ctx
    return col.coeff * ctx.jet(frame.p_fibres[col.a], col.sigma) * ctx.jet(frame.q_fibres[col.b], col.tau)


class _System:
    """Column images ``sum_k A_k(column)`` keyed by output monomial."""

    def __init__(self, frame: _Frame, ops: Sequence[TotalOperator], spec: AnsatzSpec, multipliers=None):
        self.frame = frame
        self.ops = list(ops)
        self.spec = spec
        self.columns = _build_columns(frame, len(self.ops), spec, multipliers)
        self.images = [self._image(c) for c in self.columns]

    def _image(self, col: _Column) -> dict:
        term = _column_term(self.frame, col)
        op = self.ops[col.k]
        out = {}
        for s, row in enumerate(op.entries):
            entry = row[col.r]
            if not entry:
                continue
            val = reduce_on_shell(entry_apply(entry, term), self.spec.equation)
            for m, c in val.terms.items():
                out[(s, m)] = c
        return out

    def rows(self, rhs: Section) -> list:
        table: dict = {}
        for idx, img in enumerate(self.images):
            for key, c in img.items():
                table.setdefault(key, {})[idx] = c
        for s, comp in enumerate(rhs):
            for m, c in comp.terms.items():
                table.setdefault((s, m), {})[RHS] = c
        return [table[k] for k in sorted(table, key=lambda k: (k[0], monomial_sort_key(k[1])))]

    def vector_to_bidiffs(self, vec: dict, n_out: int | None = None) -> list:
        n_out = n_out or len(self.ops)
        frame = self.frame
        comps = [[frame.ctx.zero] * frame.domain.dim for _ in range(n_out)]
        for idx, v in sorted(vec.items()):
            col = self.columns[idx]
            comps[col.k][col.r] = comps[col.k][col.r] + _column_term(frame, col) * v
        return [frame.bidiff(c) for c in comps]

    def coordinates(self, bidiffs: Sequence[BiDiffOperator]) -> dict | None:
        """Column coordinates of a family, or ``None`` if it leaves the ansatz."""
        index = {}
        for idx, col in enumerate(self.columns):
            mono = next(iter(col.coeff.terms))
            index[(col.k, col.r, col.a, col.b, col.sigma, col.tau, mono)] = (idx, col.coeff.terms[mono])
        vec = {}
        for k, bd in enumerate(bidiffs):
            for r, a, b, sigma, tau, coeff in bd.terms():
                for m, c in coeff.terms.items():
                    hit = index.get((k, r, a, b, sigma, tau, m))
                    if hit is None:
                        return None
                    vec[hit[0]] = Fraction(c) / hit[1]
        return vec


# -- residual and extraction ------------------------------------------------------


def residual(ops: OperatorTuple, i: int, j: int, equation: Equation | None = None, frame: _Frame | None = None) -> Section:
    """``(E_{A_i(p)} A_j)(q) - (E_{A_j(q)} A_i)(p)`` on free parameter fibres."""
    frame = frame or _frame(ops.ctx, ops.domain)
    A, B = ops[i], ops[j]
    ap, bq = apply(A, frame.p), apply(B, frame.q)
    left = apply(evolutionary_on_coefficients(B, ap), frame.q)
    right = apply(evolutionary_on_coefficients(A, bq), frame.p)
    return (left - right).map(lambda c: reduce_on_shell(c, equation))


@dataclass
class PairGauge:
    """Gauge directions for one pair ``(i, j)``: kernel vectors in column coordinates."""

    system: _System
    solution: Solution

    @property
    def dim(self) -> int:
        return self.solution.gauge_dim

    def basis(self) -> list:
        """Kernel directions as tuples ``(K^1, ..., K^N)``."""
        return [tuple(self.system.vector_to_bidiffs(v)) for v in self.solution.nullspace]

    def contains(self, diff: Sequence[BiDiffOperator]) -> bool:
        """Is ``diff`` in the span of the reported kernel directions?"""
        vec = self.system.coordinates(diff)
        if vec is None:
            return False
        pivots = set(self.solution.pivots)
        combo: dict = {}
        for v in self.solution.nullspace:
            free = next(c for c in v if c not in pivots)
            w = vec.get(free, 0)
            if w:
                for c, x in v.items():
                    combo[c] = combo.get(c, 0) + w * x
        combo = {c: x for c, x in combo.items() if x}
        return combo == {c: x for c, x in vec.items() if x}


@dataclass
class GaugeReport:
    pairs: dict = field(default_factory=dict)

    def dim(self, i: int, j: int) -> int:
        return self.pairs[(i, j)].dim

    def total_dim(self) -> int:
        return sum(g.dim for g in self.pairs.values())


@dataclass
class GammaFamily:
    ops: OperatorTuple
    symbols: dict  # (i, j, k) -> BiDiffOperator
    spec: AnsatzSpec
    frame: _Frame

    @property
    def equation(self) -> Equation | None:
        return self.spec.equation

    def __getitem__(self, ijk) -> BiDiffOperator:
        return self.symbols[ijk]

    def pair(self, i: int, j: int) -> list:
        return [self.symbols[(i, j, k)] for k in range(len(self.ops))]

    def items(self):
        return sorted(self.symbols.items())

    def to_json(self) -> dict:
        names = self.ops.names
        return {
            "operators": list(names),
            "symbols": [
                {"i": names[i], "j": names[j], "k": names[k], "symbol": g.symbol(), "terms": g.to_json_terms()}
                for (i, j, k), g in self.items()
            ],
        }


def _solve_pair(system: _System, rhs: Section):
    return solve(system.rows(rhs), len(system.columns))


def extract_gamma(ops: OperatorTuple, spec: AnsatzSpec | None = None, *, saturate: bool = True):
    """Minimal-cost symbols ``Gamma^k_ij`` and the gauge report.

    Raises :class:`NotStrongCompatible` when the system stays inconsistent
    after raising the bound once, and :class:`AnsatzBoundTooSmall` when only
    the raised bound is solvable.
    """
    spec = spec or default_spec(ops)
    try:
        symbols, gauges, frame = _extract(ops, spec)
    except _PairInconsistent as exc:
        if not saturate:
            raise NotStrongCompatible(exc.pair, spec, exc.cert) from None
        bigger = spec.raised()
        try:
            _extract(ops, bigger, pairs=[exc.pair])
        except _PairInconsistent as exc2:
            raise NotStrongCompatible(exc2.pair, bigger, exc2.cert) from None
        raise AnsatzBoundTooSmall(exc.pair, spec, bigger) from None
    return GammaFamily(ops, symbols, spec, frame), GaugeReport(gauges)


class _PairInconsistent(Exception):
    def __init__(self, pair, cert):
        self.pair = pair
        self.cert = cert


def _extract(ops: OperatorTuple, spec: AnsatzSpec, pairs=None, frame=None):
    frame = frame or _frame(ops.ctx, ops.domain)
    system = _System(frame, ops.operators, spec)
    n = len(ops)
    symbols, gauges = {}, {}
    for i, j in pairs or product(range(n), repeat=2):
        try:
            sol = _solve_pair(system, residual(ops, i, j, spec.equation, frame))
        except Inconsistent as exc:
            raise _PairInconsistent((i, j), exc) from None
        for k, bd in enumerate(system.vector_to_bidiffs(sol.particular)):
            symbols[(i, j, k)] = bd
        gauges[(i, j)] = PairGauge(system, sol)
    return symbols, gauges, frame


# -- verification -----------------------------------------------------------------


def kernel_image(ops: OperatorTuple, bidiffs: Sequence[BiDiffOperator], equation: Equation | None = None) -> Section:
    """``sum_k A_k(K^k(p, q))`` reduced on shell."""
    total = None
    for A, K in zip(ops, bidiffs):
        v = apply(A, K.as_section())
        total = v if total is None else total + v
    return total.map(lambda c: reduce_on_shell(c, equation))


def verify_defining_identity(family: GammaFamily, pairs=None) -> bool:
    """``sum_k A_k(Gamma^k_ij) = residual(i, j)`` for every pair, exactly."""
    n = len(family.ops)
    for i, j in pairs or product(range(n), repeat=2):
        lhs = kernel_image(family.ops, family.pair(i, j), family.equation)
        rhs = residual(family.ops, i, j, family.equation, family.frame)
        if not (lhs - rhs).is_zero():
            return False
    return True


def gauge_equivalent(ops: OperatorTuple, first: Sequence[BiDiffOperator], second: Sequence[BiDiffOperator],
                     equation: Equation | None = None) -> bool:
    """Do two symbol tuples for one pair differ by a kernel direction?"""
    diff = [a - b for a, b in zip(first, second)]
    return kernel_image(ops, diff, equation).is_zero()


@dataclass
class GaugeComparison:
    exact: dict
    in_span: dict
    in_kernel: dict

    @property
    def equivalent(self) -> bool:
        return all(self.in_kernel.values())


def compare_families(reference: GammaFamily, report: GaugeReport, other: GammaFamily) -> GaugeComparison:
    """Compare ``other`` against ``reference`` modulo the gauge of ``reference``."""
    n = len(reference.ops)
    exact, span, kernel = {}, {}, {}
    for i, j in product(range(n), repeat=2):
        mine, theirs = reference.pair(i, j), other.pair(i, j)
        diff = [a - b for a, b in zip(theirs, mine)]
        exact[(i, j)] = all(d.is_zero() for d in diff)
        span[(i, j)] = exact[(i, j)] or report.pairs[(i, j)].contains(diff)
        kernel[(i, j)] = gauge_equivalent(reference.ops, theirs, mine, reference.equation)
    return GaugeComparison(exact, span, kernel)


# -- structural constants ---------------------------------------------------------


class StructuralConstants:
    """``c^k_ij(P, Q) = delta^k_j E_{A_i P}(Q) - delta^k_i E_{A_j Q}(P) + Gamma^k_ij(P, Q)``."""

    def __init__(self, family: GammaFamily):
        self.family = family

    def evaluate(self, i: int, j: int, k: int, P: Section, Q: Section) -> Section:
        ops = self.family.ops
        out = self.family[(i, j, k)].apply(P, Q)
        if k == j:
            aP = apply(ops[i], P)
            out = out + Section([evolutionary(aP, c) for c in Q], out.space)
        if k == i:
            bQ = apply(ops[j], Q)
            out = out - Section([evolutionary(bQ, c) for c in P], out.space)
        return out

    def check_identity(self, i: int, j: int, P: Section, Q: Section) -> bool:
        """``[A_i(P), A_j(Q)] = sum_k A_k(c^k_ij(P, Q))`` for concrete sections."""
        ops = self.family.ops
        eq = self.family.equation
        aP, bQ = apply(ops[i], P), apply(ops[j], Q)
        lhs = Section([evolutionary(aP, b) - evolutionary(bQ, a) for a, b in zip(aP, bQ)], aP.space)
        rhs = None
        for k, A in enumerate(ops):
            v = apply(A, self.evaluate(i, j, k, P, Q))
            rhs = v if rhs is None else rhs + v
        return (lhs - rhs).map(lambda c: reduce_on_shell(c, eq)).is_zero()


def structural_constants(family: GammaFamily) -> StructuralConstants:
    return StructuralConstants(family)


# -- change of parametrisation ----------------------------------------------------


def transform_gamma(family: GammaFamily, g: TotalOperator, g_inverse: TotalOperator) -> GammaFamily:
    """Symbols for ``A_i o g^-1`` obtained from the transformation law."""
    verify_inverse_pair(g, g_inverse)
    ops = family.ops
    new_ops = OperatorTuple([reparametrize(A, g, g_inverse) for A in ops], ops.names)
    frame = family.frame
    eq = family.equation
    P, Q = apply(g_inverse, frame.p), apply(g_inverse, frame.q)
    symbols = {}
    for (i, j, k), gam in family.items():
        val = apply(g, gam.apply(P, Q))
        if k == i:
            val = val + apply(evolutionary_on_coefficients(g, apply(new_ops[j], frame.q)), P)
        if k == j:
            val = val - apply(evolutionary_on_coefficients(g, apply(new_ops[i], frame.p)), Q)
        symbols[(i, j, k)] = frame.bidiff([reduce_on_shell(c, eq) for c in val])
    return GammaFamily(new_ops, symbols, family.spec, frame)


# -- verdicts ---------------------------------------------------------------------


@dataclass
class Verdict:
    status: str  # "compatible" | "not compatible" | "undetermined"
    order_bound: int
    gauge_dim: int | None = None
    family: GammaFamily | None = None
    report: GaugeReport | None = None
    error: Exception | None = None

    @property
    def compatible(self) -> bool:
        return self.status == "compatible"

    def to_json(self) -> dict:
        return {"status": self.status, "order_bound": self.order_bound, "gauge_dim": self.gauge_dim}


def check_strong_compatibility(ops: OperatorTuple, spec: AnsatzSpec | None = None, *, saturate: bool = True) -> Verdict:
    spec = spec or default_spec(ops)
    try:
        family, report = extract_gamma(ops, spec, saturate=saturate)
    except NotStrongCompatible as exc:
        return Verdict("not compatible", exc.spec.sigma_order, error=exc)
    except AnsatzBoundTooSmall as exc:
        return Verdict("undetermined", spec.sigma_order, error=exc)
    return Verdict("compatible", spec.sigma_order, report.total_dim(), family, report)


def operator_bracket(A: TotalOperator, spec: AnsatzSpec | None = None, name: str = "A") -> BiDiffOperator:
    """The bracket induced on the domain of a single involutive operator."""
    ops = OperatorTuple([A], [name])
    family, _ = extract_gamma(ops, spec or default_spec(ops))
    return family[(0, 0, 0)]


@dataclass
class LinearVerdict:
    linear: bool
    indices: tuple
    bracket: BiDiffOperator | None = None
    individual: dict = field(default_factory=dict)
    exact: bool = False
    gauge_dim: int | None = None
    pairwise: dict = field(default_factory=dict)
    error: Exception | None = None

    def to_json(self) -> dict:
        out = {
            "status": "linear compatible" if self.linear else "not linear compatible",
            "operators": [i + 1 for i in self.indices],
            "exact": self.exact,
            "gauge_dim": self.gauge_dim,
        }
        if self.bracket is not None:
            out["bracket"] = str(self.bracket)
        if self.pairwise:
            out["pairwise"] = {f"{i + 1},{j + 1}": v for (i, j), v in sorted(self.pairwise.items())}
        return out


def _lambda_names(ctx: JetContext, n: int) -> list:
    taken = set(ctx.scalars) | {f.name for f in ctx.fibres}
    names = [f"lam{i + 1}" for i in range(n)]
    if taken.intersection(names):
        raise ValueError("scalar names lam1.. are already in use")
    return names


def _linear_bracket(ops: OperatorTuple, indices: Sequence[int], spec: AnsatzSpec, singles: dict) -> LinearVerdict:
    names = _lambda_names(ops.ctx, len(ops))
    lctx = ops.ctx.with_scalars(*names)
    lams = {i: lctx.scalar(names[i]) for i in indices}
    combo = None
    for i in indices:
        term = ops[i].scale(lams[i])
        combo = term if combo is None else combo + term
    single = OperatorTuple([combo], ["A_lambda"])
    frame = _frame(lctx, ops.domain)
    system = _System(frame, [combo], spec, multipliers=[(i, lams[i]) for i in indices])
    try:
        sol = solve(system.rows(residual(single, 0, 0, spec.equation, frame)), len(system.columns))
    except Inconsistent as exc:
        return LinearVerdict(False, tuple(indices), error=exc)
    bracket = system.vector_to_bidiffs(sol.particular, 1)[0]
    expected = frame.zero()
    for i in indices:
        expected = expected + singles[i].map(lambda c: c.lift(frame.ctx)).scale(lams[i])
    diff = bracket - expected
    linear = kernel_image(single, [diff], spec.equation).is_zero()
    return LinearVerdict(linear, tuple(indices), bracket, {i: singles[i] for i in indices}, diff.is_zero(), sol.gauge_dim)


def check_linear_compatibility(ops: OperatorTuple, spec: AnsatzSpec | None = None) -> LinearVerdict:
    """Bracket of ``A_lambda = sum lam_i A_i`` against ``sum lam_i [,]_{A_i}``.

    Every pair is tested first; for three or more operators the whole tuple
    is tested afterwards and the pairwise verdicts are attached.
    """
    spec = spec or default_spec(ops)
    n = len(ops)
    singles = {}
    for i in range(n):
        try:
            singles[i] = operator_bracket(ops[i], spec, ops.names[i])
        except (NotStrongCompatible, AnsatzBoundTooSmall) as exc:
            return LinearVerdict(False, (i,), error=exc)
    if n == 1:
        return _linear_bracket(ops, [0], spec, singles)
    pairwise = {}
    results = {}
    for i in range(n):
        for j in range(i + 1, n):
            results[(i, j)] = _linear_bracket(ops, [i, j], spec, singles)
            pairwise[(i, j)] = results[(i, j)].linear
    if n == 2:
        verdict = results[(0, 1)]
    else:
        verdict = _linear_bracket(ops, list(range(n)), spec, singles)
    verdict.pairwise = pairwise
    return verdict


# -- symmetry and the two-operator identity ---------------------------------------


@dataclass(frozen=True)
class SymmetryRow:
    i: int
    j: int
    k: int
    holds: bool
    label: str


def symmetry_classify(family: GammaFamily) -> list:
    """Check ``Gamma^k_ij(p, q) = -Gamma^k_ji(q, p)`` per triple.

    On covector (odd) domains both arguments have grading one, so the same
    identity states graded symmetry of the symbols.
    """
    label = "graded-symmetric" if family.ops.domain.parity == "odd" else "skew-symmetric"
    eq = family.equation
    rows = []
    for (i, j, k), gam in family.items():
        other = family[(j, i, k)].swapped()
        holds = all(not reduce_on_shell(c, eq) for c in (gam + other).components)
        rows.append(SymmetryRow(i, j, k, holds, label))
    return rows


def symmetry_modulo_gauge(family: GammaFamily) -> dict:
    """Pair-level version: the symmetrised tuple lies in the gauge kernel."""
    n = len(family.ops)
    out = {}
    for i, j in product(range(n), repeat=2):
        summed = [a + b.swapped() for a, b in zip(family.pair(i, j), family.pair(j, i))]
        out[(i, j)] = kernel_image(family.ops, summed, family.equation).is_zero()
    return out


@dataclass
class PropositionVerdict:
    linear: LinearVerdict
    strong: Verdict
    identities: dict  # operator index -> "exact" | "modulo gauge" | "fails"

    @property
    def holds(self) -> bool:
        return all(v != "fails" for v in self.identities.values())


def check_proposition(ops: OperatorTuple, spec: AnsatzSpec | None = None) -> PropositionVerdict:
    """``[,]_{A_i} = Gamma^j_ij + Gamma^j_ji`` and the same with ``i, j`` exchanged."""
    if len(ops) != 2:
        raise ValueError("the two-operator identity requires exactly two operators")
    spec = spec or default_spec(ops)
    linear = check_linear_compatibility(ops, spec)
    strong = check_strong_compatibility(ops, spec)
    identities = {}
    if strong.family is not None:
        fam = strong.family
        eq = spec.equation
        for i, j in ((0, 1), (1, 0)):
            own = operator_bracket(ops[i], spec, ops.names[i])
            own = own.map(lambda c: c.lift(fam.frame.ctx))
            mixed = fam[(i, j, j)] + fam[(j, i, j)]
            diff = (own - mixed).map(lambda c: reduce_on_shell(c, eq))
            if diff.is_zero():
                identities[i] = "exact"
            elif kernel_image(OperatorTuple([ops[i]], [ops.names[i]]), [diff], eq).is_zero():
                identities[i] = "modulo gauge"
            else:
                identities[i] = "fails"
    return PropositionVerdict(linear, strong, identities)


# -- closure on a restricted span -------------------------------------------------


@dataclass
class RestrictedClosure:
    closed: bool
    failures: list

    def structural_constants_vanish(self) -> bool:
        return self.closed


def check_restricted_closure(ops: OperatorTuple, sections: Sequence[Section], equation: Equation | None = None) -> RestrictedClosure:
    """``[A_i(s_a), A_j(s_b)] = 0`` for all listed sections; then ``c^k_ij = 0`` on their span."""
    failures = []
    for i, j in product(range(len(ops)), repeat=2):
        for a, s in enumerate(sections):
            for b, t in enumerate(sections):
                x, y = apply(ops[i], s), apply(ops[j], t)
                comm = [reduce_on_shell(evolutionary(x, v) - evolutionary(y, u), equation) for u, v in zip(x, y)]
                if any(comm):
                    failures.append((i, j, a, b))
    return RestrictedClosure(not failures, failures)
