"""Bi-Hamiltonian recursion for a pair ``A_1 = D_x``, ``A_2``.

Starting from a Casimir ``H_0`` of ``A_1`` each step solves
``A_1(dH_{k+1}) = A_2(dH_k)`` by inverting ``D_x`` on its image and rebuilds
the Hamiltonian with the homotopy formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations

from .expr import DiffExpr
from .jetcalc import (
    Functional,
    HomotopyUnsupported,
    NotVariational,
    Section,
    commutator,
    euler_operator,
    evolutionary,
    homotopy_inverse,
    is_total_divergence,
)
from .operators import NotInImage, TotalOperator, adjoint, apply, invert_Dx_on_image


class NotSkewAdjoint(ValueError):
    pass


class InversionUnsupported(ValueError):
    """Constructive inversion is only available when ``A_1`` is ``D_x``."""


class RecursionObstruction(ArithmeticError):
    """The recursion cannot continue at step ``step``."""

    def __init__(self, step: int, reason: str):
        super().__init__(f"recursion obstructed at step {step}: {reason}")
        self.step = step
        self.reason = reason


def require_skew(A: TotalOperator) -> None:
    if adjoint(A).entries != (-A).entries:
        raise NotSkewAdjoint(f"{A} is not skew-adjoint")


def is_casimir(A: TotalOperator, H: Functional) -> bool:
    return apply(A, euler_operator(H.density)).is_zero()


def poisson_bracket(H: Functional, F: Functional, A: TotalOperator) -> Functional:
    """``{H, F}_A = int dH . A(dF)``."""
    require_skew(A)
    dH, dF = euler_operator(H.density), euler_operator(F.density)
    density = H.ctx.zero
    for a, b in zip(dH, apply(A, dF)):
        density = density + a * b
    return Functional(density)


def jacobi_functional_check(A: TotalOperator, H: Functional, F: Functional, G: Functional) -> bool:
    """Cyclic sum of nested brackets is a total divergence."""
    total = (
        poisson_bracket(poisson_bracket(H, F, A), G, A).density
        + poisson_bracket(poisson_bracket(F, G, A), H, A).density
        + poisson_bracket(poisson_bracket(G, H, A), F, A).density
    )
    return is_total_divergence(total)


@dataclass
class HierarchyState:
    A1: TotalOperator
    A2: TotalOperator
    hamiltonians: list = field(default_factory=list)
    covectors: list = field(default_factory=list)
    flows: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.hamiltonians) - 1

    def to_json(self) -> list:
        return [
            {
                "k": k,
                "density": str(H.density),
                "covector": _section_str(psi),
                "flow": _section_str(phi),
            }
            for k, (H, psi, phi) in enumerate(zip(self.hamiltonians, self.covectors, self.flows))
        ]


def _section_str(s: Section) -> str:
    return str(s[0]) if len(s) == 1 else "(" + ", ".join(str(c) for c in s) + ")"


def _dx_direction(A: TotalOperator) -> int:
    """Direction ``i`` such that ``A = D_i * Id``; otherwise unsupported."""
    ctx = A.ctx
    rows, cols = A.shape
    if rows == cols:
        for i in range(ctx.n):
            mi = tuple(1 if d == i else 0 for d in range(ctx.n))
            if all(
                A.entries[r][c] == ({mi: ctx.one} if r == c else {})
                for r in range(rows)
                for c in range(cols)
            ):
                return i
    raise InversionUnsupported(f"inversion of {A} is unsupported; the first operator must be D_x")


def start_hierarchy(A1: TotalOperator, A2: TotalOperator, casimir: Functional | None = None) -> HierarchyState:
    """Seed with a Casimir of ``A_1`` (``int u`` per fibre by default)."""
    _dx_direction(A1)
    ctx = A1.ctx
    if casimir is None:
        density = ctx.zero
        for f in ctx.dependents:
            density = density + ctx.jet(f)
        casimir = Functional(density)
    if not is_casimir(A1, casimir):
        raise RecursionObstruction(0, f"{casimir} is not a Casimir of {A1}")
    psi = euler_operator(casimir.density)
    return HierarchyState(A1, A2, [casimir], [psi], [apply(A1, psi)])


def magri_step(state: HierarchyState) -> HierarchyState:
    step = state.depth + 1
    direction = _dx_direction(state.A1)
    theta = apply(state.A2, state.covectors[-1])
    try:
        comps = [invert_Dx_on_image(c, direction) for c in theta]
    except NotInImage as exc:
        raise RecursionObstruction(step, f"A2(psi_{step - 1}) is outside the image of A1 ({exc})") from None
    psi = Section(comps, state.covectors[-1].space)
    try:
        H = homotopy_inverse(psi).normalized()
    except (NotVariational, HomotopyUnsupported) as exc:
        raise RecursionObstruction(step, str(exc)) from None
    return replace(
        state,
        hamiltonians=state.hamiltonians + [H],
        covectors=state.covectors + [psi],
        flows=state.flows + [apply(state.A1, psi)],
    )


def build_hierarchy(A1: TotalOperator, A2: TotalOperator, steps: int, casimir: Functional | None = None) -> HierarchyState:
    state = start_hierarchy(A1, A2, casimir)
    for _ in range(steps):
        state = magri_step(state)
    return state


@dataclass
class Certificate:
    checks: list  # (name, passed)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks)

    @property
    def failures(self) -> list:
        return [name for name, ok in self.checks if not ok]

    def to_json(self) -> list:
        return [{"check": name, "passed": ok} for name, ok in self.checks]


def verify_hierarchy(state: HierarchyState) -> Certificate:
    """Exact checks of the hierarchy; failures are listed, never raised."""
    checks = []
    K = state.depth
    for k, (H, psi) in enumerate(zip(state.hamiltonians, state.covectors)):
        checks.append((f"gradient H{k}", euler_operator(H.density) == psi))
    checks.append(("casimir H0", is_casimir(state.A1, state.hamiltonians[0])))
    for k in range(1, K + 1):
        lhs = apply(state.A2, state.covectors[k - 1])
        rhs = apply(state.A1, state.covectors[k])
        checks.append((f"recursion {k - 1}->{k}", lhs == rhs))
    ops = (("A1", state.A1), ("A2", state.A2))
    for i, j in combinations(range(K + 1), 2):
        Hi, Hj = state.hamiltonians[i], state.hamiltonians[j]
        for name, A in ops:
            checks.append((f"{{H{i},H{j}}}_{name} = 0", poisson_bracket(Hi, Hj, A).is_zero()))
        checks.append((f"[phi{i},phi{j}] = 0", commutator(state.flows[i], state.flows[j]).is_zero()))
    for i, H in enumerate(state.hamiltonians):
        for k, phi in enumerate(state.flows):
            checks.append((f"H{i} conserved along phi{k}", is_total_divergence(evolutionary(phi, H.density))))
    return Certificate(checks)


def random_functional(ctx, rng, degree: int = 3, order: int = 2, terms: int = 3) -> Functional:
    """A polynomial density with small integer coefficients (for test suites)."""
    jets = [ctx.jet(f, (k,) + (0,) * (ctx.n - 1)) for f in ctx.dependents for k in range(order + 1)]
    density: DiffExpr = ctx.zero
    for _ in range(terms):
        mono = ctx.const(rng.choice([-3, -2, -1, 1, 2, 3]))
        for _ in range(rng.randint(1, degree)):
            mono = mono * rng.choice(jets)
        density = density + mono
    return Functional(density)
