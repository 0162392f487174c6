"""Exact sparse linear algebra over the rationals.

Columns are identified by their position; lower positions are cheaper.  The
reduced row echelon form pivots on the cheapest available column, so the
particular solution with all free variables set to zero is supported on the
lexicographically cheapest independent set of columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

RHS = -1  # key of the right-hand side inside a row dict


class Inconsistent(ArithmeticError):
    """The system has no solution.

    ``certificate`` maps original row indices to multipliers whose combination
    reduces every variable to zero but leaves ``residue`` on the right.
    """

    def __init__(self, certificate: dict, residue: Fraction):
        super().__init__("linear system is inconsistent")
        self.certificate = certificate
        self.residue = residue


@dataclass
class Solution:
    particular: dict
    nullspace: list = field(default_factory=list)
    pivots: tuple = ()

    @property
    def gauge_dim(self) -> int:
        return len(self.nullspace)


def _axpy(target: dict, factor, source: dict) -> None:
    """``target += factor * source`` in place, dropping zeros."""
    for k, v in source.items():
        w = target.get(k, 0) + factor * v
        if w:
            target[k] = w
        else:
            del target[k]


class _Echelon:
    def __init__(self, track: bool):
        self.rows: dict = {}  # pivot column -> row (pivot entry 1)
        self.prov: dict = {}
        self.track = track

    def reduce(self, row: dict, prov: dict | None):
        done = set()
        while True:
            cols = [c for c in row if c != RHS and c in self.rows and c not in done]
            if not cols:
                return row, prov
            c = min(cols)
            done.add(c)
            f = -row[c]
            _axpy(row, f, self.rows[c])
            if self.track:
                _axpy(prov, f, self.prov[c])

    def insert(self, row: dict, prov: dict | None):
        row, prov = self.reduce(row, prov)
        cols = [c for c in row if c != RHS]
        if not cols:
            if row.get(RHS):
                return row[RHS], prov
            return None, None
        lead = min(cols)
        inv = Fraction(1) / row[lead]
        row = {k: v * inv for k, v in row.items()}
        self.rows[lead] = row
        if self.track:
            self.prov[lead] = {k: v * inv for k, v in prov.items()}
        return None, None


def solve(rows, ncols: int, *, want_nullspace: bool = True) -> Solution:
    """Solve ``rows`` (dicts ``{col: coeff, RHS: value}``) exactly.

    Raises :class:`Inconsistent` with a certificate when there is no solution.
    """
    rows = [dict(r) for r in rows if r]
    ech = _Echelon(track=False)
    for r in rows:
        bad, _ = ech.insert(dict(r), None)
        if bad is not None:
            raise _certify(rows)
    # back substitution to reduced form, highest pivot first
    pivots = sorted(ech.rows)
    for c in reversed(pivots):
        pr = ech.rows[c]
        for other in pivots:
            if other < c:
                orow = ech.rows[other]
                v = orow.get(c)
                if v:
                    _axpy(orow, -v, pr)
    particular = {c: ech.rows[c][RHS] for c in pivots if ech.rows[c].get(RHS)}
    nullspace = []
    if want_nullspace:
        pivset = set(pivots)
        by_free: dict = {}
        for c in pivots:
            for k, v in ech.rows[c].items():
                if k != RHS and k != c:
                    by_free.setdefault(k, []).append((c, v))
        for f in range(ncols):
            if f in pivset:
                continue
            vec = {f: Fraction(1)}
            for c, v in by_free.get(f, ()):
                vec[c] = -v
            nullspace.append(vec)
    return Solution(particular, nullspace, tuple(pivots))


def _certify(rows) -> Inconsistent:
    ech = _Echelon(track=True)
    for i, r in enumerate(rows):
        bad, prov = ech.insert(dict(r), {i: Fraction(1)})
        if bad is not None:
            return Inconsistent(prov, bad)
    raise AssertionError("inconsistency vanished on re-run")


def check_certificate(rows, cert: Inconsistent) -> bool:
    """Recombine rows by the certificate; all variables must cancel."""
    rows = [dict(r) for r in rows if r]
    acc: dict = {}
    for i, m in cert.certificate.items():
        _axpy(acc, m, rows[i])
    return set(acc) == {RHS} and acc[RHS] == cert.residue
