"""Exact linear algebra: rational nullspaces and parameter-polynomial solves.

The nullspace routine clears denominators and runs fraction-free (Bareiss)
elimination over the integers, then normalizes to reduced row echelon form so
the returned basis is deterministic for a fixed column order. The
parameter-polynomial solver runs Bareiss over exact polynomial entries and
returns coordinates as exact rational functions; it backs the closure checks,
where structure constants may genuinely depend on the parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DivisionByZero
from .expr import Coefficient, Expr
from .parampoly import ParamPoly

# ---------------------------------------------------------------------------
# rational matrices


def _clear_row(row: list[Fraction]) -> list[int]:
    lcm = 1
    for v in row:
        lcm = lcm * v.denominator // math.gcd(lcm, v.denominator)
    out = []
    g = 0
    for v in row:
        n = int(v * lcm)
        out.append(n)
        g = math.gcd(g, abs(n))
    if g > 1:
        out = [n // g for n in out]
    return out


def _bareiss_echelon(rows: list[list[int]]) -> tuple[list[list[int]], list[int]]:
    """In-place fraction-free elimination; returns (echelon rows, pivot columns)."""
    if not rows:
        return rows, []
    n_cols = len(rows[0])
    pivots: list[int] = []
    r = 0
    prev = 1
    for c in range(n_cols):
        pivot_row = None
        for i in range(r, len(rows)):
            if rows[i][c] != 0:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        rows[r], rows[pivot_row] = rows[pivot_row], rows[r]
        p = rows[r][c]
        for i in range(r + 1, len(rows)):
            if all(v == 0 for v in rows[i]):
                continue
            head = rows[i][c]
            for j in range(n_cols):
                rows[i][j] = (p * rows[i][j] - head * rows[r][j]) // prev
        pivots.append(c)
        prev = p
        r += 1
        if r == len(rows):
            break
    return rows, pivots


def rref(matrix: list[list[Fraction]]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form with the pivot column list."""
    rows = [_clear_row([Fraction(v) for v in row]) for row in matrix]
    rows = [row for row in rows if any(row)]
    rows, pivots = _bareiss_echelon(rows)
    n_cols = len(matrix[0]) if matrix else 0
    out = [[Fraction(v) for v in rows[r]] for r in range(len(pivots))]
    for r in range(len(pivots) - 1, -1, -1):
        c = pivots[r]
        p = out[r][c]
        out[r] = [v / p for v in out[r]]
        for i in range(r):
            f = out[i][c]
            if f:
                out[i] = [a - f * b for a, b in zip(out[i], out[r])]
    return out, pivots


def nullspace(matrix: list[list[Fraction]], n_cols: int) -> list[list[Fraction]]:
    """Basis of the right nullspace, RREF-normalized: one vector per free column,
    with entry 1 at its own free column and zeros at the other free columns."""
    if not matrix:
        return [[Fraction(int(i == j)) for j in range(n_cols)] for i in range(n_cols)]
    reduced, pivots = rref(matrix)
    free_cols = [c for c in range(n_cols) if c not in pivots]
    basis = []
    for fc in free_cols:
        vec = [Fraction(0)] * n_cols
        vec[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            vec[pc] = -reduced[r][fc]
        basis.append(vec)
    return basis


# ---------------------------------------------------------------------------
# rational functions of the parameters (closure structure constants)


@dataclass(frozen=True)
class RatFunc:
    num: ParamPoly
    den: ParamPoly

    @staticmethod
    def make(num: ParamPoly, den: ParamPoly) -> "RatFunc":
        if den.is_zero:
            raise DivisionByZero("rational function with zero denominator")
        if num.is_zero:
            return RatFunc(num, ParamPoly.const(num.nparams, 1))
        try:
            q = num.exact_div(den)
            return RatFunc(q, ParamPoly.const(num.nparams, 1))
        except Exception:
            pass
        lead = den.terms[-1][1]
        if lead != 1:
            num = num.scale(Fraction(1) / lead)
            den = den.scale(Fraction(1) / lead)
        return RatFunc(num, den)

    @staticmethod
    def from_poly(p: ParamPoly) -> "RatFunc":
        return RatFunc(p, ParamPoly.const(p.nparams, 1))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RatFunc):
            return NotImplemented
        return (self.num * other.den - other.num * self.den).is_zero

    def __hash__(self):
        return hash((self.num, self.den))

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    def as_const(self) -> Fraction | None:
        n, d = self.num.as_const(), self.den.as_const()
        if n is None or d is None:
            return None
        return n / d

    def text(self, names: tuple[str, ...]) -> str:
        if self.den.as_const() == 1:
            return self.num.text(names)
        return f"({self.num.text(names)})/({self.den.text(names)})"


def solve_parampoly(matrix: list[list[ParamPoly]], rhs: list[ParamPoly],
                    nparams: int) -> list[RatFunc] | None:
    """Solve A x = b exactly over the field of rational parameter functions.

    Returns None when the system is inconsistent. Requires full column rank
    (the use sites solve for coordinates in a basis, which is injective).
    """
    n_rows = len(matrix)
    n_cols = len(matrix[0]) if matrix else 0
    aug = [list(matrix[i]) + [rhs[i]] for i in range(n_rows)]
    prev = ParamPoly.const(nparams, 1)
    pivots: list[int] = []
    r = 0
    for c in range(n_cols):
        pivot_row = None
        for i in range(r, n_rows):
            if not aug[i][c].is_zero:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        aug[r], aug[pivot_row] = aug[pivot_row], aug[r]
        p = aug[r][c]
        for i in range(r + 1, n_rows):
            head = aug[i][c]
            for j in range(n_cols + 1):
                val = p * aug[i][j] - head * aug[r][j]
                aug[i][j] = val.exact_div(prev)
        pivots.append(c)
        prev = p
        r += 1
        if r == n_rows:
            break
    for i in range(r, n_rows):
        if not aug[i][n_cols].is_zero:
            return None
        if any(not aug[i][j].is_zero for j in range(n_cols)):  # pragma: no cover
            return None
    if len(pivots) < n_cols:
        # underdetermined coordinates: treat missing ones as zero only if the
        # corresponding columns are entirely zero, otherwise give up
        zero = RatFunc.from_poly(ParamPoly.zero(nparams))
        sol: list[RatFunc] = [zero] * n_cols
        used = set(pivots)
        for c in range(n_cols):
            if c not in used and any(not matrix[i][c].is_zero for i in range(n_rows)):
                return None
    else:
        sol = [RatFunc.from_poly(ParamPoly.zero(nparams))] * n_cols
    for rr in range(len(pivots) - 1, -1, -1):
        c = pivots[rr]
        acc_num = aug[rr][n_cols]
        acc = RatFunc.from_poly(acc_num)
        for j in range(c + 1, n_cols):
            if not aug[rr][j].is_zero:
                term = _ratfunc_mul(RatFunc.from_poly(aug[rr][j]), sol[j])
                acc = _ratfunc_sub(acc, term)
        sol[c] = _ratfunc_divpoly(acc, aug[rr][c])
    return sol


def _ratfunc_mul(a: RatFunc, b: RatFunc) -> RatFunc:
    return RatFunc.make(a.num * b.num, a.den * b.den)


def _ratfunc_sub(a: RatFunc, b: RatFunc) -> RatFunc:
    return RatFunc.make(a.num * b.den - b.num * a.den, a.den * b.den)


def _ratfunc_divpoly(a: RatFunc, p: ParamPoly) -> RatFunc:
    return RatFunc.make(a.num, a.den * p)


# ---------------------------------------------------------------------------
# small Expr matrix helpers


def mat_mul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    assert len(a[0]) == inner
    return tuple(tuple(_sum_exprs([a[i][k] * b[k][j] for k in range(inner)])
                       for j in range(cols)) for i in range(rows))


def mat_vec(a, v):
    return tuple(_sum_exprs([a[i][k] * v[k] for k in range(len(v))]) for i in range(len(a)))


def transpose(a):
    return tuple(tuple(a[i][j] for i in range(len(a))) for j in range(len(a[0])))


def identity_matrix(ctx, m: int):
    one, zero = Expr.const(ctx, 1), Expr.zero(ctx)
    return tuple(tuple(one if i == j else zero for j in range(m)) for i in range(m))


def zero_matrix(ctx, rows: int, cols: int):
    zero = Expr.zero(ctx)
    return tuple(tuple(zero for _ in range(cols)) for _ in range(rows))


def mat_add(a, b):
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_sub(a, b):
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_apply(a, fn):
    return tuple(tuple(fn(x) for x in row) for row in a)


def mat_scale_expr(a, s: Expr):
    return tuple(tuple(s * x for x in row) for row in a)


def determinant(a) -> Expr:
    """Exact determinant by cofactor expansion (matrices here are tiny)."""
    n = len(a)
    if n == 1:
        return a[0][0]
    if n == 2:
        return a[0][0] * a[1][1] - a[0][1] * a[1][0]
    out = None
    for j in range(n):
        minor = tuple(tuple(row[k] for k in range(n) if k != j) for row in a[1:])
        term = a[0][j] * determinant(minor)
        if j % 2:
            term = -term
        out = term if out is None else out + term
    return out


def adjugate(a):
    n = len(a)
    if n == 1:
        ctx = a[0][0].ctx
        return ((Expr.const(ctx, 1),),)
    cof = []
    for i in range(n):
        row = []
        for j in range(n):
            minor = tuple(tuple(a[r][c] for c in range(n) if c != j)
                          for r in range(n) if r != i)
            term = determinant(minor)
            if (i + j) % 2:
                term = -term
            row.append(term)
        cof.append(tuple(row))
    return transpose(tuple(cof))


def _sum_exprs(items):
    out = items[0]
    for e in items[1:]:
        out = out + e
    return out
