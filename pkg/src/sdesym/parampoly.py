"""Exact multivariate polynomials over the rationals in the model parameters.

These are the scalars that appear inside expression coefficients and inside
exponential-factor slopes. Terms are kept in a canonical sorted tuple so that
equal polynomials compare and hash equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import DivisionByZero, NotRepresentable

Exps = tuple[int, ...]


def _add_exps(a: Exps, b: Exps) -> Exps:
    return tuple(x + y for x, y in zip(a, b))


def _sub_exps(a: Exps, b: Exps) -> Exps:
    return tuple(x - y for x, y in zip(a, b))


@dataclass(frozen=True)
class ParamPoly:
    nparams: int
    terms: tuple[tuple[Exps, Fraction], ...]  # sorted by exponent tuple, no zero coeffs

    # -- constructors ------------------------------------------------------
    @staticmethod
    def from_dict(nparams: int, data: dict[Exps, Fraction]) -> "ParamPoly":
        terms = tuple(sorted((e, c) for e, c in data.items() if c != 0))
        return ParamPoly(nparams, terms)

    @staticmethod
    def zero(nparams: int) -> "ParamPoly":
        return ParamPoly(nparams, ())

    @staticmethod
    def const(nparams: int, value) -> "ParamPoly":
        q = Fraction(value)
        if q == 0:
            return ParamPoly.zero(nparams)
        return ParamPoly(nparams, (((0,) * nparams, q),))

    @staticmethod
    def param(nparams: int, index: int) -> "ParamPoly":
        exps = tuple(1 if j == index else 0 for j in range(nparams))
        return ParamPoly(nparams, ((exps, Fraction(1)),))

    # -- predicates --------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    def as_const(self) -> Fraction | None:
        """The value as a rational constant, or None if any parameter appears."""
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and all(e == 0 for e in self.terms[0][0]):
            return self.terms[0][1]
        return None

    def single_term(self) -> tuple[Exps, Fraction] | None:
        return self.terms[0] if len(self.terms) == 1 else None

    def total_degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def min_exponent(self, j: int) -> int:
        """Smallest exponent of parameter j across terms (0 for the zero poly)."""
        if not self.terms:
            return 0
        return min(e[j] for e, _ in self.terms)

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other: "ParamPoly") -> "ParamPoly":
        data = dict(self.terms)
        for e, c in other.terms:
            data[e] = data.get(e, Fraction(0)) + c
        return ParamPoly.from_dict(self.nparams, data)

    def __neg__(self) -> "ParamPoly":
        return ParamPoly(self.nparams, tuple((e, -c) for e, c in self.terms))

    def __sub__(self, other: "ParamPoly") -> "ParamPoly":
        return self + (-other)

    def __mul__(self, other: "ParamPoly") -> "ParamPoly":
        data: dict[Exps, Fraction] = {}
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                e = _add_exps(e1, e2)
                data[e] = data.get(e, Fraction(0)) + c1 * c2
        return ParamPoly.from_dict(self.nparams, data)

    def scale(self, q) -> "ParamPoly":
        q = Fraction(q)
        if q == 0:
            return ParamPoly.zero(self.nparams)
        return ParamPoly(self.nparams, tuple((e, c * q) for e, c in self.terms))

    def shift_exponents(self, delta: Exps) -> "ParamPoly":
        """Multiply by the (possibly negative-exponent) parameter monomial delta."""
        return ParamPoly(self.nparams, tuple(sorted((_add_exps(e, delta), c) for e, c in self.terms)))

    def pow(self, k: int) -> "ParamPoly":
        if k < 0:
            raise NotRepresentable("negative power of a parameter polynomial")
        out = ParamPoly.const(self.nparams, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- exact division (used by fraction-free elimination) -----------------
    def _lead(self) -> tuple[Exps, Fraction]:
        # lex-greatest exponent tuple; terms are sorted ascending
        return self.terms[-1]

    def exact_div(self, other: "ParamPoly") -> "ParamPoly":
        """Exact polynomial quotient self/other; raises if it does not divide."""
        if other.is_zero:
            raise DivisionByZero("polynomial division by zero")
        c = other.as_const()
        if c is not None:
            return self.scale(Fraction(1) / c)
        rem = dict(self.terms)
        out: dict[Exps, Fraction] = {}
        de, dc = other._lead()
        guard = 0
        while rem:
            guard += 1
            if guard > 10000:
                raise NotRepresentable("polynomial division did not terminate")
            re_, rc = max(rem.items())
            qe = _sub_exps(re_, de)
            if any(x < 0 for x in qe):
                raise NotRepresentable("inexact polynomial division")
            qc = rc / dc
            out[qe] = out.get(qe, Fraction(0)) + qc
            for e2, c2 in other.terms:
                e = _add_exps(qe, e2)
                v = rem.get(e, Fraction(0)) - qc * c2
                if v == 0:
                    rem.pop(e, None)
                else:
                    rem[e] = v
        return ParamPoly.from_dict(self.nparams, out)

    # -- evaluation / display ------------------------------------------------
    def eval(self, values: tuple[float, ...]) -> float:
        total = 0.0
        for e, c in self.terms:
            v = float(c)
            for x, k in zip(values, e):
                if k:
                    v *= x**k
            total += v
        return total

    def text(self, names: tuple[str, ...]) -> str:
        """Human/grammar form, e.g. '1/2*a + b^2'. Used by the expression printer."""
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms, reverse=True):
            factors = []
            if c == -1 and any(e):
                head = "-"
            elif c == 1 and any(e):
                head = ""
            else:
                head = str(c)
            for name, k in zip(names, e):
                if k == 1:
                    factors.append(name)
                elif k != 0:
                    factors.append(f"{name}^{k}")
            body = "*".join(factors)
            if head in ("", "-"):
                parts.append(head + body)
            elif body:
                parts.append(f"{head}*{body}")
            else:
                parts.append(head)
        text = parts[0]
        for p in parts[1:]:
            text += " - " + p[1:] if p.startswith("-") else " + " + p
        return text
