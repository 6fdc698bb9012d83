"""Text grammar for expressions.

    expr   := ['-'] term (('+' | '-') term)*
    term   := factor ('*' factor | '/' factor)*
    factor := integer | symbol | '(' expr ')' | factor '^' exponent
            | 'exp' '(' linear ')' | 'sqrt' '(' symbol ')'

Divisors and bases of negative/fractional powers must denote single-term
expressions (checked semantically, not syntactically). The argument of exp must
be a sum of (parameter-affine coefficient * variable) products with no constant
offset. Rational constants are written p/q; floats are not part of the symbolic
layer. The printer in Expr.__str__ emits text this parser maps back to the same
normal form.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .context import Context
from .errors import NotRepresentable, ParseError
from .expr import Expr
from .parampoly import ParamPoly

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[()+\-*/^]))")


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos and not text[pos:].strip():
            break
        if not m:
            raise ParseError(f"bad character {text[pos]!r} at offset {pos}")
        tok = m.group(1) or m.group(2) or m.group(3)
        if tok == "**":
            tok = "^"
        tokens.append(tok)
        pos = m.end()
    if text[pos:].strip():
        raise ParseError(f"bad character {text[pos:].strip()[0]!r} at offset {pos}")
    return tokens


class _Parser:
    def __init__(self, tokens: list[str], ctx: Context):
        self.tokens = tokens
        self.pos = 0
        self.ctx = ctx

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression")
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise ParseError(f"expected {tok!r}, got {got!r}")

    # expr := ['-'] term (('+'|'-') term)*
    def expr(self) -> Expr:
        negate = False
        if self.peek() == "-":
            self.next()
            negate = True
        out = self.term()
        if negate:
            out = -out
        while self.peek() in ("+", "-"):
            op = self.next()
            rhs = self.term()
            out = out + rhs if op == "+" else out - rhs
        return out

    # term := factor ('*' factor | '/' factor)*
    def term(self) -> Expr:
        out = self.factor()
        while self.peek() in ("*", "/"):
            op = self.next()
            rhs = self.factor()
            if op == "*":
                out = out * rhs
            else:
                if rhs.single_term() is None and rhs.as_coefficient() is None:
                    raise NotRepresentable("division by a multi-term expression")
                out = out.div(rhs)
        return out

    def factor(self) -> Expr:
        tok = self.next()
        if tok == "(":
            out = self.expr()
            self.expect(")")
        elif tok.isdigit():
            out = Expr.const(self.ctx, int(tok))
        elif tok == "exp":
            self.expect("(")
            inner = self.expr()
            self.expect(")")
            out = self._exp_of(inner)
        elif tok == "sqrt":
            self.expect("(")
            name = self.next()
            self.expect(")")
            out = Expr.variable(self.ctx, name).pow_rational(Fraction(1, 2))
        elif re.match(r"^[A-Za-z_]", tok):
            if tok in self.ctx.variables:
                out = Expr.variable(self.ctx, tok)
            elif tok in self.ctx.parameters:
                out = Expr.parameter(self.ctx, tok)
            else:
                raise ParseError(f"undeclared symbol {tok!r}")
        else:
            raise ParseError(f"unexpected token {tok!r}")
        while self.peek() == "^":
            self.next()
            out = out.pow_rational(self._exponent())
        return out

    # exponent := integer | '(' ['-'] integer ['/' integer] ')'
    def _exponent(self) -> Fraction:
        tok = self.next()
        if tok.isdigit():
            return Fraction(int(tok))
        if tok != "(":
            raise ParseError(f"bad exponent start {tok!r}")
        sign = 1
        tok = self.next()
        if tok == "-":
            sign = -1
            tok = self.next()
        if not tok.isdigit():
            raise ParseError(f"bad exponent {tok!r}")
        num = int(tok)
        den = 1
        if self.peek() == "/":
            self.next()
            tok = self.next()
            if not tok.isdigit():
                raise ParseError(f"bad exponent denominator {tok!r}")
            den = int(tok)
        self.expect(")")
        return Fraction(sign * num, den)

    def _exp_of(self, inner: Expr) -> Expr:
        """Validate exp's argument as sum of slope*variable and build the factor."""
        slopes: dict[int, ParamPoly] = {}
        for mono, coeff in inner.terms:
            if mono.expf or len(mono.powers) != 1 or mono.powers[0][1] != 1:
                raise NotRepresentable(
                    "exp argument must be a sum of coefficient*variable products")
            if any(coeff.den):
                raise NotRepresentable("exp slope must be polynomial in the parameters")
            i = mono.powers[0][0]
            slopes[i] = slopes[i] + coeff.num if i in slopes else coeff.num
        out = Expr.const(self.ctx, 1)
        names = self.ctx.variables
        for i, s in slopes.items():
            if s.total_degree() > 1:
                raise NotRepresentable("exp slope must be parameter-affine")
            out = out * Expr.exp_linear(self.ctx, s, names[i])
        return out


def parse_expr(text: str, ctx: Context) -> Expr:
    """Parse text into an Expr in normal form."""
    parser = _Parser(_tokenize(text), ctx)
    out = parser.expr()
    if parser.peek() is not None:
        raise ParseError(f"trailing input starting at {parser.peek()!r}")
    return out


def print_expr(e: Expr) -> str:
    return str(e)
