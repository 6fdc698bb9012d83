"""Exact closed expression class for drift/diffusion/symmetry coefficients.

An Expr is a finite sum of terms

    coefficient * prod_v v^(p_v) * prod_v exp(s_v * v)

where p_v are rational exponents, each slope s_v is a polynomial of total
degree <= 1 in the declared parameters, and the coefficient is a ratio of a
parameter polynomial over a monic parameter monomial, with rational number
coefficients throughout. The class is closed under addition, multiplication,
differentiation, rational powers of single terms, and affine substitution of
variables, and every value has one normal form, so equality of expressions is
decidable by construction. Operations whose exact result would leave the class
raise NotRepresentable instead of approximating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .context import Context
from .errors import DivisionByZero, DomainError, NotRepresentable
from .parampoly import Exps, ParamPoly

# ---------------------------------------------------------------------------
# rational roots


def _int_nth_root(n: int, k: int) -> int | None:
    """Exact k-th root of the nonnegative integer n, or None."""
    if n in (0, 1):
        return n
    r = round(n ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**k == n:
            return cand
    return None


def fraction_pow(c: Fraction, q: Fraction) -> Fraction:
    """c**q as an exact rational; raises NotRepresentable if it is not one."""
    if q.denominator == 1:
        k = q.numerator
        if k >= 0:
            return c**k
        if c == 0:
            raise DivisionByZero("0 raised to a negative power")
        return Fraction(1) / c**(-k)
    if c == 0:
        if q > 0:
            return Fraction(0)
        raise DivisionByZero("0 raised to a negative power")
    s = q.denominator
    if c < 0 and s % 2 == 0:
        raise NotRepresentable(f"even root of the negative constant {c}")
    sign = -1 if c < 0 else 1
    num = _int_nth_root(abs(c.numerator), s)
    den = _int_nth_root(abs(c.denominator), s)
    if num is None or den is None:
        raise NotRepresentable(f"{c} has no exact {s}-th root")
    root = Fraction(sign * num, den)
    return fraction_pow(root, Fraction(q.numerator))


# ---------------------------------------------------------------------------
# monomials


@dataclass(frozen=True)
class Monomial:
    powers: tuple[tuple[int, Fraction], ...]  # (var index, exponent), sorted, no zeros
    expf: tuple[tuple[int, ParamPoly], ...]  # (var index, slope), sorted, no zero slopes

    @staticmethod
    def make(powers: dict[int, Fraction], expf: dict[int, ParamPoly]) -> "Monomial":
        p = tuple(sorted((i, q) for i, q in powers.items() if q != 0))
        e = tuple(sorted(((i, s) for i, s in expf.items() if not s.is_zero),
                         key=lambda item: item[0]))
        return Monomial(p, e)

    @staticmethod
    def one() -> "Monomial":
        return Monomial((), ())

    @property
    def is_one(self) -> bool:
        return not self.powers and not self.expf

    def mul(self, other: "Monomial") -> "Monomial":
        powers = dict(self.powers)
        for i, q in other.powers:
            powers[i] = powers.get(i, Fraction(0)) + q
        expf = dict(self.expf)
        for i, s in other.expf:
            expf[i] = expf[i] + s if i in expf else s
        return Monomial.make(powers, expf)

    def pow(self, q: Fraction) -> "Monomial":
        return Monomial.make({i: p * q for i, p in self.powers},
                             {i: s.scale(q) for i, s in self.expf})

    def sort_key(self):
        deg = sum(p for _, p in self.powers)
        ekey = tuple((i, s.terms) for i, s in self.expf)
        return (deg, self.powers, ekey)

    def power_of(self, i: int) -> Fraction:
        for j, p in self.powers:
            if j == i:
                return p
        return Fraction(0)

    def slope_of(self, i: int) -> ParamPoly | None:
        for j, s in self.expf:
            if j == i:
                return s
        return None

    def eval(self, values: tuple[float, ...], pvalues: tuple[float, ...],
             names: tuple[str, ...]) -> float:
        out = 1.0
        for i, p in self.powers:
            v = values[i]
            if p.denominator == 1:
                k = p.numerator
                if v == 0.0 and k < 0:
                    raise DivisionByZero(f"{names[i]}^{k} at {names[i]}=0")
                out *= v**k
            else:
                if v < 0.0:
                    raise DomainError(f"{names[i]}^({p}) at negative {names[i]}")
                if v == 0.0 and p < 0:
                    raise DivisionByZero(f"{names[i]}^({p}) at {names[i]}=0")
                out *= v ** float(p)
        arg = 0.0
        for i, s in self.expf:
            arg += s.eval(pvalues) * values[i]
        if arg:
            out *= math.exp(arg)
        return out


# ---------------------------------------------------------------------------
# coefficients: ParamPoly / monic parameter monomial


@dataclass(frozen=True)
class Coefficient:
    num: ParamPoly
    den: Exps  # exponents of the monic parameter-monomial denominator

    @staticmethod
    def make(num: ParamPoly, den: Exps) -> "Coefficient":
        if any(e < 0 for e in den):
            raise NotRepresentable("negative exponent in a coefficient denominator")
        if num.is_zero:
            return Coefficient(num, (0,) * num.nparams)
        cancel = tuple(min(num.min_exponent(j), den[j]) for j in range(num.nparams))
        if any(cancel):
            num = num.shift_exponents(tuple(-c for c in cancel))
            den = tuple(d - c for d, c in zip(den, cancel))
        return Coefficient(num, den)

    @staticmethod
    def from_poly(p: ParamPoly) -> "Coefficient":
        return Coefficient(p, (0,) * p.nparams)

    @staticmethod
    def rational(nparams: int, q) -> "Coefficient":
        return Coefficient.from_poly(ParamPoly.const(nparams, q))

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    def as_fraction(self) -> Fraction | None:
        if any(self.den):
            return None
        return self.num.as_const()

    def __add__(self, other: "Coefficient") -> "Coefficient":
        den = tuple(max(a, b) for a, b in zip(self.den, other.den))
        n1 = self.num.shift_exponents(tuple(d - a for d, a in zip(den, self.den)))
        n2 = other.num.shift_exponents(tuple(d - b for d, b in zip(den, other.den)))
        return Coefficient.make(n1 + n2, den)

    def __neg__(self) -> "Coefficient":
        return Coefficient(-self.num, self.den)

    def __sub__(self, other: "Coefficient") -> "Coefficient":
        return self + (-other)

    def __mul__(self, other: "Coefficient") -> "Coefficient":
        return Coefficient.make(self.num * other.num,
                                tuple(a + b for a, b in zip(self.den, other.den)))

    def scale(self, q) -> "Coefficient":
        return Coefficient.make(self.num.scale(q), self.den)

    def mul_poly(self, p: ParamPoly) -> "Coefficient":
        return Coefficient.make(self.num * p, self.den)

    def _flat_single(self) -> tuple[Fraction, Exps]:
        one = self.num.single_term()
        if one is None:
            raise NotRepresentable("coefficient is not a single parameter monomial")
        exps, c = one
        return c, tuple(a - b for a, b in zip(exps, self.den))

    def inverse(self) -> "Coefficient":
        if self.is_zero:
            raise DivisionByZero("division by the zero coefficient")
        c, flat = self._flat_single()
        num = ParamPoly.from_dict(self.num.nparams,
                                  {tuple(max(-e, 0) for e in flat): Fraction(1) / c})
        den = tuple(max(e, 0) for e in flat)
        return Coefficient.make(num, den)

    def pow_rational(self, q: Fraction) -> "Coefficient":
        c, flat = self._flat_single()
        new = tuple(e * q for e in flat)
        if any(e.denominator != 1 for e in new):
            raise NotRepresentable("fractional power of a parameter")
        newc = fraction_pow(c, q)
        num = ParamPoly.from_dict(self.num.nparams,
                                  {tuple(max(int(e), 0) for e in new): newc})
        den = tuple(max(-int(e), 0) for e in new)
        return Coefficient.make(num, den)

    def eval(self, pvalues: tuple[float, ...]) -> float:
        d = 1.0
        for v, e in zip(pvalues, self.den):
            if e:
                d *= v**e
        if d == 0.0:
            raise DivisionByZero("coefficient denominator vanished at the probe point")
        return self.num.eval(pvalues) / d

    def iter_atoms(self):
        """Yield (integer parameter-exponent vector, Fraction) per numerator term."""
        for exps, c in self.num.terms:
            yield tuple(a - b for a, b in zip(exps, self.den)), c


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Expr:
    ctx: Context
    terms: tuple[tuple[Monomial, Coefficient], ...]  # sorted by monomial sort key

    # -- constructors ------------------------------------------------------
    @staticmethod
    def make(ctx: Context, data: dict[Monomial, Coefficient]) -> "Expr":
        terms = tuple(sorted(((m, c) for m, c in data.items() if not c.is_zero),
                             key=lambda t: t[0].sort_key()))
        return Expr(ctx, terms)

    @staticmethod
    def zero(ctx: Context) -> "Expr":
        return Expr(ctx, ())

    @staticmethod
    def const(ctx: Context, q) -> "Expr":
        c = Coefficient.rational(ctx.nparams, q)
        if c.is_zero:
            return Expr.zero(ctx)
        return Expr(ctx, ((Monomial.one(), c),))

    @staticmethod
    def variable(ctx: Context, name: str) -> "Expr":
        m = Monomial.make({ctx.var_index(name): Fraction(1)}, {})
        return Expr(ctx, ((m, Coefficient.rational(ctx.nparams, 1)),))

    @staticmethod
    def parameter(ctx: Context, name: str) -> "Expr":
        p = ParamPoly.param(ctx.nparams, ctx.param_index(name))
        return Expr(ctx, ((Monomial.one(), Coefficient.from_poly(p)),))

    @staticmethod
    def exp_linear(ctx: Context, slope: ParamPoly, var: str) -> "Expr":
        if slope.total_degree() > 1:
            raise NotRepresentable("exponential slope must be parameter-affine")
        if slope.is_zero:
            return Expr.const(ctx, 1)
        m = Monomial.make({}, {ctx.var_index(var): slope})
        return Expr(ctx, ((m, Coefficient.rational(ctx.nparams, 1)),))

    # -- basic structure ----------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    def single_term(self) -> tuple[Monomial, Coefficient] | None:
        return self.terms[0] if len(self.terms) == 1 else None

    def as_coefficient(self) -> Coefficient | None:
        """The value as a Coefficient if no variable appears, else None."""
        if not self.terms:
            return Coefficient.rational(self.ctx.nparams, 0)
        if len(self.terms) == 1 and self.terms[0][0].is_one:
            return self.terms[0][1]
        return None

    def as_fraction(self) -> Fraction | None:
        c = self.as_coefficient()
        return None if c is None else c.as_fraction()

    def constant_split(self) -> tuple["Expr", Coefficient]:
        """Split off the coefficient of the empty monomial: (rest, constant)."""
        const = Coefficient.rational(self.ctx.nparams, 0)
        rest = {}
        for m, c in self.terms:
            if m.is_one:
                const = c
            else:
                rest[m] = c
        return Expr.make(self.ctx, rest), const

    def iter_atoms(self):
        """Yield ((Monomial, parameter-exponent vector), Fraction) per atom."""
        for m, c in self.terms:
            for pexps, q in c.iter_atoms():
                yield (m, pexps), q

    # -- ring operations ----------------------------------------------------
    def _check(self, other: "Expr") -> None:
        self.ctx.require_same(other.ctx)

    def __add__(self, other: "Expr") -> "Expr":
        self._check(other)
        data = dict(self.terms)
        for m, c in other.terms:
            data[m] = data[m] + c if m in data else c
        return Expr.make(self.ctx, data)

    def __neg__(self) -> "Expr":
        return Expr(self.ctx, tuple((m, -c) for m, c in self.terms))

    def __sub__(self, other: "Expr") -> "Expr":
        return self + (-other)

    def __mul__(self, other: "Expr") -> "Expr":
        self._check(other)
        data: dict[Monomial, Coefficient] = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = m1.mul(m2)
                c = c1 * c2
                data[m] = data[m] + c if m in data else c
        return Expr.make(self.ctx, data)

    def scale(self, q) -> "Expr":
        q = Fraction(q)
        if q == 0:
            return Expr.zero(self.ctx)
        return Expr(self.ctx, tuple((m, c.scale(q)) for m, c in self.terms))

    def mul_coeff(self, c: Coefficient) -> "Expr":
        if c.is_zero:
            return Expr.zero(self.ctx)
        return Expr.make(self.ctx, {m: cc * c for m, cc in self.terms})

    def pow_rational(self, q) -> "Expr":
        q = Fraction(q)
        if q == 0:
            return Expr.const(self.ctx, 1)
        if q.denominator == 1 and q > 0:
            out = Expr.const(self.ctx, 1)
            base, k = self, q.numerator
            while k:
                if k & 1:
                    out = out * base
                base = base * base
                k >>= 1
            return out
        one = self.single_term()
        if one is None:
            if self.is_zero and q > 0:
                return Expr.zero(self.ctx)
            raise NotRepresentable(
                "only single-term expressions admit negative or fractional powers")
        m, c = one
        return Expr(self.ctx, ((m.pow(q), c.pow_rational(q)),))

    def __pow__(self, k: int) -> "Expr":
        return self.pow_rational(Fraction(k))

    def div(self, other: "Expr") -> "Expr":
        """Exact division; the divisor must be a single term (or a coefficient)."""
        self._check(other)
        if other.is_zero:
            raise DivisionByZero("division by zero")
        if self.is_zero:
            return self
        c = other.as_coefficient()
        if c is not None:
            if c.is_zero:
                raise DivisionByZero("division by zero")
            q = c.as_fraction()
            if q is not None:
                return self.scale(Fraction(1) / q)
            return self.mul_coeff(c.inverse())
        return self * other.pow_rational(Fraction(-1))

    # -- calculus ------------------------------------------------------------
    def diff(self, name: str) -> "Expr":
        i = self.ctx.var_index(name)
        data: dict[Monomial, Coefficient] = {}

        def put(m: Monomial, c: Coefficient) -> None:
            if not c.is_zero:
                data[m] = data[m] + c if m in data else c

        for m, c in self.terms:
            p = m.power_of(i)
            if p != 0:
                lowered = Monomial.make(
                    {j: (q - 1 if j == i else q) for j, q in m.powers}, dict(m.expf))
                put(lowered, c.scale(p))
            s = m.slope_of(i)
            if s is not None:
                put(m, c.mul_poly(s))
        return Expr.make(self.ctx, data)

    def gradient(self) -> tuple["Expr", ...]:
        return tuple(self.diff(v) for v in self.ctx.variables)

    # -- substitution ---------------------------------------------------------
    def _affine_image(self, e: "Expr") -> tuple[Coefficient, dict[int, Coefficient]]:
        """Decompose e as c0 + sum_j c_j * v_j; raise if e is not affine."""
        c0 = Coefficient.rational(self.ctx.nparams, 0)
        lin: dict[int, Coefficient] = {}
        for m, c in e.terms:
            if m.expf:
                raise NotRepresentable("substitution image carries an exponential factor")
            if m.is_one:
                c0 = c
            elif len(m.powers) == 1 and m.powers[0][1] == 1:
                lin[m.powers[0][0]] = c
            else:
                raise NotRepresentable("substitution image is not affine in the variables")
        return c0, lin

    def substitute_affine(self, mapping: dict[str, "Expr"]) -> "Expr":
        """Substitute each named variable by an affine expression, exactly.

        Closure rules: a variable carrying a fractional or negative power must
        map to a single term; a variable carrying an exponential factor must map
        to an offset-free affine image whose slopes keep the factor
        parameter-affine. Anything else raises NotRepresentable.
        """
        images: dict[int, Expr] = {}
        for name, e in mapping.items():
            self._check(e)
            images[self.ctx.var_index(name)] = e
        out = Expr.zero(self.ctx)
        nparams = self.ctx.nparams
        for m, c in self.terms:
            prod = Expr(self.ctx, ((Monomial.one(), c),))
            keep_powers: dict[int, Fraction] = {}
            keep_expf: dict[int, ParamPoly] = {}
            for i, p in m.powers:
                if i not in images:
                    keep_powers[i] = p
                    continue
                img = images[i]
                if p.denominator == 1 and p > 0:
                    self._affine_image(img)  # enforce the declared affine contract
                    prod = prod * img.pow_rational(p)
                else:
                    prod = prod * img.pow_rational(p)  # single-term rule enforced inside
            for i, s in m.expf:
                if i not in images:
                    keep_expf[i] = s
                    continue
                c0, lin = self._affine_image(images[i])
                if not c0.is_zero:
                    raise NotRepresentable(
                        "exponential factor over an image with a constant offset")
                new_expf: dict[int, ParamPoly] = {}
                for j, cj in lin.items():
                    if any(cj.den):
                        raise NotRepresentable("exponential slope with a denominator")
                    slope = s * cj.num
                    if slope.total_degree() > 1:
                        raise NotRepresentable("exponential slope left the affine class")
                    if not slope.is_zero:
                        new_expf[j] = new_expf[j] + slope if j in new_expf else slope
                factor = Expr(self.ctx, ((Monomial.make({}, new_expf),
                                          Coefficient.rational(nparams, 1)),))
                prod = prod * factor
            if keep_powers or keep_expf:
                kept = Expr(self.ctx, ((Monomial.make(keep_powers, keep_expf),
                                        Coefficient.rational(nparams, 1)),))
                prod = prod * kept
            out = out + prod
        return out

    # -- numerics -------------------------------------------------------------
    def eval_numeric(self, point: dict[str, float], params: dict[str, float] | None = None) -> float:
        params = params or {}
        values = tuple(float(point[v]) for v in self.ctx.variables)
        pvalues = tuple(float(params[p]) for p in self.ctx.parameters)
        total = 0.0
        for m, c in self.terms:
            total += c.eval(pvalues) * m.eval(values, pvalues, self.ctx.variables)
        return total

    # -- printing ---------------------------------------------------------------
    def _coeff_text(self, c: Coefficient) -> tuple[int, str | None]:
        """Return (sign, text) where text is None for a plain 1."""
        q = c.as_fraction()
        if q is not None:
            sign = -1 if q < 0 else 1
            q = abs(q)
            if q == 1:
                return sign, None
            if q.denominator == 1:
                return sign, str(q)
            return sign, f"{q.numerator}/{q.denominator}"
        names = self.ctx.parameters
        lcm = 1
        for _, coef in c.num.terms:
            lcm = lcm * coef.denominator // math.gcd(lcm, coef.denominator)
        num = c.num.scale(lcm)
        single = num.single_term()
        sign = 1
        if single is not None:
            exps, coef = single
            if coef < 0:
                sign, num = -1, -num
                exps, coef = num.single_term()
            num_text = num.text(names)
        else:
            num_text = "(" + num.text(names) + ")"
        if not any(c.den) and lcm == 1:
            return sign, num_text
        den_factors = []
        if lcm != 1:
            den_factors.append(str(lcm))
        for name, e in zip(names, c.den):
            if e == 1:
                den_factors.append(name)
            elif e:
                den_factors.append(f"{name}^{e}")
        den_text = "*".join(den_factors)
        if len(den_factors) > 1:
            den_text = "(" + den_text + ")"
        return sign, f"{num_text}/{den_text}"

    def _term_text(self, m: Monomial, c: Coefficient) -> tuple[int, str]:
        sign, ctext = self._coeff_text(c)
        pieces: list[str] = []
        if ctext is not None:
            pieces.append(ctext)
        names = self.ctx.variables
        for i, p in m.powers:
            if p == 1:
                pieces.append(names[i])
            elif p.denominator == 1:
                k = p.numerator
                pieces.append(f"{names[i]}^{k}" if k > 0 else f"{names[i]}^({k})")
            else:
                pieces.append(f"{names[i]}^({p.numerator}/{p.denominator})")
        for i, s in m.expf:
            st = s.text(self.ctx.parameters)
            if len(s.terms) > 1:
                st = "(" + st + ")"
                pieces.append(f"exp({st}*{names[i]})")
            elif st == "1":
                pieces.append(f"exp({names[i]})")
            elif st == "-1":
                pieces.append(f"exp(-{names[i]})")
            else:
                pieces.append(f"exp({st}*{names[i]})")
        if not pieces:
            pieces.append("1")
        return sign, "*".join(pieces)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = [self._term_text(m, c) for m, c in reversed(self.terms)]
        sign, body = parts[0]
        text = ("-" if sign < 0 else "") + body
        for sign, body in parts[1:]:
            text += (" - " if sign < 0 else " + ") + body
        return text

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Expr({self})"
