"""Text grammar: round trips, normal forms, and rejection diagnostics."""

from fractions import Fraction

import pytest
from hypothesis import given

from sdesym import catalog
from sdesym.errors import NotRepresentable, ParseError
from sdesym.expr import Expr
from sdesym.grammar import parse_expr, print_expr
from strategies import CTX, exprs


@given(exprs())
def test_print_parse_round_trip(e):
    assert parse_expr(print_expr(e), CTX) == e


def test_catalog_expressions_round_trip():
    for name in catalog.model_names():
        entry = catalog.get_model(name)
        ctx = entry.sde.ctx
        pool = list(entry.sde.drift)
        pool += [e for row in entry.sde.diffusion for e in row]
        for ns in entry.symmetries:
            pool += list(ns.symmetry.y) + [ns.symmetry.tau] + list(ns.symmetry.h)
        for nt in entry.transforms:
            t = nt.transform
            pool += list(t.phi) + list(t.phi_inv) + [t.eta] + list(t.h)
        for e in pool:
            assert parse_expr(print_expr(e), ctx) == e


def test_basic_forms():
    assert parse_expr("3/4", CTX) == Expr.const(CTX, Fraction(3, 4))
    x = Expr.variable(CTX, "x")
    assert parse_expr("x^2", CTX) == x * x
    assert parse_expr("x^(1/2)", CTX) == parse_expr("sqrt(x)", CTX)
    assert parse_expr("sqrt(x)*sqrt(x)", CTX) == x
    assert parse_expr("x^(-1)", CTX) == x.pow_rational(Fraction(-1))
    assert parse_expr("-x + x", CTX).is_zero
    assert parse_expr("(x + z)*(x - z)", CTX) == parse_expr("x^2 - z^2", CTX)
    assert parse_expr("x/2", CTX) == x.scale(Fraction(1, 2))


def test_exponentials():
    e = parse_expr("exp(-2*a*z)", CTX)
    a = Expr.parameter(CTX, "a")
    assert e.diff("z") == a.scale(-2) * e
    assert parse_expr("exp(a*z)*exp(-a*z)", CTX) == Expr.const(CTX, 1)


def test_parse_errors_are_positioned():
    with pytest.raises(ParseError):
        parse_expr("x +", CTX)
    with pytest.raises(ParseError, match="w"):
        parse_expr("w + 1", CTX)
    with pytest.raises(ParseError):
        parse_expr("(x + z", CTX)
    with pytest.raises(ParseError):
        parse_expr("x + z)", CTX)
    with pytest.raises(ParseError):
        parse_expr("x^x", CTX)


def test_class_boundary_is_refused():
    with pytest.raises(NotRepresentable):
        parse_expr("exp(x^2)", CTX)
    with pytest.raises(NotRepresentable):
        parse_expr("exp(a^2*z)", CTX)


def test_printing_is_deterministic():
    e = parse_expr("z + x^2 + 1/2 + exp(-a*z)", CTX)
    assert print_expr(e) == print_expr(parse_expr(print_expr(e), CTX))
    assert str(e) == print_expr(e)
