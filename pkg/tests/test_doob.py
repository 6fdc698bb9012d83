"""Potential recovery, taxonomy, antidifferentiation, density recipes."""

import pytest

from sdesym import catalog
from sdesym.doob import (classify, density_recipe, doob_condition_residual,
                         integrate_expr, recover_k)
from sdesym.errors import NotRepresentable
from sdesym.grammar import parse_expr
from sdesym.transform import InfSymmetry


def test_antiderivatives_inside_the_class(ou):
    ctx = ou.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    assert integrate_expr(pe("2*x"), "x") == pe("x^2")
    assert integrate_expr(pe("exp(2*a*z)"), "z") == pe("exp(2*a*z)/(2*a)")
    assert integrate_expr(pe("sqrt(x)"), "x") == pe("2/3*x^(3/2)")
    assert integrate_expr(pe("x*exp(-a*z)"), "z") == pe("-x*exp(-a*z)/a")
    assert integrate_expr(pe("0"), "x").is_zero


def test_logarithmic_antiderivatives_are_refused(ou):
    ctx = ou.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    with pytest.raises(NotRepresentable):
        integrate_expr(pe("x^(-1)"), "x")


def test_recover_k_on_gradient_shifts(bm1d, ou):
    v2 = bm1d.symmetry("V2")
    rec = recover_k(bm1d.sde, v2.symmetry.h)
    assert rec.status == "ok"
    # pinned against the recorded potential up to the declared free directions
    assert rec.k == parse_expr("-x^2", bm1d.sde.ctx)
    assert rec.free_vars == ("z",)

    recv1 = recover_k(ou.sde, ou.symmetry("V1").symmetry.h)
    assert recv1.status == "ok"


def test_recover_k_reports_non_gradient_shift(bm2d):
    vt = bm2d.symmetry("Vt_beta_z")
    rec = recover_k(bm2d.sde, vt.symmetry.h)
    assert rec.status == "nondoob"
    assert rec.witness == ("x", "y")
    assert rec.reason


def test_classification_of_each_kind(bm1d, ou, cir, bm2d):
    got = classify(bm1d.sde, bm1d.symmetry("V1").symmetry)
    assert got.kind == "Doob"
    assert got.symmetry_holds
    assert got.k == parse_expr("-x", bm1d.sde.ctx)

    almost = classify(ou.sde, ou.symmetry("Vt1").symmetry)
    assert almost.kind == "AlmostDoob"
    assert almost.k == parse_expr("x^2/2", ou.sde.ctx)
    assert almost.residual is not None and not almost.residual.is_zero
    assert almost.symmetry_holds

    non = classify(bm2d.sde, bm2d.symmetry("Vt_beta_z").symmetry)
    assert non.kind == "NonDoob"
    assert non.witness == ("x", "y")

    for entry in (bm1d, ou, cir, bm2d):
        for ns in entry.symmetries:
            got = classify(entry.sde, ns.symmetry)
            assert got.kind == ns.expected_class, (entry.name, ns.name)
            assert got.symmetry_holds


def test_classification_flags_non_symmetries(bm1d):
    v = bm1d.symmetry("V2").symmetry
    broken = InfSymmetry(ctx=v.ctx, y=v.y, c=v.c, tau=v.tau.scale(3), h=v.h)
    got = classify(bm1d.sde, broken)
    assert not got.symmetry_holds


def test_almost_doob_residual_value(cir):
    # the time-scaling entry of the square-root model leaves a generator
    # residual that no free direction can absorb
    got = classify(cir.sde, cir.symmetry("Vt2").symmetry)
    assert got.kind == "AlmostDoob"
    assert got.k == parse_expr("x/s", cir.sde.ctx)
    want = cir.sde.generator_apply(parse_expr("x/s", cir.sde.ctx))
    assert got.residual == want


def test_finite_pair_condition(bm1d, ou):
    sde = bm1d.sde
    ctx = sde.ctx
    nt = bm1d.transform("girsanov_unit")
    rep = doob_condition_residual(sde, nt.transform.h,
                                  parse_expr(nt.potential_text, ctx))
    assert rep.passed
    bad = doob_condition_residual(sde, nt.transform.h, parse_expr("x", ctx))
    assert not bad.passed

    octx = ou.sde.ctx
    pair = ou.transform("doob_pair")
    rep2 = doob_condition_residual(ou.sde, pair.transform.h,
                                   parse_expr(pair.potential_text, octx))
    assert rep2.passed


def test_density_recipe_attaches_verified_potentials(bm1d):
    sde = bm1d.sde
    ctx = sde.ctx
    nt = bm1d.transform("girsanov_unit")
    recipe = density_recipe(sde, nt.transform.h,
                            parse_expr(nt.potential_text, ctx))
    assert recipe.theta == nt.transform.h
    assert recipe.half_norm == parse_expr("1/2", ctx)
    assert recipe.doob_potential == parse_expr(nt.potential_text, ctx)
    assert recipe.notes == ()

    rejected = density_recipe(sde, nt.transform.h, parse_expr("x^2", ctx))
    assert rejected.doob_potential is None
    assert rejected.notes and "rejected" in rejected.notes[0]

    plain = density_recipe(sde, nt.transform.h)
    assert plain.doob_potential is None
    assert plain.notes == ()
