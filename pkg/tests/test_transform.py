"""Finite transforms and infinitesimal quadruples: group laws, transport,
bracket algebra, and the flow/bracket consistency of push_forward.

The flow tests use one-parameter families whose slots are polynomial in the
flow parameter (translations and constant drift shifts), so the first-order
coefficient of the push-forward can be extracted exactly by Lagrange
interpolation at three rational parameter values and compared with the
bracket, with no numeric tolerance anywhere.
"""

from fractions import Fraction

import pytest

from sdesym.context import Context
from sdesym.determining import is_symmetry
from sdesym.errors import DeclarationMismatch, DomainError
from sdesym.expr import Expr
from sdesym.grammar import parse_expr
from sdesym.linalg import identity_matrix
from sdesym.transform import (FiniteTransform, InfSymmetry, bracket, compose,
                              et_apply, invert, push_forward)

F = Fraction


def _same_sde(a, b):
    return (a.drift == b.drift and a.diffusion == b.diffusion
            and a.ctx == b.ctx)


def _same_transform(a, b):
    return (a.phi == b.phi and a.phi_inv == b.phi_inv and a.b == b.b
            and a.eta == b.eta and a.h == b.h)


def _bm1d_transforms(bm1d):
    return [nt.transform for nt in bm1d.transforms]


def _rotation_3_4_5(bm2d):
    ctx = bm2d.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    return FiniteTransform(
        ctx=ctx,
        phi=(pe("3/5*x + 4/5*y"), pe("-4/5*x + 3/5*y"), pe("z")),
        phi_inv=(pe("3/5*x - 4/5*y"), pe("4/5*x + 3/5*y"), pe("z")),
        b=((pe("3/5"), pe("4/5")), (pe("-4/5"), pe("3/5"))),
        eta=pe("1"), h=(pe("0"), pe("0")), name="rot345")


# --------------------------------------------------------------------------
# group structure


def test_identity_is_neutral(bm1d):
    sde = bm1d.sde
    ident = FiniteTransform.identity(sde.ctx, sde.m)
    for t in _bm1d_transforms(bm1d):
        assert _same_transform(compose(t, ident), t)
        assert _same_transform(compose(ident, t), t)
    assert _same_sde(et_apply(ident, sde), sde)


def test_inverse_composes_to_identity(bm1d):
    sde = bm1d.sde
    ident = FiniteTransform.identity(sde.ctx, sde.m)
    for t in _bm1d_transforms(bm1d):
        assert _same_transform(compose(invert(t), t), ident)
        assert _same_transform(compose(t, invert(t)), ident)


def test_composition_associates(bm1d):
    ts = _bm1d_transforms(bm1d)
    for a in ts:
        for b in ts:
            for c in ts:
                assert _same_transform(compose(a, compose(b, c)),
                                       compose(compose(a, b), c))


def test_inverse_slot_formulas(bm1d):
    ctx = bm1d.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    shear_inv = invert(bm1d.transform("shear").transform)
    assert shear_inv.h == (pe("1"),)
    assert shear_inv.phi == (pe("x - z"), pe("z"))
    scale_inv = invert(bm1d.transform("time_scale_4").transform)
    assert scale_inv.eta == pe("1/4")
    assert scale_inv.phi == (pe("x/2"), pe("z/4"))


def test_composed_drift_shift_slot(bm1d):
    # applying the unit drift shift first and the shear second cancels the
    # shift: sqrt(eta1) * B1^T * (h2 o phi1) + h1 = 1*1*(-1) + 1 = 0
    ctx = bm1d.sde.ctx
    shear = bm1d.transform("shear").transform
    unit = bm1d.transform("girsanov_unit").transform
    assert compose(shear, unit).h == (Expr.zero(ctx),)


# --------------------------------------------------------------------------
# action on models


def test_transformed_models(bm1d):
    sde = bm1d.sde
    ctx = sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    # the attached drift shift cancels the drift the shear introduces,
    # so the sheared model is again the original one
    sheared = et_apply(bm1d.transform("shear").transform, sde)
    assert _same_sde(sheared, sde)
    # the quadratic space-time scaling maps the model to itself
    scaled = et_apply(bm1d.transform("time_scale_4").transform, sde)
    assert _same_sde(scaled, sde)
    shifted = et_apply(bm1d.transform("girsanov_unit").transform, sde)
    assert shifted.drift == (pe("1"), pe("1"))
    assert shifted.diffusion == sde.diffusion


def test_action_is_functorial(bm1d):
    sde = bm1d.sde
    ts = _bm1d_transforms(bm1d)
    for t1 in ts:
        for t2 in ts:
            once = et_apply(compose(t2, t1), sde)
            twice = et_apply(t2, et_apply(t1, sde))
            assert _same_sde(once, twice)


def test_action_preserves_nonexplosive_flag(bm1d):
    out = et_apply(bm1d.transform("shear").transform, bm1d.sde)
    assert out.nonexplosive


def test_rotation_invariance(bm2d):
    rot = _rotation_3_4_5(bm2d)
    assert _same_sde(et_apply(rot, bm2d.sde), bm2d.sde)


# --------------------------------------------------------------------------
# push-forward


def test_push_forward_identity_and_linearity(bm1d):
    sde = bm1d.sde
    ident = FiniteTransform.identity(sde.ctx, sde.m)
    v1 = bm1d.symmetry("V1").symmetry
    v2 = bm1d.symmetry("V2").symmetry
    assert push_forward(ident, v1).same_as(v1)
    shear = bm1d.transform("shear").transform
    lhs = push_forward(shear, v1 + v2.scale(F(2, 3)))
    rhs = push_forward(shear, v1) + push_forward(shear, v2).scale(F(2, 3))
    assert lhs.same_as(rhs)


def test_push_forward_is_functorial(bm1d):
    ts = _bm1d_transforms(bm1d)
    v = bm1d.symmetry("V2").symmetry
    for t1 in ts:
        for t2 in ts:
            once = push_forward(compose(t2, t1), v)
            twice = push_forward(t2, push_forward(t1, v))
            assert once.same_as(twice)


def test_push_forward_transports_symmetries(bm1d, bm2d):
    for entry, extra in ((bm1d, _bm1d_transforms(bm1d)),
                         (bm2d, [_rotation_3_4_5(bm2d)])):
        for t in extra:
            image_sde = et_apply(t, entry.sde)
            for ns in entry.symmetries:
                w = push_forward(t, ns.symmetry)
                assert is_symmetry(image_sde, w), (t.name, ns.name)


def test_push_forward_under_time_scaling(bm1d):
    t = bm1d.transform("time_scale_4").transform
    v1 = bm1d.symmetry("V1").symmetry
    assert push_forward(t, v1).same_as(v1.scale(F(1, 2)))


def test_push_forward_of_rotation_generator(bm2d):
    rot = _rotation_3_4_5(bm2d)
    v6 = bm2d.symmetry("V6").symmetry
    v7 = bm2d.symmetry("V7").symmetry
    want = v6.scale(F(3, 5)) - v7.scale(F(4, 5))
    assert push_forward(rot, v6).same_as(want)


# --------------------------------------------------------------------------
# bracket


def test_bracket_antisymmetry(bm1d, bm2d):
    pool = [ns.symmetry for ns in bm1d.symmetries]
    for i, v in enumerate(pool):
        for w in pool[i + 1:]:
            assert bracket(v, w).same_as(bracket(w, v).scale(-1))
    v = bm2d.symmetry("V5").symmetry
    w = bm2d.symmetry("Vt_beta_z").symmetry
    assert bracket(v, w).same_as(bracket(w, v).scale(-1))


def test_bracket_of_symmetries_is_symmetry(bm1d, bm2d):
    for entry in (bm1d, bm2d):
        pool = [ns.symmetry for ns in entry.symmetries]
        for i, v in enumerate(pool):
            for w in pool[i + 1:]:
                assert is_symmetry(entry.sde, bracket(v, w))


def test_named_bracket_relations(bm1d):
    v1 = bm1d.symmetry("V1").symmetry
    v2 = bm1d.symmetry("V2").symmetry
    v4 = bm1d.symmetry("V4").symmetry
    v5 = bm1d.symmetry("V5").symmetry
    assert bracket(v5, v1).same_as(v4)
    assert bracket(v4, v2).same_as(v1.scale(2))
    assert bracket(v4, v5).is_zero


# --------------------------------------------------------------------------
# flow consistency: d/de push_forward(T_e, W) at e = 0 equals -[V, W]
# where T_e is the flow of V


def _first_order(flow, w):
    """Exact first-order coefficient of e -> push_forward(flow(e), w).

    Requires the family to be polynomial in e of total degree <= 3, which
    holds for translation flows and constant drift shifts acting on
    polynomial quadruples.
    """
    nodes = (F(1, 2), F(1, 4), F(1, 8))
    weights = (F(1, 3), F(-2), F(8, 3))  # Lagrange basis at 0 for g(e)=A+Be+Ce^2
    acc = None
    for e, wgt in zip(nodes, weights):
        g = (push_forward(flow(e), w) - w).scale(1 / e).scale(wgt)
        acc = g if acc is None else acc + g
    return acc


def _translation_flow(ctx, direction, m=1):
    names = ctx.variables

    def flow(eps):
        return FiniteTransform(
            ctx=ctx,
            phi=tuple(Expr.variable(ctx, nm) + Expr.const(ctx, q * eps)
                      for nm, q in zip(names, direction)),
            phi_inv=tuple(Expr.variable(ctx, nm) - Expr.const(ctx, q * eps)
                          for nm, q in zip(names, direction)),
            b=identity_matrix(ctx, m),
            eta=Expr.const(ctx, 1),
            h=tuple(Expr.zero(ctx) for _ in range(m)))

    return flow


def _drift_shift_flow(ctx, m):
    def flow(eps):
        ident = tuple(Expr.variable(ctx, nm) for nm in ctx.variables)
        return FiniteTransform(
            ctx=ctx, phi=ident, phi_inv=ident, b=identity_matrix(ctx, m),
            eta=Expr.const(ctx, 1),
            h=tuple(Expr.const(ctx, eps) for _ in range(m)))

    return flow


def test_flow_derivative_matches_bracket_translations(bm1d):
    ctx = bm1d.sde.ctx
    flows = {
        "V4": _translation_flow(ctx, (F(1), F(0))),
        "V5": _translation_flow(ctx, (F(0), F(1))),
    }
    targets = ["V1", "V2", "V3", "Vt_alpha_z", "V4", "V5"]
    for gen_name, flow in flows.items():
        gen = bm1d.symmetry(gen_name).symmetry
        for tname in targets:
            w = bm1d.symmetry(tname).symmetry
            first = _first_order(flow, w)
            assert first.same_as(bracket(gen, w).scale(-1)), (gen_name, tname)


def test_flow_derivative_matches_bracket_drift_shift(bm1d):
    ctx = bm1d.sde.ctx
    zero = Expr.zero(ctx)
    gen = InfSymmetry(ctx=ctx, y=(zero, zero), c=((zero,),), tau=zero,
                      h=(Expr.const(ctx, 1),), name="G")
    flow = _drift_shift_flow(ctx, 1)
    for tname in ("V1", "V2", "V3", "Vt_alpha_z"):
        w = bm1d.symmetry(tname).symmetry
        first = _first_order(flow, w)
        assert first.same_as(bracket(gen, w).scale(-1)), tname


def test_flow_derivative_matches_bracket_planar(bm2d):
    ctx = bm2d.sde.ctx
    flows = {
        "V6": _translation_flow(ctx, (F(1), F(0), F(0)), m=2),
        "V7": _translation_flow(ctx, (F(0), F(1), F(0)), m=2),
        "V8": _translation_flow(ctx, (F(0), F(0), F(1)), m=2),
    }
    targets = ["V1", "V3", "V5", "Vt_alpha_z", "Vt_beta_z"]
    for gen_name, flow in flows.items():
        gen = bm2d.symmetry(gen_name).symmetry
        for tname in targets:
            w = bm2d.symmetry(tname).symmetry
            first = _first_order(flow, w)
            assert first.same_as(bracket(gen, w).scale(-1)), (gen_name, tname)


# --------------------------------------------------------------------------
# declaration validation


def test_rotation_validation(bm1d):
    ctx = bm1d.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    ident = (pe("x"), pe("z"))
    with pytest.raises(DomainError):
        FiniteTransform(ctx=ctx, phi=ident, phi_inv=ident,
                        b=((pe("2"),),), eta=pe("1"), h=(pe("0"),))
    with pytest.raises(DomainError):
        FiniteTransform(ctx=ctx, phi=ident, phi_inv=ident,
                        b=((pe("-1"),),), eta=pe("1"), h=(pe("0"),))


def test_inverse_pair_validation(bm1d):
    ctx = bm1d.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    with pytest.raises(DeclarationMismatch):
        FiniteTransform(ctx=ctx, phi=(pe("2*x"), pe("z")),
                        phi_inv=(pe("x"), pe("z")),
                        b=((pe("1"),),), eta=pe("1"), h=(pe("0"),))


def test_time_change_positivity(bm1d):
    ctx = bm1d.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    ident = (pe("x"), pe("z"))
    with pytest.raises(DomainError):
        FiniteTransform(ctx=ctx, phi=ident, phi_inv=ident,
                        b=((pe("1"),),), eta=pe("-1"), h=(pe("0"),))


def test_quadruple_antisymmetry_validation(bm2d):
    ctx = bm2d.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    zero = Expr.zero(ctx)
    good = ((zero, pe("z")), (pe("-z"), zero))
    InfSymmetry(ctx=ctx, y=(zero, zero, zero), c=good, tau=zero,
                h=(zero, zero))
    bad = ((zero, pe("z")), (pe("z"), zero))
    with pytest.raises(DomainError):
        InfSymmetry(ctx=ctx, y=(zero, zero, zero), c=bad, tau=zero,
                    h=(zero, zero))
