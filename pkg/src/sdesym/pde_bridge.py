"""Bridges between process symmetries and symmetries of the associated PDE.

For a time-extended model, a measure-classified symmetry (V, k) lifts to the
first-order operator

    Xi = sum_i Y_spatial^i d_i + Y_time d_z - k u d_u

on the parabolic equation of the model, and conversely an exact PDE symmetry
descends to a quadruple with

    tau = L(m),   H = sigma^T grad(k),
    C   = G^{-1} sigma^T grad(Y) sigma - G^{-1} sigma^T Y(sigma) - (tau/2) I,

where G = sigma^T sigma must be invertible inside the expression class. Both
directions verify the defining residuals exactly before returning.
"""

from __future__ import annotations

from .determining import (PdeSymmetry, doob_residual_blocks, pde_residual_blocks)
from .errors import (DoobResidualNonzero, NotInvertibleInClass, NotRepresentable,
                     PdeResidualNonzero)
from .expr import Expr
from .linalg import adjugate, determinant, mat_mul, mat_vec, transpose
from .sde import Sde, apply_vector_field
from .transform import InfSymmetry, jacobian


def _nonzero_labels(ctx, blocks) -> list[str]:
    bad = []
    for label, parts in blocks:
        total = Expr.zero(ctx)
        for p in parts:
            total = total + p
        if not total.is_zero:
            bad.append(label)
    return bad


def sde_to_pde(sde: Sde, v: InfSymmetry, k: Expr, check: bool = True) -> PdeSymmetry:
    """Lift an exact measure-classified symmetry to the PDE side."""
    sde.require_time_extended()
    sde.ctx.require_same(v.ctx)
    if check:
        verdict, _info = doob_residual_blocks(sde, v, k)
        bad = _nonzero_labels(sde.ctx, verdict)
        if bad:
            raise DoobResidualNonzero(
                "cannot lift: nonzero blocks " + ", ".join(bad))
    iz = sde.ctx.time_index()
    spatial = sde.spatial_indices
    return PdeSymmetry(ctx=sde.ctx, m_coef=v.y[iz],
                       phi=tuple(v.y[i] for i in spatial), k=k,
                       name=f"lift({v.name or 'V'})")


def pde_to_sde(sde: Sde, xi: PdeSymmetry, check: bool = True
               ) -> tuple[InfSymmetry, Expr]:
    """Descend an exact PDE symmetry to a quadruple and its potential."""
    sde.require_time_extended()
    sde.ctx.require_same(xi.ctx)
    ctx = sde.ctx
    if check:
        bad = _nonzero_labels(sde.ctx, pde_residual_blocks(sde, xi))
        if bad:
            raise PdeResidualNonzero(
                "cannot descend: nonzero blocks " + ", ".join(bad))
    iz = ctx.time_index()
    spatial = sde.spatial_indices
    y = [None] * sde.n
    y[iz] = xi.m_coef
    for s, i in enumerate(spatial):
        y[i] = xi.phi[s]
    y = tuple(y)
    tau = sde.generator_apply(xi.m_coef)
    grad_k = tuple(xi.k.diff(nm) for nm in ctx.variables)
    h = mat_vec(transpose(sde.diffusion), grad_k)

    g = mat_mul(transpose(sde.diffusion), sde.diffusion)
    det = determinant(g)
    try:
        inv_det = det.pow_rational(-1)
    except NotRepresentable as exc:
        raise NotInvertibleInClass(
            f"sigma^T sigma is not invertible in class: {exc}") from exc
    adj = adjugate(g)
    g_inv = tuple(tuple(inv_det * adj[i][j] for j in range(sde.m))
                  for i in range(sde.m))

    grad_y = jacobian(ctx, y)
    term1 = mat_mul(g_inv, mat_mul(transpose(sde.diffusion),
                                   mat_mul(grad_y, sde.diffusion)))
    y_sigma = tuple(tuple(apply_vector_field(y, sde.diffusion[i][a])
                          for a in range(sde.m)) for i in range(sde.n))
    term2 = mat_mul(g_inv, mat_mul(transpose(sde.diffusion), y_sigma))
    half_tau = Expr.const(ctx, "1/2") * tau
    c = tuple(tuple(term1[i][j] - term2[i][j]
                    - (half_tau if i == j else Expr.zero(ctx))
                    for j in range(sde.m)) for i in range(sde.m))
    v = InfSymmetry(ctx=ctx, y=y, c=c, tau=tau, h=tuple(h),
                    name=f"descend({xi.name or 'Xi'})")
    if check:
        verdict, _info = doob_residual_blocks(sde, v, xi.k)
        bad = _nonzero_labels(sde.ctx, verdict)
        if bad:
            raise DoobResidualNonzero(
                "descended quadruple fails: nonzero blocks " + ", ".join(bad))
    return v, xi.k


def round_trip_check(sde: Sde, v: InfSymmetry, k: Expr) -> bool:
    """V -> Xi -> V' must reproduce every component exactly."""
    xi = sde_to_pde(sde, v, k, check=True)
    v2, k2 = pde_to_sde(sde, xi, check=True)
    return v.same_as(v2) and k == k2
