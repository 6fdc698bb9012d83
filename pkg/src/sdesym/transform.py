"""Extended stochastic transformations, finite and infinitesimal.

A finite transformation is a quadruple T = (Phi, B, eta, h): a change of state
coordinates, a state-dependent rotation of the noise, a positive time change,
and a drift shift of the Brownian motion (a measure change). Its action on a
model is

    drift'     = (1/eta) * (L(Phi) + grad(Phi) sigma h)  composed with Phi^{-1}
    diffusion' = eta^{-1/2} * grad(Phi) sigma B^{-1}     composed with Phi^{-1}

with B^{-1} = B^T. The inverse map Phi^{-1} is always declared, never derived:
construction verifies Phi^{-1} o Phi = id and Phi o Phi^{-1} = id exactly.

An infinitesimal symmetry is a quadruple V = (Y, C, tau, H) with C
antisymmetric (the derivative of a rotation) and tau a scalar (the derivative
of the time change). Composition, inversion, push-forward and the bracket
below realize the group structure of these transformations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .context import Context
from .errors import (DeclarationMismatch, DomainError, NotInvertibleInClass,
                     NotRepresentable)
from .expr import Expr
from .linalg import (identity_matrix, mat_add, mat_mul, mat_sub, mat_vec,
                     transpose, zero_matrix)
from .sde import Sde, apply_vector_field


def _compose(e: Expr, phi: tuple[Expr, ...]) -> Expr:
    """e o phi, i.e. substitute variable i by phi[i]."""
    mapping = {name: phi[i] for i, name in enumerate(e.ctx.variables)}
    return e.substitute_affine(mapping)


def _compose_vec(v, phi):
    return tuple(_compose(e, phi) for e in v)


def _compose_mat(a, phi):
    return tuple(tuple(_compose(e, phi) for e in row) for row in a)


def _is_identity_map(ctx: Context, phi: tuple[Expr, ...]) -> bool:
    return all(phi[i] == Expr.variable(ctx, name)
               for i, name in enumerate(ctx.variables))


def jacobian(ctx: Context, v: tuple[Expr, ...]) -> tuple[tuple[Expr, ...], ...]:
    return tuple(tuple(v[i].diff(name) for name in ctx.variables)
                 for i in range(len(v)))


@dataclass(frozen=True)
class FiniteTransform:
    ctx: Context
    phi: tuple[Expr, ...]
    phi_inv: tuple[Expr, ...]
    b: tuple[tuple[Expr, ...], ...]
    eta: Expr
    h: tuple[Expr, ...]
    name: str = ""

    def __post_init__(self):
        n, m = self.ctx.nvars, len(self.h)
        if len(self.phi) != n or len(self.phi_inv) != n:
            raise DeclarationMismatch("state map must have one component per variable")
        if len(self.b) != m or any(len(row) != m for row in self.b):
            raise DeclarationMismatch("rotation must be square with side len(h)")
        for e in (*self.phi, *self.phi_inv, self.eta, *self.h):
            e.ctx.require_same(self.ctx)
        for row in self.b:
            for e in row:
                e.ctx.require_same(self.ctx)
        self._check_rotation()
        self._check_inverse_pair()
        self._check_eta_positive()

    @property
    def m(self) -> int:
        return len(self.h)

    def _check_rotation(self):
        prod = mat_mul(transpose(self.b), self.b)
        for i in range(self.m):
            for j in range(self.m):
                want = Expr.const(self.ctx, 1 if i == j else 0)
                if prod[i][j] != want:
                    raise DomainError("rotation fails B^T B = I exactly")
        det = _det(self.b)
        if det != Expr.const(self.ctx, 1):
            raise DomainError("rotation must have determinant +1")

    def _check_inverse_pair(self):
        ident = tuple(Expr.variable(self.ctx, nm) for nm in self.ctx.variables)
        try:
            back = _compose_vec(self.phi_inv, self.phi)
            fwd = _compose_vec(self.phi, self.phi_inv)
        except NotRepresentable as exc:
            raise NotInvertibleInClass(
                f"cannot verify declared inverse: {exc}") from exc
        if back != ident or fwd != ident:
            raise DeclarationMismatch(
                "declared inverse fails phi_inv o phi = id (exact check)")

    def _check_eta_positive(self, seed: int = 11, n_points: int = 16):
        rng = np.random.default_rng(seed)
        for _ in range(n_points):
            pt = self.ctx.sample_point(rng)
            pv = self.ctx.sample_params(rng)
            val = self.eta.eval_numeric(pt, pv)
            if not val > 0:
                raise DomainError(
                    f"time change must be positive; probe gave eta={val!r}")

    @staticmethod
    def identity(ctx: Context, m: int, name: str = "identity") -> "FiniteTransform":
        ident = tuple(Expr.variable(ctx, nm) for nm in ctx.variables)
        return FiniteTransform(ctx=ctx, phi=ident, phi_inv=ident,
                               b=identity_matrix(ctx, m),
                               eta=Expr.const(ctx, 1),
                               h=tuple(Expr.zero(ctx) for _ in range(m)),
                               name=name)


def _det(b) -> Expr:
    from .linalg import determinant
    return determinant(b)


def et_apply(t: FiniteTransform, sde: Sde) -> Sde:
    """Transformed model: the drift/diffusion pair of the transformed process."""
    t.ctx.require_same(sde.ctx)
    if t.m != sde.m:
        raise DeclarationMismatch("transform noise dimension differs from model")
    grad_phi = jacobian(sde.ctx, t.phi)
    gs = mat_mul(grad_phi, sde.diffusion)
    l_phi = tuple(sde.generator_apply(c) for c in t.phi)
    gsh = mat_vec(gs, t.h)
    try:
        inv_eta = t.eta.pow_rational(-1)
        inv_sqrt_eta = t.eta.pow_rational("-1/2")
    except NotRepresentable as exc:
        raise NotInvertibleInClass(f"time change not invertible in class: {exc}") from exc
    new_drift = tuple(_compose(inv_eta * (l_phi[i] + gsh[i]), t.phi_inv)
                      for i in range(sde.n))
    gsb = mat_mul(gs, transpose(t.b))
    new_diff = tuple(tuple(_compose(inv_sqrt_eta * gsb[i][a], t.phi_inv)
                           for a in range(sde.m)) for i in range(sde.n))
    return Sde(ctx=sde.ctx, drift=new_drift, diffusion=new_diff,
               nonexplosive=sde.nonexplosive,
               name=f"{t.name or 'T'}({sde.name or 'model'})")


def compose(t2: FiniteTransform, t1: FiniteTransform) -> FiniteTransform:
    """T2 after T1.

    The measure component of the outer transform is pulled back through the
    inner one with a factor sqrt(eta1): the inner time change runs the outer
    drift tilt against a clock eta1 times faster, so applying the composed
    transform to an SDE agrees with applying the two transforms in sequence.
    """
    t2.ctx.require_same(t1.ctx)
    if t2.m != t1.m:
        raise DeclarationMismatch("transforms have different noise dimensions")
    m = t1.m
    phi = _compose_vec(t2.phi, t1.phi)
    phi_inv = _compose_vec(t1.phi_inv, t2.phi_inv)
    b = mat_mul(_compose_mat(t2.b, t1.phi), t1.b)
    eta = _compose(t2.eta, t1.phi) * t1.eta
    try:
        sqrt_eta1 = t1.eta.pow_rational("1/2")
    except NotRepresentable as exc:
        raise NotInvertibleInClass(f"time change not invertible in class: {exc}") from exc
    h2c = _compose_vec(t2.h, t1.phi)
    binv_h2 = mat_vec(transpose(t1.b), h2c)
    h = tuple(sqrt_eta1 * binv_h2[a] + t1.h[a] for a in range(m))
    return FiniteTransform(ctx=t1.ctx, phi=phi, phi_inv=phi_inv, b=b, eta=eta,
                           h=h, name=f"{t2.name or 'T2'}*{t1.name or 'T1'}")


def invert(t: FiniteTransform) -> FiniteTransform:
    b = transpose(_compose_mat(t.b, t.phi_inv))
    try:
        eta = _compose(t.eta, t.phi_inv).pow_rational(-1)
        inv_sqrt_eta = t.eta.pow_rational("-1/2")
    except NotRepresentable as exc:
        raise NotInvertibleInClass(f"time change not invertible in class: {exc}") from exc
    bh = mat_vec(t.b, t.h)
    h = tuple(_compose(-(inv_sqrt_eta * bh[a]), t.phi_inv) for a in range(t.m))
    return FiniteTransform(ctx=t.ctx, phi=t.phi_inv, phi_inv=t.phi, b=b,
                           eta=eta, h=h, name=f"{t.name or 'T'}^-1")


@dataclass(frozen=True)
class InfSymmetry:
    """Infinitesimal quadruple V = (Y, C, tau, H)."""
    ctx: Context
    y: tuple[Expr, ...]
    c: tuple[tuple[Expr, ...], ...]
    tau: Expr
    h: tuple[Expr, ...]
    name: str = ""

    def __post_init__(self):
        n, m = self.ctx.nvars, len(self.h)
        if len(self.y) != n:
            raise DeclarationMismatch("Y must have one component per variable")
        if len(self.c) != m or any(len(row) != m for row in self.c):
            raise DeclarationMismatch("C must be square with side len(H)")
        for e in (*self.y, self.tau, *self.h):
            e.ctx.require_same(self.ctx)
        for i in range(m):
            for j in range(m):
                self.c[i][j].ctx.require_same(self.ctx)
                if (self.c[i][j] + self.c[j][i]) != Expr.zero(self.ctx):
                    raise DomainError("C must be antisymmetric (exact check)")

    @property
    def m(self) -> int:
        return len(self.h)

    @staticmethod
    def zero(ctx: Context, m: int, name: str = "0") -> "InfSymmetry":
        z = Expr.zero(ctx)
        return InfSymmetry(ctx=ctx, y=tuple(z for _ in range(ctx.nvars)),
                           c=zero_matrix(ctx, m, m), tau=z,
                           h=tuple(z for _ in range(m)), name=name)

    def scale(self, factor) -> "InfSymmetry":
        f = factor if isinstance(factor, Expr) else Expr.const(self.ctx, factor)
        return InfSymmetry(
            ctx=self.ctx, y=tuple(f * e for e in self.y),
            c=tuple(tuple(f * e for e in row) for row in self.c),
            tau=f * self.tau, h=tuple(f * e for e in self.h),
            name=self.name)

    def __add__(self, other: "InfSymmetry") -> "InfSymmetry":
        self.ctx.require_same(other.ctx)
        return InfSymmetry(
            ctx=self.ctx, y=tuple(a + b for a, b in zip(self.y, other.y)),
            c=mat_add(self.c, other.c), tau=self.tau + other.tau,
            h=tuple(a + b for a, b in zip(self.h, other.h)),
            name=f"{self.name}+{other.name}")

    def __sub__(self, other: "InfSymmetry") -> "InfSymmetry":
        return self + other.scale(-1)

    @property
    def is_zero(self) -> bool:
        return (all(e.is_zero for e in self.y) and self.tau.is_zero
                and all(e.is_zero for e in self.h)
                and all(e.is_zero for row in self.c for e in row))

    def same_as(self, other: "InfSymmetry") -> bool:
        """Componentwise exact equality, ignoring names."""
        return (self.ctx == other.ctx and self.m == other.m
                and all(a == b for a, b in zip(self.y, other.y))
                and self.tau == other.tau
                and all(a == b for a, b in zip(self.h, other.h))
                and all(a == b for ra, rb in zip(self.c, other.c)
                        for a, b in zip(ra, rb)))


def push_forward(t: FiniteTransform, v: InfSymmetry) -> InfSymmetry:
    """Conjugate the infinitesimal quadruple by the finite transformation."""
    t.ctx.require_same(v.ctx)
    if t.m != v.m:
        raise DeclarationMismatch("transform and symmetry noise dimensions differ")
    ctx, m = v.ctx, v.m

    def vf(e: Expr) -> Expr:
        return apply_vector_field(v.y, e)

    grad_phi = jacobian(ctx, t.phi)
    y_new = _compose_vec(mat_vec(grad_phi, v.y), t.phi_inv)

    yb = tuple(tuple(vf(t.b[i][j]) for j in range(m)) for i in range(m))
    c_new = _compose_mat(
        mat_add(mat_mul(mat_mul(t.b, v.c), transpose(t.b)),
                mat_mul(yb, transpose(t.b))),
        t.phi_inv)

    try:
        y_eta_over_eta = vf(t.eta).div(t.eta)
        inv_sqrt_eta = t.eta.pow_rational("-1/2")
    except NotRepresentable as exc:
        raise NotInvertibleInClass(f"time change not invertible in class: {exc}") from exc
    tau_new = _compose(v.tau + y_eta_over_eta, t.phi_inv)

    half_tau = Expr.const(ctx, "1/2") * v.tau
    half_tau_minus_c = tuple(tuple((half_tau if i == j else Expr.zero(ctx)) - v.c[i][j]
                                   for j in range(m)) for i in range(m))
    term1 = mat_vec(mat_mul(t.b, half_tau_minus_c), t.h)
    yh = tuple(vf(t.h[a]) for a in range(m))
    term2 = mat_vec(t.b, v.h)
    term3 = mat_vec(t.b, yh)
    h_new = tuple(_compose(inv_sqrt_eta * (term1[a] + term2[a] + term3[a]), t.phi_inv)
                  for a in range(m))
    return InfSymmetry(ctx=ctx, y=y_new, c=c_new, tau=tau_new, h=h_new,
                       name=f"{t.name or 'T'}*({v.name or 'V'})")


def bracket(v1: InfSymmetry, v2: InfSymmetry) -> InfSymmetry:
    """Lie bracket of infinitesimal quadruples.

    The Y part is the usual vector-field bracket; the C part subtracts the
    matrix commutator so antisymmetry is preserved; the H part couples the
    time-change and rotation parts to the measure part.
    """
    v1.ctx.require_same(v2.ctx)
    if v1.m != v2.m:
        raise DeclarationMismatch("symmetries have different noise dimensions")
    ctx, m = v1.ctx, v1.m

    def vf1(e: Expr) -> Expr:
        return apply_vector_field(v1.y, e)

    def vf2(e: Expr) -> Expr:
        return apply_vector_field(v2.y, e)

    y = tuple(vf1(v2.y[i]) - vf2(v1.y[i]) for i in range(ctx.nvars))
    c = mat_sub(
        mat_sub(tuple(tuple(vf1(v2.c[i][j]) for j in range(m)) for i in range(m)),
                tuple(tuple(vf2(v1.c[i][j]) for j in range(m)) for i in range(m))),
        mat_sub(mat_mul(v1.c, v2.c), mat_mul(v2.c, v1.c)))
    tau = vf1(v2.tau) - vf2(v1.tau)

    half = Expr.const(ctx, "1/2")

    def mix(tau_a: Expr, c_a, h_b):
        scaled = tuple((half * tau_a) * h_b[alpha] for alpha in range(m))
        rotated = mat_vec(c_a, h_b)
        return tuple(scaled[alpha] - rotated[alpha] for alpha in range(m))

    mix12 = mix(v1.tau, v1.c, v2.h)
    mix21 = mix(v2.tau, v2.c, v1.h)
    h = tuple(vf1(v2.h[a]) - vf2(v1.h[a]) + mix12[a] - mix21[a] for a in range(m))
    return InfSymmetry(ctx=ctx, y=y, c=c, tau=tau, h=h,
                       name=f"[{v1.name or 'V1'},{v2.name or 'V2'}]")
