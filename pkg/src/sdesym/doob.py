"""Measure-change classification: potential recovery and the Doob taxonomy.

Given a symmetry candidate V = (Y, C, tau, H), the measure part H either comes
from a scalar potential k via H = sigma^T grad(k) or it does not. Recovery
proceeds in three exact steps: solve the pointwise linear system for the
candidate gradient g, check closedness (d_j g_i = d_i g_j; a failed pair is a
witness that no potential exists), and antidifferentiate term by term. The
class of expressions is not closed under antidifferentiation (logarithms are
the typical escape), so recovery can end Undecided; it never guesses.

Classification then asks whether some member of the potential family
k + g(free directions) also satisfies L(k) = 0:

* Doob        - yes, and the witness k is returned;
* AlmostDoob  - provably no member works (the obstruction involves a
                noise-driven variable, which the free function cannot reach);
* NonDoob     - no potential at all (closedness witness pair attached);
* Undecided   - recovery or the final integration left the expression class.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .determining import ResidualReport, _build_report, is_symmetry
from .errors import DivisionByZero, NonExplosiveRequired, NotRepresentable
from .expr import Coefficient, Expr, Monomial
from .linalg import mat_vec, transpose
from .parampoly import ParamPoly
from .sde import Sde
from .transform import InfSymmetry


class _OutOfClass(NotRepresentable):
    """An antiderivative left the expression class."""


def _coeff_div_poly(c: Coefficient, s: ParamPoly) -> Coefficient:
    one = s.single_term()
    if one is None:
        raise _OutOfClass("division by a multi-term exponential slope")
    exps, cs = one
    inv = Coefficient.make(ParamPoly.const(s.nparams, Fraction(1) / cs), exps)
    return c * inv


def _integrate_term(ctx, mono: Monomial, coeff: Coefficient, vi: int) -> Expr:
    p = mono.power_of(vi)
    s = mono.slope_of(vi)
    rest_powers = {i: q for i, q in mono.powers if i != vi}
    rest_expf = {i: sl for i, sl in mono.expf if i != vi}
    if s is None:
        if p == -1:
            raise _OutOfClass("logarithmic antiderivative")
        powers = dict(rest_powers)
        powers[vi] = p + 1
        out = Monomial.make(powers, rest_expf)
        return Expr.make(ctx, {out: coeff.scale(Fraction(1) / (p + 1))})
    if p == 0:
        expf = dict(rest_expf)
        expf[vi] = s
        out = Monomial.make(rest_powers, expf)
        return Expr.make(ctx, {out: _coeff_div_poly(coeff, s)})
    if p.denominator != 1 or p < 0:
        raise _OutOfClass(
            "antiderivative of a fractional or negative power times an exponential")
    head_powers = dict(rest_powers)
    head_powers[vi] = p
    expf = dict(rest_expf)
    expf[vi] = s
    cdiv = _coeff_div_poly(coeff, s)
    head = Expr.make(ctx, {Monomial.make(head_powers, expf): cdiv})
    tail_powers = dict(rest_powers)
    if p != 1:
        tail_powers[vi] = p - 1
    tail_mono = Monomial.make(tail_powers, expf)
    return head + _integrate_term(ctx, tail_mono, cdiv.scale(-p), vi)


def integrate_expr(e: Expr, var: str) -> Expr:
    """Exact antiderivative with respect to `var`; raises internally when the
    result would leave the class (callers translate that to Undecided)."""
    vi = e.ctx.var_index(var)
    out = Expr.zero(e.ctx)
    for mono, coeff in e.terms:
        out = out + _integrate_term(e.ctx, mono, coeff, vi)
    return out


@dataclass(frozen=True)
class KRecovery:
    status: str  # "ok" | "nondoob" | "undecided"
    k: Expr | None = None
    free_vars: tuple[str, ...] = ()
    witness: tuple[str, str] | None = None
    reason: str | None = None


def recover_k(sde: Sde, h: tuple[Expr, ...]) -> KRecovery:
    """Solve sigma^T grad(k) = H exactly, or report why that is impossible."""
    ctx, names = sde.ctx, sde.ctx.variables
    n, m = sde.n, sde.m
    for e in h:
        e.ctx.require_same(ctx)
    solved: dict[int, Expr] = {}
    pending = list(range(m))
    progress = True
    while pending and progress:
        progress = False
        still = []
        for a in pending:
            open_vars = [i for i in range(n)
                         if not sde.diffusion[i][a].is_zero and i not in solved]
            if not open_vars:
                acc = Expr.zero(ctx)
                for j, g in solved.items():
                    if not sde.diffusion[j][a].is_zero:
                        acc = acc + sde.diffusion[j][a] * g
                if acc != h[a]:
                    return KRecovery(
                        status="undecided",
                        reason=f"gradient system over-determines row {a + 1} "
                               "inconsistently")
                progress = True
                continue
            if len(open_vars) == 1:
                i = open_vars[0]
                rhs = h[a]
                for j, g in solved.items():
                    if not sde.diffusion[j][a].is_zero:
                        rhs = rhs - sde.diffusion[j][a] * g
                try:
                    solved[i] = rhs.div(sde.diffusion[i][a])
                except (NotRepresentable, DivisionByZero) as exc:
                    return KRecovery(status="undecided",
                                     reason=f"gradient entry not representable: {exc}")
                progress = True
                continue
            still.append(a)
        pending = still
    if pending:
        return KRecovery(status="undecided",
                         reason="coupled gradient rows resist pointwise solving")

    order = sorted(solved)
    for ii in range(len(order)):
        for jj in range(ii + 1, len(order)):
            i, j = order[ii], order[jj]
            if solved[i].diff(names[j]) != solved[j].diff(names[i]):
                return KRecovery(status="nondoob", witness=(names[i], names[j]),
                                 reason="candidate gradient is not closed")

    k_acc = Expr.zero(ctx)
    try:
        for i in order:
            target = solved[i] - k_acc.diff(names[i])
            k_acc = k_acc + integrate_expr(target, names[i])
    except _OutOfClass as exc:
        return KRecovery(status="undecided", reason=str(exc))
    for i in order:
        if k_acc.diff(names[i]) != solved[i]:  # pragma: no cover - safety net
            return KRecovery(status="undecided",
                             reason="antiderivative failed the exactness re-check")
    rest, _const = k_acc.constant_split()
    free = tuple(names[i] for i in range(n) if i not in solved)
    return KRecovery(status="ok", k=rest, free_vars=free)


@dataclass(frozen=True)
class SymmetryClass:
    kind: str  # "Doob" | "AlmostDoob" | "NonDoob" | "Undecided"
    k: Expr | None = None
    free_vars: tuple[str, ...] = ()
    witness: tuple[str, str] | None = None
    residual: Expr | None = None  # L(k) of the representative, for AlmostDoob
    reason: str | None = None
    symmetry_holds: bool = True


def classify(sde: Sde, v: InfSymmetry) -> SymmetryClass:
    """Place a symmetry candidate in the Doob taxonomy."""
    holds = is_symmetry(sde, v)
    rec = recover_k(sde, v.h)
    if rec.status == "nondoob":
        return SymmetryClass(kind="NonDoob", witness=rec.witness,
                             reason=rec.reason, symmetry_holds=holds)
    if rec.status == "undecided":
        return SymmetryClass(kind="Undecided", reason=rec.reason,
                             symmetry_holds=holds)
    k0 = rec.k
    r0 = sde.generator_apply(k0)
    if r0.is_zero:
        return SymmetryClass(kind="Doob", k=k0, free_vars=rec.free_vars,
                             symmetry_holds=holds)
    if not rec.free_vars:
        return SymmetryClass(kind="AlmostDoob", k=k0, residual=r0,
                             reason="no free direction can absorb L(k)",
                             symmetry_holds=holds)
    if len(rec.free_vars) == 1:
        vname = rec.free_vars[0]
        vi = sde.ctx.var_index(vname)
        drift_const = sde.drift[vi].as_fraction()
        if drift_const not in (None, Fraction(0)):
            only_free = _depends_only_on(r0, {vi})
            if not only_free:
                return SymmetryClass(
                    kind="AlmostDoob", k=k0, free_vars=rec.free_vars, residual=r0,
                    reason=f"L(k) involves noise-driven variables, but the free "
                           f"function may only depend on {vname}",
                    symmetry_holds=holds)
            try:
                g = integrate_expr(r0.scale(-Fraction(1) / drift_const), vname)
            except _OutOfClass as exc:
                return SymmetryClass(kind="Undecided", k=k0,
                                     free_vars=rec.free_vars, residual=r0,
                                     reason=str(exc), symmetry_holds=holds)
            k_full = k0 + g
            if sde.generator_apply(k_full).is_zero:
                rest, _c = k_full.constant_split()
                return SymmetryClass(kind="Doob", k=rest,
                                     free_vars=rec.free_vars,
                                     symmetry_holds=holds)
            return SymmetryClass(
                kind="Undecided", k=k0, free_vars=rec.free_vars, residual=r0,
                reason="free-direction completion did not close L(k) = 0",
                symmetry_holds=holds)
    return SymmetryClass(
        kind="Undecided", k=k0, free_vars=rec.free_vars, residual=r0,
        reason="cannot decide whether a free function absorbs L(k)",
        symmetry_holds=holds)


def _depends_only_on(e: Expr, allowed: set[int]) -> bool:
    for mono, _c in e.terms:
        for i, _p in mono.powers:
            if i not in allowed:
                return False
        for i, _s in mono.expf:
            if i not in allowed:
                return False
    return True


# ---------------------------------------------------------------------------
# finite measure changes


def doob_condition_residual(sde: Sde, h: tuple[Expr, ...], potential: Expr,
                            n_probes: int = 25, seed: int = 101,
                            tol: float = 1e-9) -> ResidualReport:
    """Exact check that (h, potential) is a gradient pair:

        finite.h[a]      = h_a - (sigma^T grad(potential))_a
        finite.potential = L(potential) + (1/2) sum_a h_a^2
    """
    ctx = sde.ctx
    potential.ctx.require_same(ctx)
    grad = tuple(potential.diff(nm) for nm in ctx.variables)
    sig_t_grad = mat_vec(transpose(sde.diffusion), grad)
    blocks = []
    for a in range(sde.m):
        blocks.append((f"finite.h[{a + 1}]", [h[a], -sig_t_grad[a]]))
    from .determining import generator_parts
    half = Expr.const(ctx, "1/2")
    parts = generator_parts(sde, potential)
    parts += [half * (h[a] * h[a]) for a in range(sde.m) if not h[a].is_zero]
    blocks.append(("finite.potential", parts))
    return _build_report("finite", blocks, [], ctx, [], n_probes, seed, tol)


@dataclass(frozen=True)
class DensityRecipe:
    """Ingredients of the Girsanov density for a drift shift h:

        dQ/dP = exp( sum_a int theta_a dW_a - int half_norm dt )

    When a potential with the exact gradient-pair property is attached, the
    same density equals exp(potential(X_T) - potential(X_0)) pathwise.
    """
    theta: tuple[Expr, ...]
    half_norm: Expr
    doob_potential: Expr | None
    notes: tuple[str, ...] = ()


def density_recipe(sde: Sde, h: tuple[Expr, ...],
                   potential: Expr | None = None) -> DensityRecipe:
    if not sde.nonexplosive:
        raise NonExplosiveRequired(
            "density recipes need a model declared non-explosive")
    ctx = sde.ctx
    for e in h:
        e.ctx.require_same(ctx)
    half = Expr.const(ctx, "1/2")
    half_norm = Expr.zero(ctx)
    for e in h:
        if not e.is_zero:
            half_norm = half_norm + half * (e * e)
    notes: list[str] = []
    attached = None
    if potential is not None:
        rep = doob_condition_residual(sde, h, potential)
        if rep.passed:
            attached = potential
        else:
            bad = [e.label for e in rep.entries if not e.is_zero]
            notes.append("declared potential rejected; nonzero blocks: "
                         + ", ".join(bad))
    return DensityRecipe(theta=tuple(h), half_norm=half_norm,
                         doob_potential=attached, notes=tuple(notes))
