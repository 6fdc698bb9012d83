"""Determining-equation residuals for symmetry candidates.

Three labeled systems, each reported entry by entry:

* the general system on quadruples V = (Y, C, tau, H);
* the measure-restricted system, which additionally carries a scalar potential
  k with H = sigma^T grad(k) and L(k) = 0 (its drift block keeps the tau*mu
  term; the variant without it is reported alongside as informational);
* the PDE-side system on operators Xi = phi^i d_i + m d_z - k u d_u acting on
  the associated parabolic equation.

Every entry records the exact expression plus a numeric double-check: the
residual's summands are evaluated separately at random in-domain probe points
and added in floating point, so a wrong symbolic cancellation cannot hide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .context import Context
from .errors import DeclarationMismatch, DivisionByZero, DomainError
from .expr import Expr
from .linalg import mat_vec, transpose
from .sde import Sde, apply_vector_field
from .transform import InfSymmetry

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class PdeSymmetry:
    """Operator Xi = sum_i phi^i d_i + m d_z - k u d_u on the PDE side.

    `phi` lists spatial coefficients in declaration order (time excluded).
    """
    ctx: Context
    m_coef: Expr
    phi: tuple[Expr, ...]
    k: Expr
    name: str = ""

    def __post_init__(self):
        if self.ctx.time_var is None:
            raise DeclarationMismatch("PDE-side symmetry needs a declared time variable")
        if len(self.phi) != self.ctx.nvars - 1:
            raise DeclarationMismatch("phi must have one component per spatial variable")
        for e in (self.m_coef, *self.phi, self.k):
            e.ctx.require_same(self.ctx)

    def apply(self, f: Expr) -> Expr:
        """First-order action on state functions (the u-part does not act)."""
        ctx = self.ctx
        iz = ctx.time_index()
        spatial = [i for i in range(ctx.nvars) if i != iz]
        out = Expr.zero(ctx)
        for s, i in enumerate(spatial):
            if not self.phi[s].is_zero:
                out = out + self.phi[s] * f.diff(ctx.variables[i])
        if not self.m_coef.is_zero:
            out = out + self.m_coef * f.diff(ctx.variables[iz])
        return out

    def scale(self, factor) -> "PdeSymmetry":
        f = factor if isinstance(factor, Expr) else Expr.const(self.ctx, factor)
        return PdeSymmetry(ctx=self.ctx, m_coef=f * self.m_coef,
                           phi=tuple(f * e for e in self.phi), k=f * self.k,
                           name=self.name)


@dataclass(frozen=True)
class ResidualEntry:
    label: str
    expr: Expr
    is_zero: bool
    worst_abs: float
    informational: bool = False


@dataclass(frozen=True)
class ResidualReport:
    kind: str
    entries: tuple[ResidualEntry, ...]
    notes: tuple[str, ...]
    n_probes: int
    seed: int
    tol: float

    @property
    def passed(self) -> bool:
        return all(e.is_zero and (np.isnan(e.worst_abs) or e.worst_abs <= self.tol)
                   for e in self.entries if not e.informational)

    @property
    def worst_abs(self) -> float:
        vals = [e.worst_abs for e in self.entries
                if not e.informational and not np.isnan(e.worst_abs)]
        return max(vals) if vals else 0.0

    def entry(self, label: str) -> ResidualEntry:
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)


def generator_parts(sde: Sde, f: Expr) -> list[Expr]:
    """The summands of L(f), kept separate for the numeric double-check."""
    a = sde.diffusion_square()
    names = sde.ctx.variables
    grads = [f.diff(nm) for nm in names]
    parts = []
    for i in range(sde.n):
        if not sde.drift[i].is_zero and not grads[i].is_zero:
            parts.append(sde.drift[i] * grads[i])
        for j in range(sde.n):
            if a[i][j].is_zero:
                continue
            second = grads[i].diff(names[j])
            if not second.is_zero:
                parts.append(a[i][j] * second)
    return parts


def _neg_all(parts: list[Expr]) -> list[Expr]:
    return [-p for p in parts]


def sde_residual_blocks(sde: Sde, v: InfSymmetry) -> list[tuple[str, list[Expr]]]:
    sde.ctx.require_same(v.ctx)
    if v.m != sde.m:
        raise DeclarationMismatch("symmetry and model noise dimensions differ")
    ctx, names = sde.ctx, sde.ctx.variables
    half = Expr.const(ctx, "1/2")

    def vf(e: Expr) -> Expr:
        return apply_vector_field(v.y, e)

    sigma_h = mat_vec(sde.diffusion, v.h)
    from .linalg import mat_mul
    sigma_c = mat_mul(sde.diffusion, v.c)
    blocks: list[tuple[str, list[Expr]]] = []
    for i in range(sde.n):
        parts = [vf(sde.drift[i]), -sigma_h[i], v.tau * sde.drift[i]]
        parts += _neg_all(generator_parts(sde, v.y[i]))
        blocks.append((f"drift[{names[i]}]", parts))
    for i in range(sde.n):
        for a in range(sde.m):
            lie = vf(sde.diffusion[i][a])
            transport = Expr.zero(ctx)
            for kk in range(sde.n):
                transport = transport + v.y[i].diff(names[kk]) * sde.diffusion[kk][a]
            parts = [lie, -transport,
                     half * (v.tau * sde.diffusion[i][a]), sigma_c[i][a]]
            blocks.append((f"diff[{names[i]}][{a + 1}]", parts))
    return blocks


def doob_residual_blocks(sde: Sde, v: InfSymmetry, k: Expr
                         ) -> tuple[list[tuple[str, list[Expr]]],
                                    list[tuple[str, list[Expr]]]]:
    """Verdict blocks and informational blocks of the measure-restricted system."""
    sde.ctx.require_same(v.ctx)
    k.ctx.require_same(sde.ctx)
    ctx, names = sde.ctx, sde.ctx.variables
    grad_k = tuple(k.diff(nm) for nm in names)
    sig_t_grad = mat_vec(transpose(sde.diffusion), grad_k)
    two_a_grad = mat_vec(sde.diffusion, sig_t_grad)

    def vf(e: Expr) -> Expr:
        return apply_vector_field(v.y, e)

    verdict: list[tuple[str, list[Expr]]] = []
    info: list[tuple[str, list[Expr]]] = []
    for a in range(sde.m):
        verdict.append((f"doob.H[{a + 1}]", [v.h[a], -sig_t_grad[a]]))
    for i in range(sde.n):
        base = [vf(sde.drift[i]), -two_a_grad[i]]
        base += _neg_all(generator_parts(sde, v.y[i]))
        verdict.append((f"doob.drift[{names[i]}]",
                        base + [v.tau * sde.drift[i]]))
        info.append((f"doob.drift_printed[{names[i]}]", list(base)))
    for (label, parts) in sde_residual_blocks(sde, v):
        if label.startswith("diff["):
            verdict.append((f"doob.{label}", parts))
    verdict.append(("doob.k", generator_parts(sde, k)))
    return verdict, info


def pde_residual_blocks(sde: Sde, xi: PdeSymmetry) -> list[tuple[str, list[Expr]]]:
    sde.require_time_extended()
    sde.ctx.require_same(xi.ctx)
    ctx, names = sde.ctx, sde.ctx.variables
    spatial = sde.spatial_indices
    a = sde.diffusion_square()
    two = Expr.const(ctx, 2)
    l_m_parts = generator_parts(sde, xi.m_coef)
    l_m = Expr.zero(ctx)
    for p in l_m_parts:
        l_m = l_m + p
    grad_k = tuple(xi.k.diff(nm) for nm in names)

    blocks: list[tuple[str, list[Expr]]] = []
    blocks.append(("pde.eq3", generator_parts(sde, xi.k)))
    for s, i in enumerate(spatial):
        a_grad_k = Expr.zero(ctx)
        for j in range(sde.n):
            if not a[i][j].is_zero and not grad_k[j].is_zero:
                a_grad_k = a_grad_k + a[i][j] * grad_k[j]
        parts = list(generator_parts(sde, xi.phi[s]))
        parts.append(-xi.apply(sde.drift[i]))
        parts.append(two * a_grad_k)
        parts.append(-(l_m * sde.drift[i]))
        blocks.append((f"pde.eq4[{names[i]}]", parts))
    for si, i in enumerate(spatial):
        for sj, j in enumerate(spatial):
            parts = [l_m * a[i][j], xi.apply(a[i][j])]
            for sl, ll in enumerate(spatial):
                t1 = xi.phi[si].diff(names[ll]) * a[ll][j]
                t2 = a[i][ll] * xi.phi[sj].diff(names[ll])
                if not t1.is_zero:
                    parts.append(-t1)
                if not t2.is_zero:
                    parts.append(-t2)
            blocks.append((f"pde.eq5[{names[i]}][{names[j]}]", parts))
    grad_m = tuple(xi.m_coef.diff(nm) for nm in names)
    for s, i in enumerate(spatial):
        acc = Expr.zero(ctx)
        for j in range(sde.n):
            if not a[i][j].is_zero and not grad_m[j].is_zero:
                acc = acc + a[i][j] * grad_m[j]
        blocks.append((f"pde.eq6[{names[i]}]", [acc]))
    return blocks


# ---------------------------------------------------------------------------
# report assembly with numeric probing


def _probe_points(ctx: Context, n_probes: int, seed: int):
    rng = np.random.default_rng(seed)
    return [(ctx.sample_point(rng), ctx.sample_params(rng)) for _ in range(n_probes)]


def _worst_over_probes(parts: list[Expr], points) -> float:
    worst = 0.0
    evaluated = 0
    for pt, pv in points:
        try:
            total = 0.0
            for p in parts:
                total += p.eval_numeric(pt, pv)
        except (DivisionByZero, DomainError):
            continue
        evaluated += 1
        worst = max(worst, abs(total))
    if evaluated == 0:
        return float("nan")
    return worst


def _build_report(kind: str, blocks, info_blocks, ctx: Context, notes: list[str],
                  n_probes: int, seed: int, tol: float) -> ResidualReport:
    points = _probe_points(ctx, n_probes, seed)
    entries = []
    for label, parts in blocks:
        total = Expr.zero(ctx)
        for p in parts:
            total = total + p
        entries.append(ResidualEntry(label=label, expr=total,
                                     is_zero=total.is_zero,
                                     worst_abs=_worst_over_probes(parts, points)))
    for label, parts in info_blocks:
        total = Expr.zero(ctx)
        for p in parts:
            total = total + p
        entries.append(ResidualEntry(label=label, expr=total,
                                     is_zero=total.is_zero,
                                     worst_abs=_worst_over_probes(parts, points),
                                     informational=True))
    return ResidualReport(kind=kind, entries=tuple(entries), notes=tuple(notes),
                          n_probes=n_probes, seed=seed, tol=tol)


def sde_residual(sde: Sde, v: InfSymmetry, n_probes: int = 25, seed: int = 101,
                 tol: float = DEFAULT_TOL) -> ResidualReport:
    blocks = sde_residual_blocks(sde, v)
    return _build_report("general", blocks, [], sde.ctx, [], n_probes, seed, tol)


def doob_residual(sde: Sde, v: InfSymmetry, k: Expr, n_probes: int = 25,
                  seed: int = 101, tol: float = DEFAULT_TOL) -> ResidualReport:
    verdict, info = doob_residual_blocks(sde, v, k)
    notes = []
    drift_map = {label: parts for label, parts in verdict}
    for label, parts in info:
        twin = label.replace("doob.drift_printed", "doob.drift")
        sum_info = Expr.zero(sde.ctx)
        for p in parts:
            sum_info = sum_info + p
        sum_verdict = Expr.zero(sde.ctx)
        for p in drift_map[twin]:
            sum_verdict = sum_verdict + p
        if sum_info != sum_verdict:
            notes.append(
                f"{twin} keeps the tau*mu coupling; the variant without it "
                f"({label}) differs for this candidate")
    return _build_report("doob", verdict, info, sde.ctx, notes, n_probes, seed, tol)


def pde_residual(sde: Sde, xi: PdeSymmetry, n_probes: int = 25, seed: int = 101,
                 tol: float = DEFAULT_TOL) -> ResidualReport:
    blocks = pde_residual_blocks(sde, xi)
    return _build_report("pde", blocks, [], sde.ctx, [], n_probes, seed, tol)


def is_symmetry(sde: Sde, v: InfSymmetry) -> bool:
    """Exact yes/no on the general system, no probing."""
    for _, parts in sde_residual_blocks(sde, v):
        total = Expr.zero(sde.ctx)
        for p in parts:
            total = total + p
        if not total.is_zero:
            return False
    return True
