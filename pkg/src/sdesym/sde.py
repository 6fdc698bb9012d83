"""Ito SDE models: drift/diffusion pairs, their generator, and rank probing.

An `Sde` holds exact drift and diffusion entries over a shared declaration
context. The generator acts on scalar expressions as

    L(f) = sum_ij A^{ij} d_i d_j f + sum_i mu^i d_i f,   A = (1/2) sigma sigma^T.

A model is "time-extended" when the declared time variable has drift one and a
zero diffusion row; several operations (the PDE-side residuals and the bridges)
require that shape and raise DomainError otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .context import Context
from .errors import DeclarationMismatch, DomainError
from .expr import Expr
from .linalg import mat_mul, transpose


def apply_vector_field(y: tuple[Expr, ...], f: Expr) -> Expr:
    """Y(f) = sum_i Y^i d_i f for a vector field over f's context."""
    ctx = f.ctx
    out = Expr.zero(ctx)
    for i, name in enumerate(ctx.variables):
        if y[i].is_zero:
            continue
        out = out + y[i] * f.diff(name)
    return out


@dataclass(frozen=True)
class RankProbe:
    ranks: tuple[int, ...]
    constant: bool
    rank: int | None
    n_points: int


@dataclass(frozen=True)
class Sde:
    ctx: Context
    drift: tuple[Expr, ...]
    diffusion: tuple[tuple[Expr, ...], ...]
    nonexplosive: bool = False
    name: str = ""
    _a_cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        n = self.ctx.nvars
        if len(self.drift) != n:
            raise DeclarationMismatch(
                f"drift has {len(self.drift)} components for {n} variables")
        if len(self.diffusion) != n:
            raise DeclarationMismatch(
                f"diffusion has {len(self.diffusion)} rows for {n} variables")
        m = len(self.diffusion[0])
        for row in self.diffusion:
            if len(row) != m:
                raise DeclarationMismatch("diffusion rows have unequal lengths")
        for e in self.drift:
            e.ctx.require_same(self.ctx)
        for row in self.diffusion:
            for e in row:
                e.ctx.require_same(self.ctx)

    @property
    def n(self) -> int:
        return self.ctx.nvars

    @property
    def m(self) -> int:
        return len(self.diffusion[0])

    @property
    def is_time_extended(self) -> bool:
        if self.ctx.time_var is None:
            return False
        iz = self.ctx.time_index()
        z_drift = self.drift[iz]
        c = z_drift.as_coefficient()
        if c is None or c.num.as_const() != 1 or any(c.den):
            return False
        return all(e.is_zero for e in self.diffusion[iz])

    def require_time_extended(self):
        if not self.is_time_extended:
            raise DomainError(
                "operation requires a time-extended model: declared time "
                "variable with unit drift and zero diffusion row")

    @property
    def spatial_indices(self) -> tuple[int, ...]:
        iz = self.ctx.time_index() if self.ctx.time_var is not None else None
        return tuple(i for i in range(self.n) if i != iz)

    def diffusion_square(self) -> tuple[tuple[Expr, ...], ...]:
        """A = (1/2) sigma sigma^T, cached."""
        if "A" not in self._a_cache:
            half = Expr.const(self.ctx, "1/2")
            prod = mat_mul(self.diffusion, transpose(self.diffusion))
            self._a_cache["A"] = tuple(tuple(half * e for e in row) for row in prod)
        return self._a_cache["A"]

    def generator_apply(self, f: Expr) -> Expr:
        f.ctx.require_same(self.ctx)
        a = self.diffusion_square()
        names = self.ctx.variables
        grads = [f.diff(nm) for nm in names]
        out = Expr.zero(self.ctx)
        for i in range(self.n):
            if not self.drift[i].is_zero and not grads[i].is_zero:
                out = out + self.drift[i] * grads[i]
            for j in range(self.n):
                if a[i][j].is_zero:
                    continue
                second = grads[i].diff(names[j])
                if not second.is_zero:
                    out = out + a[i][j] * second
        return out

    def rank_probe(self, seed: int = 7, n_points: int = 12) -> RankProbe:
        """Numeric rank of A at random in-domain points; flags non-constant rank."""
        rng = np.random.default_rng(seed)
        a = self.diffusion_square()
        ranks = []
        for _ in range(n_points):
            pt = self.ctx.sample_point(rng)
            pv = self.ctx.sample_params(rng)
            mat = np.array([[float(a[i][j].eval_numeric(pt, pv))
                             for j in range(self.n)] for i in range(self.n)])
            ranks.append(int(np.linalg.matrix_rank(mat, tol=1e-10)))
        distinct = tuple(sorted(set(ranks)))
        constant = len(distinct) == 1
        return RankProbe(ranks=distinct, constant=constant,
                         rank=distinct[0] if constant else None,
                         n_points=n_points)
