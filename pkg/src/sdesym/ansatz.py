"""Linear solver for the determining equations over a finite ansatz basis.

Each slot of the unknown quadruple (Y components, the independent rotation
entries, tau, and either the measure components H or a potential k) ranges
over a shipped list of basis expressions with unknown rational coefficients.
The determining equations are linear in the unknowns, so collecting the
coefficient of every (state monomial x parameter monomial) atom yields an
exact rational matrix whose nullspace is the solution space. The nullspace is
normalized to reduced row echelon form over the declared unknown order, which
makes the returned basis deterministic.

Membership and closure work over the field of rational parameter functions,
because structure constants of the bracket may genuinely involve parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .determining import generator_parts, sde_residual_blocks
from .errors import DeclarationMismatch
from .expr import Expr
from .grammar import parse_expr
from .linalg import RatFunc, mat_vec, nullspace, solve_parampoly, transpose
from .parampoly import ParamPoly
from .sde import Sde
from .transform import InfSymmetry, bracket


def slot_labels(sde: Sde, mode: str) -> tuple[str, ...]:
    labels = [f"Y[{nm}]" for nm in sde.ctx.variables]
    for i in range(sde.m):
        for j in range(i + 1, sde.m):
            labels.append(f"C[{i + 1}][{j + 1}]")
    labels.append("tau")
    if mode == "general":
        labels += [f"H[{al + 1}]" for al in range(sde.m)]
    elif mode == "doob":
        labels.append("k")
    else:
        raise DeclarationMismatch(f"unknown ansatz mode {mode!r}")
    return tuple(labels)


@dataclass(frozen=True)
class AnsatzBasis:
    mode: str
    slots: tuple[tuple[str, tuple[Expr, ...]], ...]

    def slot(self, label: str) -> tuple[Expr, ...]:
        for lbl, exprs in self.slots:
            if lbl == label:
                return exprs
        raise KeyError(label)

    @property
    def n_unknowns(self) -> int:
        return sum(len(exprs) for _, exprs in self.slots)


def build_basis(sde: Sde, slot_texts: dict[str, tuple[str, ...]],
                mode: str) -> AnsatzBasis:
    labels = slot_labels(sde, mode)
    missing = [lbl for lbl in labels if lbl not in slot_texts]
    if missing:
        raise DeclarationMismatch(f"ansatz basis missing slots: {missing}")
    allowed = set(slot_labels(sde, "general")) | set(slot_labels(sde, "doob"))
    extra = [lbl for lbl in slot_texts if lbl not in allowed]
    if extra:
        raise DeclarationMismatch(f"ansatz basis has unknown slots: {extra}")
    slots = tuple((lbl, tuple(parse_expr(t, sde.ctx) for t in slot_texts[lbl]))
                  for lbl in labels)
    return AnsatzBasis(mode=mode, slots=slots)


def _elementary(sde: Sde, mode: str, label: str, elem: Expr
                ) -> tuple[InfSymmetry, Expr]:
    ctx = sde.ctx
    zero = Expr.zero(ctx)
    y = [zero] * sde.n
    c = [[zero] * sde.m for _ in range(sde.m)]
    tau = zero
    h = [zero] * sde.m
    k = zero
    if label.startswith("Y["):
        name = label[2:-1]
        y[ctx.var_index(name)] = elem
    elif label.startswith("C["):
        i, j = (int(p) - 1 for p in label[2:-1].split("]["))
        c[i][j] = elem
        c[j][i] = -elem
    elif label == "tau":
        tau = elem
    elif label.startswith("H["):
        h[int(label[2:-1]) - 1] = elem
    elif label == "k":
        k = elem
        grad = tuple(elem.diff(nm) for nm in ctx.variables)
        h = list(mat_vec(transpose(sde.diffusion), grad))
    else:  # pragma: no cover
        raise DeclarationMismatch(f"unknown slot label {label!r}")
    v = InfSymmetry(ctx=ctx, y=tuple(y), c=tuple(tuple(row) for row in c),
                    tau=tau, h=tuple(h), name=label)
    return v, k


def _candidate_blocks(sde: Sde, mode: str, v: InfSymmetry, k: Expr
                      ) -> list[list[Expr]]:
    blocks = [parts for _label, parts in sde_residual_blocks(sde, v)]
    if mode == "doob":
        blocks.append(generator_parts(sde, k))
    return blocks


@dataclass(frozen=True)
class SpaceMember:
    symmetry: InfSymmetry
    k: Expr | None
    coords: tuple[Fraction, ...]
    name: str


@dataclass(frozen=True)
class SymmetrySpace:
    sde: Sde
    mode: str
    basis: AnsatzBasis
    members: tuple[SpaceMember, ...]

    @property
    def dimension(self) -> int:
        return len(self.members)


def solve(sde: Sde, basis: AnsatzBasis, mode: str | None = None) -> SymmetrySpace:
    mode = mode or basis.mode
    if mode != basis.mode:
        raise DeclarationMismatch("basis was built for a different mode")
    unknowns: list[tuple[str, int, Expr]] = []
    for label, exprs in basis.slots:
        for idx, e in enumerate(exprs):
            unknowns.append((label, idx, e))

    columns = []
    row_keys: set = set()
    for label, _idx, elem in unknowns:
        v, k = _elementary(sde, mode, label, elem)
        blocks = _candidate_blocks(sde, mode, v, k)
        col: dict = {}
        for pos, parts in enumerate(blocks):
            total = Expr.zero(sde.ctx)
            for p in parts:
                total = total + p
            for (mono, pexps), q in total.iter_atoms():
                key = (pos, mono.sort_key(), pexps, mono)
                col[key] = col.get(key, Fraction(0)) + q
        col = {key: q for key, q in col.items() if q}
        row_keys.update(col)
        columns.append(col)

    ordered_keys = sorted(row_keys, key=lambda key: (key[0], key[1], key[2]))
    matrix = [[col.get(key, Fraction(0)) for col in columns]
              for key in ordered_keys]
    kernel = nullspace(matrix, len(unknowns))

    members = []
    zero = Expr.zero(sde.ctx)
    for num, vec in enumerate(kernel):
        acc_v: InfSymmetry | None = None
        acc_k = zero
        for coeff, (label, _idx, elem) in zip(vec, unknowns):
            if not coeff:
                continue
            v, k = _elementary(sde, mode, label, elem.scale(coeff))
            acc_v = v if acc_v is None else acc_v + v
            acc_k = acc_k + k
        if acc_v is None:
            acc_v = InfSymmetry.zero(sde.ctx, sde.m)
        name = f"sol{num + 1}"
        sym = InfSymmetry(ctx=sde.ctx, y=acc_v.y, c=acc_v.c, tau=acc_v.tau,
                          h=acc_v.h, name=name)
        members.append(SpaceMember(symmetry=sym,
                                   k=acc_k if mode == "doob" else None,
                                   coords=tuple(vec), name=name))
    return SymmetrySpace(sde=sde, mode=mode, basis=basis, members=tuple(members))


# ---------------------------------------------------------------------------
# membership and closure over the parameter field


def _component_rows(ctx, quadruples):
    """Stack quadruple components into rows keyed by (component, monomial)."""
    keys = set()
    maps = []
    for v in quadruples:
        comp: dict = {}
        for i, e in enumerate(v.y):
            for mono, c in e.terms:
                comp[("y", i, mono)] = c
        for i in range(v.m):
            for j in range(v.m):
                for mono, c in v.c[i][j].terms:
                    comp[("c", i, j, mono)] = c
        for mono, c in v.tau.terms:
            comp[("tau", mono)] = c
        for al, e in enumerate(v.h):
            for mono, c in e.terms:
                comp[("h", al, mono)] = c
        maps.append(comp)
        keys.update(comp)

    def key_order(key):
        return (key[0], key[1:-1], key[-1].sort_key())

    return sorted(keys, key=key_order), maps


def membership(space: SymmetrySpace, v: InfSymmetry
               ) -> tuple[RatFunc, ...] | None:
    """Coordinates of v in the span of the space members over the parameter
    field, or None when v is outside the span."""
    nparams = space.sde.ctx.nparams
    quads = [m.symmetry for m in space.members] + [v]
    keys, maps = _component_rows(space.sde.ctx, quads)
    matrix: list[list[ParamPoly]] = []
    rhs: list[ParamPoly] = []
    zero_c = None
    for key in keys:
        entries = [mp.get(key) for mp in maps]
        dens = [e.den for e in entries if e is not None]
        lcm = tuple(max(d[i] for d in dens) for i in range(nparams)) \
            if nparams else ()
        row = []
        for e in entries:
            if e is None:
                row.append(ParamPoly.zero(nparams))
            else:
                shift = tuple(l - d for l, d in zip(lcm, e.den))
                row.append(e.num.shift_exponents(shift) if any(shift) else e.num)
        matrix.append(row[:-1])
        rhs.append(row[-1])
    if not matrix:
        return tuple(RatFunc.from_poly(ParamPoly.zero(nparams))
                     for _ in space.members)
    return solve_parampoly(matrix, rhs, nparams)


@dataclass(frozen=True)
class ClosureReport:
    closed: bool
    failed_pairs: tuple[tuple[str, str], ...]
    constants: dict

    def constant_text(self, names) -> dict:
        return {pair: tuple(c.text(names) for c in coords)
                for pair, coords in self.constants.items()}


def closure_check(space: SymmetrySpace) -> ClosureReport:
    """Bracket every member pair and resolve it in the member span."""
    failed = []
    constants = {}
    mem = space.members
    for i in range(len(mem)):
        for j in range(i + 1, len(mem)):
            w = bracket(mem[i].symmetry, mem[j].symmetry)
            coords = membership(space, w)
            if coords is None:
                failed.append((mem[i].name, mem[j].name))
            else:
                constants[(mem[i].name, mem[j].name)] = tuple(coords)
    return ClosureReport(closed=not failed, failed_pairs=tuple(failed),
                         constants=constants)


def jacobi_defect(v1: InfSymmetry, v2: InfSymmetry, v3: InfSymmetry) -> InfSymmetry:
    """[[v1,v2],v3] + [[v2,v3],v1] + [[v3,v1],v2]; zero when the bracket
    satisfies the Jacobi identity on this triple."""
    return (bracket(bracket(v1, v2), v3)
            + bracket(bracket(v2, v3), v1)
            + bracket(bracket(v3, v1), v2))


def jacobi_check(space: SymmetrySpace) -> tuple[bool, tuple[str, str, str] | None]:
    mem = space.members
    for i in range(len(mem)):
        for j in range(i + 1, len(mem)):
            for kk in range(j + 1, len(mem)):
                defect = jacobi_defect(mem[i].symmetry, mem[j].symmetry,
                                       mem[kk].symmetry)
                if not defect.is_zero:
                    return False, (mem[i].name, mem[j].name, mem[kk].name)
    return True, None
