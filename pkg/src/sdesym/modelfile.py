"""Sectioned text files bundling a model with symmetries, transforms, and runs.

A model file is line-oriented: ``[section]`` headers followed by ``key = value``
pairs, with ``#`` comments and blank lines ignored.  Sections:

    [model]            name, variables, time_var, parameters, bounds,
                       nonexplosive, drift, sigma
    [symmetry.NAME]    Y, C (optional, zero when absent), tau, H, k (optional)
    [transform.NAME]   phi, phi_inv, B, eta, h, potential (optional)
    [ansatz]           mode, slots, one ``basis.<slot>`` line per slot
    [mc]               n_paths, horizon, dt, seed, param_values, x0

Vectors are ``[a, b, ...]`` and matrices are row-major nested lists; a bare
scalar is accepted where a one-entry vector or one-column row is meant.
Printing emits a normal form (expressions through the shared grammar printer,
sections and keys in canonical order), so parse -> print -> parse is the
identity on normal forms.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .ansatz import AnsatzBasis, build_basis
from .context import Context
from .errors import ParseError
from .expr import Expr
from .grammar import parse_expr, print_expr
from .sde import Sde
from .transform import FiniteTransform, InfSymmetry

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.\-]+)\]$")
_NAME_RE = re.compile(r"^[A-Za-z0-9_\-]+$")


@dataclass(frozen=True)
class McSettings:
    """Simulation defaults carried by a model file's [mc] section."""

    n_paths: int
    horizon: float
    dt: float
    seed: int
    param_values: tuple[tuple[str, float], ...]
    x0: tuple[float, ...]

    def params_dict(self) -> dict[str, float]:
        return dict(self.param_values)


@dataclass(frozen=True)
class ModelFile:
    name: str
    sde: Sde
    symmetries: tuple[tuple[str, InfSymmetry, Expr | None], ...]
    transforms: tuple[tuple[str, FiniteTransform, Expr | None], ...]
    ansatz: AnsatzBasis | None
    mc: McSettings | None

    def symmetry(self, name: str) -> tuple[InfSymmetry, Expr | None]:
        for nm, v, k in self.symmetries:
            if nm == name:
                return v, k
        raise KeyError(name)

    def transform(self, name: str) -> tuple[FiniteTransform, Expr | None]:
        for nm, t, pot in self.transforms:
            if nm == name:
                return t, pot
        raise KeyError(name)


# ---------------------------------------------------------------------------
# low-level line and literal handling


def _split_lines(text: str):
    """Yield (line number, content) for significant lines."""
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line


def _split_top(text: str, sep: str = ",") -> list[str]:
    """Split on separators outside any bracket nesting."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch in "[(":
            depth += 1
        elif ch in ")]":
            depth -= 1
            if depth < 0:
                raise ParseError(f"unbalanced brackets in {text!r}")
        elif ch == sep and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    if depth != 0:
        raise ParseError(f"unbalanced brackets in {text!r}")
    parts.append(text[start:])
    return [p.strip() for p in parts]


def _parse_entry(text: str, ctx: Context, lineno: int) -> Expr:
    try:
        return parse_expr(text, ctx)
    except ParseError as err:
        raise ParseError(f"line {lineno}: {err}") from None


def _parse_vector(text: str, ctx: Context, lineno: int) -> tuple[Expr, ...]:
    text = text.strip()
    if not text.startswith("["):
        return (_parse_entry(text, ctx, lineno),)
    if not text.endswith("]"):
        raise ParseError(f"line {lineno}: vector literal must end with ']'")
    inner = text[1:-1].strip()
    if not inner:
        raise ParseError(f"line {lineno}: empty vector literal")
    return tuple(_parse_entry(p, ctx, lineno) for p in _split_top(inner))


def _parse_matrix(text: str, ctx: Context, lineno: int) -> tuple[tuple[Expr, ...], ...]:
    text = text.strip()
    if not text.startswith("["):
        return ((_parse_entry(text, ctx, lineno),),)
    inner = text[1:-1].strip()
    if not inner:
        raise ParseError(f"line {lineno}: empty matrix literal")
    rows = []
    for part in _split_top(inner):
        if part.startswith("["):
            rows.append(_parse_vector(part, ctx, lineno))
        else:
            rows.append((_parse_entry(part, ctx, lineno),))
    return tuple(rows)


def _print_vector(v) -> str:
    return "[" + ", ".join(print_expr(e) for e in v) + "]"


def _print_matrix(rows) -> str:
    return "[" + ", ".join(_print_vector(r) for r in rows) + "]"


def _float_token(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _parse_float(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"line {lineno}: expected a number, got {tok!r}") from None


# ---------------------------------------------------------------------------
# parsing


def _collect_sections(text: str):
    sections = []
    current = None
    for lineno, line in _split_lines(text):
        m = _SECTION_RE.match(line)
        if m:
            current = (m.group(1), lineno, [])
            sections.append(current)
            continue
        if current is None:
            raise ParseError(f"line {lineno}: content before the first section header")
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        current[2].append((lineno, key.strip(), value.strip()))
    return sections


class _Fields:
    def __init__(self, header: str, lineno: int, pairs):
        self.header = header
        self.lineno = lineno
        self.pairs = {}
        for ln, key, value in pairs:
            if key in self.pairs:
                raise ParseError(f"line {ln}: duplicate key {key!r} in [{header}]")
            self.pairs[key] = (ln, value)

    def take(self, key: str, required: bool = True):
        if key not in self.pairs:
            if required:
                raise ParseError(
                    f"line {self.lineno}: [{self.header}] is missing {key!r}")
            return None, None
        return self.pairs.pop(key)

    def finish(self):
        if self.pairs:
            key = next(iter(self.pairs))
            ln, _ = self.pairs[key]
            raise ParseError(f"line {ln}: unknown key {key!r} in [{self.header}]")


def _parse_model_section(fields: _Fields) -> tuple[str, Sde]:
    _, name = fields.take("name")
    if not _NAME_RE.match(name):
        raise ParseError(f"line {fields.lineno}: invalid model name {name!r}")
    ln, vars_text = fields.take("variables")
    variables = tuple(v.strip() for v in vars_text.split(",") if v.strip())
    if not variables:
        raise ParseError(f"line {ln}: no variables declared")
    _, tv = fields.take("time_var", required=False)
    _, params_text = fields.take("parameters", required=False)
    parameters = tuple(p.strip() for p in (params_text or "").split(",") if p.strip())
    ln_b, bounds_text = fields.take("bounds", required=False)
    bounds = {v: (-math.inf, math.inf) for v in variables}
    if bounds_text:
        for clause in bounds_text.split(";"):
            clause = clause.strip()
            if not clause:
                continue
            if ":" not in clause:
                raise ParseError(f"line {ln_b}: bounds clause needs 'var: (lo, hi)'")
            var, interval = clause.split(":", 1)
            var = var.strip()
            if var not in bounds:
                raise ParseError(f"line {ln_b}: bounds for unknown variable {var!r}")
            interval = interval.strip()
            if not (interval.startswith("(") and interval.endswith(")")):
                raise ParseError(f"line {ln_b}: interval must look like '(lo, hi)'")
            lo_hi = _split_top(interval[1:-1])
            if len(lo_hi) != 2:
                raise ParseError(f"line {ln_b}: interval must have two endpoints")
            bounds[var] = (_parse_float(lo_hi[0], ln_b), _parse_float(lo_hi[1], ln_b))
    ln_e, nonexp_text = fields.take("nonexplosive")
    if nonexp_text not in ("true", "false"):
        raise ParseError(f"line {ln_e}: nonexplosive must be 'true' or 'false'")
    ctx = Context(variables=variables, parameters=parameters,
                  time_var=tv if tv else None,
                  bounds=tuple(bounds[v] for v in variables))
    ln_d, drift_text = fields.take("drift")
    drift = _parse_vector(drift_text, ctx, ln_d)
    if len(drift) != len(variables):
        raise ParseError(
            f"line {ln_d}: drift needs {len(variables)} entries, got {len(drift)}")
    ln_s, sigma_text = fields.take("sigma")
    sigma = _parse_matrix(sigma_text, ctx, ln_s)
    if len(sigma) != len(variables):
        raise ParseError(
            f"line {ln_s}: sigma needs {len(variables)} rows, got {len(sigma)}")
    fields.finish()
    sde = Sde(ctx=ctx, drift=drift, diffusion=sigma,
              nonexplosive=nonexp_text == "true")
    return name, sde


def _zero_matrix(ctx: Context, m: int):
    return tuple(tuple(Expr.zero(ctx) for _ in range(m)) for _ in range(m))


def _parse_symmetry_section(fields: _Fields, name: str, sde: Sde
                            ) -> tuple[InfSymmetry, Expr | None]:
    ctx = sde.ctx
    ln, y_text = fields.take("Y")
    y = _parse_vector(y_text, ctx, ln)
    ln_c, c_text = fields.take("C", required=False)
    c = _parse_matrix(c_text, ctx, ln_c) if c_text else _zero_matrix(ctx, sde.m)
    ln_t, tau_text = fields.take("tau")
    tau = parse_expr(tau_text, ctx)
    ln_h, h_text = fields.take("H")
    h = _parse_vector(h_text, ctx, ln_h)
    _, k_text = fields.take("k", required=False)
    k = parse_expr(k_text, ctx) if k_text else None
    fields.finish()
    return InfSymmetry(ctx=ctx, y=y, c=c, tau=tau, h=h, name=name), k


def _parse_transform_section(fields: _Fields, name: str, sde: Sde
                             ) -> tuple[FiniteTransform, Expr | None]:
    ctx = sde.ctx
    ln, phi_text = fields.take("phi")
    phi = _parse_vector(phi_text, ctx, ln)
    ln_i, inv_text = fields.take("phi_inv")
    phi_inv = _parse_vector(inv_text, ctx, ln_i)
    ln_b, b_text = fields.take("B", required=False)
    if b_text:
        b = _parse_matrix(b_text, ctx, ln_b)
    else:
        one, zero = Expr.const(ctx, 1), Expr.zero(ctx)
        b = tuple(tuple(one if i == j else zero for j in range(sde.m))
                  for i in range(sde.m))
    _, eta_text = fields.take("eta", required=False)
    eta = parse_expr(eta_text, ctx) if eta_text else Expr.const(ctx, 1)
    ln_h, h_text = fields.take("h", required=False)
    h = (_parse_vector(h_text, ctx, ln_h) if h_text
         else tuple(Expr.zero(ctx) for _ in range(sde.m)))
    _, pot_text = fields.take("potential", required=False)
    potential = parse_expr(pot_text, ctx) if pot_text else None
    fields.finish()
    t = FiniteTransform(ctx=ctx, phi=phi, phi_inv=phi_inv, b=b, eta=eta, h=h,
                        name=name)
    return t, potential


def _parse_ansatz_section(fields: _Fields, sde: Sde) -> AnsatzBasis:
    ln_m, mode = fields.take("mode")
    if mode not in ("general", "doob"):
        raise ParseError(f"line {ln_m}: mode must be 'general' or 'doob'")
    ln_s, slots_text = fields.take("slots")
    labels = [s.strip() for s in _split_top(slots_text) if s.strip()]
    slot_texts: dict[str, tuple[str, ...]] = {}
    for label in labels:
        ln, basis_text = fields.take(f"basis.{label}")
        slot_texts[label] = tuple(p for p in _split_top(basis_text) if p)
        if not slot_texts[label]:
            raise ParseError(f"line {ln}: empty basis for slot {label}")
    fields.finish()
    return build_basis(sde, slot_texts, mode)


def _parse_mc_section(fields: _Fields, sde: Sde) -> McSettings:
    ln, v = fields.take("n_paths")
    try:
        n_paths = int(v)
    except ValueError:
        raise ParseError(f"line {ln}: n_paths must be an integer") from None
    ln_h, v = fields.take("horizon")
    horizon = _parse_float(v, ln_h)
    ln_d, v = fields.take("dt")
    dt = _parse_float(v, ln_d)
    ln_s, v = fields.take("seed")
    try:
        seed = int(v)
    except ValueError:
        raise ParseError(f"line {ln_s}: seed must be an integer") from None
    ln_p, pv_text = fields.take("param_values",
                                required=bool(sde.ctx.parameters))
    param_values = []
    if pv_text:
        for clause in _split_top(pv_text):
            if ":" not in clause:
                raise ParseError(f"line {ln_p}: expected 'name: value'")
            nm, val = clause.split(":", 1)
            nm = nm.strip()
            if nm not in sde.ctx.parameters:
                raise ParseError(f"line {ln_p}: unknown parameter {nm!r}")
            param_values.append((nm, _parse_float(val.strip(), ln_p)))
    missing = [p for p in sde.ctx.parameters if p not in dict(param_values)]
    if missing:
        raise ParseError(f"line {ln_p or ln}: param_values missing {missing}")
    ln_x, x0_text = fields.take("x0")
    x0 = tuple(_parse_float(p, ln_x) for p in _split_top(x0_text))
    if len(x0) != sde.n:
        raise ParseError(f"line {ln_x}: x0 has {len(x0)} entries "
                         f"for {sde.n} variables")
    fields.finish()
    return McSettings(n_paths=n_paths, horizon=horizon, dt=dt, seed=seed,
                      param_values=tuple(param_values), x0=x0)


def parse_model_file(text: str) -> ModelFile:
    """Parse sectioned model text; errors carry the offending line number."""
    sections = _collect_sections(text)
    if not sections or sections[0][0] != "model":
        raise ParseError("a model file must start with a [model] section")
    seen = set()
    name = ""
    sde: Sde | None = None
    symmetries: list[tuple[str, InfSymmetry, Expr | None]] = []
    transforms: list[tuple[str, FiniteTransform, Expr | None]] = []
    ansatz: AnsatzBasis | None = None
    mc: McSettings | None = None
    for header, lineno, pairs in sections:
        if header in seen and not header.startswith(("symmetry.", "transform.")):
            raise ParseError(f"line {lineno}: duplicate section [{header}]")
        seen.add(header)
        fields = _Fields(header, lineno, pairs)
        if header == "model":
            if sde is not None:
                raise ParseError(f"line {lineno}: duplicate section [model]")
            name, sde = _parse_model_section(fields)
            continue
        if sde is None:
            raise ParseError(f"line {lineno}: [{header}] before [model]")
        if header.startswith("symmetry."):
            sub = header[len("symmetry."):]
            if not _NAME_RE.match(sub):
                raise ParseError(f"line {lineno}: invalid symmetry name {sub!r}")
            if any(nm == sub for nm, _, _ in symmetries):
                raise ParseError(f"line {lineno}: duplicate symmetry {sub!r}")
            v, k = _parse_symmetry_section(fields, sub, sde)
            symmetries.append((sub, v, k))
        elif header.startswith("transform."):
            sub = header[len("transform."):]
            if not _NAME_RE.match(sub):
                raise ParseError(f"line {lineno}: invalid transform name {sub!r}")
            if any(nm == sub for nm, _, _ in transforms):
                raise ParseError(f"line {lineno}: duplicate transform {sub!r}")
            t, pot = _parse_transform_section(fields, sub, sde)
            transforms.append((sub, t, pot))
        elif header == "ansatz":
            ansatz = _parse_ansatz_section(fields, sde)
        elif header == "mc":
            mc = _parse_mc_section(fields, sde)
        else:
            raise ParseError(f"line {lineno}: unknown section [{header}]")
    return ModelFile(name=name, sde=sde, symmetries=tuple(symmetries),
                     transforms=tuple(transforms), ansatz=ansatz, mc=mc)


# ---------------------------------------------------------------------------
# printing


def _matrix_is_zero(rows) -> bool:
    return all(e.is_zero for row in rows for e in row)


def print_model_file(mf: ModelFile) -> str:
    """Emit the canonical text for a model file (a parse/print fixed point)."""
    sde = mf.sde
    ctx = sde.ctx
    out = ["[model]", f"name = {mf.name}",
           "variables = " + ", ".join(ctx.variables)]
    if ctx.time_var is not None:
        out.append(f"time_var = {ctx.time_var}")
    if ctx.parameters:
        out.append("parameters = " + ", ".join(ctx.parameters))
    finite = [(v, lo, hi) for v, (lo, hi) in zip(ctx.variables, ctx.bounds)
              if math.isfinite(lo) or math.isfinite(hi)]
    if finite:
        out.append("bounds = " + "; ".join(
            f"{v}: ({_float_token(lo)}, {_float_token(hi)})"
            for v, lo, hi in finite))
    out.append(f"nonexplosive = {'true' if sde.nonexplosive else 'false'}")
    out.append("drift = " + _print_vector(sde.drift))
    out.append("sigma = " + _print_matrix(sde.diffusion))
    for nm, v, k in mf.symmetries:
        out += ["", f"[symmetry.{nm}]", "Y = " + _print_vector(v.y)]
        if not _matrix_is_zero(v.c):
            out.append("C = " + _print_matrix(v.c))
        out.append("tau = " + print_expr(v.tau))
        out.append("H = " + _print_vector(v.h))
        if k is not None:
            out.append("k = " + print_expr(k))
    for nm, t, pot in mf.transforms:
        out += ["", f"[transform.{nm}]",
                "phi = " + _print_vector(t.phi),
                "phi_inv = " + _print_vector(t.phi_inv),
                "B = " + _print_matrix(t.b),
                "eta = " + print_expr(t.eta),
                "h = " + _print_vector(t.h)]
        if pot is not None:
            out.append("potential = " + print_expr(pot))
    if mf.ansatz is not None:
        out += ["", "[ansatz]", f"mode = {mf.ansatz.mode}",
                "slots = " + ", ".join(lbl for lbl, _ in mf.ansatz.slots)]
        for lbl, exprs in mf.ansatz.slots:
            out.append(f"basis.{lbl} = " + ", ".join(print_expr(e) for e in exprs))
    if mf.mc is not None:
        mc = mf.mc
        out += ["", "[mc]", f"n_paths = {mc.n_paths}",
                f"horizon = {_float_token(mc.horizon)}",
                f"dt = {_float_token(mc.dt)}", f"seed = {mc.seed}"]
        if mc.param_values:
            out.append("param_values = " + ", ".join(
                f"{nm}: {_float_token(v)}" for nm, v in mc.param_values))
        out.append("x0 = " + ", ".join(_float_token(v) for v in mc.x0))
    return "\n".join(out) + "\n"


def parse_ansatz_text(text: str, sde: Sde) -> AnsatzBasis:
    """Read an [ansatz] section, alone or inside a full model file.

    A bare snippet is resolved against ``sde``; a full model file must
    declare the same variables and parameters.
    """
    sections = _collect_sections(text)
    if sections and sections[0][0] == "model":
        mf = parse_model_file(text)
        mf.sde.ctx.require_same(sde.ctx)
        if mf.ansatz is None:
            raise ParseError("model file has no [ansatz] section")
        return mf.ansatz
    for header, lineno, pairs in sections:
        if header == "ansatz":
            return _parse_ansatz_section(_Fields(header, lineno, pairs), sde)
    raise ParseError("no [ansatz] section found")


def model_file_from_entry(entry, mode: str = "general",
                          n_paths: int = 100_000, horizon: float = 1.0,
                          dt: float = 1e-3, seed: int = 42) -> ModelFile:
    """Bundle a catalog entry as a model file with default run settings."""
    ctx = entry.sde.ctx
    mc = McSettings(
        n_paths=n_paths, horizon=horizon, dt=dt, seed=seed,
        param_values=tuple((nm, entry.mc_params[nm]) for nm in ctx.parameters),
        x0=tuple(float(v) for v in entry.mc_x0))
    symmetries = tuple(
        (ns.name, ns.symmetry,
         parse_expr(ns.k_text, ctx) if ns.k_text is not None else None)
        for ns in entry.symmetries)
    transforms = tuple(
        (nt.name, nt.transform,
         parse_expr(nt.potential_text, ctx) if nt.potential_text else None)
        for nt in entry.transforms)
    return ModelFile(name=entry.name, sde=entry.sde, symmetries=symmetries,
                     transforms=transforms, ansatz=entry.ansatz_basis(mode),
                     mc=mc)
