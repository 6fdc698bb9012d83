"""Built-in model catalog.

Four time-extended diffusion models ship with the package, each with a set of
named infinitesimal symmetries, their measure classification (recovered
potential, or a non-closedness witness), the parabolic-generator image of
every potential-type entry, named finite transforms, default parameter values
for simulation, and the ansatz bases used by the exact solver.

Everything recorded here is re-derivable by the engine; ``verify_all`` redoes
the derivations and reports any mismatch, and ``self_test`` raises when the
shipped data disagrees with the engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .ansatz import AnsatzBasis, build_basis
from .context import Context
from .determining import is_symmetry
from .doob import classify, doob_condition_residual
from .errors import DeclarationMismatch, SelfTestFailure
from .expr import Expr
from .grammar import parse_expr
from .pde_bridge import round_trip_check, sde_to_pde
from .sde import Sde
from .transform import FiniteTransform, InfSymmetry

_INF = float("inf")

POLY2_1D = ("1", "x", "z", "x^2", "x*z", "z^2")
POLY2_2D = ("1", "x", "y", "z", "x^2", "y^2", "z^2", "x*y", "x*z", "y*z")

_BASIS_TEXT = {
    "bm1d": {
        "Y[x]": POLY2_1D, "Y[z]": POLY2_1D, "tau": POLY2_1D,
        "H[1]": POLY2_1D, "k": POLY2_1D,
    },
    "bm2d": {
        "Y[x]": POLY2_2D, "Y[y]": POLY2_2D, "Y[z]": POLY2_2D,
        "C[1][2]": POLY2_2D, "tau": POLY2_2D,
        "H[1]": POLY2_2D, "H[2]": POLY2_2D, "k": POLY2_2D,
    },
    "ou": {
        "Y[x]": ("exp(-a*z)", "(x/2 + b/(2*a))*exp(-2*a*z)",
                 "(x/2 + b/(2*a))*exp(2*a*z)", "exp(a*z)",
                 "x/(2*a) - b/(2*a^2)", "x", "1", "z"),
        "Y[z]": ("exp(-2*a*z)/(2*a)", "exp(2*a*z)/(2*a)", "z/a", "1", "z", "x"),
        "tau": ("exp(-2*a*z)", "exp(2*a*z)", "1/a", "1", "z"),
        "H[1]": ("a*exp(-a*z)", "(a*x + b)*exp(-2*a*z)", "x", "1", "exp(-a*z)"),
        "k": ("(a*x + b)*exp(-a*z)",
              "(a*x^2 + 2*b*x + (a + 2*b^2)/(2*a))*exp(-2*a*z)",
              "1", "x", "x^2", "exp(-a*z)"),
    },
    "cir": {
        "Y[x]": ("s^2*x*exp(-a*z)", "x*exp(a*z)", "sqrt(x)", "s*x/a", "x", "1"),
        "Y[z]": ("s^2/a*exp(-a*z)", "exp(a*z)/a", "1", "s*z/a", "z"),
        "tau": ("s^2*exp(-a*z)", "exp(a*z)", "s/a", "1"),
        "H[1]": ("s*a*sqrt(x)*exp(-a*z)", "s/(8*x) - b/(2*s*x) + a/(2*s)",
                 "sqrt(x)", "1"),
        "k": ("(a*x + b)*exp(-a*z)",
              "a*sqrt(x)/s^2 + (4*b - s^2)/(4*s^2)/sqrt(x)", "x/s", "1", "x"),
    },
}


@dataclass(frozen=True)
class NamedSymmetry:
    name: str
    symmetry: InfSymmetry
    expected_class: str                       # Doob | AlmostDoob | NonDoob
    k_text: str | None = None                 # recovered potential, constants stripped
    witness: tuple[str, str] | None = None    # non-closedness pair for NonDoob
    # parabolic-generator image (m, phi..., k) for potential-type entries, and
    # its sign relative to the conventional tabulated generator of the model
    pde_image: tuple[str, ...] | None = None
    bridge_sign: int | None = None


@dataclass(frozen=True)
class NamedTransform:
    name: str
    transform: FiniteTransform
    potential_text: str | None = None         # finite Doob-pair potential


@dataclass(frozen=True)
class ModelEntry:
    name: str
    title: str
    sde: Sde
    symmetries: tuple[NamedSymmetry, ...]
    transforms: tuple[NamedTransform, ...]
    mc_params: dict[str, float]
    mc_x0: tuple[float, ...]
    _basis_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def symmetry(self, name: str) -> NamedSymmetry:
        for s in self.symmetries:
            if s.name == name:
                return s
        raise DeclarationMismatch(
            f"model {self.name!r} has no symmetry named {name!r}")

    def transform(self, name: str) -> NamedTransform:
        for t in self.transforms:
            if t.name == name:
                return t
        raise DeclarationMismatch(
            f"model {self.name!r} has no transform named {name!r}")

    def symmetry_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.symmetries)

    def ansatz_basis(self, mode: str) -> AnsatzBasis:
        if mode not in self._basis_cache:
            self._basis_cache[mode] = build_basis(
                self.sde, dict(_BASIS_TEXT[self.name]), mode)
        return self._basis_cache[mode]


def _sym(sde: Sde, name: str, y, tau: str, h, c12: str | None = None) -> InfSymmetry:
    ctx = sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    zero = Expr.zero(ctx)
    if sde.m == 1:
        c = ((zero,),)
    else:
        e = pe(c12) if c12 else zero
        c = ((zero, e), (-e, zero))
    return InfSymmetry(ctx=ctx, y=tuple(pe(t) for t in y), c=c,
                       tau=pe(tau), h=tuple(pe(t) for t in h), name=name)


def _build_bm1d() -> ModelEntry:
    ctx = Context(variables=("x", "z"), time_var="z")
    pe = lambda t: parse_expr(t, ctx)
    sde = Sde(ctx=ctx, drift=(pe("0"), pe("1")),
              diffusion=((pe("1"),), (pe("0"),)),
              nonexplosive=True, name="bm1d")
    syms = (
        NamedSymmetry("V1", _sym(sde, "V1", ("z", "0"), "0", ("-1",)),
                      "Doob", k_text="-x",
                      pde_image=("0", "z", "-x"), bridge_sign=1),
        NamedSymmetry("V2", _sym(sde, "V2", ("2*x*z", "2*z^2"), "4*z", ("-2*x",)),
                      "Doob", k_text="-x^2 + z",
                      pde_image=("2*z^2", "2*x*z", "-x^2 + z"), bridge_sign=1),
        NamedSymmetry("V3", _sym(sde, "V3", ("x", "2*z"), "2", ("0",)),
                      "Doob", k_text="0",
                      pde_image=("2*z", "x", "0"), bridge_sign=1),
        NamedSymmetry("V4", _sym(sde, "V4", ("1", "0"), "0", ("0",)),
                      "Doob", k_text="0",
                      pde_image=("0", "1", "0"), bridge_sign=1),
        NamedSymmetry("V5", _sym(sde, "V5", ("0", "1"), "0", ("0",)),
                      "Doob", k_text="0",
                      pde_image=("1", "0", "0"), bridge_sign=1),
        NamedSymmetry("Vt_alpha_z",
                      _sym(sde, "Vt_alpha_z", ("x*z/2", "z^2/2"), "z", ("-x/2",)),
                      "Doob", k_text="-x^2/4 + z/4",
                      pde_image=("z^2/2", "x*z/2", "-x^2/4 + z/4"), bridge_sign=1),
        NamedSymmetry("Vt_alpha_1",
                      _sym(sde, "Vt_alpha_1", ("x/2", "z"), "1", ("0",)),
                      "Doob", k_text="0",
                      pde_image=("z", "x/2", "0"), bridge_sign=1),
    )
    ident = lambda: (pe("x"), pe("z"))
    eye = ((pe("1"),),)
    transforms = (
        NamedTransform("shear", FiniteTransform(
            ctx=ctx, phi=(pe("x + z"), pe("z")), phi_inv=(pe("x - z"), pe("z")),
            b=eye, eta=pe("1"), h=(pe("-1"),), name="shear")),
        NamedTransform("girsanov_unit", FiniteTransform(
            ctx=ctx, phi=ident(), phi_inv=ident(),
            b=eye, eta=pe("1"), h=(pe("1"),), name="girsanov_unit"),
            potential_text="x - z/2"),
        NamedTransform("time_scale_4", FiniteTransform(
            ctx=ctx, phi=(pe("2*x"), pe("4*z")), phi_inv=(pe("x/2"), pe("z/4")),
            b=eye, eta=pe("4"), h=(pe("0"),), name="time_scale_4")),
    )
    return ModelEntry(name="bm1d", title="Brownian motion with time state",
                      sde=sde, symmetries=syms, transforms=transforms,
                      mc_params={}, mc_x0=(0.0, 0.0))


def _build_ou() -> ModelEntry:
    ctx = Context(variables=("x", "z"), parameters=("a", "b"), time_var="z")
    pe = lambda t: parse_expr(t, ctx)
    sde = Sde(ctx=ctx, drift=(pe("a*x + b"), pe("1")),
              diffusion=((pe("1"),), (pe("0"),)),
              nonexplosive=True, name="ou")
    k1 = "(a*x + b)*exp(-a*z)"
    k2 = "(a*x^2 + 2*b*x + (a + 2*b^2)/(2*a))*exp(-2*a*z)"
    syms = (
        NamedSymmetry("V1", _sym(sde, "V1", ("exp(-a*z)/2", "0"),
                                 "0", ("a*exp(-a*z)",)),
                      "Doob", k_text=k1,
                      pde_image=("0", "exp(-a*z)/2", k1), bridge_sign=1),
        NamedSymmetry("V2", _sym(sde, "V2",
                                 ("(a*x + b)*exp(-2*a*z)/(2*a)",
                                  "-exp(-2*a*z)/(2*a)"),
                                 "exp(-2*a*z)", ("2*(a*x + b)*exp(-2*a*z)",)),
                      "Doob", k_text=k2,
                      pde_image=("-exp(-2*a*z)/(2*a)",
                                 "(a*x + b)*exp(-2*a*z)/(2*a)", k2),
                      bridge_sign=1),
        NamedSymmetry("V3", _sym(sde, "V3",
                                 ("(a*x + b)*exp(2*a*z)/(2*a)",
                                  "exp(2*a*z)/(2*a)"),
                                 "exp(2*a*z)", ("0",)),
                      "Doob", k_text="0",
                      pde_image=("exp(2*a*z)/(2*a)",
                                 "(a*x + b)*exp(2*a*z)/(2*a)", "0"),
                      bridge_sign=1),
        NamedSymmetry("V4", _sym(sde, "V4", ("exp(a*z)", "0"), "0", ("0",)),
                      "Doob", k_text="0",
                      pde_image=("0", "exp(a*z)", "0"), bridge_sign=1),
        NamedSymmetry("V5", _sym(sde, "V5", ("0", "1"), "0", ("0",)),
                      "Doob", k_text="0",
                      pde_image=("1", "0", "0"), bridge_sign=1),
        NamedSymmetry("Vt1", _sym(sde, "Vt1",
                                  ("(1/(2*a) + exp(2*a*z)/2)*x"
                                   " - b/(2*a^2) + b*exp(2*a*z)/(2*a)",
                                   "z/a + exp(2*a*z)/(2*a)"),
                                  "1/a + exp(2*a*z)", ("x",)),
                      "AlmostDoob", k_text="x^2/2"),
        NamedSymmetry("Vt2", _sym(sde, "Vt2",
                                  ("x/(2*a) - b/(2*a^2) + exp(a*z)", "z/a"),
                                  "1/a", ("x",)),
                      "AlmostDoob", k_text="x^2/2"),
    )
    ident = lambda: (pe("x"), pe("z"))
    eye = ((pe("1"),),)
    transforms = (
        NamedTransform("doob_pair", FiniteTransform(
            ctx=ctx, phi=ident(), phi_inv=ident(),
            b=eye, eta=pe("1"), h=(pe("a*exp(-a*z)"),), name="doob_pair"),
            potential_text="(a*x + b)*exp(-a*z) + a*exp(-2*a*z)/4"),
    )
    return ModelEntry(name="ou", title="Linear mean-reverting diffusion",
                      sde=sde, symmetries=syms, transforms=transforms,
                      mc_params={"a": -1.0, "b": 0.0}, mc_x0=(0.0, 0.0))


def _build_cir() -> ModelEntry:
    ctx = Context(variables=("x", "z"), parameters=("a", "b", "s"),
                  time_var="z", bounds=((0.0, _INF), (-_INF, _INF)))
    pe = lambda t: parse_expr(t, ctx)
    sde = Sde(ctx=ctx, drift=(pe("a*x + b"), pe("1")),
              diffusion=((pe("s*sqrt(x)"),), (pe("0"),)),
              nonexplosive=True, name="cir")
    k1 = "(a*x + b)*exp(-a*z)"
    syms = (
        NamedSymmetry("V1", _sym(sde, "V1",
                                 ("s^2*x*exp(-a*z)/2", "-s^2*exp(-a*z)/(2*a)"),
                                 "s^2*exp(-a*z)/2", ("s*a*sqrt(x)*exp(-a*z)",)),
                      "Doob", k_text=k1,
                      pde_image=("-s^2*exp(-a*z)/(2*a)",
                                 "s^2*x*exp(-a*z)/2", k1),
                      bridge_sign=1),
        NamedSymmetry("V2", _sym(sde, "V2", ("x*exp(a*z)", "exp(a*z)/a"),
                                 "exp(a*z)", ("0",)),
                      "Doob", k_text="0",
                      pde_image=("exp(a*z)/a", "x*exp(a*z)", "0"),
                      bridge_sign=1),
        NamedSymmetry("V3", _sym(sde, "V3", ("0", "1"), "0", ("0",)),
                      "Doob", k_text="0",
                      pde_image=("1", "0", "0"), bridge_sign=1),
        NamedSymmetry("Vt1", _sym(sde, "Vt1", ("sqrt(x)", "0"), "0",
                                  ("s/(8*x) - b/(2*s*x) + a/(2*s)",)),
                      "AlmostDoob",
                      k_text="a*sqrt(x)/s^2 + (4*b - s^2)/(4*s^2)/sqrt(x)"),
        NamedSymmetry("Vt2", _sym(sde, "Vt2", ("s*x/a", "s*z/a"), "s/a",
                                  ("sqrt(x)",)),
                      "AlmostDoob", k_text="x/s"),
    )
    return ModelEntry(name="cir", title="Square-root mean-reverting diffusion",
                      sde=sde, symmetries=syms, transforms=(),
                      mc_params={"a": -1.0, "b": 1.0, "s": 0.5},
                      mc_x0=(1.0, 0.0))


def _build_bm2d() -> ModelEntry:
    ctx = Context(variables=("x", "y", "z"), time_var="z")
    pe = lambda t: parse_expr(t, ctx)
    sde = Sde(ctx=ctx, drift=(pe("0"), pe("0"), pe("1")),
              diffusion=((pe("1"), pe("0")), (pe("0"), pe("1")),
                         (pe("0"), pe("0"))),
              nonexplosive=True, name="bm2d")
    syms = (
        NamedSymmetry("V1", _sym(sde, "V1", ("-z", "0", "0"), "0", ("1", "0")),
                      "Doob", k_text="x",
                      pde_image=("0", "-z", "0", "x"), bridge_sign=-1),
        NamedSymmetry("V2", _sym(sde, "V2", ("0", "-z", "0"), "0", ("0", "1")),
                      "Doob", k_text="y",
                      pde_image=("0", "0", "-z", "y"), bridge_sign=-1),
        NamedSymmetry("V3", _sym(sde, "V3", ("-2*x*z", "-2*y*z", "-2*z^2"),
                                 "-4*z", ("2*x", "2*y")),
                      "Doob", k_text="x^2 + y^2 - 2*z",
                      pde_image=("-2*z^2", "-2*x*z", "-2*y*z",
                                 "x^2 + y^2 - 2*z"),
                      bridge_sign=-1),
        NamedSymmetry("V4", _sym(sde, "V4", ("x/2", "y/2", "z"), "1",
                                 ("0", "0")),
                      "Doob", k_text="0",
                      pde_image=("z", "x/2", "y/2", "0"), bridge_sign=1),
        NamedSymmetry("V5", _sym(sde, "V5", ("y", "-x", "0"), "0", ("0", "0"),
                                 c12="1"),
                      "Doob", k_text="0",
                      pde_image=("0", "y", "-x", "0"), bridge_sign=1),
        NamedSymmetry("V6", _sym(sde, "V6", ("1", "0", "0"), "0", ("0", "0")),
                      "Doob", k_text="0",
                      pde_image=("0", "1", "0", "0"), bridge_sign=1),
        NamedSymmetry("V7", _sym(sde, "V7", ("0", "1", "0"), "0", ("0", "0")),
                      "Doob", k_text="0",
                      pde_image=("0", "0", "1", "0"), bridge_sign=1),
        NamedSymmetry("V8", _sym(sde, "V8", ("0", "0", "1"), "0", ("0", "0")),
                      "Doob", k_text="0",
                      pde_image=("1", "0", "0", "0"), bridge_sign=1),
        NamedSymmetry("Vt_alpha_z",
                      _sym(sde, "Vt_alpha_z",
                           ("x*z/2", "y*z/2", "z^2/2"), "z", ("-x/2", "-y/2")),
                      "Doob", k_text="-x^2/4 - y^2/4 + z/2",
                      pde_image=("z^2/2", "x*z/2", "y*z/2",
                                 "-x^2/4 - y^2/4 + z/2"),
                      bridge_sign=1),
        NamedSymmetry("Vt_beta_z",
                      _sym(sde, "Vt_beta_z", ("y*z", "-x*z", "0"), "0",
                           ("-y", "x"), c12="z"),
                      "NonDoob", witness=("x", "y")),
    )
    return ModelEntry(name="bm2d", title="Planar Brownian motion with time state",
                      sde=sde, symmetries=syms, transforms=(),
                      mc_params={}, mc_x0=(0.0, 0.0, 0.0))


_BUILDERS = {"bm1d": _build_bm1d, "ou": _build_ou, "cir": _build_cir,
             "bm2d": _build_bm2d}
_CACHE: dict[str, ModelEntry] = {}


def model_names() -> tuple[str, ...]:
    return tuple(_BUILDERS)


def get_model(name: str) -> ModelEntry:
    if name not in _BUILDERS:
        raise DeclarationMismatch(
            f"unknown model {name!r}; available: {', '.join(_BUILDERS)}")
    if name not in _CACHE:
        _CACHE[name] = _BUILDERS[name]()
    return _CACHE[name]


def ansatz_basis_text(name: str) -> dict[str, tuple[str, ...]]:
    if name not in _BASIS_TEXT:
        raise DeclarationMismatch(f"unknown model {name!r}")
    return {slot: tuple(texts) for slot, texts in _BASIS_TEXT[name].items()}


def named_symmetry_count() -> int:
    return sum(len(get_model(n).symmetries) for n in model_names())


def verify_all() -> list[str]:
    """Re-derive every recorded fact; return human-readable mismatches."""
    problems: list[str] = []
    for mname in model_names():
        entry = get_model(mname)
        sde = entry.sde
        ctx = sde.ctx
        if not sde.is_time_extended:
            problems.append(f"{mname}: model is not in time-extended form")
        for ns in entry.symmetries:
            tag = f"{mname}.{ns.name}"
            if not is_symmetry(sde, ns.symmetry):
                problems.append(f"{tag}: determining equations do not vanish")
                continue
            got = classify(sde, ns.symmetry)
            if got.kind != ns.expected_class:
                problems.append(f"{tag}: classified {got.kind}, "
                                f"recorded {ns.expected_class}")
                continue
            if ns.k_text is not None:
                want_k = parse_expr(ns.k_text, ctx)
                if got.k is None or got.k != want_k:
                    problems.append(f"{tag}: recovered potential differs "
                                    f"from recorded {ns.k_text!r}")
            if ns.witness is not None and got.witness != ns.witness:
                problems.append(f"{tag}: witness {got.witness} differs "
                                f"from recorded {ns.witness}")
            if ns.pde_image is not None:
                xi = sde_to_pde(sde, ns.symmetry, parse_expr(ns.k_text, ctx))
                image = (xi.m_coef, *xi.phi, xi.k)
                want = tuple(parse_expr(t, ctx) for t in ns.pde_image)
                if image != want:
                    problems.append(f"{tag}: parabolic image differs from "
                                    f"recorded normal form")
                if not round_trip_check(sde, ns.symmetry,
                                        parse_expr(ns.k_text, ctx)):
                    problems.append(f"{tag}: bridge round trip is not the "
                                    f"identity")
        for nt in entry.transforms:
            if nt.potential_text is not None:
                rep = doob_condition_residual(
                    sde, nt.transform.h, parse_expr(nt.potential_text, ctx))
                if not all(e.is_zero for e in rep.entries):
                    problems.append(f"{mname}.{nt.name}: finite pair "
                                    f"condition does not vanish exactly")
    return problems


def self_test() -> None:
    problems = verify_all()
    if problems:
        raise SelfTestFailure("catalog self-test failed:\n  "
                              + "\n  ".join(problems))
