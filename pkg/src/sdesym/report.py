"""Versioned machine-readable reports for engine runs.

Every numeric verdict in a report carries the tolerance, probe count, and
seed it was computed with, so a report is a self-contained record of what
was checked.  Rendering is deterministic: fields serialize in declaration
order and the optional ``created_at`` stamp is the only non-reproducible
field, so two runs with the same inputs produce byte-identical documents
unless a stamp is requested.
"""

from __future__ import annotations

import math
from typing import Annotated, Literal, Union

from pydantic import BaseModel, Field

from . import __version__

SCHEMA_VERSION = "1.0"


def _finite(v: float) -> float | None:
    return None if (v is None or math.isnan(v)) else float(v)


# ---------------------------------------------------------------------------
# sections


class ResidualLine(BaseModel):
    label: str
    zero: bool
    worst_abs_probe: float | None
    informational: bool = False
    residual_text: str | None = None


class ResidualsSection(BaseModel):
    kind: Literal["residuals"] = "residuals"
    model: str
    symmetry: str
    system: str
    passed: bool
    tol: float
    n_probes: int
    probe_seed: int
    lines: list[ResidualLine]
    notes: list[str] = []


class ClassificationSection(BaseModel):
    kind: Literal["classification"] = "classification"
    model: str
    symmetry: str
    verdict: str
    symmetry_holds: bool
    k: str | None = None
    free_vars: list[str] = []
    witness: list[str] | None = None
    generator_residual: str | None = None
    reason: str | None = None
    passed: bool


class QuadrupleDoc(BaseModel):
    name: str = ""
    y: list[str]
    c: list[list[str]]
    tau: str
    h: list[str]
    k: str | None = None


class PdeGeneratorDoc(BaseModel):
    m: str
    phi: list[str]
    k: str


class BridgeSection(BaseModel):
    kind: Literal["bridge"] = "bridge"
    model: str
    symmetry: str
    direction: Literal["sde_to_pde", "pde_to_sde"]
    pde: PdeGeneratorDoc | None = None
    quadruple: QuadrupleDoc | None = None
    round_trip: bool
    passed: bool


class StructureConstantLine(BaseModel):
    left: str
    right: str
    coords: list[str]


class ClosureDoc(BaseModel):
    closed: bool
    failed_pairs: list[list[str]] = []
    table: list[StructureConstantLine] = []


class SolveSection(BaseModel):
    kind: Literal["solve"] = "solve"
    model: str
    mode: str
    slots: list[str]
    dimension: int
    members: list[QuadrupleDoc]
    closure: ClosureDoc | None = None
    jacobi_ok: bool | None = None
    passed: bool


class BracketSection(BaseModel):
    kind: Literal["bracket"] = "bracket"
    model: str
    left: str
    right: str
    result: QuadrupleDoc
    is_symmetry: bool
    passed: bool


class McMomentDoc(BaseModel):
    name: str
    estimate: float
    se: float
    target: float
    z: float
    passed: bool


class McCompareDoc(BaseModel):
    coordinate: str
    eval_time: float
    ks_statistic: float
    ks_p_value: float
    n_eff_transformed: float
    n_eff_direct: float
    moment_z: list[float]
    passed: bool


class McPathwiseDoc(BaseModel):
    max_gap: float
    mean_gap: float
    n_paths: int
    bound: float
    passed: bool


class McConfigDoc(BaseModel):
    # worker count is deliberately not echoed: results are independent of it
    n_paths: int
    horizon: float
    dt: float
    seed: int
    param_values: dict[str, float]
    x0: list[float]


class McSection(BaseModel):
    kind: Literal["mc"] = "mc"
    model: str
    transform: str
    config: McConfigDoc
    z_max: float
    p_min: float
    weight_check: McMomentDoc
    compares: list[McCompareDoc]
    pathwise: McPathwiseDoc | None = None
    csv_rows: int | None = None
    csv_text: str | None = None
    passed: bool


class CatalogSection(BaseModel):
    kind: Literal["catalog"] = "catalog"
    models: list[str]
    named_symmetries: int
    problems: list[str]
    passed: bool


Section = Annotated[
    Union[ResidualsSection, ClassificationSection, BridgeSection,
          SolveSection, BracketSection, McSection, CatalogSection],
    Field(discriminator="kind"),
]


class Report(BaseModel):
    schema_version: str = SCHEMA_VERSION
    engine: str = f"sdesym {__version__}"
    command: str
    passed: bool
    created_at: str | None = None
    sections: list[Section]


def assemble(command: str, sections: list) -> Report:
    """Wrap sections in the envelope; the run passes iff every section does."""
    return Report(command=command,
                  passed=all(s.passed for s in sections),
                  sections=sections)


def render(report: Report, indent: int = 2) -> str:
    return report.model_dump_json(indent=indent, exclude_none=False)


# ---------------------------------------------------------------------------
# builders from engine objects


def residuals_section(model: str, symmetry: str, system: str, rep) -> ResidualsSection:
    """Document a ResidualReport from the determining module."""
    lines = []
    for e in rep.entries:
        lines.append(ResidualLine(
            label=e.label, zero=e.is_zero,
            worst_abs_probe=_finite(e.worst_abs),
            informational=e.informational,
            residual_text=None if e.is_zero else str(e.expr)))
    return ResidualsSection(model=model, symmetry=symmetry, system=system,
                            passed=rep.passed, tol=rep.tol,
                            n_probes=rep.n_probes, probe_seed=rep.seed,
                            lines=lines, notes=list(rep.notes))


def classification_section(model: str, symmetry: str, cls) -> ClassificationSection:
    return ClassificationSection(
        model=model, symmetry=symmetry, verdict=cls.kind,
        symmetry_holds=cls.symmetry_holds,
        k=None if cls.k is None else str(cls.k),
        free_vars=list(cls.free_vars),
        witness=None if cls.witness is None else list(cls.witness),
        generator_residual=None if cls.residual is None else str(cls.residual),
        reason=cls.reason,
        passed=cls.symmetry_holds and cls.kind != "Undecided")


def quadruple_doc(v, k=None, name: str | None = None) -> QuadrupleDoc:
    return QuadrupleDoc(
        name=v.name if name is None else name,
        y=[str(e) for e in v.y],
        c=[[str(e) for e in row] for row in v.c],
        tau=str(v.tau),
        h=[str(e) for e in v.h],
        k=None if k is None else str(k))


def pde_generator_doc(xi) -> PdeGeneratorDoc:
    return PdeGeneratorDoc(m=str(xi.m_coef),
                           phi=[str(e) for e in xi.phi],
                           k=str(xi.k))
