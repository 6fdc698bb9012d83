"""HTTP facade over the engine: JSON requests in, versioned reports out.

Each endpoint accepts either a built-in model name or inline model-file text,
runs the corresponding engine workflow, and returns a ``report.Report``.
The app refuses to start if the built-in catalog fails its self-test.
"""

from __future__ import annotations

import io
import math
from contextlib import asynccontextmanager
from typing import Literal

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, model_validator

from . import __version__, catalog, montecarlo as mc, report
from .ansatz import closure_check, jacobi_check, solve
from .determining import doob_residual, is_symmetry, pde_residual, sde_residual
from .doob import classify, density_recipe, recover_k
from .errors import EngineError
from .grammar import parse_expr
from .modelfile import (model_file_from_entry, parse_ansatz_text,
                        parse_model_file, print_model_file)
from .pde_bridge import pde_to_sde, round_trip_check, sde_to_pde
from .transform import bracket, et_apply


class _NotFound(EngineError):
    """A named model, symmetry, or transform does not exist."""


# ---------------------------------------------------------------------------
# model resolution


class _Resolved:
    """A model plus its named symmetries/transforms, from catalog or text."""

    def __init__(self, name, sde, symmetries, transforms, basis_for, mc_defaults):
        self.name = name
        self.sde = sde
        self.symmetries = symmetries  # tuple[(name, InfSymmetry, k | None)]
        self.transforms = transforms  # tuple[(name, FiniteTransform, pot | None)]
        self.basis_for = basis_for    # mode -> AnsatzBasis
        self.mc_defaults = mc_defaults  # McSettings | None

    def symmetry(self, name: str):
        for nm, v, k in self.symmetries:
            if nm == name:
                return v, k
        raise _NotFound(f"model {self.name!r} has no symmetry {name!r}; "
                        f"known: {[nm for nm, _, _ in self.symmetries]}")

    def transform(self, name: str):
        for nm, t, pot in self.transforms:
            if nm == name:
                return t, pot
        raise _NotFound(f"model {self.name!r} has no transform {name!r}; "
                        f"known: {[nm for nm, _, _ in self.transforms]}")


def _resolve(model: str | None, model_text: str | None) -> _Resolved:
    if (model is None) == (model_text is None):
        raise EngineError("provide exactly one of 'model' or 'model_text'")
    if model is not None:
        if model not in catalog.model_names():
            raise _NotFound(f"unknown model {model!r}; "
                            f"known: {list(catalog.model_names())}")
        entry = catalog.get_model(model)
        ctx = entry.sde.ctx
        symmetries = tuple(
            (ns.name, ns.symmetry,
             parse_expr(ns.k_text, ctx) if ns.k_text is not None else None)
            for ns in entry.symmetries)
        transforms = tuple(
            (nt.name, nt.transform,
             parse_expr(nt.potential_text, ctx) if nt.potential_text else None)
            for nt in entry.transforms)
        mf = model_file_from_entry(entry)
        return _Resolved(entry.name, entry.sde, symmetries, transforms,
                         entry.ansatz_basis, mf.mc)
    mf = parse_model_file(model_text)

    def basis_for(mode: str):
        if mf.ansatz is None or mf.ansatz.mode != mode:
            raise EngineError(
                f"model file declares no [ansatz] section for mode {mode!r}")
        return mf.ansatz

    return _Resolved(mf.name, mf.sde, mf.symmetries, mf.transforms,
                     basis_for, mf.mc)


def _doob_k(res: _Resolved, name: str):
    """Declared k of a named symmetry, or the recovered one."""
    v, k = res.symmetry(name)
    if k is not None:
        return v, k
    rec = recover_k(res.sde, v.h)
    if rec.status != "ok":
        raise EngineError(
            f"symmetry {name!r} has no usable k: {rec.reason or rec.status}")
    return v, rec.k


# ---------------------------------------------------------------------------
# request bodies


class ModelRef(BaseModel):
    model: str | None = None
    model_text: str | None = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.model is None) == (self.model_text is None):
            raise ValueError("provide exactly one of 'model' or 'model_text'")
        return self


class CheckRequest(ModelRef):
    symmetry: str | None = None  # None checks every named symmetry
    mode: Literal["general", "doob", "pde"] = "general"
    n_probes: int = 25
    probe_seed: int = 101
    tol: float = 1e-9


class ClassifyRequest(ModelRef):
    symmetry: str


class BridgeRequest(ModelRef):
    symmetry: str
    reverse: bool = False


class SolveRequest(ModelRef):
    mode: Literal["general", "doob"] = "general"
    basis_text: str | None = None
    closure: bool = True


class BracketRequest(ModelRef):
    left: str
    right: str


class McRequest(ModelRef):
    transform: str
    n_paths: int | None = None
    dt: float | None = None
    horizon: float | None = None
    seed: int | None = None
    n_workers: int = 1
    z_max: float = 4.0
    p_min: float = 1e-3
    csv_paths: list[int] = []


# ---------------------------------------------------------------------------
# section builders


def _check_sections(res: _Resolved, req: CheckRequest) -> list:
    names = ([req.symmetry] if req.symmetry is not None
             else [nm for nm, _, _ in res.symmetries])
    kw = dict(n_probes=req.n_probes, seed=req.probe_seed, tol=req.tol)
    sections = []
    for nm in names:
        if req.mode == "general":
            v, _ = res.symmetry(nm)
            rep = sde_residual(res.sde, v, **kw)
        elif req.mode == "doob":
            v, k = _doob_k(res, nm)
            rep = doob_residual(res.sde, v, k, **kw)
        else:
            v, k = _doob_k(res, nm)
            xi = sde_to_pde(res.sde, v, k, check=False)
            rep = pde_residual(res.sde, xi, **kw)
        sections.append(report.residuals_section(res.name, nm, req.mode, rep))
    return sections


def _classify_section(res: _Resolved, req: ClassifyRequest):
    v, _ = res.symmetry(req.symmetry)
    return report.classification_section(res.name, req.symmetry,
                                         classify(res.sde, v))


def _bridge_section(res: _Resolved, req: BridgeRequest):
    v, k = _doob_k(res, req.symmetry)
    if not req.reverse:
        xi = sde_to_pde(res.sde, v, k)
        ok = round_trip_check(res.sde, v, k)
        return report.BridgeSection(
            model=res.name, symmetry=req.symmetry, direction="sde_to_pde",
            pde=report.pde_generator_doc(xi), round_trip=ok, passed=ok)
    xi = sde_to_pde(res.sde, v, k)
    v2, k2 = pde_to_sde(res.sde, xi)
    ok = v2.same_as(v)
    return report.BridgeSection(
        model=res.name, symmetry=req.symmetry, direction="pde_to_sde",
        quadruple=report.quadruple_doc(v2, k2, name=req.symmetry),
        round_trip=ok, passed=ok)


def _solve_section(res: _Resolved, req: SolveRequest):
    if req.basis_text is not None:
        basis = parse_ansatz_text(req.basis_text, res.sde)
        if basis.mode != req.mode:
            raise EngineError(f"basis is for mode {basis.mode!r}, "
                              f"requested {req.mode!r}")
    else:
        basis = res.basis_for(req.mode)
    space = solve(res.sde, basis, req.mode)
    members = [report.quadruple_doc(m.symmetry, m.k, name=m.name)
               for m in space.members]
    closure_doc = None
    jacobi_ok = None
    if req.closure:
        crep = closure_check(space)
        names = res.sde.ctx.parameters
        table = [report.StructureConstantLine(
                     left=a, right=b,
                     coords=[c.text(names) for c in coords])
                 for (a, b), coords in crep.constants.items()]
        closure_doc = report.ClosureDoc(
            closed=crep.closed,
            failed_pairs=[list(p) for p in crep.failed_pairs],
            table=table)
        jacobi_ok = jacobi_check(space)[0] if crep.closed else None
    return report.SolveSection(
        model=res.name, mode=req.mode,
        slots=[lbl for lbl, _ in basis.slots],
        dimension=space.dimension, members=members,
        closure=closure_doc, jacobi_ok=jacobi_ok, passed=True)


def _bracket_section(res: _Resolved, req: BracketRequest):
    v1, _ = res.symmetry(req.left)
    v2, _ = res.symmetry(req.right)
    w = bracket(v1, v2)
    ok = is_symmetry(res.sde, w)
    return report.BracketSection(
        model=res.name, left=req.left, right=req.right,
        result=report.quadruple_doc(w, name=f"[{req.left}, {req.right}]"),
        is_symmetry=ok, passed=ok)


def _mc_section(res: _Resolved, req: McRequest):
    if res.mc_defaults is None:
        raise EngineError("no [mc] defaults available for this model")
    base = res.mc_defaults
    cfg = mc.McConfig(
        n_paths=req.n_paths if req.n_paths is not None else base.n_paths,
        horizon=req.horizon if req.horizon is not None else base.horizon,
        dt=req.dt if req.dt is not None else base.dt,
        seed=req.seed if req.seed is not None else base.seed,
        n_workers=req.n_workers)
    params = base.params_dict()
    x0 = base.x0
    t, potential = res.transform(req.transform)
    eval_time = 0.9 * cfg.horizon

    moved = mc.simulate(res.sde, cfg, params, x0, transform=t,
                        eval_times=(eval_time,))
    wd = mc.weight_diagnostics(moved.log_weights)
    wz = wd.z_against(1.0)
    weight_check = report.McMomentDoc(
        name="mean_weight", estimate=wd.value, se=wd.se, target=1.0,
        z=wz, passed=abs(wz) <= req.z_max)

    direct_sde = et_apply(t, res.sde)
    x0_arr = np.asarray([x0], dtype=float)
    pvalues = tuple(float(params[p]) for p in res.sde.ctx.parameters)
    x0_direct = tuple(float(mc.compile_expr(e, pvalues)(x0_arr)[0])
                      for e in t.phi)
    direct_cfg = mc.McConfig(n_paths=cfg.n_paths, horizon=cfg.horizon,
                             dt=cfg.dt, seed=cfg.seed + 1,
                             n_workers=cfg.n_workers)
    direct = mc.simulate(direct_sde, direct_cfg, params, x0_direct,
                         eval_times=(eval_time,))
    compares = []
    for i in res.sde.spatial_indices:
        label = res.sde.ctx.variables[i]
        rep = mc.weak_compare(moved.column(label, eval_time), moved.log_weights,
                              direct.column(label, eval_time), None,
                              p_threshold=req.p_min, z_threshold=req.z_max)
        compares.append(report.McCompareDoc(
            coordinate=label, eval_time=eval_time,
            ks_statistic=rep.ks_statistic, ks_p_value=rep.ks_p_value,
            n_eff_transformed=rep.n_eff_a, n_eff_direct=rep.n_eff_b,
            moment_z=list(rep.moment_z), passed=rep.passed))

    pathwise = None
    if potential is not None:
        recipe = density_recipe(res.sde, t.h, potential)
        pw_cfg = mc.McConfig(n_paths=min(cfg.n_paths, 4096),
                             horizon=cfg.horizon, dt=cfg.dt, seed=cfg.seed,
                             n_workers=cfg.n_workers)
        gap = mc.doob_pathwise_gap(res.sde, recipe, pw_cfg, params, x0)
        bound = 5.0 * math.sqrt(cfg.dt)
        pathwise = report.McPathwiseDoc(
            max_gap=gap.max_gap, mean_gap=gap.mean_gap, n_paths=gap.n_paths,
            bound=bound, passed=gap.max_gap <= bound)

    csv_rows = None
    csv_text = None
    if req.csv_paths:
        buf = io.StringIO()
        csv_rows = mc.dump_paths_csv(res.sde, cfg, params, x0,
                                     tuple(req.csv_paths), buf, h=t.h)
        csv_text = buf.getvalue()

    passed = (weight_check.passed and all(c.passed for c in compares)
              and (pathwise is None or pathwise.passed))
    return report.McSection(
        model=res.name, transform=req.transform,
        config=report.McConfigDoc(
            n_paths=cfg.n_paths, horizon=cfg.horizon, dt=cfg.dt,
            seed=cfg.seed, param_values=params, x0=list(x0)),
        z_max=req.z_max, p_min=req.p_min, weight_check=weight_check,
        compares=compares, pathwise=pathwise,
        csv_rows=csv_rows, csv_text=csv_text, passed=passed)


def _catalog_section(verify: bool):
    problems = catalog.verify_all() if verify else []
    return report.CatalogSection(
        models=list(catalog.model_names()),
        named_symmetries=catalog.named_symmetry_count(),
        problems=list(problems), passed=not problems)


# ---------------------------------------------------------------------------
# app


def create_app() -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        catalog.self_test()
        yield

    app = FastAPI(title="sdesym", version=__version__, lifespan=lifespan)

    @app.exception_handler(_NotFound)
    async def _not_found(request: Request, exc: _NotFound):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(EngineError)
    async def _engine_error(request: Request, exc: EngineError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "engine": f"sdesym {__version__}"}

    @app.get("/v1/catalog")
    async def catalog_index(verify: bool = False):
        return report.assemble("catalog", [_catalog_section(verify)])

    @app.get("/v1/catalog/{name}/modelfile", response_class=PlainTextResponse)
    async def catalog_modelfile(name: str, mode: Literal["general", "doob"] = "general"):
        if name not in catalog.model_names():
            raise _NotFound(f"unknown model {name!r}")
        return print_model_file(
            model_file_from_entry(catalog.get_model(name), mode=mode))

    @app.post("/v1/check")
    async def check(req: CheckRequest):
        res = _resolve(req.model, req.model_text)
        return report.assemble("check", _check_sections(res, req))

    @app.post("/v1/classify")
    async def classify_endpoint(req: ClassifyRequest):
        res = _resolve(req.model, req.model_text)
        return report.assemble("classify", [_classify_section(res, req)])

    @app.post("/v1/bridge")
    async def bridge_endpoint(req: BridgeRequest):
        res = _resolve(req.model, req.model_text)
        return report.assemble("bridge", [_bridge_section(res, req)])

    @app.post("/v1/solve")
    async def solve_endpoint(req: SolveRequest):
        res = _resolve(req.model, req.model_text)
        return report.assemble("solve", [_solve_section(res, req)])

    @app.post("/v1/bracket")
    async def bracket_endpoint(req: BracketRequest):
        res = _resolve(req.model, req.model_text)
        return report.assemble("bracket", [_bracket_section(res, req)])

    @app.post("/v1/mc")
    async def mc_endpoint(req: McRequest):
        res = _resolve(req.model, req.model_text)
        return report.assemble("mc", [_mc_section(res, req)])

    return app
