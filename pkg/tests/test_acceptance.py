"""Acceptance gate: the nine externally promised engine guarantees.

Each criterion is one test at its stated tolerance.  A passing test prints a
single ``criterion N: PASS`` line (visible with ``pytest -rA`` or ``-s``);
pytest's own verdict line is authoritative.  Two classification rows are
expected failures kept strict: the engine proves a stronger verdict than the
tabulated one, and the mismatch must stay visible rather than be silently
hidden (see the decision log shipped alongside the repository for the
analysis).
"""

import json
import math
import time

import numpy as np
import pytest

from sdesym import catalog
from sdesym import montecarlo as mc
from sdesym.ansatz import closure_check, jacobi_check, membership, solve
from sdesym.determining import sde_residual
from sdesym.doob import classify, density_recipe
from sdesym.grammar import parse_expr
from sdesym.modelfile import model_file_from_entry, parse_model_file, print_model_file
from sdesym.pde_bridge import round_trip_check, sde_to_pde
from sdesym.transform import bracket

# ---------------------------------------------------------------------------
# criterion 1: every named symmetry satisfies the determining equations,
# identically in normal form and numerically at 100 random probes

_NAMED = {
    "bm1d": ("V1", "V2", "V3", "V4", "V5", "Vt_alpha_z", "Vt_alpha_1"),
    "ou": ("V1", "V2", "V3", "V4", "V5", "Vt1", "Vt2"),
    "cir": ("V1", "V2", "V3", "Vt1", "Vt2"),
    "bm2d": ("V1", "V2", "V3", "V4", "V5", "V6", "V7", "V8",
             "Vt_alpha_z", "Vt_beta_z"),
}


def test_criterion_1_catalog_residuals():
    t0 = time.monotonic()
    checked = 0
    for model, names in _NAMED.items():
        entry = catalog.get_model(model)
        assert entry.symmetry_names() == names
        for name in names:
            rep = sde_residual(entry.sde, entry.symmetry(name).symmetry,
                               n_probes=100)
            assert all(e.is_zero for e in rep.entries), (model, name)
            assert rep.worst_abs < 1e-9, (model, name)
            checked += 1
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0, f"residual sweep took {elapsed:.1f}s"
    print(f"criterion 1: PASS — {checked} named symmetries identically zero, "
          f"probe residuals < 1e-9, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# criterion 2: the classification table, row by row

_TABLE = {
    ("bm1d", "V1"): "Doob", ("bm1d", "V2"): "Doob", ("bm1d", "V3"): "Doob",
    ("bm1d", "V4"): "Doob", ("bm1d", "V5"): "Doob",
    ("bm1d", "Vt_alpha_z"): "AlmostDoob",   # contested: see strict xfail below
    ("bm1d", "Vt_alpha_1"): "Doob",
    ("ou", "V1"): "Doob", ("ou", "V2"): "Doob", ("ou", "V3"): "Doob",
    ("ou", "V4"): "Doob", ("ou", "V5"): "Doob",
    ("ou", "Vt1"): "AlmostDoob", ("ou", "Vt2"): "AlmostDoob",
    ("cir", "V1"): "Doob", ("cir", "V2"): "Doob", ("cir", "V3"): "Doob",
    ("cir", "Vt1"): "AlmostDoob", ("cir", "Vt2"): "AlmostDoob",
    ("bm2d", "V1"): "Doob", ("bm2d", "V2"): "Doob", ("bm2d", "V3"): "Doob",
    ("bm2d", "V4"): "Doob", ("bm2d", "V5"): "Doob", ("bm2d", "V6"): "Doob",
    ("bm2d", "V7"): "Doob", ("bm2d", "V8"): "Doob",
    ("bm2d", "Vt_alpha_z"): "AlmostDoob",   # contested: see strict xfail below
    ("bm2d", "Vt_beta_z"): "NonDoob",
}

_CONTESTED = {("bm1d", "Vt_alpha_z"), ("bm2d", "Vt_alpha_z")}


def test_criterion_2_classification_table():
    rows = 0
    for (model, name), want in sorted(_TABLE.items()):
        if (model, name) in _CONTESTED:
            continue
        entry = catalog.get_model(model)
        cls = classify(entry.sde, entry.symmetry(name).symmetry)
        assert cls.symmetry_holds, (model, name)
        assert cls.kind == want, (model, name, cls.kind)
        if want == "NonDoob":
            assert cls.witness == ("x", "y"), (model, name)
        rows += 1
    print(f"criterion 2: PASS — {rows} classification rows match "
          f"(2 contested rows tracked separately)")


@pytest.mark.parametrize("model", ["bm1d", "bm2d"])
@pytest.mark.xfail(strict=True, reason=(
    "the tabulated verdict for this row is AlmostDoob, but an exact global "
    "potential k exists (one quarter of the squared-scaling entry's), so the "
    "classifier proves the stronger Doob verdict; kept failing on purpose"))
def test_criterion_2_contested_scaling_rows(model):
    entry = catalog.get_model(model)
    cls = classify(entry.sde, entry.symmetry("Vt_alpha_z").symmetry)
    assert cls.symmetry_holds
    assert cls.kind == "AlmostDoob"


# ---------------------------------------------------------------------------
# criterion 3: lifting to parabolic generators reproduces the tabulated
# lists (up to scaling, plus the trivial multiplication direction) and the
# descent undoes the lift on every entry with an exact potential


def _collinear(u, v):
    return all(u[i] * v[j] == u[j] * v[i]
               for i in range(len(u)) for j in range(i + 1, len(u)))


def test_criterion_3_pde_bridge():
    want = {"bm1d": 6, "bm2d": 9, "ou": 6, "cir": 4}
    from sdesym.expr import Expr

    for model in catalog.model_names():
        entry = catalog.get_model(model)
        ctx = entry.sde.ctx
        gens = []
        round_trips = 0
        for ns in entry.symmetries:
            if ns.pde_image is None:
                continue
            k = parse_expr(ns.k_text, ctx)
            xi = sde_to_pde(entry.sde, ns.symmetry, k)
            image = (xi.m_coef, *xi.phi, xi.k)
            assert image == tuple(parse_expr(t, ctx) for t in ns.pde_image), \
                (model, ns.name)
            gens.append(image)
            assert round_trip_check(entry.sde, ns.symmetry, k), (model, ns.name)
            round_trips += 1
        gens.append((Expr.zero(ctx),) * (len(gens[0]) - 1)
                    + (Expr.const(ctx, 1),))
        classes = []
        for g in gens:
            if not any(_collinear(g, rep) for rep in classes):
                classes.append(g)
        assert len(classes) == want[model], model
        assert round_trips >= 1

    # the squared-scaling generator must carry its exact zeroth-order term
    bm1d = catalog.get_model("bm1d")
    ctx = bm1d.sde.ctx
    xi2 = sde_to_pde(bm1d.sde, bm1d.symmetry("V2").symmetry,
                     parse_expr("-x^2 + z", ctx))
    assert xi2.k == parse_expr("-x^2 + z", ctx)
    print("criterion 3: PASS — generator lists 6/9/6/4 reproduced exactly, "
          "descent round-trips every exact-potential entry")


# ---------------------------------------------------------------------------
# criterion 4: the determining-equation solver over declared bases recovers
# the tabulated algebras; dimensions frozen by the independent row-reduction
# oracle in tests/test_ansatz_oracle.py

_ORACLE_DIMS = {("bm1d", "doob"): 6, ("bm1d", "general"): 6,
                ("ou", "general"): 6, ("cir", "general"): 5}


def test_criterion_4_ansatz_solver():
    timings = {}
    spaces = {}
    for model, mode in _ORACLE_DIMS:
        entry = catalog.get_model(model)
        t0 = time.monotonic()
        space = solve(entry.sde, entry.ansatz_basis(mode), mode)
        timings[model] = timings.get(model, 0.0) + time.monotonic() - t0
        assert space.dimension == _ORACLE_DIMS[(model, mode)], (model, mode)
        spaces[(model, mode)] = space

    bm1d = catalog.get_model("bm1d")
    for name in ("V1", "V2", "V3", "V4", "V5"):
        assert membership(spaces[("bm1d", "doob")],
                          bm1d.symmetry(name).symmetry) is not None, name
    for name in ("Vt_alpha_z", "Vt_alpha_1"):   # the span{1, z} directions
        assert membership(spaces[("bm1d", "general")],
                          bm1d.symmetry(name).symmetry) is not None, name

    for model in ("ou", "cir"):
        entry = catalog.get_model(model)
        space = spaces[(model, "general")]
        for ns in entry.symmetries:
            assert membership(space, ns.symmetry) is not None, (model, ns.name)

    assert all(t < 60.0 for t in timings.values()), timings
    text = ", ".join(f"{m} {t:.2f}s" for m, t in sorted(timings.items()))
    print(f"criterion 4: PASS — solver recovers every tabulated list at the "
          f"oracle dimensions ({text})")


# ---------------------------------------------------------------------------
# criterion 5: the recovered exact-potential algebra is a Lie algebra


def test_criterion_5_bracket_algebra():
    entry = catalog.get_model("bm1d")
    space = solve(entry.sde, entry.ansatz_basis("doob"), "doob")
    crep = closure_check(space)
    assert crep.closed, crep.failed_pairs

    v5 = entry.symmetry("V5").symmetry
    v1 = entry.symmetry("V1").symmetry
    v4 = entry.symmetry("V4").symmetry
    w = bracket(v5, v1)
    assert w.same_as(v4)
    coords_w = membership(space, w)
    coords_v4 = membership(space, v4)
    assert coords_w is not None and coords_w == coords_v4

    ok, witness = jacobi_check(space)
    assert ok, witness
    print("criterion 5: PASS — space closed under the bracket, "
          "[V5, V1] = V4, Jacobi defect identically zero")


# ---------------------------------------------------------------------------
# criterion 6: the measure-change weights make the compensated endpoint a
# standard normal in the weighted law


def test_criterion_6_girsanov_weighted_moments():
    t0 = time.monotonic()
    entry = catalog.get_model("bm1d")
    tr = entry.transform("girsanov_unit").transform
    cfg = mc.McConfig(n_paths=100_000, horizon=1.0, dt=1e-3, seed=42,
                      n_workers=4)
    ens = mc.simulate(entry.sde, cfg, {}, entry.mc_x0, transform=tr,
                      eval_times=(1.0,))
    compensated = ens.column("x", 1.0) - 1.0   # new driving motion at time 1

    m1 = mc.weighted_moments(compensated, ens.log_weights)
    m2 = mc.weighted_moments(compensated ** 2, ens.log_weights)
    wd = mc.weight_diagnostics(ens.log_weights)
    elapsed = time.monotonic() - t0

    assert abs(m1.z_against(0.0)) < 4.0, m1
    assert abs(m2.z_against(1.0)) < 4.0, m2
    assert abs(wd.z_against(1.0)) < 4.0, wd
    assert elapsed < 60.0, f"took {elapsed:.1f}s"
    print(f"criterion 6: PASS — weighted mean z={m1.z_against(0.0):+.2f}, "
          f"second moment z={m2.z_against(1.0):+.2f}, "
          f"mean weight z={wd.z_against(1.0):+.2f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 7: the weak symmetry maps simulated paths onto fresh paths of
# the same model, but only once the weights are applied


def test_criterion_7_weak_symmetry_in_law():
    entry = catalog.get_model("bm1d")
    tr = entry.transform("shear").transform   # (x + z, I, 1, -1)
    cfg = mc.McConfig(n_paths=100_000, horizon=1.0, dt=1e-3, seed=42,
                      n_workers=4)
    moved = mc.simulate(entry.sde, cfg, {}, entry.mc_x0, transform=tr,
                        eval_times=(1.0,))
    fresh_cfg = mc.McConfig(n_paths=100_000, horizon=1.0, dt=1e-3, seed=43,
                            n_workers=4)
    fresh = mc.simulate(entry.sde, fresh_cfg, {}, entry.mc_x0,
                        eval_times=(1.0,))

    rep = mc.weak_compare(moved.column("x", 1.0), moved.log_weights,
                          fresh.column("x", 1.0), None)
    assert rep.passed
    assert all(abs(z) < 4.0 for z in rep.moment_z), rep.moment_z
    assert rep.ks_p_value > 1e-3, rep.ks_p_value

    control = mc.weak_compare(moved.column("x", 1.0), None,
                              fresh.column("x", 1.0), None)
    worst = max(abs(z) for z in control.moment_z)
    assert not control.passed
    assert worst > 10.0, control.moment_z
    print(f"criterion 7: PASS — weighted comparison KS p={rep.ks_p_value:.3f}, "
          f"moment z within 4; unweighted control z={worst:.0f} > 10")


# ---------------------------------------------------------------------------
# criterion 8: the discrete pathwise density identity


def test_criterion_8_pathwise_identity():
    bm1d = catalog.get_model("bm1d")
    nt = bm1d.transform("girsanov_unit")
    recipe = density_recipe(bm1d.sde, nt.transform.h,
                            parse_expr(nt.potential_text, bm1d.sde.ctx))
    cfg = mc.McConfig(n_paths=4096, horizon=1.0, dt=1e-3, seed=7)
    gap = mc.doob_pathwise_gap(bm1d.sde, recipe, cfg, {}, bm1d.mc_x0)
    assert gap.max_gap < 1e-12, gap

    ou = catalog.get_model("ou")
    pair = ou.transform("doob_pair")
    recipe_ou = density_recipe(ou.sde, pair.transform.h,
                               parse_expr(pair.potential_text, ou.sde.ctx))
    gaps = []
    for dt in (1e-2, 1e-3, 1e-4):
        cfg = mc.McConfig(n_paths=4096, horizon=1.0, dt=dt, seed=7)
        gaps.append(mc.doob_pathwise_gap(ou.sde, recipe_ou, cfg,
                                         ou.mc_params, ou.mc_x0).max_gap)
    # refinement ratio normalized to a single grid halving
    halvings = math.log2(10.0)
    ratios = [(gaps[i] / gaps[i + 1]) ** (1.0 / halvings) for i in range(2)]
    assert all(1.5 <= r <= 2.5 for r in ratios), (gaps, ratios)
    print(f"criterion 8: PASS — exact identity gap {gap.max_gap:.1e} < 1e-12; "
          f"refinement per halving {ratios[0]:.2f}, {ratios[1]:.2f} in "
          f"[1.5, 2.5]")


# ---------------------------------------------------------------------------
# criterion 9: infrastructure — grammar round trip, scheduling-independent
# reports, and the catalog self-test


def _mc_report_text(n_workers: int) -> str:
    import asyncio

    import httpx

    from sdesym.service import create_app

    app = create_app()

    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://test") as client:
            return await client.post("/v1/mc", json={
                "model": "bm1d", "transform": "time_scale_4",
                "n_paths": 4096, "dt": 0.01, "horizon": 0.5, "seed": 11,
                "n_workers": n_workers})

    resp = asyncio.run(go())
    assert resp.status_code == 200
    return resp.text


def test_criterion_9_infrastructure():
    for model in catalog.model_names():
        mf = model_file_from_entry(catalog.get_model(model))
        text = print_model_file(mf)
        assert print_model_file(parse_model_file(text)) == text, model

    texts = {w: _mc_report_text(w) for w in (1, 2, 8)}
    assert texts[1] == texts[2] == texts[8]
    assert json.loads(texts[1])["passed"] is True

    catalog.self_test()
    print("criterion 9: PASS — model files round-trip, reports byte-identical "
          "across 1/2/8 workers, catalog self-test clean")
