"""Simulation engine: determinism, measure change, statistics, streaming."""

import io
import math

import numpy as np
import pytest

from sdesym.context import Context
from sdesym.doob import density_recipe
from sdesym.errors import (ClockTooShort, DeclarationMismatch, DomainExit,
                           NonExplosiveRequired, PotentialMissing)
from sdesym.expr import Expr
from sdesym.grammar import parse_expr
from sdesym.montecarlo import (CHUNK_PATHS, McConfig, compile_expr,
                               doob_pathwise_gap, dump_paths_csv,
                               effective_size, kolmogorov_tail, simulate,
                               weak_compare, weight_diagnostics,
                               weighted_moments)
from sdesym.sde import Sde


def _unit_h(sde):
    return (Expr.const(sde.ctx, 1),)


def test_config_validation():
    cfg = McConfig(n_paths=100, horizon=1.0, dt=0.01)
    assert cfg.n_steps == 100
    assert cfg.n_chunks == 1
    assert McConfig(n_paths=CHUNK_PATHS + 1, horizon=1.0, dt=0.5).n_chunks == 2
    with pytest.raises(DeclarationMismatch):
        McConfig(n_paths=0, horizon=1.0, dt=0.01)
    with pytest.raises(DeclarationMismatch):
        McConfig(n_paths=10, horizon=0.0, dt=0.01)
    with pytest.raises(DeclarationMismatch):
        McConfig(n_paths=10, horizon=1.0, dt=-0.1)
    with pytest.raises(DeclarationMismatch):
        McConfig(n_paths=10, horizon=1.0, dt=0.01, n_workers=0)


def test_compile_expr_matches_symbolic_evaluation(cir):
    ctx = cir.sde.ctx
    e = parse_expr("a*x + s^2*sqrt(x)*exp(-a*z) + b/2", ctx)
    pv = (1.3, 0.7, 0.4)
    fn = compile_expr(e, pv)
    pts = np.array([[0.5, 0.2], [2.0, 1.5], [1.0, 0.0]])
    got = fn(pts)
    for row, val in zip(pts, got):
        want = e.eval_numeric({"x": row[0], "z": row[1]},
                              {"a": pv[0], "b": pv[1], "s": pv[2]})
        assert math.isclose(val, want, rel_tol=1e-14)


def test_brownian_moments(bm1d):
    cfg = McConfig(n_paths=20000, horizon=1.0, dt=0.01, seed=5)
    ens = simulate(bm1d.sde, cfg, {}, (0.0, 0.0))
    assert ens.times == (1.0,)
    x = ens.column("x", 1.0)
    assert np.all(ens.log_weights == 0.0)
    mean = weighted_moments(x)
    assert abs(mean.z_against(0.0)) < 4.0
    second = weighted_moments(x ** 2)
    assert abs(second.z_against(1.0)) < 4.0
    z = ens.column("z", 1.0)
    assert np.allclose(z, 1.0, atol=1e-12)


def test_mean_reversion_matches_closed_form(ou):
    cfg = McConfig(n_paths=20000, horizon=1.0, dt=0.01, seed=11)
    ens = simulate(ou.sde, cfg, {"a": -1.0, "b": 0.0}, (1.0, 0.0))
    x = ens.column("x", 1.0)
    mean = weighted_moments(x)
    assert abs(mean.z_against(math.exp(-1.0))) < 4.0


def test_worker_count_does_not_change_results(bm1d):
    base = None
    for workers in (1, 2, 8):
        cfg = McConfig(n_paths=3000, horizon=0.5, dt=0.01, seed=9,
                       n_workers=workers)
        ens = simulate(bm1d.sde, cfg, {}, (0.0, 0.0), h=_unit_h(bm1d.sde))
        if base is None:
            base = ens
        else:
            assert np.array_equal(base.states, ens.states)
            assert np.array_equal(base.log_weights, ens.log_weights)


def test_ensemble_prefix_is_stable_in_path_count(bm1d):
    cfg_small = McConfig(n_paths=1500, horizon=0.5, dt=0.01, seed=21)
    cfg_large = McConfig(n_paths=3000, horizon=0.5, dt=0.01, seed=21)
    small = simulate(bm1d.sde, cfg_small, {}, (0.0, 0.0))
    large = simulate(bm1d.sde, cfg_large, {}, (0.0, 0.0))
    assert np.array_equal(small.states, large.states[:1500])


def test_requested_times_are_recorded(bm1d):
    cfg = McConfig(n_paths=256, horizon=1.0, dt=0.01, seed=2)
    ens = simulate(bm1d.sde, cfg, {}, (0.0, 0.0), eval_times=(0.0, 0.25, 1.0))
    assert ens.times == (0.0, 0.25, 1.0)
    assert np.all(ens.states[:, 0, 0] == 0.0)
    with pytest.raises(DeclarationMismatch):
        simulate(bm1d.sde, cfg, {}, (0.0, 0.0), eval_times=(0.5, 0.5))
    with pytest.raises(DeclarationMismatch):
        ens.column("x", 0.7)
    with pytest.raises(DeclarationMismatch):
        ens.column("w", 1.0)


def test_unreachable_times_raise(bm1d):
    cfg = McConfig(n_paths=64, horizon=1.0, dt=0.01, seed=2)
    with pytest.raises(ClockTooShort):
        simulate(bm1d.sde, cfg, {}, (0.0, 0.0), eval_times=(1.5,))


def test_girsanov_weights(bm1d):
    cfg = McConfig(n_paths=20000, horizon=1.0, dt=0.01, seed=13)
    ens = simulate(bm1d.sde, cfg, {}, (0.0, 0.0), h=_unit_h(bm1d.sde))
    diag = weight_diagnostics(ens.log_weights)
    assert abs(diag.z_against(1.0)) < 4.0
    # under the reweighted measure the compensated state is standard normal
    x = ens.column("x", 1.0) - 1.0
    mean = weighted_moments(x, ens.log_weights)
    assert abs(mean.z_against(0.0)) < 4.0
    second = weighted_moments(x ** 2, ens.log_weights)
    assert abs(second.z_against(1.0)) < 4.0


def test_weighted_ensemble_agrees_with_direct_drift(bm1d):
    ctx = bm1d.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    cfg = McConfig(n_paths=16384, horizon=1.0, dt=0.01, seed=17)
    weighted = simulate(bm1d.sde, cfg, {}, (0.0, 0.0), h=_unit_h(bm1d.sde))
    drifted = Sde(ctx=ctx, drift=(pe("1"), pe("1")),
                  diffusion=bm1d.sde.diffusion, nonexplosive=True)
    cfg_b = McConfig(n_paths=16384, horizon=1.0, dt=0.01, seed=18)
    direct = simulate(drifted, cfg_b, {}, (0.0, 0.0))
    rep = weak_compare(weighted.column("x", 1.0), weighted.log_weights,
                       direct.column("x", 1.0))
    assert rep.passed
    # ignoring the weights leaves a unit mean shift that the test must catch
    bad = weak_compare(weighted.column("x", 1.0), None,
                       direct.column("x", 1.0))
    assert not bad.passed
    assert abs(bad.moment_z[0]) > 10.0


def test_transform_recording_matches_map_of_plain_run(bm1d):
    cfg = McConfig(n_paths=4096, horizon=1.0, dt=0.01, seed=23)
    shear = bm1d.transform("shear").transform
    mapped = simulate(bm1d.sde, cfg, {}, (0.0, 0.0), transform=shear,
                      eval_times=(0.5, 1.0))
    plain = simulate(bm1d.sde, cfg, {}, (0.0, 0.0), eval_times=(0.5, 1.0))
    for t in (0.5, 1.0):
        want = plain.column("x", t) + plain.column("z", t)
        assert np.allclose(mapped.column("x", t), want, atol=1e-9)
    # the attached drift shift populates the weights
    assert not np.all(mapped.log_weights == 0.0)


def test_time_change_rescales_the_clock(bm1d):
    cfg = McConfig(n_paths=512, horizon=1.0, dt=0.01, seed=3)
    quad = bm1d.transform("time_scale_4").transform
    ens = simulate(bm1d.sde, cfg, {}, (0.0, 0.0), transform=quad,
                   eval_times=(2.0, 3.9))
    assert np.allclose(ens.clock_final, 4.0, atol=1e-9)
    x2 = ens.column("x", 2.0)
    second = weighted_moments(x2 ** 2)
    # X' at new-clock time 2 is 2 * W_{1/2}, variance 4 * 1/2
    assert abs(second.z_against(2.0)) < 4.0
    with pytest.raises(ClockTooShort):
        simulate(bm1d.sde, cfg, {}, (0.0, 0.0), transform=quad,
                 eval_times=(4.5,))


def test_transform_and_h_are_mutually_exclusive(bm1d):
    cfg = McConfig(n_paths=16, horizon=0.1, dt=0.01)
    shear = bm1d.transform("shear").transform
    with pytest.raises(DeclarationMismatch):
        simulate(bm1d.sde, cfg, {}, (0.0, 0.0), transform=shear,
                 h=_unit_h(bm1d.sde))


def test_explosive_models_are_refused(bm1d):
    ctx = bm1d.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    wild = Sde(ctx=ctx, drift=(pe("x^3"), pe("1")),
               diffusion=bm1d.sde.diffusion, nonexplosive=False)
    with pytest.raises(NonExplosiveRequired):
        simulate(wild, McConfig(n_paths=8, horizon=0.1, dt=0.01), {},
                 (0.0, 0.0))


def test_domain_exit_on_boundary():
    ctx = Context(variables=("x", "z"), time_var="z",
                  bounds=((0.0, float("inf")), (-float("inf"), float("inf"))))
    pe = lambda t: parse_expr(t, ctx)
    falling = Sde(ctx=ctx, drift=(pe("-10"), pe("1")),
                  diffusion=((pe("0"),), (pe("0"),)), nonexplosive=True)
    cfg = McConfig(n_paths=4, horizon=1.0, dt=0.1, seed=1)
    with pytest.raises(DomainExit) as err:
        simulate(falling, cfg, {}, (0.5, 0.0))
    assert err.value.component == "x"
    assert err.value.t == pytest.approx(0.1)
    assert err.value.path_id == 0


@pytest.mark.filterwarnings("ignore:overflow")
def test_domain_exit_on_overflow(bm1d):
    ctx = bm1d.sde.ctx
    pe = lambda t: parse_expr(t, ctx)
    wild = Sde(ctx=ctx, drift=(pe("x^3"), pe("1")),
               diffusion=((pe("0"),), (pe("0"),)), nonexplosive=True)
    with pytest.raises(DomainExit):
        simulate(wild, McConfig(n_paths=4, horizon=8.0, dt=1.0), {},
                 (10.0, 0.0))


def test_weighted_moment_formulas():
    values = np.array([1.0, 2.0, 3.0])
    logw = np.array([0.0, 0.0, math.log(2.0)])
    est = weighted_moments(values, logw)
    assert est.value == pytest.approx(2.25)
    assert est.se == pytest.approx(math.sqrt(3.875) / 4.0)
    assert est.n_eff == pytest.approx(16.0 / 6.0)
    flat = weighted_moments(values)
    assert flat.value == pytest.approx(2.0)
    assert effective_size(None, 3) == 3.0
    assert effective_size(logw, 3) == pytest.approx(16.0 / 6.0)


def test_kolmogorov_tail_reference_values():
    assert kolmogorov_tail(0.05) == pytest.approx(1.0, abs=1e-9)
    # classical 5% critical value of the two-sample statistic
    assert kolmogorov_tail(1.358) == pytest.approx(0.05, abs=2e-3)
    grid = [0.3, 0.6, 0.9, 1.2, 1.5, 2.0]
    vals = [kolmogorov_tail(l) for l in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert kolmogorov_tail(3.0) < 1e-7


def test_weak_compare_detects_and_accepts(bm1d):
    cfg_a = McConfig(n_paths=8192, horizon=1.0, dt=0.02, seed=31)
    cfg_b = McConfig(n_paths=8192, horizon=1.0, dt=0.02, seed=32)
    a = simulate(bm1d.sde, cfg_a, {}, (0.0, 0.0)).column("x", 1.0)
    b = simulate(bm1d.sde, cfg_b, {}, (0.0, 0.0)).column("x", 1.0)
    same = weak_compare(a, None, b)
    assert same.passed
    assert same.n_eff_a == pytest.approx(8192.0)
    shifted = weak_compare(a + 0.5, None, b)
    assert not shifted.passed
    assert abs(shifted.moment_z[0]) > 10.0
    assert shifted.ks_p_value < 1e-3


def test_pathwise_identity_for_gradient_pair(bm1d):
    sde = bm1d.sde
    nt = bm1d.transform("girsanov_unit")
    recipe = density_recipe(sde, nt.transform.h,
                            parse_expr(nt.potential_text, sde.ctx))
    cfg = McConfig(n_paths=2048, horizon=1.0, dt=0.01, seed=41)
    gap = doob_pathwise_gap(sde, recipe, cfg, {}, (0.0, 0.0))
    assert gap.n_paths == 2048
    assert gap.max_gap < 1e-12


def test_pathwise_identity_requires_a_potential(bm1d):
    sde = bm1d.sde
    recipe = density_recipe(sde, bm1d.transform("girsanov_unit").transform.h)
    cfg = McConfig(n_paths=64, horizon=0.1, dt=0.01)
    with pytest.raises(PotentialMissing):
        doob_pathwise_gap(sde, recipe, cfg, {}, (0.0, 0.0))


def test_csv_dump_matches_ensemble_bitwise(bm1d):
    sde = bm1d.sde
    cfg = McConfig(n_paths=CHUNK_PATHS + 64, horizon=0.2, dt=0.02, seed=51)
    ens = simulate(sde, cfg, {}, (0.0, 0.0), h=_unit_h(sde))
    buf = io.StringIO()
    ids = (0, 3, CHUNK_PATHS + 5)
    rows = dump_paths_csv(sde, cfg, {}, (0.0, 0.0), ids, buf, h=_unit_h(sde))
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "path_id,t,x,z,log_weight"
    assert rows == len(ids) * (cfg.n_steps + 1)
    assert len(lines) == rows + 1
    finals = {}
    for line in lines[1:]:
        pid, t, x, _z, lw = line.split(",")
        if float(t) == cfg.horizon:
            finals[int(pid)] = (float(x), float(lw))
    for pid in ids:
        want_x = ens.column("x", cfg.horizon)[pid]
        want_lw = ens.log_weights[pid]
        assert finals[pid][0] == want_x
        assert finals[pid][1] == want_lw


def test_csv_dump_rejects_bad_ids(bm1d):
    cfg = McConfig(n_paths=16, horizon=0.1, dt=0.01)
    with pytest.raises(DeclarationMismatch):
        dump_paths_csv(bm1d.sde, cfg, {}, (0.0, 0.0), (16,), io.StringIO())
