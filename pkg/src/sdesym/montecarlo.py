"""Monte Carlo verification of measure-change claims by Euler--Maruyama.

The simulator integrates an Ito model forward with the explicit Euler scheme
and evaluates ensemble statistics that the exact layer predicts: Girsanov
reweighting identities, agreement in law between a transformed ensemble and a
freshly simulated one, and pathwise equality of the exponential density with
its closed form when a gradient pair is attached.

Paths are generated in fixed ``CHUNK_PATHS``-sized blocks, each driven by its
own counter-based stream keyed by ``(seed, chunk index)``.  Every statistic is
folded over chunks in index order, so results are bit-identical for any worker
count and any ensemble size, and any block of paths can be re-simulated later
(for example to dump selected trajectories) without storing them.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .doob import DensityRecipe
from .errors import (ClockTooShort, DeclarationMismatch, DomainExit,
                     NonExplosiveRequired, PotentialMissing)
from .expr import Expr
from .sde import Sde
from .transform import FiniteTransform

CHUNK_PATHS = 1024

# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class McConfig:
    """Ensemble size, time grid, stream seed, and worker count."""

    n_paths: int
    horizon: float
    dt: float
    seed: int = 0
    n_workers: int = 1

    def __post_init__(self):
        if self.n_paths <= 0:
            raise DeclarationMismatch("n_paths must be positive")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise DeclarationMismatch("dt must be a positive finite float")
        if self.horizon < self.dt:
            raise DeclarationMismatch("horizon must cover at least one step")
        if self.seed < 0:
            raise DeclarationMismatch("seed must be a non-negative integer")
        if self.n_workers <= 0:
            raise DeclarationMismatch("n_workers must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def n_chunks(self) -> int:
        return -(-self.n_paths // CHUNK_PATHS)


# ---------------------------------------------------------------------------
# compiled expressions: exact terms -> vectorized float closures


def _param_values(ctx, params: dict[str, float]) -> tuple[float, ...]:
    missing = [p for p in ctx.parameters if p not in params]
    if missing:
        raise DeclarationMismatch(f"missing parameter values: {missing}")
    extra = [p for p in params if p not in ctx.parameters]
    if extra:
        raise DeclarationMismatch(f"unknown parameter values: {extra}")
    return tuple(float(params[p]) for p in ctx.parameters)


def compile_expr(e: Expr, pvalues: tuple[float, ...]):
    """Return ``f(x)`` evaluating ``e`` on a state block of shape (p, nvars).

    Parameter values are folded into the term constants at compile time; the
    returned closure touches only the state columns the expression mentions.
    """
    terms = []
    for mono, coef in e.terms:
        c = coef.eval(pvalues)
        pows = tuple((i, float(q)) for i, q in mono.powers)
        slopes = tuple((i, s.eval(pvalues)) for i, s in mono.expf)
        terms.append((c, pows, slopes))

    def fn(x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[0])
        for c, pows, slopes in terms:
            t = np.full(x.shape[0], c)
            for i, q in pows:
                t = t * x[:, i] ** q
            if slopes:
                arg = np.zeros(x.shape[0])
                for i, s in slopes:
                    arg += s * x[:, i]
                t = t * np.exp(arg)
            out += t
        return out

    return fn


@dataclass(frozen=True)
class _CompiledModel:
    """Everything a chunk pass needs, precompiled and read-only."""

    n: int
    m: int
    drift: tuple  # (component index, closure) for nonzero drift entries
    sigma: tuple  # (row, column, closure) for nonzero diffusion entries
    walls: tuple  # (component index, lo, hi) for finite declared bounds
    names: tuple[str, ...]


def _compile_model(sde: Sde, pvalues: tuple[float, ...]) -> _CompiledModel:
    drift = tuple((i, compile_expr(e, pvalues))
                  for i, e in enumerate(sde.drift) if not e.is_zero)
    sigma = tuple((i, a, compile_expr(sde.diffusion[i][a], pvalues))
                  for i in range(sde.n) for a in range(sde.m)
                  if not sde.diffusion[i][a].is_zero)
    walls = tuple((i, lo, hi) for i, (lo, hi) in enumerate(sde.ctx.bounds)
                  if math.isfinite(lo) or math.isfinite(hi))
    return _CompiledModel(n=sde.n, m=sde.m, drift=drift, sigma=sigma,
                          walls=walls, names=tuple(sde.ctx.variables))


def _check_domain(model: _CompiledModel, x: np.ndarray, base_id: int, t: float):
    for i, lo, hi in model.walls:
        col = x[:, i]
        bad = ~((col > lo) & (col < hi))
        if bad.any():
            j = int(np.argmax(bad))
            raise DomainExit(base_id + j, t, model.names[i])
    if not np.isfinite(x).all():
        j, i = np.argwhere(~np.isfinite(x))[0]
        raise DomainExit(base_id + int(j), t, model.names[int(i)])


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class Ensemble:
    """States recorded at requested clock times, with log importance weights.

    ``states[j, k, i]`` is coordinate ``labels[i]`` of path ``j`` at clock
    time ``times[k]``; without a transform the clock is physical time.
    ``log_weights`` is zero unless a drift shift was attached.
    """

    times: tuple[float, ...]
    labels: tuple[str, ...]
    states: np.ndarray
    log_weights: np.ndarray
    clock_final: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def column(self, label: str, time: float) -> np.ndarray:
        try:
            ti = self.times.index(time)
        except ValueError:
            raise DeclarationMismatch(
                f"time {time} was not recorded; have {self.times}") from None
        try:
            vi = self.labels.index(label)
        except ValueError:
            raise DeclarationMismatch(
                f"unknown coordinate {label!r}; have {self.labels}") from None
        return self.states[:, ti, vi]


def simulate(sde: Sde, cfg: McConfig, params: dict[str, float],
             x0: tuple[float, ...], *,
             h: tuple[Expr, ...] | None = None,
             transform: FiniteTransform | None = None,
             eval_times: tuple[float, ...] | None = None) -> Ensemble:
    """Euler--Maruyama ensemble of the model, optionally reweighted or mapped.

    With ``h`` the exponential density of the drift shift is accumulated in
    the log domain along each path.  With ``transform`` the recorded states
    are the mapped coordinates read against the rescaled clock (the running
    integral of the rate entry), ``h`` is taken from the transform, and
    evaluation times refer to the new clock; a path whose final clock falls
    short of a requested time raises ``ClockTooShort``.
    """
    ctx = sde.ctx
    if not sde.nonexplosive:
        raise NonExplosiveRequired(
            "simulation needs a model declared non-explosive")
    pvalues = _param_values(ctx, params)
    if len(x0) != sde.n:
        raise DeclarationMismatch(f"x0 has {len(x0)} entries for {sde.n} variables")
    if transform is not None:
        if h is not None:
            raise DeclarationMismatch("pass either h or a transform, not both")
        transform.ctx.require_same(ctx)
        h = transform.h
    if h is not None:
        if len(h) != sde.m:
            raise DeclarationMismatch(f"h has {len(h)} entries for {sde.m} noises")
        for e in h:
            e.ctx.require_same(ctx)
    if eval_times is None:
        eval_times = (cfg.horizon,)
    times = tuple(float(t) for t in eval_times)
    if any(t < 0.0 for t in times) or list(times) != sorted(set(times)):
        raise DeclarationMismatch("eval times must be distinct, ascending, >= 0")

    model = _compile_model(sde, pvalues)
    h_fns = None if h is None else [compile_expr(e, pvalues) for e in h]
    eta_fn = None
    rec_fns = None
    if transform is not None:
        eta_fn = compile_expr(transform.eta, pvalues)
        rec_fns = [compile_expr(e, pvalues) for e in transform.phi]

    x0_arr = np.asarray(x0, dtype=float)
    dt = cfg.dt
    sqrt_dt = math.sqrt(dt)
    n_steps = cfg.n_steps

    def record(x: np.ndarray) -> np.ndarray:
        if rec_fns is None:
            return x.copy()
        return np.stack([fn(x) for fn in rec_fns], axis=1)

    def run_chunk(ci: int):
        base = ci * CHUNK_PATHS
        p = min(CHUNK_PATHS, cfg.n_paths - base)
        rng = np.random.Generator(
            np.random.Philox(key=np.array([cfg.seed, ci], dtype=np.uint64)))
        x = np.tile(x0_arr, (p, 1))
        _check_domain(model, x, base, 0.0)
        clock = np.zeros(p)
        logw = np.zeros(p)
        prev_rec = record(x)
        rec = np.zeros((p, len(times), model.n))
        done = np.zeros((p, len(times)), dtype=bool)
        for k, tq in enumerate(times):
            if tq == 0.0:
                rec[:, k, :] = prev_rec
                done[:, k] = True
        for step in range(n_steps):
            xi = rng.standard_normal((CHUNK_PATHS, model.m))[:p]
            dw = sqrt_dt * xi
            if h_fns is not None:
                hv = np.stack([fn(x) for fn in h_fns], axis=1)
                logw += (hv * dw).sum(axis=1) - 0.5 * dt * (hv * hv).sum(axis=1)
            new_x = x.copy()
            for i, fn in model.drift:
                new_x[:, i] += fn(x) * dt
            for i, a, fn in model.sigma:
                new_x[:, i] += fn(x) * dw[:, a]
            _check_domain(model, new_x, base, (step + 1) * dt)
            if eta_fn is not None:
                rate = eta_fn(x)
                if not (rate > 0.0).all():
                    j = int(np.argmax(~(rate > 0.0)))
                    raise DomainExit(base + j, (step + 1) * dt, "eta")
                new_clock = clock + rate * dt
            else:
                # exact grid time, immune to additive drift of repeated += dt
                new_clock = np.full(p, (step + 1) * dt)
            cur_rec = record(new_x)
            for k, tq in enumerate(times):
                hit = ~done[:, k] & (new_clock >= tq)
                if hit.any():
                    frac = (tq - clock[hit]) / (new_clock[hit] - clock[hit])
                    rec[hit, k, :] = (prev_rec[hit]
                                      + frac[:, None] * (cur_rec[hit] - prev_rec[hit]))
                    done[hit, k] = True
            x, clock, prev_rec = new_x, new_clock, cur_rec
        for k, tq in enumerate(times):
            # a rescaled clock accumulates roundoff; treat a relative-epsilon
            # shortfall at the end of the run as having reached the target
            close = ~done[:, k] & (tq - clock <= 1e-9 * max(1.0, abs(tq)))
            if close.any():
                rec[close, k, :] = prev_rec[close]
                done[close, k] = True
        if not done.all():
            j, k = np.argwhere(~done)[0]
            raise ClockTooShort(
                f"eval time {times[int(k)]} exceeds the final clock "
                f"{clock[int(j)]:.6g} of path {base + int(j)}")
        return rec, logw, clock

    outs = _map_chunks(run_chunk, cfg)
    return Ensemble(times=times, labels=model.names,
                    states=np.concatenate([o[0] for o in outs]),
                    log_weights=np.concatenate([o[1] for o in outs]),
                    clock_final=np.concatenate([o[2] for o in outs]))


def _map_chunks(run_chunk, cfg: McConfig) -> list:
    indices = range(cfg.n_chunks)
    if cfg.n_workers == 1:
        return [run_chunk(i) for i in indices]
    with ThreadPoolExecutor(max_workers=cfg.n_workers) as pool:
        return list(pool.map(run_chunk, indices))


# ---------------------------------------------------------------------------
# weighted sample statistics


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    se: float
    n_eff: float

    def z_against(self, target: float) -> float:
        if self.se == 0.0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.se


def _weights(log_weights: np.ndarray | None, n: int) -> np.ndarray:
    if log_weights is None:
        return np.ones(n)
    w = np.exp(log_weights - np.max(log_weights))
    return w


def effective_size(log_weights: np.ndarray | None, n: int) -> float:
    w = _weights(log_weights, n)
    return float(w.sum() ** 2 / (w * w).sum())


def weighted_moments(values: np.ndarray,
                     log_weights: np.ndarray | None = None) -> MomentEstimate:
    """Self-normalized importance estimate of the mean with a delta-method SE."""
    values = np.asarray(values, dtype=float)
    w = _weights(log_weights, len(values))
    total = w.sum()
    mean = float((w * values).sum() / total)
    se = float(math.sqrt(((w * (values - mean)) ** 2).sum()) / total)
    return MomentEstimate(value=mean, se=se,
                          n_eff=float(total ** 2 / (w * w).sum()))


def weight_diagnostics(log_weights: np.ndarray) -> MomentEstimate:
    """Plain (unnormalized) mean of the weights, which must estimate one."""
    w = np.exp(np.asarray(log_weights, dtype=float))
    n = len(w)
    mean = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MomentEstimate(value=mean, se=se, n_eff=float(n))


def kolmogorov_tail(lam: float) -> float:
    """Tail of the Kolmogorov distribution, 2*sum (-1)^(k-1) exp(-2 k^2 lam^2)."""
    if lam <= 0.0:
        return 1.0
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, total))


def _ecdf_on(values: np.ndarray, weights: np.ndarray, grid: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    v = values[order]
    cw = np.cumsum(weights[order])
    cw /= cw[-1]
    idx = np.searchsorted(v, grid, side="right")
    return np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)


@dataclass(frozen=True)
class WeakCompareReport:
    """Two-ensemble agreement in law: weighted KS test plus moment z-scores."""

    ks_statistic: float
    ks_p_value: float
    n_eff_a: float
    n_eff_b: float
    moment_z: tuple[float, ...]
    p_threshold: float
    z_threshold: float

    @property
    def passed(self) -> bool:
        return (self.ks_p_value >= self.p_threshold
                and all(abs(z) <= self.z_threshold for z in self.moment_z))


def weak_compare(values_a: np.ndarray, logw_a: np.ndarray | None,
                 values_b: np.ndarray, logw_b: np.ndarray | None = None, *,
                 moment_orders: tuple[int, ...] = (1, 2),
                 p_threshold: float = 1e-3,
                 z_threshold: float = 4.0) -> WeakCompareReport:
    """Compare two (possibly weighted) scalar ensembles in distribution.

    The KS statistic uses weighted empirical distribution functions and the
    asymptotic tail with both sample sizes replaced by effective sizes; the
    moment z-scores compare self-normalized means of ``x**r``.
    """
    va = np.asarray(values_a, dtype=float)
    vb = np.asarray(values_b, dtype=float)
    wa = _weights(logw_a, len(va))
    wb = _weights(logw_b, len(vb))
    grid = np.sort(np.concatenate([va, vb]), kind="stable")
    d = float(np.max(np.abs(_ecdf_on(va, wa, grid) - _ecdf_on(vb, wb, grid))))
    na = float(wa.sum() ** 2 / (wa * wa).sum())
    nb = float(wb.sum() ** 2 / (wb * wb).sum())
    ne = na * nb / (na + nb)
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * d
    zs = []
    for r in moment_orders:
        ma = weighted_moments(va ** r, logw_a)
        mb = weighted_moments(vb ** r, logw_b)
        spread = math.hypot(ma.se, mb.se)
        if spread == 0.0:
            zs.append(0.0 if ma.value == mb.value else math.inf)
        else:
            zs.append((ma.value - mb.value) / spread)
    return WeakCompareReport(ks_statistic=d, ks_p_value=kolmogorov_tail(lam),
                             n_eff_a=na, n_eff_b=nb, moment_z=tuple(zs),
                             p_threshold=p_threshold, z_threshold=z_threshold)


# ---------------------------------------------------------------------------
# pathwise density check for gradient pairs


@dataclass(frozen=True)
class PathwiseGap:
    """Per-path distance between the accumulated log density and its closed form."""

    max_gap: float
    mean_gap: float
    n_paths: int


def doob_pathwise_gap(sde: Sde, recipe: DensityRecipe, cfg: McConfig,
                      params: dict[str, float],
                      x0: tuple[float, ...]) -> PathwiseGap:
    """Simulate under the base measure and compare the exponential density
    accumulated from the drift shift against ``exp(potential(X_T) - potential(X_0))``.

    Requires a recipe whose potential survived the gradient-pair check; the
    gap is the scheme's discretization error and shrinks linearly in ``dt``
    (it is float-roundoff-sized when both sides accumulate the same sums).
    """
    if recipe.doob_potential is None:
        raise PotentialMissing("recipe has no attached potential; "
                               + "; ".join(recipe.notes or ("none declared",)))
    ens = simulate(sde, cfg, params, x0, h=recipe.theta,
                   eval_times=(cfg.horizon,))
    pvalues = _param_values(sde.ctx, params)
    pot_fn = compile_expr(recipe.doob_potential, pvalues)
    final = ens.states[:, 0, :]
    pot0 = pot_fn(np.asarray([x0], dtype=float))[0]
    gaps = np.abs(ens.log_weights - (pot_fn(final) - pot0))
    return PathwiseGap(max_gap=float(gaps.max()), mean_gap=float(gaps.mean()),
                       n_paths=ens.n_paths)


# ---------------------------------------------------------------------------
# trajectory dump


def dump_paths_csv(sde: Sde, cfg: McConfig, params: dict[str, float],
                   x0: tuple[float, ...], path_ids: tuple[int, ...],
                   stream, *, h: tuple[Expr, ...] | None = None) -> int:
    """Re-simulate the chunks containing ``path_ids`` and write those paths.

    Rows are ``path_id, t, <variables...>, log_weight`` on the physical time
    grid; values agree bit for bit with any ensemble run of the same seed.
    Returns the number of rows written.
    """
    ctx = sde.ctx
    pvalues = _param_values(ctx, params)
    for pid in path_ids:
        if not 0 <= pid < cfg.n_paths:
            raise DeclarationMismatch(f"path id {pid} outside 0..{cfg.n_paths - 1}")
    model = _compile_model(sde, pvalues)
    h_fns = None if h is None else [compile_expr(e, pvalues) for e in h]
    if h is not None and len(h) != sde.m:
        raise DeclarationMismatch(f"h has {len(h)} entries for {sde.m} noises")
    writer = csv.writer(stream)
    writer.writerow(["path_id", "t"] + list(ctx.variables) + ["log_weight"])
    x0_arr = np.asarray(x0, dtype=float)
    dt = cfg.dt
    sqrt_dt = math.sqrt(dt)
    rows = 0
    wanted: dict[int, list[int]] = {}
    for pid in sorted(set(path_ids)):
        wanted.setdefault(pid // CHUNK_PATHS, []).append(pid % CHUNK_PATHS)
    for ci, locals_ in wanted.items():
        base = ci * CHUNK_PATHS
        p = min(CHUNK_PATHS, cfg.n_paths - base)
        rng = np.random.Generator(
            np.random.Philox(key=np.array([cfg.seed, ci], dtype=np.uint64)))
        x = np.tile(x0_arr, (p, 1))
        logw = np.zeros(p)
        traj = {j: [(0.0, x[j].copy(), 0.0)] for j in locals_}
        for step in range(cfg.n_steps):
            xi = rng.standard_normal((CHUNK_PATHS, model.m))[:p]
            dw = sqrt_dt * xi
            if h_fns is not None:
                hv = np.stack([fn(x) for fn in h_fns], axis=1)
                logw += (hv * dw).sum(axis=1) - 0.5 * dt * (hv * hv).sum(axis=1)
            new_x = x.copy()
            for i, fn in model.drift:
                new_x[:, i] += fn(x) * dt
            for i, a, fn in model.sigma:
                new_x[:, i] += fn(x) * dw[:, a]
            _check_domain(model, new_x, base, (step + 1) * dt)
            x = new_x
            t = (step + 1) * dt
            for j in locals_:
                traj[j].append((t, x[j].copy(), logw[j]))
        for j in locals_:
            for t, state, lw in traj[j]:
                writer.writerow([base + j, f"{t:.12g}"]
                                + [f"{v:.17g}" for v in state]
                                + [f"{lw:.17g}"])
                rows += 1
    return rows
