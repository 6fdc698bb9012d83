"""Command-line front end: a thin client over the JSON service.

Every command builds a request, sends it to the service (an in-process app
by default, or a remote base URL via ``--server``), and renders the returned
report.  The exit status is 0 exactly when every requested verdict passed.
"""

from __future__ import annotations

import asyncio
import json
import os
from pathlib import Path

import click
import httpx

from . import __version__
from .service import create_app

_app = None


def _inprocess_app():
    """Build the app once per process, running the catalog self-test first
    (the same gate a served instance runs during startup)."""
    global _app
    if _app is None:
        from . import catalog

        catalog.self_test()
        _app = create_app()
    return _app


def _model_payload(model: str) -> dict:
    path = Path(model)
    if path.suffix == ".model" or path.exists():
        try:
            return {"model_text": path.read_text()}
        except OSError as exc:
            raise click.ClickException(f"cannot read model file: {exc}") from exc
    return {"model": model}


async def _asgi_request(method: str, path: str, payload: dict | None):
    transport = httpx.ASGITransport(app=_inprocess_app())
    async with httpx.AsyncClient(transport=transport, timeout=600.0,
                                 base_url="http://sdesym.local") as client:
        if method == "GET":
            return await client.get(path, params=payload or {})
        return await client.post(path, json=payload or {})


def _request(obj: dict, method: str, path: str, payload: dict | None = None,
             raw: bool = False):
    if obj["server"]:
        with httpx.Client(base_url=obj["server"], timeout=600.0) as client:
            if method == "GET":
                resp = client.get(path, params=payload or {})
            else:
                resp = client.post(path, json=payload or {})
    else:
        resp = asyncio.run(_asgi_request(method, path, payload))
    if resp.status_code in (404, 422):
        detail = resp.json().get("detail", resp.text)
        raise click.ClickException(str(detail))
    resp.raise_for_status()
    return resp.text if raw else resp.json()


def _emit(obj: dict, doc: dict) -> None:
    if obj["json"]:
        click.echo(json.dumps(doc, indent=2))
        return
    for section in doc["sections"]:
        _render_section(section)
    status = "PASS" if doc["passed"] else "FAIL"
    click.echo(f"overall: {status}")


def _finish(obj: dict, doc: dict) -> None:
    _emit(obj, doc)
    if not doc["passed"]:
        raise SystemExit(1)


def _flag(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _render_section(s: dict) -> None:
    kind = s["kind"]
    if kind == "residuals":
        worst = max((ln["worst_abs_probe"] or 0.0 for ln in s["lines"]
                     if not ln["informational"]), default=0.0)
        click.echo(f"check {s['model']} {s['symmetry']} [{s['system']}]: "
                   f"{_flag(s['passed'])} (worst |residual| {worst:.2e}, "
                   f"{s['n_probes']} probes, tol {s['tol']:g})")
        for ln in s["lines"]:
            if not ln["zero"] and not ln["informational"]:
                click.echo(f"  nonzero {ln['label']}: {ln['residual_text']}")
    elif kind == "classification":
        extra = ""
        if s["k"] is not None:
            extra += f" k = {s['k']}"
        if s["generator_residual"] is not None:
            extra += f" with generator residual {s['generator_residual']}"
        if s["witness"]:
            extra += f" witness ({', '.join(s['witness'])})"
        if s["free_vars"]:
            extra += f" [k free in {', '.join(s['free_vars'])}]"
        click.echo(f"classify {s['model']} {s['symmetry']}: {s['verdict']}{extra}")
        if not s["symmetry_holds"]:
            click.echo("  note: the quadruple is not a symmetry of the model")
    elif kind == "bridge":
        if s["direction"] == "sde_to_pde":
            p = s["pde"]
            click.echo(f"bridge {s['model']} {s['symmetry']} -> PDE generator: "
                       f"m = {p['m']}; phi = [{', '.join(p['phi'])}]; "
                       f"k = {p['k']} (round trip {_flag(s['round_trip'])})")
        else:
            q = s["quadruple"]
            click.echo(f"bridge {s['model']} {s['symmetry']} -> quadruple: "
                       f"Y = [{', '.join(q['y'])}]; tau = {q['tau']}; "
                       f"H = [{', '.join(q['h'])}]; k = {q['k']} "
                       f"(matches original: {_flag(s['round_trip'])})")
    elif kind == "solve":
        line = f"solve {s['model']} [{s['mode']}]: dimension {s['dimension']}"
        if s["closure"] is not None:
            line += f", closed={s['closure']['closed']}"
        if s["jacobi_ok"] is not None:
            line += f", jacobi={s['jacobi_ok']}"
        click.echo(line)
        for m in s["members"]:
            k_part = f"; k = {m['k']}" if m["k"] else ""
            click.echo(f"  {m['name']}: Y = [{', '.join(m['y'])}]; "
                       f"tau = {m['tau']}; H = [{', '.join(m['h'])}]{k_part}")
        if s["closure"] is not None and not s["closure"]["closed"]:
            pairs = ", ".join(f"[{a}, {b}]" for a, b in s["closure"]["failed_pairs"])
            click.echo(f"  brackets outside the span: {pairs}")
    elif kind == "bracket":
        q = s["result"]
        click.echo(f"bracket {s['model']} [{s['left']}, {s['right']}]: "
                   f"Y = [{', '.join(q['y'])}]; tau = {q['tau']}; "
                   f"H = [{', '.join(q['h'])}] "
                   f"(symmetry: {_flag(s['is_symmetry'])})")
    elif kind == "mc":
        cfg = s["config"]
        click.echo(f"mc {s['model']} transform {s['transform']}: "
                   f"{_flag(s['passed'])} (N={cfg['n_paths']}, dt={cfg['dt']}, "
                   f"seed={cfg['seed']})")
        w = s["weight_check"]
        click.echo(f"  mean weight {w['estimate']:.4f} +- {w['se']:.4f} "
                   f"(z={w['z']:+.2f}) {_flag(w['passed'])}")
        for c in s["compares"]:
            zs = ", ".join(f"{z:+.2f}" for z in c["moment_z"])
            click.echo(f"  law of {c['coordinate']} at t'={c['eval_time']:g}: "
                       f"KS p={c['ks_p_value']:.3f}, moment z=[{zs}] "
                       f"{_flag(c['passed'])}")
        if s["pathwise"] is not None:
            p = s["pathwise"]
            click.echo(f"  pathwise density gap: max {p['max_gap']:.3e} "
                       f"(bound {p['bound']:.3e}, {p['n_paths']} paths) "
                       f"{_flag(p['passed'])}")
    elif kind == "catalog":
        click.echo(f"catalog: {', '.join(s['models'])} "
                   f"({s['named_symmetries']} named symmetries)")
        if s["problems"]:
            for p in s["problems"]:
                click.echo(f"  problem: {p}")
        else:
            click.echo(f"  verification: {_flag(s['passed'])}")


@click.group()
@click.version_option(__version__)
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service (default: in-process).")
@click.option("--json", "json_output", is_flag=True,
              help="Print the raw JSON report.")
@click.option("--threads", type=int, default=None, envvar="SDESYM_THREADS",
              help="Worker threads for simulation commands.")
@click.pass_context
def main(ctx, server, json_output, threads):
    """Symbolic-numeric symmetry analysis for Brownian-motion SDE models."""
    ctx.obj = {"server": server, "json": json_output,
               "threads": threads or int(os.environ.get("SDESYM_THREADS", "1"))}


@main.command()
@click.argument("model", metavar="MODEL")
@click.option("--symmetry", default=None, help="Check one named symmetry.")
@click.option("--all", "check_all", is_flag=True,
              help="Check every named symmetry (default when no --symmetry).")
@click.option("--mode", type=click.Choice(["general", "doob", "pde"]),
              default="general", show_default=True)
@click.option("--probes", type=int, default=25, show_default=True)
@click.option("--tol", type=float, default=1e-9, show_default=True)
@click.pass_obj
def check(obj, model, symmetry, check_all, mode, probes, tol):
    """Evaluate determining-equation residuals for named symmetries."""
    if symmetry is not None and check_all:
        raise click.UsageError("--symmetry and --all are mutually exclusive")
    payload = _model_payload(model) | {
        "symmetry": symmetry, "mode": mode, "n_probes": probes, "tol": tol}
    _finish(obj, _request(obj, "POST", "/v1/check", payload))


@main.command()
@click.argument("model", metavar="MODEL")
@click.option("--symmetry", required=True)
@click.pass_obj
def classify(obj, model, symmetry):
    """Place a named symmetry in the Doob taxonomy."""
    payload = _model_payload(model) | {"symmetry": symmetry}
    _finish(obj, _request(obj, "POST", "/v1/classify", payload))


@main.command()
@click.argument("model", metavar="MODEL")
@click.option("--symmetry", required=True)
@click.option("--reverse", is_flag=True,
              help="Descend from the PDE generator back to a quadruple.")
@click.pass_obj
def bridge(obj, model, symmetry, reverse):
    """Move a symmetry across the SDE/PDE correspondence."""
    payload = _model_payload(model) | {"symmetry": symmetry, "reverse": reverse}
    _finish(obj, _request(obj, "POST", "/v1/bridge", payload))


@main.command()
@click.argument("model", metavar="MODEL")
@click.option("--mode", type=click.Choice(["general", "doob"]),
              default="general", show_default=True)
@click.option("--basis", type=click.Path(exists=True), default=None,
              help="File with an [ansatz] section overriding the default basis.")
@click.option("--no-closure", is_flag=True, help="Skip the bracket-closure table.")
@click.pass_obj
def solve(obj, model, mode, basis, no_closure):
    """Solve the determining equations over the declared ansatz basis."""
    payload = _model_payload(model) | {"mode": mode, "closure": not no_closure}
    if basis is not None:
        payload["basis_text"] = Path(basis).read_text()
    _finish(obj, _request(obj, "POST", "/v1/solve", payload))


@main.command()
@click.argument("model", metavar="MODEL")
@click.option("--symmetry", "symmetries", multiple=True,
              help="Give exactly twice: left and right operand.")
@click.pass_obj
def bracket(obj, model, symmetries):
    """Lie bracket of two named symmetries."""
    if len(symmetries) != 2:
        raise click.UsageError("give --symmetry exactly twice")
    payload = _model_payload(model) | {"left": symmetries[0],
                                       "right": symmetries[1]}
    _finish(obj, _request(obj, "POST", "/v1/bracket", payload))


@main.command()
@click.argument("model", metavar="MODEL")
@click.option("--transform", required=True)
@click.option("--paths", type=int, default=None, help="Ensemble size.")
@click.option("--dt", type=float, default=None)
@click.option("--horizon", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--csv", "csv_file", type=click.Path(), default=None,
              help="Write selected trajectories to this CSV file.")
@click.option("--csv-paths", default="0,1,2,3",
              show_default=True, help="Comma-separated path ids for --csv.")
@click.pass_obj
def mc(obj, model, transform, paths, dt, horizon, seed, csv_file, csv_paths):
    """Verify a finite transform on simulated paths."""
    payload = _model_payload(model) | {
        "transform": transform, "n_workers": obj["threads"]}
    if paths is not None:
        payload["n_paths"] = paths
    if dt is not None:
        payload["dt"] = dt
    if horizon is not None:
        payload["horizon"] = horizon
    if seed is not None:
        payload["seed"] = seed
    if csv_file is not None:
        payload["csv_paths"] = [int(p) for p in csv_paths.split(",") if p]
    doc = _request(obj, "POST", "/v1/mc", payload)
    if csv_file is not None:
        text = doc["sections"][0].get("csv_text")
        if text:
            Path(csv_file).write_text(text)
            click.echo(f"wrote {doc['sections'][0]['csv_rows']} rows to {csv_file}")
    _finish(obj, doc)


@main.command()
@click.option("--verify-all", is_flag=True,
              help="Re-derive every catalog claim, not just list the models.")
@click.pass_obj
def catalog(obj, verify_all):
    """List the built-in models, optionally re-verifying all their claims."""
    doc = _request(obj, "GET", "/v1/catalog", {"verify": verify_all})
    _finish(obj, doc)


@main.command()
@click.argument("model", metavar="MODEL")
@click.option("--mode", type=click.Choice(["general", "doob"]),
              default="general", show_default=True,
              help="Which ansatz basis to embed in the [ansatz] section.")
@click.option("-o", "--output", type=click.Path(), default=None,
              help="Write to a file instead of stdout.")
@click.pass_obj
def export(obj, model, mode, output):
    """Print a built-in model as a model file."""
    text = _request(obj, "GET", f"/v1/catalog/{model}/modelfile",
                    {"mode": mode}, raw=True)
    if output is not None:
        Path(output).write_text(text)
        click.echo(f"wrote {output}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)
