"""Command-line client of the porosurf service.

Every command is a thin wrapper over the HTTP API.  By default the app runs
in-process (httpx ASGI transport, no sockets), so the CLI works standalone
and stays deterministic; pass ``--server URL`` (or set POROSURF_SERVER) to
target a running instance instead.

Exit codes: 0 ok, 1 internal/numerical failure, 2 I/O error, 3 bad spec or
invalid input, 4 corrupt/missing data, 5 model-dataset incompatibility.
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import httpx

EXIT_FOR_KIND = {
    "io": 2,
    "spec": 3,
    "invalid-input": 3,
    "validation": 3,
    "data": 4,
    "compat": 5,
    "numerical": 1,
    "internal": 1,
}


def _request(server: str | None, method: str, path: str,
             payload: dict | None) -> httpx.Response:
    server = server or os.environ.get("POROSURF_SERVER")
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.request(method, path, json=payload)

    # in-process mode: drive the ASGI app directly, no sockets involved
    import asyncio

    from .service.app import app  # deferred: keeps --help fast

    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, timeout=None,
                                     base_url="http://porosurf.local") as client:
            return await client.request(method, path, json=payload)

    return asyncio.run(go())


def _call(ctx, method: str, path: str, payload: dict | None = None) -> dict:
    try:
        resp = _request(ctx.obj.get("server"), method, path, payload)
    except httpx.HTTPError as exc:
        click.echo(f"error: cannot reach service: {exc}", err=True)
        sys.exit(2)
    if resp.status_code == 422:
        click.echo(f"error: invalid request: {resp.text}", err=True)
        sys.exit(3)
    body = resp.json()
    if resp.is_success:
        return body
    detail = body.get("detail", {})
    if isinstance(detail, dict):
        kind = detail.get("kind", "internal")
        message = detail.get("message", resp.text)
    else:
        kind, message = "internal", str(detail)
    click.echo(f"error ({kind}): {message}", err=True)
    sys.exit(EXIT_FOR_KIND.get(kind, 1))


def _load_spec_payload(spec_path: str, profile: str | None,
                       config: str | None) -> dict:
    try:
        raw = Path(spec_path).read_text()
    except OSError as exc:
        click.echo(f"error: cannot read spec file: {exc}", err=True)
        sys.exit(2)
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        click.echo(f"error: spec file is not valid JSON: {exc}", err=True)
        sys.exit(3)
    overrides = {}
    if config:
        try:
            overrides = json.loads(Path(config).read_text())
        except OSError as exc:
            click.echo(f"error: cannot read config file: {exc}", err=True)
            sys.exit(2)
        except json.JSONDecodeError as exc:
            click.echo(f"error: config file is not valid JSON: {exc}", err=True)
            sys.exit(3)
    if "kind" in doc and "mesh_nx" not in doc:
        shorthand = dict(doc)
        if profile:
            shorthand["profile"] = profile
        shorthand.setdefault("overrides", {}).update(overrides)
        return {"benchmark": shorthand}
    if overrides:
        doc.update(overrides)
    return {"spec": doc}


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Service base URL (default: run the app in-process).")
@click.pass_context
def main(ctx, server):
    """DeepONet surrogate pipeline for poroelasticity with random permeability."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command("gen-data")
@click.argument("spec_path", type=click.Path())
@click.argument("out_dir", type=click.Path())
@click.option("--seed", type=int, default=None,
              help="Sampling seed (default: POROSURF_SEED or 0).")
@click.option("--profile", type=click.Choice(["desk", "full"]), default=None,
              help="Profile override for shorthand spec files.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--config", type=click.Path(), default=None,
              help="JSON file with spec overrides.")
@click.pass_context
def gen_data(ctx, spec_path, out_dir, seed, profile, workers, config):
    """Generate an input/output dataset from a benchmark spec file."""
    payload = _load_spec_payload(spec_path, profile, config)
    payload.update({"out_dir": out_dir, "seed": seed, "workers": workers})
    body = _call(ctx, "POST", "/datasets", payload)
    click.echo(json.dumps(body, indent=2))


@main.command()
@click.argument("dataset_dir", type=click.Path())
@click.argument("variable", type=click.Choice(["u_x", "u_z", "p"]))
@click.option("--m", "-M", "m_modes", type=int, required=True,
              help="Truncation order (number of K-L modes fed to the branch).")
@click.option("--k-multiplier", type=float, default=None,
              help="Basis count as a multiple of the numerical rank (1..2).")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.pass_context
def train(ctx, dataset_dir, variable, m_modes, k_multiplier, seed, out_dir):
    """Two-step training of one variable on a stored dataset."""
    body = _call(ctx, "POST", "/trainings", {
        "dataset_dir": dataset_dir, "variable": variable, "m_modes": m_modes,
        "k_multiplier": k_multiplier, "seed": seed, "out_dir": out_dir})
    click.echo(json.dumps(body, indent=2))


@main.command("eval")
@click.argument("checkpoint_dir", type=click.Path())
@click.argument("dataset_dir", type=click.Path())
@click.option("--split", type=click.Choice(["train", "test"]), default="test",
              show_default=True)
@click.option("--baseline", type=click.Choice(["zero", "mean"]), default=None,
              help="Score a trivial predictor instead of the model.")
@click.pass_context
def eval_cmd(ctx, checkpoint_dir, dataset_dir, split, baseline):
    """Relative test error of a checkpoint on a dataset split."""
    body = _call(ctx, "POST", "/evaluations", {
        "checkpoint_dir": checkpoint_dir, "dataset_dir": dataset_dir,
        "split": split, "baseline": baseline})
    click.echo(json.dumps(body, indent=2))


@main.command()
@click.argument("checkpoint_dir", type=click.Path())
@click.option("--xi-file", type=click.Path(), required=True,
              help="JSON file with one coefficient row or a matrix of rows.")
@click.option("--points-file", type=click.Path(), required=True,
              help="JSON file with (x, z, t) rows.")
@click.pass_context
def predict(ctx, checkpoint_dir, xi_file, points_file):
    """Evaluate the surrogate at arbitrary spatiotemporal points."""
    try:
        xi = json.loads(Path(xi_file).read_text())
        points = json.loads(Path(points_file).read_text())
    except OSError as exc:
        click.echo(f"error: cannot read input file: {exc}", err=True)
        sys.exit(2)
    except json.JSONDecodeError as exc:
        click.echo(f"error: input file is not valid JSON: {exc}", err=True)
        sys.exit(3)
    if xi and not isinstance(xi[0], list):
        xi = [xi]
    body = _call(ctx, "POST", "/predictions", {
        "checkpoint_dir": checkpoint_dir, "xi": xi, "points": points})
    click.echo(json.dumps(body, indent=2))


@main.command("export-fields")
@click.argument("checkpoint_dir", type=click.Path())
@click.argument("out_dir", type=click.Path())
@click.option("--dataset", "dataset_dir", type=click.Path(), default=None,
              help="Dataset whose row supplies xi and FEM comparison values.")
@click.option("--row", type=int, default=0, show_default=True)
@click.option("--xi-file", type=click.Path(), default=None,
              help="JSON coefficient row (alternative to --dataset).")
@click.option("--times", default="0.1,0.55,1.0", show_default=True,
              help="Comma-separated time slices.")
@click.option("--svg", is_flag=True, help="Also write SVG heatmaps.")
@click.pass_context
def export_fields(ctx, checkpoint_dir, out_dir, dataset_dir, row, xi_file,
                  times, svg):
    """Export per-time field slices as CSV (x, z, t, value[, fem, abs_error])."""
    payload = {"checkpoint_dir": checkpoint_dir, "out_dir": out_dir,
               "times": [float(t) for t in times.split(",")],
               "dataset_dir": dataset_dir, "row": row, "svg": svg}
    if xi_file:
        try:
            payload["xi"] = json.loads(Path(xi_file).read_text())
        except OSError as exc:
            click.echo(f"error: cannot read xi file: {exc}", err=True)
            sys.exit(2)
        except json.JSONDecodeError as exc:
            click.echo(f"error: xi file is not valid JSON: {exc}", err=True)
            sys.exit(3)
        payload["dataset_dir"] = None
    body = _call(ctx, "POST", "/exports", payload)
    click.echo(json.dumps(body, indent=2))


@main.command()
@click.argument("spec_path", type=click.Path())
@click.argument("out_dir", type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--train-seed", type=int, default=None)
@click.option("--profile", type=click.Choice(["desk", "full"]), default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def pipeline(ctx, spec_path, out_dir, seed, train_seed, profile, workers,
             config):
    """Run the whole study: gen-data, per-variable training over all M, report."""
    payload = _load_spec_payload(spec_path, profile, config)
    payload.update({"out_dir": out_dir, "seed": seed, "train_seed": train_seed,
                    "workers": workers})
    body = _call(ctx, "POST", "/pipelines", payload)
    click.echo(json.dumps(body["report"], indent=2))


@main.command()
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the study CSV here instead of stdout.")
@click.pass_context
def report(ctx, run_dirs, out_path):
    """Pivot one or more run reports into the published table layout."""
    body = _call(ctx, "POST", "/reports", {"run_dirs": list(run_dirs)})
    if out_path:
        Path(out_path).write_text(body["csv"])
        click.echo(out_path)
    else:
        click.echo(body["csv"], nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8077, show_default=True)
def serve(host, port):
    """Run the porosurf service under uvicorn."""
    import uvicorn
    uvicorn.run("porosurf.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
