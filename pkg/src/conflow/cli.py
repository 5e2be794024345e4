"""Administrative command line: validate definitions, build/verify/enumerate
consolidated models, simulate replays, run reports, serve the HTTP API.

All commands are pure file pipes except ``report`` and ``serve``, which read
DATA_DIR (flag or environment variable). Exit codes: 0 success, 1 failed
check, 2 usage error.
"""
from __future__ import annotations

import json
import os
import sys

import click
import yaml

from . import runtime
from .consolidate import (
    STRATEGIES,
    attach_conditions,
    build_graph_cm,
    build_linear_cm,
    cm_from_doc,
    cm_to_doc,
    graph_to_dot,
)
from .model import DefinitionError, parse_process_set
from .verify import (
    DEFAULT_ENUM_BOUND,
    TooLarge,
    enumerate_valid_linearizations,
    explain,
    verify_linear_cm,
)


def _load_defs(path: str):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_process_set(text)


def _fail_definitions(exc: DefinitionError) -> None:
    for d in exc.diagnostics:
        click.echo(str(d), err=True)
    sys.exit(1)


@click.group()
def main():
    """Consolidated process model toolchain."""


@main.command()
@click.argument("defs", type=click.Path(exists=True))
def validate(defs):
    """Parse and structurally validate a definition document."""
    try:
        ps = _load_defs(defs)
    except DefinitionError as exc:
        _fail_definitions(exc)
    for w in ps.warnings:
        click.echo(str(w), err=True)
    click.echo(
        f"ok: {len(ps.processes)} process(es), {len(ps.steps)} step(s), "
        f"{len(ps.roles)} role(s)"
    )


@main.command()
@click.argument("defs", type=click.Path(exists=True))
@click.option("--strategy", type=click.Choice(STRATEGIES), default="by-process")
@click.option("--graph", "graph_out", type=click.Path(), default=None,
              help="also write the branched form as Graphviz DOT")
@click.option("--out", type=click.Path(), default=None, help="write CM document here")
def build(defs, strategy, graph_out, out):
    """Emit the linear consolidated model (and optionally the DOT graph)."""
    try:
        ps = _load_defs(defs)
    except DefinitionError as exc:
        _fail_definitions(exc)
    cm = attach_conditions(build_linear_cm(ps, strategy))
    doc = cm_to_doc(cm)
    body = json.dumps(doc, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(body + "\n")
    else:
        click.echo(body)
    if graph_out:
        with open(graph_out, "w", encoding="utf-8") as fh:
            fh.write(graph_to_dot(build_graph_cm(ps)))


@main.command()
@click.argument("defs", type=click.Path(exists=True))
@click.argument("cm_file", type=click.Path(exists=True))
def verify(defs, cm_file):
    """Check a linear CM document; exit 0 iff correct."""
    try:
        ps = _load_defs(defs)
    except DefinitionError as exc:
        _fail_definitions(exc)
    with open(cm_file, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text) if text.lstrip().startswith("{") else yaml.safe_load(text)
        cm = cm_from_doc(doc, ps)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    verdict = verify_linear_cm(ps, cm)
    click.echo(explain(verdict))
    sys.exit(0 if verdict.correct else 1)


@main.command()
@click.argument("defs", type=click.Path(exists=True))
@click.option("--max-steps", type=int, default=DEFAULT_ENUM_BOUND)
def enumerate(defs, max_steps):
    """List every correct linearization (small instances only)."""
    try:
        ps = _load_defs(defs)
    except DefinitionError as exc:
        _fail_definitions(exc)
    try:
        orders = enumerate_valid_linearizations(ps, max_steps)
    except TooLarge as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for order in orders:
        click.echo(" ".join(order))


@main.command()
@click.argument("defs", type=click.Path(exists=True))
@click.argument("cm_file", type=click.Path(exists=True))
@click.option("--type", "proc_type", required=True)
@click.option("--script", "script_file", type=click.Path(exists=True), default=None,
              help="YAML: {params: {...}, steps: {step_id: {fields: {...}, role: ...}}}")
def simulate(defs, cm_file, proc_type, script_file):
    """Replay a procedure of TYPE over the CM and print the executed trace."""
    try:
        ps = _load_defs(defs)
    except DefinitionError as exc:
        _fail_definitions(exc)
    with open(cm_file, encoding="utf-8") as fh:
        text = fh.read()
    doc = json.loads(text) if text.lstrip().startswith("{") else yaml.safe_load(text)
    cm = attach_conditions(cm_from_doc(doc, ps))
    script = {"params": {}, "steps": {}}
    if script_file:
        with open(script_file, encoding="utf-8") as fh:
            script.update(yaml.safe_load(fh) or {})
    try:
        trace = runtime.replay(
            cm, proc_type, script.get("steps", {}), script.get("params", {})
        )
    except runtime.RuntimeError_ as exc:
        click.echo(f"error: {exc.kind}: {exc}", err=True)
        sys.exit(1)
    for sid in trace:
        click.echo(sid)


@main.command()
@click.argument("kind")
@click.option("--data-dir", envvar="DATA_DIR", default="./data")
@click.option("--csv", "as_csv", is_flag=True)
def report(kind, data_dir, as_csv):
    """Run a store-backed report."""
    from .store import Store

    store = Store(data_dir)
    try:
        rep = store.report(kind)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if as_csv:
        click.echo(rep.to_csv(), nl=False)
    else:
        click.echo(json.dumps(rep.to_doc(), indent=2))


@main.command()
@click.option("--data-dir", envvar="DATA_DIR", default="./data")
@click.option("--port", envvar="PORT", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
def serve(data_dir, port, host):
    """Run the HTTP API."""
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(data_dir), host=host, port=port)


@main.command()
@click.argument("name")
@click.option("--password", prompt=True, hide_input=True)
@click.option("--role", "roles", multiple=True, required=True)
@click.option("--data-dir", envvar="DATA_DIR", default="./data")
def useradd(name, password, roles, data_dir):
    """Register a local user for the HTTP API."""
    from .api import add_user

    os.makedirs(data_dir, exist_ok=True)
    add_user(data_dir, name, password, list(roles))
    click.echo(f"user {name!r} registered with roles {', '.join(roles)}")


if __name__ == "__main__":
    main()
