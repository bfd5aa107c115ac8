"""Operator entry points.

    codeloop --config cfg.yaml chat [--script demo.yaml] [--verbose]
    codeloop --config cfg.yaml serve [--host H] [--port P]
    codeloop --config cfg.yaml eval --cases DIR [--target in-process|URL]
    codeloop --config cfg.yaml plugin init NAME --param x:str ...
    codeloop --config cfg.yaml example save SESSION ROUND --kind planning

Exit codes: 0 ok, 1 a round failed, 2 usage or configuration error.
"""

from __future__ import annotations

import sys
import threading
from pathlib import Path

import click

from .config import AppConfig, ConfigError, load_config
from .evaluation import DEFAULT_RUNS_PER_CASE, aggregate, evaluate_case, load_cases
from .memory.examples import ExampleKind, MalformedExample, save_round_as_example
from .memory.store import SessionStore, UnknownSession
from .memory.types import RoundState, UnfinishedRound
from .plugins import load_registry, parse_schema
from .service import AgentService, RoundFailedError

EXIT_OK = 0
EXIT_ROUND_FAILED = 1
EXIT_USAGE = 2


def _load_config_or_die(path: str | None) -> AppConfig:
    if path is None:
        raise click.UsageError("--config is required for this command")
    try:
        return load_config(path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_USAGE)


@click.group()
@click.option("--config", "config_path", type=str, default=None, help="Path to the YAML config.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


# -- chat -----------------------------------------------------------------------


def _fold_attachment(kind: str, content: str, verbose: bool) -> str:
    if kind == "python":
        return f"```python\n{content}\n```"
    if not verbose and len(content) > 400:
        return content[:400] + " ...[truncated, use --verbose]"
    return content


def _print_post(post_dict: dict, verbose: bool) -> None:
    click.echo(f">>> [{post_dict['send_from']} -> {post_dict['send_to']}]")
    click.echo(post_dict["message"])
    for att in post_dict.get("attachment_list", []):
        click.echo(f"--- {att['type']} ---")
        click.echo(_fold_attachment(att["type"], att["content"], verbose))
    click.echo("")


@main.command()
@click.option("--session", "session_id", default=None, help="Resume an existing session id.")
@click.option("--script", default=None, help="Route the gateway to this scripted-reply YAML.")
@click.option("--verbose", is_flag=True, help="Print long attachment contents in full.")
@click.pass_context
def chat(ctx: click.Context, session_id: str | None, script: str | None, verbose: bool) -> None:
    """Interactive REPL against an in-process service."""
    config = _load_config_or_die(ctx.obj["config_path"])
    if script:
        config.llm.backend = "scripted"
        config.llm.script = str(Path(script).resolve())
    try:
        service = AgentService(config)
    except Exception as exc:
        click.echo(f"failed to start the service: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    if session_id is None:
        session = service.create_session()
        session_id = session.id
    click.echo(f"session {session_id} ready; /reset restarts it, /quit exits.")

    any_failed = False
    while True:
        try:
            line = input("you> ").strip()
        except EOFError:
            break
        if not line:
            continue
        if line in ("/quit", "/exit"):
            break
        if line == "/reset":
            service.reset_session(session_id)
            click.echo("session reset; execution state cleared.")
            continue

        log = service.event_log(session_id)
        start = len(log.events)
        done = threading.Event()

        def print_events() -> None:
            index = start
            while not done.is_set() or index < len(log.events):
                for event in log.read_from(index, timeout=0.1):
                    index += 1
                    if event.kind == "post_created":
                        _print_post(event.payload["post"], verbose)
                    elif event.kind == "artifact_available":
                        click.echo(f"[artifact] {event.payload['artifact']['url']}")
                    elif event.kind == "round_failed":
                        click.echo(f"[round failed] {event.payload['reason']}")

        printer = threading.Thread(target=print_events)
        printer.start()
        try:
            service.run_round(session_id, line)
        except RoundFailedError:
            any_failed = True
        finally:
            done.set()
            printer.join()

    service.shutdown()
    sys.exit(EXIT_ROUND_FAILED if any_failed else EXIT_OK)


# -- serve -----------------------------------------------------------------------


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.pass_context
def serve(ctx: click.Context, host: str, port: int) -> None:
    """Run the HTTP/SSE service."""
    import uvicorn

    from .api import create_app

    config = _load_config_or_die(ctx.obj["config_path"])
    service = AgentService(config)
    try:
        uvicorn.run(create_app(service), host=host, port=port)
    finally:
        service.shutdown()


# -- eval -----------------------------------------------------------------------


@main.command("eval")
@click.option("--cases", "cases_dir", required=True, help="Directory of case YAML files.")
@click.option("--target", default="in-process", help="'in-process' or a service base URL.")
@click.option("--runs", default=DEFAULT_RUNS_PER_CASE, type=int, show_default=True)
@click.option("--report", "report_path", default=None, help="Write the YAML report here.")
@click.pass_context
def eval_command(
    ctx: click.Context, cases_dir: str, target: str, runs: int, report_path: str | None
) -> None:
    """Run the examiner/judge evaluation over a case directory."""
    config = _load_config_or_die(ctx.obj["config_path"])
    try:
        cases = load_cases(cases_dir)
    except FileNotFoundError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_USAGE)

    if target == "in-process":
        service = AgentService(config)
        gateway = service.gateway

        def make_target():
            session = service.create_session()

            def send(message: str) -> str:
                try:
                    return service.run_round(session.id, message).message
                except RoundFailedError as exc:
                    return f"The round failed: {exc}"

            return send

    else:
        import httpx

        client = httpx.Client(base_url=target, timeout=300.0)
        from .gateway import build_gateway

        service = None
        gateway = build_gateway(config.llm)

        def make_target():
            session_id = client.post("/sessions", json={}).json()["session_id"]

            def send(message: str) -> str:
                body = client.post(
                    f"/sessions/{session_id}/messages", json={"message": message}
                ).json()
                if body.get("status") == "failed":
                    return f"The round failed: {body.get('reason')}"
                return body["post"]["message"]

            return send

    verdicts = []
    for case in cases:
        for _ in range(runs):
            verdicts.append(evaluate_case(case, make_target(), gateway))
    report = aggregate(verdicts, runs_per_case=runs)

    click.echo(report.to_text_table())
    if report_path:
        Path(report_path).write_text(report.to_yaml())
        click.echo(f"report written to {report_path}")
    if service is not None:
        service.shutdown()


# -- plugin scaffolding ----------------------------------------------------------


@main.group()
def plugin() -> None:
    """Plugin tooling."""


IMPL_TEMPLATE = '''\
def {name}({args}):
    """TODO: implement {name}."""
    raise NotImplementedError("{name} is not implemented yet")
'''


@plugin.command("init")
@click.argument("name")
@click.option(
    "--param",
    "params",
    multiple=True,
    help="Parameter as name:type, may repeat.",
)
@click.pass_context
def plugin_init(ctx: click.Context, name: str, params: tuple[str, ...]) -> None:
    """Scaffold a plugin package (schema plus implementation stub)."""
    config = _load_config_or_die(ctx.obj["config_path"])
    if not config.plugins_dir:
        click.echo("config has no plugins.dir", err=True)
        sys.exit(EXIT_USAGE)
    target = Path(config.plugins_dir) / name
    if target.exists():
        click.echo(f"plugin {name!r} already exists at {target}", err=True)
        sys.exit(EXIT_USAGE)

    parsed_params = []
    for spec in params:
        pname, _, ptype = spec.partition(":")
        if not pname or not ptype:
            click.echo(f"--param must look like name:type, got {spec!r}", err=True)
            sys.exit(EXIT_USAGE)
        parsed_params.append((pname, ptype))

    schema_yaml = _scaffold_schema_yaml(name, parsed_params)
    parse_schema(schema_yaml, source=f"{name}/plugin.yaml")  # self-check before writing

    target.mkdir(parents=True)
    (target / "plugin.yaml").write_text(schema_yaml)
    args = ", ".join(p for p, _ in parsed_params)
    (target / "impl.py").write_text(IMPL_TEMPLATE.format(name=name, args=args))
    load_registry(config.plugins_dir)  # the scaffold must load cleanly
    click.echo(f"created {target}")


def _scaffold_schema_yaml(name: str, params: list[tuple[str, str]]) -> str:
    import yaml as _yaml

    return _yaml.safe_dump(
        {
            "name": name,
            "description": f"{name} does ... (describe what the plugin does).",
            "parameters": [
                {
                    "name": pname,
                    "type": ptype,
                    "required": True,
                    "description": f"the {pname} argument",
                }
                for pname, ptype in params
            ],
            "returns": [
                {"name": "result", "type": "str", "description": "the plugin result"}
            ],
        },
        sort_keys=False,
    )


# -- example export ---------------------------------------------------------------


@main.group()
def example() -> None:
    """Example tooling."""


@example.command("save")
@click.argument("session_id")
@click.argument("round_id")
@click.option(
    "--kind",
    type=click.Choice(["planning", "codegen"]),
    default="planning",
    show_default=True,
)
@click.pass_context
def example_save(ctx: click.Context, session_id: str, round_id: str, kind: str) -> None:
    """Save a finished round as a reusable example YAML."""
    config = _load_config_or_die(ctx.obj["config_path"])
    store = SessionStore(config.data_dir)
    try:
        session = store.get(session_id)
    except UnknownSession:
        click.echo(f"unknown session: {session_id}", err=True)
        sys.exit(EXIT_USAGE)
    round_ = next((r for r in session.rounds if r.id == round_id), None)
    if round_ is None:
        click.echo(f"unknown round: {round_id}", err=True)
        sys.exit(EXIT_USAGE)
    if round_.state != RoundState.FINISHED:
        click.echo(f"round {round_id} is {round_.state.value}, not finished", err=True)
        sys.exit(EXIT_USAGE)

    example_kind = ExampleKind(kind)
    out_dir = (
        config.examples_planner_dir
        if example_kind == ExampleKind.PLANNING
        else config.examples_codegen_dir
    )
    if not out_dir:
        click.echo(f"config has no examples dir for kind {kind}", err=True)
        sys.exit(EXIT_USAGE)
    try:
        text = save_round_as_example(round_, example_kind)
    except (UnfinishedRound, MalformedExample) as exc:
        click.echo(f"cannot save round: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    out_path = Path(out_dir) / f"{session_id}-{round_id}-{kind}.yaml"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text)
    click.echo(f"wrote {out_path}")
