"""Command line interface.

`serve` runs the HTTP service; `repl` is a terminal chat client that either
drives an in-process engine or acts as a thin client against a running
service (--url). `validate` checks registry documents, `eval run` replays a
dataset and `eval audit` computes judge/human agreement.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Optional

import click
import httpx

from . import __version__, demo, evalharness, service
from .config import build_engine, load_engine_config_file
from .engine import Engine
from .gateway import DEFAULT_PRICE_CARDS, load_price_cards
from .registry import validate_documents


def _engine_from_flags(
    config_path: Optional[str],
    registry: Optional[str],
    backend: Optional[str],
    script: Optional[str],
    single_agent: bool,
) -> Engine:
    overrides: dict[str, Any] = {}
    if registry:
        overrides["registry"] = registry
    if backend == "scripted":
        overrides["backend"] = {"type": "scripted", "script": script} if script else {
            "type": "scripted",
            "entries": [],
        }
    if single_agent:
        overrides["single_agent_mode"] = True

    if config_path:
        doc, base_dir = load_engine_config_file(config_path)
        if backend == "remote":
            remote = doc.get("backend", {})
            if remote.get("type") != "remote" or "url" not in remote:
                raise click.ClickException(
                    "--backend remote needs a remote backend (url, model, auth_env) "
                    "in the config file"
                )
        return build_engine(doc, base_dir=base_dir, overrides=overrides)
    if backend == "remote":
        raise click.ClickException("--backend remote requires --config")
    if registry:
        return build_engine(overrides, base_dir=Path.cwd())
    # No configuration given: fall back to the scripted demo.
    click.echo("no --config/--registry given; using the built-in scripted demo", err=True)
    from .engine import EngineConfig

    engine = demo.demo_engine(
        config=EngineConfig(single_agent_mode=single_agent) if single_agent else None
    )
    return engine


@click.group()
@click.version_option(version=__version__, prog_name="taskchat")
def main() -> None:
    """Multi-agent chat orchestration engine."""


_engine_options = [
    click.option("--config", "config_path", type=click.Path(exists=True), help="engine config JSON"),
    click.option("--registry", type=click.Path(exists=True), help="registry documents JSON"),
    click.option("--backend", type=click.Choice(["scripted", "remote"]), help="backend kind override"),
    click.option("--script", type=click.Path(exists=True), help="script file for the scripted backend"),
    click.option("--single-agent", is_flag=True, help="merge the hierarchy into one agent"),
]


def _with_engine_options(command):
    for option in reversed(_engine_options):
        command = option(command)
    return command


@main.command()
@_with_engine_options
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True, type=int)
@click.option("--ui-dir", type=click.Path(exists=True), help="static assets for the web client")
def serve(config_path, registry, backend, script, single_agent, host, port, ui_dir):
    """Run the HTTP chat service."""
    engine = _engine_from_flags(config_path, registry, backend, script, single_agent)
    service.serve(engine, host=host, port=port, ui_dir=ui_dir)


def _print_event(event: dict) -> None:
    kind = event["kind"]
    payload = event["payload"]
    if kind == "AgentMessage":
        click.echo(f"  [{payload.get('agent')}] {payload.get('content')}")
    elif kind == "AgentSwitched":
        click.echo(f"  [switch] {payload.get('from')} -> {payload.get('to')}")
    elif kind == "ToolInvoked":
        flag = " (resume)" if payload.get("resumed") else ""
        click.echo(f"  [tool]{flag} {payload.get('name')}({json.dumps(payload.get('arguments'))})")
    elif kind == "TaskUpdate":
        click.echo(f"  [update] {payload.get('text')}")
    elif kind == "InputRequested":
        click.echo(
            f"  [input?] {payload.get('param')} ({payload.get('type')}): {payload.get('prompt')}"
        )
    elif kind == "GuardrailRetry":
        click.echo(f"  [retry {payload.get('attempt')}] {payload.get('reflection')}")
    elif kind == "FinalReply":
        click.echo(f"assistant> {payload.get('content')}")
    elif kind == "TechnicalIssue":
        click.echo(f"assistant> {payload.get('content')} ({payload.get('diagnostic')})")


class _HttpClient:
    """Thin client over the service API for remote REPL mode."""

    def __init__(self, base_url: str):
        self.base_url = base_url.rstrip("/")
        self.http = httpx.Client(timeout=60.0)
        response = self.http.post(f"{self.base_url}/sessions")
        response.raise_for_status()
        self.session_id = response.json()["session_id"]

    def send(self, text: str) -> list[dict]:
        response = self.http.post(
            f"{self.base_url}/sessions/{self.session_id}/messages", json={"text": text}
        )
        response.raise_for_status()
        return response.json()["events"]

    def transcript(self) -> str:
        response = self.http.get(f"{self.base_url}/sessions/{self.session_id}/transcript")
        response.raise_for_status()
        return response.text

    def events(self) -> list[dict]:
        response = self.http.get(
            f"{self.base_url}/sessions/{self.session_id}/events",
            params={"replay": "true"},
        )
        response.raise_for_status()
        out = []
        for line in response.text.splitlines():
            if line.startswith("data: "):
                out.append(json.loads(line[len("data: ") :]))
        return out


class _LocalClient:
    def __init__(self, engine: Engine):
        self.engine = engine
        self.session_id = engine.create_session().session_id

    def send(self, text: str) -> list[dict]:
        return [e.to_dict() for e in self.engine.handle_user_message(self.session_id, text)]

    def transcript(self) -> str:
        return self.engine.transcript(self.session_id)

    def events(self) -> list[dict]:
        return [e.to_dict() for e in self.engine.events_after(self.session_id)]


@main.command()
@_with_engine_options
@click.option("--url", help="connect to a running service instead of an in-process engine")
def repl(config_path, registry, backend, script, single_agent, url):
    """Interactive chat loop. Commands: /quit /transcript /events."""
    if url:
        client: Any = _HttpClient(url)
    else:
        engine = _engine_from_flags(config_path, registry, backend, script, single_agent)
        client = _LocalClient(engine)
    click.echo("session started; /quit to exit, /transcript and /events to inspect")
    while True:
        try:
            line = input("you> ").strip()
        except (EOFError, KeyboardInterrupt):
            click.echo("")
            break
        if not line:
            continue
        if line == "/quit":
            break
        if line == "/transcript":
            click.echo(client.transcript())
            continue
        if line == "/events":
            for event in client.events():
                click.echo(json.dumps(event))
            continue
        try:
            for event in client.send(line):
                _print_event(event)
        except Exception as exc:
            click.echo(f"error: {exc}", err=True)


@main.command()
@click.argument("registry_path", type=click.Path(exists=True))
def validate(registry_path):
    """Validate registry documents; exit 0 when loadable, 1 otherwise."""
    documents = json.loads(Path(registry_path).read_text())
    issues = validate_documents(documents)
    if not issues:
        click.echo("OK")
        sys.exit(0)
    click.echo(json.dumps([issue.to_dict() for issue in issues], indent=2))
    sys.exit(1)


@main.command("init-demo")
@click.argument("directory", type=click.Path())
def init_demo(directory):
    """Write the demo registry, scripts and config into DIRECTORY."""
    for path in demo.write_demo_files(directory):
        click.echo(f"wrote {path}")


@main.group(name="eval")
def eval_group() -> None:
    """Replay evaluation and audit tools."""


@eval_group.command("run")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), help="engine config JSON supplying guardrail settings")
@click.option(
    "--ablate",
    multiple=True,
    type=click.Choice(["format", "function", "grounding", "rules", "all"]),
    help="re-run with a guardrail check disabled and report the delta",
)
@click.option("--single-agent", is_flag=True)
@click.option("--price-card", default="flagship", show_default=True)
@click.option("--price-cards-file", type=click.Path(exists=True), help="price card JSON")
@click.option("--requests", default=5000, show_default=True, type=int)
@click.option("--report", "report_path", type=click.Path(), help="write the JSON report here")
@click.option("--workers", default=4, show_default=True, type=int)
def eval_run(dataset, config_path, ablate, single_agent, price_card, price_cards_file, requests, report_path, workers):
    """Replay a dataset and print the report."""
    cards = dict(DEFAULT_PRICE_CARDS)
    if price_cards_file:
        cards.update(load_price_cards(price_cards_file))
    if price_card not in cards:
        raise click.ClickException(f"unknown price card {price_card!r}")
    guardrails = None
    if config_path:
        doc, _ = load_engine_config_file(config_path)
        if "guardrails" in doc:
            from .guardrails import GuardrailConfig

            guardrails = GuardrailConfig.from_dict(doc["guardrails"])
    result = evalharness.replay(
        dataset,
        guardrails=guardrails,
        single_agent=single_agent,
        ablate=list(ablate) or None,
        price_card=cards[price_card],
        requests=requests,
        max_workers=workers,
    )
    click.echo(result.render_table())
    if report_path:
        Path(report_path).write_text(json.dumps(result.to_dict(), indent=2) + "\n")
        click.echo(f"report written to {report_path}")


@eval_group.command("audit")
@click.option("--human", required=True, type=click.Path(exists=True))
@click.option("--judge", required=True, type=click.Path(exists=True))
def eval_audit(human, judge):
    """Cohen's kappa between human audit labels and judge labels."""
    result = evalharness.audit_kappa(human, judge)
    click.echo(
        f"kappa: {result['kappa']:.4f}  agreement: {result['agreement']:.4%}  n: {result['n']}"
    )


if __name__ == "__main__":
    main()
