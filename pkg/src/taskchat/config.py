"""Engine construction from JSON configuration documents.

A config document names the registry, backends, guardrail and classifier
settings. Relative paths resolve against the config file's directory.
Provider credentials come from the environment variable named by
`auth_env`, never from the file itself.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Optional, Union

from .engine import Engine, EngineConfig
from .gateway import (
    Backend,
    CompletionParams,
    RemoteBackend,
    scripted_backend_from_file,
    ScriptedBackend,
)
from .guardrails import GuardrailConfig
from .intents import ClassifierConfig
from .registry import Registry, load_registry
from .tasks import ActionRegistry


def _resolve(base_dir: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


def _build_backend(raw: Optional[dict], base_dir: Path) -> Optional[Backend]:
    if raw is None:
        return None
    kind = raw.get("type", "scripted")
    if kind == "scripted":
        if "script" in raw and isinstance(raw["script"], str):
            return scripted_backend_from_file(_resolve(base_dir, raw["script"]))
        return ScriptedBackend(raw.get("entries", []), raw.get("synthetic_delay", 0.0))
    if kind == "remote":
        api_key = None
        if raw.get("auth_env"):
            api_key = os.environ.get(raw["auth_env"])
        return RemoteBackend(
            url=raw["url"],
            model=raw.get("model", "default"),
            api_key=api_key,
            timeout=raw.get("timeout", 30.0),
        )
    raise ValueError(f"unknown backend type {kind!r}")


def _constant_handler(result: Any):
    def handler(**_kwargs):
        return result

    return handler


def build_actions(raw: Optional[dict], demo_actions: bool = False) -> ActionRegistry:
    actions = ActionRegistry()
    if demo_actions:
        from .demo import register_demo_actions

        register_demo_actions(actions)
    for action_id, spec in (raw or {}).items():
        result = spec.get("result") if isinstance(spec, dict) else spec
        actions.register(action_id, _constant_handler(result))
    return actions


def build_engine_config(doc: dict) -> EngineConfig:
    kwargs: dict[str, Any] = {}
    if "max_turn_steps" in doc:
        kwargs["max_turn_steps"] = doc["max_turn_steps"]
    if "single_agent_mode" in doc:
        kwargs["single_agent_mode"] = doc["single_agent_mode"]
    if "guardrails" in doc:
        kwargs["guardrails"] = GuardrailConfig.from_dict(doc["guardrails"])
    if "classifier" in doc:
        kwargs["classifier"] = ClassifierConfig.from_dict(doc["classifier"])
    if "completion" in doc:
        kwargs["completion"] = CompletionParams(**doc["completion"])
    if "ood_rejection_message" in doc:
        kwargs["ood_rejection_message"] = doc["ood_rejection_message"]
    if "instructions" in doc:
        kwargs["instructions"] = doc["instructions"]
    if "template" in doc:
        kwargs["template"] = doc["template"]
    return EngineConfig(**kwargs)


def load_engine_config_file(path: Union[str, Path]) -> tuple[dict, Path]:
    path = Path(path)
    return json.loads(path.read_text()), path.parent


def build_engine(
    doc: dict,
    base_dir: Union[str, Path] = ".",
    overrides: Optional[dict] = None,
) -> Engine:
    """Engine from a configuration document.

    `overrides` (CLI flags) shadow document keys. The registry may be an
    inline object or a file path; backends default to empty scripted ones.
    A custom agent prompt template comes inline (`template`) or from a
    plain-text file (`template_file`).
    """
    base_dir = Path(base_dir)
    merged = dict(doc)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    if "template_file" in merged and "template" not in merged:
        merged["template"] = _resolve(base_dir, merged["template_file"]).read_text()

    registry_ref = merged.get("registry")
    if registry_ref is None:
        raise ValueError("configuration needs a 'registry' (path or inline object)")
    if isinstance(registry_ref, str):
        registry = load_registry(_resolve(base_dir, registry_ref))
    else:
        registry = load_registry(registry_ref)

    agent_backend = _build_backend(merged.get("backend"), base_dir) or ScriptedBackend([])
    classifier_backend = _build_backend(merged.get("classifier_backend"), base_dir)
    actions = build_actions(merged.get("actions"), merged.get("demo_actions", False))
    return Engine(
        registry=registry,
        agent_backend=agent_backend,
        classifier_backend=classifier_backend,
        actions=actions,
        config=build_engine_config(merged),
    )
