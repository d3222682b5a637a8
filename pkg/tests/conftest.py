"""Shared fixtures: the demo registry and scripted-engine builders."""

import pytest

from taskchat import demo
from taskchat.engine import Engine, EngineConfig
from taskchat.gateway import ScriptedBackend
from taskchat.registry import Registry
from taskchat.tasks import ActionRegistry


@pytest.fixture
def registry() -> Registry:
    return demo.demo_registry()


@pytest.fixture
def demo_documents() -> dict:
    return demo.demo_registry_documents()


@pytest.fixture
def actions() -> ActionRegistry:
    out = ActionRegistry()
    demo.register_demo_actions(out)
    return out


def make_engine(
    agent_script,
    classifier_script,
    registry=None,
    config=None,
    actions=None,
    info_answerer=None,
):
    """Engine over scripted backends; demo registry and handlers by default."""
    if registry is None:
        registry = demo.demo_registry()
    if actions is None:
        actions = ActionRegistry()
        demo.register_demo_actions(actions)
    return Engine(
        registry=registry,
        agent_backend=ScriptedBackend(agent_script),
        classifier_backend=ScriptedBackend(classifier_script),
        actions=actions,
        config=config or EngineConfig(),
        info_answerer=info_answerer,
    )
