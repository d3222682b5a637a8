"""Agent hierarchy registry.

Loads and cross-validates the agent definitions, tool schemas, parameter
rules and task workflows from JSON-compatible configuration documents. The
sub-agent relation must form a directed acyclic graph; tool visibility is
scoped per agent. A loaded registry is immutable and freely shareable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .errors import (
    CycleDetected,
    DanglingReference,
    DuplicateName,
    MalformedSchema,
    UnknownAgent,
    UnknownFunction,
)
from .tasks import TaskDefinition

PARAM_TYPES = {"string", "number", "boolean", "object"}
CHARSETS = {"alphanumeric", "numeric", "alphabetic"}

DETERMINISTIC_TASK = "deterministic_task"
UTILITY_TOOL = "utility_tool"


@dataclass
class ParamSpec:
    type: str
    description: str = ""


@dataclass
class FunctionSchema:
    """JSONSchema-style declaration of one callable tool."""

    name: str
    description: str = ""
    parameters: dict[str, ParamSpec] = field(default_factory=dict)
    required: list[str] = field(default_factory=list)
    kind: str = UTILITY_TOOL


@dataclass
class ParamRules:
    """Static validation rules for one parameter value."""

    min_length: Optional[int] = None
    max_length: Optional[int] = None
    charset: Optional[str] = None
    pattern: Optional[str] = None
    enum: Optional[list] = None

    def is_empty(self) -> bool:
        return (
            self.min_length is None
            and self.max_length is None
            and self.charset is None
            and self.pattern is None
            and self.enum is None
        )


@dataclass
class AgentDefinition:
    """One node in the agent hierarchy.

    `steps` holds the natural-language task execution steps the agent
    follows; `tools` and `sub_agents` are the only callees it may invoke.
    """

    name: str
    purpose: str = ""
    steps: list[str] = field(default_factory=list)
    tools: list[str] = field(default_factory=list)
    sub_agents: list[str] = field(default_factory=list)
    helpful_definitions: list[str] = field(default_factory=list)


@dataclass
class RegistryIssue:
    code: str  # duplicate | dangling | cycle | malformed
    detail: str
    path: Optional[list[str]] = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"code": self.code, "detail": self.detail}
        if self.path:
            out["path"] = list(self.path)
        return out


class Registry:
    """Validated, immutable view over the configuration documents."""

    def __init__(
        self,
        agents: dict[str, AgentDefinition],
        functions: dict[str, FunctionSchema],
        rules: dict[str, dict[str, ParamRules]],
        root: str,
        tasks: Optional[dict[str, TaskDefinition]] = None,
    ):
        self.agents = agents
        self.functions = functions
        self.rules = rules
        self.root = root
        self.tasks = tasks or {}

    def has_agent(self, name: str) -> bool:
        return name in self.agents

    def agent(self, name: str) -> AgentDefinition:
        if name not in self.agents:
            raise UnknownAgent(f"agent {name!r} is not registered")
        return self.agents[name]

    def function(self, name: str) -> Optional[FunctionSchema]:
        return self.functions.get(name)

    def task(self, name: str) -> Optional[TaskDefinition]:
        return self.tasks.get(name)

    def resolve_callable(
        self, agent_name: str, callee: str
    ) -> Union[FunctionSchema, AgentDefinition, None]:
        """Scoped lookup of a callee from one agent's point of view.

        Returns the function schema for a declared tool, the agent
        definition for a declared sub-agent, and None otherwise, even when
        the callee exists elsewhere in the registry.
        """
        agent = self.agent(agent_name)
        if callee in agent.tools:
            return self.functions[callee]
        if callee in agent.sub_agents:
            return self.agents[callee]
        return None

    def param_rules(self, function: str, param: str) -> ParamRules:
        if function not in self.functions:
            raise UnknownFunction(f"function {function!r} is not registered")
        return self.rules.get(function, {}).get(param, ParamRules())

    def reachable_agents(self) -> list[str]:
        """Depth-first preorder from the root, children in declaration order."""
        order: list[str] = []
        seen: set[str] = set()

        def visit(name: str) -> None:
            if name in seen:
                return
            seen.add(name)
            order.append(name)
            for child in self.agents[name].sub_agents:
                visit(child)

        visit(self.root)
        return order

    def merge_to_single_agent(self) -> AgentDefinition:
        """Collapse the hierarchy into one agent for the single-agent baseline.

        Steps are concatenated depth-first in declaration order; tools are
        the duplicate-free union over all reachable agents; the merged agent
        has no sub-agents.
        """
        steps: list[str] = []
        tools: list[str] = []
        definitions: list[str] = []
        for name in self.reachable_agents():
            agent = self.agents[name]
            steps.extend(agent.steps)
            for tool in agent.tools:
                if tool not in tools:
                    tools.append(tool)
            for definition in agent.helpful_definitions:
                if definition not in definitions:
                    definitions.append(definition)
        root = self.agents[self.root]
        return AgentDefinition(
            name=root.name,
            purpose=root.purpose,
            steps=steps,
            tools=tools,
            sub_agents=[],
            helpful_definitions=definitions,
        )

    def as_single_agent(self) -> "Registry":
        """A registry whose only agent is the merged baseline agent."""
        merged = self.merge_to_single_agent()
        return Registry(
            agents={merged.name: merged},
            functions=self.functions,
            rules=self.rules,
            root=merged.name,
            tasks=self.tasks,
        )


def _parse_parameters(raw: Any) -> tuple[dict[str, ParamSpec], Optional[list[str]]]:
    """Accept both the flat map and the nested JSONSchema wire shape."""
    nested_required: Optional[list[str]] = None
    if isinstance(raw, dict) and "properties" in raw:
        nested_required = raw.get("required")
        raw = raw["properties"]
    params: dict[str, ParamSpec] = {}
    if raw is None:
        return params, nested_required
    if not isinstance(raw, dict):
        raise MalformedSchema(f"parameters must be an object, got {type(raw).__name__}")
    for name, spec in raw.items():
        if not isinstance(spec, dict) or "type" not in spec:
            raise MalformedSchema(f"parameter {name!r} needs a 'type'")
        if spec["type"] not in PARAM_TYPES:
            raise MalformedSchema(
                f"parameter {name!r} has unsupported type {spec['type']!r}"
            )
        params[name] = ParamSpec(type=spec["type"], description=spec.get("description", ""))
    return params, nested_required


def _parse_rules(raw: dict) -> ParamRules:
    rules = ParamRules(
        min_length=raw.get("min_length"),
        max_length=raw.get("max_length"),
        charset=raw.get("charset"),
        pattern=raw.get("pattern"),
        enum=list(raw["enum"]) if raw.get("enum") is not None else None,
    )
    if rules.charset is not None and rules.charset not in CHARSETS:
        raise MalformedSchema(f"unknown charset {rules.charset!r}")
    if (
        rules.min_length is not None
        and rules.max_length is not None
        and rules.min_length > rules.max_length
    ):
        raise MalformedSchema(
            f"min_length {rules.min_length} exceeds max_length {rules.max_length}"
        )
    if rules.pattern is not None:
        try:
            re.compile(rules.pattern)
        except re.error as exc:
            raise MalformedSchema(f"bad pattern {rules.pattern!r}: {exc}") from exc
    return rules


def _find_cycle(agents: dict[str, AgentDefinition]) -> Optional[list[str]]:
    """First sub-agent cycle found, as a path ending on the repeated node."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {name: WHITE for name in agents}
    stack: list[str] = []

    def visit(name: str) -> Optional[list[str]]:
        color[name] = GREY
        stack.append(name)
        for child in agents[name].sub_agents:
            if child not in agents:
                continue
            if color[child] == GREY:
                start = stack.index(child)
                return stack[start:] + [child]
            if color[child] == WHITE:
                found = visit(child)
                if found:
                    return found
        stack.pop()
        color[name] = BLACK
        return None

    for name in agents:
        if color[name] == WHITE:
            found = visit(name)
            if found:
                return found
    return None


def validate_documents(documents: dict) -> list[RegistryIssue]:
    """Every validation problem in the documents; empty means loadable."""
    issues: list[RegistryIssue] = []
    try:
        _build(documents, issues, collect_all=True)
    except (MalformedSchema, KeyError, TypeError) as exc:
        issues.append(RegistryIssue("malformed", str(exc)))
    return issues


def load_registry(documents: Union[dict, str, Path]) -> Registry:
    """Build a registry, raising the first validation failure as a typed error."""
    if isinstance(documents, (str, Path)):
        documents = json.loads(Path(documents).read_text())
    issues: list[RegistryIssue] = []
    registry = _build(documents, issues, collect_all=False)
    if issues:
        _raise_issue(issues[0])
    assert registry is not None
    return registry


def _raise_issue(issue: RegistryIssue) -> None:
    if issue.code == "duplicate":
        raise DuplicateName(issue.detail)
    if issue.code == "cycle":
        raise CycleDetected(issue.path or [])
    if issue.code == "dangling":
        entity, _, referrer = issue.detail.partition("|")
        raise DanglingReference(entity, referrer)
    raise MalformedSchema(issue.detail)


def _build(
    documents: dict, issues: list[RegistryIssue], collect_all: bool
) -> Optional[Registry]:
    def add(issue: RegistryIssue) -> None:
        issues.append(issue)

    if not isinstance(documents, dict):
        raise MalformedSchema("registry documents must be a JSON object")

    functions: dict[str, FunctionSchema] = {}
    for raw in documents.get("functions", []):
        name = raw.get("name")
        if not name:
            add(RegistryIssue("malformed", "function without a name"))
            continue
        if name in functions:
            add(RegistryIssue("duplicate", f"duplicate function name {name!r}"))
            continue
        kind = raw.get("kind", UTILITY_TOOL)
        if kind not in (DETERMINISTIC_TASK, UTILITY_TOOL):
            add(RegistryIssue("malformed", f"function {name!r}: unknown kind {kind!r}"))
            continue
        try:
            params, nested_required = _parse_parameters(raw.get("parameters"))
        except MalformedSchema as exc:
            add(RegistryIssue("malformed", f"function {name!r}: {exc}"))
            continue
        required = raw.get("required", nested_required) or []
        bad_required = [p for p in required if p not in params]
        if bad_required:
            add(
                RegistryIssue(
                    "malformed",
                    f"function {name!r}: required parameters {bad_required} are not declared",
                )
            )
            continue
        functions[name] = FunctionSchema(
            name=name,
            description=raw.get("description", ""),
            parameters=params,
            required=list(required),
            kind=kind,
        )

    agents: dict[str, AgentDefinition] = {}
    for raw in documents.get("agents", []):
        name = raw.get("name")
        if not name:
            add(RegistryIssue("malformed", "agent without a name"))
            continue
        if name in agents:
            add(RegistryIssue("duplicate", f"duplicate agent name {name!r}"))
            continue
        tools = list(raw.get("tools", []))
        sub_agents = list(raw.get("sub_agents", []))
        if len(set(tools)) != len(tools):
            add(RegistryIssue("malformed", f"agent {name!r}: duplicate tool entries"))
        if len(set(sub_agents)) != len(sub_agents):
            add(RegistryIssue("malformed", f"agent {name!r}: duplicate sub-agent entries"))
        agents[name] = AgentDefinition(
            name=name,
            purpose=raw.get("purpose", ""),
            steps=list(raw.get("steps", [])),
            tools=tools,
            sub_agents=sub_agents,
            helpful_definitions=list(raw.get("helpful_definitions", [])),
        )

    for agent in agents.values():
        for tool in agent.tools:
            if tool not in functions:
                add(RegistryIssue("dangling", f"{tool}|agent {agent.name}"))
        for child in agent.sub_agents:
            if child not in agents:
                add(RegistryIssue("dangling", f"{child}|agent {agent.name}"))

    root = documents.get("root")
    if not root:
        add(RegistryIssue("malformed", "missing top-level 'root'"))
    elif root not in agents:
        add(RegistryIssue("dangling", f"{root}|root"))

    cycle = _find_cycle(agents)
    if cycle:
        add(RegistryIssue("cycle", f"sub-agent cycle {cycle}", path=cycle))

    rules: dict[str, dict[str, ParamRules]] = {}
    for function_name, per_param in documents.get("rules", {}).items():
        if function_name not in functions:
            add(RegistryIssue("dangling", f"{function_name}|rules"))
            continue
        rules[function_name] = {}
        for param, raw_rules in per_param.items():
            if param not in functions[function_name].parameters:
                add(
                    RegistryIssue(
                        "dangling", f"{param}|rules for {function_name}"
                    )
                )
                continue
            try:
                rules[function_name][param] = _parse_rules(raw_rules)
            except MalformedSchema as exc:
                add(
                    RegistryIssue(
                        "malformed", f"rules for {function_name}.{param}: {exc}"
                    )
                )

    tasks: dict[str, TaskDefinition] = {}
    for raw in documents.get("tasks", []):
        try:
            definition = TaskDefinition.from_dict(raw)
        except (KeyError, TypeError) as exc:
            add(RegistryIssue("malformed", f"task definition: {exc}"))
            continue
        if definition.name in tasks:
            add(RegistryIssue("duplicate", f"duplicate task name {definition.name!r}"))
            continue
        if definition.name not in functions:
            add(RegistryIssue("dangling", f"{definition.name}|tasks"))
            continue
        schema_params = set(functions[definition.name].parameters)
        for problem in definition.validate(schema_params):
            add(RegistryIssue("malformed", problem))
        tasks[definition.name] = definition

    if issues and not collect_all:
        return None
    if issues:
        return None
    return Registry(agents=agents, functions=functions, rules=rules, root=root, tasks=tasks)
