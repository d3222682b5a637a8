"""Agent prompt assembly and the structured response envelope.

Function calling is in-band: the agent prompt describes the available tools
as JSONSchema text and the model answers with a single
<response>{...}</response> envelope carrying the user-facing message and an
optional function call. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .conversation import Session
from .errors import UnknownPlaceholder
from .registry import AgentDefinition, FunctionSchema, ParamSpec, Registry

DEFAULT_TEMPLATE = """{{agent_name}}, {{agent_purpose}}
<TEP_STEPS>
{{agent_task_execution_steps}}
</TEP_STEPS>
Sub-Tasks:
<sub_tasks>
{{sub_task_agents}}
</sub_tasks>
Tools:
<tools>
{{agent_tools}}
</tools>
Place to Add important instructions:
<instructions>
{{instructions}}
</instructions>
Placeholder for chat history
<history> {{history}} </history>"""

KNOWN_PLACEHOLDERS = {
    "agent_name",
    "agent_purpose",
    "agent_task_execution_steps",
    "sub_task_agents",
    "agent_tools",
    "instructions",
    "history",
}

DEFAULT_INSTRUCTIONS = (
    "Reason inside <thinking></thinking> tags if helpful, then answer with exactly one "
    '<response>{...}</response> envelope holding a JSON object. "content" (string) is '
    'mandatory: the message to convey back to the user. "function_call" is optional: an '
    'object with "name" and "arguments", where arguments is a JSON-object-encoded string. '
    "Only invoke the tools and sub-task agents listed above. To hand off to a sub-task "
    "agent, put its name in function_call.name."
)

_PLACEHOLDER_RE = re.compile(r"\{\{([A-Za-z_]+)\}\}")
_RESPONSE_RE = re.compile(r"<response>(.*?)</response>", re.DOTALL)


@dataclass
class FunctionCall:
    name: str
    arguments: dict[str, Any] = field(default_factory=dict)


@dataclass
class AgentAction:
    """A parsed agent turn: the user-facing message plus at most one call."""

    content: str
    function_call: Optional[FunctionCall] = None


@dataclass
class FormatError:
    """Why a raw model output could not be parsed into an AgentAction."""

    reason: str  # missing_envelope | invalid_json | missing_content | bad_arguments_encoding
    raw: str


ParseOutcome = Union[AgentAction, FormatError]


def render_function_schema(schema: FunctionSchema) -> str:
    """Canonical JSONSchema text for one tool, stable key order."""
    doc = {
        "name": schema.name,
        "description": schema.description,
        "parameters": {
            "type": "object",
            "properties": {
                name: {"type": spec.type, "description": spec.description}
                for name, spec in schema.parameters.items()
            },
            "required": list(schema.required),
        },
    }
    return json.dumps(doc, indent=2)


def parse_function_schema(text: str) -> FunctionSchema:
    """Inverse of render_function_schema (the internal `kind` is not carried)."""
    doc = json.loads(text)
    params_block = doc.get("parameters", {})
    properties = params_block.get("properties", {})
    return FunctionSchema(
        name=doc["name"],
        description=doc.get("description", ""),
        parameters={
            name: ParamSpec(type=spec["type"], description=spec.get("description", ""))
            for name, spec in properties.items()
        },
        required=list(params_block.get("required", [])),
    )


def assemble_agent_prompt(
    agent: AgentDefinition,
    registry: Registry,
    session: Session,
    template: Optional[str] = None,
    instructions: Optional[str] = None,
) -> str:
    """Fill the agent prompt template from the agent, registry and history.

    Task execution steps land inside <TEP_STEPS>, sub-agents inside
    <sub_tasks>, tools as JSONSchema text inside <tools>, the model-audience
    transcript inside <history>. Helpful definitions, when the agent carries
    any, are appended to the instructions inside <helpful_definitions> tags.
    """
    text = template if template is not None else DEFAULT_TEMPLATE
    names = set(_PLACEHOLDER_RE.findall(text))
    unknown = names - KNOWN_PLACEHOLDERS
    if unknown:
        raise UnknownPlaceholder(f"unsupported placeholders: {sorted(unknown)}")

    steps = "\n".join(f"{i}. {step}" for i, step in enumerate(agent.steps, start=1))
    sub_tasks = "\n".join(
        f"{name}: {registry.agent(name).purpose}" for name in agent.sub_agents
    )
    tools = "\n".join(
        render_function_schema(registry.functions[tool]) for tool in agent.tools
    )
    instruction_text = instructions if instructions is not None else DEFAULT_INSTRUCTIONS
    if agent.helpful_definitions:
        joined = ", ".join(agent.helpful_definitions)
        instruction_text = (
            f"{instruction_text}\n<helpful_definitions>{joined}</helpful_definitions>"
        )
    values = {
        "agent_name": agent.name,
        "agent_purpose": agent.purpose,
        "agent_task_execution_steps": steps,
        "sub_task_agents": sub_tasks,
        "agent_tools": tools,
        "instructions": instruction_text,
        "history": session.render_transcript("model"),
    }
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], text)


def parse_agent_response(raw: str) -> ParseOutcome:
    """Extract and decode the first response envelope from a raw model output.

    Total over arbitrary input: any text, however broken, yields either an
    AgentAction or a FormatError, never an exception. Chain-of-thought text
    around the envelope is ignored; the first envelope wins when several
    appear. `arguments` is accepted both as a JSON-object-encoded string and
    as a direct object.
    """
    if not isinstance(raw, str):
        raw = str(raw)
    match = _RESPONSE_RE.search(raw)
    if match is None:
        return FormatError(reason="missing_envelope", raw=raw)
    body = match.group(1).strip()
    try:
        data = json.loads(body)
    except Exception:
        return FormatError(reason="invalid_json", raw=raw)
    if not isinstance(data, dict):
        return FormatError(reason="invalid_json", raw=raw)
    content = data.get("content")
    if not isinstance(content, str) or not content.strip():
        return FormatError(reason="missing_content", raw=raw)
    call = data.get("function_call")
    if call is None:
        return AgentAction(content=content)
    if not isinstance(call, dict):
        return FormatError(reason="invalid_json", raw=raw)
    name = call.get("name")
    if not isinstance(name, str) or not name.strip():
        return FormatError(reason="invalid_json", raw=raw)
    arguments = call.get("arguments", {})
    if isinstance(arguments, str):
        try:
            arguments = json.loads(arguments)
        except Exception:
            return FormatError(reason="bad_arguments_encoding", raw=raw)
    if not isinstance(arguments, dict):
        return FormatError(reason="bad_arguments_encoding", raw=raw)
    return AgentAction(content=content, function_call=FunctionCall(name=name, arguments=arguments))


def render_agent_action(action: AgentAction) -> str:
    """Envelope text for an action; arguments are stringified per the wire format."""
    payload: dict[str, Any] = {"content": action.content}
    if action.function_call is not None:
        payload["function_call"] = {
            "name": action.function_call.name,
            "arguments": json.dumps(action.function_call.arguments),
        }
    return f"<response>{json.dumps(payload)}</response>"


def normalize_argument_value(value: Any, declared_type: Optional[str]) -> Any:
    """Type-aware cleanup of one generated argument value.

    Boolean-typed parameters accept "true"/"false" strings case-insensitively
    and normalize to real booleans; everything else passes through.
    """
    if declared_type == "boolean" and isinstance(value, str):
        lowered = value.strip().casefold()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
    return value
