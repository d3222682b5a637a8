"""Shared multi-role chat history and per-session state.

A single append-only history thread is shared by every agent in a session.
Besides the usual system/user/agent roles there are dedicated roles for
function responses and guardrail reflections so agents can tell the
message sources apart.
"""

from __future__ import annotations

import copy as _copy
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional

from .errors import EmptyContent, InvalidSwitch, UnknownAgent

if TYPE_CHECKING:
    from .registry import Registry
    from .tasks import TaskExecution


class Role(Enum):
    """The five protocol roles a history entry can carry."""

    SYSTEM = "[SYSTEM]"
    USER = "[USER]"
    AGENT = "[AGENT]"
    FUNCTION_RESPONSE = "[FUNCTION_RESPONSE]"
    GUARDRAILS = "[GUARDRAILS]"

    @property
    def tag(self) -> str:
        return self.value

    @classmethod
    def from_tag(cls, tag: str) -> "Role":
        for role in cls:
            if role.value == tag:
                return role
        raise ValueError(f"unknown role tag {tag!r}")


USER_VISIBLE = "user-visible"
MODEL_ONLY = "model-only"

# Default audience per role. Guardrail reflections and system markers steer
# the model, raw function traffic is agent-facing; none of those belong in
# the user transcript. Guardrails is not just a default: it is forced.
_DEFAULT_VISIBILITY = {
    Role.SYSTEM: MODEL_ONLY,
    Role.USER: USER_VISIBLE,
    Role.AGENT: USER_VISIBLE,
    Role.FUNCTION_RESPONSE: MODEL_ONLY,
    Role.GUARDRAILS: MODEL_ONLY,
}


@dataclass
class Message:
    """One committed history entry. Never mutated after append."""

    role: Role
    content: str
    source: Optional[str] = None
    timestamp: int = 0
    visibility: str = USER_VISIBLE

    def render_line(self) -> str:
        if self.source:
            return f"{self.role.tag} ({self.source}): {self.content}"
        return f"{self.role.tag}: {self.content}"

    def to_dict(self) -> dict:
        return {
            "role": self.role.tag,
            "content": self.content,
            "source": self.source,
            "timestamp": self.timestamp,
            "visibility": self.visibility,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Message":
        return cls(
            role=Role.from_tag(data["role"]),
            content=data["content"],
            source=data.get("source"),
            timestamp=data.get("timestamp", 0),
            visibility=data.get("visibility", USER_VISIBLE),
        )


@dataclass
class Session:
    """One chat session: history, active agent and the agent stack.

    The stack records parent-to-child agent loads in order; its last element
    is always the active agent. A session is owned by one logical caller at
    a time, so methods do not lock.
    """

    session_id: str
    active_agent: str
    agent_stack: list[str]
    messages: list[Message] = field(default_factory=list)
    pending_task: Optional["TaskExecution"] = None
    system_prompt_version: int = 1

    def append_message(
        self,
        role: Role,
        content: str,
        source: Optional[str] = None,
        visibility: Optional[str] = None,
    ) -> Message:
        """Append one message at the tail; prior messages are never altered."""
        if not content or not content.strip():
            raise EmptyContent("message content must be non-empty")
        if role is Role.GUARDRAILS:
            visibility = MODEL_ONLY
        elif visibility is None:
            visibility = _DEFAULT_VISIBILITY[role]
        message = Message(
            role=role,
            content=content,
            source=source,
            timestamp=len(self.messages) + 1,
            visibility=visibility,
        )
        self.messages.append(message)
        return message

    def record_agent_switch(self, registry: "Registry", child_agent: str) -> Message:
        """Load a child agent: push it on the stack and mark the switch.

        The marker is a model-only system message; the prompt version bumps
        because the system prompt is rebuilt around the child's definition.
        """
        parent = self.active_agent
        parent_def = registry.agent(parent)
        if child_agent not in parent_def.sub_agents:
            raise InvalidSwitch(
                f"{child_agent!r} is not a sub-agent of {parent!r}"
            )
        marker = self.append_message(
            Role.SYSTEM,
            f"Agent switch: {parent} -> {child_agent}.",
            source=parent,
            visibility=MODEL_ONLY,
        )
        self.agent_stack.append(child_agent)
        self.active_agent = child_agent
        self.system_prompt_version += 1
        return marker

    def actor_utterances(self, include_function_responses: bool = False) -> list[str]:
        """Texts usable as the grounding corpus, in history order.

        By default only what the user actually typed. The extended mode also
        admits function-response contents, for deployments where tasks
        legitimately surface values the user never spelled out.
        """
        wanted = {Role.USER}
        if include_function_responses:
            wanted.add(Role.FUNCTION_RESPONSE)
        return [m.content for m in self.messages if m.role in wanted]

    def render_transcript(self, audience: str = "model") -> str:
        """Deterministic text rendering, one `[ROLE] (source): content` line per message.

        The model audience sees every role; the user audience sees only
        user-visible messages.
        """
        if audience not in ("model", "user"):
            raise ValueError(f"audience must be 'model' or 'user', got {audience!r}")
        lines = []
        for message in self.messages:
            if audience == "user" and message.visibility != USER_VISIBLE:
                continue
            lines.append(message.render_line())
        return "\n".join(lines)

    def copy(self) -> "Session":
        """Independent deep copy, used for speculative turn execution."""
        return _copy.deepcopy(self)

    def to_dict(self) -> dict:
        pending = self.pending_task.to_dict() if self.pending_task else None
        return {
            "session_id": self.session_id,
            "messages": [m.to_dict() for m in self.messages],
            "active_agent": self.active_agent,
            "agent_stack": list(self.agent_stack),
            "pending_task": pending,
            "system_prompt_version": self.system_prompt_version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Session":
        from .tasks import TaskExecution

        pending = data.get("pending_task")
        return cls(
            session_id=data["session_id"],
            active_agent=data["active_agent"],
            agent_stack=list(data["agent_stack"]),
            messages=[Message.from_dict(m) for m in data["messages"]],
            pending_task=TaskExecution.from_dict(pending) if pending else None,
            system_prompt_version=data.get("system_prompt_version", 1),
        )


def create_session(registry: "Registry", root_agent: Optional[str] = None) -> Session:
    """New session rooted at `root_agent` (the registry root by default)."""
    name = root_agent if root_agent is not None else registry.root
    if not registry.has_agent(name):
        raise UnknownAgent(f"agent {name!r} is not registered")
    return Session(
        session_id=uuid.uuid4().hex,
        active_agent=name,
        agent_stack=[name],
    )
