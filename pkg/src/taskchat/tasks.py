"""Deterministic multi-step task workflows.

A task wraps a linear sequence of external calls behind a single tool name.
Execution can pause to emit a progress update or to request an input, and
resumes from the exact step it stopped at.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Optional

from .errors import (
    DuplicateAction,
    MissingArgument,
    NotWaiting,
    TypeMismatch,
)

if TYPE_CHECKING:
    from .registry import Registry

RUNNING = "running"
NEEDS_INPUT = "needs_input"
UPDATE = "update"
DONE = "done"
FAILED = "failed"

VALUE_TYPES = {"string", "number", "boolean", "object"}

_REF_RE = re.compile(r"^(arg|step):([A-Za-z0-9_.-]+)$")
_TEMPLATE_RE = re.compile(r"\{(arg|step):([A-Za-z0-9_.-]+)\}")


@dataclass
class InputRequest:
    """A mid-flight request for one value, answered via resume."""

    prompt: str
    param: str
    type: str = "string"

    def to_dict(self) -> dict:
        return {"prompt": self.prompt, "param": self.param, "type": self.type}


@dataclass
class TaskStep:
    """One step: an external call, an emitted update, or an input request.

    `input` maps handler keyword arguments to `arg:<name>` or `step:<id>`
    references. A step may not both request input and call out; the recorded
    input occupies the step's output slot.
    """

    id: str
    call: Optional[str] = None
    input: dict[str, str] = field(default_factory=dict)
    emits: Optional[str] = None
    requires_input: Optional[InputRequest] = None

    @classmethod
    def from_dict(cls, data: dict) -> "TaskStep":
        req = data.get("requires_input")
        return cls(
            id=data["id"],
            call=data.get("call"),
            input=dict(data.get("input", {})),
            emits=data.get("emits"),
            requires_input=InputRequest(
                prompt=req["prompt"],
                param=req["param"],
                type=req.get("type", "string"),
            )
            if req
            else None,
        )

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"id": self.id}
        if self.call:
            out["call"] = self.call
        if self.input:
            out["input"] = dict(self.input)
        if self.emits:
            out["emits"] = self.emits
        if self.requires_input:
            out["requires_input"] = self.requires_input.to_dict()
        return out


@dataclass
class TaskDefinition:
    name: str
    steps: list[TaskStep]

    @classmethod
    def from_dict(cls, data: dict) -> "TaskDefinition":
        return cls(
            name=data["name"],
            steps=[TaskStep.from_dict(s) for s in data.get("steps", [])],
        )

    def validate(self, schema_params: Optional[set[str]] = None) -> list[str]:
        """Structural issues, empty when the definition is well formed.

        Input mappings may reference only declared arguments or outputs of
        earlier steps; this is checked here, at definition load.
        """
        issues: list[str] = []
        seen: set[str] = set()
        if not self.steps:
            issues.append(f"task {self.name!r} has no steps")
        for step in self.steps:
            if step.id in seen:
                issues.append(f"task {self.name!r}: duplicate step id {step.id!r}")
            if step.requires_input and step.call:
                issues.append(
                    f"task {self.name!r} step {step.id!r}: requires_input and call "
                    "are mutually exclusive"
                )
            if not (step.call or step.emits or step.requires_input):
                issues.append(
                    f"task {self.name!r} step {step.id!r}: must call, emit or request input"
                )
            if step.requires_input and step.requires_input.type not in VALUE_TYPES:
                issues.append(
                    f"task {self.name!r} step {step.id!r}: unknown input type "
                    f"{step.requires_input.type!r}"
                )
            for target, ref in step.input.items():
                match = _REF_RE.match(ref)
                if not match:
                    issues.append(
                        f"task {self.name!r} step {step.id!r}: bad input reference {ref!r}"
                    )
                    continue
                kind, name = match.groups()
                if kind == "arg" and schema_params is not None and name not in schema_params:
                    issues.append(
                        f"task {self.name!r} step {step.id!r}: argument {name!r} "
                        "is not declared by the function schema"
                    )
                if kind == "step" and name not in seen:
                    issues.append(
                        f"task {self.name!r} step {step.id!r}: references step "
                        f"{name!r} which is not an earlier step"
                    )
            seen.add(step.id)
        return issues


@dataclass
class TaskEvent:
    """Append-only log entry: call, update, input_request, done or failed."""

    kind: str
    detail: Any

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


@dataclass
class TaskExecution:
    task: str
    args: dict[str, Any]
    cursor: int = 0
    state: str = RUNNING
    update_text: Optional[str] = None
    request: Optional[InputRequest] = None
    result: Any = None
    error: Optional[str] = None
    outputs: dict[str, Any] = field(default_factory=dict)
    log: list[TaskEvent] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "args": dict(self.args),
            "cursor": self.cursor,
            "state": self.state,
            "update_text": self.update_text,
            "request": self.request.to_dict() if self.request else None,
            "result": self.result,
            "error": self.error,
            "outputs": dict(self.outputs),
            "log": [e.to_dict() for e in self.log],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TaskExecution":
        req = data.get("request")
        return cls(
            task=data["task"],
            args=dict(data["args"]),
            cursor=data.get("cursor", 0),
            state=data.get("state", RUNNING),
            update_text=data.get("update_text"),
            request=InputRequest(req["prompt"], req["param"], req.get("type", "string"))
            if req
            else None,
            result=data.get("result"),
            error=data.get("error"),
            outputs=dict(data.get("outputs", {})),
            log=[TaskEvent(e["kind"], e["detail"]) for e in data.get("log", [])],
        )


class ActionRegistry:
    """Binds external action ids to callables (API clients, test stubs)."""

    def __init__(self):
        self._handlers: dict[str, Callable[..., Any]] = {}

    def register(self, action_id: str, handler: Callable[..., Any]) -> None:
        if action_id in self._handlers:
            raise DuplicateAction(f"action {action_id!r} is already registered")
        self._handlers[action_id] = handler

    def get(self, action_id: str) -> Optional[Callable[..., Any]]:
        return self._handlers.get(action_id)

    def ids(self) -> list[str]:
        return sorted(self._handlers)


_DEFAULT_ACTIONS = ActionRegistry()


def register_external_action(
    action_id: str,
    handler: Callable[..., Any],
    actions: Optional[ActionRegistry] = None,
) -> None:
    (actions or _DEFAULT_ACTIONS).register(action_id, handler)


def default_actions() -> ActionRegistry:
    return _DEFAULT_ACTIONS


def value_matches_type(value: Any, expected: str) -> bool:
    if expected == "string":
        return isinstance(value, str)
    if expected == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected == "boolean":
        return isinstance(value, bool)
    if expected == "object":
        return isinstance(value, dict)
    return False


def _render_value(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value)


class TaskRunner:
    """Executes task definitions against a registry and an action table."""

    def __init__(self, registry: "Registry", actions: ActionRegistry):
        self.registry = registry
        self.actions = actions

    def start_task(self, name: str, args: dict[str, Any]) -> TaskExecution:
        """Run a task until it pauses or terminates.

        Required arguments are rechecked here; a miss means the caller
        bypassed validation, so it raises instead of failing the execution.
        """
        schema = self.registry.function(name)
        if schema is not None:
            for required in schema.required:
                if required not in args:
                    raise MissingArgument(
                        f"task {name!r} requires argument {required!r}"
                    )
        execution = TaskExecution(task=name, args=dict(args))
        return self._run(execution)

    def resume_task(self, execution: TaskExecution, value: Any) -> TaskExecution:
        """Supply the awaited input and continue from the paused step."""
        if execution.state != NEEDS_INPUT or execution.request is None:
            raise NotWaiting(f"task {execution.task!r} is not waiting for input")
        expected = execution.request.type
        if not value_matches_type(value, expected):
            raise TypeMismatch(
                f"input {execution.request.param!r} must be {expected}, "
                f"got {value!r}"
            )
        definition = self.registry.task(execution.task)
        step = definition.steps[execution.cursor]
        execution.outputs[step.id] = value
        execution.request = None
        execution.state = RUNNING
        return self._run(execution)

    def advance_task(self, execution: TaskExecution) -> TaskExecution:
        """Continue past an emitted update."""
        if execution.state != UPDATE:
            raise NotWaiting(f"task {execution.task!r} is not paused on an update")
        execution.update_text = None
        execution.state = RUNNING
        return self._run(execution)

    def _fail(self, execution: TaskExecution, message: str) -> TaskExecution:
        execution.state = FAILED
        execution.error = message
        execution.log.append(TaskEvent("failed", message))
        return execution

    def _run(self, execution: TaskExecution) -> TaskExecution:
        definition = self.registry.task(execution.task)
        if definition is None:
            return self._fail(
                execution, f"no task definition registered for {execution.task!r}"
            )
        steps = definition.steps
        while execution.cursor < len(steps):
            step = steps[execution.cursor]
            if step.requires_input is not None and step.id not in execution.outputs:
                execution.state = NEEDS_INPUT
                execution.request = step.requires_input
                execution.log.append(
                    TaskEvent("input_request", step.requires_input.to_dict())
                )
                return execution
            if step.call is not None:
                handler = self.actions.get(step.call)
                if handler is None:
                    return self._fail(
                        execution,
                        f"step {step.id!r} references unregistered action {step.call!r}",
                    )
                try:
                    kwargs = {
                        target: self._resolve_ref(execution, ref)
                        for target, ref in step.input.items()
                    }
                    output = handler(**kwargs)
                except Exception as exc:  # handler faults become Failed state
                    return self._fail(
                        execution, f"step {step.id!r} ({step.call}) failed: {exc}"
                    )
                execution.outputs[step.id] = output
                execution.log.append(
                    TaskEvent("call", {"step": step.id, "action": step.call})
                )
            execution.cursor += 1
            if step.emits is not None:
                text = self._render_template(execution, step.emits)
                execution.state = UPDATE
                execution.update_text = text
                execution.log.append(TaskEvent("update", text))
                return execution
        execution.state = DONE
        execution.result = self._final_result(definition, execution)
        execution.log.append(TaskEvent("done", execution.result))
        return execution

    def _final_result(self, definition: TaskDefinition, execution: TaskExecution) -> Any:
        for step in reversed(definition.steps):
            if step.id in execution.outputs:
                return execution.outputs[step.id]
        return None

    def _resolve_ref(self, execution: TaskExecution, ref: str) -> Any:
        match = _REF_RE.match(ref)
        if not match:
            raise ValueError(f"bad input reference {ref!r}")
        kind, name = match.groups()
        if kind == "arg":
            if name not in execution.args:
                raise ValueError(f"argument {name!r} was not provided")
            return execution.args[name]
        if name not in execution.outputs:
            raise ValueError(f"step output {name!r} is not available")
        return execution.outputs[name]

    def _render_template(self, execution: TaskExecution, template: str) -> str:
        def substitute(match: re.Match) -> str:
            ref = f"{match.group(1)}:{match.group(2)}"
            return _render_value(self._resolve_ref(execution, ref))

        return _TEMPLATE_RE.sub(substitute, template)
