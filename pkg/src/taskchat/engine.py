"""Turn orchestration: routing, the agent loop, dispatch and event streams.

One engine serves many sessions. Each user message becomes a turn: the
intent router classifies it while the agent loop runs speculatively on a
session copy; an Action verdict commits the copy and finishes the turn for
real (deterministic tasks execute only after commit), anything else discards
it. Every turn emits an ordered sequence of events ending in a final reply
or a technical issue.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import intents
from .conversation import Role, Session, create_session
from .errors import ProviderError, UnknownFunctionAtDispatch, UnknownSession
from .gateway import Backend, CompletionParams
from .guardrails import (
    GuardrailConfig,
    Reflect,
    TechnicalIssue as GuardrailExhausted,
    run_with_guardrails,
)
from .intents import ClassifierConfig, Intent
from .prompts import AgentAction
from .registry import AgentDefinition, FunctionSchema, Registry
from .tasks import (
    DONE,
    FAILED,
    NEEDS_INPUT,
    UPDATE,
    ActionRegistry,
    TaskExecution,
    TaskRunner,
)

logger = logging.getLogger(__name__)

TECHNICAL_ISSUE_REPLY = "Facing Technical Issue"

EVENT_KINDS = (
    "AgentMessage",
    "ToolInvoked",
    "TaskUpdate",
    "InputRequested",
    "AgentSwitched",
    "GuardrailRetry",
    "FinalReply",
    "TechnicalIssue",
)

TERMINAL_KINDS = ("FinalReply", "TechnicalIssue")


@dataclass
class TurnEvent:
    """Externally observable event; wire form {sequence, kind, payload}."""

    sequence: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"sequence": self.sequence, "kind": self.kind, "payload": self.payload}


@dataclass
class EngineConfig:
    max_turn_steps: int = 8
    single_agent_mode: bool = False
    guardrails: GuardrailConfig = field(default_factory=GuardrailConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    completion: CompletionParams = field(default_factory=CompletionParams)
    ood_rejection_message: str = intents.DEFAULT_OOD_MESSAGE
    template: Optional[str] = None
    instructions: Optional[str] = None

    def __post_init__(self):
        if self.max_turn_steps < 1:
            raise ValueError("max_turn_steps must be >= 1")


@dataclass
class _TurnState:
    """Mutable bookkeeping for one turn while its events are still drafts."""

    session: Session
    drafts: list[tuple[str, dict]] = field(default_factory=list)
    latency: float = 0.0
    input_tokens: int = 0
    output_tokens: int = 0
    guardrail_calls: int = 0
    steps: int = 0
    pending_action: Optional[AgentAction] = None
    done: bool = False
    intent: Optional[str] = None

    def draft(self, kind: str, payload: dict) -> None:
        self.drafts.append((kind, payload))

    def absorb_usage(self, usage) -> None:
        self.latency += usage.latency
        self.input_tokens += usage.input_tokens
        self.output_tokens += usage.output_tokens
        self.guardrail_calls += usage.calls


class Engine:
    """Owns sessions, backends and the turn loop.

    Sessions never run two turns at once; concurrent sends for the same
    session queue on its lock. Distinct sessions are fully independent.
    """

    def __init__(
        self,
        registry: Registry,
        agent_backend: Backend,
        classifier_backend: Optional[Backend] = None,
        actions: Optional[ActionRegistry] = None,
        config: Optional[EngineConfig] = None,
        info_answerer: Optional[Callable[[str], str]] = None,
    ):
        self.config = config or EngineConfig()
        self.registry = (
            registry.as_single_agent() if self.config.single_agent_mode else registry
        )
        self.agent_backend = agent_backend
        self.classifier_backend = classifier_backend or agent_backend
        self.actions = actions or ActionRegistry()
        self.runner = TaskRunner(self.registry, self.actions)
        self.info_answerer = info_answerer
        self._sessions: dict[str, Session] = {}
        self._events: dict[str, list[TurnEvent]] = {}
        self._sequences: dict[str, int] = {}
        self._turn_locks: dict[str, threading.Lock] = {}
        self._store_lock = threading.Lock()

    # -- session store ----------------------------------------------------

    def create_session(self, root_agent: Optional[str] = None) -> Session:
        session = create_session(self.registry, root_agent)
        with self._store_lock:
            self._sessions[session.session_id] = session
            self._events[session.session_id] = []
            self._sequences[session.session_id] = 0
            self._turn_locks[session.session_id] = threading.Lock()
        return session

    def session(self, session_id: str) -> Session:
        with self._store_lock:
            if session_id not in self._sessions:
                raise UnknownSession(f"no session {session_id!r}")
            return self._sessions[session_id]

    def events_after(self, session_id: str, after: int = -1) -> list[TurnEvent]:
        with self._store_lock:
            if session_id not in self._events:
                raise UnknownSession(f"no session {session_id!r}")
            return [e for e in self._events[session_id] if e.sequence > after]

    def transcript(self, session_id: str, audience: str = "user") -> str:
        return self.session(session_id).render_transcript(audience)

    def snapshot(self, session_id: str) -> dict:
        return self.session(session_id).to_dict()

    # -- the turn ----------------------------------------------------------

    def handle_user_message(self, session_id: str, text: str) -> list[TurnEvent]:
        """Run one full turn and return its events in order.

        The events are also appended to the session's event log with
        session-scoped, gapless sequence numbers (the SSE stream reads from
        that log).
        """
        with self._store_lock:
            if session_id not in self._sessions:
                raise UnknownSession(f"no session {session_id!r}")
            lock = self._turn_locks[session_id]
        with lock:
            return self._run_turn(session_id, text)

    def _run_turn(self, session_id: str, text: str) -> list[TurnEvent]:
        session = self._sessions[session_id]
        session.append_message(Role.USER, text, source="actor")
        turn = _TurnState(session=session)
        try:
            routed = intents.route(
                session,
                self.config.classifier,
                self.classifier_backend,
                speculate=lambda: self._speculate(session),
                info_answerer=self.info_answerer,
                ood_message=self.config.ood_rejection_message,
            )
            if routed.intent is Intent.ACTION:
                speculation: _TurnState = routed.speculation
                with self._store_lock:
                    self._sessions[session_id] = speculation.session
                turn = speculation
                turn.intent = routed.intent.value
                if not turn.done:
                    self._action_loop(turn, start_action=turn.pending_action)
            else:
                turn.intent = routed.intent.value
                reply = routed.reply or self.config.ood_rejection_message
                session.append_message(Role.AGENT, reply, source=session.active_agent)
                turn.draft(
                    "FinalReply",
                    {"content": reply, "agent": session.active_agent},
                )
        except (ProviderError, UnknownFunctionAtDispatch) as exc:
            current = self._sessions[session_id]
            current.append_message(
                Role.AGENT, TECHNICAL_ISSUE_REPLY, source=current.active_agent
            )
            turn.draft(
                "TechnicalIssue",
                {
                    "content": TECHNICAL_ISSUE_REPLY,
                    "diagnostic": f"{type(exc).__name__}: {exc}",
                },
            )
        return self._commit_events(session_id, turn)

    def _speculate(self, session: Session) -> _TurnState:
        """Run the agent loop on a copy, stopping before any task executes."""
        turn = _TurnState(session=session.copy())
        self._action_loop(turn, defer_tasks=True)
        return turn

    def _commit_events(self, session_id: str, turn: _TurnState) -> list[TurnEvent]:
        events: list[TurnEvent] = []
        with self._store_lock:
            sequence = self._sequences[session_id]
            for index, (kind, payload) in enumerate(turn.drafts):
                if kind in TERMINAL_KINDS and index == len(turn.drafts) - 1:
                    payload = dict(payload)
                    payload["latency_seconds"] = turn.latency
                    payload["input_tokens"] = turn.input_tokens
                    payload["output_tokens"] = turn.output_tokens
                    if turn.intent is not None:
                        payload["intent"] = turn.intent
                events.append(TurnEvent(sequence=sequence, kind=kind, payload=payload))
                sequence += 1
            self._sequences[session_id] = sequence
            self._events[session_id].extend(events)
        return events

    def _technical(self, turn: _TurnState, diagnostic: str) -> None:
        turn.session.append_message(
            Role.AGENT, TECHNICAL_ISSUE_REPLY, source=turn.session.active_agent
        )
        turn.draft(
            "TechnicalIssue", {"content": TECHNICAL_ISSUE_REPLY, "diagnostic": diagnostic}
        )
        turn.done = True

    def _action_loop(
        self,
        turn: _TurnState,
        defer_tasks: bool = False,
        start_action: Optional[AgentAction] = None,
    ) -> None:
        """Drive agent reasoning and dispatch until the turn resolves.

        With defer_tasks the loop returns right before the first
        deterministic-task dispatch (turn.pending_action set, turn.done
        False); committing re-enters with that action.
        """
        session = turn.session
        action = start_action
        turn.pending_action = None
        while True:
            if action is None:
                if turn.steps >= self.config.max_turn_steps:
                    self._technical(
                        turn, f"turn did not resolve within {self.config.max_turn_steps} steps"
                    )
                    return
                turn.steps += 1
                agent = self.registry.agent(session.active_agent)

                def on_retry(reflect: Reflect) -> None:
                    turn.draft(
                        "GuardrailRetry",
                        {
                            "attempt": reflect.attempt,
                            "reflection": reflect.message,
                            "findings": [f.to_dict() for f in reflect.findings],
                        },
                    )

                verdict = run_with_guardrails(
                    agent,
                    self.registry,
                    session,
                    self.agent_backend,
                    config=self.config.guardrails,
                    params=self.config.completion,
                    template=self.config.template,
                    instructions=self.config.instructions,
                    on_retry=on_retry,
                )
                turn.absorb_usage(verdict.usage)
                if isinstance(verdict, GuardrailExhausted):
                    self._technical(turn, "guardrail retries exhausted")
                    return
                action = verdict.action

            call = action.function_call
            if call is None:
                session.append_message(Role.AGENT, action.content, source=session.active_agent)
                turn.draft(
                    "FinalReply", {"content": action.content, "agent": session.active_agent}
                )
                turn.done = True
                return

            resolved = self.registry.resolve_callable(session.active_agent, call.name)
            if resolved is None:
                # Only reachable with the function-existence check ablated.
                raise UnknownFunctionAtDispatch(
                    f"{call.name} resolved to nothing for agent {session.active_agent}"
                )
            if isinstance(resolved, FunctionSchema) and defer_tasks:
                turn.pending_action = action
                return

            session.append_message(Role.AGENT, action.content, source=session.active_agent)
            turn.draft(
                "AgentMessage", {"content": action.content, "agent": session.active_agent}
            )
            if isinstance(resolved, AgentDefinition):
                parent = session.active_agent
                session.record_agent_switch(self.registry, call.name)
                turn.draft("AgentSwitched", {"from": parent, "to": call.name})
            else:
                self._dispatch_tool(turn, action, resolved)
            action = None

    def dispatch_action(self, session_id: str, action: AgentAction) -> list[TurnEvent]:
        """Dispatch one already-accepted action outside the routed turn flow.

        Exposed for harness-style callers; the normal path is
        handle_user_message.
        """
        with self._store_lock:
            if session_id not in self._sessions:
                raise UnknownSession(f"no session {session_id!r}")
            lock = self._turn_locks[session_id]
        with lock:
            turn = _TurnState(session=self._sessions[session_id])
            self._action_loop(turn, start_action=action)
            return self._commit_events(session_id, turn)

    def _dispatch_tool(
        self, turn: _TurnState, action: AgentAction, schema: FunctionSchema
    ) -> None:
        """Start or resume the deterministic task behind a tool call."""
        session = turn.session
        call = action.function_call
        assert call is not None
        pending = session.pending_task
        if (
            pending is not None
            and pending.state == NEEDS_INPUT
            and pending.request is not None
            and pending.task == call.name
        ):
            param = pending.request.param
            if param not in call.arguments:
                session.append_message(
                    Role.FUNCTION_RESPONSE,
                    f"{call.name} is still waiting for input {param!r}.",
                    source=call.name,
                )
                return
            turn.draft(
                "ToolInvoked",
                {"name": call.name, "arguments": call.arguments, "resumed": True},
            )
            try:
                execution = self.runner.resume_task(pending, call.arguments[param])
            except Exception as exc:
                session.append_message(
                    Role.FUNCTION_RESPONSE,
                    f"{call.name} could not resume: {exc}",
                    source=call.name,
                )
                return
        else:
            turn.draft(
                "ToolInvoked",
                {"name": call.name, "arguments": call.arguments, "resumed": False},
            )
            try:
                execution = self.runner.start_task(call.name, call.arguments)
            except Exception as exc:
                session.append_message(
                    Role.FUNCTION_RESPONSE,
                    f"{call.name} could not start: {exc}",
                    source=call.name,
                )
                return
        self._drain_execution(turn, execution)

    def _drain_execution(self, turn: _TurnState, execution: TaskExecution) -> None:
        """Relay updates and requests into the history until the task rests."""
        session = turn.session
        while True:
            if execution.state == UPDATE:
                text = execution.update_text or ""
                session.append_message(Role.FUNCTION_RESPONSE, text, source=execution.task)
                turn.draft("TaskUpdate", {"task": execution.task, "text": text})
                execution = self.runner.advance_task(execution)
                continue
            if execution.state == NEEDS_INPUT:
                request = execution.request
                assert request is not None
                session.pending_task = execution
                session.append_message(
                    Role.FUNCTION_RESPONSE,
                    f"{execution.task} requires input {request.param!r} "
                    f"({request.type}): {request.prompt}",
                    source=execution.task,
                )
                turn.draft(
                    "InputRequested",
                    {
                        "task": execution.task,
                        "param": request.param,
                        "type": request.type,
                        "prompt": request.prompt,
                    },
                )
                return
            if execution.state == DONE:
                session.pending_task = None
                body = execution.result if isinstance(execution.result, str) else json.dumps(
                    execution.result
                )
                session.append_message(
                    Role.FUNCTION_RESPONSE,
                    f"{execution.task} completed: {body}",
                    source=execution.task,
                )
                return
            if execution.state == FAILED:
                session.pending_task = None
                session.append_message(
                    Role.FUNCTION_RESPONSE,
                    f"{execution.task} failed: {execution.error}",
                    source=execution.task,
                )
                return
            raise RuntimeError(f"unexpected task state {execution.state!r}")
