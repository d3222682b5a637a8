"""Reflection guardrails over model outputs.

Every agent output passes four check classes before dispatch: output format,
function existence, parameter grounding and static parameter rules.
Undeclared parameters are silently pruned. A failing output gets a
reflection message appended to the history (guardrails role) and the model
is retried; after the retry budget is spent the turn surfaces a technical
issue instead.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

from .conversation import Role, Session
from .gateway import Backend, CompletionParams, CompletionRequest
from .prompts import (
    AgentAction,
    FormatError,
    FunctionCall,
    assemble_agent_prompt,
    normalize_argument_value,
    parse_agent_response,
)
from .registry import AgentDefinition, FunctionSchema, ParamRules, Registry
from .tasks import NEEDS_INPUT

logger = logging.getLogger(__name__)

FORMAT_REFLECTION = "Output R is not as per required formatting guidelines."

FINDING_FORMAT = "format"
FINDING_UNKNOWN_FUNCTION = "unknown_function"
FINDING_PRUNED = "pruned_parameter"
FINDING_UNGROUNDED = "ungrounded_value"
FINDING_RULES = "rule_violation"

CHECK_NAMES = ("format", "function", "grounding", "rules")


def unknown_function_reflection(name: str) -> str:
    return f"Function {name} not present in Agent tools and Sub-Agents."


def ungrounded_reflection(param: str) -> str:
    return f"Value of {param} not provided by the user."


def rules_reflection(param: str, violations: list[str]) -> str:
    return f"Following rules not satisfied by {param}: {'; '.join(violations)}."


@dataclass
class GuardrailFinding:
    kind: str
    detail: str
    parameter: Optional[str] = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind, "detail": self.detail}
        if self.parameter is not None:
            out["parameter"] = self.parameter
        return out


@dataclass
class GuardrailConfig:
    """Retry budget and per-class check toggles.

    The budget is shared across all error classes. `reflect` controls
    whether the reflection text is injected before a retry; disabling it
    retries on the identical prompt (ablation mode). The grounding corpus is
    user messages only unless `ground_function_responses` widens it.
    """

    max_retries: int = 2
    format_check: bool = True
    function_check: bool = True
    grounding_check: bool = True
    rules_check: bool = True
    reflect: bool = True
    ground_function_responses: bool = False

    @classmethod
    def all_disabled(cls, max_retries: int = 0) -> "GuardrailConfig":
        return cls(
            max_retries=max_retries,
            format_check=False,
            function_check=False,
            grounding_check=False,
            rules_check=False,
        )

    def disabled(self, check: str) -> "GuardrailConfig":
        """Copy with one named check class turned off (ablation)."""
        if check not in CHECK_NAMES:
            raise ValueError(f"unknown check {check!r}; expected one of {CHECK_NAMES}")
        out = GuardrailConfig(**vars(self))
        setattr(out, f"{check}_check", False)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "GuardrailConfig":
        config = cls(
            max_retries=raw.get("max_retries", 2),
            reflect=raw.get("reflect", True),
            ground_function_responses=raw.get("ground_function_responses", False),
        )
        if "checks" in raw:
            enabled = set(raw["checks"])
            for check in CHECK_NAMES:
                setattr(config, f"{check}_check", check in enabled)
        return config


@dataclass
class Usage:
    calls: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0

    def add(self, input_tokens: int, output_tokens: int, latency: float) -> None:
        self.calls += 1
        self.input_tokens += input_tokens
        self.output_tokens += output_tokens
        self.latency += latency


@dataclass
class Accepted:
    """The action passed every enabled check; only prunes may remain."""

    action: AgentAction
    findings: list[GuardrailFinding] = field(default_factory=list)
    attempt: int = 0
    usage: Usage = field(default_factory=Usage)


@dataclass
class Reflect:
    """Blocking findings; `message` is the reflection text for the retry."""

    message: str
    findings: list[GuardrailFinding]
    attempt: int = 0


@dataclass
class TechnicalIssue:
    """The retry budget is exhausted; findings are kept per attempt."""

    findings: list[list[GuardrailFinding]]
    attempt: int = 0
    usage: Usage = field(default_factory=Usage)


GuardrailVerdict = Union[Accepted, Reflect, TechnicalIssue]

_STRIP_SYMBOLS = str.maketrans("", "", "$%,")


def _candidate_texts(value: Any) -> list[str]:
    if isinstance(value, bool):
        return [str(value).casefold()]
    if isinstance(value, float) and value.is_integer():
        texts = [str(int(value)), str(value)]
    elif isinstance(value, (int, float)):
        texts = [str(value)]
    else:
        base = str(value).strip()
        texts = [base, base.translate(_STRIP_SYMBOLS)]
    out = []
    for text in texts:
        folded = text.casefold()
        if folded and folded not in out:
            out.append(folded)
    return out


def check_grounding(value: Any, corpus: list[str]) -> bool:
    """True iff the normalized value occurs in some corpus entry.

    Comparison is case-insensitive with surrounding whitespace trimmed;
    currency and formatting symbols ($, %, commas) are stripped so "$50"
    grounds the number 50.
    """
    candidates = _candidate_texts(value)
    if not candidates:
        return False
    for entry in corpus:
        folded = entry.casefold()
        stripped = folded.translate(_STRIP_SYMBOLS)
        for candidate in candidates:
            if candidate in folded or candidate in stripped:
                return True
    return False


def _value_grounded(value: Any, corpus: list[str]) -> bool:
    """Grounding over leaf scalars; booleans are exempt at any depth."""
    if isinstance(value, bool):
        return True
    if isinstance(value, dict):
        return all(_value_grounded(v, corpus) for v in value.values())
    if isinstance(value, list):
        return all(_value_grounded(v, corpus) for v in value)
    return check_grounding(value, corpus)


def apply_static_rules(value: Any, rules: ParamRules) -> list[str]:
    """Violation texts for the configured rules; empty when all hold."""
    violations: list[str] = []
    text = str(value)
    if rules.min_length is not None and len(text) < rules.min_length:
        violations.append(f"length {len(text)} < minimum {rules.min_length}")
    if rules.max_length is not None and len(text) > rules.max_length:
        violations.append(f"length {len(text)} > maximum {rules.max_length}")
    if rules.charset is not None:
        checkers = {
            "alphanumeric": str.isalnum,
            "numeric": str.isdigit,
            "alphabetic": str.isalpha,
        }
        if not text or not checkers[rules.charset](text):
            violations.append(f"value {text!r} is not {rules.charset}")
    if rules.pattern is not None and re.fullmatch(rules.pattern, text) is None:
        violations.append(f"value {text!r} does not match pattern {rules.pattern!r}")
    if rules.enum is not None:
        if value not in rules.enum and text not in {str(e) for e in rules.enum}:
            violations.append(f"value {text!r} not one of {rules.enum}")
    return violations


def validate(
    agent: AgentDefinition,
    registry: Registry,
    session: Session,
    outcome: Union[AgentAction, FormatError],
    config: Optional[GuardrailConfig] = None,
) -> Union[Accepted, Reflect]:
    """Run the enabled checks over one parsed output.

    Check order: format, function existence, then per parameter pruning,
    grounding (non-boolean values only) and static rules; rules run only for
    values that grounded. Pruning never blocks. All blocking findings of one
    attempt fold into a single reflection message.
    """
    config = config or GuardrailConfig()

    if isinstance(outcome, FormatError):
        if config.format_check:
            finding = GuardrailFinding(FINDING_FORMAT, outcome.reason)
            return Reflect(message=FORMAT_REFLECTION, findings=[finding])
        # Format enforcement ablated: degrade the raw output to a plain reply
        # so the turn can still answer.
        content = outcome.raw.strip() or "(empty model output)"
        return Accepted(action=AgentAction(content=content))

    action = outcome
    if action.function_call is None:
        return Accepted(action=action)

    call = action.function_call
    resolved = registry.resolve_callable(agent.name, call.name)
    if resolved is None:
        if config.function_check:
            finding = GuardrailFinding(
                FINDING_UNKNOWN_FUNCTION, f"{call.name} is not callable by {agent.name}"
            )
            return Reflect(
                message=unknown_function_reflection(call.name), findings=[finding]
            )
        return Accepted(action=action)
    if isinstance(resolved, AgentDefinition):
        # Sub-agent switches carry no parameter schema; nothing to check.
        return Accepted(action=action)

    schema: FunctionSchema = resolved
    param_types = {name: spec.type for name, spec in schema.parameters.items()}
    pending = session.pending_task
    if (
        pending is not None
        and pending.state == NEEDS_INPUT
        and pending.request is not None
        and pending.task == call.name
    ):
        # The paused task asked for this value; treat it as part of the
        # callable surface for this attempt.
        param_types.setdefault(pending.request.param, pending.request.type)

    corpus = session.actor_utterances(
        include_function_responses=config.ground_function_responses
    )

    pruned: list[GuardrailFinding] = []
    blocking: list[tuple[str, GuardrailFinding]] = []
    new_arguments: dict[str, Any] = {}
    for param, value in call.arguments.items():
        if param not in param_types:
            pruned.append(
                GuardrailFinding(
                    FINDING_PRUNED,
                    f"{param} is not in the {call.name} schema; removed",
                    parameter=param,
                )
            )
            continue
        declared = param_types[param]
        value = normalize_argument_value(value, declared)
        new_arguments[param] = value
        boolean = declared == "boolean" or isinstance(value, bool)
        if config.grounding_check and not boolean and not _value_grounded(value, corpus):
            blocking.append(
                (
                    ungrounded_reflection(param),
                    GuardrailFinding(
                        FINDING_UNGROUNDED,
                        f"{param}={value!r} does not appear in the user messages",
                        parameter=param,
                    ),
                )
            )
            continue
        if config.rules_check:
            violations = apply_static_rules(value, registry.param_rules(call.name, param))
            if violations:
                blocking.append(
                    (
                        rules_reflection(param, violations),
                        GuardrailFinding(
                            FINDING_RULES, "; ".join(violations), parameter=param
                        ),
                    )
                )

    if blocking:
        message = " ".join(text for text, _ in blocking)
        findings = [finding for _, finding in blocking] + pruned
        return Reflect(message=message, findings=findings)

    accepted_action = AgentAction(
        content=action.content,
        function_call=FunctionCall(name=call.name, arguments=new_arguments),
    )
    return Accepted(action=accepted_action, findings=pruned)


def run_with_guardrails(
    agent: AgentDefinition,
    registry: Registry,
    session: Session,
    backend: Backend,
    config: Optional[GuardrailConfig] = None,
    params: Optional[CompletionParams] = None,
    template: Optional[str] = None,
    instructions: Optional[str] = None,
    on_retry: Optional[Callable[[Reflect], None]] = None,
) -> Union[Accepted, TechnicalIssue]:
    """The guardrailed completion loop for one agent action.

    Makes at most 1 + max_retries model calls. Each failing attempt appends
    its reflection as a guardrails-role message (unless reflection is
    suppressed) and retries; provider errors propagate untouched.
    """
    config = config or GuardrailConfig()
    params = params or CompletionParams()
    usage = Usage()
    failures: list[list[GuardrailFinding]] = []
    for attempt in range(config.max_retries + 1):
        prompt = assemble_agent_prompt(
            agent, registry, session, template=template, instructions=instructions
        )
        result = backend.complete(CompletionRequest(system_prompt=prompt, params=params))
        usage.add(result.input_tokens, result.output_tokens, result.latency)
        outcome = parse_agent_response(result.text)
        verdict = validate(agent, registry, session, outcome, config)
        if isinstance(verdict, Accepted):
            verdict.attempt = attempt
            verdict.usage = usage
            return verdict
        verdict.attempt = attempt
        failures.append(verdict.findings)
        if config.reflect:
            session.append_message(Role.GUARDRAILS, verdict.message, source="guardrails")
        if on_retry is not None and attempt < config.max_retries:
            on_retry(verdict)
    return TechnicalIssue(findings=failures, attempt=config.max_retries, usage=usage)
