"""Replay-based evaluation harness.

Replays annotated conversations through the engine on scripted backends,
scores function calls deterministically and reply semantics with an LLM
judge, and aggregates accuracy, latency, token and cost figures into a
report. Ablation mode re-runs with individual guardrail checks disabled and
reports the deltas. A synthetic corpus generator provides ground-truth
datasets at desk scale.
"""

from __future__ import annotations

import csv
import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .config import build_actions, build_engine_config
from .engine import Engine, EngineConfig, TurnEvent
from .gateway import (
    Backend,
    CompletionRequest,
    DEFAULT_PRICE_CARDS,
    PriceCard,
    ScriptedBackend,
    estimate_cost,
    format_cost,
)
from .errors import EmptyLabels, LengthMismatch
from .guardrails import CHECK_NAMES, GuardrailConfig
from .prompts import AgentAction, FunctionCall, render_agent_action
from .registry import load_registry

logger = logging.getLogger(__name__)

JUDGE_PROMPT = (
    "You compare two assistant replies and decide whether they carry the same meaning.\n"
    "sentence1: {m1}\n"
    "sentence2: {m2}\n"
    "Answer with exactly one word on the final line: True or False."
)


def judge_semantic_match(m1: str, m2: str, backend: Backend) -> bool:
    """Single judge call; unparseable output counts as False with a warning."""
    prompt = JUDGE_PROMPT.format(m1=m1, m2=m2)
    result = backend.complete(CompletionRequest(system_prompt=prompt))
    lines = [line.strip() for line in result.text.strip().splitlines() if line.strip()]
    token = re.sub(r"[^A-Za-z]", "", lines[-1]).casefold() if lines else ""
    if token == "true":
        return True
    if token == "false":
        return False
    logger.warning("unparseable judge output %r; scoring as False", result.text)
    return False


def _normalize_value(value: Any) -> Any:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        lowered = value.strip().casefold()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        try:
            return float(lowered)
        except ValueError:
            return lowered
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, dict):
        return {k: _normalize_value(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_normalize_value(v) for v in value]
    return value


def match_function_call(
    expected: tuple[str, dict], generated: tuple[str, dict]
) -> bool:
    """Name equality plus parameter-map equality under normalization.

    Key order is irrelevant, numerals coerce across string/number, and
    string comparison is case-insensitive. Extra or missing parameters fail.
    """
    expected_name, expected_params = expected
    generated_name, generated_params = generated
    if expected_name != generated_name:
        return False
    return _normalize_value(dict(expected_params)) == _normalize_value(dict(generated_params))


def cohens_kappa(labels_a: list[bool], labels_b: list[bool]) -> float:
    """Chance-corrected agreement between two boolean label vectors.

    kappa = (p_o - p_e) / (1 - p_e). With degenerate marginals (p_e = 1) the
    value is 1 for perfect agreement and 0 otherwise.
    """
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(
            f"label vectors differ in length: {len(labels_a)} vs {len(labels_b)}"
        )
    if not labels_a:
        raise EmptyLabels("label vectors must be non-empty")
    n = len(labels_a)
    observed = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    pa = sum(labels_a) / n
    pb = sum(labels_b) / n
    expected = pa * pb + (1 - pa) * (1 - pb)
    if expected == 1.0:
        return 1.0 if observed == 1.0 else 0.0
    return (observed - expected) / (1 - expected)


# -- dataset ----------------------------------------------------------------


@dataclass
class ExpectedOutcome:
    function: Optional[tuple[str, dict]] = None
    reply: Optional[str] = None
    agent_switch: Optional[str] = None
    ood: bool = False

    def has_expectations(self) -> bool:
        return bool(self.function or self.reply or self.agent_switch or self.ood)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExpectedOutcome":
        function = None
        if raw.get("function"):
            function = (raw["function"]["name"], dict(raw["function"].get("arguments", {})))
        return cls(
            function=function,
            reply=raw.get("reply"),
            agent_switch=raw.get("agent_switch"),
            ood=raw.get("ood", False),
        )


@dataclass
class ConversationTurn:
    user_text: str
    expected: ExpectedOutcome


@dataclass
class TestConversation:
    id: str
    turns: list[ConversationTurn]
    agent_script: list = field(default_factory=list)
    classifier_script: list = field(default_factory=list)
    judge_script: list = field(default_factory=list)
    actions: dict[str, Any] = field(default_factory=dict)
    registry: Optional[dict] = None

    @classmethod
    def from_dict(cls, raw: dict) -> "TestConversation":
        turns = [
            ConversationTurn(
                user_text=t["stimulus"]["user"],
                expected=ExpectedOutcome.from_dict(t.get("expected", {})),
            )
            for t in raw["turns"]
        ]
        if not turns:
            raise ValueError(f"conversation {raw.get('id')!r} has no turns")
        return cls(
            id=raw["id"],
            turns=turns,
            agent_script=list(raw.get("agent_script", [])),
            classifier_script=list(raw.get("classifier_script", [])),
            judge_script=list(raw.get("judge_script", [])),
            actions=dict(raw.get("actions", {})),
            registry=raw.get("registry"),
        )


@dataclass
class Dataset:
    conversations: list[TestConversation]
    registry: Optional[dict] = None
    engine_config: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "Dataset":
        return cls(
            conversations=[TestConversation.from_dict(c) for c in raw["conversations"]],
            registry=raw.get("registry"),
            engine_config=dict(raw.get("engine_config", {})),
        )


def load_dataset(source: Union[dict, str, Path]) -> Dataset:
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text())
    return Dataset.from_dict(source)


# -- scoring -----------------------------------------------------------------


@dataclass
class TurnScore:
    call_match: Optional[bool]
    semantic_match: Optional[bool]
    valid: bool
    latency: float
    input_tokens: int
    output_tokens: int
    findings: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "call_match": self.call_match,
            "semantic_match": self.semantic_match,
            "valid": self.valid,
            "latency": self.latency,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "findings": self.findings,
        }


def _score_turn(
    expected: ExpectedOutcome,
    events: list[TurnEvent],
    judge_backend: Optional[Backend],
) -> TurnScore:
    tools = [e for e in events if e.kind == "ToolInvoked"]
    switches = [e for e in events if e.kind == "AgentSwitched"]
    retries = [e for e in events if e.kind == "GuardrailRetry"]
    terminal = events[-1] if events else None
    reply = (
        terminal.payload.get("content")
        if terminal is not None and terminal.kind in ("FinalReply", "TechnicalIssue")
        else None
    )

    call_match: Optional[bool] = None
    if expected.function is not None:
        generated = None
        if tools:
            generated = (tools[0].payload["name"], tools[0].payload["arguments"])
        call_match = generated is not None and match_function_call(
            expected.function, generated
        )
    if expected.agent_switch is not None:
        switched_to = switches[0].payload["to"] if switches else None
        matched = switched_to == expected.agent_switch
        call_match = matched if call_match is None else call_match and matched
    if expected.ood:
        rejected = (
            not tools
            and terminal is not None
            and terminal.kind == "FinalReply"
            and terminal.payload.get("intent") == "OOD"
        )
        call_match = rejected if call_match is None else call_match and rejected

    semantic_match: Optional[bool] = None
    if expected.reply is not None:
        if judge_backend is not None:
            semantic_match = judge_semantic_match(expected.reply, reply or "", judge_backend)
        else:
            logger.warning("no judge backend for reply expectation; using exact match")
            semantic_match = reply == expected.reply

    present = [m for m in (call_match, semantic_match) if m is not None]
    valid = bool(present) and all(present)
    latency = terminal.payload.get("latency_seconds", 0.0) if terminal else 0.0
    input_tokens = terminal.payload.get("input_tokens", 0) if terminal else 0
    output_tokens = terminal.payload.get("output_tokens", 0) if terminal else 0
    findings = [f for e in retries for f in e.payload.get("findings", [])]
    return TurnScore(
        call_match=call_match,
        semantic_match=semantic_match,
        valid=valid,
        latency=latency,
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        findings=findings,
    )


@dataclass
class Report:
    per_turn_accuracy: float
    per_conversation_accuracy: float
    scored_turns: int
    valid_turns: int
    scored_conversations: int
    valid_conversations: int
    mean_latency: float
    mean_input_tokens: float
    mean_output_tokens: float
    cost: Optional[dict] = None
    ablations: Optional[dict] = None
    per_turn: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "per_turn_accuracy": self.per_turn_accuracy,
            "per_conversation_accuracy": self.per_conversation_accuracy,
            "scored_turns": self.scored_turns,
            "valid_turns": self.valid_turns,
            "scored_conversations": self.scored_conversations,
            "valid_conversations": self.valid_conversations,
            "mean_latency": self.mean_latency,
            "mean_input_tokens": self.mean_input_tokens,
            "mean_output_tokens": self.mean_output_tokens,
            "cost": self.cost,
            "ablations": self.ablations,
            "per_turn": self.per_turn,
            "errors": self.errors,
        }
        return out

    def render_table(self) -> str:
        rows = [
            ("scored turns", str(self.scored_turns)),
            ("valid turns", str(self.valid_turns)),
            ("per-turn accuracy", f"{self.per_turn_accuracy:.4f}"),
            ("per-conversation accuracy", f"{self.per_conversation_accuracy:.4f}"),
            ("mean latency (s)", f"{self.mean_latency:.4f}"),
            ("mean input tokens", f"{self.mean_input_tokens:.1f}"),
            ("mean output tokens", f"{self.mean_output_tokens:.1f}"),
        ]
        if self.cost:
            rows.append(
                (
                    f"cost per {self.cost['requests']} requests ({self.cost['model']})",
                    f"${self.cost['amount']}",
                )
            )
        width = max(len(label) for label, _ in rows)
        lines = [f"{label.ljust(width)}  {value}" for label, value in rows]
        if self.ablations:
            lines.append("")
            lines.append("ablations (accuracy / delta vs all checks):")
            for name, data in self.ablations.items():
                lines.append(
                    f"  without {name.ljust(10)} {data['per_turn_accuracy']:.4f} "
                    f"(delta {data['delta']:+.4f})"
                )
        if self.errors:
            lines.append("")
            lines.append(f"conversations with errors: {len(self.errors)}")
        return "\n".join(lines)


def _constant_judge_needed(conversation: TestConversation) -> bool:
    return any(turn.expected.reply is not None for turn in conversation.turns)


def _replay_conversation(
    conversation: TestConversation,
    dataset: Dataset,
    engine_config: EngineConfig,
) -> tuple[list[TurnScore], Optional[dict]]:
    registry_docs = conversation.registry or dataset.registry
    if registry_docs is None:
        return [], {"conversation": conversation.id, "error": "no registry available"}
    try:
        registry = load_registry(registry_docs)
        actions = build_actions(conversation.actions)
        engine = Engine(
            registry=registry,
            agent_backend=ScriptedBackend(conversation.agent_script),
            classifier_backend=ScriptedBackend(conversation.classifier_script),
            actions=actions,
            config=engine_config,
        )
        judge_backend = (
            ScriptedBackend(conversation.judge_script)
            if conversation.judge_script
            else None
        )
        session = engine.create_session()
        scores = []
        for turn in conversation.turns:
            events = engine.handle_user_message(session.session_id, turn.user_text)
            if turn.expected.has_expectations():
                scores.append(_score_turn(turn.expected, events, judge_backend))
        return scores, None
    except Exception as exc:
        logger.warning("conversation %s failed to replay: %s", conversation.id, exc)
        return [], {"conversation": conversation.id, "error": str(exc)}


def _engine_config_for(dataset: Dataset, guardrails: GuardrailConfig, single_agent: bool) -> EngineConfig:
    base = build_engine_config(dataset.engine_config)
    base.guardrails = guardrails
    base.single_agent_mode = single_agent
    return base


def replay(
    dataset: Union[Dataset, dict, str, Path],
    guardrails: Optional[GuardrailConfig] = None,
    single_agent: bool = False,
    ablate: Optional[list[str]] = None,
    price_card: Optional[PriceCard] = None,
    requests: int = 5000,
    max_workers: int = 4,
) -> Report:
    """Replay every conversation and aggregate a report.

    Conversations replay in parallel up to `max_workers`; each gets a fresh
    engine over its own scripted backends, so ordering cannot leak between
    them. Dataset problems are reported per conversation, never fatal.
    """
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)
    guardrails = guardrails or GuardrailConfig()
    base_config = _engine_config_for(dataset, guardrails, single_agent)

    per_conversation: list[list[TurnScore]] = []
    errors: list[dict] = []
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(
            pool.map(
                lambda conv: _replay_conversation(conv, dataset, base_config),
                dataset.conversations,
            )
        )
    for scores, error in results:
        per_conversation.append(scores)
        if error:
            errors.append(error)

    all_scores = [score for scores in per_conversation for score in scores]
    scored_turns = len(all_scores)
    valid_turns = sum(1 for s in all_scores if s.valid)
    scored_conversations = sum(1 for scores in per_conversation if scores)
    valid_conversations = sum(
        1 for scores in per_conversation if scores and all(s.valid for s in scores)
    )
    per_turn_accuracy = valid_turns / scored_turns if scored_turns else 0.0
    per_conversation_accuracy = (
        valid_conversations / scored_conversations if scored_conversations else 0.0
    )
    mean_latency = (
        sum(s.latency for s in all_scores) / scored_turns if scored_turns else 0.0
    )
    mean_input = (
        sum(s.input_tokens for s in all_scores) / scored_turns if scored_turns else 0.0
    )
    mean_output = (
        sum(s.output_tokens for s in all_scores) / scored_turns if scored_turns else 0.0
    )

    card = price_card or DEFAULT_PRICE_CARDS["flagship"]
    cost_amount = estimate_cost(mean_input, mean_output, card, requests)
    cost = {
        "model": card.model,
        "requests": requests,
        "amount": format_cost(cost_amount),
        "mean_input_tokens": mean_input,
        "mean_output_tokens": mean_output,
    }

    ablations = None
    if ablate:
        names = list(CHECK_NAMES) if "all" in ablate else list(ablate)
        ablations = {}
        for check in names:
            ablated = replay(
                dataset,
                guardrails=guardrails.disabled(check),
                single_agent=single_agent,
                price_card=price_card,
                requests=requests,
                max_workers=max_workers,
            )
            ablations[check] = {
                "per_turn_accuracy": ablated.per_turn_accuracy,
                "delta": per_turn_accuracy - ablated.per_turn_accuracy,
            }

    return Report(
        per_turn_accuracy=per_turn_accuracy,
        per_conversation_accuracy=per_conversation_accuracy,
        scored_turns=scored_turns,
        valid_turns=valid_turns,
        scored_conversations=scored_conversations,
        valid_conversations=valid_conversations,
        mean_latency=mean_latency,
        mean_input_tokens=mean_input,
        mean_output_tokens=mean_output,
        cost=cost,
        ablations=ablations,
        per_turn=[s.to_dict() for s in all_scores],
        errors=errors,
    )


# -- synthetic corpus ---------------------------------------------------------

_CORPUS_REGISTRY = {
    "root": "order_desk",
    "agents": [
        {
            "name": "order_desk",
            "purpose": "Look up customer orders.",
            "steps": [
                "Identify which order the user is asking about.",
                "Call lookup_order with that order id.",
                "Summarize the result for the user.",
            ],
            "tools": ["lookup_order"],
            "sub_agents": [],
        }
    ],
    "functions": [
        {
            "name": "lookup_order",
            "kind": "deterministic_task",
            "description": "fetch an order by id",
            "parameters": {
                "order_id": {"type": "string", "description": "order identifier"}
            },
            "required": ["order_id"],
        }
    ],
    "rules": {},
    "tasks": [
        {
            "name": "lookup_order",
            "steps": [
                {"id": "fetch", "call": "orders.fetch", "input": {"order_id": "arg:order_id"}}
            ],
        }
    ],
}


def generate_synthetic_corpus(
    conversations: int = 20, invalid: int = 2, seed: int = 7
) -> dict:
    """Ground-truth dataset: `invalid` conversations call the wrong order id.

    Both ids appear in the user text, so the wrong call still grounds and
    passes guardrails; only call matching catches it. Expected accuracy is
    (conversations - invalid) / conversations.
    """
    if invalid > conversations:
        raise ValueError("invalid count cannot exceed the number of conversations")
    rng = random.Random(seed)
    wrong = set(rng.sample(range(conversations), invalid))
    records = []
    for index in range(conversations):
        order_id = str(1000 + index)
        decoy_id = str(5000 + index)
        called_id = decoy_id if index in wrong else order_id
        user_text = (
            f"Please look up order {order_id}; my older order {decoy_id} is unrelated."
        )
        reply = f"Order {order_id} has shipped and is on its way."
        call = AgentAction(
            content=f"Looking up order {called_id} now.",
            function_call=FunctionCall(name="lookup_order", arguments={"order_id": called_id}),
        )
        final = AgentAction(content=reply)
        records.append(
            {
                "id": f"conv-{index:03d}",
                "agent_script": [render_agent_action(call), render_agent_action(final)],
                "classifier_script": ["Action"],
                "judge_script": ["True"],
                "actions": {
                    "orders.fetch": {"result": {"order_id": called_id, "status": "shipped"}}
                },
                "turns": [
                    {
                        "stimulus": {"user": user_text},
                        "expected": {
                            "function": {
                                "name": "lookup_order",
                                "arguments": {"order_id": order_id},
                            },
                            "reply": reply,
                        },
                    }
                ],
            }
        )
    return {"registry": _CORPUS_REGISTRY, "conversations": records}


# -- audit ---------------------------------------------------------------------

_TRUE_TOKENS = {"true", "t", "1", "yes", "y"}
_FALSE_TOKENS = {"false", "f", "0", "no", "n"}


def read_label_csv(path: Union[str, Path]) -> list[bool]:
    """Boolean labels from a CSV; last column per row, header rows skipped."""
    labels: list[bool] = []
    with open(path, newline="") as handle:
        for row in csv.reader(handle):
            if not row:
                continue
            token = row[-1].strip().casefold()
            if token in _TRUE_TOKENS:
                labels.append(True)
            elif token in _FALSE_TOKENS:
                labels.append(False)
            # anything else is a header or junk row
    return labels


def audit_kappa(human_path: Union[str, Path], judge_path: Union[str, Path]) -> dict:
    """Agreement between human audit labels and judge labels."""
    human = read_label_csv(human_path)
    judge = read_label_csv(judge_path)
    kappa = cohens_kappa(human, judge)
    agreement = sum(1 for a, b in zip(human, judge) if a == b) / len(human)
    return {"kappa": kappa, "agreement": agreement, "n": len(human)}
