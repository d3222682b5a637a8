"""Completion backends, token accounting and the serving-cost model.

Two backends ship with the engine: a deterministic scripted backend that
replays canned responses (every test and desk-scale experiment runs on it)
and a remote HTTP backend speaking a small JSON protocol. Backends never
retry; retries belong to the guardrail layer.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Callable, Optional, Protocol, Union

import httpx

from .errors import ProviderError, RateLimited, Timeout


@dataclass
class CompletionParams:
    temperature: float = 0.0
    max_output_tokens: int = 1000
    stop_sequences: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass
class CompletionRequest:
    """One completion call: instruction text plus optional conversation text."""

    system_prompt: str
    messages: str = ""
    params: CompletionParams = field(default_factory=CompletionParams)

    def prompt_text(self) -> str:
        if self.messages:
            return f"{self.system_prompt}\n{self.messages}"
        return self.system_prompt


@dataclass
class CompletionResult:
    text: str
    input_tokens: int
    output_tokens: int
    latency: float  # seconds spent in the provider call only

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass
class PriceCard:
    """Per-model price: currency per 1000 input / output tokens."""

    model: str
    input_price: float
    output_price: float

    def __post_init__(self):
        if self.input_price < 0 or self.output_price < 0:
            raise ValueError("prices must be >= 0")


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResult: ...


def count_tokens(text: str, tokenizer: Optional[Callable[[str], int]] = None) -> int:
    """Token count for `text`.

    The default is the ceil(length / 4) characters-per-token approximation;
    pass a provider-exact tokenizer to override it.
    """
    if tokenizer is not None:
        return tokenizer(text)
    return math.ceil(len(text) / 4)


def estimate_cost(
    input_tokens: float,
    output_tokens: float,
    card: PriceCard,
    requests: float,
) -> float:
    """Serving cost for `requests` calls averaging the given token counts.

    cost = requests * input_tokens * input_price / 1000
         + requests * output_tokens * output_price / 1000
    Exact arithmetic; round only at display time via format_cost.
    """
    if input_tokens < 0 or output_tokens < 0 or requests < 0:
        raise ValueError("cost inputs must be >= 0")
    return (
        requests * input_tokens * card.input_price / 1000
        + requests * output_tokens * card.output_price / 1000
    )


def format_cost(amount: float) -> str:
    """Two decimals, half-up."""
    return str(Decimal(str(amount)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


DEFAULT_PRICE_CARDS: dict[str, PriceCard] = {
    "flagship": PriceCard(model="flagship", input_price=0.003, output_price=0.015),
    "compact": PriceCard(model="compact", input_price=0.00025, output_price=0.00125),
}


def load_price_cards(path: Union[str, Path]) -> dict[str, PriceCard]:
    raw = json.loads(Path(path).read_text())
    cards = {}
    for entry in raw:
        card = PriceCard(
            model=entry["model"],
            input_price=entry["input_price"],
            output_price=entry["output_price"],
        )
        cards[card.model] = card
    return cards


_FAIL_KINDS = {
    "timeout": Timeout,
    "rate_limited": RateLimited,
    "provider_error": ProviderError,
}


class ScriptedBackend:
    """Replays scripted entries in order; the deterministic test double.

    Entries are either response strings, {"respond": text} or
    {"fail": "timeout" | "rate_limited" | "provider_error"}. Every request
    is recorded for assertions. The cursor is serialized so concurrent use
    is well defined (FIFO by arrival).
    """

    def __init__(self, script: list, synthetic_delay: float = 0.0):
        self.script = [self._normalize(entry) for entry in script]
        self.synthetic_delay = synthetic_delay
        self.requests: list[CompletionRequest] = []
        self._cursor = 0
        self._lock = threading.Lock()

    @staticmethod
    def _normalize(entry: Any) -> dict:
        if isinstance(entry, str):
            return {"respond": entry}
        if isinstance(entry, dict) and ("respond" in entry or "fail" in entry):
            return entry
        raise ValueError(f"bad script entry: {entry!r}")

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.requests.append(request)
            if self._cursor >= len(self.script):
                raise ProviderError("script exhausted")
            entry = self.script[self._cursor]
            self._cursor += 1
        if "fail" in entry:
            kind = entry["fail"]
            if kind not in _FAIL_KINDS:
                raise ProviderError(f"scripted failure: {kind}")
            raise _FAIL_KINDS[kind](f"scripted {kind}")
        text = entry["respond"]
        return CompletionResult(
            text=text,
            input_tokens=count_tokens(request.prompt_text()),
            output_tokens=count_tokens(text),
            latency=self.synthetic_delay,
        )


def scripted_backend(script: list, synthetic_delay: float = 0.0) -> ScriptedBackend:
    return ScriptedBackend(script, synthetic_delay=synthetic_delay)


def scripted_backend_from_file(path: Union[str, Path]) -> ScriptedBackend:
    return ScriptedBackend(json.loads(Path(path).read_text()))


class RemoteBackend:
    """HTTP JSON completion client.

    POSTs {model, system, prompt, temperature, max_tokens, stop} to the
    configured endpoint and expects {text, input_tokens?, output_tokens?}.
    Missing token counts fall back to the local approximation. 429 maps to
    RateLimited, timeouts to Timeout, everything else non-2xx or transport
    level to ProviderError.
    """

    def __init__(
        self,
        url: str,
        model: str,
        api_key: Optional[str] = None,
        timeout: float = 30.0,
        client: Optional[httpx.Client] = None,
    ):
        self.url = url
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        payload = {
            "model": self.model,
            "system": request.system_prompt,
            "prompt": request.messages,
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_output_tokens,
            "stop": request.params.stop_sequences,
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        start = time.perf_counter()
        try:
            response = self._client.post(
                self.url, json=payload, headers=headers, timeout=self.timeout
            )
        except httpx.TimeoutException as exc:
            raise Timeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise ProviderError(str(exc)) from exc
        latency = time.perf_counter() - start
        if response.status_code == 429:
            raise RateLimited(f"rate limited by {self.url}")
        if response.status_code >= 400:
            raise ProviderError(f"HTTP {response.status_code} from {self.url}")
        try:
            data = response.json()
        except ValueError as exc:
            raise ProviderError(f"non-JSON response from {self.url}") from exc
        if "text" not in data:
            raise ProviderError("response is missing 'text'")
        text = data["text"]
        return CompletionResult(
            text=text,
            input_tokens=int(data.get("input_tokens", count_tokens(request.prompt_text()))),
            output_tokens=int(data.get("output_tokens", count_tokens(text))),
            latency=latency,
        )
