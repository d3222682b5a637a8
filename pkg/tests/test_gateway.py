"""Backends, token counting and the cost model."""

import copy
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, strategies as st

from taskchat.errors import ProviderError, RateLimited, Timeout
from taskchat.gateway import (
    CompletionParams,
    CompletionRequest,
    PriceCard,
    RemoteBackend,
    ScriptedBackend,
    count_tokens,
    estimate_cost,
    format_cost,
    scripted_backend,
)

FLAGSHIP = PriceCard(model="flagship", input_price=0.003, output_price=0.015)


def request(text="prompt"):
    return CompletionRequest(system_prompt=text)


class TestScriptedBackend:
    def test_replays_in_order(self):
        backend = scripted_backend(["hello", "world"], synthetic_delay=0.25)
        result = backend.complete(request())
        assert result.text == "hello"
        assert result.latency == 0.25
        assert backend.complete(request()).text == "world"

    def test_exhausted_script(self):
        backend = scripted_backend(["only"])
        backend.complete(request())
        with pytest.raises(ProviderError, match="script exhausted"):
            backend.complete(request())

    def test_scripted_failures(self):
        backend = scripted_backend([{"fail": "timeout"}, {"fail": "rate_limited"}])
        with pytest.raises(Timeout):
            backend.complete(request())
        with pytest.raises(RateLimited):
            backend.complete(request())

    def test_records_every_request(self):
        backend = scripted_backend(["a", "b", "c"])
        for index in range(3):
            backend.complete(request(f"prompt {index}"))
        assert len(backend.requests) == 3
        assert backend.requests[1].system_prompt == "prompt 1"

    def test_deterministic_across_identical_runs(self):
        script = ["alpha", {"respond": "beta"}]
        first = [scripted_backend(script).complete(request(t)).text for t in ("x", "y")]
        second = [scripted_backend(script).complete(request(t)).text for t in ("x", "y")]
        assert first == second

    def test_complete_never_mutates_request(self):
        backend = scripted_backend(["out"])
        req = CompletionRequest(system_prompt="sys", messages="msgs")
        snapshot = copy.deepcopy(req)
        backend.complete(req)
        assert req == snapshot

    def test_rejects_bad_entries(self):
        with pytest.raises(ValueError):
            scripted_backend([42])


class TestCountTokens:
    def test_empty(self):
        assert count_tokens("") == 0

    def test_char_per_four_rule(self):
        assert count_tokens("a" * 400) == 100

    def test_rounds_up(self):
        assert count_tokens("abcde") == 2

    def test_pluggable_tokenizer(self):
        assert count_tokens("a b c", tokenizer=lambda t: len(t.split())) == 3

    @given(st.text(max_size=200), st.text(max_size=200))
    def test_monotone_in_length(self, a, b):
        assert count_tokens(a + b) >= count_tokens(a)


class TestCostModel:
    def test_reference_arithmetic(self):
        cost = estimate_cost(3946, 148, FLAGSHIP, 5000)
        assert cost == pytest.approx(70.29, abs=0.01)
        assert format_cost(cost) == "70.29"

    def test_zero_tokens_cost_nothing(self):
        assert estimate_cost(0, 0, FLAGSHIP, 5000) == 0

    def test_linear_in_requests(self):
        single = estimate_cost(100, 10, FLAGSHIP, 1000)
        double = estimate_cost(100, 10, FLAGSHIP, 2000)
        assert double == pytest.approx(2 * single)

    @given(
        st.integers(0, 10_000),
        st.integers(0, 10_000),
        st.integers(0, 10_000),
        st.integers(1, 4),
    )
    def test_linearity_property(self, x, y, requests, k):
        base = estimate_cost(x, y, FLAGSHIP, requests)
        assert estimate_cost(k * x, y, FLAGSHIP, requests) == pytest.approx(
            base + (k - 1) * estimate_cost(x, 0, FLAGSHIP, requests)
        )

    def test_rejects_negative_inputs(self):
        with pytest.raises(ValueError):
            estimate_cost(-1, 0, FLAGSHIP, 1)

    def test_format_cost_half_up(self):
        assert format_cost(1.005) == "1.01"
        assert format_cost(1.004) == "1.00"


class TestParams:
    def test_temperature_range(self):
        with pytest.raises(ValueError):
            CompletionParams(temperature=1.5)

    def test_max_tokens_positive(self):
        with pytest.raises(ValueError):
            CompletionParams(max_output_tokens=0)

    def test_defaults(self):
        params = CompletionParams()
        assert params.temperature == 0.0
        assert params.max_output_tokens == 1000


class _StubHandler(BaseHTTPRequestHandler):
    """Scriptable HTTP endpoint; behavior comes from the path."""

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        if self.path == "/throttled":
            self.send_response(429)
            self.end_headers()
            return
        if self.path == "/broken":
            self.send_response(500)
            self.end_headers()
            return
        if self.path == "/slow":
            time.sleep(0.6)
        payload = {
            "text": f"echo:{body.get('prompt', '')}",
            "input_tokens": 11,
            "output_tokens": 7,
        }
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestRemoteBackend:
    def test_happy_path(self, stub_server):
        backend = RemoteBackend(url=f"{stub_server}/ok", model="m")
        result = backend.complete(
            CompletionRequest(system_prompt="sys", messages="hello")
        )
        assert result.text == "echo:hello"
        assert (result.input_tokens, result.output_tokens) == (11, 7)
        assert result.latency > 0

    def test_429_maps_to_rate_limited(self, stub_server):
        backend = RemoteBackend(url=f"{stub_server}/throttled", model="m")
        with pytest.raises(RateLimited):
            backend.complete(request())

    def test_500_maps_to_provider_error(self, stub_server):
        backend = RemoteBackend(url=f"{stub_server}/broken", model="m")
        with pytest.raises(ProviderError):
            backend.complete(request())

    def test_timeout(self, stub_server):
        backend = RemoteBackend(url=f"{stub_server}/slow", model="m", timeout=0.2)
        with pytest.raises(Timeout):
            backend.complete(request())

    def test_transport_error(self):
        backend = RemoteBackend(url="http://127.0.0.1:1/none", model="m", timeout=0.5)
        with pytest.raises(ProviderError):
            backend.complete(request())
