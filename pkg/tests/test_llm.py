"""LLM backends: HTTP wire format, mock determinism, validated generation."""

import json
import random
import socket
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from convoforge.errors import BackendError, TransportError
from convoforge.llm import (
    API_KEY_ENV_VAR,
    MALFORM_MISSING_BEGIN,
    MALFORM_MISSING_END,
    MALFORM_UNBRACKETED_LINE,
    MALFORM_UNKNOWN_SPEAKER,
    MALFORMATION_KINDS,
    FailureRecord,
    HttpChatBackend,
    LlmBackendConfig,
    MockLlmBackend,
    RawResponse,
    benchmark,
    generate_raw,
    generate_validated,
)
from convoforge.parsing import (
    MALFORMED_TURN_LINE,
    MISSING_BEGIN_MARKER,
    MISSING_END_MARKER,
    UNKNOWN_SPEAKER,
    ConversationScript,
    parse,
    validate_format,
)
from convoforge.personas import sample_participants
from convoforge.prompting import PromptText, build_prompt


def _prompt(registry, seed=0):
    roster = sample_participants(registry, random.Random(seed))
    return build_prompt(roster)


# --- HTTP backend ------------------------------------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
        except ValueError:
            body = raw
        self.server.captured.append(
            {"path": self.path, "headers": dict(self.headers), "body": body}
        )
        status, payload = self.server.responder()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *_args):
        pass


@pytest.fixture
def stub():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    server.captured = []
    ok = json.dumps({"choices": [{"message": {"content": "stub reply"}}]}).encode()
    server.responder = lambda: (200, ok)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()


def _endpoint(server):
    return f"http://127.0.0.1:{server.server_address[1]}"


def test_http_request_shape(stub, registry, monkeypatch):
    monkeypatch.delenv(API_KEY_ENV_VAR, raising=False)
    prompt = _prompt(registry)
    config = LlmBackendConfig(endpoint=_endpoint(stub) + "/", model="test-model", temperature=0.4)
    response = HttpChatBackend(config).complete(prompt)
    assert response.text == "stub reply"
    assert response.latency_s >= 0.0
    (request,) = stub.captured
    assert request["path"] == "/v1/chat/completions"
    assert request["body"] == {
        "model": "test-model",
        "messages": [{"role": "user", "content": prompt.text}],
        "temperature": 0.4,
    }
    assert "Authorization" not in request["headers"]


def test_api_key_read_from_environment(stub, registry, monkeypatch):
    monkeypatch.setenv(API_KEY_ENV_VAR, "sk-local-test")
    config = LlmBackendConfig(endpoint=_endpoint(stub), model="m")
    HttpChatBackend(config).complete(_prompt(registry))
    assert stub.captured[0]["headers"]["Authorization"] == "Bearer sk-local-test"


def test_http_error_status_raises_backend_error(stub, registry):
    stub.responder = lambda: (503, b'{"error": "busy"}')
    config = LlmBackendConfig(endpoint=_endpoint(stub), model="m")
    with pytest.raises(BackendError, match="503"):
        HttpChatBackend(config).complete(_prompt(registry))


def test_unparseable_body_raises_backend_error(stub, registry):
    stub.responder = lambda: (200, b"{not json")
    config = LlmBackendConfig(endpoint=_endpoint(stub), model="m")
    with pytest.raises(BackendError):
        HttpChatBackend(config).complete(_prompt(registry))


def test_missing_choices_raises_backend_error(stub, registry):
    stub.responder = lambda: (200, json.dumps({"choices": []}).encode())
    config = LlmBackendConfig(endpoint=_endpoint(stub), model="m")
    with pytest.raises(BackendError):
        HttpChatBackend(config).complete(_prompt(registry))


def test_non_string_content_raises_backend_error(stub, registry):
    stub.responder = lambda: (
        200,
        json.dumps({"choices": [{"message": {"content": 42}}]}).encode(),
    )
    config = LlmBackendConfig(endpoint=_endpoint(stub), model="m")
    with pytest.raises(BackendError, match="not text"):
        HttpChatBackend(config).complete(_prompt(registry))


def test_connection_refused_raises_transport_error(registry):
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    config = LlmBackendConfig(endpoint=f"http://127.0.0.1:{port}", model="m", timeout_s=5.0)
    with pytest.raises(TransportError):
        HttpChatBackend(config).complete(_prompt(registry))


def test_config_invariants():
    with pytest.raises(ValueError):
        LlmBackendConfig(endpoint="e", model="m", timeout_s=0)
    with pytest.raises(ValueError):
        LlmBackendConfig(endpoint="e", model="m", max_retries=-1)
    with pytest.raises(ValueError):
        LlmBackendConfig(endpoint="e", model="m", temperature=-0.1)
    with pytest.raises(ValueError):
        RawResponse(text="x", latency_s=-1.0)


# --- mock backend ------------------------------------------------------------


def test_mock_is_deterministic_across_instances(registry):
    prompt = _prompt(registry)
    first = MockLlmBackend(seed=3, malform_rate=0.4).complete(prompt, attempt=1)
    second = MockLlmBackend(seed=3, malform_rate=0.4).complete(prompt, attempt=1)
    assert first.text == second.text


def test_mock_varies_with_seed_prompt_and_attempt(registry):
    prompt = _prompt(registry)
    base = MockLlmBackend(seed=0).complete(prompt, attempt=0).text
    assert MockLlmBackend(seed=1).complete(prompt, attempt=0).text != base
    assert MockLlmBackend(seed=0).complete(prompt, attempt=1).text != base
    other = _prompt(registry, seed=99)
    assert other.text != prompt.text
    assert MockLlmBackend(seed=0).complete(other, attempt=0).text != base


def test_mock_clean_output_always_validates(registry):
    backend = MockLlmBackend(seed=0, malform_rate=0.0)
    for s in range(30):
        prompt = _prompt(registry, seed=s)
        raw = backend.complete(prompt)
        assert validate_format(raw.text, prompt.roster).valid, raw.text
        script = parse(raw.text, prompt.roster, str(s))
        assert 6 <= len(script.turns) <= 16
        assert all(turn.speaker in prompt.roster for turn in script.turns)


def test_planned_malformation_matches_actual_output(registry):
    backend = MockLlmBackend(seed=7, malform_rate=0.5)
    seen = set()
    for s in range(120):
        prompt = _prompt(registry, seed=s)
        planned = backend.planned_malformation(prompt)
        result = validate_format(backend.complete(prompt).text, prompt.roster)
        assert result.valid == (planned is None)
        if planned is not None:
            seen.add(planned)
    assert seen == set(MALFORMATION_KINDS)


_EXPECTED_CODE = {
    MALFORM_MISSING_BEGIN: MISSING_BEGIN_MARKER,
    MALFORM_MISSING_END: MISSING_END_MARKER,
    MALFORM_UNKNOWN_SPEAKER: UNKNOWN_SPEAKER,
    MALFORM_UNBRACKETED_LINE: MALFORMED_TURN_LINE,
}


def test_each_malformation_kind_maps_to_one_code(registry):
    backend = MockLlmBackend(seed=5, malform_rate=1.0)
    found = {}
    for s in range(120):
        prompt = _prompt(registry, seed=s)
        kind = backend.planned_malformation(prompt)
        if kind in found:
            continue
        result = validate_format(backend.complete(prompt).text, prompt.roster)
        assert [e.code for e in result.errors] == [_EXPECTED_CODE[kind]]
        found[kind] = True
    assert set(found) == set(MALFORMATION_KINDS)


def test_intruder_name_avoids_roster():
    prompt = PromptText(text="collision probe", roster=("Intruder", "Ben"))
    backend = MockLlmBackend(seed=0, malform_rate=1.0)
    for attempt in range(80):
        if backend.planned_malformation(prompt, attempt) == MALFORM_UNKNOWN_SPEAKER:
            raw = backend.complete(prompt, attempt)
            assert "[IntruderX]" in raw.text
            return
    raise AssertionError("unknown-speaker case never drawn")


def test_mock_rejects_bad_parameters():
    with pytest.raises(ValueError):
        MockLlmBackend(malform_rate=1.5)
    with pytest.raises(ValueError):
        MockLlmBackend(latency_s=-0.1)


# --- generate_validated ------------------------------------------------------


class _ScriptedBackend:
    """Replays a fixed list of responses; an exception instance is raised."""

    def __init__(self, outputs):
        self.outputs = list(outputs)
        self.calls = 0

    def complete(self, prompt, attempt=0):
        item = self.outputs[self.calls]
        self.calls += 1
        if isinstance(item, Exception):
            raise item
        return RawResponse(text=item, latency_s=0.0)


def test_generate_validated_returns_script(registry):
    prompt = _prompt(registry)
    out = generate_validated(prompt, prompt.roster, MockLlmBackend(seed=0), conv_id="7")
    assert isinstance(out, ConversationScript)
    assert out.id == "7"
    assert out.roster == prompt.roster


def test_generate_validated_collects_failed_attempts(registry):
    prompt = _prompt(registry)
    bad = "no markers at all\n"
    backend = _ScriptedBackend([bad, bad, bad])
    out = generate_validated(prompt, prompt.roster, backend, max_retries=2)
    assert isinstance(out, FailureRecord)
    assert len(out.attempts) == 3
    assert backend.calls == 3
    assert all(a.text == bad for a in out.attempts)
    assert all(a.issues for a in out.attempts)
    summary = out.error_summary()
    assert "attempt 0" in summary and "attempt 2" in summary


def test_generate_validated_retry_can_succeed(registry):
    backend = MockLlmBackend(seed=11, malform_rate=0.5)
    for s in range(200):
        prompt = _prompt(registry, seed=s)
        if backend.planned_malformation(prompt, 0) and not backend.planned_malformation(prompt, 1):
            out = generate_validated(prompt, prompt.roster, backend, max_retries=1)
            assert isinstance(out, ConversationScript)
            return
    raise AssertionError("no fail-then-succeed case found")


def test_generate_validated_raises_when_all_attempts_transport_fail(registry):
    prompt = _prompt(registry)
    backend = _ScriptedBackend([TransportError("down"), TransportError("down")])
    with pytest.raises(TransportError):
        generate_validated(prompt, prompt.roster, backend, max_retries=1)


def test_generate_validated_mixed_failures_stay_a_record(registry):
    prompt = _prompt(registry)
    backend = _ScriptedBackend([TransportError("down"), "still not valid\n"])
    out = generate_validated(prompt, prompt.roster, backend, max_retries=1)
    assert isinstance(out, FailureRecord)
    assert out.attempts[0].transport_error is not None
    assert out.attempts[1].issues
    assert "transport" in out.error_summary()


# --- benchmark ---------------------------------------------------------------


def test_benchmark_counts_and_times(registry):
    backend = MockLlmBackend(seed=4, malform_rate=0.3, latency_s=0.01)
    report = benchmark(backend, registry, n=40, seed=5)
    assert report.n_requests == 40
    assert len(report.per_request_times_s) == 40
    assert report.total_time_s == pytest.approx(0.01 * 40)
    recomputed = sum(
        1 for a in report.attempts if not validate_format(a.raw_text, a.roster).valid
    )
    assert report.wrong_format_count == recomputed
    assert 0 < report.wrong_format_count < 40


def test_benchmark_is_deterministic(registry):
    kwargs = dict(registry=registry, n=10, seed=3)
    a = benchmark(MockLlmBackend(seed=4, malform_rate=0.3), **kwargs)
    b = benchmark(MockLlmBackend(seed=4, malform_rate=0.3), **kwargs)
    assert [x.raw_text for x in a.attempts] == [x.raw_text for x in b.attempts]
    assert a.wrong_format_count == b.wrong_format_count


def test_benchmark_report_dict(registry):
    report = benchmark(MockLlmBackend(seed=0, latency_s=0.5), registry, n=4)
    data = report.to_dict()
    assert data["n_requests"] == 4
    assert data["total_time_s"] == pytest.approx(2.0)
    assert data["mean_time_s"] == pytest.approx(0.5)
    assert data["wrong_format_count"] == 0
    assert len(data["per_request_times_s"]) == 4


def test_benchmark_aborts_on_transport_error(registry):
    inner = MockLlmBackend(seed=0)

    class _FlakyBackend:
        def __init__(self):
            self.calls = 0

        def complete(self, prompt, attempt=0):
            self.calls += 1
            if self.calls == 3:
                raise TransportError("link lost")
            return inner.complete(prompt, attempt)

    backend = _FlakyBackend()
    with pytest.raises(TransportError):
        benchmark(backend, registry, n=10)
    assert backend.calls == 3


def test_benchmark_rejects_zero_requests(registry):
    with pytest.raises(ValueError):
        benchmark(MockLlmBackend(), registry, n=0)


def test_generate_raw_passes_through(registry):
    prompt = _prompt(registry)
    backend = MockLlmBackend(seed=2, latency_s=0.25)
    raw = generate_raw(prompt, backend)
    assert raw.latency_s == 0.25
    assert raw.text == backend.complete(prompt, attempt=0).text
