"""Language-model gateway: transport, validation-driven retry, benchmarking.

Two backends speak the same small interface. The HTTP backend talks
chat-completions JSON to any compatible server; the mock backend is a
deterministic template engine whose randomness is keyed on (backend seed,
prompt text, attempt index) rather than call order, so a pipeline's output
cannot depend on worker scheduling. The mock can inject the four classic
malformations, which is what lets the format validator and the failure
accounting be exercised offline.
"""

import os
import time
from dataclasses import dataclass, field
from typing import Protocol

import requests

from .errors import BackendError, TransportError
from .parsing import (
    CONV_BEGIN,
    CONV_END,
    ConversationScript,
    FormatIssue,
    ValidationResult,
    parse,
    validate_format,
)
from .personas import PersonaRegistry, sample_participants
from .prompting import PromptText, build_prompt
from .seeding import derive_seed, stable_hash64

import random

API_KEY_ENV_VAR = "CONVOFORGE_API_KEY"


@dataclass(frozen=True)
class LlmBackendConfig:
    endpoint: str
    model: str
    timeout_s: float = 120.0
    max_retries: int = 0
    temperature: float = 0.7

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class RawResponse:
    text: str
    latency_s: float

    def __post_init__(self):
        if self.latency_s < 0:
            raise ValueError("latency_s must be >= 0")


class LlmBackend(Protocol):
    def complete(self, prompt: PromptText, attempt: int = 0) -> RawResponse: ...


class HttpChatBackend:
    """Chat-completions JSON over HTTP; one user message per request.

    The API key, if any, comes from the environment only. Safe for
    concurrent use: each call builds its own request.
    """

    def __init__(self, config: LlmBackendConfig):
        self.config = config

    def complete(self, prompt: PromptText, attempt: int = 0) -> RawResponse:
        url = self.config.endpoint.rstrip("/") + "/v1/chat/completions"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV_VAR)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self.config.temperature,
        }
        start = time.perf_counter()
        try:
            response = requests.post(url, json=body, headers=headers, timeout=self.config.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc
        latency = time.perf_counter() - start
        if response.status_code != 200:
            raise BackendError(f"HTTP {response.status_code} from {url}: {response.text[:500]}")
        try:
            text = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected response shape from {url}: {exc}") from exc
        if not isinstance(text, str):
            raise BackendError(f"completion content is not text: {type(text).__name__}")
        return RawResponse(text=text, latency_s=latency)


# The four malformation modes the mock can inject.
MALFORM_MISSING_BEGIN = "missing_begin"
MALFORM_MISSING_END = "missing_end"
MALFORM_UNKNOWN_SPEAKER = "unknown_speaker"
MALFORM_UNBRACKETED_LINE = "unbracketed_line"
MALFORMATION_KINDS = (
    MALFORM_MISSING_BEGIN,
    MALFORM_MISSING_END,
    MALFORM_UNKNOWN_SPEAKER,
    MALFORM_UNBRACKETED_LINE,
)

_CANNED_LINES = (
    "Did you hear about the new place downtown?",
    "I think we should plan a trip soon.",
    "That reminds me of something funny.",
    "Honestly, I never expected that outcome.",
    "You always have the best stories.",
    "Let me tell you what happened yesterday.",
    "I read an interesting article this morning.",
    "We should do this more often.",
    "That makes a lot of sense to me.",
    "I'm not so sure about that.",
    "What do you all think about it?",
    "Time really flies these days.",
)

_STAGE_DIRECTIONS = ("(laughs) ", "(nods) ", r"\(smiling\) ", "*sighs* ")

_PREAMBLES = (
    "Here is the conversation:",
    "Sure! Below is a story in the requested format.",
)


class MockLlmBackend:
    """Deterministic offline stand-in for a conversation-generating model.

    Every draw is derived from (seed, prompt text, attempt), so identical
    requests replay identically no matter how calls interleave across
    workers, and a retry of the same prompt sees a fresh draw.
    """

    def __init__(self, seed: int = 0, malform_rate: float = 0.0, latency_s: float = 0.0):
        if not 0.0 <= malform_rate <= 1.0:
            raise ValueError("malform_rate must be in [0, 1]")
        if latency_s < 0:
            raise ValueError("latency_s must be >= 0")
        self.seed = seed
        self.malform_rate = malform_rate
        self.latency_s = latency_s

    def _rng(self, prompt: PromptText, attempt: int) -> random.Random:
        return random.Random(stable_hash64(self.seed, prompt.text, attempt))

    def planned_malformation(self, prompt: PromptText, attempt: int = 0) -> str | None:
        """Which malformation (if any) complete() will inject for this call."""
        rng = self._rng(prompt, attempt)
        if rng.random() < self.malform_rate:
            return rng.choice(MALFORMATION_KINDS)
        return None

    def _intruder_name(self, roster: tuple[str, ...]) -> str:
        name = "Intruder"
        while name in roster:
            name += "X"
        return name

    def complete(self, prompt: PromptText, attempt: int = 0) -> RawResponse:
        rng = self._rng(prompt, attempt)
        malformation = None
        if rng.random() < self.malform_rate:
            malformation = rng.choice(MALFORMATION_KINDS)

        roster = prompt.roster
        n_turns = rng.randint(6, 16)
        start = rng.randrange(len(roster))
        lines = []
        for i in range(n_turns):
            # Round-robin-ish: mostly rotate through the roster, with
            # occasional jumps to an arbitrary speaker.
            if rng.random() < 0.2:
                speaker = rng.choice(roster)
            else:
                speaker = roster[(start + i) % len(roster)]
            text = rng.choice(_CANNED_LINES)
            if rng.random() < 0.25:
                text = rng.choice(_STAGE_DIRECTIONS) + text
            lines.append(f"[{speaker}] {text}")

        if malformation == MALFORM_UNKNOWN_SPEAKER:
            idx = rng.randrange(len(lines))
            _, rest = lines[idx].split("] ", 1)
            lines[idx] = f"[{self._intruder_name(roster)}] {rest}"
        elif malformation == MALFORM_UNBRACKETED_LINE:
            idx = rng.randrange(len(lines))
            name, rest = lines[idx][1:].split("] ", 1)
            lines[idx] = f"{name}: {rest}"

        parts = []
        if rng.random() < 0.3:
            parts.append(rng.choice(_PREAMBLES))
        if malformation != MALFORM_MISSING_BEGIN:
            parts.append(CONV_BEGIN)
        parts.append("")
        parts.extend(lines)
        parts.append("")
        if malformation != MALFORM_MISSING_END:
            parts.append(CONV_END)
        return RawResponse(text="\n".join(parts) + "\n", latency_s=self.latency_s)


def generate_raw(prompt: PromptText, backend: LlmBackend) -> RawResponse:
    """One completion for one prompt, with its wall-clock latency."""
    return backend.complete(prompt, attempt=0)


@dataclass(frozen=True)
class FailedAttempt:
    text: str | None
    issues: tuple[FormatIssue, ...]
    transport_error: str | None = None


@dataclass(frozen=True)
class FailureRecord:
    """All attempts for a conversation that never validated."""

    attempts: tuple[FailedAttempt, ...]

    def error_summary(self) -> str:
        parts = []
        for i, attempt in enumerate(self.attempts):
            if attempt.transport_error is not None:
                parts.append(f"attempt {i}: transport: {attempt.transport_error}")
            else:
                codes = ",".join(f"{it.code}@{it.line}" for it in attempt.issues)
                parts.append(f"attempt {i}: {codes}")
        return "; ".join(parts)


def generate_validated(
    prompt: PromptText,
    roster: list[str] | tuple[str, ...],
    backend: LlmBackend,
    max_retries: int = 0,
    conv_id: str = "0",
) -> ConversationScript | FailureRecord:
    """Generate until the format validator accepts, or give the failure up.

    The same prompt is re-sent verbatim on retry. A FailureRecord keeps every
    raw attempt and its validation errors so failures stay auditable; the
    conversation is simply dropped from the dataset. TransportError only
    propagates when every attempt transport-failed.
    """
    attempts: list[FailedAttempt] = []
    transport_failures = 0
    last_transport: TransportError | None = None
    for attempt_index in range(max_retries + 1):
        try:
            response = backend.complete(prompt, attempt=attempt_index)
        except TransportError as exc:
            transport_failures += 1
            last_transport = exc
            attempts.append(FailedAttempt(text=None, issues=(), transport_error=str(exc)))
            continue
        result = validate_format(response.text, roster)
        if result.valid:
            return parse(response.text, roster, conv_id)
        attempts.append(FailedAttempt(text=response.text, issues=result.errors))
    if transport_failures == len(attempts) and last_transport is not None:
        raise last_transport
    return FailureRecord(tuple(attempts))


@dataclass(frozen=True)
class BenchmarkAttempt:
    raw_text: str
    roster: tuple[str, ...]
    latency_s: float


@dataclass
class BenchmarkReport:
    n_requests: int
    total_time_s: float
    per_request_times_s: list[float]
    wrong_format_count: int
    attempts: list[BenchmarkAttempt] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_requests": self.n_requests,
            "total_time_s": round(self.total_time_s, 6),
            "mean_time_s": round(self.total_time_s / self.n_requests, 6),
            "wrong_format_count": self.wrong_format_count,
            "per_request_times_s": [round(t, 6) for t in self.per_request_times_s],
        }


def benchmark(
    backend: LlmBackend,
    registry: PersonaRegistry,
    n: int,
    seed: int = 0,
) -> BenchmarkReport:
    """Single-attempt generation over n fresh rosters: times and format errors.

    Runs sequentially so the total time means something. Raw attempts are
    kept on the report so the wrong-format count can be re-derived from them.
    """
    if n < 1:
        raise ValueError("benchmark needs n >= 1")
    times: list[float] = []
    attempts: list[BenchmarkAttempt] = []
    wrong = 0
    for i in range(n):
        rng = random.Random(derive_seed(seed, "bench", i))
        roster = sample_participants(registry, rng)
        prompt = build_prompt(roster)
        response = generate_raw(prompt, backend)  # TransportError aborts the run
        times.append(response.latency_s)
        attempts.append(BenchmarkAttempt(response.text, prompt.roster, response.latency_s))
        if not validate_format(response.text, prompt.roster).valid:
            wrong += 1
    return BenchmarkReport(
        n_requests=n,
        total_time_s=sum(times),
        per_request_times_s=times,
        wrong_format_count=wrong,
        attempts=attempts,
    )
