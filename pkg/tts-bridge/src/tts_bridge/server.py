"""HTTP service exposing the TTS wire protocol.

POST /v1/reference  JSON {style, seed, sample_rate}                -> WAV bytes
POST /v1/speak      multipart: reference (WAV), text, sample_rate  -> WAV bytes

Status contract: 400 malformed or unusable body, 404 unknown path, 422
empty style or text, 503 job queue full. Error bodies are JSON objects
with one "error" string.

Determinism contract: identical requests get byte-identical responses.
Seeded engines give that for free; for stochastic ones the first response
is cached and replayed. Cache keys hash the decoded request fields rather
than the raw body, because multipart boundaries differ per client call.

Synthesis is bounded by a job semaphore; requests past the bound get 503
so callers can back off and retry. Cache hits bypass the queue.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass
from email.parser import BytesParser
from email.policy import default as _EMAIL_POLICY
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .engines import SUPPORTED_SAMPLE_RATES, build_engine, encode_wav

REFERENCE_FLOOR_S = 2.0


@dataclass(frozen=True)
class BridgeConfig:
    host: str = "127.0.0.1"
    port: int = 8096
    engine: str = "procedural"
    reference_model: str = "parler-tts/parler-tts-mini-v1"
    cloning_model: str = "tts_models/multilingual/multi-dataset/xtts_v2"
    device: str = "cpu"
    max_concurrent: int = 2
    cache_entries: int = 256

    def __post_init__(self):
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        if self.cache_entries < 1:
            raise ValueError("cache_entries must be >= 1")


class _ResponseCache:
    """Thread-safe LRU of canonical request key -> WAV bytes."""

    def __init__(self, max_entries: int):
        self._max = max_entries
        self._lock = threading.Lock()
        self._entries: OrderedDict[bytes, bytes] = OrderedDict()

    def get(self, key: bytes) -> bytes | None:
        with self._lock:
            body = self._entries.get(key)
            if body is not None:
                self._entries.move_to_end(key)
            return body

    def put(self, key: bytes, body: bytes) -> None:
        with self._lock:
            self._entries[key] = body
            self._entries.move_to_end(key)
            while len(self._entries) > self._max:
                self._entries.popitem(last=False)


def _canonical_key(*parts) -> bytes:
    digest = hashlib.sha256()
    for part in parts:
        raw = part if isinstance(part, bytes) else str(part).encode("utf-8")
        digest.update(len(raw).to_bytes(8, "big"))
        digest.update(raw)
    return digest.digest()


def parse_multipart_form(content_type: str, body: bytes) -> dict[str, bytes]:
    message = BytesParser(policy=_EMAIL_POLICY).parsebytes(
        b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body
    )
    if not message.is_multipart():
        raise ValueError("body is not multipart")
    fields: dict[str, bytes] = {}
    for part in message.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name is not None:
            fields[str(name)] = part.get_payload(decode=True) or b""
    return fields


def _checked_rate(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"sample_rate must be an integer, got {value!r}")
    if value not in SUPPORTED_SAMPLE_RATES:
        raise ValueError(f"sample rate {value} outside supported set {SUPPORTED_SAMPLE_RATES}")
    return value


def _finish_audio(samples: np.ndarray, sample_rate: int, min_duration_s: float) -> bytes:
    floor = round(min_duration_s * sample_rate)
    if len(samples) < floor:  # models may come back short; pad, never fail
        samples = np.concatenate([samples, np.zeros(floor - len(samples))])
    peak = float(np.max(np.abs(samples))) if len(samples) else 0.0
    if peak > 1.0:
        samples = samples / peak
    return encode_wav(samples, sample_rate)


class BridgeHandler(BaseHTTPRequestHandler):
    """Bound to one engine, cache, and job semaphore via a subclass."""

    engine = None
    cache: _ResponseCache
    jobs: threading.Semaphore

    def log_message(self, fmt, *args):
        pass

    def _reply(self, status: int, payload: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _reply_error(self, status: int, reason: str) -> None:
        self._reply(status, json.dumps({"error": reason}).encode("utf-8"), "application/json")

    def _reply_cached_wav(self, key: bytes, synth) -> None:
        cached = self.cache.get(key)
        if cached is not None:
            return self._reply(200, cached, "audio/wav")
        if not self.jobs.acquire(blocking=False):
            return self._reply_error(503, "synthesis queue is full, retry shortly")
        try:
            body = synth()
        finally:
            self.jobs.release()
        self.cache.put(key, body)
        self._reply(200, body, "audio/wav")

    def do_GET(self):
        self._reply_error(404, f"no resource at {self.path}")

    def do_POST(self):
        try:
            body = self.rfile.read(int(self.headers.get("Content-Length", "0")))
            if self.path == "/v1/reference":
                self._handle_reference(body)
            elif self.path == "/v1/speak":
                self._handle_speak(body)
            else:
                self._reply_error(404, f"no resource at {self.path}")
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception as exc:  # a clean 500 beats a dropped socket
            try:
                self._reply_error(500, f"{type(exc).__name__}: {exc}")
            except OSError:
                pass

    def _handle_reference(self, body: bytes) -> None:
        try:
            payload = json.loads(body)
        except ValueError:
            return self._reply_error(400, "body is not valid JSON")
        if not isinstance(payload, dict):
            return self._reply_error(400, "body must be a JSON object")
        style = payload.get("style")
        seed = payload.get("seed")
        if not isinstance(style, str):
            return self._reply_error(400, "style must be a string")
        if isinstance(seed, bool) or not isinstance(seed, int):
            return self._reply_error(400, "seed must be an integer")
        try:
            rate = _checked_rate(payload.get("sample_rate"))
        except ValueError as exc:
            return self._reply_error(400, str(exc))
        if not style.strip():
            return self._reply_error(422, "style is empty")

        key = _canonical_key("reference", style, seed, rate)
        self._reply_cached_wav(
            key,
            lambda: _finish_audio(
                self.engine.make_reference(style, seed, rate), rate, REFERENCE_FLOOR_S
            ),
        )

    def _handle_speak(self, body: bytes) -> None:
        content_type = self.headers.get("Content-Type", "")
        if not content_type.startswith("multipart/form-data"):
            return self._reply_error(400, "expected a multipart/form-data body")
        try:
            fields = parse_multipart_form(content_type, body)
        except Exception:
            return self._reply_error(400, "unparseable multipart body")
        for required in ("reference", "text", "sample_rate"):
            if required not in fields:
                return self._reply_error(400, f"missing {required} field")
        try:
            rate = _checked_rate(int(fields["sample_rate"].decode("ascii")))
        except (ValueError, UnicodeDecodeError) as exc:
            return self._reply_error(400, str(exc))
        try:
            text = fields["text"].decode("utf-8")
        except UnicodeDecodeError:
            return self._reply_error(400, "text is not valid UTF-8")
        if not text.strip():
            return self._reply_error(422, "text is empty")
        reference = fields["reference"]

        key = _canonical_key("speak", reference, text, rate)

        def synth():
            return _finish_audio(self.engine.speak(reference, text, rate), rate, 0.0)

        try:
            self._reply_cached_wav(key, synth)
        except ValueError as exc:  # engine rejected the reference audio
            self._reply_error(400, f"reference is not usable: {exc}")


def serve(config: BridgeConfig, engine=None) -> ThreadingHTTPServer:
    """Build the server; the caller starts it (serve_forever or a thread).

    An explicit `engine` overrides the one named in config; tests use this
    to wrap or stub synthesis.
    """
    if engine is None:
        engine = build_engine(
            config.engine, config.reference_model, config.cloning_model, config.device
        )
    if hasattr(engine, "warm_up"):
        engine.warm_up()  # fail at startup, not on the first request
    handler = type(
        "BoundBridgeHandler",
        (BridgeHandler,),
        {
            "engine": engine,
            "cache": _ResponseCache(config.cache_entries),
            "jobs": threading.Semaphore(config.max_concurrent),
        },
    )
    return ThreadingHTTPServer((config.host, config.port), handler)


def run_in_thread(server: ThreadingHTTPServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread


def _env(name: str, fallback):
    return os.environ.get(f"TTS_BRIDGE_{name}", fallback)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="serve the TTS wire protocol",
        epilog="every flag also reads a TTS_BRIDGE_* environment variable",
    )
    parser.add_argument("--host", default=_env("HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(_env("PORT", 8096)))
    parser.add_argument(
        "--engine", choices=["procedural", "neural"], default=_env("ENGINE", "procedural")
    )
    parser.add_argument(
        "--reference-model",
        default=_env("REFERENCE_MODEL", BridgeConfig.reference_model),
        help="description-to-voice model id",
    )
    parser.add_argument(
        "--cloning-model",
        default=_env("CLONING_MODEL", BridgeConfig.cloning_model),
        help="voice-cloning model id",
    )
    parser.add_argument("--device", default=_env("DEVICE", "cpu"))
    parser.add_argument(
        "--max-concurrent", type=int, default=int(_env("MAX_CONCURRENT", 2))
    )
    args = parser.parse_args(argv)

    config = BridgeConfig(
        host=args.host,
        port=args.port,
        engine=args.engine,
        reference_model=args.reference_model,
        cloning_model=args.cloning_model,
        device=args.device,
        max_concurrent=args.max_concurrent,
    )
    server = serve(config)
    host, port = server.server_address
    print(f"tts-bridge ({args.engine}) on http://{host}:{port} (ctrl-c to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
